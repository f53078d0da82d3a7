//! On-disk forms of the transform, IVF and HNSW structures.
//!
//! Every structure lives in a directory of fvecs/ivecs files plus a
//! `meta.txt` of `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use adsann_core::{Dataset, HnswGraph, HnswParams, IvfIndex, Layout, TransformMatrix};

use crate::error::{format_err, io_err, Result};
use crate::vecio::{read_fvecs, read_ivecs_ragged, write_fvecs_rows, write_ivecs_ragged};

const META: &str = "meta.txt";

fn write_meta(dir: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let text: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let path = dir.join(META);
    fs::write(&path, text).map_err(io_err(&path))
}

struct Meta {
    path: std::path::PathBuf,
    kv: BTreeMap<String, String>,
}

impl Meta {
    fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(META);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut kv = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(&path, format!("bad line `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { path, kv })
    }

    fn str(&self, key: &str) -> Result<&str> {
        self.kv
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| format_err(&self.path, format!("missing key `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.str(key)?
            .parse()
            .map_err(|_| format_err(&self.path, format!("key `{key}` is not a number")))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        match self.str("kind")? {
            k if k == kind => Ok(()),
            k => Err(format_err(&self.path, format!("expected a {kind}, found a {k}"))),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Stores the matrix as `matrix.fvecs` (one row per record). Entries are
/// rounded to 32 bits; the exact matrix is recovered from the seed.
pub fn save_transform(m: &TransformMatrix, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let rows: Vec<f32> = m.entries().iter().map(|&v| v as f32).collect();
    write_fvecs_rows(&rows, m.dim(), dir.join("matrix.fvecs"))?;
    write_meta(
        dir,
        &[
            ("kind", "transform".into()),
            ("dim", m.dim().to_string()),
            ("seed", m.seed().to_string()),
        ],
    )
}

/// Loads a saved transform. The matrix is regenerated from its seed and
/// checked against the stored rows.
pub fn load_transform(dir: impl AsRef<Path>) -> Result<TransformMatrix> {
    let dir = dir.as_ref();
    let meta = Meta::read(dir)?;
    meta.expect_kind("transform")?;
    let dim: usize = meta.num("dim")?;
    let seed: u64 = meta.num("seed")?;
    let path = dir.join("matrix.fvecs");
    let stored = read_fvecs(&path)?;
    if stored.d() != dim || stored.n() != dim {
        return Err(format_err(&path, "matrix shape disagrees with meta.txt"));
    }
    let m = TransformMatrix::generate(dim, seed)?;
    let agrees = m.entries().iter().zip(stored.as_slice()).all(|(&e, &s)| e as f32 == s);
    if agrees {
        Ok(m)
    } else {
        // Not one of ours: take the stored rows as they are.
        let entries = stored.as_slice().iter().map(|&v| v as f64).collect();
        Ok(TransformMatrix::from_entries(dim, entries, seed)?)
    }
}

/// Writes `centroids.fvecs`, `buckets.ivecs` (one record of ids per
/// cluster), `vectors.fvecs` (rows in bucket order), and for the split
/// layout `a1.fvecs` / `a2.fvecs`.
pub fn save_ivf(idx: &IvfIndex, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let dim = idx.dim();
    write_fvecs_rows(idx.centroids(), dim, dir.join("centroids.fvecs"))?;
    let buckets: Vec<Vec<i32>> = (0..idx.k_clusters())
        .map(|c| idx.bucket(c).iter().map(|&v| v as i32).collect())
        .collect();
    write_ivecs_ragged(buckets.iter().map(Vec::as_slice), dir.join("buckets.ivecs"))?;
    let rows: Vec<f32> = (0..idx.len()).flat_map(|p| idx.stored_row(p).iter().copied()).collect();
    write_fvecs_rows(&rows, dim, dir.join("vectors.fvecs"))?;
    let layout = match idx.split_arrays() {
        Some((d1, a1, a2)) => {
            write_fvecs_rows(a1, d1, dir.join("a1.fvecs"))?;
            write_fvecs_rows(a2, dim - d1, dir.join("a2.fvecs"))?;
            format!("split:{d1}")
        }
        None => "contiguous".to_string(),
    };
    write_meta(
        dir,
        &[
            ("kind", "ivf".into()),
            ("dim", dim.to_string()),
            ("n", idx.len().to_string()),
            ("k_clusters", idx.k_clusters().to_string()),
            ("seed", idx.seed().to_string()),
            ("layout", layout),
        ],
    )
}

pub fn load_ivf(dir: impl AsRef<Path>) -> Result<IvfIndex> {
    let dir = dir.as_ref();
    let meta = Meta::read(dir)?;
    meta.expect_kind("ivf")?;
    let dim: usize = meta.num("dim")?;
    let n: usize = meta.num("n")?;
    let k: usize = meta.num("k_clusters")?;
    let seed: u64 = meta.num("seed")?;
    let layout = match meta.str("layout")? {
        "contiguous" => Layout::Contiguous,
        s => match s.strip_prefix("split:").and_then(|v| v.parse().ok()) {
            Some(d1) => Layout::Split { d1 },
            None => return Err(format_err(&meta.path, format!("unknown layout `{s}`"))),
        },
    };

    let cpath = dir.join("centroids.fvecs");
    let centroids = read_fvecs(&cpath)?;
    if centroids.d() != dim || centroids.n() != k {
        return Err(format_err(&cpath, "centroid table disagrees with meta.txt"));
    }
    let bpath = dir.join("buckets.ivecs");
    let buckets = read_ivecs_ragged(&bpath)?;
    if buckets.len() != k {
        return Err(format_err(&bpath, "bucket count disagrees with meta.txt"));
    }
    let vpath = dir.join("vectors.fvecs");
    let stored = read_fvecs(&vpath)?;
    if stored.d() != dim || stored.n() != n {
        return Err(format_err(&vpath, "vector table disagrees with meta.txt"));
    }

    // Undo the bucket ordering to recover rows by id.
    let mut assignments = vec![u32::MAX; n];
    let mut by_id = vec![0f32; n * dim];
    let mut pos = 0;
    for (c, ids) in buckets.iter().enumerate() {
        for &id in ids {
            let id = usize::try_from(id)
                .ok()
                .filter(|&i| i < n && assignments[i] == u32::MAX)
                .ok_or_else(|| format_err(&bpath, "ids are not a permutation of 0..n"))?;
            assignments[id] = c as u32;
            by_id[id * dim..(id + 1) * dim].copy_from_slice(stored.row(pos));
            pos += 1;
        }
    }
    if pos != n {
        return Err(format_err(&bpath, "ids are not a permutation of 0..n"));
    }
    let ds = Dataset::new(dim, by_id)?;
    let idx = IvfIndex::from_parts(&ds, centroids.into_vec(), &assignments, seed, layout)?;

    if let Some((d1, a1, a2)) = idx.split_arrays() {
        for (name, want, width) in [("a1.fvecs", a1, d1), ("a2.fvecs", a2, dim - d1)] {
            let path = dir.join(name);
            let got = read_fvecs(&path)?;
            if got.d() != width || got.as_slice() != want {
                return Err(format_err(&path, "split array disagrees with vectors.fvecs"));
            }
        }
    }
    Ok(idx)
}

/// Writes `layer_<l>.ivecs` for every layer: one record per vertex on that
/// layer, holding the vertex id followed by its neighbors.
pub fn save_hnsw(g: &HnswGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    for l in 0..=g.max_layer() {
        let records: Vec<Vec<i32>> = g
            .layer_vertices(l)
            .map(|v| {
                std::iter::once(v as i32)
                    .chain(g.neighbors(v, l).iter().map(|&u| u as i32))
                    .collect()
            })
            .collect();
        write_ivecs_ragged(records.iter().map(Vec::as_slice), dir.join(format!("layer_{l}.ivecs")))?;
    }
    let p = g.params();
    write_meta(
        dir,
        &[
            ("kind", "hnsw".into()),
            ("n", g.len().to_string()),
            ("layers", (g.max_layer() + 1).to_string()),
            ("entry", g.entry_point().to_string()),
            ("m", p.m.to_string()),
            ("ef_construction", p.ef_construction.to_string()),
            ("seed", p.seed.to_string()),
        ],
    )
}

pub fn load_hnsw(dir: impl AsRef<Path>) -> Result<HnswGraph> {
    let dir = dir.as_ref();
    let meta = Meta::read(dir)?;
    meta.expect_kind("hnsw")?;
    let n: usize = meta.num("n")?;
    let layers: usize = meta.num("layers")?;
    let params = HnswParams {
        m: meta.num("m")?,
        ef_construction: meta.num("ef_construction")?,
        seed: meta.num("seed")?,
    };
    let mut links: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n];
    for l in 0..layers {
        let path = dir.join(format!("layer_{l}.ivecs"));
        for rec in read_ivecs_ragged(&path)? {
            let (&v, nbrs) = rec
                .split_first()
                .ok_or_else(|| format_err(&path, "empty adjacency record"))?;
            let v = usize::try_from(v)
                .ok()
                .filter(|&v| v < n && links[v].len() == l)
                .ok_or_else(|| format_err(&path, format!("vertex {v} out of place")))?;
            let nbrs = nbrs
                .iter()
                .map(|&u| u32::try_from(u).map_err(|_| format_err(&path, "negative neighbor id")))
                .collect::<Result<Vec<u32>>>()?;
            links[v].push(nbrs);
        }
    }
    Ok(HnswGraph::from_parts(params, links, meta.num("entry")?)?)
}
