//! Timed benchmark sweeps producing one [`BenchRecord`] per (mode, parameter).
//!
//! Baseline modes (full and partial scans) run on the original vectors.
//! Adaptive modes run on rotated vectors, and the rotation of each query is
//! part of the timed work.

use std::io::Write;
use std::time::Instant;

use adsann_core::eval::distances_to;
use adsann_core::{
    avg_distance_ratio, brute_force_knn, recall, Dataset, DcoConfig, GroundTruth, HnswGraph, HnswMode, IvfIndex,
    IvfMode, KnnResult, Layout, TheoryRow, TransformMatrix,
};

use crate::error::Result;

/// Base and query sets in both coordinate systems, with ground truth.
pub struct Workload {
    pub raw_base: Dataset,
    pub raw_queries: Dataset,
    pub matrix: TransformMatrix,
    /// `raw_base` rotated by `matrix`.
    pub base: Dataset,
    pub gt: GroundTruth,
    /// Exact distances of the ground-truth ids, per query.
    gt_dists: Vec<Vec<f64>>,
}

impl Workload {
    /// Rotates the base set with a matrix drawn from `seed` and computes
    /// ground truth by brute force when none is given.
    pub fn new(raw_base: Dataset, raw_queries: Dataset, gt: Option<GroundTruth>, k: usize, seed: u64) -> Result<Self> {
        let matrix = TransformMatrix::generate(raw_base.d(), seed)?;
        Self::with_matrix(raw_base, raw_queries, gt, k, matrix)
    }

    pub fn with_matrix(
        raw_base: Dataset,
        raw_queries: Dataset,
        gt: Option<GroundTruth>,
        k: usize,
        matrix: TransformMatrix,
    ) -> Result<Self> {
        let gt = match gt {
            Some(gt) => gt,
            None => brute_force_knn(&raw_base, &raw_queries, k)?,
        };
        if gt.n_queries() != raw_queries.n() || gt.k() < k {
            return Err(adsann_core::Error::InvalidArgument(
                "ground truth does not cover the queries at this K".into(),
            )
            .into());
        }
        gt.check_ids(raw_base.n())?;
        let base = matrix.apply_dataset(&raw_base)?;
        let gt_dists = raw_queries
            .rows()
            .zip(gt.rows())
            .map(|(q, ids)| distances_to(&raw_base, q, &ids[..k]))
            .collect();
        Ok(Self {
            raw_base,
            raw_queries,
            matrix,
            base,
            gt,
            gt_dists,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.raw_queries.n()
    }

    pub fn k(&self) -> usize {
        self.gt_dists.first().map_or(0, Vec::len)
    }
}

/// One benchmark row.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub algo: String,
    /// The swept parameter: n_probe, N_ef or epsilon0.
    pub param: f64,
    /// Median over the repetitions.
    pub qps: f64,
    pub recall: f64,
    /// NaN when every query was excluded from the ratio.
    pub avg_ratio: f64,
    /// Queries left out of `avg_ratio` (zero ground-truth distance).
    pub ratio_flagged: usize,
    /// Mean coordinates read per query.
    pub avg_dims: f64,
    /// `avg_dims` relative to the full-scan mode at the same parameter.
    pub dims_pct: f64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str = "algo,param,qps,recall,avg_ratio,avg_dims,dims_pct";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.1},{:.6},{:.6},{:.2},{:.3}",
            self.algo, self.param, self.qps, self.recall, self.avg_ratio, self.avg_dims, self.dims_pct
        )
    }
}

pub fn write_csv(records: &[BenchRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", BenchRecord::CSV_HEADER)?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()
}

pub fn theory_csv(rows: &[TheoryRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epsilon0,failure_rate,avg_dims,positives,failures")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.4},{},{}",
            r.epsilon0, r.failure_rate, r.avg_dims, r.positives, r.failures
        )?;
    }
    out.flush()
}

#[derive(Clone, Copy, Debug)]
pub struct SweepConfig {
    pub k: usize,
    /// Timed passes over the query set; at least 3.
    pub reps: usize,
    pub dco: DcoConfig,
}

impl SweepConfig {
    pub fn new(k: usize, reps: usize, dco: DcoConfig) -> Result<Self> {
        if k == 0 || reps < 3 {
            return Err(adsann_core::Error::InvalidArgument("need K >= 1 and at least 3 repetitions".into()).into());
        }
        Ok(Self { k, reps, dco })
    }
}

struct Measured {
    qps: f64,
    results: Vec<KnnResult>,
}

/// One timed pass over the query set.
fn timed_pass(nq: usize, mut query: impl FnMut(usize) -> Result<KnnResult>) -> Result<(f64, Vec<KnnResult>)> {
    let mut results = Vec::with_capacity(nq);
    let start = Instant::now();
    for qi in 0..nq {
        results.push(query(qi)?);
    }
    let secs = start.elapsed().as_secs_f64().max(1e-9);
    Ok((nq as f64 / secs, results))
}

/// Times every mode `reps` times, round-robin so that slow drift of the
/// machine affects all modes alike, and keeps the median rate of each.
/// Results come from the last round.
fn measure_modes<M: Copy>(
    modes: &[M],
    reps: usize,
    mut pass: impl FnMut(M) -> Result<(f64, Vec<KnnResult>)>,
) -> Result<Vec<Measured>> {
    let mut rates = vec![Vec::with_capacity(reps); modes.len()];
    let mut last = vec![Vec::new(); modes.len()];
    for _ in 0..reps {
        for (i, &mode) in modes.iter().enumerate() {
            let (rate, results) = pass(mode)?;
            rates[i].push(rate);
            last[i] = results;
        }
    }
    Ok(rates
        .into_iter()
        .zip(last)
        .map(|(mut r, results)| {
            r.sort_by(f64::total_cmp);
            Measured {
                qps: r[r.len() / 2],
                results,
            }
        })
        .collect())
}

fn score(w: &Workload, algo: &str, param: f64, m: Measured, full_dims: f64) -> BenchRecord {
    let k = w.k();
    let nq = w.n_queries();
    let mut rec = 0.0;
    let mut ratio_sum = 0.0;
    let mut ratio_n = 0usize;
    let mut dims = 0u64;
    for (qi, res) in m.results.iter().enumerate() {
        rec += recall(&res.ids, w.gt.row(qi), k);
        dims += res.stats.dims;
        let q = w.raw_queries.row(qi);
        let mut found = distances_to(&w.raw_base, q, &res.ids[..res.ids.len().min(k)]);
        found.sort_by(f64::total_cmp);
        if let Some(r) = avg_distance_ratio(&found, &w.gt_dists[qi], k) {
            ratio_sum += r;
            ratio_n += 1;
        }
    }
    let avg_dims = dims as f64 / nq as f64;
    BenchRecord {
        algo: algo.to_string(),
        param,
        qps: m.qps,
        recall: rec / nq as f64,
        avg_ratio: if ratio_n > 0 {
            ratio_sum / ratio_n as f64
        } else {
            f64::NAN
        },
        ratio_flagged: nq - ratio_n,
        avg_dims,
        dims_pct: if full_dims > 0.0 {
            100.0 * avg_dims / full_dims
        } else {
            f64::NAN
        },
    }
}

fn mean_dims(results: &[KnnResult]) -> f64 {
    results.iter().map(|r| r.stats.dims as f64).sum::<f64>() / results.len().max(1) as f64
}

/// An IVF index over rotated vectors and its twin over the originals.
/// Both share buckets; the twin's centroids are rotated back.
pub struct IvfPair {
    pub rotated: IvfIndex,
    pub raw: IvfIndex,
}

impl IvfPair {
    pub fn build(w: &Workload, k_clusters: usize, seed: u64, layout: Layout) -> Result<Self> {
        let rotated = IvfIndex::build(&w.base, k_clusters, seed, layout)?;
        Self::from_rotated(w, rotated)
    }

    pub fn from_rotated(w: &Workload, rotated: IvfIndex) -> Result<Self> {
        let mut centroids = Vec::with_capacity(rotated.centroids().len());
        for c in 0..rotated.k_clusters() {
            centroids.extend(w.matrix.apply_transpose(rotated.centroid(c))?);
        }
        let raw = rotated.rebase(&w.raw_base, centroids)?;
        Ok(Self { rotated, raw })
    }
}

pub fn run_ivf_sweep(
    w: &Workload,
    pair: &IvfPair,
    modes: &[IvfMode],
    n_probes: &[usize],
    cfg: &SweepConfig,
) -> Result<Vec<BenchRecord>> {
    let k = cfg.k;
    let nq = w.n_queries();
    let mut rot = pair.rotated.searcher(&cfg.dco);
    let mut raw = pair.raw.searcher(&cfg.dco);
    let mut buf = vec![0f32; w.base.d()];
    let mut out = Vec::new();
    for &np in n_probes {
        let (_, full) = timed_pass(nq, |qi| Ok(raw.search(w.raw_queries.row(qi), k, np, IvfMode::Fd)?))?;
        let full_dims = mean_dims(&full);
        let measured = measure_modes(modes, cfg.reps, |mode| {
            if mode.is_adaptive() {
                timed_pass(nq, |qi| {
                    w.matrix.apply_into(w.raw_queries.row(qi), &mut buf)?;
                    Ok(rot.search(&buf, k, np, mode)?)
                })
            } else {
                timed_pass(nq, |qi| Ok(raw.search(w.raw_queries.row(qi), k, np, mode)?))
            }
        })?;
        for (&mode, m) in modes.iter().zip(measured) {
            out.push(score(w, mode.label(), np as f64, m, full_dims));
        }
    }
    Ok(out)
}

pub fn run_hnsw_sweep(
    w: &Workload,
    graph: &HnswGraph,
    modes: &[HnswMode],
    n_efs: &[usize],
    cfg: &SweepConfig,
) -> Result<Vec<BenchRecord>> {
    let k = cfg.k;
    let nq = w.n_queries();
    let mut rot = graph.searcher(&w.base, &cfg.dco)?;
    let mut raw = graph.searcher(&w.raw_base, &cfg.dco)?;
    let mut buf = vec![0f32; w.base.d()];
    let mut out = Vec::new();
    for &nef in n_efs {
        let (_, full) = timed_pass(nq, |qi| {
            Ok(raw.search(w.raw_queries.row(qi), k, nef, HnswMode::Plain)?)
        })?;
        let full_dims = mean_dims(&full);
        let measured = measure_modes(modes, cfg.reps, |mode| {
            if mode.is_adaptive() {
                timed_pass(nq, |qi| {
                    w.matrix.apply_into(w.raw_queries.row(qi), &mut buf)?;
                    Ok(rot.search(&buf, k, nef, mode)?)
                })
            } else {
                timed_pass(nq, |qi| Ok(raw.search(w.raw_queries.row(qi), k, nef, mode)?))
            }
        })?;
        for (&mode, m) in modes.iter().zip(measured) {
            out.push(score(w, mode.label(), nef as f64, m, full_dims));
        }
    }
    Ok(out)
}

/// Linear scan over every vector: one full-scan row, then one adaptive row
/// per `epsilon0` (with the configured batch size).
pub fn run_linear_sweep(w: &Workload, epsilons: &[f64], cfg: &SweepConfig) -> Result<Vec<BenchRecord>> {
    let k = cfg.k;
    let nq = w.n_queries();
    let single = |ds: &Dataset| -> Result<IvfIndex> {
        let d = ds.d();
        let mut mean = vec![0f64; d];
        for row in ds.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        let centroid = mean.iter().map(|&m| (m / ds.n() as f64) as f32).collect();
        Ok(IvfIndex::from_parts(
            ds,
            centroid,
            &vec![0; ds.n()],
            0,
            Layout::Contiguous,
        )?)
    };
    let raw_idx = single(&w.raw_base)?;
    let rot_idx = single(&w.base)?;
    let mut raw = raw_idx.searcher(&cfg.dco);
    let mut searchers = epsilons
        .iter()
        .map(|&eps| Ok(rot_idx.searcher(&DcoConfig::new(eps, cfg.dco.delta_d())?)))
        .collect::<Result<Vec<_>>>()?;
    let mut buf = vec![0f32; w.base.d()];
    // Slot 0 is the full scan, slot i + 1 the i-th epsilon.
    let slots: Vec<usize> = (0..=epsilons.len()).collect();
    let mut measured = measure_modes(&slots, cfg.reps, |slot| {
        if slot == 0 {
            timed_pass(nq, |qi| Ok(raw.search(w.raw_queries.row(qi), k, 1, IvfMode::Fd)?))
        } else {
            let s = &mut searchers[slot - 1];
            timed_pass(nq, |qi| {
                w.matrix.apply_into(w.raw_queries.row(qi), &mut buf)?;
                Ok(s.search(&buf, k, 1, IvfMode::Ad)?)
            })
        }
    })?
    .into_iter();
    let full = measured.next().expect("full-scan slot");
    let full_dims = mean_dims(&full.results);
    let mut out = vec![score(w, "linear", 0.0, full, full_dims)];
    for (&eps, m) in epsilons.iter().zip(measured) {
        out.push(score(w, "linear+", eps, m, full_dims));
    }
    Ok(out)
}
