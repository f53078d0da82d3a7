//! `.fvecs` / `.ivecs` files and dataset descriptors.
//!
//! Both formats are a sequence of records `[d: i32 LE][d values, 4 bytes LE]`
//! (IEEE-754 floats for fvecs, signed ints for ivecs). All records of a
//! file share the same `d`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use adsann_core::{Dataset, GroundTruth};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{format_err, io_err, Error, Result};

/// Raw records of a vecs file: `(d, values as 4-byte words)`.
fn read_records(path: &Path) -> Result<(usize, Vec<u32>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    decode_records(&bytes).map_err(|msg| format_err(path, msg))
}

fn decode_records(bytes: &[u8]) -> std::result::Result<(usize, Vec<u32>), String> {
    if bytes.is_empty() {
        return Err("file holds no records".into());
    }
    let mut cur = bytes;
    let mut dim: Option<usize> = None;
    let mut words = Vec::with_capacity(bytes.len() / 4);
    let mut record = 0usize;
    while !cur.is_empty() {
        if cur.len() < 4 {
            return Err(format!("record {record}: truncated header"));
        }
        let d = cur.read_i32::<LittleEndian>().expect("length checked");
        if d <= 0 {
            return Err(format!("record {record}: non-positive dimension {d}"));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(format!("record {record}: dimension {d} differs from {prev}"));
            }
            _ => {}
        }
        if cur.len() < 4 * d {
            return Err(format!("record {record}: truncated body"));
        }
        for _ in 0..d {
            words.push(cur.read_u32::<LittleEndian>().expect("length checked"));
        }
        record += 1;
    }
    Ok((dim.expect("at least one record"), words))
}

fn write_records(path: &Path, d: usize, words: impl Iterator<Item = u32>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut words = words.peekable();
    let header = i32::try_from(d).map_err(|_| format_err(path, "dimension exceeds i32"))?;
    while words.peek().is_some() {
        w.write_i32::<LittleEndian>(header).map_err(io_err(path))?;
        for _ in 0..d {
            let v = words.next().ok_or_else(|| format_err(path, "ragged data"))?;
            w.write_u32::<LittleEndian>(v).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (d, words) = read_records(path)?;
    let data = words.into_iter().map(f32::from_bits).collect();
    Dataset::new(d, data).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_fvecs(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_records(path.as_ref(), ds.d(), ds.as_slice().iter().map(|v| v.to_bits()))
}

/// Writes a raw row-major float table (e.g. centroids or layout arrays).
pub fn write_fvecs_rows(rows: &[f32], d: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if d == 0 || rows.is_empty() || !rows.len().is_multiple_of(d) {
        return Err(format_err(path, "refusing to write an empty or ragged table"));
    }
    write_records(path, d, rows.iter().map(|v| v.to_bits()))
}

/// Reads an ivecs file as `(d, row-major values)`.
pub fn read_ivecs(path: impl AsRef<Path>) -> Result<(usize, Vec<i32>)> {
    let (d, words) = read_records(path.as_ref())?;
    Ok((d, words.into_iter().map(|w| w as i32).collect()))
}

pub fn write_ivecs(d: usize, rows: &[i32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if d == 0 || rows.is_empty() || !rows.len().is_multiple_of(d) {
        return Err(format_err(path, "refusing to write an empty or ragged table"));
    }
    write_records(path, d, rows.iter().map(|&v| v as u32))
}

/// Writes variable-length ivecs records (each with its own length prefix).
pub fn write_ivecs_ragged<'a>(rows: impl IntoIterator<Item = &'a [i32]>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        w.write_i32::<LittleEndian>(row.len() as i32).map_err(io_err(path))?;
        for &v in row {
            w.write_i32::<LittleEndian>(v).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads variable-length ivecs records. Zero-length records are allowed.
pub fn read_ivecs_ragged(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let mut cur = bytes.as_slice();
    let mut out = Vec::new();
    while !cur.is_empty() {
        let len = cur
            .read_i32::<LittleEndian>()
            .map_err(|_| format_err(path, "truncated header"))?;
        if len < 0 || cur.len() < 4 * len as usize {
            return Err(format_err(path, "bad record length"));
        }
        let row = (0..len)
            .map(|_| cur.read_i32::<LittleEndian>().expect("length checked"))
            .collect();
        out.push(row);
    }
    Ok(out)
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let (d, rows) = read_ivecs(path)?;
    if rows.iter().any(|&v| v < 0) {
        return Err(format_err(path, "negative id"));
    }
    GroundTruth::new(d, rows.into_iter().map(|v| v as u32).collect()).map_err(Error::from)
}

pub fn write_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<i32> = gt.as_slice().iter().map(|&v| v as i32).collect();
    write_ivecs(gt.k(), &rows, path)
}

/// `key=value` text file naming a dataset's files.
///
/// ```text
/// name=gist
/// base_path=gist_base.fvecs
/// query_path=gist_query.fvecs
/// gt_path=gist_groundtruth.ivecs
/// d=960
/// ```
///
/// Relative paths resolve against the descriptor's directory. Blank lines
/// and lines starting with `#` are ignored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetDescriptor {
    pub name: String,
    pub base_path: PathBuf,
    pub query_path: PathBuf,
    pub gt_path: Option<PathBuf>,
    pub d: usize,
}

impl DatasetDescriptor {
    pub fn parse(text: &str, root: &Path, origin: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(origin, format!("line {}: expected key=value", lineno + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| format_err(origin, format!("missing key `{k}`")))
        };
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                root.join(p)
            }
        };
        let d = get("d")?
            .parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| format_err(origin, "`d` must be a positive integer"))?;
        Ok(Self {
            name: get("name")?,
            base_path: resolve(get("base_path")?),
            query_path: resolve(get("query_path")?),
            gt_path: kv.get("gt_path").cloned().map(resolve),
            d,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let root = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, root, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "name={}\nbase_path={}\nquery_path={}\n",
            self.name,
            self.base_path.display(),
            self.query_path.display()
        );
        if let Some(gt) = &self.gt_path {
            s.push_str(&format!("gt_path={}\n", gt.display()));
        }
        s.push_str(&format!("d={}\n", self.d));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_single_record() {
        let bytes = [2, 0, 0, 0, 0, 0, 0x80, 0x3f, 0, 0, 0, 0x40];
        let (d, words) = decode_records(&bytes).unwrap();
        assert_eq!(d, 2);
        let vals: Vec<f32> = words.into_iter().map(f32::from_bits).collect();
        assert_eq!(vals, vec![1.0, 2.0]);
    }

    #[test]
    fn decode_errors() {
        assert!(decode_records(&[]).is_err());
        assert!(decode_records(&[1, 0, 0]).is_err());
        assert!(decode_records(&[0, 0, 0, 0]).is_err());
        assert!(decode_records(&[0xff, 0xff, 0xff, 0xff]).is_err());
        assert!(decode_records(&[2, 0, 0, 0, 1, 0, 0, 0]).is_err());
        let mixed = [1, 0, 0, 0, 7, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0];
        assert!(decode_records(&mixed).unwrap_err().contains("differs"));
    }

    #[test]
    fn descriptor_parse() {
        let text = "# gist\nname=gist\nbase_path=b.fvecs\nquery_path=/abs/q.fvecs\n\nd=960\n";
        let desc = DatasetDescriptor::parse(text, Path::new("/data"), Path::new("x.txt")).unwrap();
        assert_eq!(desc.base_path, PathBuf::from("/data/b.fvecs"));
        assert_eq!(desc.query_path, PathBuf::from("/abs/q.fvecs"));
        assert_eq!(desc.gt_path, None);
        assert_eq!(desc.d, 960);
        let again = DatasetDescriptor::parse(&desc.to_text(), Path::new("/"), Path::new("x")).unwrap();
        assert_eq!(again, desc);
        assert!(DatasetDescriptor::parse("name=x\n", Path::new("."), Path::new("x")).is_err());
        assert!(DatasetDescriptor::parse("garbage", Path::new("."), Path::new("x")).is_err());
    }
}
