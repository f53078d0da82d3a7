use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use adsann::bench::{self, IvfPair, SweepConfig, Workload};
use adsann::persist;
use adsann::vecio::{self, DatasetDescriptor};
use adsann_core::{
    brute_force_knn, recall, verify_theory, Dataset, DcoConfig, GroundTruth, HnswGraph, HnswMode, HnswParams, IvfIndex,
    IvfMode, Layout, SynthSpec, DEFAULT_DELTA_D, DEFAULT_EPSILON0,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "adsann",
    version,
    about = "Adaptive distance comparisons for IVF and HNSW search"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a clustered synthetic dataset with queries.
    Synth(SynthArgs),
    /// Rotate a dataset with a random orthogonal matrix.
    Transform(TransformArgs),
    /// Exact K nearest neighbors by linear scan.
    Gt(GtArgs),
    /// Build an IVF index over rotated vectors.
    BuildIvf(BuildIvfArgs),
    /// Query a saved IVF index.
    QueryIvf(QueryIvfArgs),
    /// Build an HNSW graph over rotated vectors.
    BuildHnsw(BuildHnswArgs),
    /// Query a saved HNSW graph.
    QueryHnsw(QueryHnswArgs),
    /// Timed sweep over modes and a parameter grid; writes CSV.
    Bench(BenchArgs),
    /// Fixed-threshold reliability experiment over an epsilon0 grid; writes CSV.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Random seed.
    #[arg(long, env = "ADSANN_SEED", default_value_t = adsann_core::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct DcoArgs {
    #[arg(long = "epsilon0", default_value_t = DEFAULT_EPSILON0)]
    epsilon0: f64,
    #[arg(long = "delta-d", default_value_t = DEFAULT_DELTA_D)]
    delta_d: usize,
}

impl DcoArgs {
    fn config(&self) -> Result<DcoConfig> {
        Ok(DcoConfig::new(self.epsilon0, self.delta_d)?)
    }
}

/// Base and query vectors, named directly or through a descriptor file.
#[derive(Args)]
struct DataArgs {
    /// Dataset descriptor (`key=value` file with base_path, query_path, gt_path, d).
    #[arg(long, conflicts_with_all = ["base", "queries"])]
    descriptor: Option<PathBuf>,
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Ground-truth ivecs; computed by brute force when absent.
    #[arg(long)]
    gt: Option<PathBuf>,
}

struct Loaded {
    base: Dataset,
    queries: Dataset,
    gt: Option<GroundTruth>,
}

impl DataArgs {
    fn load(&self) -> Result<Loaded> {
        let (base, queries, gt) = match &self.descriptor {
            Some(p) => {
                let d = DatasetDescriptor::load(p)?;
                (d.base_path, d.query_path, self.gt.clone().or(d.gt_path))
            }
            None => match (&self.base, &self.queries) {
                (Some(b), Some(q)) => (b.clone(), q.clone(), self.gt.clone()),
                _ => bail!("give --descriptor, or both --base and --queries"),
            },
        };
        let base = vecio::read_fvecs(&base)?;
        let queries = vecio::read_fvecs(&queries)?;
        if base.d() != queries.d() {
            bail!("base has d={} but queries have d={}", base.d(), queries.d());
        }
        let gt = gt.map(vecio::read_ground_truth).transpose()?;
        Ok(Loaded { base, queries, gt })
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 128)]
    d: usize,
    #[arg(long, default_value_t = 64)]
    blobs: usize,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    /// Per-coordinate decay of the in-blob noise scale.
    #[arg(long, default_value_t = 1.0)]
    decay: f64,
    #[arg(long = "n-queries", default_value_t = 1000)]
    n_queries: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Output directory for base.fvecs, query.fvecs and dataset.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Directory receiving the matrix.
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct GtArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long = "K", default_value_t = 100)]
    k: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Contiguous,
    Split,
}

#[derive(Args)]
struct BuildIvfArgs {
    #[arg(long)]
    base: PathBuf,
    /// Output directory.
    #[arg(long)]
    index: PathBuf,
    /// Number of clusters; defaults to ceil(sqrt(n)).
    #[arg(long = "k-clusters")]
    k_clusters: Option<usize>,
    #[arg(long, value_enum, default_value_t = LayoutArg::Split)]
    layout: LayoutArg,
    /// Coordinates in the first array of the split layout; defaults to --delta-d.
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long = "delta-d", default_value_t = DEFAULT_DELTA_D)]
    delta_d: usize,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum IvfModeArg {
    Fd,
    Pd,
    PdSplit,
    Ad,
    AdSplit,
}

impl From<IvfModeArg> for IvfMode {
    fn from(m: IvfModeArg) -> Self {
        match m {
            IvfModeArg::Fd => IvfMode::Fd,
            IvfModeArg::Pd => IvfMode::Pd,
            IvfModeArg::PdSplit => IvfMode::PdSplit,
            IvfModeArg::Ad => IvfMode::Ad,
            IvfModeArg::AdSplit => IvfMode::AdSplit,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HnswModeArg {
    Plain,
    Pd,
    Plus,
    PlusPlus,
}

impl From<HnswModeArg> for HnswMode {
    fn from(m: HnswModeArg) -> Self {
        match m {
            HnswModeArg::Plain => HnswMode::Plain,
            HnswModeArg::Pd => HnswMode::Pd,
            HnswModeArg::Plus => HnswMode::Plus,
            HnswModeArg::PlusPlus => HnswMode::PlusPlus,
        }
    }
}

#[derive(Args)]
struct QueryOut {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long = "K", default_value_t = 10)]
    k: usize,
    /// Ground truth for a recall report.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Result ids as ivecs.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct QueryIvfArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    out: QueryOut,
    #[arg(long, default_value_t = 16)]
    nprobe: usize,
    #[arg(long, value_enum, default_value_t = IvfModeArg::AdSplit)]
    mode: IvfModeArg,
    #[command(flatten)]
    dco: DcoArgs,
}

#[derive(Args)]
struct BuildHnswArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long = "M", default_value_t = 16)]
    m: usize,
    #[arg(long = "ef-construction", default_value_t = 500)]
    ef_construction: usize,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct QueryHnswArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    out: QueryOut,
    #[arg(long, default_value_t = 100)]
    nef: usize,
    #[arg(long, value_enum, default_value_t = HnswModeArg::PlusPlus)]
    mode: HnswModeArg,
    #[command(flatten)]
    dco: DcoArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexKind {
    Ivf,
    Hnsw,
    Linear,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    index: IndexKind,
    #[arg(long = "K", default_value_t = 10)]
    k: usize,
    /// Probe counts to sweep (IVF).
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64])]
    nprobe: Vec<usize>,
    /// Beam widths to sweep (HNSW).
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 200, 400])]
    nef: Vec<usize>,
    /// epsilon0 values to sweep (linear scan).
    #[arg(long = "epsilon-grid", value_delimiter = ',', default_values_t = [1.0, 1.5, 2.1, 3.0])]
    epsilon_grid: Vec<f64>,
    #[arg(long = "k-clusters")]
    k_clusters: Option<usize>,
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long = "M", default_value_t = 16)]
    m: usize,
    #[arg(long = "ef-construction", default_value_t = 500)]
    ef_construction: usize,
    /// Timed passes per mode and parameter (median reported).
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[command(flatten)]
    dco: DcoArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long = "K", default_value_t = 100)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0])]
    grid: Vec<f64>,
    /// Use only the first N base vectors.
    #[arg(long = "max-base")]
    max_base: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Synth(a) => synth(a),
        Cmd::Transform(a) => transform(a),
        Cmd::Gt(a) => gt(a),
        Cmd::BuildIvf(a) => build_ivf(a),
        Cmd::QueryIvf(a) => query_ivf(a),
        Cmd::BuildHnsw(a) => build_hnsw(a),
        Cmd::QueryHnsw(a) => query_hnsw(a),
        Cmd::Bench(a) => bench_cmd(a),
        Cmd::Verify(a) => verify(a),
    }
}

fn default_clusters(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let out = SynthSpec::new(a.n, a.d, a.blobs, a.spread, a.seed.seed)
        .decay(a.decay)
        .generate_with_queries(a.n_queries)?;
    std::fs::create_dir_all(&a.out)?;
    vecio::write_fvecs(&out.base, a.out.join("base.fvecs"))?;
    if let Some(q) = &out.queries {
        vecio::write_fvecs(q, a.out.join("query.fvecs"))?;
    }
    let desc = DatasetDescriptor {
        name: format!("synth-{}x{}", a.n, a.d),
        base_path: "base.fvecs".into(),
        query_path: "query.fvecs".into(),
        gt_path: None,
        d: a.d,
    };
    std::fs::write(a.out.join("dataset.txt"), desc.to_text())?;
    eprintln!(
        "wrote {} base and {} query vectors to {}",
        a.n,
        a.n_queries,
        a.out.display()
    );
    Ok(())
}

fn transform(a: TransformArgs) -> Result<()> {
    let ds = vecio::read_fvecs(&a.input)?;
    let m = adsann_core::TransformMatrix::generate(ds.d(), a.seed.seed)?;
    vecio::write_fvecs(&m.apply_dataset(&ds)?, &a.output)?;
    persist::save_transform(&m, &a.matrix)?;
    Ok(())
}

fn gt(a: GtArgs) -> Result<()> {
    let base = vecio::read_fvecs(&a.base)?;
    let queries = vecio::read_fvecs(&a.queries)?;
    let start = Instant::now();
    let gt = brute_force_knn(&base, &queries, a.k)?;
    vecio::write_ground_truth(&gt, &a.output)?;
    eprintln!("{} queries in {:.2?}", queries.n(), start.elapsed());
    Ok(())
}

/// Index directories hold `transform/` plus the index files, and for HNSW
/// the rotated vectors.
fn transform_dir(index: &Path) -> PathBuf {
    index.join("transform")
}

fn build_ivf(a: BuildIvfArgs) -> Result<()> {
    let raw = vecio::read_fvecs(&a.base)?;
    let seed = a.seed.seed;
    let m = adsann_core::TransformMatrix::generate(raw.d(), seed)?;
    let base = m.apply_dataset(&raw)?;
    let k = a.k_clusters.unwrap_or_else(|| default_clusters(base.n()));
    let layout = match a.layout {
        LayoutArg::Contiguous => Layout::Contiguous,
        LayoutArg::Split => Layout::Split {
            d1: a.d1.unwrap_or(a.delta_d).min(base.d().saturating_sub(1)).max(1),
        },
    };
    let start = Instant::now();
    let idx = IvfIndex::build(&base, k, seed, layout)?;
    eprintln!(
        "built {k} clusters over {} vectors in {:.2?}",
        base.n(),
        start.elapsed()
    );
    persist::save_transform(&m, transform_dir(&a.index))?;
    persist::save_ivf(&idx, &a.index)?;
    Ok(())
}

fn report(out: &QueryOut, results: &[adsann_core::KnnResult], secs: f64) -> Result<()> {
    let nq = results.len().max(1) as f64;
    let dims: u64 = results.iter().map(|r| r.stats.dims).sum();
    eprintln!(
        "qps {:.1}, avg dims {:.1}",
        results.len() as f64 / secs,
        dims as f64 / nq
    );
    if let Some(path) = &out.gt {
        let gt = vecio::read_ground_truth(path)?;
        if gt.n_queries() != results.len() || gt.k() < out.k {
            bail!("ground truth does not cover these queries at K={}", out.k);
        }
        let r: f64 = results
            .iter()
            .zip(gt.rows())
            .map(|(res, g)| recall(&res.ids, g, out.k))
            .sum();
        eprintln!("recall@{} {:.4}", out.k, r / nq);
    }
    if let Some(path) = &out.output {
        let rows: Vec<Vec<i32>> = results
            .iter()
            .map(|r| r.ids.iter().map(|&i| i as i32).collect())
            .collect();
        vecio::write_ivecs_ragged(rows.iter().map(Vec::as_slice), path)?;
    }
    Ok(())
}

fn rotated_queries(index: &Path, queries: &Path) -> Result<Dataset> {
    let m = persist::load_transform(transform_dir(index))?;
    let q = vecio::read_fvecs(queries)?;
    Ok(m.apply_dataset(&q)?)
}

fn query_ivf(a: QueryIvfArgs) -> Result<()> {
    let idx = persist::load_ivf(&a.index)?;
    let queries = rotated_queries(&a.index, &a.out.queries)?;
    let cfg = a.dco.config()?;
    let mut s = idx.searcher(&cfg);
    let start = Instant::now();
    let results = queries
        .rows()
        .map(|q| s.search(q, a.out.k, a.nprobe, a.mode.into()))
        .collect::<adsann_core::Result<Vec<_>>>()?;
    report(&a.out, &results, start.elapsed().as_secs_f64())
}

fn build_hnsw(a: BuildHnswArgs) -> Result<()> {
    let raw = vecio::read_fvecs(&a.base)?;
    let seed = a.seed.seed;
    let m = adsann_core::TransformMatrix::generate(raw.d(), seed)?;
    let base = m.apply_dataset(&raw)?;
    let params = HnswParams {
        m: a.m,
        ef_construction: a.ef_construction,
        seed,
    };
    let start = Instant::now();
    let g = HnswGraph::build(&base, params)?;
    eprintln!("built graph over {} vectors in {:.2?}", base.n(), start.elapsed());
    persist::save_transform(&m, transform_dir(&a.index))?;
    persist::save_hnsw(&g, &a.index)?;
    vecio::write_fvecs(&base, a.index.join("vectors.fvecs"))?;
    Ok(())
}

fn query_hnsw(a: QueryHnswArgs) -> Result<()> {
    let g = persist::load_hnsw(&a.index)?;
    let store = vecio::read_fvecs(a.index.join("vectors.fvecs"))?;
    let queries = rotated_queries(&a.index, &a.out.queries)?;
    let cfg = a.dco.config()?;
    let mut s = g.searcher(&store, &cfg)?;
    let start = Instant::now();
    let results = queries
        .rows()
        .map(|q| s.search(q, a.out.k, a.nef, a.mode.into()))
        .collect::<adsann_core::Result<Vec<_>>>()?;
    report(&a.out, &results, start.elapsed().as_secs_f64())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let data = a.data.load()?;
    let seed = a.seed.seed;
    let w = Workload::new(data.base, data.queries, data.gt, a.k, seed)?;
    let cfg = SweepConfig::new(a.k, a.reps, a.dco.config()?)?;
    let start = Instant::now();
    let records = match a.index {
        IndexKind::Ivf => {
            let k = a.k_clusters.unwrap_or_else(|| default_clusters(w.base.n()));
            let d1 = a.d1.unwrap_or(cfg.dco.delta_d()).clamp(1, w.base.d().max(2) - 1);
            let pair = IvfPair::build(&w, k, seed, Layout::Split { d1 })?;
            eprintln!("index built in {:.2?}", start.elapsed());
            bench::run_ivf_sweep(&w, &pair, &IvfMode::ALL, &a.nprobe, &cfg)?
        }
        IndexKind::Hnsw => {
            let params = HnswParams {
                m: a.m,
                ef_construction: a.ef_construction,
                seed,
            };
            let g = HnswGraph::build(&w.base, params)?;
            eprintln!("graph built in {:.2?}", start.elapsed());
            bench::run_hnsw_sweep(&w, &g, &HnswMode::ALL, &a.nef, &cfg)?
        }
        IndexKind::Linear => bench::run_linear_sweep(&w, &a.epsilon_grid, &cfg)?,
    };
    bench::write_csv(&records, sink(&a.output)?)?;
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let data = a.data.load()?;
    let base = match a.max_base {
        Some(n) if n < data.base.n() => data.base.select(&(0..n).collect::<Vec<_>>())?,
        _ => data.base,
    };
    let m = adsann_core::TransformMatrix::generate(base.d(), a.seed.seed)?;
    let rows = verify_theory(&m.apply_dataset(&base)?, &m.apply_dataset(&data.queries)?, a.k, &a.grid)?;
    bench::theory_csv(&rows, sink(&a.output)?)?;
    Ok(())
}
