//! Acceptance suite. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Criterion 8 needs real data: point `ADSANN_GIST` at a dataset
//! descriptor (base_path, query_path, d) to enable it.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use adsann::bench::{self, BenchRecord, IvfPair, SweepConfig, Workload};
use adsann::vecio::{self, DatasetDescriptor};
use adsann_core::dco::{ad_sampling, fd_scan, pd_scan, reduce_inner_product};
use adsann_core::{
    verify_theory, DcoConfig, DcoQuery, HnswGraph, HnswMode, HnswParams, IvfMode, Layout, SynthSpec, TransformMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 42;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Verdict {
    status: Status,
    detail: String,
}

impl Verdict {
    fn check(ok: bool, detail: String) -> Self {
        Self {
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    r.set_stream(stream);
    r
}

fn gaussian(r: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    (0..d).map(|_| r.sample::<f64, _>(StandardNormal) as f32).collect()
}

/// Squared distance, written independently of the library kernels.
fn oracle_sq(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        let t = f64::from(a[i]) - f64::from(b[i]);
        s += t * t;
    }
    s
}

fn oracle_dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn c1_transform() -> Verdict {
    let mut r = rng(1);
    let mut notes = String::new();
    let mut ok = true;
    for dim in [32usize, 128, 960] {
        let m = TransformMatrix::generate(dim, SEED).expect("matrix");
        let p = m.entries();
        let mut orth = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let dot: f64 = (0..dim).map(|t| p[i * dim + t] * p[j * dim + t]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                orth = orth.max((dot - want).abs());
            }
        }
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let x = gaussian(&mut r, dim);
            let y = gaussian(&mut r, dim);
            let before = oracle_sq(&x, &y).sqrt();
            let after = oracle_sq(&m.apply(&x).unwrap(), &m.apply(&y).unwrap()).sqrt();
            worst = worst.max((after - before).abs() / before);
        }
        ok &= orth <= 1e-10 && worst <= 1e-5;
        let _ = write!(notes, "D={dim}: |PP'-I|max={orth:.1e} dist-rel={worst:.1e}; ");
    }
    Verdict::check(ok, notes)
}

fn c2_negative_soundness() -> Verdict {
    let mut r = rng(2);
    let dims = [16usize, 32, 128, 300];
    let mats: Vec<TransformMatrix> = dims
        .iter()
        .map(|&d| TransformMatrix::generate(d, SEED + d as u64).unwrap())
        .collect();
    let eps = [0.5, 1.0, 2.1, 4.0];
    let batches = [1usize, 8, 32];
    let trials = 100_000;
    let mut false_pos = 0u64;
    let mut checked = 0u64;
    let mut dims_total = 0u64;
    for t in 0..trials {
        let di = t % dims.len();
        let dim = dims[di];
        let o = mats[di].apply(&gaussian(&mut r, dim)).unwrap();
        let mut q = gaussian(&mut r, dim);
        // Queries near the object as well as far from it.
        let pull: f32 = r.gen_range(0.0..1.0);
        for (qi, oi) in q.iter_mut().zip(&o) {
            *qi = oi + pull * (*qi - oi);
        }
        let q = mats[di].apply(&q).unwrap();
        let dis = oracle_sq(&o, &q).sqrt();
        let u: f64 = if t % 2 == 0 {
            r.gen_range(0.0..1.0)
        } else {
            1.0 - 10f64.powf(-r.gen_range(1.0..9.0))
        };
        let thr = dis * u;
        if oracle_sq(&o, &q) <= thr * thr {
            continue;
        }
        checked += 1;
        let cfg = DcoConfig::new(eps[t % eps.len()], batches[(t / 4) % batches.len()].min(dim)).unwrap();
        let out = ad_sampling(&DcoQuery::new(&o, &q, thr).unwrap(), &cfg);
        dims_total += out.dims_used as u64;
        if out.positive {
            false_pos += 1;
        }
    }
    Verdict::check(
        false_pos == 0 && checked >= 99_000,
        format!(
            "{checked} oracle-verified negatives, {false_pos} positive decisions, mean dims {:.1}",
            dims_total as f64 / checked as f64
        ),
    )
}

fn c3_positive_reliability() -> Verdict {
    let data = SynthSpec::new(10_000, 128, 64, 1.0, SEED)
        .decay(0.96)
        .generate_with_queries(1000)
        .unwrap();
    let m = TransformMatrix::generate(128, SEED).unwrap();
    let base = m.apply_dataset(&data.base).unwrap();
    let queries = m.apply_dataset(data.queries.as_ref().unwrap()).unwrap();
    let grid = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let rows = verify_theory(&base, &queries, 100, &grid).unwrap();
    let at2 = rows.iter().find(|r| r.epsilon0 == 2.0).unwrap().failure_rate;
    let falling = rows.windows(2).all(|w| w[1].failure_rate < w[0].failure_rate);
    let rising = rows.windows(2).all(|w| w[1].avg_dims > w[0].avg_dims);
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{}:{}/{}={:.4},{:.2}d",
                r.epsilon0, r.failures, r.positives, r.failure_rate, r.avg_dims
            )
        })
        .collect();
    Verdict::check(
        at2 < 0.01 && falling && rising,
        format!("eps0:failures/positives=rate,avg_dims [{}]", table.join(" ")),
    )
}

fn c4_unbiased() -> Verdict {
    let dim = 128;
    let d = 32;
    let mut r = rng(4);
    // Strongly anisotropic inputs, so only the rotation can spread the mass.
    let scales: Vec<f64> = (0..dim).map(|j| 0.9f64.powi(j as i32)).collect();
    let mut sum = 0.0;
    let mut trials = 0;
    for rot in 0..100u64 {
        let m = TransformMatrix::generate(dim, 1000 + rot).unwrap();
        for _ in 0..100 {
            let x: Vec<f32> = scales
                .iter()
                .map(|s| (s * r.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            let y = m.apply_prefix(&x, d).unwrap();
            let part: f64 = y.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
            let full: f64 = x.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
            sum += (dim as f64 / d as f64) * part / full;
            trials += 1;
        }
    }
    let mean = sum / trials as f64;
    Verdict::check(
        (0.97..=1.03).contains(&mean),
        format!("mean dis'^2/dis^2 at d={d} over {trials} trials = {mean:.4}"),
    )
}

struct Big {
    w: Workload,
    pair: IvfPair,
    graph: HnswGraph,
    ivf: Vec<BenchRecord>,
    hnsw: Vec<BenchRecord>,
    setup: Duration,
    sweep: Duration,
}

const N_PROBES: [usize; 6] = [1, 2, 4, 8, 16, 32];
const N_EFS: [usize; 3] = [50, 100, 200];

fn big_setup() -> Big {
    let start = Instant::now();
    let data = SynthSpec::new(100_000, 128, 64, 1.0, SEED)
        .decay(0.96)
        .generate_with_queries(1000)
        .unwrap();
    let w = Workload::new(data.base, data.queries.unwrap(), None, 10, SEED).unwrap();
    let k = (w.base.n() as f64).sqrt().ceil() as usize;
    let pair = IvfPair::build(&w, k, SEED, Layout::Split { d1: 32 }).unwrap();
    let graph = HnswGraph::build(&w.base, HnswParams::default()).unwrap();
    let setup = start.elapsed();

    let start = Instant::now();
    let cfg = SweepConfig::new(10, 5, DcoConfig::default()).unwrap();
    let ivf = bench::run_ivf_sweep(&w, &pair, &IvfMode::ALL, &N_PROBES, &cfg).unwrap();
    let hnsw = bench::run_hnsw_sweep(&w, &graph, &HnswMode::ALL, &N_EFS, &cfg).unwrap();
    let sweep = start.elapsed();

    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    for (name, recs) in [("ivf.csv", &ivf), ("hnsw.csv", &hnsw)] {
        let path = dir.join(name);
        bench::write_csv(recs, std::fs::File::create(&path).unwrap()).unwrap();
        println!("    sweep written to {}", path.display());
    }
    Big {
        w,
        pair,
        graph,
        ivf,
        hnsw,
        setup,
        sweep,
    }
}

fn rec<'a>(recs: &'a [BenchRecord], algo: &str, param: usize) -> &'a BenchRecord {
    recs.iter()
        .find(|r| r.algo == algo && r.param == param as f64)
        .unwrap_or_else(|| panic!("no record for {algo} at {param}"))
}

fn c5_equivalences(big: &Big) -> Verdict {
    let mut r = rng(5);
    let mut mismatch_a = 0;
    for t in 0..10_000 {
        let dim = [3usize, 17, 64, 128][t % 4];
        let o = gaussian(&mut r, dim);
        let q = gaussian(&mut r, dim);
        let dis = oracle_sq(&o, &q).sqrt();
        let thr = match t % 3 {
            0 => dis,
            _ => dis * r.gen_range(0.5..1.5),
        };
        let query = DcoQuery::new(&o, &q, thr).unwrap();
        let full = fd_scan(&query);
        let part = pd_scan(&query, [1usize, 4, 32][t % 3].min(dim));
        if full.positive != part.positive || (full.positive && full.distance != part.distance) {
            mismatch_a += 1;
        }
    }

    let cfg = DcoConfig::default();
    let mut s = big.pair.rotated.searcher(&cfg);
    let mut mismatch_b = 0;
    for (qi, q) in big.w.raw_queries.rows().take(100).enumerate() {
        let q = big.w.matrix.apply(q).unwrap();
        let np = [4usize, 16][qi % 2];
        let a = s.search(&q, 10, np, IvfMode::Ad).unwrap();
        let b = s.search(&q, 10, np, IvfMode::AdSplit).unwrap();
        if a != b {
            mismatch_b += 1;
        }
    }

    let loose = DcoConfig::new(1e6, 32).unwrap();
    let mut hs = big.graph.searcher(&big.w.base, &loose).unwrap();
    let mut mismatch_c = 0;
    for q in big.w.raw_queries.rows().take(100) {
        let q = big.w.matrix.apply(q).unwrap();
        let a = hs.search(&q, 10, 100, HnswMode::Plain).unwrap();
        let b = hs.search(&q, 10, 100, HnswMode::Plus).unwrap();
        if a.ids != b.ids || a.distances != b.distances {
            mismatch_c += 1;
        }
    }
    Verdict::check(
        mismatch_a + mismatch_b + mismatch_c == 0,
        format!(
            "(a) pd/fd mismatches {mismatch_a}/10000; (b) IVF+/IVF++ mismatches {mismatch_b}/100; \
             (c) HNSW+(eps0=1e6)/HNSW mismatches {mismatch_c}/100"
        ),
    )
}

fn c6_accuracy(big: &Big) -> Verdict {
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for nef in N_EFS {
        let base = rec(&big.hnsw, "HNSW", nef).recall;
        for algo in ["HNSW+", "HNSW++"] {
            let gap = (rec(&big.hnsw, algo, nef).recall - base).abs();
            worst = worst.max(gap);
        }
        notes.push(format!(
            "nef={nef}: {:.4}/{:.4}/{:.4}",
            base,
            rec(&big.hnsw, "HNSW+", nef).recall,
            rec(&big.hnsw, "HNSW++", nef).recall
        ));
    }
    for np in N_PROBES {
        let gap = (rec(&big.ivf, "IVF+", np).recall - rec(&big.ivf, "IVF", np).recall).abs();
        worst = worst.max(gap);
    }
    let runtime = big.setup + big.sweep;
    Verdict::check(
        worst <= 0.005 && runtime < Duration::from_secs(15 * 60),
        format!(
            "max recall gap {:.2} points; HNSW/HNSW+/HNSW++ {}; setup {:.0?}, sweeps {:.0?}",
            worst * 100.0,
            notes.join(", "),
            big.setup,
            big.sweep
        ),
    )
}

/// Smallest grid value where every listed algorithm reaches `target` recall.
fn first_reaching(recs: &[BenchRecord], algos: &[&str], grid: &[usize], target: f64) -> Option<usize> {
    grid.iter()
        .copied()
        .find(|&p| algos.iter().all(|a| rec(recs, a, p).recall >= target))
}

fn c7_dimension_savings(big: &Big) -> Verdict {
    let ivf_p = first_reaching(&big.ivf, &["IVF", "IVF+"], &N_PROBES, 0.95);
    let hnsw_p = first_reaching(&big.hnsw, &["HNSW", "HNSW++"], &N_EFS, 0.95);
    match (ivf_p, hnsw_p) {
        (Some(np), Some(nef)) => {
            let ivf_pct = rec(&big.ivf, "IVF+", np).dims_pct;
            let hnsw_pct = rec(&big.hnsw, "HNSW++", nef).dims_pct;
            Verdict::check(
                ivf_pct <= 60.0 && hnsw_pct <= 80.0,
                format!(
                    "IVF+ at n_probe={np}: {ivf_pct:.1}% of IVF dims; HNSW++ at N_ef={nef}: {hnsw_pct:.1}% of HNSW dims"
                ),
            )
        }
        _ => Verdict::check(false, "no grid parameter reaches 95% recall".into()),
    }
}

fn c8_gist() -> Verdict {
    let Some(path) = std::env::var_os("ADSANN_GIST") else {
        return Verdict {
            status: Status::Skip,
            detail: "set ADSANN_GIST to a dataset descriptor to run".into(),
        };
    };
    let desc = DatasetDescriptor::load(PathBuf::from(path)).unwrap();
    let base = vecio::read_fvecs(&desc.base_path).unwrap();
    let queries = vecio::read_fvecs(&desc.query_path).unwrap();
    let n = base.n().min(100_000);
    let base = if n < base.n() {
        base.select(&(0..n).collect::<Vec<_>>()).unwrap()
    } else {
        base
    };
    let w = Workload::new(base, queries, None, 100, SEED).unwrap();
    let cfg = SweepConfig::new(100, 3, DcoConfig::new(2.1, 1).unwrap()).unwrap();
    let recs = bench::run_linear_sweep(&w, &[2.1], &cfg).unwrap();
    let ad = &recs[1];
    Verdict::check(
        ad.recall >= 0.999 && ad.dims_pct <= 10.0,
        format!(
            "{} base vectors, D={}: recall {:.4}, {:.2}% of dimensions ({:.1} per vector)",
            n,
            w.base.d(),
            ad.recall,
            ad.dims_pct,
            ad.dims_pct / 100.0 * w.base.d() as f64
        ),
    )
}

fn c9_throughput(big: &Big) -> Verdict {
    let ivf_p = first_reaching(&big.ivf, &["IVF", "IVF+", "IVF++"], &N_PROBES, 0.90);
    let hnsw_p = first_reaching(&big.hnsw, &["HNSW", "HNSW++"], &N_EFS, 0.90);
    let (Some(np), Some(nef)) = (ivf_p, hnsw_p) else {
        return Verdict::check(false, "no grid parameter reaches 90% recall".into());
    };
    let q = |recs: &[BenchRecord], a: &str, p: usize| rec(recs, a, p).qps;
    let (i0, i1, i2) = (
        q(&big.ivf, "IVF", np),
        q(&big.ivf, "IVF+", np),
        q(&big.ivf, "IVF++", np),
    );
    let (h0, h2) = (q(&big.hnsw, "HNSW", nef), q(&big.hnsw, "HNSW++", nef));
    Verdict::check(
        i2 > i1 && i1 > i0 && h2 > h0,
        format!(
            "n_probe={np}: IVF++ {i2:.0} > IVF+ {i1:.0} > IVF {i0:.0} qps; N_ef={nef}: HNSW++ {h2:.0} > HNSW {h0:.0} qps"
        ),
    )
}

fn c10_inner_product() -> Verdict {
    let mut r = rng(10);
    let mut mismatches = 0;
    let mut negatives = 0;
    for t in 0..10_000 {
        let dim = [2usize, 8, 64, 128][t % 4];
        let o = gaussian(&mut r, dim);
        let q = gaussian(&mut r, dim);
        let ip = oracle_dot(&o, &q);
        let scale = (oracle_dot(&o, &o) * oracle_dot(&q, &q)).sqrt();
        let thr = scale * r.gen_range(-1.2..1.2);
        let truth = ip >= thr;
        let reduced = reduce_inner_product(&o, &q, thr).unwrap();
        if reduced.holds() != truth {
            mismatches += 1;
        }
        negatives += usize::from(!truth);
    }
    Verdict::check(
        mismatches == 0,
        format!("{mismatches} mismatches over 10000 triples ({negatives} false predicates)"),
    )
}

fn report(id: u32, name: &str, f: impl FnOnce() -> Verdict, failed: &mut bool) {
    let start = Instant::now();
    let v = f();
    let tag = match v.status {
        Status::Pass => "PASS",
        Status::Fail => {
            *failed = true;
            "FAIL"
        }
        Status::Skip => "SKIP",
    };
    println!("[{tag}] {id:>2}. {name} ({:.1?}): {}", start.elapsed(), v.detail);
}

fn main() -> ExitCode {
    let mut failed = false;
    println!("acceptance suite");
    report(1, "transform correctness", c1_transform, &mut failed);
    report(2, "negative-object soundness", c2_negative_soundness, &mut failed);
    report(3, "positive-object reliability", c3_positive_reliability, &mut failed);
    report(4, "estimator unbiasedness", c4_unbiased, &mut failed);

    let start = Instant::now();
    let big = big_setup();
    println!("    10^5 x 128 workload ready in {:.1?}", start.elapsed());
    report(5, "exact-baseline equivalences", || c5_equivalences(&big), &mut failed);
    report(6, "end-to-end accuracy preservation", || c6_accuracy(&big), &mut failed);
    report(7, "dimension savings", || c7_dimension_savings(&big), &mut failed);
    report(8, "real-data linear scan (optional)", c8_gist, &mut failed);
    report(9, "throughput ordering", || c9_throughput(&big), &mut failed);
    report(10, "inner-product reduction", c10_inner_product, &mut failed);

    if failed {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    } else {
        println!("acceptance: ok");
        ExitCode::SUCCESS
    }
}
