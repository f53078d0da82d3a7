use std::path::Path;
use std::process::{Command, Output};

use adsann::vecio;
use tempfile::TempDir;

fn adsann(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_adsann"))
        .args(args)
        .env_remove("ADSANN_SEED")
        .output()
        .expect("spawn adsann");
    assert!(
        out.status.success(),
        "adsann {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn recall_line(out: &Output) -> f64 {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().find(|l| l.starts_with("recall@")).expect("recall line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn end_to_end_pipeline() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    adsann(&[
        "synth",
        "--n",
        "2000",
        "--d",
        "32",
        "--blobs",
        "8",
        "--n-queries",
        "25",
        "--out",
        p(&data),
    ]);
    let base = data.join("base.fvecs");
    let queries = data.join("query.fvecs");
    assert_eq!(vecio::read_fvecs(&base).unwrap().n(), 2000);
    assert_eq!(vecio::read_fvecs(&queries).unwrap().n(), 25);

    let gt = tmp.path().join("gt.ivecs");
    adsann(&[
        "gt",
        "--base",
        p(&base),
        "--queries",
        p(&queries),
        "--K",
        "10",
        "--output",
        p(&gt),
    ]);
    assert_eq!(vecio::read_ground_truth(&gt).unwrap().k(), 10);

    let rot = tmp.path().join("rot.fvecs");
    let mat = tmp.path().join("mat");
    adsann(&[
        "transform",
        "--input",
        p(&base),
        "--output",
        p(&rot),
        "--matrix",
        p(&mat),
    ]);
    assert_eq!(vecio::read_fvecs(&rot).unwrap().d(), 32);
    assert!(mat.join("matrix.fvecs").exists());

    let ivf = tmp.path().join("ivf");
    adsann(&["build-ivf", "--base", p(&base), "--index", p(&ivf), "--delta-d", "8"]);
    let ids = tmp.path().join("ids.ivecs");
    for mode in ["fd", "ad", "ad-split", "pd-split"] {
        let out = adsann(&[
            "query-ivf",
            "--index",
            p(&ivf),
            "--queries",
            p(&queries),
            "--K",
            "10",
            "--nprobe",
            "45",
            "--mode",
            mode,
            "--delta-d",
            "8",
            "--gt",
            p(&gt),
            "--output",
            p(&ids),
        ]);
        assert!(recall_line(&out) >= 0.99, "{mode}");
    }
    let rows = vecio::read_ivecs_ragged(&ids).unwrap();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.len() == 10));

    let hnsw = tmp.path().join("hnsw");
    adsann(&[
        "build-hnsw",
        "--base",
        p(&base),
        "--index",
        p(&hnsw),
        "--M",
        "8",
        "--ef-construction",
        "60",
    ]);
    for mode in ["plain", "plus-plus"] {
        let out = adsann(&[
            "query-hnsw",
            "--index",
            p(&hnsw),
            "--queries",
            p(&queries),
            "--K",
            "10",
            "--nef",
            "100",
            "--mode",
            mode,
            "--gt",
            p(&gt),
        ]);
        assert!(recall_line(&out) >= 0.9, "{mode}");
    }

    let csv = tmp.path().join("ivf.csv");
    adsann(&[
        "bench",
        "--descriptor",
        p(&data.join("dataset.txt")),
        "--index",
        "ivf",
        "--nprobe",
        "1,4",
        "--delta-d",
        "8",
        "--output",
        p(&csv),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("algo,param,qps,recall,avg_ratio,avg_dims,dims_pct\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 5);

    let theory = tmp.path().join("theory.csv");
    adsann(&[
        "verify",
        "--base",
        p(&base),
        "--queries",
        p(&queries),
        "--K",
        "20",
        "--grid",
        "1,2",
        "--output",
        p(&theory),
    ]);
    assert_eq!(std::fs::read_to_string(&theory).unwrap().lines().count(), 3);
}

#[test]
fn seed_from_environment_changes_data() {
    let tmp = TempDir::new().unwrap();
    let run = |dir: &Path, seed: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_adsann"))
            .args([
                "synth",
                "--n",
                "50",
                "--d",
                "4",
                "--blobs",
                "2",
                "--n-queries",
                "1",
                "--out",
                p(dir),
            ])
            .env("ADSANN_SEED", seed)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(dir.join("base.fvecs")).unwrap()
    };
    let a = run(&tmp.path().join("a"), "1");
    let b = run(&tmp.path().join("b"), "1");
    let c = run(&tmp.path().join("c"), "2");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn bad_input_reports_an_error() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.fvecs");
    std::fs::write(&bad, [7u8, 0, 0]).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_adsann"))
        .args([
            "gt",
            "--base",
            p(&bad),
            "--queries",
            p(&bad),
            "--output",
            p(&tmp.path().join("x")),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed"));
}
