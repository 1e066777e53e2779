use std::path::Path;
use std::process::{Command, Output};

use sparsespec::io;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsespec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn simulate_sample_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let truth = dir.path().join("truth.csv");
    let corner = dir.path().join("corner.csv");
    ok(&["simulate", "--seed", "11", "--out", p(&full), "--truth-out", p(&truth)]);
    assert_eq!(data_rows(&full), 1600);
    assert_eq!(io::read_components(&truth).unwrap().k(), 4);

    ok(&["sample", p(&full), "--count", "200", "--corner", "26x26", "--seed", "7", "--out", p(&corner)]);
    let s = io::read_samples(&corner).unwrap();
    assert_eq!(s.len(), 200);
    assert!(s.scheme.points().iter().all(|q| q.i1 < 26 && q.i2 < 26));

    let comps = dir.path().join("comps.csv");
    let spec = dir.path().join("spec.csv");
    ok(&[
        "reconstruct", p(&corner), "--method", "sema", "--k", "4", "--lambda", "0.4", "--grid", "40x40",
        "--components-out", p(&comps), "--spectrum-out", p(&spec),
    ]);
    assert_eq!(data_rows(&comps), 4);
    let spectrum = io::read_spectrum(&spec).unwrap();
    assert_eq!(spectrum.shape(), (1024, 1024));
}

#[test]
fn every_method_writes_k_components() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let sub = dir.path().join("sub.csv");
    ok(&["simulate", "--seed", "3", "--grid", "20x20", "--out", p(&full)]);
    ok(&["sample", p(&full), "--count", "120", "--seed", "1", "--out", p(&sub)]);
    for method in ["fourier", "lasso", "sema"] {
        let comps = dir.path().join(format!("{method}.csv"));
        ok(&["reconstruct", p(&sub), "--method", method, "--k", "2", "--freq-grid", "64x64", "--pad", "256", "--components-out", p(&comps)]);
        assert_eq!(io::read_components(&comps).unwrap().k(), 2, "{method}");
    }
    let printed = ok(&["reconstruct", p(&sub), "--method", "fourier", "--k", "3", "--pad", "128"]);
    assert_eq!(String::from_utf8(printed.stdout).unwrap().lines().count(), 4);
}

#[test]
fn seeded_commands_are_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let full = dir.path().join(format!("full{tag}.csv"));
        let sub = dir.path().join(format!("sub{tag}.csv"));
        let comps = dir.path().join(format!("comps{tag}.csv"));
        ok(&["simulate", "--seed", "99", "--grid", "24x24", "--noise", "0.02", "--out", p(&full)]);
        ok(&["sample", p(&full), "--count", "150", "--seed", "5", "--out", p(&sub)]);
        ok(&["reconstruct", p(&sub), "--method", "lasso", "--k", "3", "--freq-grid", "96x96", "--pad", "256", "--components-out", p(&comps)]);
        [full, sub, comps].map(|f| std::fs::read(f).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn bench_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{"trials": 4, "k": 2, "grid_shape": [16, 16], "freq_range": [0.1, 0.97],
            "damp_range": [0.019, 0.035], "noise_fwhm_ratio": 0.01, "dictionary_size": [48, 48],
            "lambda": 0.4, "sampling_fractions": [0.3, 0.6], "methods": ["fourier", "lasso", "sema"],
            "base_seed": 5}"#,
    )
    .unwrap();
    let strip = |path: &Path| -> Vec<String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let one = dir.path().join("one.csv");
    let two = dir.path().join("two.csv");
    ok(&["bench", "--config", p(&config), "--out", p(&one), "--workers", "1"]);
    ok(&["bench", "--config", p(&config), "--out", p(&two), "--workers", "3"]);
    let a = strip(&one);
    assert_eq!(a[0], "method,fraction,trials,failures,rmse_freq,rmse_damp");
    assert_eq!(a.len(), 7);
    assert_eq!(a, strip(&two));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(cli(&["simulate", "--out", p(&out)]).status.code(), Some(1));
    assert_eq!(cli(&["sample", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["reconstruct", "a.csv", "--method", "magic"]).status.code(), Some(1));
    assert_eq!(cli(&["reconstruct", p(&dir.path().join("missing.csv")), "--method", "sema"]).status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "i1,i2,t,re,im\n0,0,0,1,0\n").unwrap();
    let o = cli(&["reconstruct", p(&bad), "--method", "fourier"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("i1,i2,t1,t2,re,im"));

    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"trials": 2, "colour": "red"}"#).unwrap();
    assert_eq!(cli(&["bench", "--config", p(&config), "--out", p(&out)]).status.code(), Some(2));

    let v = ok(&["version"]);
    assert!(String::from_utf8(v.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}
