use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mpdelta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpdelta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One-layer synthetic model in a fresh directory.
fn synth(seed: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let d = dir.path().join("m");
    let o = mpdelta(&[
        "synth",
        "--output-dir",
        p(&d),
        "--seed",
        seed,
        "--layers",
        "1",
        "--hidden",
        "256",
        "--samples",
        "64",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (dir, d)
}

fn compress(d: &Path, out: &Path, extra: &[&str]) -> Output {
    let bb = d.join("backbone.dckp");
    let al = d.join("aligned.dckp");
    let mut args = vec![
        "compress",
        "--backbone",
        p(&bb),
        "--aligned",
        p(&al),
        "--output",
        p(out),
    ];
    args.extend_from_slice(extra);
    mpdelta(&args)
}

fn r_ends(plan_out: &str) -> Vec<usize> {
    plan_out
        .lines()
        .filter_map(|l| l.split_whitespace().nth(1))
        .filter_map(|r| r.strip_prefix('[')?.strip_suffix(')')?.split(',').nth(1)?.parse().ok())
        .collect()
}

#[test]
fn plan_default_schedule() {
    let o = mpdelta(&[
        "plan",
        "--h-out",
        "4096",
        "--h-in",
        "4096",
        "--schedule",
        "8+3+2",
        "--alpha",
        "1/16",
    ]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    for range in ["[0,2)", "[2,34)", "[34,1002)"] {
        assert!(out.contains(range), "{out}");
    }
    assert!(out.contains("avg bitwidth 1\n"), "{out}");
    assert_eq!(r_ends(&out), vec![2, 34, 1002]);
}

#[test]
fn plan_lower_alpha_shrinks_ranges() {
    let hi = r_ends(&stdout(&mpdelta(&["plan", "--alpha", "1/16"])));
    let lo = r_ends(&stdout(&mpdelta(&["plan", "--alpha", "1/32"])));
    assert_eq!(hi.len(), lo.len());
    assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h), "{lo:?} vs {hi:?}");
}

#[test]
fn usage_errors_exit_2_on_stderr() {
    for args in [
        &["plan", "--schedule", "2+8"][..],
        &["plan", "--alpha", "0"],
        &["plan", "--bogus"],
        &["analyze"],
        &["bench", "--batches", "0"],
    ] {
        let o = mpdelta(args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(stdout(&o).is_empty(), "{args:?}: {}", stdout(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn missing_calibration_names_first_tensor() {
    let (dir, d) = synth("1");
    let o = compress(&d, &dir.path().join("p.dcom"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("layers.0.attn.q"), "{}", stderr(&o));
    assert!(!dir.path().join("p.dcom").exists());
}

#[test]
fn compress_is_deterministic_and_leaves_inputs_alone() {
    let (dir, d) = synth("2");
    let before: Vec<Vec<u8>> = ["backbone.dckp", "aligned.dckp"]
        .iter()
        .map(|f| std::fs::read(d.join(f)).unwrap())
        .collect();
    let a = dir.path().join("a.dcom");
    let b = dir.path().join("b.dcom");
    let o = compress(&d, &a, &["--synthetic-calibration", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("metadata overhead"));
    let o = mpdelta(&[
        "--threads",
        "1",
        "compress",
        "--backbone",
        p(&d.join("backbone.dckp")),
        "--aligned",
        p(&d.join("aligned.dckp")),
        "--output",
        p(&b),
        "--synthetic-calibration",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let after: Vec<Vec<u8>> = ["backbone.dckp", "aligned.dckp"]
        .iter()
        .map(|f| std::fs::read(d.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn zero_delta_roundtrip_is_exact() {
    let (dir, d) = synth("4");
    let bb = d.join("backbone.dckp");
    let pkg = dir.path().join("z.dcom");
    let o = mpdelta(&[
        "compress",
        "--backbone",
        p(&bb),
        "--aligned",
        p(&bb),
        "--output",
        p(&pkg),
        "--synthetic-calibration",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let avg: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("avg bitwidth "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(avg <= 16.0 / 16.0);

    let out = dir.path().join("r.dckp");
    let o = mpdelta(&[
        "restore",
        "--backbone",
        p(&bb),
        "--package",
        p(&pkg),
        "--output",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&bb).unwrap());
}

#[test]
fn restore_reports_error_below_sign_baseline() {
    let (dir, d) = synth("5");
    let pkg = dir.path().join("p.dcom");
    let cal = d.join("calibration.dckp");
    assert_eq!(code(&compress(&d, &pkg, &["--calibration", p(&cal)])), 0);
    let out = dir.path().join("r.dckp");
    let o = mpdelta(&[
        "restore",
        "--backbone",
        p(&d.join("backbone.dckp")),
        "--package",
        p(&pkg),
        "--output",
        p(&out),
        "--reference",
        p(&d.join("aligned.dckp")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut compared = 0;
    for line in stdout(&o).lines().skip(1) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() == 3 && f[2] != "-" {
            let (ours, sign): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
            assert!(ours <= sign, "{line}");
            compared += 1;
        }
    }
    assert_eq!(compared, 4);
}

#[test]
fn integrity_failures_exit_3() {
    let (dir, d) = synth("6");
    let pkg = dir.path().join("p.dcom");
    assert_eq!(code(&compress(&d, &pkg, &["--synthetic-calibration"])), 0);
    let out = dir.path().join("r.dckp");
    let wrong = d.join("aligned.dckp");
    let restore = |backbone: &Path, package: &Path, force: bool| {
        let mut args = vec![
            "restore",
            "--backbone",
            p(backbone),
            "--package",
            p(package),
            "--output",
            p(&out),
        ];
        if force {
            args.push("--force");
        }
        mpdelta(&args)
    };
    let o = restore(&wrong, &pkg, false);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
    assert_eq!(code(&restore(&wrong, &pkg, true)), 0);

    let mut bytes = std::fs::read(&pkg).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x55;
    let bad = dir.path().join("bad.dcom");
    std::fs::write(&bad, bytes).unwrap();
    assert_eq!(code(&restore(&d.join("backbone.dckp"), &bad, false)), 3);
}

#[test]
fn analyze_synthetic_csv_shape() {
    let o = mpdelta(&["analyze", "--synthetic", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "method,param_kind,layer_bin,scope,mse");
    assert_eq!(lines.len(), 1 + 4 * 2);
    assert!(!out.contains('\r'));
    for scope in ["all", "outliers"] {
        assert_eq!(lines.iter().filter(|l| l.split(',').nth(3) == Some(scope)).count(), 4);
    }
}

#[test]
fn analyze_zero_delta_all_zero() {
    let (_dir, d) = synth("8");
    let bb = d.join("backbone.dckp");
    let o = mpdelta(&[
        "analyze",
        "--backbone",
        p(&bb),
        "--aligned",
        p(&bb),
        "--synthetic-calibration",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1 + 4 * 4 * 2);
    for line in out.lines().skip(1) {
        assert_eq!(line.rsplit(',').next().unwrap().parse::<f64>().unwrap(), 0.0, "{line}");
    }
}

#[test]
fn analyze_sweep_prints_ordering_statistic() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = mpdelta(&["analyze", "--synthetic", "--sweep", "10", "--output", p(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("triple best on") && out.contains("/10"), "{out}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 10 * 8);
}

#[test]
fn search_is_reproducible() {
    let args = [
        "search",
        "--seed",
        "5",
        "--cases",
        "1",
        "--population",
        "8",
        "--generations",
        "3",
    ];
    let a = mpdelta(&args);
    let b = mpdelta(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let trace: Vec<f64> = stdout(&a)
        .lines()
        .filter(|l| l.starts_with("generation"))
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(trace.len(), 4);
    assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
    assert!(stdout(&a).contains("greedy \"8+3+2\""));
}

#[test]
fn bench_csv_rows() {
    let o = mpdelta(&["bench", "--hidden", "256,512", "--batches", "1,3", "--applies", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("impl,hidden,batch,"));
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        assert!(f[7].parse::<f64>().unwrap() <= 1e-4, "{line}");
        let largest: usize = f[8].parse().unwrap();
        let h: usize = f[1].parse().unwrap();
        if f[0] == "fused" {
            assert!(largest < h * h, "{line}");
        }
    }
}
