use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pfair_core::{validate_dataset, RawTable};
use tempfile::TempDir;

fn pfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pfair(args);
    assert!(
        out.status.success(),
        "pfair {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Header line and number of data rows, skipping provenance comments.
fn table_shape(file: &Path) -> (Vec<String>, usize) {
    let text = fs::read_to_string(file).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.count())
}

#[test]
fn default_simulation_has_paper_dimensions() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["simulate", "--seed", "7", "--output-dir", path(dir.path())]);
    let (header, rows) = table_shape(&dir.path().join("data.csv"));
    assert_eq!(rows, 5000);
    assert_eq!(header.len(), 103);
    assert_eq!(&header[..4], ["D", "A", "Y", "x1"]);
    let (truth_header, truth_rows) = table_shape(&dir.path().join("truth.csv"));
    assert_eq!(truth_header, ["y0", "y1", "stratum_code"]);
    assert_eq!(truth_rows, 5000);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("stable") && stdout.contains("-0.2000"));
}

#[test]
fn simulation_is_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        ok(&[
            "simulate",
            "--seed",
            "11",
            "--n",
            "300",
            "--m",
            "4",
            "--output-dir",
            path(d.path()),
        ]);
    }
    for f in ["data.csv", "truth.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap()
        );
    }
    let c = TempDir::new().unwrap();
    ok(&[
        "simulate",
        "--seed",
        "12",
        "--n",
        "300",
        "--m",
        "4",
        "--output-dir",
        path(c.path()),
    ]);
    assert_ne!(
        fs::read(a.path().join("data.csv")).unwrap(),
        fs::read(c.path().join("data.csv")).unwrap()
    );
}

#[test]
fn small_simulation_round_trips_through_validation() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "simulate",
        "--seed",
        "3",
        "--n",
        "10",
        "--m",
        "2",
        "--output-dir",
        path(dir.path()),
    ]);
    let bytes = fs::read(dir.path().join("data.csv")).unwrap();
    let raw = RawTable::from_reader(&bytes[..]).unwrap();
    assert_eq!(raw.comments.len(), 1);
    assert!(raw.comments[0].starts_with("simulate n=10 m=2 theta_d=-1 "));
    assert!(raw.comments[0].ends_with("seed=3"));
    let data = validate_dataset(&raw).unwrap();
    assert_eq!(data.n_rows(), 10);
    assert_eq!(data.feature_names(), ["x1", "x2"]);

    let mut rewritten = Vec::new();
    data.write_csv(&mut rewritten, &raw.comments).unwrap();
    assert_eq!(rewritten, bytes);
}

#[test]
fn fit_on_default_data_writes_full_layout_posteriors() {
    let dir = TempDir::new().unwrap();
    let d = path(dir.path());
    ok(&["simulate", "--seed", "7", "--output-dir", d]);
    let data = dir.path().join("data.csv");
    ok(&[
        "fit",
        "--input",
        path(&data),
        "--output-dir",
        d,
        "--seed",
        "7",
        "--steps",
        "20",
    ]);
    for f in ["posterior_y0.txt", "posterior_y1.txt"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        let mu = text.lines().find(|l| l.starts_with("mu = ")).unwrap();
        assert_eq!(mu.split(',').count(), 102, "{f}");
        assert!(text.contains("feature_names = x1,"));
        assert!(text.contains(",x100,A,intercept"));
        assert!(text.contains("# fit seed=7 "));
    }
    let (header, rows) = table_shape(&dir.path().join("elbo_trace.csv"));
    assert_eq!(header, ["step", "elbo_y0", "elbo_y1"]);
    assert_eq!(rows, 20);
}

#[test]
fn refit_with_same_seed_is_identical() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "simulate",
        "--seed",
        "5",
        "--n",
        "200",
        "--m",
        "3",
        "--output-dir",
        path(dir.path()),
    ]);
    let data = dir.path().join("data.csv");
    let runs: Vec<TempDir> = (0..2).map(|_| TempDir::new().unwrap()).collect();
    for r in &runs {
        ok(&[
            "fit",
            "--input",
            path(&data),
            "--output-dir",
            path(r.path()),
            "--seed",
            "9",
            "--steps",
            "200",
        ]);
    }
    for f in ["posterior_y0.txt", "posterior_y1.txt", "elbo_trace.csv"] {
        assert_eq!(
            fs::read(runs[0].path().join(f)).unwrap(),
            fs::read(runs[1].path().join(f)).unwrap()
        );
    }
}

#[test]
fn single_treated_row_fits_with_prior_dominated_warning() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("one.csv");
    let mut csv = String::from("D,A,Y,x1,x2\n1,1,1,0.5,-0.2\n");
    for i in 0..12 {
        csv.push_str(&format!(
            "0,{},{},{},{}\n",
            i % 2,
            (i / 3) % 2,
            i as f64 / 6.0 - 1.0,
            0.1 * i as f64
        ));
    }
    fs::write(&input, csv).unwrap();
    let out = ok(&[
        "fit",
        "--input",
        path(&input),
        "--output-dir",
        path(dir.path()),
        "--steps",
        "100",
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr
        .contains("theta_y1 posterior is prior-dominated: 1 training rows for 4 coefficients"));
    assert!(!stderr.contains("theta_y0"));

    ok(&[
        "assess",
        "--input",
        path(&input),
        "--output-dir",
        path(dir.path()),
        "--draws",
        "5",
    ]);
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("warning: theta_y1 posterior is prior-dominated"));
}

#[test]
fn layout_mismatch_names_both_counts() {
    let small = TempDir::new().unwrap();
    let big = TempDir::new().unwrap();
    ok(&[
        "simulate",
        "--seed",
        "1",
        "--n",
        "100",
        "--m",
        "3",
        "--output-dir",
        path(small.path()),
    ]);
    ok(&[
        "fit",
        "--input",
        path(&small.path().join("data.csv")),
        "--output-dir",
        path(small.path()),
        "--steps",
        "5",
    ]);
    ok(&[
        "simulate",
        "--seed",
        "1",
        "--n",
        "100",
        "--m",
        "100",
        "--output-dir",
        path(big.path()),
    ]);
    let out = pfair(&[
        "assess",
        "--input",
        path(&big.path().join("data.csv")),
        "--posteriors",
        path(small.path()),
        "--output-dir",
        path(big.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("5 coefficients"), "{stderr}");
    assert!(stderr.contains("needs 102"), "{stderr}");
    assert!(!big.path().join("report.txt").exists());
}

#[test]
fn exit_codes_separate_validation_and_io_failures() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "D,A,Y,x1\n1,0,1,0.3\n2,1,0,0.1\n").unwrap();
    let out = pfair(&[
        "fit",
        "--input",
        path(&bad),
        "--output-dir",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains('D') && stderr.contains('2'), "{stderr}");

    let missing = dir.path().join("missing.csv");
    let out = pfair(&[
        "fit",
        "--input",
        path(&missing),
        "--output-dir",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(4));

    // Every row decided D=1: there is no control arm to learn Y(0) from.
    let out = pfair(&[
        "simulate",
        "--seed",
        "1",
        "--n",
        "50",
        "--m",
        "2",
        "--decision-probs",
        "1,1,1,1,1,1,1,1",
        "--output-dir",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // simulate refuses to run without an explicit seed.
    let out = pfair(&["simulate", "--output-dir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_equals_separate_stages() {
    let piped = TempDir::new().unwrap();
    let staged = TempDir::new().unwrap();
    let sim = ["--n", "400", "--m", "5", "--theta-d", "-0.5"];
    let fit = [
        "--steps",
        "300",
        "--mc-samples",
        "4",
        "--lr",
        "0.02",
        "--prior-std",
        "2",
    ];
    let assess = ["--draws", "15", "--format", "csv"];

    let mut args = vec![
        "pipeline",
        "--seed",
        "21",
        "--output-dir",
        path(piped.path()),
    ];
    args.extend(sim.iter().chain(&fit).chain(&assess));
    ok(&args);

    let s = path(staged.path());
    let data = staged.path().join("data.csv");
    let mut args = vec!["simulate", "--seed", "21", "--output-dir", s];
    args.extend(sim);
    ok(&args);
    let mut args = vec![
        "fit",
        "--seed",
        "21",
        "--input",
        path(&data),
        "--output-dir",
        s,
    ];
    args.extend(fit);
    ok(&args);
    let mut args = vec![
        "assess",
        "--seed",
        "21",
        "--input",
        path(&data),
        "--output-dir",
        s,
    ];
    args.extend(assess);
    ok(&args);

    for f in [
        "data.csv",
        "truth.csv",
        "posterior_y0.txt",
        "posterior_y1.txt",
        "elbo_trace.csv",
        "report.csv",
    ] {
        assert_eq!(
            fs::read(piped.path().join(f)).unwrap(),
            fs::read(staged.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    let report = fs::read_to_string(staged.path().join("report.csv")).unwrap();
    assert!(report.contains("# data: simulate n=400 m=5 theta_d=-0.5 "));
    assert!(report.contains("# posterior: fit seed=21 prior_std=2 lr=0.02 steps=300 mc_samples=4"));
}

#[test]
fn default_pipeline_interval_covers_configured_stable_gap() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "pipeline",
        "--seed",
        "7",
        "--format",
        "csv",
        "--output-dir",
        path(dir.path()),
    ]);
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let value = |stat: &str| -> f64 {
        let prefix = format!("delta,stable,,,{stat},");
        report
            .lines()
            .find_map(|l| l.strip_prefix(&prefix))
            .unwrap()
            .parse()
            .unwrap()
    };
    let (lower, upper) = (value("lower95"), value("upper95"));
    assert!(
        lower <= -0.2 && -0.2 <= upper,
        "stable interval [{lower}, {upper}] misses -0.2"
    );
}
