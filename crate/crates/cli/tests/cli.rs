use std::process::{Command, Output};

use qwsearch::output::data_rows;

fn qwsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qwsearch"))
        .args(args)
        .env_remove("QWSEARCH_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = qwsearch(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    let idx = header
        .split(',')
        .position(|c| c == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    data_rows(csv).map(|r| r[idx].parse().unwrap()).collect()
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn theory_rows() {
    let csv = stdout(&["theory", "--n", "4,100"]);
    assert!(csv.contains("N,E0_exact,E1_exact,gap,overlap_lambda0,one_minus_psucc_pred"));
    let gaps = column(&csv, "gap");
    assert!((gaps[1] - 0.2).abs() < 1e-5, "gap {}", gaps[1]);
    let rows: Vec<_> = data_rows(&csv).map(|r| r.last().unwrap().to_string()).collect();
    assert_eq!(rows, ["pass", "pass"]);
}

#[test]
fn malformed_order_is_a_usage_error() {
    let out = qwsearch(&["theory", "--n", "ten"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--n"));
}

#[test]
fn exit_codes_distinguish_failures() {
    let config = qwsearch(&["trace", "--n", "5,6", "--trajectories", "2"]);
    assert_eq!(config.status.code(), Some(2));

    let invalid = qwsearch(&["trace", "--nu", "1.5", "--trajectories", "2"]);
    assert_eq!(invalid.status.code(), Some(2));

    let io = qwsearch(&["trace", "--graph", "/definitely/not/here.txt"]);
    assert_eq!(io.status.code(), Some(4));

    let dir = tempfile::tempdir().unwrap();
    let unwritable = dir.path().join("missing").join("out.csv");
    let io = qwsearch(&[
        "trace",
        "--trajectories",
        "2",
        "--grid-samples",
        "4",
        "--out",
        unwritable.to_str().unwrap(),
    ]);
    assert_eq!(io.status.code(), Some(4));

    // Overflowing couplings make the Hamiltonian non-finite.
    let numerical = qwsearch(&[
        "trace",
        "--gamma",
        "1e308",
        "--trajectories",
        "2",
        "--grid-samples",
        "4",
    ]);
    assert_eq!(numerical.status.code(), Some(3));
}

#[test]
fn edge_list_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    std::fs::write(&path, "3 0\n0 1\n1 x\n").unwrap();
    let out = qwsearch(&["trace", "--graph", path.to_str().unwrap(), "--gamma", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn edge_list_graph_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.txt");
    std::fs::write(&path, "# a path on four nodes\n4 3\n0 1\n1 2\n2 3\n").unwrap();
    let csv = stdout(&[
        "sweep",
        "--graph",
        path.to_str().unwrap(),
        "--gamma",
        "0.5",
        "--mu",
        "1",
        "--nu",
        "0.3",
        "--trajectories",
        "20",
        "--grid-samples",
        "32",
    ]);
    assert_eq!(column(&csv, "N"), [4.0]);
    // A generic graph has no default coupling.
    let out = qwsearch(&["trace", "--graph", path.to_str().unwrap(), "--trajectories", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_strength_trace_matches_noiseless_reference() {
    let csv = stdout(&["trace", "--n", "8", "--mu", "1", "--nu", "0", "--grid-samples", "64"]);
    assert_eq!(column(&csv, "p_mean"), column(&csv, "p_noiseless"));
    assert!(column(&csv, "p_stderr").iter().all(|&s| s == 0.0));
}

#[test]
fn output_is_reproducible_and_records_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_qwsearch"))
            .args([
                "trace",
                "--n",
                "6",
                "--mu",
                "1",
                "--nu",
                "0.5",
                "--trajectories",
                "70",
                "--seed",
                "9",
            ])
            .args(["--grid-samples", "50", "--out", path.to_str().unwrap()])
            .env("QWSEARCH_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(path).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "3");
    assert_eq!(a, b);
    assert!(a.contains("# seed = 9\n"));
    assert!(a.contains("# trajectories = 70\n"));
    assert!(a.contains("t,p_mean,p_stderr,p_noiseless\n"));
    assert_eq!(data_rows(&a).count(), 50);
}

#[test]
fn slow_noise_complete_graph_peaks_near_sixty_percent() {
    let csv = stdout(&[
        "trace",
        "--n",
        "10",
        "--mu",
        "0.01",
        "--nu",
        "1",
        "--trajectories",
        "2000",
    ]);
    let peak = max(&column(&csv, "p_mean"));
    // ±0.05 is over 4σ at this sample size.
    assert!((peak - 0.6).abs() < 0.05, "peak {peak}");
}

#[test]
fn star_external_fast_noise_beats_slow_noise() {
    let peak = |mu: &str| {
        let csv = stdout(&[
            "trace",
            "--graph",
            "star-external",
            "--n",
            "10",
            "--mu",
            mu,
            "--nu",
            "0.2",
            "--trajectories",
            "400",
        ]);
        (max(&column(&csv, "p_mean")), max(&column(&csv, "p_noiseless")))
    };
    let (fast, noiseless) = peak("10");
    let (slow, _) = peak("0.01");
    assert!(
        noiseless > fast && fast > slow,
        "noiseless {noiseless}, fast {fast}, slow {slow}"
    );
}

#[test]
fn rate_sweep_improves_with_faster_noise() {
    let csv = stdout(&[
        "sweep",
        "--n",
        "10",
        "--mu",
        "0.01,0.1,1,10",
        "--nu",
        "0.5",
        "--trajectories",
        "300",
        "--grid-samples",
        "512",
    ]);
    let p = column(&csv, "p_succ");
    let se = column(&csv, "p_stderr");
    assert_eq!(p.len(), 4);
    for k in 1..4 {
        let sigma = se[k].hypot(se[k - 1]);
        assert!(p[k] >= p[k - 1] - 2.0 * sigma, "p_succ {p:?} ± {se:?}");
    }
    assert!(p[3] - p[0] > 0.05, "{p:?}");
}

#[test]
fn order_sweeps_on_star_graphs() {
    let sweep = |graph: &str| {
        let csv = stdout(&[
            "sweep",
            "--graph",
            graph,
            "--n",
            "8,16,32",
            "--mu",
            "0.01",
            "--nu",
            "1",
            "--trajectories",
            "400",
            "--grid-samples",
            "512",
        ]);
        column(&csv, "p_succ")
    };
    let central = sweep("star-central");
    let spread = max(&central) - central.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.08, "central {central:?}");
    let external = sweep("star-external");
    assert!(external.windows(2).all(|w| w[1] < w[0]), "external {external:?}");
}

#[test]
fn rtn_check_reports_exponential_correlations() {
    let text = stdout(&["rtn-check", "--mu", "1", "--trajectories", "100000"]);
    let row = |tau: &str| -> Vec<f64> {
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(tau)).unwrap();
        line.split_whitespace().map(|x| x.parse().unwrap()).collect()
    };
    assert_eq!(row("0")[1], 1.0);
    let half = row("0.5");
    assert!((half[1] - 0.3679).abs() <= 3.0 / (1e5f64).sqrt(), "{half:?}");
    assert!(text.contains("poisson chi-square"));

    let frozen = stdout(&["rtn-check", "--mu", "0", "--trajectories", "2000"]);
    let estimates: Vec<f64> = frozen
        .lines()
        .skip_while(|l| !l.trim_start().starts_with("tau"))
        .skip(1)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(!estimates.is_empty() && estimates.iter().all(|&c| c == 1.0));

    let out = qwsearch(&["rtn-check", "--trajectories", "10"]);
    assert_eq!(out.status.code(), Some(2));
}
