use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mindiv_core::backtest::{make_buckets, read_results_csv, BacktestConfig, ReturnsPanel};
use mindiv_core::experiments::WELL_SPECIFIED;
use mindiv_core::rng::cell_rng;
use mindiv_core::{DivergenceConfig, DivergenceEstimate, DivergenceKind, KernelSpec, Weights};

fn mindiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mindiv")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mindiv(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const GAUSSIAN_CONFIG: &str = r#"
[kernel]
family = "gaussian"
c = 1.0

[target]
family = "gaussian"
m = 0.0
sigma = 1.0
"#;

#[test]
fn identical_samples_have_zero_v_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", GAUSSIAN_CONFIG);
    let xs = write(dir.path(), "xs.csv", "value\n0.3\n-1.2\n0.8\n2.0\n-0.1\n");
    let out = ok(&[
        "--config",
        path_str(&cfg),
        "estimate",
        "--xs",
        path_str(&xs),
        "--ys",
        path_str(&xs),
        "--kind",
        "mmd_two_sample_v",
    ]);
    let est: DivergenceEstimate = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(est.kind, DivergenceKind::MmdTwoSampleV);
    assert_eq!((est.n_samples, est.m), (5, Some(5)));
    assert!(est.value.abs() <= 1e-12, "{}", est.value);
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", GAUSSIAN_CONFIG);
    let absent = dir.path().join("no_such_sample.csv");
    let out = mindiv(&["--config", path_str(&cfg), "estimate", "--xs", path_str(&absent), "--kind", "ksd_v"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_sample.csv"));

    let out = mindiv(&["--config", path_str(&dir.path().join("absent.toml")), "experiment", "fig1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mindiv(&["experiment", "fig9"]).status.code(), Some(2));
    assert_eq!(mindiv(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let xs = write(dir.path(), "xs.csv", "0.1\n0.2\n");
    // no target configured
    assert_eq!(mindiv(&["estimate", "--xs", path_str(&xs), "--kind", "wasserstein"]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.toml", "[kernel]\nfamily = \"gaussian\"\nc = -1.0\n[target]\nfamily = \"uniform\"\n");
    let out = mindiv(&["--config", path_str(&bad), "embed-eval"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergent_embedding_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "[kernel]\nfamily = \"exponential\"\nb = 1.0\n[target]\nfamily = \"gaussian\"\nm = 0.0\nsigma = 1.0\n",
    );
    let xs = write(dir.path(), "xs.csv", "0.1\n0.2\n-0.3\n");
    let out = mindiv(&["--config", path_str(&cfg), "estimate", "--xs", path_str(&xs), "--kind", "mmd_semi_explicit_u"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn estimate_matches_the_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = cell_rng(42, &[1]);
    let rows = WELL_SPECIFIED.gaussian_returns(&mut rng, 500);
    let xs = Weights::from_free(&[0.2]).apply(&rows);
    let text: String = xs.iter().map(|x| format!("{x}\n")).collect();
    let sample = write(dir.path(), "xs.csv", &text);
    let target = WELL_SPECIFIED.gaussian_target();
    let config = format!(
        "seed = 11\n[kernel]\nfamily = \"gaussian\"\nc = 0.14\n[target]\n{}\n[divergence]\nkind = \"mmd_two_sample_u\"\n",
        toml::to_string(&target).unwrap()
    );
    let cfg = write(dir.path(), "run.toml", &config);
    let out = ok(&["--config", path_str(&cfg), "estimate", "--xs", path_str(&sample)]);
    let cli: DivergenceEstimate = serde_json::from_slice(&out.stdout).unwrap();
    let lib = DivergenceConfig::new(DivergenceKind::MmdTwoSampleU, Some(KernelSpec::Gaussian { c: 0.14 }), target)
        .estimate(&xs, None, 11)
        .unwrap();
    assert_eq!(cli.value.to_bits(), lib.value.to_bits());
    assert_eq!(cli, lib);
}

fn csv_rows(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    lines.map(|l| header.iter().cloned().zip(l.split(',').map(str::to_string)).collect()).collect()
}

#[test]
fn embedding_grid_with_oracle_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", GAUSSIAN_CONFIG);
    let out = ok(&["--config", path_str(&cfg), "embed-eval", "--from", "-1", "--to", "1", "--points", "3", "--oracle"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 3);
    let mu0: f64 = rows[1]["mu"].parse().unwrap();
    assert!((mu0 - 0.5f64.sqrt()).abs() < 1e-12);

    let uniform =
        write(dir.path(), "u.toml", "[kernel]\nfamily = \"laplacian\"\nlambda = 1.0\n[target]\nfamily = \"uniform\"\n");
    let out = ok(&["--config", path_str(&uniform), "embed-eval", "--from", "0", "--to", "1", "--points", "3", "--oracle"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    let mid: f64 = rows[1]["mu"].parse().unwrap();
    assert!((mid - 0.7869387).abs() < 1e-7);

    let beta = write(
        dir.path(),
        "b.toml",
        "[kernel]\nfamily = \"matern\"\nsigma0 = 1.0\nsigma = 0.5\np = 1\n[target]\nfamily = \"beta\"\nalpha = 2.0\nbeta = 3.0\n",
    );
    let out = ok(&["--config", path_str(&beta), "embed-eval", "--points", "31", "--oracle"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 31);
    assert_eq!(rows[0]["x"], "-1");
    for r in rows {
        assert!(r["abs_diff"].parse::<f64>().unwrap() <= 1e-9, "{r:?}");
    }

    let gaussian_laplace = write(
        dir.path(),
        "gl.toml",
        "[kernel]\nfamily = \"laplacian\"\nlambda = 1.0\n[target]\nfamily = \"gaussian\"\nm = 0.0\nsigma = 1.0\n",
    );
    assert_eq!(mindiv(&["--config", path_str(&gaussian_laplace), "embed-eval"]).status.code(), Some(2));
}

#[test]
fn fig1_medians_bottom_out_at_the_optimal_weight() {
    let out = ok(&["experiment", "fig1", "--sizes", "5000", "--reps", "15", "--seed", "0"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 3 * 7 * 15);
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        cells.entry((r["estimator"].clone(), r["w1"].clone())).or_default().push(r["value"].parse().unwrap());
    }
    let mut best: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for ((estimator, w1), mut v) in cells {
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        let w1: f64 = w1.parse().unwrap();
        let entry = best.entry(estimator).or_insert((f64::INFINITY, 0.0));
        if median < entry.0 {
            *entry = (median, w1);
        }
    }
    assert_eq!(best.len(), 3);
    for (estimator, (_, w1)) in best {
        assert!((w1 - 0.2).abs() < 1e-12, "{estimator}: argmin {w1}");
    }
}

fn panel_csv(dir: &Path, name: &str, panel: &ReturnsPanel) -> PathBuf {
    let p = dir.join(name);
    panel.write_csv(std::fs::File::create(&p).unwrap()).unwrap();
    p
}

#[test]
fn optimize_recovers_the_well_specified_weight() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = cell_rng(5, &[0]);
    let panel = ReturnsPanel::synthetic(WELL_SPECIFIED.gaussian_returns(&mut rng, 5000)).unwrap();
    let returns = panel_csv(dir.path(), "returns.csv", &panel);
    let config = format!(
        "[kernel]\nfamily = \"gaussian\"\nc = 1.0\n[target]\n{}\n[divergence]\nkind = \"mmd_semi_explicit_u\"\n[optimize]\nbandwidth = \"sample_sd\"\n",
        toml::to_string(&WELL_SPECIFIED.gaussian_target()).unwrap()
    );
    let cfg = write(dir.path(), "run.toml", &config);
    let trace = dir.path().join("trace.csv");
    let out = ok(&["--config", path_str(&cfg), "optimize", "--returns", path_str(&returns), "--trace", path_str(&trace)]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let w1 = report["weights"][0].as_f64().unwrap();
    assert!((w1 - 0.2).abs() <= 0.02, "{report}");
    let iterations = report["iterations"].as_u64().unwrap() as usize;
    let trace_lines = std::fs::read_to_string(&trace).unwrap().lines().count();
    assert_eq!(trace_lines, iterations + 1);
}

#[test]
fn backtest_outputs_are_consistent_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = cell_rng(8, &[0]);
    let mut values = WELL_SPECIFIED.gaussian_returns(&mut rng, 300 + 60 * 3);
    for row in &mut values {
        row.push(0.5 * (row[0] + row[1]) + 0.01);
    }
    let panel = ReturnsPanel::synthetic(values).unwrap();
    let returns = panel_csv(dir.path(), "returns.csv", &panel);
    let cfg = write(
        dir.path(),
        "run.toml",
        "seed = 4\n[backtest]\nestimation_window = 300\nevaluation_window = 60\n[cem]\nsamples = 50\niterations = 10\n",
    );
    let run = |tag: &str| {
        let out = dir.path().join(format!("results_{tag}.csv"));
        let winners = dir.path().join(format!("winners_{tag}.json"));
        ok(&[
            "--config",
            path_str(&cfg),
            "--threads",
            "1",
            "--out",
            path_str(&out),
            "backtest",
            "--returns",
            path_str(&returns),
            "--winners",
            path_str(&winners),
        ]);
        (std::fs::read(out).unwrap(), std::fs::read(winners).unwrap())
    };
    let (results, winners) = run("a");
    assert_eq!(run("b"), (results.clone(), winners.clone()));

    let buckets = make_buckets(panel.len(), 300, 60).unwrap().len();
    let report: serde_json::Value = serde_json::from_slice(&winners).unwrap();
    assert_eq!(report["buckets"].as_u64().unwrap() as usize, buckets);
    let parsed = read_results_csv(results.as_slice()).unwrap();
    let strategies = BacktestConfig::default().strategies.len();
    assert_eq!(parsed.len(), buckets * strategies);
    let wins: u64 = report["min_kurtosis"]["all"].as_array().unwrap().iter().map(|w| w["wins"].as_u64().unwrap()).sum();
    assert!(wins as usize >= buckets);
}
