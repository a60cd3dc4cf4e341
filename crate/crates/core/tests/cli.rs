use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use detflow::cli::{self, Experiment, MethodKind, Overrides};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn detflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detflow")).args(args).output().expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"))
}

fn experiment(config: &str, overrides: Overrides) -> Experiment {
    Experiment::load(&configs().join(config), &overrides).unwrap()
}

fn out_to(dir: &Path) -> Overrides {
    Overrides { out: Some(dir.to_path_buf()), ..Overrides::default() }
}

#[test]
fn run_writes_jc_csv_with_flow_reversal() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("jc.toml");
    let out = detflow(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--method",
        "det-euler",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("N_eff = 2"));

    let (header, rows) = read_csv(&dir.path().join("jc_det-euler.csv"));
    assert_eq!(header, ["t", "p_1", "p_2", "rho_ee", "abs_rho_eg", "rate_gamma"]);
    assert_eq!(rows.len(), 1001);
    let (p1, p2, g) = (column(&header, "p_1"), column(&header, "p_2"), column(&header, "rate_gamma"));
    let mut negative_steps = 0;
    for pair in rows.windows(2) {
        if pair[0][g] < 0.0 {
            negative_steps += 1;
            assert!(pair[1][p1] >= pair[0][p1] && pair[1][p2] <= pair[0][p2], "flow not reversed at t = {}", pair[0][0]);
        } else if pair[0][g] > 0.0 {
            assert!(pair[1][p1] <= pair[0][p1], "flow reversed with positive rate at t = {}", pair[0][0]);
        }
    }
    assert!(negative_steps > 100);
    assert!(dir.path().join("jc.meta.toml").exists());
}

#[test]
fn two_band_population_relaxes_to_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment("two-band.toml", Overrides { methods: vec!["det-euler".into()], ..out_to(dir.path()) });
    cli::run_experiment(&exp).unwrap();
    let (header, rows) = read_csv(&dir.path().join("two-band_det-euler.csv"));
    assert_eq!(header, ["t", "P1", "P2", "trace_rho1", "trace_rho2"]);
    let last = rows.last().unwrap();
    assert!((last[1] - 0.5).abs() < 1e-4, "P1(20) = {}", last[1]);
    assert!((rows[0][1] - 1.0).abs() < 1e-15);
}

#[test]
fn non_positive_dt_is_a_validation_error_without_files() {
    for dt in ["0", "-1"] {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("out");
        let config = configs().join("jc.toml");
        let out = detflow(&["run", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--dt", dt]);
        assert_eq!(out.status.code(), Some(1), "dt = {dt}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));
        assert!(!out_dir.exists());
    }
}

#[test]
fn missing_config_is_an_io_error() {
    let out = detflow(&["run", "--config", "/nonexistent/detflow.toml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sidecar_reruns_the_same_experiment() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let exp = experiment("jc.toml", Overrides { seed: Some(5), ..out_to(first.path()) });
    cli::run_experiment(&exp).unwrap();

    let sidecar = first.path().join("jc.meta.toml");
    let rerun = Experiment::load(&sidecar, &out_to(second.path())).unwrap();
    assert_eq!(rerun.config.stochastic.seed, 5);
    cli::run_experiment(&rerun).unwrap();
    for m in MethodKind::ALL.iter().filter(|m| **m != MethodKind::McUnravel) {
        let name = format!("jc_{m}.csv");
        assert_eq!(
            std::fs::read(first.path().join(&name)).unwrap(),
            std::fs::read(second.path().join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn three_level_config_reads_its_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment("three-level.toml", out_to(dir.path()));
    let outcome = cli::run_experiment(&exp).unwrap();
    assert_eq!(outcome.n_eff, 3);
    let (header, rows) = read_csv(&dir.path().join("three-level_det-euler.csv"));
    let g2 = column(&header, "rate_gamma_2");
    for row in &rows {
        assert!((row[g2] - 0.5 * (3.0 * row[0]).cos()).abs() < 1e-4, "t = {}", row[0]);
    }
}

#[test]
fn compare_needs_two_methods() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("jc.toml");
    let out = detflow(&[
        "compare",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--method",
        "det-euler",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn deterministic_deviation_is_dominated_by_nmqj() {
    for seed in 0..10 {
        let exp = experiment(
            "jc.toml",
            Overrides { seed: Some(seed), methods: vec!["det-euler".into(), "nmqj".into(), "oracle".into()], ..Overrides::default() },
        );
        let (header, rows, _) = cli::comparison_table(&exp).unwrap();
        let (det, nmqj) = (column(&header, "det-euler_abs_dev"), column(&header, "nmqj_abs_dev"));
        let mean = |c: usize| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
        assert!(mean(det) < mean(nmqj), "seed {seed}: det {} nmqj {}", mean(det), mean(nmqj));
    }
}

#[test]
fn compare_csv_has_rk4_below_euler() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("jc.toml");
    let out = detflow(&[
        "compare",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--method",
        "det-euler",
        "--method",
        "det-rk4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("jc_compare.csv"));
    assert_eq!(
        header,
        ["t", "det-euler_rho_ee", "det-rk4_rho_ee", "oracle_rho_ee", "det-euler_abs_dev", "det-rk4_abs_dev"]
    );
    let (euler, rk4) = (column(&header, "det-euler_abs_dev"), column(&header, "det-rk4_abs_dev"));
    for row in rows.iter().filter(|r| r[0] > 10.0 * 0.005) {
        assert!(row[rk4] <= row[euler], "t = {}", row[0]);
    }
}

#[test]
fn bench_reports_two_ensemble_states_for_jc() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment("jc.toml", Overrides { methods: vec!["det-euler".into(), "det-rk4".into()], ..out_to(dir.path()) });
    let (report, outcome) = cli::bench(&exp).unwrap();
    let row = report.row(MethodKind::DetEuler).unwrap();
    assert_eq!(row.n_eff, 2);
    assert_eq!(row.steps, 1000);
    assert!(row.max_oracle_deviation < 5e-3);
    assert_eq!(outcome.n_eff, 2);
    let (header, rows) = read_csv_lossy(&dir.path().join("jc_bench.csv"));
    assert_eq!(header[0], "method");
    assert_eq!(rows.len(), 2);
}

fn read_csv_lossy(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(str::to_string).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn bench_without_particles_skips_stochastic_methods() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("jc.toml");
    let text = std::fs::read_to_string(&config).unwrap().replace("n = 10000", "n = 0");
    let path = dir.path().join("jc-no-particles.toml");
    std::fs::write(&path, text).unwrap();
    let out = detflow(&["bench", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("nmqj skipped"), "{stdout}");
    assert!(stdout.contains("N_eff = 2"));
    let (_, rows) = read_csv_lossy(&dir.path().join("jc_bench.csv"));
    assert!(rows.iter().all(|r| r[0] != "nmqj"));

    // a plain run cannot skip a requested method
    let run_dir = dir.path().join("run");
    let out = detflow(&["run", "--config", path.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!run_dir.exists());
}
