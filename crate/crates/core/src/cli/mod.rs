//! Config-driven runner behind the `detflow` binary: `run` writes one CSV
//! per method plus a metadata sidecar, `compare` aligns methods against the
//! dense oracle, `bench` times them.
//!
//! Every run is computed in memory before anything touches the output
//! directory, so a config that fails validation or a solver that fails
//! numerically leaves no partial files behind.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::detsolver::{self, Method, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::oracle;
use crate::stochastic::{self, StochasticConfig};

pub use config::{Experiment, MethodKind, Overrides, RunConfig};

/// Runs one method of an experiment.
pub fn execute(exp: &Experiment, method: MethodKind) -> Result<Trajectory> {
    let s = &exp.config.solver;
    let st = &exp.config.stochastic;
    let det = |m: Method| {
        let mut cfg = SolverConfig::new(s.dt, s.t_max).with_method(m).with_stride(s.record_stride);
        cfg.renormalize_each_step = s.renormalize;
        detsolver::run(&exp.model, &exp.initial, &cfg, &[])
    };
    let particles = || StochasticConfig::new(st.n, st.seed, s.dt, s.t_max).with_stride(s.record_stride);
    if method.is_stochastic() && st.n == 0 {
        return Err(Error::Config(format!("{method} needs stochastic.n >= 1")));
    }
    match method {
        MethodKind::DetEuler => det(Method::Euler),
        MethodKind::DetRk4 => det(Method::Rk4),
        MethodKind::Nmqj => match &exp.model {
            Model::TimeLocal(m) => stochastic::nmqj_run(m, &exp.initial, &particles()),
            Model::Generalized(_) => Err(Error::Config("nmqj needs a time-local model".into())),
        },
        MethodKind::McUnravel => match &exp.model {
            Model::Generalized(m) => stochastic::mc_unravel_run(m, &exp.initial, &particles()),
            Model::TimeLocal(m) => {
                let g = m.to_generalized(s.t_max, s.dt)?;
                stochastic::mc_unravel_run(&g, &exp.initial, &particles())
            }
        },
        MethodKind::Oracle => oracle::reference_for(&exp.model, &exp.initial, s.dt, s.t_max, s.record_stride, &[]),
    }
}

/// Formats `x` with `digits` significant digits in scientific notation.
pub fn format_number(x: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), x)
}

/// Column names and rows of the per-method time series.
///
/// Time-local models: `t, p_1..p_Neff, rho_ee, abs_rho_eg, rate_gamma`
/// (extra channels add `rate_gamma_2`, ...). Block models:
/// `t, P1, P2, trace_rho1, trace_rho2, ...`.
pub fn series_table(model: &Model, traj: &Trajectory) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut header = vec!["t".to_string()];
    let mut rows = Vec::with_capacity(traj.samples.len());
    match model {
        Model::TimeLocal(m) => {
            header.extend((1..=traj.n_eff).map(|i| format!("p_{i}")));
            header.extend(["rho_ee", "abs_rho_eg", "rate_gamma"].map(String::from));
            header.extend((2..=m.channels().len()).map(|k| format!("rate_gamma_{k}")));
            for s in &traj.samples {
                let mut row = vec![s.t];
                row.extend(&s.probabilities);
                row.push(s.rho.entry(0, 0).re);
                row.push(s.rho.entry(0, 1).norm());
                row.extend(&s.weights);
                rows.push(row);
            }
        }
        Model::Generalized(g) => {
            header.extend(["P1", "P2"].map(String::from));
            header.extend((1..=g.block_count()).map(|i| format!("trace_rho{i}")));
            for s in &traj.samples {
                let mut row = vec![s.t, s.rho.entry(0, 0).re, s.rho.entry(1, 1).re];
                row.extend(&s.block_traces);
                rows.push(row);
            }
        }
    }
    (header, rows)
}

/// Name of the excited-population column for this model kind.
fn population_label(model: &Model) -> &'static str {
    match model {
        Model::TimeLocal(_) => "rho_ee",
        Model::Generalized(_) => "P1",
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<f64>], digits: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format_number(*x, digits)))?;
    }
    w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

fn write_files(dir: &Path, files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (path, bytes) in files {
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Files produced by a command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub n_eff: usize,
    pub warnings: Vec<String>,
}

fn n_eff_of(trajs: &[Trajectory]) -> usize {
    trajs.iter().map(|t| t.n_eff).max().unwrap_or(0)
}

fn sidecar_file(exp: &Experiment, command: &str, n_eff: usize) -> Result<(PathBuf, Vec<u8>)> {
    let text = exp.sidecar(&[("command", command.into()), ("n_eff", (n_eff as i64).into())])?;
    let path = exp.out_dir.join(format!("{}.meta.toml", exp.config.output.prefix));
    Ok((path, text.into_bytes()))
}

/// Runs every configured method and writes `<prefix>_<method>.csv` for
/// each, plus `<prefix>.meta.toml`.
pub fn run_experiment(exp: &Experiment) -> Result<Outcome> {
    let prefix = &exp.config.output.prefix;
    let digits = exp.config.output.precision;
    let mut trajs = Vec::with_capacity(exp.methods.len());
    for &m in &exp.methods {
        log::info!("running {m}");
        trajs.push(execute(exp, m)?);
    }
    let mut files = Vec::new();
    for (m, traj) in exp.methods.iter().zip(&trajs) {
        let (header, rows) = series_table(&exp.model, traj);
        files.push((exp.out_dir.join(format!("{prefix}_{m}.csv")), csv_bytes(&header, &rows, digits)?));
    }
    let n_eff = n_eff_of(&trajs);
    files.push(sidecar_file(exp, "run", n_eff)?);
    write_files(&exp.out_dir, &files)?;
    Ok(Outcome {
        files: files.into_iter().map(|(p, _)| p).collect(),
        n_eff,
        warnings: trajs.into_iter().flat_map(|t| t.warnings).collect(),
    })
}

/// Header, rows, and the solver trajectories behind them.
pub type ComparisonTable = (Vec<String>, Vec<Vec<f64>>, Vec<Trajectory>);

/// Aligned comparison table: `t`, each method's excited population, the
/// oracle column and each method's absolute deviation from it.
pub fn comparison_table(exp: &Experiment) -> Result<ComparisonTable> {
    let methods: Vec<MethodKind> = exp.methods.iter().copied().filter(|m| *m != MethodKind::Oracle).collect();
    if exp.methods.len() < 2 || methods.is_empty() {
        return Err(Error::Config(format!(
            "compare needs at least two methods, one of them a solver (got {})",
            exp.methods.len()
        )));
    }
    let reference = execute(exp, MethodKind::Oracle)?;
    let mut trajs = Vec::with_capacity(methods.len());
    for &m in &methods {
        let t = execute(exp, m)?;
        if t.samples.len() != reference.samples.len() {
            return Err(Error::Invalid(format!("{m} produced {} samples, oracle {}", t.samples.len(), reference.samples.len())));
        }
        trajs.push(t);
    }
    let label = population_label(&exp.model);
    let mut header = vec!["t".to_string()];
    header.extend(methods.iter().map(|m| format!("{m}_{label}")));
    header.push(format!("oracle_{label}"));
    header.extend(methods.iter().map(|m| format!("{m}_abs_dev")));

    let rows = (0..reference.samples.len())
        .map(|i| {
            let exact = reference.samples[i].rho.entry(0, 0).re;
            let values: Vec<f64> = trajs.iter().map(|t| t.samples[i].rho.entry(0, 0).re).collect();
            let mut row = vec![trajs[0].samples[i].t];
            row.extend(&values);
            row.push(exact);
            row.extend(values.iter().map(|v| (v - exact).abs()));
            row
        })
        .collect();
    Ok((header, rows, trajs))
}

/// Writes `<prefix>_compare.csv` and the sidecar.
pub fn compare(exp: &Experiment) -> Result<Outcome> {
    let (header, rows, trajs) = comparison_table(exp)?;
    let path = exp.out_dir.join(format!("{}_compare.csv", exp.config.output.prefix));
    let n_eff = n_eff_of(&trajs);
    let files = vec![
        (path, csv_bytes(&header, &rows, exp.config.output.precision)?),
        sidecar_file(exp, "compare", n_eff)?,
    ];
    write_files(&exp.out_dir, &files)?;
    Ok(Outcome {
        files: files.into_iter().map(|(p, _)| p).collect(),
        n_eff,
        warnings: trajs.into_iter().flat_map(|t| t.warnings).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub method: MethodKind,
    pub wall_seconds: f64,
    pub steps: usize,
    pub steps_per_second: f64,
    pub peak_memory_bytes: usize,
    pub max_oracle_deviation: f64,
    pub n_eff: usize,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub notes: Vec<String>,
}

impl BenchReport {
    pub fn row(&self, method: MethodKind) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>12} {:>10} {:>14} {:>12} {:>14} {:>6}",
            "method", "wall [s]", "steps", "steps/s", "memory [B]", "max |dev|", "N_eff"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>12.6e} {:>10} {:>14.4e} {:>12} {:>14.6e} {:>6}",
                r.method.name(),
                r.wall_seconds,
                r.steps,
                r.steps_per_second,
                r.peak_memory_bytes,
                r.max_oracle_deviation,
                r.n_eff
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "wall_seconds",
            "steps",
            "steps_per_second",
            "peak_memory_bytes",
            "max_oracle_deviation",
            "n_eff",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                format_number(r.wall_seconds, 6),
                r.steps.to_string(),
                format_number(r.steps_per_second, 6),
                r.peak_memory_bytes.to_string(),
                format_number(r.max_oracle_deviation, 6),
                r.n_eff.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
    }
}

/// Rough resident size of the solver state and the recorded samples.
fn memory_estimate(method: MethodKind, traj: &Trajectory, dim: usize, blocks: usize) -> usize {
    const C: usize = 16;
    const F: usize = 8;
    let per_sample = traj
        .samples
        .first()
        .map(|s| dim * dim * C + (s.probabilities.len() + s.block_traces.len() + s.weights.len() + 4) * F)
        .unwrap_or(0);
    let samples = traj.samples.len() * per_sample;
    let working = match method {
        // states, RK4 stages, probabilities and rate table
        MethodKind::DetEuler | MethodKind::DetRk4 => traj.n_eff * (5 * dim * C + 6 * F),
        // states plus two occupancy vectors and candidate lists
        MethodKind::Nmqj | MethodKind::McUnravel => traj.n_eff * (2 * dim * C + 4 * F),
        // density blocks and four RK4 stages
        MethodKind::Oracle => 6 * blocks * dim * dim * C,
    };
    samples + working
}

/// Times each configured method after one untimed warm-up run.
pub fn bench_report(exp: &Experiment) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    let reference = execute(exp, MethodKind::Oracle)?;
    for &m in &exp.methods {
        if m.is_stochastic() && exp.config.stochastic.n == 0 {
            report.notes.push(format!("{m} skipped: stochastic.n = 0"));
            continue;
        }
        execute(exp, m)?;
        let start = Instant::now();
        let traj = execute(exp, m)?;
        let wall = start.elapsed().as_secs_f64().max(1e-9);
        let deviation = traj
            .samples
            .iter()
            .zip(&reference.samples)
            .map(|(a, b)| (a.rho.entry(0, 0).re - b.rho.entry(0, 0).re).abs())
            .fold(0.0, f64::max);
        report.rows.push(BenchRow {
            method: m,
            wall_seconds: wall,
            steps: traj.steps,
            steps_per_second: traj.steps as f64 / wall,
            peak_memory_bytes: memory_estimate(m, &traj, exp.model.dim(), exp.model.block_count()),
            max_oracle_deviation: deviation,
            n_eff: traj.n_eff,
        });
    }
    Ok(report)
}

/// Benchmarks and writes `<prefix>_bench.csv`; returns the report for
/// printing.
pub fn bench(exp: &Experiment) -> Result<(BenchReport, Outcome)> {
    let report = bench_report(exp)?;
    let path = exp.out_dir.join(format!("{}_bench.csv", exp.config.output.prefix));
    let n_eff = report.rows.iter().map(|r| r.n_eff).max().unwrap_or(0);
    let files = vec![(path, report.to_csv()?), sidecar_file(exp, "bench", n_eff)?];
    write_files(&exp.out_dir, &files)?;
    let outcome = Outcome {
        files: files.into_iter().map(|(p, _)| p).collect(),
        n_eff,
        warnings: Vec::new(),
    };
    Ok((report, outcome))
}
