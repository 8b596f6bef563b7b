//! Running an experiment and writing its outputs.
//!
//! Outputs in the target directory, for an experiment named `NAME`:
//!
//! - `NAME.csv`: one row per sweep value, backend and metric, columns
//!   `experiment,sweep_value,backend,metric,value,ci_halfwidth,seed,wall_time_s,error`.
//!   `ci_halfwidth` is empty for analytic rows, `seed` is empty for analytic
//!   rows, and `wall_time_s` is empty unless timing was requested.
//! - `NAME.manifest.json`: the resolved config and the seed.
//! - `NAME.METRIC.BACKEND.dat`: `# metric: METRIC` followed by `x y [ci]` rows.

use crate::config::{apply_sweep, Backend, ExperimentKind, ExperimentOptions, ExperimentSpec, Manifest};
use mimo_harq::analytic::Analytic;
use mimo_harq::delay::DelayModel;
use mimo_harq::montecarlo::{
    estimate_coverage, estimate_mtd, estimate_rcc, simulate_doppler_mtd, simulate_short_packet_mtd, MtdEstimate,
    SimConfig,
};
use mimo_harq::optimizer::{DelayBackend, DesignGrid, EstResult, Optimizer};
use mimo_harq::{Scheme, SystemParams};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub sweep_value: f64,
    pub backend: Backend,
    pub metric: String,
    pub value: Option<f64>,
    pub ci_halfwidth: Option<f64>,
    pub seed: Option<u64>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

type Value = Result<(f64, Option<f64>), String>;

fn analytic(v: Result<f64, impl ToString>) -> Value {
    v.map(|x| (x, None)).map_err(|e| e.to_string())
}

fn mtd(v: &MtdEstimate) -> Value {
    Ok((v.delay.value, v.delay.ci_halfwidth))
}

/// Expands one failure to every metric of a job.
fn all_failed(metrics: &[&str], e: impl ToString) -> Vec<(String, Value)> {
    let e = e.to_string();
    metrics.iter().map(|m| (m.to_string(), Err(e.clone()))).collect()
}

fn named(pairs: Vec<(&str, Value)>) -> Vec<(String, Value)> {
    pairs.into_iter().map(|(m, v)| (m.to_string(), v)).collect()
}

fn est_metrics(suffix: &str, r: &EstResult) -> Vec<(String, Value)> {
    vec![
        (format!("est_{suffix}"), Ok((r.est, None))),
        (format!("streams_{suffix}"), Ok((r.argmax.streams as f64, None))),
        (format!("rate_{suffix}"), Ok((r.argmax.rate_threshold, None))),
        (format!("activity_{suffix}"), Ok((r.argmax.activity, None))),
    ]
}

fn optimizer(backend: Backend, options: &ExperimentOptions, sim: &SimConfig) -> Optimizer {
    Optimizer::new(match backend {
        Backend::Analytic => DelayBackend::Analytic(DelayModel::with_options(options.delay)),
        Backend::MonteCarlo => DelayBackend::MonteCarlo(sim.clone()),
    })
}

fn evaluate(
    kind: ExperimentKind,
    backend: Backend,
    p: &SystemParams,
    options: &ExperimentOptions,
    sim: &SimConfig,
) -> Vec<(String, Value)> {
    let t = p.block_length;
    let r = p.rate_threshold;
    let model = DelayModel::with_options(options.delay);
    match (kind, backend) {
        (ExperimentKind::RccVsT, Backend::Analytic) => {
            let a = Analytic::default().with_coupling(sim.interferer_activity);
            match a.rcc_for(p, Scheme::Bir) {
                Ok(x) => named(vec![("block_rcc", Ok((x.block_rcc, None))), ("slot_rcc", Ok((x.slot_rcc, None)))]),
                Err(e) => all_failed(&["block_rcc", "slot_rcc"], e),
            }
        }
        (ExperimentKind::RccVsT, Backend::MonteCarlo) => match estimate_rcc(p, sim, Scheme::Bir) {
            Ok(x) => named(vec![
                ("block_rcc", Ok((x.rcc.block_rcc, None))),
                ("slot_rcc", Ok((x.rcc.slot_rcc, None))),
            ]),
            Err(e) => all_failed(&["block_rcc", "slot_rcc"], e),
        },
        (ExperimentKind::CoverageVsT, Backend::Analytic) => {
            let a = Analytic::default().with_coupling(sim.interferer_activity);
            named(vec![("coverage", analytic(a.coverage_normal(p, r)))])
        }
        (ExperimentKind::CoverageVsT, Backend::MonteCarlo) => named(vec![(
            "coverage",
            estimate_coverage(p, sim, Scheme::Bir, r, t)
                .map(|c| (c.mean, Some(c.ci_halfwidth)))
                .map_err(|e| e.to_string()),
        )]),
        (ExperimentKind::MtdVsS | ExperimentKind::NoiselessCheck, Backend::Analytic) => named(vec![
            ("mtd_rr", analytic(model.mtd_rr(r, p).map(|d| d.value))),
            ("mtd_bir", analytic(model.mtd_bir(r, t, p).map(|d| d.value))),
        ]),
        (ExperimentKind::MtdVsS | ExperimentKind::NoiselessCheck, Backend::MonteCarlo) => {
            let mut out = Vec::new();
            for (scheme, window) in [(Scheme::Rr, 1), (Scheme::Bir, t)] {
                let name = scheme.name();
                match estimate_mtd(p, sim, scheme, r, window) {
                    Ok(e) => {
                        out.push((format!("mtd_{name}"), mtd(&e)));
                        out.push((format!("censored_fraction_{name}"), Ok((e.censored_fraction, None))));
                    }
                    Err(e) => out.extend(all_failed(&[&format!("mtd_{name}"), &format!("censored_fraction_{name}")], e)),
                }
            }
            out
        }
        (ExperimentKind::MtdBoundsVsT, Backend::Analytic) => {
            let mut out = named(vec![("mtd_bir", analytic(model.mtd_bir(r, t, p).map(|d| d.value)))]);
            match model.mtd_sandwich(r, t, p) {
                Ok((lo, hi)) => out.extend(named(vec![
                    ("lower_bound", Ok((lo.value, None))),
                    ("upper_bound", Ok((hi.value, None))),
                ])),
                Err(e) => out.extend(all_failed(&["lower_bound", "upper_bound"], e)),
            }
            out
        }
        (ExperimentKind::MtdBoundsVsT, Backend::MonteCarlo) => named(vec![(
            "mtd_bir",
            estimate_mtd(p, sim, Scheme::Bir, r, t)
                .map_err(|e| e.to_string())
                .and_then(|e| mtd(&e)),
        )]),
        (ExperimentKind::DopplerSweep, Backend::MonteCarlo) => {
            let mut out = Vec::new();
            for scheme in [Scheme::Rr, Scheme::Bir] {
                let v = simulate_doppler_mtd(p, sim, &options.doppler, scheme, r, t)
                    .map_err(|e| e.to_string())
                    .and_then(|e| mtd(&e));
                out.push((format!("mtd_{}", scheme.name()), v));
            }
            out
        }
        (ExperimentKind::ShortPacketSweep, Backend::MonteCarlo) => {
            match simulate_short_packet_mtd(p, sim, &options.short_packet) {
                Ok(x) => named(vec![("mtd_short", mtd(&x.short)), ("mtd_long", mtd(&x.long))]),
                Err(e) => all_failed(&["mtd_short", "mtd_long"], e),
            }
        }
        (ExperimentKind::EstVsLambda, _) => {
            let opt = optimizer(backend, options, sim);
            let grid = options.grid.clone().unwrap_or_else(|| DesignGrid::for_params(p));
            let mut out = Vec::new();
            for (scheme, window) in [(Scheme::Rr, 1), (Scheme::Bir, t)] {
                let name = scheme.name();
                match opt.optimize_est(p, window, p.lambda_density, &grid, scheme) {
                    Ok(res) => out.extend(est_metrics(name, &res)),
                    Err(e) => out.extend(all_failed(
                        &[&format!("est_{name}"), &format!("streams_{name}"), &format!("rate_{name}"), &format!("activity_{name}")],
                        e,
                    )),
                }
            }
            out
        }
        (ExperimentKind::GainVsLambda, _) => {
            let opt = optimizer(backend, options, sim);
            let grid = options.grid.clone().unwrap_or_else(|| DesignGrid::for_params(p));
            named(vec![("gain", analytic(opt.throughput_gain(p, t, p.lambda_density, &grid)))])
        }
        (kind, backend) => all_failed(&["unsupported"], format!("{kind} has no {} backend", backend.name())),
    }
}

/// Evaluates every sweep value on every backend. Jobs run in parallel and are
/// collected in sweep order, backend order, metric order.
pub fn run_experiment(spec: &ExperimentSpec, timing: bool) -> Vec<ResultRow> {
    let jobs: Vec<(f64, Backend)> = spec
        .sweep
        .values
        .iter()
        .flat_map(|&v| spec.backends.iter().map(move |&b| (v, b)))
        .collect();
    let per_job: Vec<Vec<ResultRow>> = jobs
        .into_par_iter()
        .map(|(x, backend)| {
            let start = Instant::now();
            let (mut p, mut o) = (spec.base_params, spec.options.clone());
            let metrics = match apply_sweep(&mut p, &mut o, &spec.sweep.variable, x) {
                Ok(()) => evaluate(spec.kind, backend, &p, &o, &spec.sim),
                Err(e) => all_failed(&["sweep"], e),
            };
            let wall = timing.then(|| start.elapsed().as_secs_f64());
            let seed = (backend == Backend::MonteCarlo).then_some(spec.sim.seed);
            metrics
                .into_iter()
                .map(|(metric, v)| {
                    let (value, ci, error) = match v {
                        Ok((y, ci)) => (Some(y), ci, None),
                        Err(e) => (None, None, Some(e)),
                    };
                    ResultRow {
                        experiment: spec.name.clone(),
                        sweep_value: x,
                        backend,
                        metric,
                        value,
                        ci_halfwidth: ci,
                        seed,
                        wall_time_s: wall,
                        error,
                    }
                })
                .collect()
        })
        .collect();
    per_job.into_iter().flatten().collect()
}

/// Plot-data files keyed by `(metric, backend)` in first-appearance order.
pub fn plot_series(rows: &[ResultRow]) -> Vec<((String, Backend), String)> {
    let mut out: Vec<((String, Backend), String)> = Vec::new();
    for row in rows {
        let key = (row.metric.clone(), row.backend);
        let idx = match out.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                out.push((key, format!("# metric: {}\n# backend: {}\n", row.metric, row.backend.name())));
                out.len() - 1
            }
        };
        if let Some(y) = row.value {
            let text = &mut out[idx].1;
            match row.ci_halfwidth {
                Some(ci) => writeln!(text, "{} {} {}", row.sweep_value, y, ci),
                None => writeln!(text, "{} {}", row.sweep_value, y),
            }
            .unwrap();
        }
    }
    out
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, OutputError> {
    std::fs::write(&path, contents).map_err(|source| OutputError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the CSV, the manifest and the plot files; returns their paths.
pub fn write_outputs(spec: &ExperimentSpec, rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    let csv_path = dir.join(format!("{}.csv", spec.name));
    let csv_err = |source| OutputError::Csv {
        path: csv_path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: csv_path.clone(),
        source,
    })?;
    files.push(csv_path.clone());

    let manifest = serde_json::to_string_pretty(&Manifest::new(spec)).expect("manifest serializes");
    files.push(write_file(dir.join(format!("{}.manifest.json", spec.name)), &(manifest + "\n"))?);

    for ((metric, backend), text) in plot_series(rows) {
        let path = dir.join(format!("{}.{}.{}.dat", spec.name, metric, backend.name()));
        files.push(write_file(path, &text)?);
    }
    Ok(files)
}
