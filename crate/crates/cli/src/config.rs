//! Experiment configuration files.
//!
//! A config is a TOML document. Every key is optional; missing ones take the
//! defaults of the library types and of the chosen experiment kind.
//!
//! ```toml
//! name = "rcc"
//! kind = "rcc_vs_T"
//! backends = ["analytic", "monte_carlo"]
//!
//! [base_params]
//! streams = 4
//!
//! [sim]
//! trials = 2000
//!
//! [sweep]
//! variable = "block_length"
//! values = [1, 2, 4, 8]
//! ```

use mimo_harq::delay::DelayOptions;
use mimo_harq::montecarlo::{DopplerConfig, ShortPacketConfig, SimConfig};
use mimo_harq::optimizer::DesignGrid;
use mimo_harq::SystemParams;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable read for the seed when the config does not set `sim.seed`.
pub const SEED_ENV: &str = "MIMO_HARQ_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "rcc_vs_T")]
    RccVsT,
    #[serde(rename = "coverage_vs_T")]
    CoverageVsT,
    #[serde(rename = "mtd_vs_S")]
    MtdVsS,
    #[serde(rename = "mtd_bounds_vs_T")]
    MtdBoundsVsT,
    #[serde(rename = "doppler_sweep")]
    DopplerSweep,
    #[serde(rename = "short_packet_sweep")]
    ShortPacketSweep,
    #[serde(rename = "noiseless_check")]
    NoiselessCheck,
    #[serde(rename = "est_vs_lambda")]
    EstVsLambda,
    #[serde(rename = "gain_vs_lambda")]
    GainVsLambda,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::RccVsT,
        ExperimentKind::CoverageVsT,
        ExperimentKind::MtdBoundsVsT,
        ExperimentKind::MtdVsS,
        ExperimentKind::NoiselessCheck,
        ExperimentKind::DopplerSweep,
        ExperimentKind::ShortPacketSweep,
        ExperimentKind::EstVsLambda,
        ExperimentKind::GainVsLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RccVsT => "rcc_vs_T",
            ExperimentKind::CoverageVsT => "coverage_vs_T",
            ExperimentKind::MtdVsS => "mtd_vs_S",
            ExperimentKind::MtdBoundsVsT => "mtd_bounds_vs_T",
            ExperimentKind::DopplerSweep => "doppler_sweep",
            ExperimentKind::ShortPacketSweep => "short_packet_sweep",
            ExperimentKind::NoiselessCheck => "noiseless_check",
            ExperimentKind::EstVsLambda => "est_vs_lambda",
            ExperimentKind::GainVsLambda => "gain_vs_lambda",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ExperimentKind::RccVsT => "block and slot rate correlation coefficients against block length",
            ExperimentKind::CoverageVsT => "B-IR coverage and its normal approximation against block length",
            ExperimentKind::MtdVsS => "RR and B-IR mean delay against the number of streams",
            ExperimentKind::MtdBoundsVsT => "B-IR mean delay and its RR-based bounds against block length",
            ExperimentKind::DopplerSweep => "mean delay under Gauss-Markov fading against relative speed",
            ExperimentKind::ShortPacketSweep => "RR delay with finite-blocklength decoding against payload size",
            ExperimentKind::NoiselessCheck => "interference-limited mean delay of both schemes (zero noise level)",
            ExperimentKind::EstVsLambda => "optimized throughput and its maximizers against density",
            ExperimentKind::GainVsLambda => "B-IR over RR optimized throughput ratio against density",
        }
    }

    /// Figure of the reproduction set this kind produces.
    pub fn figure(self) -> u32 {
        match self {
            ExperimentKind::RccVsT => 1,
            ExperimentKind::CoverageVsT => 2,
            ExperimentKind::MtdBoundsVsT => 3,
            ExperimentKind::MtdVsS => 4,
            ExperimentKind::NoiselessCheck => 5,
            ExperimentKind::DopplerSweep => 6,
            ExperimentKind::ShortPacketSweep => 7,
            ExperimentKind::EstVsLambda => 8,
            ExperimentKind::GainVsLambda => 9,
        }
    }

    pub fn default_sweep(self) -> Sweep {
        let (variable, values): (&str, Vec<f64>) = match self {
            ExperimentKind::RccVsT
            | ExperimentKind::CoverageVsT
            | ExperimentKind::MtdBoundsVsT => ("block_length", vec![1.0, 2.0, 4.0, 8.0]),
            ExperimentKind::MtdVsS => ("streams", vec![1.0, 2.0, 4.0, 8.0, 12.0, 16.0]),
            ExperimentKind::NoiselessCheck => ("rate_threshold", vec![3.0]),
            ExperimentKind::DopplerSweep => ("speed", vec![0.0, 10.0, 20.0, 30.0]),
            ExperimentKind::ShortPacketSweep => ("bits", vec![25.0, 50.0, 100.0]),
            ExperimentKind::EstVsLambda | ExperimentKind::GainVsLambda => {
                ("lambda_density", vec![1e-4, 1e-3, 1e-2, 1e-1])
            }
        };
        Sweep {
            variable: variable.into(),
            values,
        }
    }

    pub fn supported_backends(self) -> &'static [Backend] {
        match self {
            ExperimentKind::DopplerSweep | ExperimentKind::ShortPacketSweep => &[Backend::MonteCarlo],
            _ => &[Backend::Analytic, Backend::MonteCarlo],
        }
    }

    /// Optimizer kinds default to the analytic backend only; a Monte Carlo
    /// delay per grid point is expensive.
    pub fn default_backends(self) -> Vec<Backend> {
        match self {
            ExperimentKind::EstVsLambda | ExperimentKind::GainVsLambda => vec![Backend::Analytic],
            _ => self.supported_backends().to_vec(),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Analytic,
    MonteCarlo,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Analytic => "analytic",
            Backend::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: String,
    pub values: Vec<f64>,
}

pub const SWEEP_VARIABLES: [&str; 10] = [
    "lambda_density",
    "activity",
    "link_distance",
    "streams",
    "tx_antennas",
    "rx_antennas",
    "block_length",
    "rate_threshold",
    "speed",
    "bits",
];

/// Settings that only some kinds read.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    pub delay: DelayOptions,
    pub doppler: DopplerConfig,
    pub short_packet: ShortPacketConfig,
    /// Optimizer grid; the default grid of each sweep point when absent.
    pub grid: Option<DesignGrid>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub backends: Vec<Backend>,
    pub notes: Option<String>,
    pub base_params: SystemParams,
    pub sim: SimConfig,
    pub sweep: Sweep,
    pub options: ExperimentOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: Option<String>,
    kind: Option<ExperimentKind>,
    backends: Option<Vec<Backend>>,
    notes: Option<String>,
    #[serde(default)]
    base_params: SystemParams,
    #[serde(default)]
    sim: SimConfig,
    sweep: Option<Sweep>,
    #[serde(default)]
    options: ExperimentOptions,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", .0.iter().map(|d| format!("  - {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

/// Sets one sweep variable on a copy of the parameters and options.
pub fn apply_sweep(
    params: &mut SystemParams,
    options: &mut ExperimentOptions,
    variable: &str,
    value: f64,
) -> Result<(), String> {
    let count = |v: f64| -> Result<usize, String> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(format!("{variable} must be a nonnegative integer, got {v}"))
        }
    };
    match variable {
        "lambda_density" => params.lambda_density = value,
        "activity" => params.activity = value,
        "link_distance" => params.link_distance = value,
        "streams" => params.streams = count(value)?,
        "tx_antennas" => params.tx_antennas = count(value)?,
        "rx_antennas" => params.rx_antennas = count(value)?,
        "block_length" => params.block_length = count(value)?,
        "rate_threshold" => params.rate_threshold = value,
        "speed" => options.doppler.speed = value,
        "bits" => options.short_packet.bits = value,
        other => {
            return Err(format!(
                "unknown sweep variable `{other}`; recognized: {}",
                SWEEP_VARIABLES.join(", ")
            ))
        }
    }
    Ok(())
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ExperimentSpec {
    /// Every violated constraint, one message per problem.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !valid_name(&self.name) {
            out.push(format!(
                "name: `{}` must be non-empty and use only letters, digits, `_`, `-` and `.`",
                self.name
            ));
        }
        let base_err = self.base_params.validate().err().map(|e| e.to_string());
        if let Some(e) = &base_err {
            out.push(format!("base_params.{e}"));
        }
        if let Err(e) = self.sim.validate() {
            out.push(format!("sim: {e}"));
        }
        if self.sim.seed > i64::MAX as u64 {
            out.push(format!("sim.seed: must be at most {}", i64::MAX));
        }
        if self.backends.is_empty() {
            out.push("backends: at least one backend is required".into());
        }
        for b in &self.backends {
            if !self.kind.supported_backends().contains(b) {
                out.push(format!("backends: {} does not support `{}`", self.kind, b.name()));
            }
        }
        if let Err(e) = self.options.doppler.validate() {
            out.push(format!("options.doppler: {e}"));
        }
        if let Err(e) = self.options.short_packet.validate() {
            out.push(format!("options.short_packet: {e}"));
        }
        let var = self.sweep.variable.as_str();
        if !SWEEP_VARIABLES.contains(&var) {
            out.push(format!(
                "sweep.variable: unknown sweep variable `{var}`; recognized: {}",
                SWEEP_VARIABLES.join(", ")
            ));
            return out;
        }
        let only = match var {
            "speed" => Some(ExperimentKind::DopplerSweep),
            "bits" => Some(ExperimentKind::ShortPacketSweep),
            _ => None,
        };
        if let Some(k) = only.filter(|&k| k != self.kind) {
            out.push(format!("sweep.variable: `{var}` only applies to {k}"));
        }
        if self.sweep.values.is_empty() {
            out.push("sweep.values: at least one value is required".into());
        }
        for (i, &v) in self.sweep.values.iter().enumerate() {
            let at = format!("sweep.values[{i}] = {v}");
            if !v.is_finite() {
                out.push(format!("{at}: must be finite"));
                continue;
            }
            let (mut p, mut o) = (self.base_params, self.options.clone());
            if let Err(e) = apply_sweep(&mut p, &mut o, var, v) {
                out.push(format!("{at}: {e}"));
                continue;
            }
            // a problem the base already has is reported once
            if let Err(e) = p.validate().map_err(|e| e.to_string()) {
                if base_err.as_ref() != Some(&e) {
                    out.push(format!("{at}: {e}"));
                }
            }
            if let Err(e) = o.doppler.validate() {
                out.push(format!("{at}: {e}"));
            }
            if let Err(e) = o.short_packet.validate() {
                out.push(format!("{at}: {e}"));
            }
            if let Some(g) = &o.grid {
                if let Err(e) = g.validate(&p) {
                    out.push(format!("{at}: options.grid: {e}"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(d))
        }
    }
}

/// Parses and resolves a TOML config. `env_seed` applies only when the
/// config leaves `sim.seed` unset.
pub fn parse_spec(text: &str, env_seed: Option<&str>) -> Result<ExperimentSpec, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let has_seed = table
        .get("sim")
        .and_then(|s| s.as_table())
        .is_some_and(|s| s.contains_key("seed"));
    let raw: RawSpec = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let kind = raw.kind.unwrap_or(ExperimentKind::RccVsT);
    let mut spec = ExperimentSpec {
        name: raw.name.unwrap_or_else(|| kind.name().to_string()),
        kind,
        backends: raw.backends.unwrap_or_else(|| kind.default_backends()),
        notes: raw.notes,
        base_params: raw.base_params,
        sim: raw.sim,
        sweep: raw.sweep.unwrap_or_else(|| kind.default_sweep()),
        options: raw.options,
    };
    spec.backends.sort();
    spec.backends.dedup();
    if let (false, Some(s)) = (has_seed, env_seed) {
        spec.sim.seed = s.trim().parse().map_err(|_| {
            ConfigError::Invalid(vec![format!("{SEED_ENV}: `{s}` is not an unsigned integer")])
        })?;
    }
    spec.validate()?;
    Ok(spec)
}

/// Run manifest: the resolved spec plus provenance. Rerunning a manifest
/// reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub spec: ExperimentSpec,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: spec.sim.seed,
            spec: spec.clone(),
        }
    }
}

/// Loads a TOML config, or a JSON manifest written by an earlier run.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        m.spec.validate()?;
        return Ok(m.spec);
    }
    let env_seed = std::env::var(SEED_ENV).ok();
    parse_spec(&text, env_seed.as_deref())
}
