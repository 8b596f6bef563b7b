//! Monte Carlo engine.
//!
//! Each trial draws one network realization from its own random stream,
//! derived from `(seed, trial index)`, so results do not depend on how trials
//! are scheduled across threads. Per-trial results are collected in trial
//! order and reduced sequentially.
//!
//! Interference is split by path gain. The `exact_interferers` strongest
//! interferers get explicit activity and per-stream fading draws. The rest of
//! the disk, plus the mean field beyond the disk edge, is replaced in every
//! slot and stream by a gamma variable with the same conditional mean and
//! variance.

pub mod doppler;
mod engine;
pub mod network;
pub mod short_packet;
pub mod stats;

pub use engine::{
    conditional_success_prob, coverage_curve, draw_post_sir, estimate_coverage, estimate_mtd,
    estimate_mtd_trace, estimate_rcc, LinkSampler, McRateMoments, MtdEstimate, RccEstimate,
};
pub use doppler::{simulate_doppler_mtd, DopplerConfig};
pub use network::{sample_network, Interferer, NetworkRealization};
pub use short_packet::{simulate_short_packet_mtd, ShortPacketConfig, ShortPacketMtd};

use crate::model::{ActivityCoupling, ParamError, SystemParams};
use crate::quadrature::QuadratureError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid simulation setting {field}: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("field moments: {0}")]
    Quadrature(#[from] QuadratureError),
    #[error("{0}: sample variance is zero")]
    DegenerateVariance(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated disk radius in meters; `None` picks the smallest radius that
    /// satisfies `edge_tolerance`.
    pub disk_radius: Option<f64>,
    pub trials: usize,
    /// Fading and activity draws per realization (`M`).
    pub fading_draws_per_realization: usize,
    /// Slot budget of one retransmission trace.
    pub retransmission_cap: usize,
    pub seed: u64,
    /// Floor on the estimated conditional success probability; `None` means
    /// `1/(2M)`.
    pub q_floor: Option<f64>,
    /// Interferers with explicit activity and fading, strongest first.
    pub exact_interferers: usize,
    /// Largest admissible ratio of mean interference beyond the disk to mean
    /// interference inside it.
    pub edge_tolerance: f64,
    /// Add the mean and variance of the field beyond the disk to the
    /// aggregate interference.
    pub tail_compensation: bool,
    /// Interferer activity per slot (RR) or block (B-IR), or drawn once per
    /// realization. The typical transmitter's own activity is always drawn
    /// per window.
    pub interferer_activity: ActivityCoupling,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            disk_radius: None,
            trials: 40_000,
            fading_draws_per_realization: 200,
            retransmission_cap: 10_000,
            seed: 0x5eed,
            q_floor: None,
            exact_interferers: 64,
            edge_tolerance: 1e-2,
            tail_compensation: true,
            interferer_activity: ActivityCoupling::PerWindow,
        }
    }
}

impl SimConfig {
    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_draws(mut self, draws: usize) -> Self {
        self.fading_draws_per_realization = draws;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), McError> {
        let positive = |field: &'static str, v: usize| {
            if v == 0 {
                Err(McError::Config {
                    field,
                    reason: "must be >= 1".into(),
                })
            } else {
                Ok(())
            }
        };
        positive("trials", self.trials)?;
        positive("fading_draws_per_realization", self.fading_draws_per_realization)?;
        positive("retransmission_cap", self.retransmission_cap)?;
        if let Some(r) = self.disk_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(McError::Config {
                    field: "disk_radius",
                    reason: format!("must be finite and > 0, got {r}"),
                });
            }
        }
        let q = self.q_floor_value();
        if !(q > 0.0 && q < 1.0) {
            return Err(McError::Config {
                field: "q_floor",
                reason: format!("must lie in (0, 1), got {q}"),
            });
        }
        if !(self.edge_tolerance > 0.0 && self.edge_tolerance < 1.0) {
            return Err(McError::Config {
                field: "edge_tolerance",
                reason: format!("must lie in (0, 1), got {}", self.edge_tolerance),
            });
        }
        Ok(())
    }

    pub fn q_floor_value(&self) -> f64 {
        self.q_floor
            .unwrap_or(0.5 / self.fading_draws_per_realization.max(1) as f64)
    }

    pub fn resolved_radius(&self, params: &SystemParams) -> Result<f64, McError> {
        match self.disk_radius {
            Some(r) => Ok(r),
            None => network::auto_radius(params, self.edge_tolerance),
        }
    }
}

/// Random stream of one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}
