//! Effective spatial throughput `pλR̄/D̄` maximized over a finite design grid
//! of activity, stream count and rate threshold.

use crate::delay::{DelayError, DelayModel};
use crate::montecarlo::{estimate_mtd, McError, SimConfig};
use crate::model::{ParamError, Scheme, SystemParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("design grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("every grid point failed; first error: {0}")]
    AllPointsFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignGrid {
    pub activity_grid: Vec<f64>,
    pub stream_grid: Vec<usize>,
    pub rate_grid: Vec<f64>,
}

impl Default for DesignGrid {
    fn default() -> Self {
        Self::for_params(&SystemParams::default())
    }
}

impl DesignGrid {
    /// `p ∈ {0.1, …, 1.0}`, `S ∈ {1, …, min(Nt, Nr)}`, and 20 thresholds
    /// log-spaced over `[0.1, 10]`.
    pub fn for_params(params: &SystemParams) -> Self {
        let s_max = params.tx_antennas.min(params.rx_antennas);
        Self {
            activity_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
            stream_grid: (1..=s_max).collect(),
            rate_grid: log_space(0.1, 10.0, 20),
        }
    }

    pub fn validate(&self, params: &SystemParams) -> Result<(), OptimizerError> {
        if self.activity_grid.is_empty() || self.stream_grid.is_empty() || self.rate_grid.is_empty() {
            return Err(OptimizerError::Grid("every axis needs at least one value".into()));
        }
        if let Some(p) = self.activity_grid.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(OptimizerError::Grid(format!("activity {p} outside (0, 1]")));
        }
        let s_max = params.tx_antennas.min(params.rx_antennas);
        if let Some(s) = self.stream_grid.iter().find(|&&s| s < 1 || s > s_max) {
            return Err(OptimizerError::Grid(format!("stream count {s} outside [1, {s_max}]")));
        }
        if let Some(r) = self.rate_grid.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
            return Err(OptimizerError::Grid(format!("rate threshold {r} must be finite and > 0")));
        }
        Ok(())
    }

    /// Grid points in canonical order: `S`, then `p`, then `R̄`, ascending.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut pts = Vec::with_capacity(self.activity_grid.len() * self.stream_grid.len() * self.rate_grid.len());
        for &streams in &self.stream_grid {
            for &activity in &self.activity_grid {
                for &rate_threshold in &self.rate_grid {
                    pts.push(GridPoint {
                        activity,
                        streams,
                        rate_threshold,
                    });
                }
            }
        }
        pts.sort_by(GridPoint::tie_order);
        pts.dedup();
        pts
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub activity: f64,
    pub streams: usize,
    pub rate_threshold: f64,
}

impl GridPoint {
    /// Smaller `S`, then smaller `p`, then smaller `R̄` first.
    fn tie_order(a: &Self, b: &Self) -> Ordering {
        a.streams
            .cmp(&b.streams)
            .then(a.activity.total_cmp(&b.activity))
            .then(a.rate_threshold.total_cmp(&b.rate_threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEval {
    pub point: GridPoint,
    pub delay: Option<f64>,
    pub est: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstResult {
    pub est: f64,
    pub argmax: GridPoint,
    pub delay: f64,
    pub scheme: Scheme,
    pub block_length: usize,
    pub lambda_density: f64,
    pub per_point: Vec<PointEval>,
}

#[derive(Debug, Clone)]
pub enum DelayBackend {
    Analytic(DelayModel),
    MonteCarlo(SimConfig),
}

impl Default for DelayBackend {
    fn default() -> Self {
        DelayBackend::Analytic(DelayModel::default())
    }
}

/// Grid optimizer with memoized delays.
#[derive(Debug, Default)]
pub struct Optimizer {
    backend: DelayBackend,
    /// Keyed by the full parameter set with the effective block length.
    cache: Mutex<HashMap<String, Result<f64, String>>>,
}

impl Optimizer {
    pub fn new(backend: DelayBackend) -> Self {
        Self {
            backend,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn delay(&self, params: &SystemParams, scheme: Scheme) -> Result<f64, String> {
        // B-IR with one-slot blocks is RR
        let t = match scheme {
            Scheme::Rr => 1,
            Scheme::Bir => params.block_length,
        };
        let params = &(*params).with_block_length(t);
        let key = format!("{params:?}");
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return v.clone();
        }
        let r = params.rate_threshold;
        let value = match &self.backend {
            DelayBackend::Analytic(model) => model
                .mtd_bir(r, t, params)
                .map(|d| d.value)
                .map_err(|e: DelayError| e.to_string()),
            DelayBackend::MonteCarlo(sim) => {
                let scheme = if t > 1 { Scheme::Bir } else { Scheme::Rr };
                estimate_mtd(params, sim, scheme, r, t)
                    .map(|d| d.delay.value)
                    .map_err(|e: McError| e.to_string())
            }
        };
        let value = value.and_then(|d| {
            if d.is_finite() && d > 0.0 {
                Ok(d)
            } else {
                Err(format!("delay {d} is not finite and positive"))
            }
        });
        self.cache.lock().unwrap().insert(key, value.clone());
        value
    }

    /// Maximizes `pλR̄/D̄` over `grid` for the given scheme, block length and
    /// density; the remaining parameters come from `base`.
    pub fn optimize_est(
        &self,
        base: &SystemParams,
        block_length: usize,
        lambda_density: f64,
        grid: &DesignGrid,
        scheme: Scheme,
    ) -> Result<EstResult, OptimizerError> {
        grid.validate(base)?;
        let base = SystemParams {
            lambda_density,
            block_length,
            ..*base
        };
        base.validate()?;
        let per_point: Vec<PointEval> = grid
            .points()
            .into_par_iter()
            .map(|point| {
                let params = SystemParams {
                    activity: point.activity,
                    streams: point.streams,
                    rate_threshold: point.rate_threshold,
                    ..base
                };
                match self.delay(&params, scheme) {
                    Ok(d) => PointEval {
                        point,
                        delay: Some(d),
                        est: Some(point.activity * lambda_density * point.rate_threshold / d),
                        error: None,
                    },
                    Err(e) => PointEval {
                        point,
                        delay: None,
                        est: None,
                        error: Some(e),
                    },
                }
            })
            .collect();
        // points are in tie order, so the first strict maximum wins ties
        let mut best: Option<&PointEval> = None;
        for pe in &per_point {
            if let Some(est) = pe.est {
                if best.is_none_or(|b| est > b.est.unwrap()) {
                    best = Some(pe);
                }
            }
        }
        let Some(best) = best else {
            let first = per_point.iter().find_map(|p| p.error.clone()).unwrap_or_default();
            return Err(OptimizerError::AllPointsFailed(first));
        };
        Ok(EstResult {
            est: best.est.unwrap(),
            argmax: best.point,
            delay: best.delay.unwrap(),
            scheme,
            block_length,
            lambda_density,
            per_point: per_point.clone(),
        })
    }

    /// `η(T, λ)`: optimized B-IR throughput with blocks of `T` over optimized
    /// RR throughput.
    pub fn throughput_gain(
        &self,
        base: &SystemParams,
        block_length: usize,
        lambda_density: f64,
        grid: &DesignGrid,
    ) -> Result<f64, OptimizerError> {
        let bir = self.optimize_est(base, block_length, lambda_density, grid, Scheme::Bir)?;
        let rr = self.optimize_est(base, 1, lambda_density, grid, Scheme::Rr)?;
        Ok(bir.est / rr.est)
    }
}
