//! Retransmission delay under Gauss-Markov channel evolution.
//!
//! The serving channel and the channels of the strongest interferers are
//! explicit `Nr × S` complex Gaussian matrices that evolve slot by slot as
//! `H[t] = η H[t-1] + sqrt(1 - η²) W[t]`. Each slot the zero-forcing receive
//! filter is recomputed from the serving matrix. The weak far field keeps the
//! per-slot gamma aggregate of the i.i.d. engine.

use super::engine::{LinkSampler, MtdEstimate, RunContext};
use super::{McError, SimConfig};
use crate::model::{Scheme, SystemParams};
use crate::special::bessel_j0;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DopplerConfig {
    /// Relative speed in m/s.
    pub speed: f64,
    /// Carrier frequency in Hz.
    pub carrier: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
}

impl Default for DopplerConfig {
    fn default() -> Self {
        Self {
            speed: 0.0,
            carrier: 2.4e9,
            slot_duration: 5e-4,
        }
    }
}

impl DopplerConfig {
    pub fn with_speed(mut self, speed: f64) -> Self {
        self.speed = speed;
        self
    }

    pub fn validate(&self) -> Result<(), McError> {
        for (field, v) in [
            ("speed", self.speed),
            ("carrier", self.carrier),
            ("slot_duration", self.slot_duration),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(McError::Config {
                    field,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn doppler_spread(&self) -> f64 {
        self.speed * self.carrier / SPEED_OF_LIGHT
    }

    /// Slot-to-slot correlation `J0(2π f_d T_s)`.
    pub fn eta(&self) -> f64 {
        bessel_j0(2.0 * PI * self.doppler_spread() * self.slot_duration)
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Draws the innovation even when `η = 1` so that runs at different speeds
/// consume the same random numbers.
fn evolve<R: Rng + ?Sized>(m: &mut DMatrix<Complex64>, eta: f64, innovation: f64, rng: &mut R) {
    for z in m.iter_mut() {
        *z = *z * eta + complex_gaussian(rng) * innovation;
    }
}

struct MatrixLink<'a> {
    sampler: &'a LinkSampler,
    serving: DMatrix<Complex64>,
    interferers: Vec<DMatrix<Complex64>>,
    eta: f64,
    innovation: f64,
}

impl<'a> MatrixLink<'a> {
    fn new<R: Rng + ?Sized>(sampler: &'a LinkSampler, rx: usize, eta: f64, rng: &mut R) -> Self {
        let s = sampler.streams;
        Self {
            sampler,
            serving: gaussian_matrix(rx, s, rng),
            interferers: sampler.near.iter().map(|_| gaussian_matrix(rx, s, rng)).collect(),
            eta,
            innovation: (1.0 - eta * eta).max(0.0).sqrt(),
        }
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        evolve(&mut self.serving, self.eta, self.innovation, rng);
        for g in &mut self.interferers {
            evolve(g, self.eta, self.innovation, rng);
        }
    }

    /// Aggregate rate of the current slot.
    fn slot_rate<R: Rng + ?Sized>(&self, active: &[bool], rng: &mut R) -> f64 {
        let h = &self.serving;
        let gram = h.adjoint() * h;
        let Some(inv) = gram.try_inverse() else {
            return 0.0;
        };
        let filter = &inv * h.adjoint();
        let mut rate = 0.0;
        for l in 0..self.sampler.streams {
            let row = filter.row(l);
            let norm2 = row.norm_squared();
            let signal = self.sampler.serving_gain / norm2;
            let mut interference = 0.0;
            for ((g, &gain), &on) in self.interferers.iter().zip(&self.sampler.near).zip(active) {
                if on {
                    let proj = row * g;
                    interference += gain * proj.norm_squared() / norm2;
                }
            }
            if let Some(far) = &self.sampler.far {
                interference += far.sample(rng);
            }
            rate += if interference > 0.0 {
                (signal / interference).ln_1p()
            } else {
                f64::INFINITY
            };
        }
        rate
    }
}

/// Mean delay from retransmission traces with Gauss-Markov fading. Windows
/// (one slot for RR, `T` slots for B-IR) are attempted until one decodes or
/// the slot cap is reached; channels evolve every slot, interferer activity is
/// redrawn per window.
pub fn simulate_doppler_mtd(
    params: &SystemParams,
    sim: &SimConfig,
    doppler: &DopplerConfig,
    scheme: Scheme,
    rate_threshold: f64,
    block_length: usize,
) -> Result<MtdEstimate, McError> {
    doppler.validate()?;
    let ctx = RunContext::new(params, sim)?;
    let window = match scheme {
        Scheme::Rr => 1,
        Scheme::Bir => block_length.max(1),
    };
    let eta = doppler.eta();
    let cap = sim.retransmission_cap;
    let results: Vec<Result<(f64, bool), McError>> = (0..sim.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (net, mut rng) = ctx.realization(params, sim.seed, trial);
            let sampler = LinkSampler::with_context(&net, params, sim, &ctx, &mut rng)?;
            let mut link = MatrixLink::new(&sampler, params.rx_antennas, eta, &mut rng);
            let mut active = Vec::new();
            let mut elapsed = 0;
            while elapsed < cap {
                let own = sampler.own_active(&mut rng);
                sampler.draw_activity(&mut rng, &mut active);
                let mut acc = 0.0;
                for k in 0..window {
                    if elapsed + k > 0 {
                        link.step(&mut rng);
                    }
                    if own {
                        acc += link.slot_rate(&active, &mut rng);
                    }
                }
                elapsed += window;
                if own && acc >= rate_threshold {
                    return Ok((elapsed as f64, false));
                }
            }
            Ok((elapsed as f64, true))
        })
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut censored = 0;
    for r in results {
        let (v, c) = r?;
        values.push(v);
        censored += c as usize;
    }
    Ok(MtdEstimate::from_values(&values, censored))
}
