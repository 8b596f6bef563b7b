//! Retransmission delay with finite-blocklength decoding under RR.
//!
//! A slot decodes when its aggregate rate covers the payload rate plus a
//! dispersion penalty `Q⁻¹(ε)/sqrt(W T_s) Σ_l sqrt(1 - (1 + SIR_l)⁻²)`. The
//! equivalent long-packet system uses the payload rate alone and is evaluated
//! on the same random draws.

use super::engine::{LinkSampler, MtdEstimate, RunContext};
use super::{McError, SimConfig};
use crate::model::SystemParams;
use crate::special::q_inverse;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShortPacketConfig {
    /// Payload in bits.
    pub bits: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Target decoding error probability.
    pub error_target: f64,
}

impl Default for ShortPacketConfig {
    fn default() -> Self {
        Self {
            bits: 50.0,
            bandwidth: 5e4,
            slot_duration: 5e-4,
            error_target: 1e-3,
        }
    }
}

impl ShortPacketConfig {
    pub fn with_bits(mut self, bits: f64) -> Self {
        self.bits = bits;
        self
    }

    pub fn validate(&self) -> Result<(), McError> {
        for (field, v) in [
            ("bits", self.bits),
            ("bandwidth", self.bandwidth),
            ("slot_duration", self.slot_duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(McError::Config {
                    field,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        if !(self.error_target > 0.0 && self.error_target < 1.0) {
            return Err(McError::Config {
                field: "error_target",
                reason: format!("must lie in (0, 1), got {}", self.error_target),
            });
        }
        Ok(())
    }

    /// Channel uses per slot, `W T_s`.
    pub fn channel_uses(&self) -> f64 {
        self.bandwidth * self.slot_duration
    }

    /// Payload rate in nats per channel use, the threshold of the equivalent
    /// long-packet system.
    pub fn payload_rate(&self) -> f64 {
        self.bits * LN_2 / self.channel_uses()
    }

    /// Extra rate the slot needs for the given per-stream SIRs.
    pub fn dispersion_penalty(&self, sirs: &[f64]) -> f64 {
        let spread: f64 = sirs
            .iter()
            .map(|&s| (1.0 - (1.0 + s).powi(-2)).max(0.0).sqrt())
            .sum();
        q_inverse(self.error_target) / self.channel_uses().sqrt() * spread
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShortPacketMtd {
    pub short: MtdEstimate,
    /// Equivalent long-packet system with threshold `payload_rate`.
    pub long: MtdEstimate,
}

/// RR delay `E_F[1 / q̂(F)]` for the finite-blocklength success event and for
/// the equivalent long-packet event, from common random numbers.
pub fn simulate_short_packet_mtd(
    params: &SystemParams,
    sim: &SimConfig,
    sp: &ShortPacketConfig,
) -> Result<ShortPacketMtd, McError> {
    sp.validate()?;
    let ctx = RunContext::new(params, sim)?;
    let floor = sim.q_floor_value();
    let draws = sim.fading_draws_per_realization;
    let threshold = sp.payload_rate();
    let results: Vec<Result<[f64; 2], McError>> = (0..sim.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (net, mut rng) = ctx.realization(params, sim.seed, trial);
            let sampler = LinkSampler::with_context(&net, params, sim, &ctx, &mut rng)?;
            let mut active = Vec::new();
            let mut sirs = vec![0.0; params.streams];
            let (mut short, mut long) = (0usize, 0usize);
            for _ in 0..draws {
                if !sampler.own_active(&mut rng) {
                    continue;
                }
                sampler.draw_activity(&mut rng, &mut active);
                let rate = sampler.slot_rate(&active, &mut rng, &mut sirs);
                if rate >= threshold {
                    long += 1;
                    if rate >= threshold + sp.dispersion_penalty(&sirs) {
                        short += 1;
                    }
                }
            }
            let q = |hits: usize| hits as f64 / draws as f64;
            Ok([q(short), q(long)])
        })
        .collect();
    let mut short = Vec::with_capacity(results.len());
    let mut long = Vec::with_capacity(results.len());
    let (mut cs, mut cl) = (0, 0);
    for r in results {
        let [qs, ql] = r?;
        cs += (qs < floor) as usize;
        cl += (ql < floor) as usize;
        short.push(1.0 / qs.max(floor));
        long.push(1.0 / ql.max(floor));
    }
    Ok(ShortPacketMtd {
        short: MtdEstimate::from_values(&short, cs),
        long: MtdEstimate::from_values(&long, cl),
    })
}
