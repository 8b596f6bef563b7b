//! Interferer field sampling and the deterministic corrections for what lies
//! outside the simulated disk.

use super::{McError, SimConfig};
use crate::model::{los_probability, path_loss_gain, sample_link_state, LinkState, PathLossParams, SystemParams};
use crate::quadrature::{integrate, integrate_semi_infinite, QuadratureSpec};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interferer {
    pub distance: f64,
    pub state: LinkState,
}

/// One draw of the stationary part of the network: interferer positions and
/// link states, and the serving link state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkRealization {
    pub interferers: Vec<Interferer>,
    pub serving_state: LinkState,
    pub realization_seed: u64,
    pub disk_radius: f64,
}

/// Uniform PPP of intensity `λ` on the disk plus the serving link state.
pub fn sample_network<R: Rng + ?Sized>(
    params: &SystemParams,
    sim: &SimConfig,
    realization_seed: u64,
    rng: &mut R,
) -> Result<NetworkRealization, McError> {
    params.validate()?;
    let radius = sim.resolved_radius(params)?;
    Ok(sample_network_in_disk(params, radius, realization_seed, rng))
}

pub(crate) fn sample_network_in_disk<R: Rng + ?Sized>(
    params: &SystemParams,
    radius: f64,
    realization_seed: u64,
    rng: &mut R,
) -> NetworkRealization {
    let plp = &params.path_loss;
    let serving_state = sample_link_state(params.link_distance, plp, rng);
    let mean = params.lambda_density * PI * radius * radius;
    let count = if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let mut interferers = Vec::with_capacity(count);
    for _ in 0..count {
        // 1 - U lies in (0, 1], so the distance is strictly positive
        let u: f64 = 1.0 - rng.random::<f64>();
        let distance = radius * u.sqrt();
        let state = sample_link_state(distance, plp, rng);
        interferers.push(Interferer { distance, state });
    }
    NetworkRealization {
        interferers,
        serving_state,
        realization_seed,
        disk_radius: radius,
    }
}

fn mean_gain(x: f64, plp: &PathLossParams, power: i32) -> f64 {
    let pl = los_probability(x, plp);
    let g = |s: LinkState| path_loss_gain(x, s, plp).map(|v| v.powi(power)).unwrap_or(0.0);
    pl * g(LinkState::Los) + (1.0 - pl) * g(LinkState::Nlos)
}

fn field_spec() -> QuadratureSpec {
    QuadratureSpec::default().with_tolerances(1e-9, 1e-300)
}

/// `2π ∫_a^b x E[L(x)^power] dx`, the mean of `Σ L^power` per unit density.
pub fn field_moment(a: f64, b: f64, plp: &PathLossParams, power: i32) -> Result<f64, McError> {
    let breaks: Vec<f64> = plp.kink().into_iter().collect();
    let est = crate::quadrature::integrate_with_breaks(
        |x| 2.0 * PI * x * mean_gain(x, plp, power),
        a,
        b,
        &breaks,
        &field_spec(),
    )
    .or_else(|_| integrate(|x| 2.0 * PI * x * mean_gain(x, plp, power), a, b, &field_spec()))?;
    Ok(est.value)
}

/// `2π ∫_R^∞ x E[L(x)^power] dx`.
pub fn field_tail(radius: f64, plp: &PathLossParams, power: i32) -> Result<f64, McError> {
    let spec = field_spec().with_pivot(radius);
    let est = integrate_semi_infinite(
        |y| 2.0 * PI * (radius + y) * mean_gain(radius + y, plp, power),
        &spec,
    )?;
    Ok(est.value)
}

/// Mean distance scale of the active field, `1/sqrt(πλp)`.
pub fn guard_radius(params: &SystemParams) -> f64 {
    1.0 / (PI * params.lambda_density * params.activity).sqrt()
}

/// Smallest radius `R` (to 0.1%) whose excluded mean interference beyond `R`
/// is at most `tolerance` times the mean interference from the annulus between
/// the guard radius and `R`.
pub fn auto_radius(params: &SystemParams, tolerance: f64) -> Result<f64, McError> {
    let plp = &params.path_loss;
    if params.lambda_density <= 0.0 {
        return Ok(10.0 * params.link_distance.max(plp.d0).max(plp.d1));
    }
    let rg = guard_radius(params);
    let excess = |r: f64| -> Result<f64, McError> {
        Ok(field_tail(r, plp, 1)? - tolerance * field_moment(rg, r, plp, 1)?)
    };
    let mut hi = 2.0 * rg.max(params.link_distance);
    while excess(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(McError::Config {
                field: "edge_tolerance",
                reason: format!("no disk radius below 1e9 m reaches {tolerance}"),
            });
        }
    }
    let mut lo = hi / 2.0;
    if excess(lo)? <= 0.0 {
        return Ok(hi.min(lo.max(rg)));
    }
    while hi / lo > 1.001 {
        let mid = (lo * hi).sqrt();
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
