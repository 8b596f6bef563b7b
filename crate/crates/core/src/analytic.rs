//! Rate moments, rate correlation coefficients and the normal approximation of
//! coverage, evaluated by numerical integration.
//!
//! Per-stream rates are `R_l = ln(1 + SIR_l)`. With `g_k(y) = (1 + y)^{-k}`
//! the Laplace transform of a `Gamma(k, 1)` gain, the moments follow from the
//! integral identity `ln(1 + a/b) = ∫ (e^{-vb} - e^{-v(a+b)}) / v dv` and the
//! probability generating functional of the interferer field:
//!
//! * `Θ₁(v) = Σ_n ∫ x p_n(x) (1 - g_S(v L_n(x))) dx`
//! * `Θ₂(v₁, v₂) = ∫ x (1 - Σ_n p_n(x) g_S(v₁ L_n(x)) g_S(v₂ L_n(x))) dx`
//! * `Θ₃(v₁, v₂) = Θ₁(v₁ + v₂)`
//!
//! and the interference Laplace transform is `exp(-2πλp Θ)`.
//!
//! `Θ₂` keeps each interferer's activity fixed across the two slots. When
//! activity is redrawn between windows the cross-window functional is
//! `∫ x Σ_n p_n(x) [(1 - g₁) + (1 - g₂)(1 - p (1 - g₁))] dx`, which reduces to
//! `Θ₂` at `p = 1`.
//!
//! Outer integrals run over `u = ln v` on a finite bracket. The lower end is
//! where the serving-link factor falls below `1e-16`, the upper end where the
//! damping `exp(-2πλp Θ₁(v))` falls below `1e-14`.

use crate::model::{ActivityCoupling, LinkState, LosModel, ParamError, Scheme, SystemParams};
use crate::quadrature::{
    integrate_rectangle, integrate_semi_infinite, integrate_with_breaks, QuadratureError,
    QuadratureSpec, Transform,
};
use crate::special::q_function;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;
use thiserror::Error;

/// Damping exponent beyond which the outer integrands are dropped.
const DAMPING_CUTOFF: f64 = 32.3;
/// Serving-link factor below which the outer integrands are dropped.
const SERVING_CUTOFF: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("{quantity}: {source}")]
    Quadrature {
        quantity: &'static str,
        source: QuadratureError,
    },
    #[error("{0} diverges: the active interferer density is zero, so the rate is unbounded")]
    Divergent(&'static str),
    #[error("degenerate rate variance {variance:e}")]
    DegenerateVariance { variance: f64 },
}

fn quad_err(quantity: &'static str) -> impl Fn(QuadratureError) -> AnalyticError {
    move |source| AnalyticError::Quadrature { quantity, source }
}

/// `1 - (1 + y)^{-k}` without cancellation for small `y`.
pub(crate) fn one_minus_lt(y: f64, k: f64) -> f64 {
    -(-k * y.ln_1p()).exp_m1()
}

/// `(1 + y)^{-k}`.
pub(crate) fn lt(y: f64, k: f64) -> f64 {
    (-k * y.ln_1p()).exp()
}

/// Analytic rate moments of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSet {
    /// Mean block rate `μ_C = T·S·E[R_1]`.
    pub mu_c: f64,
    /// `E[R_1[1] R_2[2]]`.
    pub lambda_cross: f64,
    /// `E[R_1[1]²]`.
    pub lambda_same: f64,
    /// `E[R_1[1] R_2[2]]` with the two slots in different windows; equals
    /// `lambda_cross` under shared activity.
    pub lambda_cross_window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RccResult {
    pub block_rcc: f64,
    pub slot_rcc: f64,
}

/// Per-stream moments; independent of `T` and `R̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StreamMoments {
    mean: f64,
    cross: f64,
    same: f64,
    cross_window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct MomentKey([u64; 13]);

impl MomentKey {
    fn new(params: &SystemParams) -> Self {
        let plp = &params.path_loss;
        let (model_tag, model_p) = match plp.los_model {
            LosModel::Umi => (0.0, 0.0),
            LosModel::Constant { probability } => (1.0, probability),
        };
        let v = [
            params.lambda_density,
            params.activity,
            params.link_distance,
            params.streams as f64,
            params.rx_antennas as f64,
            plp.alpha_los,
            plp.alpha_nlos,
            plp.phi_los,
            plp.phi_nlos,
            plp.d0,
            plp.d1,
            model_tag,
            model_p,
        ];
        MomentKey(v.map(f64::to_bits))
    }
}

/// Evaluator with a session-local moment cache. Safe to share across threads.
#[derive(Debug)]
pub struct Analytic {
    spec: QuadratureSpec,
    theta_spec: QuadratureSpec,
    coupling: ActivityCoupling,
    cache: Mutex<HashMap<MomentKey, StreamMoments>>,
}

impl Default for Analytic {
    fn default() -> Self {
        Self::new(QuadratureSpec::default())
    }
}

impl Analytic {
    /// `spec` governs the outer integrals; the inner `Θ` integrals run two
    /// orders of magnitude tighter.
    pub fn new(spec: QuadratureSpec) -> Self {
        let theta_spec = QuadratureSpec {
            rel_tol: (spec.rel_tol * 1e-2).max(1e-12),
            abs_tol: spec.abs_tol * 1e-2,
            max_subdivisions: spec.max_subdivisions.max(400),
            transform: Transform::LogSubstitution { pivot: 1.0 },
        };
        Self {
            spec,
            theta_spec,
            coupling: ActivityCoupling::Shared,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Activity coupling across windows used by the correlation
    /// coefficients. The default is [`ActivityCoupling::Shared`].
    pub fn with_coupling(mut self, coupling: ActivityCoupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    pub fn coupling(&self) -> ActivityCoupling {
        self.coupling
    }

    fn theta_spec_for(&self, params: &SystemParams) -> QuadratureSpec {
        let pivot = params.path_loss.kink().unwrap_or(1.0);
        self.theta_spec.with_pivot(pivot)
    }

    fn theta_integral<F: Fn(f64) -> f64>(
        &self,
        params: &SystemParams,
        kernel: F,
    ) -> Result<f64, AnalyticError> {
        let spec = self.theta_spec_for(params);
        integrate_semi_infinite(kernel, &spec)
            .map(|e| e.value)
            .map_err(quad_err("theta"))
    }

    /// `Θ₁(v)`.
    pub fn theta1(&self, v: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
        params.validate()?;
        self.theta1_unchecked(v, params)
    }

    fn theta1_unchecked(&self, v: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
        if v <= 0.0 {
            return Ok(0.0);
        }
        let plp = &params.path_loss;
        let s = params.streams as f64;
        self.theta_integral(params, |x| {
            let mut acc = 0.0;
            for state in LinkState::ALL {
                let pn = plp.state_probability(x, state);
                if pn > 0.0 {
                    let y = v * plp.phi(state) * x.powf(-plp.alpha(state));
                    acc += pn * one_minus_lt(y, s);
                }
            }
            x * acc
        })
    }

    /// `Θ₂(v₁, v₂)`, the joint-slot functional with interferer activity and
    /// link state shared between the two slots.
    pub fn theta2(&self, v1: f64, v2: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
        params.validate()?;
        self.theta2_unchecked(v1, v2, params)
    }

    fn theta2_unchecked(&self, v1: f64, v2: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
        self.theta2_coupled(v1, v2, 1.0, params)
    }

    /// Cross-window functional with interferer activity redrawn between the
    /// windows.
    pub fn theta2_per_window(&self, v1: f64, v2: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
        params.validate()?;
        self.theta2_coupled(v1, v2, params.activity, params)
    }

    /// `q` is the probability that an interferer active in the first window is
    /// active in the second: 1 for shared activity, `p` for fresh draws.
    fn theta2_coupled(&self, v1: f64, v2: f64, q: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
        if v1 <= 0.0 {
            return self.theta1_unchecked(v2, params);
        }
        if v2 <= 0.0 {
            return self.theta1_unchecked(v1, params);
        }
        let plp = &params.path_loss;
        let s = params.streams as f64;
        self.theta_integral(params, |x| {
            let mut acc = 0.0;
            for state in LinkState::ALL {
                let pn = plp.state_probability(x, state);
                if pn > 0.0 {
                    let l = plp.phi(state) * x.powf(-plp.alpha(state));
                    // 1 - g1 g2 = (1 - g1) + g1 (1 - g2) when q = 1
                    let h1 = one_minus_lt(v1 * l, s);
                    let h2 = one_minus_lt(v2 * l, s);
                    acc += pn * (h1 + h2 * (1.0 - q * h1));
                }
            }
            x * acc
        })
    }

    /// `Θ₃(v₁, v₂) = Θ₁(v₁ + v₂)`.
    pub fn theta3(&self, v1: f64, v2: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
        self.theta1(v1 + v2, params)
    }

    fn damping_coefficient(params: &SystemParams) -> f64 {
        2.0 * PI * params.lambda_density * params.activity
    }

    /// Finite `ln v` bracket carrying all but a negligible part of the outer
    /// integrals.
    fn log_bracket(&self, params: &SystemParams, quantity: &'static str) -> Result<(f64, f64), AnalyticError> {
        let c = Self::damping_coefficient(params);
        if c <= 0.0 {
            return Err(AnalyticError::Divergent(quantity));
        }
        let s_prime = params.diversity() as f64;
        let l_max = LinkState::ALL
            .iter()
            .filter(|&&n| params.path_loss.state_probability(params.link_distance, n) > 0.0)
            .map(|&n| params.serving_gain(n))
            .fold(0.0, f64::max);
        let u_min = (SERVING_CUTOFF / (s_prime * l_max)).ln();
        let mut u_max = (1.0 / l_max).ln();
        let mut step = 1.0;
        loop {
            let theta = self.theta1_unchecked(u_max.exp(), params)?;
            if c * theta >= DAMPING_CUTOFF {
                break;
            }
            u_max += step;
            step *= 1.5;
            if u_max > 690.0 {
                return Err(AnalyticError::Divergent(quantity));
            }
        }
        Ok((u_min.min(u_max - 1.0), u_max))
    }

    fn serving_breaks(params: &SystemParams, bracket: (f64, f64)) -> Vec<f64> {
        let s_prime = params.diversity() as f64;
        let mut breaks: Vec<f64> = LinkState::ALL
            .iter()
            .map(|&n| -(s_prime * params.serving_gain(n)).ln())
            .filter(|u| *u > bracket.0 && *u < bracket.1)
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks
    }

    fn stream_mean(&self, params: &SystemParams) -> Result<f64, AnalyticError> {
        let bracket = self.log_bracket(params, "mean rate")?;
        let c = Self::damping_coefficient(params);
        let s_prime = params.diversity() as f64;
        let r = params.link_distance;
        let plp = &params.path_loss;
        let failure = Mutex::new(None);
        let integrand = |u: f64| {
            let v = u.exp();
            let serving: f64 = LinkState::ALL
                .iter()
                .map(|&n| plp.state_probability(r, n) * one_minus_lt(v * params.serving_gain(n), s_prime))
                .sum();
            match self.theta1_unchecked(v, params) {
                Ok(t) => serving * (-c * t).exp(),
                Err(e) => {
                    failure.lock().unwrap().get_or_insert(e);
                    0.0
                }
            }
        };
        let est = integrate_with_breaks(
            integrand,
            bracket.0,
            bracket.1,
            &Self::serving_breaks(params, bracket),
            &self.spec,
        );
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        Ok(est.map_err(quad_err("mean rate"))?.value)
    }

    fn stream_cross(&self, q: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
        let bracket = self.log_bracket(params, "cross moment")?;
        let c = Self::damping_coefficient(params);
        let s_prime = params.diversity() as f64;
        let r = params.link_distance;
        let plp = &params.path_loss;
        let failure = Mutex::new(None);
        let integrand = |u1: f64, u2: f64| {
            let (v1, v2) = (u1.exp(), u2.exp());
            let serving: f64 = LinkState::ALL
                .iter()
                .map(|&n| {
                    let l = params.serving_gain(n);
                    plp.state_probability(r, n)
                        * one_minus_lt(v1 * l, s_prime)
                        * one_minus_lt(v2 * l, s_prime)
                })
                .sum();
            if serving == 0.0 {
                return 0.0;
            }
            match self.theta2_coupled(v1, v2, q, params) {
                Ok(t) => serving * (-c * t).exp(),
                Err(e) => {
                    failure.lock().unwrap().get_or_insert(e);
                    0.0
                }
            }
        };
        let est = integrate_rectangle(integrand, bracket, bracket, &self.spec);
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        Ok(est.map_err(quad_err("cross moment"))?.value)
    }

    fn stream_same(&self, params: &SystemParams) -> Result<f64, AnalyticError> {
        let bracket = self.log_bracket(params, "second moment")?;
        let c = Self::damping_coefficient(params);
        let s_prime = params.diversity() as f64;
        let r = params.link_distance;
        let plp = &params.path_loss;
        let failure = Mutex::new(None);
        let integrand = |u1: f64, u2: f64| {
            let (v1, v2) = (u1.exp(), u2.exp());
            let serving: f64 = LinkState::ALL
                .iter()
                .map(|&n| {
                    let l = params.serving_gain(n);
                    let (a1, a2) = (v1 * l, v2 * l);
                    // E[(1 - e^{-a1 H})(1 - e^{-a2 H})]
                    //   = (1 - g(a1)) - g(a2) (1 - g(a1 / (1 + a2)))
                    let k = one_minus_lt(a1, s_prime)
                        - lt(a2, s_prime) * one_minus_lt(a1 / (1.0 + a2), s_prime);
                    plp.state_probability(r, n) * k.max(0.0)
                })
                .sum();
            if serving == 0.0 {
                return 0.0;
            }
            match self.theta1_unchecked(v1 + v2, params) {
                Ok(t) => serving * (-c * t).exp(),
                Err(e) => {
                    failure.lock().unwrap().get_or_insert(e);
                    0.0
                }
            }
        };
        let est = integrate_rectangle(integrand, bracket, bracket, &self.spec);
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        Ok(est.map_err(quad_err("second moment"))?.value)
    }

    fn stream_moments(&self, params: &SystemParams) -> Result<StreamMoments, AnalyticError> {
        params.validate()?;
        let key = MomentKey::new(params);
        let cached = self.cache.lock().unwrap().get(&key).copied();
        let mut m = match cached {
            Some(m) => m,
            None => StreamMoments {
                mean: self.stream_mean(params)?,
                cross: self.stream_cross(1.0, params)?,
                same: self.stream_same(params)?,
                cross_window: None,
            },
        };
        if self.coupling == ActivityCoupling::PerWindow && m.cross_window.is_none() {
            m.cross_window = Some(if params.activity == 1.0 {
                m.cross
            } else {
                self.stream_cross(params.activity, params)?
            });
        }
        if cached != Some(m) {
            self.cache.lock().unwrap().insert(key, m);
        }
        Ok(m)
    }

    /// Mean block rate `μ_C` alone, without the double integrals.
    pub fn mean_block_rate(&self, params: &SystemParams) -> Result<f64, AnalyticError> {
        params.validate()?;
        let key = MomentKey::new(params);
        let mean = self.cache.lock().unwrap().get(&key).map(|m| m.mean);
        let mean = match mean {
            Some(m) => m,
            None => self.stream_mean(params)?,
        };
        Ok((params.block_length * params.streams) as f64 * mean)
    }

    pub fn lambda_cross(&self, params: &SystemParams) -> Result<f64, AnalyticError> {
        Ok(self.stream_moments(params)?.cross)
    }

    pub fn lambda_same(&self, params: &SystemParams) -> Result<f64, AnalyticError> {
        Ok(self.stream_moments(params)?.same)
    }

    pub fn moments(&self, params: &SystemParams) -> Result<MomentSet, AnalyticError> {
        let m = self.stream_moments(params)?;
        Ok(MomentSet {
            mu_c: (params.block_length * params.streams) as f64 * m.mean,
            lambda_cross: m.cross,
            lambda_same: m.same,
            lambda_cross_window: m.cross_window.unwrap_or(m.cross),
        })
    }

    /// Correlation of the aggregate rates of two disjoint windows of `t`
    /// slots with `s` streams each. Within a window, activity is common to
    /// runs of `run` slots.
    ///
    /// With `v₀ = Λ¹¹ - Λ¹²`, `c = Λ¹² - m²` and `c_w` the cross-window
    /// covariance, the window variance divided by `t²s²` is
    /// `v₀/(ts) + (run·c + (t - run)·c_w)/t`.
    fn window_rcc(m: &StreamMoments, s: f64, t: f64, run: f64) -> Result<f64, AnalyticError> {
        let m2 = m.mean * m.mean;
        let within = m.cross - m2;
        let across = m.cross_window.unwrap_or(m.cross) - m2;
        let variance = (m.same - m.cross) / (t * s) + (run * within + (t - run) * across) / t;
        if !(variance > 1e-300) || !variance.is_finite() {
            return Err(AnalyticError::DegenerateVariance { variance });
        }
        Ok(across / variance)
    }

    /// Block coefficient of B-IR.
    pub fn block_rcc(&self, params: &SystemParams) -> Result<f64, AnalyticError> {
        self.block_rcc_for(params, Scheme::Bir)
    }

    /// Correlation of the aggregate rates of two windows of `T` slots. For RR
    /// activity is redrawn every slot, so the scheme matters only under
    /// [`ActivityCoupling::PerWindow`].
    pub fn block_rcc_for(&self, params: &SystemParams, scheme: Scheme) -> Result<f64, AnalyticError> {
        let m = self.stream_moments(params)?;
        let t = params.block_length as f64;
        let run = match scheme {
            Scheme::Bir => t,
            Scheme::Rr => 1.0,
        };
        Self::window_rcc(&m, params.streams as f64, t, run)
    }

    /// Slot coefficient; does not depend on `T`.
    pub fn slot_rcc(&self, params: &SystemParams) -> Result<f64, AnalyticError> {
        let m = self.stream_moments(params)?;
        Self::window_rcc(&m, params.streams as f64, 1.0, 1.0)
    }

    pub fn rcc(&self, params: &SystemParams) -> Result<RccResult, AnalyticError> {
        self.rcc_for(params, Scheme::Bir)
    }

    pub fn rcc_for(&self, params: &SystemParams, scheme: Scheme) -> Result<RccResult, AnalyticError> {
        Ok(RccResult {
            block_rcc: self.block_rcc_for(params, scheme)?,
            slot_rcc: self.slot_rcc(params)?,
        })
    }

    /// Standard deviation of the block rate `C[b]`.
    pub fn block_rate_std(&self, params: &SystemParams) -> Result<f64, AnalyticError> {
        let m = self.stream_moments(params)?;
        let n = (params.block_length * params.streams) as f64;
        // E[C²] - μ_C² = n (Λ¹¹ - Λ¹²) + n² (Λ¹² - m²)
        let variance = n * (m.same - m.cross) + n * n * (m.cross - m.mean * m.mean);
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(AnalyticError::DegenerateVariance { variance });
        }
        Ok(variance.sqrt())
    }

    /// `P{C[b] ≥ R̄}` under a Gaussian fit to the first two moments of the
    /// block rate. The variance is the second moment minus the squared mean.
    pub fn coverage_normal(&self, params: &SystemParams, rate_threshold: f64) -> Result<f64, AnalyticError> {
        let m = self.stream_moments(params)?;
        let mu = (params.block_length * params.streams) as f64 * m.mean;
        let sigma = self.block_rate_std(params)?;
        Ok(q_function((rate_threshold - mu) / sigma))
    }
}
