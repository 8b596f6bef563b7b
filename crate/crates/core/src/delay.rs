//! Mean transmission delay (MTD) of repetitive retransmission (RR) and blocked
//! incremental redundancy (B-IR): product-form approximations, bounds and the
//! high-mobility counterparts.
//!
//! The low-mobility approximations replace the conditional success event by
//! "every interferer is individually too weak", which turns the expectation
//! over the interferer field into a probability generating functional:
//!
//! `E[ψ_{τ,k}] ≈ Σ_n p_n(r) exp(-2π Δ_{τ,k}(β; n))` with
//! `Δ_{τ,k} = λ Σ_{n'} ∫ x p_{n'}(x) (1 - (p F(a)^{Sτ} + 1 - p)^k) dx`,
//! `a = L_n(r) / (β L_{n'}(x))` and `F` the CDF of the gain ratio law.

use crate::analytic::{Analytic, AnalyticError};
use crate::model::{LinkState, ParamError, Scheme, SystemParams};
use crate::quadrature::{integrate_semi_infinite, QuadratureError, QuadratureSpec};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("delta functional: {0}")]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("mean delay is unbounded: {0}")]
    Divergent(&'static str),
    #[error("coverage is zero, delay is unbounded")]
    ZeroCoverage,
    #[error("invalid argument {field}: {reason}")]
    Argument { field: &'static str, reason: String },
}

/// `Beta'(shape_num, shape_den)`: the law of `X / Y` with `X ~ Gamma(shape_num)`
/// and `Y ~ Gamma(shape_den)` independent. Density
/// `z^{a-1} (1+z)^{-(a+b)} / B(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaPrimeLaw {
    pub shape_num: usize,
    pub shape_den: usize,
}

impl BetaPrimeLaw {
    pub fn new(shape_num: usize, shape_den: usize) -> Result<Self, DelayError> {
        if shape_num < 1 || shape_den < 1 {
            return Err(DelayError::Argument {
                field: "beta prime shapes",
                reason: format!("must be >= 1, got ({shape_num}, {shape_den})"),
            });
        }
        Ok(Self { shape_num, shape_den })
    }

    /// `P{X/Y > x}`, accurate where the CDF is close to one.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x.is_infinite() {
            return 0.0;
        }
        beta_reg(self.shape_den as f64, self.shape_num as f64, 1.0 / (1.0 + x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        beta_prime_cdf(x, *self)
    }

    pub fn pdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return if self.shape_num == 1 { 1.0 * self.norm() } else { 0.0 };
        }
        let (a, b) = (self.shape_num as f64, self.shape_den as f64);
        ((a - 1.0) * z.ln() - (a + b) * z.ln_1p()).exp() * self.norm()
    }

    fn norm(&self) -> f64 {
        let (a, b) = (self.shape_num as f64, self.shape_den as f64);
        (-statrs::function::beta::ln_beta(a, b)).exp()
    }
}

/// `P{X/Y ≤ x}` for `X/Y ~ law`, via the regularized incomplete beta function
/// at `x / (1 + x)`.
pub fn beta_prime_cdf(x: f64, law: BetaPrimeLaw) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if law.shape_num == 1 && law.shape_den == 1 {
        return x / (1.0 + x);
    }
    beta_reg(law.shape_num as f64, law.shape_den as f64, x / (1.0 + x))
}

/// Mapping from the block rate threshold `R̄` to the per-stream SIR threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdConvention {
    /// `β_τ = e^{R̄/(Sτ)} - 1`.
    #[default]
    PerStream,
    /// `β_τ = e^{R̄/τ} - 1`.
    PerSlot,
}

/// Which gain ratio law enters the delta functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatioLaw {
    /// `Beta'(S', S)`, the density `z^{S'-1} (1+z)^{-(N^r+1)}`.
    DiversityOverStreams,
    /// `Beta'(S, S')`, the law of interferer gain over serving gain when the
    /// two are `Gamma(S)` and `Gamma(S')`.
    #[default]
    StreamsOverDiversity,
}

impl RatioLaw {
    pub fn law(self, params: &SystemParams) -> BetaPrimeLaw {
        let (s, sp) = (params.streams, params.diversity());
        match self {
            RatioLaw::DiversityOverStreams => BetaPrimeLaw { shape_num: sp, shape_den: s },
            RatioLaw::StreamsOverDiversity => BetaPrimeLaw { shape_num: s, shape_den: sp },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayKind {
    AnalyticApprox,
    LowerBound,
    UpperBound,
    MonteCarlo,
}

/// A mean delay in slots with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayEstimate {
    pub value: f64,
    pub kind: DelayKind,
    /// Half-width of the 95% confidence interval; Monte Carlo only.
    pub ci_halfwidth: Option<f64>,
}

impl DelayEstimate {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            kind: DelayKind::AnalyticApprox,
            ci_halfwidth: None,
        }
    }

    fn bound(value: f64, kind: DelayKind) -> Self {
        Self {
            value,
            kind,
            ci_halfwidth: None,
        }
    }
}

/// Which product-form expression is used for the B-IR delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BirForm {
    /// `(T/p) Σ_n p_n(r) e^{-2πΔ_{T,-1}(β_T; n)}`: the whole block decoded as
    /// one event.
    #[default]
    Block,
    /// `(T/p) Σ_n p_n(r) e^{-2πΔ_{1,-T}(β_T; n)}`: the block success
    /// probability replaced by the `T`-th power of a slot success probability.
    /// A much looser bound; grows like `(1-p)^{-T}` near interferers.
    SlotPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayOptions {
    pub threshold: ThresholdConvention,
    pub ratio_law: RatioLaw,
    pub bir_form: BirForm,
}

/// Analytic delay evaluator.
#[derive(Debug, Clone)]
pub struct DelayModel {
    pub options: DelayOptions,
    spec: QuadratureSpec,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self::new(DelayOptions::default(), QuadratureSpec::default().with_tolerances(1e-8, 1e-12))
    }
}

impl DelayModel {
    pub fn new(options: DelayOptions, spec: QuadratureSpec) -> Self {
        Self { options, spec }
    }

    pub fn with_options(options: DelayOptions) -> Self {
        Self {
            options,
            ..Self::default()
        }
    }

    /// Per-stream SIR threshold `β_τ` for the block threshold `R̄`.
    pub fn beta(&self, rate_threshold: f64, tau: usize, params: &SystemParams) -> f64 {
        let scale = match self.options.threshold {
            ThresholdConvention::PerStream => (params.streams * tau) as f64,
            ThresholdConvention::PerSlot => tau as f64,
        };
        (rate_threshold / scale).exp_m1()
    }

    /// `Δ_{τ,k}(β)` for serving state `serving`. Non-positive for `k ≤ -1`.
    pub fn delta(
        &self,
        tau: usize,
        k: i32,
        beta: f64,
        serving: LinkState,
        params: &SystemParams,
    ) -> Result<f64, DelayError> {
        params.validate()?;
        if k > -1 {
            return Err(DelayError::Argument {
                field: "k",
                reason: format!("must be <= -1, got {k}"),
            });
        }
        if tau < 1 {
            return Err(DelayError::Argument {
                field: "tau",
                reason: "must be >= 1".into(),
            });
        }
        if !(beta > 0.0) {
            return Err(DelayError::Argument {
                field: "beta",
                reason: format!("must be > 0, got {beta}"),
            });
        }
        let lambda = params.lambda_density;
        let p = params.activity;
        if lambda == 0.0 {
            return Ok(0.0);
        }
        if p >= 1.0 {
            // every interferer transmits in every slot, so a nearby one blocks
            // the link forever with positive probability
            return Err(DelayError::Divergent("activity 1 with nonzero density"));
        }
        let law = self.options.ratio_law.law(params);
        let plp = &params.path_loss;
        let serving_gain = params.serving_gain(serving);
        let power = (params.streams * tau) as f64;
        let k = k as f64;
        let pivot = plp.kink().unwrap_or(1.0);
        let integrand = |x: f64| {
            let mut acc = 0.0;
            for state in LinkState::ALL {
                let pn = plp.state_probability(x, state);
                if pn <= 0.0 {
                    continue;
                }
                let a = serving_gain / (beta * plp.phi(state) * x.powf(-plp.alpha(state)));
                let sf = law.sf(a);
                let ln_f = if sf < 0.5 { (-sf).ln_1p() } else { law.cdf(a).ln() };
                // 1 - F^{Sτ}
                let miss = -(power * ln_f).exp_m1();
                // 1 - (1 - p miss)^k
                let term = -(k * (-p * miss).ln_1p()).exp_m1();
                acc += pn * term;
            }
            x * acc
        };
        let est = integrate_semi_infinite(integrand, &self.spec.with_pivot(pivot))?;
        Ok(lambda * est.value)
    }

    /// `Σ_n p_n(r) exp(-2π Δ_{τ,k}(β; n))`.
    fn serving_average(&self, tau: usize, k: i32, beta: f64, params: &SystemParams) -> Result<f64, DelayError> {
        let mut acc = 0.0;
        for n in LinkState::ALL {
            let pn = params.path_loss.state_probability(params.link_distance, n);
            if pn > 0.0 {
                let d = self.delta(tau, k, beta, n, params)?;
                acc += pn * (-2.0 * std::f64::consts::PI * d).exp();
            }
        }
        Ok(acc)
    }

    fn check_threshold(rate_threshold: f64) -> Result<(), DelayError> {
        if !(rate_threshold >= 0.0) || !rate_threshold.is_finite() {
            return Err(DelayError::Argument {
                field: "rate_threshold",
                reason: format!("must be finite and >= 0, got {rate_threshold}"),
            });
        }
        Ok(())
    }

    /// RR delay `(1/p) Σ_n p_n(r) e^{-2πΔ_{1,-1}(β_1; n)}`.
    pub fn mtd_rr(&self, rate_threshold: f64, params: &SystemParams) -> Result<DelayEstimate, DelayError> {
        self.mtd_bir(rate_threshold, 1, params)
    }

    /// B-IR delay in the form selected by [`BirForm`]. At `T = 1` both forms
    /// are the RR expression.
    pub fn mtd_bir(
        &self,
        rate_threshold: f64,
        block_length: usize,
        params: &SystemParams,
    ) -> Result<DelayEstimate, DelayError> {
        params.validate()?;
        Self::check_threshold(rate_threshold)?;
        if block_length < 1 {
            return Err(DelayError::Argument {
                field: "block_length",
                reason: "must be >= 1".into(),
            });
        }
        let t = block_length as f64;
        let p = params.activity;
        if rate_threshold == 0.0 || params.lambda_density == 0.0 {
            return Ok(DelayEstimate::analytic(t / p));
        }
        let beta = self.beta(rate_threshold, block_length, params);
        let (tau, k) = match self.options.bir_form {
            BirForm::Block => (block_length, -1),
            BirForm::SlotPower => (1, -(block_length as i32)),
        };
        let avg = self.serving_average(tau, k, beta, params)?;
        Ok(DelayEstimate::analytic(t * avg / p))
    }

    /// Lower and upper RR-based bounds on the B-IR delay:
    /// `T·D_RR(R̄/T)/(2^T - 1)` and `T·D_RR(R̄)`.
    pub fn mtd_sandwich(
        &self,
        rate_threshold: f64,
        block_length: usize,
        params: &SystemParams,
    ) -> Result<(DelayEstimate, DelayEstimate), DelayError> {
        let t = block_length as f64;
        let shifted = self.mtd_rr(rate_threshold / t, params)?.value;
        let full = self.mtd_rr(rate_threshold, params)?.value;
        let lower = t * shifted / (2f64.powi(block_length as i32) - 1.0);
        Ok((
            DelayEstimate::bound(lower, DelayKind::LowerBound),
            DelayEstimate::bound(t * full, DelayKind::UpperBound),
        ))
    }

    /// High-mobility delay `T / q̄` (B-IR) or `1 / q̄` (RR) with `q̄` the
    /// normal-approximation coverage of one block.
    pub fn mtd_high_mobile(
        &self,
        analytic: &Analytic,
        rate_threshold: f64,
        block_length: usize,
        params: &SystemParams,
        scheme: Scheme,
    ) -> Result<DelayEstimate, DelayError> {
        Self::check_threshold(rate_threshold)?;
        let t = match scheme {
            Scheme::Rr => 1,
            Scheme::Bir => block_length.max(1),
        };
        let block = (*params).with_block_length(t);
        let q = analytic.coverage_normal(&block, rate_threshold)?;
        if !(q > 0.0) {
            return Err(DelayError::ZeroCoverage);
        }
        Ok(DelayEstimate::analytic(t as f64 / q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn pdf_oracle(x: f64, law: BetaPrimeLaw) -> f64 {
        let spec = QuadratureSpec::default().with_tolerances(1e-12, 1e-15);
        integrate(|z| law.pdf(z), 0.0, x, &spec).unwrap().value
    }

    #[test]
    fn beta_prime_closed_form_and_limits() {
        let law = BetaPrimeLaw::new(1, 1).unwrap();
        assert_eq!(beta_prime_cdf(1.0, law), 0.5);
        for x in [0.01, 0.3, 2.0, 17.0] {
            assert_eq!(beta_prime_cdf(x, law), x / (1.0 + x));
        }
        let law = BetaPrimeLaw::new(13, 4).unwrap();
        assert_eq!(beta_prime_cdf(0.0, law), 0.0);
        assert_eq!(beta_prime_cdf(f64::INFINITY, law), 1.0);
        assert!(beta_prime_cdf(1e9, law) > 1.0 - 1e-12);
        assert!(BetaPrimeLaw::new(0, 3).is_err());
    }

    #[test]
    fn beta_prime_matches_density_quadrature() {
        for (a, b) in [(1, 1), (3, 2), (13, 4), (4, 13), (1, 16), (16, 1)] {
            let law = BetaPrimeLaw::new(a, b).unwrap();
            for x in [0.05, 0.5, 1.0, 3.0, 20.0] {
                let c = beta_prime_cdf(x, law);
                let o = pdf_oracle(x, law);
                assert!((c - o).abs() < 1e-9, "({a},{b}) x={x}: {c} vs {o}");
                assert!((law.sf(x) + c - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_limits() {
        let m = DelayModel::default();
        let p = SystemParams::default();
        let beta = m.beta(2.0, 1, &p);
        let d = m.delta(1, -1, beta, LinkState::Los, &p).unwrap();
        assert!(d < 0.0);
        let empty = p.with_density(0.0);
        assert_eq!(m.delta(1, -1, beta, LinkState::Los, &empty).unwrap(), 0.0);
        let quiet = p.with_activity(1e-9);
        assert!(m.delta(1, -1, beta, LinkState::Los, &quiet).unwrap().abs() < 1e-6);
        assert!(m.delta(1, 0, beta, LinkState::Los, &p).is_err());
    }

    #[test]
    fn trivial_delays() {
        let m = DelayModel::default();
        let p = SystemParams::default().with_density(0.0);
        assert!((m.mtd_rr(2.0, &p).unwrap().value - 1.0 / 0.6).abs() < 1e-12);
        assert!((m.mtd_bir(2.0, 4, &p).unwrap().value - 4.0 / 0.6).abs() < 1e-12);
        let p1 = p.with_activity(1.0);
        assert_eq!(m.mtd_rr(2.0, &p1).unwrap().value, 1.0);
        let busy = SystemParams::default().with_activity(1.0);
        assert!(matches!(m.mtd_rr(2.0, &busy), Err(DelayError::Divergent(_))));
    }

    #[test]
    fn bir_at_unit_block_is_rr() {
        let m = DelayModel::default();
        let p = SystemParams::default();
        for r in [0.5, 2.0, 6.0] {
            assert_eq!(m.mtd_bir(r, 1, &p).unwrap().value, m.mtd_rr(r, &p).unwrap().value);
        }
        let (lo, hi) = m.mtd_sandwich(2.0, 1, &p).unwrap();
        assert_eq!(lo.value, hi.value);
    }

    #[test]
    fn rr_delay_monotone_in_threshold_and_density() {
        let m = DelayModel::default();
        let base = SystemParams::default();
        let mut prev = 0.0;
        for r in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let d = m.mtd_rr(r, &base).unwrap().value;
            assert!(d >= prev && d >= 1.0);
            prev = d;
        }
        let mut prev = 0.0;
        for lam in [1e-5, 1e-4, 1e-3, 3e-3] {
            let d = m.mtd_rr(2.0, &base.with_density(lam)).unwrap().value;
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn high_mobile_limits() {
        let m = DelayModel::default();
        let a = Analytic::default();
        let p = SystemParams::default();
        let d = m.mtd_high_mobile(&a, 1e-9, 4, &p, Scheme::Bir).unwrap().value;
        assert!((4.0..4.0 / 0.5).contains(&d));
        let hm = m.mtd_high_mobile(&a, 2.0, 1, &p, Scheme::Rr).unwrap().value;
        let lm = m.mtd_rr(2.0, &p).unwrap().value;
        assert!(hm <= lm);
    }
}
