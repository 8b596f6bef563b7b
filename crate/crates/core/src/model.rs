//! Network parameters and the LOS/NLOS path-loss model shared by the analytic
//! and Monte Carlo engines.
//!
//! A link at distance `x` is line-of-sight with probability `p_L(x)` and then
//! has power gain `phi_L * x^-alpha_L`; otherwise it is `phi_N * x^-alpha_N`.
//! The default LOS probability is the ITU-R UMi form
//!
//! ```text
//! p_L(x) = min(D0 / x, 1) * (1 - exp(-x / D1)) + exp(-x / D1)
//! ```
//!
//! Transmit power and its equal split across streams cancel in every SIR, so
//! they are not inputs here. The network is interference-limited.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("path_loss.{field}: {reason}")]
    PathLoss { field: &'static str, reason: String },
    #[error("{field}: {reason}")]
    System { field: &'static str, reason: String },
    #[error("path loss is singular at distance {0}")]
    SingularDistance(f64),
}

/// Propagation state of a single link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkState {
    Los,
    Nlos,
}

impl LinkState {
    pub const ALL: [LinkState; 2] = [LinkState::Los, LinkState::Nlos];
}

/// How interferer activity relates across the two windows of a correlation
/// measurement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityCoupling {
    /// One activity draw per interferer for the whole transmission window.
    #[default]
    Shared,
    /// Fresh activity per slot (RR) or per block (B-IR).
    PerWindow,
}

/// Retransmission scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Repetitive retransmission (type-I ARQ); each slot stands alone.
    #[serde(rename = "rr")]
    Rr,
    /// Blocked incremental redundancy over blocks of `T` slots.
    #[serde(rename = "bir")]
    Bir,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rr => "rr",
            Scheme::Bir => "bir",
        }
    }
}

/// Distance-dependent LOS probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LosModel {
    /// ITU-R UMi using the `d0`/`d1` distances of [`PathLossParams`].
    Umi,
    /// Distance-independent LOS probability. `Constant(0.0)` is the
    /// single-slope (all-NLOS) model.
    Constant { probability: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossParams {
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub phi_los: f64,
    pub phi_nlos: f64,
    /// Near-field distance in meters.
    pub d0: f64,
    /// Far-field distance in meters.
    pub d1: f64,
    pub los_model: LosModel,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            alpha_los: 2.09,
            alpha_nlos: 3.75,
            phi_los: 1.0,
            phi_nlos: 1.0,
            d0: 6.0,
            d1: 12.0,
            los_model: LosModel::Umi,
        }
    }
}

impl PathLossParams {
    /// Single-slope model: every link is NLOS with exponent `alpha`.
    pub fn single_slope(alpha: f64, phi: f64) -> Self {
        Self {
            alpha_los: alpha,
            alpha_nlos: alpha,
            phi_los: phi,
            phi_nlos: phi,
            los_model: LosModel::Constant { probability: 0.0 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let bad = |field, reason: &str| {
            Err(ParamError::PathLoss {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha_los > 0.0 && self.alpha_los.is_finite()) {
            return bad("alpha_los", "must be finite and > 0");
        }
        if !(self.alpha_nlos >= self.alpha_los && self.alpha_nlos.is_finite()) {
            return bad("alpha_nlos", "must be finite and >= alpha_los");
        }
        if !(self.phi_los > 0.0 && self.phi_los.is_finite()) {
            return bad("phi_los", "must be finite and > 0");
        }
        if !(self.phi_nlos > 0.0 && self.phi_nlos.is_finite()) {
            return bad("phi_nlos", "must be finite and > 0");
        }
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return bad("d0", "must be finite and > 0");
        }
        if !(self.d1 > 0.0 && self.d1.is_finite()) {
            return bad("d1", "must be finite and > 0");
        }
        if let LosModel::Constant { probability } = self.los_model {
            if !(0.0..=1.0).contains(&probability) {
                return bad("los_model.probability", "must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn alpha(&self, state: LinkState) -> f64 {
        match state {
            LinkState::Los => self.alpha_los,
            LinkState::Nlos => self.alpha_nlos,
        }
    }

    pub fn phi(&self, state: LinkState) -> f64 {
        match state {
            LinkState::Los => self.phi_los,
            LinkState::Nlos => self.phi_nlos,
        }
    }

    /// Probability that a link at `x` is in `state`.
    pub fn state_probability(&self, x: f64, state: LinkState) -> f64 {
        let los = los_probability(x, self);
        match state {
            LinkState::Los => los,
            LinkState::Nlos => 1.0 - los,
        }
    }

    /// Breakpoint of the LOS probability, if it has one.
    pub fn kink(&self) -> Option<f64> {
        match self.los_model {
            LosModel::Umi => Some(self.d0),
            LosModel::Constant { .. } => None,
        }
    }
}

/// LOS probability at distance `x >= 0`. Equals 1 on `[0, d0]` under UMi.
pub fn los_probability(x: f64, plp: &PathLossParams) -> f64 {
    match plp.los_model {
        LosModel::Constant { probability } => probability,
        LosModel::Umi => {
            if x <= plp.d0 {
                return 1.0;
            }
            let e = (-x / plp.d1).exp();
            ((plp.d0 / x) * (1.0 - e) + e).clamp(0.0, 1.0)
        }
    }
}

/// Power gain `phi * x^-alpha` of a link in `state`.
pub fn path_loss_gain(x: f64, state: LinkState, plp: &PathLossParams) -> Result<f64, ParamError> {
    if !(x > 0.0) {
        return Err(ParamError::SingularDistance(x));
    }
    Ok(plp.phi(state) * x.powf(-plp.alpha(state)))
}

/// Bernoulli draw of the link state at distance `x`.
pub fn sample_link_state<R: Rng + ?Sized>(x: f64, plp: &PathLossParams, rng: &mut R) -> LinkState {
    let p = los_probability(x, plp);
    if p >= 1.0 || rng.random::<f64>() < p {
        LinkState::Los
    } else {
        LinkState::Nlos
    }
}

/// Full parameter tuple of the bipolar network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    /// Transmitters per square meter.
    pub lambda_density: f64,
    /// Per-slot (RR) or per-block (B-IR) transmit probability.
    pub activity: f64,
    /// Transmitter-receiver distance in meters.
    pub link_distance: f64,
    pub streams: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub block_length: usize,
    /// Rate threshold in nat/s/Hz.
    pub rate_threshold: f64,
    pub path_loss: PathLossParams,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            lambda_density: 1e-3,
            activity: 0.6,
            link_distance: 15.0,
            streams: 4,
            tx_antennas: 16,
            rx_antennas: 16,
            block_length: 1,
            rate_threshold: 2.0,
            path_loss: PathLossParams::default(),
        }
    }
}

impl SystemParams {
    /// Diversity order of the post-ZF intended gain, `Nr - S + 1`.
    pub fn diversity(&self) -> usize {
        self.rx_antennas + 1 - self.streams
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let bad = |field, reason: String| Err(ParamError::System { field, reason });
        if !(self.lambda_density >= 0.0 && self.lambda_density.is_finite()) {
            return bad("lambda_density", "must be finite and >= 0".into());
        }
        if !(self.activity > 0.0 && self.activity <= 1.0) {
            return bad("activity", "must lie in (0, 1]".into());
        }
        if !(self.link_distance > 0.0 && self.link_distance.is_finite()) {
            return bad("link_distance", "must be finite and > 0".into());
        }
        if self.tx_antennas == 0 {
            return bad("tx_antennas", "must be >= 1".into());
        }
        if self.rx_antennas == 0 {
            return bad("rx_antennas", "must be >= 1".into());
        }
        let max_streams = self.tx_antennas.min(self.rx_antennas);
        if self.streams == 0 || self.streams > max_streams {
            return bad(
                "streams",
                format!(
                    "must satisfy 1 <= streams <= min(tx_antennas, rx_antennas) = {max_streams}, got {}",
                    self.streams
                ),
            );
        }
        if self.block_length == 0 {
            return bad("block_length", "must be >= 1".into());
        }
        if !(self.rate_threshold >= 0.0 && self.rate_threshold.is_finite()) {
            return bad("rate_threshold", "must be finite and >= 0".into());
        }
        self.path_loss.validate()
    }

    /// Gain of the serving link when it is in `state`.
    pub fn serving_gain(&self, state: LinkState) -> f64 {
        let plp = &self.path_loss;
        plp.phi(state) * self.link_distance.powf(-plp.alpha(state))
    }

    pub fn with_streams(mut self, streams: usize) -> Self {
        self.streams = streams;
        self
    }

    pub fn with_block_length(mut self, t: usize) -> Self {
        self.block_length = t;
        self
    }

    pub fn with_density(mut self, lambda: f64) -> Self {
        self.lambda_density = lambda;
        self
    }

    pub fn with_activity(mut self, p: f64) -> Self {
        self.activity = p;
        self
    }

    pub fn with_rate_threshold(mut self, r: f64) -> Self {
        self.rate_threshold = r;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn umi() -> PathLossParams {
        PathLossParams::default()
    }

    #[test]
    fn near_field_is_always_los() {
        assert_eq!(los_probability(3.0, &umi()), 1.0);
        assert_eq!(los_probability(0.0, &umi()), 1.0);
        assert_eq!(los_probability(6.0, &umi()), 1.0);
    }

    #[test]
    fn los_probability_hand_value() {
        // 0.25 (1 - e^-2) + e^-2
        let e2 = (-2.0f64).exp();
        let expected = 0.25 * (1.0 - e2) + e2;
        assert!((los_probability(24.0, &umi()) - expected).abs() < 1e-15);
        assert!((expected - 0.3515).abs() < 1e-4);
    }

    #[test]
    fn los_probability_vanishes_far_away() {
        assert!(los_probability(1e9, &umi()) < 1e-8);
    }

    #[test]
    fn los_probability_is_continuous_at_d0() {
        let plp = umi();
        let left = los_probability(plp.d0 - 1e-9, &plp);
        let right = los_probability(plp.d0 + 1e-9, &plp);
        assert!((left - right).abs() < 1e-8);
    }

    #[test]
    fn gain_values() {
        let plp = umi();
        assert_eq!(path_loss_gain(1.0, LinkState::Los, &plp).unwrap(), 1.0);
        assert_eq!(path_loss_gain(1.0, LinkState::Nlos, &plp).unwrap(), 1.0);
        let g = path_loss_gain(2.0, LinkState::Nlos, &plp).unwrap();
        assert!((g - 2f64.powf(-3.75)).abs() < 1e-15);
        assert!((g - 0.0743).abs() < 1e-4);
        assert!(matches!(
            path_loss_gain(0.0, LinkState::Los, &plp),
            Err(ParamError::SingularDistance(_))
        ));
    }

    #[test]
    fn nlos_weaker_than_los_beyond_unit_distance() {
        let plp = umi();
        for x in [1.0, 1.5, 10.0, 300.0] {
            let l = path_loss_gain(x, LinkState::Los, &plp).unwrap();
            let n = path_loss_gain(x, LinkState::Nlos, &plp).unwrap();
            assert!(n <= l);
        }
    }

    #[test]
    fn link_state_sampling_is_deterministic_and_certain_in_near_field() {
        let plp = umi();
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (1..200).map(|i| i as f64 * 0.7).collect();
        let sa: Vec<_> = xs.iter().map(|&x| sample_link_state(x, &plp, &mut a)).collect();
        let sb: Vec<_> = xs.iter().map(|&x| sample_link_state(x, &plp, &mut b)).collect();
        assert_eq!(sa, sb);
        for (x, s) in xs.iter().zip(&sa) {
            if *x <= plp.d0 {
                assert_eq!(*s, LinkState::Los);
            }
        }
    }

    #[test]
    fn link_state_frequency_matches_probability() {
        let plp = umi();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| sample_link_state(24.0, &plp, &mut rng) == LinkState::Los)
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.3515).abs() < 0.002, "LOS fraction {frac}");
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        // 10^5 draws at each of a few distances; Pearson chi-square with one
        // degree of freedom per distance, compared against the 0.1% quantile
        // of chi-square(5).
        let plp = umi();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000usize;
        let mut stat = 0.0;
        for x in [8.0, 15.0, 24.0, 60.0, 200.0] {
            let p = los_probability(x, &plp);
            let los = (0..n)
                .filter(|_| sample_link_state(x, &plp, &mut rng) == LinkState::Los)
                .count() as f64;
            let e1 = p * n as f64;
            let e0 = (1.0 - p) * n as f64;
            stat += (los - e1).powi(2) / e1 + ((n as f64 - los) - e0).powi(2) / e0;
        }
        assert!(stat < 20.52, "chi-square statistic {stat}");
    }

    #[test]
    fn validation_messages_name_fields() {
        let p = SystemParams {
            streams: 20,
            ..SystemParams::default()
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("streams"), "{err}");
        let mut p = SystemParams::default();
        p.path_loss.alpha_nlos = 1.0;
        assert!(p.validate().unwrap_err().to_string().contains("alpha_nlos"));
        assert!(SystemParams::default().validate().is_ok());
    }

    #[test]
    fn diversity_order() {
        let p = SystemParams::default().with_streams(4);
        assert_eq!(p.diversity(), 13);
    }

    proptest::proptest! {
        #[test]
        fn los_probability_in_unit_interval(x in 0.0f64..1e6) {
            let p = los_probability(x, &umi());
            proptest::prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn gain_strictly_decreasing(x in 0.01f64..1e4, dx in 1e-3f64..10.0) {
            let plp = umi();
            for s in LinkState::ALL {
                let a = path_loss_gain(x, s, &plp).unwrap();
                let b = path_loss_gain(x + dx, s, &plp).unwrap();
                proptest::prop_assert!(b < a);
            }
        }
    }
}
