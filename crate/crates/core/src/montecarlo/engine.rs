use super::network::{field_tail, sample_network_in_disk, NetworkRealization};
use super::stats::{pearson, MeanCi};
use super::{trial_rng, McError, SimConfig};
use crate::analytic::RccResult;
use crate::delay::{DelayEstimate, DelayKind};
use crate::model::{path_loss_gain, ActivityCoupling, Scheme, SystemParams};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

/// Deterministic inputs shared by every trial of one run.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RunContext {
    pub radius: f64,
    /// Mean of `Σ L` and `Σ L²` over the field beyond the disk.
    pub tail: (f64, f64),
}

impl RunContext {
    pub fn new(params: &SystemParams, sim: &SimConfig) -> Result<Self, McError> {
        params.validate()?;
        sim.validate()?;
        let radius = sim.resolved_radius(params)?;
        let tail = if sim.tail_compensation && params.lambda_density > 0.0 {
            let lam = params.lambda_density;
            (
                lam * field_tail(radius, &params.path_loss, 1)?,
                lam * field_tail(radius, &params.path_loss, 2)?,
            )
        } else {
            (0.0, 0.0)
        };
        Ok(Self { radius, tail })
    }

    pub fn realization(&self, params: &SystemParams, seed: u64, trial: u64) -> (NetworkRealization, rand_chacha::ChaCha8Rng) {
        let mut rng = trial_rng(seed, trial);
        let net = sample_network_in_disk(params, self.radius, trial, &mut rng);
        (net, rng)
    }
}

/// Per-realization sampler of post-processing SIRs.
#[derive(Debug, Clone)]
pub struct LinkSampler {
    pub(crate) serving_gain: f64,
    /// Path gains of the explicitly simulated interferers.
    pub(crate) near: Vec<f64>,
    pub(crate) far: Option<Gamma<f64>>,
    serving_fading: Gamma<f64>,
    interferer_fading: Gamma<f64>,
    pub(crate) activity: f64,
    pub(crate) streams: usize,
    /// Activity marks of the explicit interferers under shared activity.
    fixed_marks: Option<Vec<bool>>,
}

impl LinkSampler {
    /// Under shared interferer activity the activity marks are drawn here
    /// from `rng`; otherwise `rng` is not touched.
    pub fn new<R: Rng + ?Sized>(
        realization: &NetworkRealization,
        params: &SystemParams,
        sim: &SimConfig,
        rng: &mut R,
    ) -> Result<Self, McError> {
        let ctx = RunContext::new(params, sim)?;
        Self::with_context(realization, params, sim, &ctx, rng)
    }

    pub(crate) fn with_context<R: Rng + ?Sized>(
        realization: &NetworkRealization,
        params: &SystemParams,
        sim: &SimConfig,
        ctx: &RunContext,
        rng: &mut R,
    ) -> Result<Self, McError> {
        let plp = &params.path_loss;
        let mut gains: Vec<f64> = realization
            .interferers
            .iter()
            .map(|i| path_loss_gain(i.distance, i.state, plp))
            .collect::<Result<_, _>>()?;
        let k = sim.exact_interferers.min(gains.len());
        if k < gains.len() {
            gains.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
        }
        let far_gains = gains.split_off(k);
        let p = params.activity;
        let s = params.streams as f64;
        let shared = sim.interferer_activity == ActivityCoupling::Shared;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for g in &far_gains {
            if !shared || rng.random::<f64>() < p {
                sum += g;
                sum_sq += g * g;
            }
        }
        let (mean, var) = if shared {
            // marks known: only the Gamma(S) fading is random
            (s * sum + p * s * ctx.tail.0, s * sum_sq + ctx.tail.1 * p * s * (s + 1.0))
        } else {
            // A·G with A ~ Bernoulli(p), G ~ Gamma(S): E = pS, E[(AG)²] = pS(S+1)
            (
                p * s * (sum + ctx.tail.0),
                sum_sq * (p * s * (s + 1.0) - p * p * s * s) + ctx.tail.1 * p * s * (s + 1.0),
            )
        };
        let fixed_marks = shared.then(|| gains.iter().map(|_| rng.random::<f64>() < p).collect());
        let far = if mean > 0.0 && var > 0.0 {
            Some(Gamma::new(mean * mean / var, var / mean).map_err(|e| McError::Config {
                field: "far field",
                reason: e.to_string(),
            })?)
        } else {
            None
        };
        Ok(Self {
            serving_gain: params.serving_gain(realization.serving_state),
            near: gains,
            far,
            serving_fading: Gamma::new(params.diversity() as f64, 1.0).expect("shape >= 1"),
            interferer_fading: Gamma::new(s, 1.0).expect("shape >= 1"),
            activity: p,
            streams: params.streams,
            fixed_marks,
        })
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn exact_count(&self) -> usize {
        self.near.len()
    }

    /// Activity marks of the explicit interferers for a new window: fresh
    /// Bernoulli(p) draws, or the fixed marks under shared activity.
    pub fn draw_activity<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<bool>) {
        out.clear();
        match &self.fixed_marks {
            Some(marks) => out.extend_from_slice(marks),
            None => out.extend(self.near.iter().map(|_| rng.random::<f64>() < self.activity)),
        }
    }

    /// Per-stream SIRs of one slot given activity marks. A stream with no
    /// interference gets `f64::INFINITY`.
    pub fn draw_sirs<R: Rng + ?Sized>(&self, active: &[bool], rng: &mut R, out: &mut [f64]) {
        for sir in out.iter_mut().take(self.streams) {
            let mut interference = 0.0;
            for (g, &on) in self.near.iter().zip(active) {
                if on {
                    interference += g * self.interferer_fading.sample(rng);
                }
            }
            if let Some(far) = &self.far {
                interference += far.sample(rng);
            }
            let signal = self.serving_gain * self.serving_fading.sample(rng);
            *sir = if interference > 0.0 { signal / interference } else { f64::INFINITY };
        }
    }

    /// Aggregate slot rate `Σ_l ln(1 + SIR_l)`.
    pub fn slot_rate<R: Rng + ?Sized>(&self, active: &[bool], rng: &mut R, sirs: &mut [f64]) -> f64 {
        self.draw_sirs(active, rng, sirs);
        sirs[..self.streams].iter().map(|s| s.ln_1p()).sum()
    }

    pub(crate) fn own_active<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() < self.activity
    }

    /// One decoding attempt over a window of `t` slots with interferer
    /// activity fixed over the window, including the typical transmitter's
    /// own activity.
    pub(crate) fn window_success<R: Rng + ?Sized>(
        &self,
        t: usize,
        threshold: f64,
        rng: &mut R,
        active: &mut Vec<bool>,
        sirs: &mut [f64],
    ) -> bool {
        if !self.own_active(rng) {
            return false;
        }
        self.draw_activity(rng, active);
        let mut acc = 0.0;
        for _ in 0..t {
            acc += self.slot_rate(active, rng, sirs);
            if acc >= threshold {
                return true;
            }
        }
        false
    }

    /// Fraction of `draws` decoding attempts that succeed.
    pub fn success_fraction<R: Rng + ?Sized>(&self, window: usize, threshold: f64, draws: usize, rng: &mut R) -> f64 {
        let mut active = Vec::with_capacity(self.near.len());
        let mut sirs = vec![0.0; self.streams];
        let hits = (0..draws)
            .filter(|_| self.window_success(window, threshold, rng, &mut active, &mut sirs))
            .count();
        hits as f64 / draws as f64
    }
}

fn window_len(scheme: Scheme, block_length: usize) -> usize {
    match scheme {
        Scheme::Rr => 1,
        Scheme::Bir => block_length.max(1),
    }
}

/// Per-stream SIRs of one slot of `realization`, with fresh activity marks.
pub fn draw_post_sir<R: Rng + ?Sized>(
    realization: &NetworkRealization,
    params: &SystemParams,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<Vec<f64>, McError> {
    let sampler = LinkSampler::new(realization, params, sim, rng)?;
    let mut active = Vec::new();
    sampler.draw_activity(rng, &mut active);
    let mut sirs = vec![0.0; params.streams];
    sampler.draw_sirs(&active, rng, &mut sirs);
    Ok(sirs)
}

/// `P{aggregate rate ≥ R̄ | F}` estimated from `draws` attempts, counting the
/// typical transmitter's own activity.
#[allow(clippy::too_many_arguments)]
pub fn conditional_success_prob<R: Rng + ?Sized>(
    realization: &NetworkRealization,
    params: &SystemParams,
    sim: &SimConfig,
    scheme: Scheme,
    rate_threshold: f64,
    block_length: usize,
    draws: usize,
    rng: &mut R,
) -> Result<f64, McError> {
    let sampler = LinkSampler::new(realization, params, sim, rng)?;
    Ok(sampler.success_fraction(window_len(scheme, block_length), rate_threshold, draws.max(1), rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MtdEstimate {
    pub delay: DelayEstimate,
    pub trials: usize,
    pub censored: usize,
    pub censored_fraction: f64,
    /// More than 1% of the realizations hit the floor or the cap.
    pub unreliable: bool,
}

impl MtdEstimate {
    pub(crate) fn from_values(values: &[f64], censored: usize) -> Self {
        let m = MeanCi::from_samples(values);
        let censored_fraction = censored as f64 / values.len().max(1) as f64;
        Self {
            delay: DelayEstimate {
                value: m.mean,
                kind: DelayKind::MonteCarlo,
                ci_halfwidth: Some(m.ci_halfwidth),
            },
            trials: values.len(),
            censored,
            censored_fraction,
            unreliable: censored_fraction > 0.01,
        }
    }
}

/// Mean delay `E_F[T_eff / max(q̂(F), q_floor)]`.
pub fn estimate_mtd(
    params: &SystemParams,
    sim: &SimConfig,
    scheme: Scheme,
    rate_threshold: f64,
    block_length: usize,
) -> Result<MtdEstimate, McError> {
    let ctx = RunContext::new(params, sim)?;
    let window = window_len(scheme, block_length);
    let floor = sim.q_floor_value();
    let draws = sim.fading_draws_per_realization;
    let results: Vec<Result<(f64, bool), McError>> = (0..sim.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (net, mut rng) = ctx.realization(params, sim.seed, trial);
            let sampler = LinkSampler::with_context(&net, params, sim, &ctx, &mut rng)?;
            let q = sampler.success_fraction(window, rate_threshold, draws, &mut rng);
            Ok((window as f64 / q.max(floor), q < floor))
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

/// Mean delay from direct retransmission traces: windows are attempted until
/// one decodes or `retransmission_cap` slots elapse; the delay is the number
/// of windows times the window length.
pub fn estimate_mtd_trace(
    params: &SystemParams,
    sim: &SimConfig,
    scheme: Scheme,
    rate_threshold: f64,
    block_length: usize,
) -> Result<MtdEstimate, McError> {
    let ctx = RunContext::new(params, sim)?;
    let window = window_len(scheme, block_length);
    let cap = sim.retransmission_cap;
    let results: Vec<Result<(f64, bool), McError>> = (0..sim.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (net, mut rng) = ctx.realization(params, sim.seed, trial);
            let sampler = LinkSampler::with_context(&net, params, sim, &ctx, &mut rng)?;
            let mut active = Vec::new();
            let mut sirs = vec![0.0; params.streams];
            let mut elapsed = 0;
            while elapsed < cap {
                elapsed += window;
                if sampler.window_success(window, rate_threshold, &mut rng, &mut active, &mut sirs) {
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

/// Coverage `P{Σ_{t ≤ T} Σ_l R_l[t] ≥ R̄}` for every threshold and block
/// length, with the typical link always transmitting and interferer activity
/// fixed per block. All block lengths reuse the prefixes of the same slot
/// sequence, so coverage is monotone in `T` sample by sample.
///
/// Returns `out[i][j]` for `thresholds[i]` and `blocks[j]`; the interval is
/// over per-realization success fractions.
pub fn coverage_curve(
    params: &SystemParams,
    sim: &SimConfig,
    thresholds: &[f64],
    blocks: &[usize],
) -> Result<Vec<Vec<MeanCi>>, McError> {
    let ctx = RunContext::new(params, sim)?;
    let t_max = blocks.iter().copied().max().unwrap_or(1).max(1);
    let draws = sim.fading_draws_per_realization;
    let per_trial: Vec<Result<Vec<f64>, McError>> = (0..sim.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (net, mut rng) = ctx.realization(params, sim.seed, trial);
            let sampler = LinkSampler::with_context(&net, params, sim, &ctx, &mut rng)?;
            let mut active = Vec::new();
            let mut sirs = vec![0.0; params.streams];
            let mut hits = vec![0usize; thresholds.len() * blocks.len()];
            let mut prefix = vec![0.0; t_max + 1];
            for _ in 0..draws {
                sampler.draw_activity(&mut rng, &mut active);
                for t in 0..t_max {
                    prefix[t + 1] = prefix[t] + sampler.slot_rate(&active, &mut rng, &mut sirs);
                }
                for (i, &th) in thresholds.iter().enumerate() {
                    for (j, &b) in blocks.iter().enumerate() {
                        if prefix[b.max(1)] >= th {
                            hits[i * blocks.len() + j] += 1;
                        }
                    }
                }
            }
            Ok(hits.iter().map(|&h| h as f64 / draws as f64).collect())
        })
        .collect();
    let mut fractions = Vec::with_capacity(per_trial.len());
    for r in per_trial {
        fractions.push(r?);
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for i in 0..thresholds.len() {
        let mut row = Vec::with_capacity(blocks.len());
        for j in 0..blocks.len() {
            let col: Vec<f64> = fractions.iter().map(|f| f[i * blocks.len() + j]).collect();
            row.push(MeanCi::from_samples(&col));
        }
        out.push(row);
    }
    Ok(out)
}

/// Coverage of one scheme at one threshold.
pub fn estimate_coverage(
    params: &SystemParams,
    sim: &SimConfig,
    scheme: Scheme,
    rate_threshold: f64,
    block_length: usize,
) -> Result<MeanCi, McError> {
    let t = window_len(scheme, block_length);
    Ok(coverage_curve(params, sim, &[rate_threshold], &[t])?[0][0])
}

/// Empirical per-stream rate moments, for comparison with the analytic ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McRateMoments {
    /// `E[R_1]`.
    pub mean: f64,
    /// `E[R_1[1] R_2[2]]`: different streams, different windows.
    pub cross: f64,
    /// `E[R_1[1]²]`.
    pub same: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RccEstimate {
    pub rcc: RccResult,
    pub moments: McRateMoments,
    pub samples: usize,
}

/// Pearson correlation of aggregate rates of two slots and of two windows of
/// `T` slots over the joint realization and fading ensemble. Windows are
/// blocks for B-IR (activity fixed per block) and runs of `T` slots for RR
/// (activity per slot). The slot pair is the first slot of each window.
pub fn estimate_rcc(params: &SystemParams, sim: &SimConfig, scheme: Scheme) -> Result<RccEstimate, McError> {
    let ctx = RunContext::new(params, sim)?;
    let t = params.block_length.max(1);
    let draws = sim.fading_draws_per_realization;
    let s = params.streams;
    let per_trial: Vec<Result<Vec<[f64; 7]>, McError>> = (0..sim.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (net, mut rng) = ctx.realization(params, sim.seed, trial);
            let sampler = LinkSampler::with_context(&net, params, sim, &ctx, &mut rng)?;
            let mut active = Vec::new();
            let mut sirs = vec![0.0; s];
            let mut rows = Vec::with_capacity(draws);
            for _ in 0..draws {
                // [slot1, slot2, block1, block2, r_1[1], r_2[2], r_1[1]²]
                let mut row = [0.0; 7];
                for w in 0..2 {
                    for k in 0..t {
                        if k == 0 || scheme == Scheme::Rr {
                            sampler.draw_activity(&mut rng, &mut active);
                        }
                        let rate = sampler.slot_rate(&active, &mut rng, &mut sirs);
                        if k == 0 {
                            row[w] = rate;
                            if w == 0 {
                                let r1 = sirs[0].ln_1p();
                                row[4] = r1;
                                row[6] = r1 * r1;
                            } else {
                                row[5] = sirs[s.min(2) - 1].ln_1p();
                            }
                        }
                        row[2 + w] += rate;
                    }
                }
                rows.push(row);
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_trial {
        rows.extend(r?);
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(McError::DegenerateVariance("rate correlation (interference-free slots)"));
    }
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let slot = pearson(&col(0), &col(1)).ok_or(McError::DegenerateVariance("slot rate correlation"))?;
    let block = pearson(&col(2), &col(3)).ok_or(McError::DegenerateVariance("block rate correlation"))?;
    let n = rows.len() as f64;
    let mean_of = |i: usize| rows.iter().map(|r| r[i]).sum::<f64>() / n;
    let cross = rows.iter().map(|r| r[4] * r[5]).sum::<f64>() / n;
    Ok(RccEstimate {
        rcc: RccResult {
            block_rcc: block,
            slot_rcc: slot,
        },
        moments: McRateMoments {
            mean: mean_of(4),
            cross,
            same: mean_of(6),
        },
        samples: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinkState;
    use crate::montecarlo::network::sample_network_in_disk;
    use crate::montecarlo::trial_rng;

    fn small() -> SimConfig {
        SimConfig::default().with_trials(200).with_draws(100)
    }

    #[test]
    fn no_interferers_means_infinite_sir() {
        let params = SystemParams::default().with_density(0.0);
        let mut rng = trial_rng(1, 0);
        let net = sample_network_in_disk(&params, 100.0, 0, &mut rng);
        let sirs = draw_post_sir(&net, &params, &small(), &mut rng).unwrap();
        assert_eq!(sirs.len(), params.streams);
        assert!(sirs.iter().all(|s| s.is_infinite()));
    }

    #[test]
    fn zero_threshold_succeeds_whenever_active() {
        let params = SystemParams::default();
        let mut rng = trial_rng(2, 0);
        let net = sample_network_in_disk(&params, 300.0, 0, &mut rng);
        let q = conditional_success_prob(&net, &params, &small(), Scheme::Rr, 0.0, 1, 20_000, &mut rng).unwrap();
        assert!((q - params.activity).abs() < 0.015, "{q}");
    }

    #[test]
    fn empty_network_delay_is_inverse_activity() {
        let params = SystemParams::default().with_density(0.0);
        let sim = SimConfig::default().with_trials(300).with_draws(400);
        let p = params.activity;
        let rr = estimate_mtd(&params, &sim, Scheme::Rr, 2.0, 1).unwrap();
        assert!((rr.delay.value * p - 1.0).abs() < 0.02, "{rr:?}");
        let bir = estimate_mtd(&params, &sim, Scheme::Bir, 2.0, 3).unwrap();
        assert!((bir.delay.value * p / 3.0 - 1.0).abs() < 0.02, "{bir:?}");
        assert_eq!(rr.censored, 0);
    }

    #[test]
    fn coverage_monotone_in_threshold_and_block() {
        let params = SystemParams::default().with_density(1e-3);
        let cov = coverage_curve(&params, &small(), &[1.0, 3.0, 6.0], &[1, 2, 4]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i > 0 {
                    assert!(cov[i][j].mean <= cov[i - 1][j].mean);
                }
                if j > 0 {
                    assert!(cov[i][j].mean >= cov[i][j - 1].mean);
                }
            }
        }
        let rr = estimate_coverage(&params, &small(), Scheme::Rr, 3.0, 4).unwrap();
        let bir1 = estimate_coverage(&params, &small(), Scheme::Bir, 3.0, 1).unwrap();
        assert_eq!(rr, bir1);
    }

    #[test]
    fn unit_block_correlations_coincide() {
        let params = SystemParams::default();
        let e = estimate_rcc(&params, &SimConfig::default().with_trials(100).with_draws(5), Scheme::Bir).unwrap();
        assert_eq!(e.rcc.block_rcc, e.rcc.slot_rcc);
        assert_eq!(e.samples, 500);
    }

    #[test]
    fn shared_activity_fixes_marks() {
        let params = SystemParams::default();
        let sim = SimConfig {
            interferer_activity: ActivityCoupling::Shared,
            ..small()
        };
        let mut rng = trial_rng(3, 0);
        let net = sample_network_in_disk(&params, 300.0, 0, &mut rng);
        let sampler = LinkSampler::new(&net, &params, &sim, &mut rng).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        sampler.draw_activity(&mut rng, &mut a);
        sampler.draw_activity(&mut rng, &mut b);
        assert_eq!(a, b);
        assert_eq!(a.len(), sampler.exact_count());
    }

    #[test]
    fn serving_state_is_sampled() {
        let params = SystemParams::default();
        let los = (0..2000)
            .filter(|&t| {
                let mut rng = trial_rng(9, t);
                sample_network_in_disk(&params, 50.0, t, &mut rng).serving_state == LinkState::Los
            })
            .count();
        let p = crate::model::los_probability(params.link_distance, &params.path_loss);
        assert!((los as f64 / 2000.0 - p).abs() < 0.04);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let params = SystemParams::default();
        let sim = SimConfig::default().with_trials(64).with_draws(50);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_mtd(&params, &sim, Scheme::Bir, 2.0, 2).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
