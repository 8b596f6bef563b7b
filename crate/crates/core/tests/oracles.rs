//! Engines checked against closed forms written out independently here.

use mimo_harq::analytic::Analytic;
use mimo_harq::delay::DelayModel;
use mimo_harq::model::los_probability;
use mimo_harq::montecarlo::{
    conditional_success_prob, draw_post_sir, estimate_coverage, estimate_mtd, estimate_rcc,
    sample_network, trial_rng, SimConfig,
};
use mimo_harq::{ActivityCoupling, LinkState, Scheme, SystemParams};
use std::f64::consts::PI;

/// `∫_0^∞ f(x) x dx` by Simpson's rule in `u = ln x`.
fn radial_integral<F: Fn(f64) -> f64>(f: F) -> f64 {
    let (lo, hi, n) = ((1e-6f64).ln(), (1e7f64).ln(), 40_000);
    let h = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let x = (lo + i as f64 * h).exp();
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * f(x) * x * x;
    }
    acc * h / 3.0
}

fn gain(params: &SystemParams, x: f64, state: LinkState) -> f64 {
    let plp = &params.path_loss;
    let (phi, alpha) = match state {
        LinkState::Los => (plp.phi_los, plp.alpha_los),
        LinkState::Nlos => (plp.phi_nlos, plp.alpha_nlos),
    };
    phi * x.powf(-alpha)
}

/// Average of `f(state)` over the link state at distance `x`.
fn state_mean<F: Fn(LinkState) -> f64>(params: &SystemParams, x: f64, f: F) -> f64 {
    let pl = los_probability(x, &params.path_loss);
    pl * f(LinkState::Los) + (1.0 - pl) * f(LinkState::Nlos)
}

/// `P{SIR_l > β}` for unit diversity (`N^r = S`): the serving gain is
/// exponential and each interferer contributes `Gamma(S)` fading.
fn stream_coverage_oracle(params: &SystemParams, beta: f64) -> f64 {
    let s = params.streams as i32;
    let r = params.link_distance;
    state_mean(params, r, |serving| {
        let l0 = gain(params, r, serving);
        let integral = radial_integral(|x| {
            state_mean(params, x, |st| 1.0 - (1.0 + beta * gain(params, x, st) / l0).powi(-s))
        });
        (-2.0 * PI * params.lambda_density * params.activity * integral).exp()
    })
}

/// Mean of `1/q` for a single-antenna link: the local delay
/// `(1/p) E_n exp(2πλ ∫ E_s[p v / (1 + (1-p) v)] x dx)`.
fn local_delay_oracle(params: &SystemParams, rate_threshold: f64) -> f64 {
    let beta = rate_threshold.exp_m1();
    let p = params.activity;
    let r = params.link_distance;
    let mean = state_mean(params, r, |serving| {
        let l0 = gain(params, r, serving);
        let integral = radial_integral(|x| {
            state_mean(params, x, |st| {
                let v = beta * gain(params, x, st) / l0;
                p * v / (1.0 + (1.0 - p) * v)
            })
        });
        (2.0 * PI * params.lambda_density * integral).exp()
    });
    mean / p
}

fn single_antenna(lambda: f64) -> SystemParams {
    SystemParams {
        tx_antennas: 1,
        rx_antennas: 1,
        streams: 1,
        ..SystemParams::default().with_density(lambda)
    }
}

#[test]
fn per_stream_coverage_matches_laplace_formula() {
    let params = SystemParams {
        tx_antennas: 2,
        rx_antennas: 2,
        streams: 2,
        ..SystemParams::default()
    };
    let sim = SimConfig::default();
    let n = 20_000;
    let thresholds = [0.3, 1.0, 3.0];
    let mut hits = [0usize; 3];
    for trial in 0..n {
        let mut rng = trial_rng(11, trial);
        let net = sample_network(&params, &sim, trial, &mut rng).unwrap();
        let sirs = draw_post_sir(&net, &params, &sim, &mut rng).unwrap();
        for (h, &b) in hits.iter_mut().zip(&thresholds) {
            *h += sirs.iter().filter(|&&s| s > b).count();
        }
    }
    for (h, &b) in hits.iter().zip(&thresholds) {
        let mc = *h as f64 / (2 * n) as f64;
        let exact = stream_coverage_oracle(&params, b);
        assert!((mc - exact).abs() < 0.02, "beta={b}: mc {mc} vs {exact}");
    }
}

#[test]
fn single_antenna_delay_matches_local_delay() {
    let d = DelayModel::default();
    for lambda in [1e-4, 1e-3] {
        let params = single_antenna(lambda);
        for r in [0.5, 2.0] {
            let exact = local_delay_oracle(&params, r);
            let got = d.mtd_rr(r, &params).unwrap().value;
            assert!((got / exact - 1.0).abs() < 1e-4, "lambda={lambda} R={r}: {got} vs {exact}");
        }
    }
}

#[test]
fn single_antenna_delay_matches_simulation() {
    let params = single_antenna(1e-4);
    let sim = SimConfig::default().with_trials(1500).with_draws(200);
    let exact = local_delay_oracle(&params, 1.0);
    let mc = estimate_mtd(&params, &sim, Scheme::Rr, 1.0, 1).unwrap();
    assert!(!mc.unreliable);
    let tol = 0.03 * exact + mc.delay.ci_halfwidth.unwrap();
    assert!((mc.delay.value - exact).abs() < tol, "{mc:?} vs {exact}");
}

#[test]
fn success_probability_averages_to_activity_times_coverage() {
    let params = SystemParams::default();
    let sim = SimConfig::default().with_trials(1500).with_draws(40);
    let r = 2.0;
    let n = 1500;
    let mean_q: f64 = (0..n)
        .map(|trial| {
            let mut rng = trial_rng(21, trial);
            let net = sample_network(&params, &sim, trial, &mut rng).unwrap();
            conditional_success_prob(&net, &params, &sim, Scheme::Rr, r, 1, 40, &mut rng).unwrap()
        })
        .sum::<f64>()
        / n as f64;
    let cov = estimate_coverage(&params, &sim, Scheme::Rr, r, 1).unwrap();
    let expect = params.activity * cov.mean;
    assert!((mean_q - expect).abs() < 0.025, "{mean_q} vs {expect}");
}

#[test]
fn rate_moments_match_simulation() {
    let params = SystemParams::default().with_block_length(2);
    for coupling in [ActivityCoupling::Shared, ActivityCoupling::PerWindow] {
        let a = Analytic::default().with_coupling(coupling);
        let sim = SimConfig {
            interferer_activity: coupling,
            ..SimConfig::default().with_trials(3000).with_draws(10)
        };
        let m = a.moments(&params).unwrap();
        let per_stream = m.mu_c / (params.streams * params.block_length) as f64;
        let mc = estimate_rcc(&params, &sim, Scheme::Bir).unwrap().moments;
        let cross = match coupling {
            ActivityCoupling::Shared => m.lambda_cross,
            ActivityCoupling::PerWindow => m.lambda_cross_window,
        };
        for (name, an, sim) in [
            ("mean", per_stream, mc.mean),
            ("cross", cross, mc.cross),
            ("same", m.lambda_same, mc.same),
        ] {
            assert!((an / sim - 1.0).abs() < 0.04, "{coupling:?} {name}: {an} vs {sim}");
        }
    }
}
