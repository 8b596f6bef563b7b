//! Desk-scale presets for the nine figures of the reproduction set.

use crate::config::{ExperimentKind, ExperimentOptions, ExperimentSpec, Sweep};
use mimo_harq::montecarlo::SimConfig;
use mimo_harq::{ActivityCoupling, SystemParams};

pub const FIGURES: std::ops::RangeInclusive<u32> = 1..=9;

fn spec(
    name: String,
    kind: ExperimentKind,
    base_params: SystemParams,
    sim: SimConfig,
    values: Vec<f64>,
) -> ExperimentSpec {
    let trials = sim.trials;
    let sweep = Sweep {
        values,
        ..kind.default_sweep()
    };
    ExperimentSpec {
        name,
        kind,
        backends: kind.default_backends(),
        notes: Some(format!(
            "desk scale: {trials} Monte Carlo trials instead of 40000, disk radius chosen from the edge tolerance instead of 10 km"
        )),
        base_params,
        sim,
        sweep,
        options: ExperimentOptions::default(),
    }
}

fn mc(trials: usize, draws: usize) -> SimConfig {
    SimConfig::default().with_trials(trials).with_draws(draws)
}

fn mobile_params() -> SystemParams {
    SystemParams::default()
        .with_density(5e-4)
        .with_streams(2)
        .with_activity(0.5)
}

/// Experiments that make up figure `n`, or `None` outside 1..=9.
pub fn figure_specs(n: u32) -> Option<Vec<ExperimentSpec>> {
    let blocks = vec![1.0, 2.0, 4.0, 8.0];
    let lambdas = vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let specs = match n {
        1 => [1, 4, 8]
            .into_iter()
            .map(|s| {
                let sim = SimConfig {
                    interferer_activity: ActivityCoupling::Shared,
                    ..mc(2000, 10)
                };
                spec(
                    format!("fig1_S{s}"),
                    ExperimentKind::RccVsT,
                    SystemParams::default().with_streams(s),
                    sim,
                    blocks.clone(),
                )
            })
            .collect(),
        2 => vec![spec(
            "fig2".into(),
            ExperimentKind::CoverageVsT,
            SystemParams::default(),
            mc(2000, 20),
            blocks,
        )],
        3 => vec![spec(
            "fig3".into(),
            ExperimentKind::MtdBoundsVsT,
            SystemParams::default().with_streams(4).with_density(1e-3).with_activity(0.6),
            mc(500, 200),
            blocks,
        )],
        4 => {
            let mut out = Vec::new();
            for (tag, lambda) in [("1e-4", 1e-4), ("1e-3", 1e-3)] {
                for t in [2, 4] {
                    out.push(spec(
                        format!("fig4_lambda{tag}_T{t}"),
                        ExperimentKind::MtdVsS,
                        SystemParams::default()
                            .with_density(lambda)
                            .with_activity(0.6)
                            .with_block_length(t),
                        mc(300, 200),
                        vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0],
                    ));
                }
            }
            out
        }
        5 => vec![spec(
            "fig5".into(),
            ExperimentKind::NoiselessCheck,
            SystemParams::default()
                .with_streams(2)
                .with_activity(0.5)
                .with_rate_threshold(3.0)
                .with_block_length(2),
            mc(500, 200),
            vec![3.0],
        )],
        6 => vec![spec(
            "fig6".into(),
            ExperimentKind::DopplerSweep,
            mobile_params().with_block_length(4),
            SimConfig {
                retransmission_cap: 2000,
                ..mc(400, 200)
            },
            vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        )],
        7 => vec![spec(
            "fig7".into(),
            ExperimentKind::ShortPacketSweep,
            mobile_params().with_block_length(2),
            mc(500, 200),
            vec![25.0, 50.0, 75.0, 100.0, 150.0],
        )],
        8 => vec![spec(
            "fig8".into(),
            ExperimentKind::EstVsLambda,
            SystemParams::default().with_block_length(2),
            mc(300, 200),
            lambdas,
        )],
        9 => vec![spec(
            "fig9".into(),
            ExperimentKind::GainVsLambda,
            SystemParams::default().with_block_length(2),
            mc(300, 200),
            lambdas,
        )],
        _ => return None,
    };
    Some(specs)
}
