//! Built-in parameter sets `fig1` … `fig6`: the reproduction recipes the tool
//! ships with.

use crate::config::{
    ConstraintConfig, IntensityConfig, LimitConfig, PenaltyConfig, PolicyConfig, ProblemConfig,
    QuoteCompareCase, QuoteCompareConfig, RunConfig, SimulateConfig,
};

fn base_problem() -> ProblemConfig {
    ProblemConfig {
        q0: 400.0,
        delta_size: 50.0,
        horizon_s: 300.0,
        mu: 0.0,
        sigma: 0.3,
        gamma: 0.001,
        penalty: PenaltyConfig::Constant(3.0),
    }
}

fn exponential() -> IntensityConfig {
    IntensityConfig::Exponential { a: 0.1, k: 0.3 }
}

fn bare(problem: ProblemConfig, intensity: IntensityConfig) -> RunConfig {
    RunConfig {
        problem,
        intensity,
        constraint: None,
        limit: None,
        simulate: None,
        multi_asset: None,
        market_maker: None,
        quote_compare: None,
    }
}

pub fn preset(name: &str) -> Option<RunConfig> {
    match name {
        // Intensity-shape comparison: the plateau lookalike.
        "fig1" => Some(bare(base_problem(), IntensityConfig::Figure1Tilde)),
        // The reference liquidation setup (value function); also carries the
        // limit-study and simulation blocks so every mode runs off it.
        "fig2" => {
            let mut cfg = bare(base_problem(), exponential());
            cfg.limit = Some(LimitConfig {
                dq: 2.0,
                deltas: vec![50.0, 25.0, 12.5],
            });
            cfg.simulate = Some(SimulateConfig {
                paths: 100_000,
                dt: 0.05,
                seed: 42,
                policies: vec![
                    PolicyConfig::Optimal,
                    PolicyConfig::Shifted(0.5),
                    PolicyConfig::Shifted(-0.5),
                ],
                initial_cash: 0.0,
                initial_price: 100.0,
                dump_paths: false,
            });
            Some(cfg)
        }
        // Same parameters, quote-surface view.
        "fig3" => Some(bare(base_problem(), exponential())),
        // Hard floor at zero ticks.
        "fig4" => {
            let mut cfg = bare(base_problem(), exponential());
            cfg.constraint = Some(ConstraintConfig { delta_min: 0.0 });
            Some(cfg)
        }
        // Order-size comparison: (Λ, Δ=50) vs (2Λ, Δ=25) on a longer horizon.
        "fig5" => {
            let mut cfg = bare(
                ProblemConfig {
                    q0: 600.0,
                    horizon_s: 1200.0,
                    ..base_problem()
                },
                exponential(),
            );
            // Halving the order size doubles the per-order intensity through
            // the Λ/Δ scaling; both cases share the base curve.
            cfg.quote_compare = Some(QuoteCompareConfig {
                cases: [
                    QuoteCompareCase {
                        intensity_scale: 1.0,
                        delta_size: 50.0,
                    },
                    QuoteCompareCase {
                        intensity_scale: 1.0,
                        delta_size: 25.0,
                    },
                ],
                q_max: Some(400.0),
            });
            Some(cfg)
        }
        // Stationary values over a deeper book.
        "fig6" => Some(bare(
            ProblemConfig {
                q0: 800.0,
                ..base_problem()
            },
            exponential(),
        )),
        _ => None,
    }
}

pub const PRESET_NAMES: &[&str] = &["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"];
