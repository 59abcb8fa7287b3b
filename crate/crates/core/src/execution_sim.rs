//! Monte Carlo verification of the liquidation model: a Brownian reference
//! price plus a controlled point process of fills.
//!
//! Per step of size dt the price moves by μdt + σ√dt·Z and, while inventory
//! remains, a fill of size Δ arrives with probability 1 − e^{−Λ_Δ(δ)dt} at
//! the quoted offset δ (at most one per step; the O(dt) bias is quantified by
//! the halve-dt property test). Terminal wealth is X_T + q_T(S_T − ℓ(q_T))
//! and utilities −e^{−γW} are averaged in ascending path order.
//!
//! Paths draw from independent streams seeded by (seed, path_index), so
//! results are bit-identical regardless of how the path loop is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::intensity::IntensityModel;
use crate::value_solver::{LiquidationProblem, QuoteSurface};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Quoting rule used along a path. Surfaces are looked up at the nearest time
/// node and the exact inventory level.
#[derive(Debug, Clone, Copy)]
pub enum QuotePolicy<'a> {
    /// The solved optimal surface.
    Surface(&'a QuoteSurface),
    /// A constant offset regardless of state.
    Constant(f64),
    /// The surface shifted by a fixed amount (for optimality probes).
    Shifted {
        surface: &'a QuoteSurface,
        offset: f64,
    },
}

impl QuotePolicy<'_> {
    #[inline]
    fn quote(&self, t: f64, q: f64) -> f64 {
        match self {
            QuotePolicy::Surface(s) => s.lookup(t, q),
            QuotePolicy::Constant(c) => *c,
            QuotePolicy::Shifted { surface, offset } => surface.lookup(t, q) + offset,
        }
    }

    fn surface(&self) -> Option<&QuoteSurface> {
        match self {
            QuotePolicy::Surface(s) => Some(s),
            QuotePolicy::Shifted { surface, .. } => Some(surface),
            QuotePolicy::Constant(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub initial_cash: f64,
    pub initial_price: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            dt: 0.05,
            seed: 42,
            initial_cash: 0.0,
            initial_price: 100.0,
        }
    }
}

/// One simulated path's terminal state.
#[derive(Debug, Clone, Copy)]
pub struct PathRecord {
    pub path: usize,
    pub fills: u32,
    pub terminal_cash: f64,
    pub terminal_inventory: f64,
    pub terminal_price: f64,
    pub utility: f64,
}

/// Aggregates over all paths.
#[derive(Debug, Clone)]
pub struct SimulationStats {
    pub paths: usize,
    /// Sample mean of −e^{−γW}; always negative.
    pub mean_utility: f64,
    pub utility_std_error: f64,
    pub certainty_equivalent: f64,
    pub ce_std_error: f64,
    /// fill_counts[n] = number of paths with exactly n fills.
    pub fill_counts: Vec<u64>,
    /// (inventory, paths ending there) over the lattice.
    pub terminal_inventory_counts: Vec<(f64, u64)>,
}

fn path_stream_seed(seed: u64, path: u64) -> u64 {
    // splitmix64 over seed + path·golden-gamma: independent per-path streams.
    let mut z = seed.wrapping_add(path.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn validate(
    problem: &LiquidationProblem,
    policy: &QuotePolicy,
    config: &SimulationConfig,
) -> Result<usize, SimError> {
    problem
        .validate()
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    if config.paths < 1 {
        return Err(SimError::InvalidConfig("paths must be >= 1".into()));
    }
    if !(config.dt > 0.0) || !config.dt.is_finite() {
        return Err(SimError::InvalidConfig(format!(
            "dt must be positive, got {}",
            config.dt
        )));
    }
    let steps = (problem.horizon / config.dt).round();
    if steps < 1.0 || (steps * config.dt - problem.horizon).abs() > 1e-6 * problem.horizon {
        return Err(SimError::InvalidConfig(format!(
            "dt = {} must divide the horizon {}",
            config.dt, problem.horizon
        )));
    }
    if let Some(surface) = policy.surface() {
        if surface.inventories().len() < problem.levels() {
            return Err(SimError::InvalidConfig(
                "policy surface does not cover the problem's inventory lattice".into(),
            ));
        }
        let spacing = surface.inventories()[0];
        if (spacing - problem.delta_size).abs() > 1e-9 * problem.delta_size {
            return Err(SimError::InvalidConfig(
                "policy surface lattice spacing differs from the order size".into(),
            ));
        }
    }
    Ok(steps as usize)
}

/// Simulate every path and return the per-path records in ascending index
/// order (paths run in parallel; the order and the draws are fixed by
/// (seed, path_index) alone).
pub fn simulate_paths(
    problem: &LiquidationProblem,
    intensity: &IntensityModel,
    policy: &QuotePolicy,
    config: &SimulationConfig,
) -> Result<Vec<PathRecord>, SimError> {
    let steps = validate(problem, policy, config)?;
    let dt = config.dt;
    let levels = problem.levels();
    let delta = problem.delta_size;
    let gamma = problem.risk_aversion;
    let mu = problem.drift;
    let sig_sqdt = problem.volatility * dt.sqrt();

    // Policies live on lattices, so quotes and fill probabilities per
    // (step, level) are fixed; hoist them out of the path loop.
    // Index: m * levels + (level - 1).
    let mut quote_table = vec![0.0; steps * levels];
    let mut fill_table = vec![0.0; steps * levels];
    for m in 0..steps {
        let t = m as f64 * dt;
        for level in 1..=levels {
            let quote = policy.quote(t, level as f64 * delta);
            let lambda = intensity.eval(quote).value;
            quote_table[m * levels + level - 1] = quote;
            fill_table[m * levels + level - 1] = 1.0 - (-lambda * dt).exp();
        }
    }

    let records: Vec<PathRecord> = (0..config.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(path_stream_seed(config.seed, path as u64));
            let mut price = config.initial_price;
            let mut cash = config.initial_cash;
            let mut level = levels;
            let mut fills = 0u32;
            let mut m = 0usize;
            while m < steps && level > 0 {
                let z: f64 = rng.sample(StandardNormal);
                let u: f64 = rng.random();
                if u < fill_table[m * levels + level - 1] {
                    cash += (price + quote_table[m * levels + level - 1]) * delta;
                    level -= 1;
                    fills += 1;
                }
                price += mu * dt + sig_sqdt * z;
                m += 1;
            }
            if m < steps {
                // Inventory gone: wealth is fixed, so the remaining price path
                // collapses to one Gaussian jump to T.
                let rem = (steps - m) as f64 * dt;
                let z: f64 = rng.sample(StandardNormal);
                price += mu * rem + problem.volatility * rem.sqrt() * z;
            }
            let q_t = level as f64 * delta;
            let wealth = cash + q_t * (price - problem.penalty.eval(q_t));
            PathRecord {
                path,
                fills,
                terminal_cash: cash,
                terminal_inventory: q_t,
                terminal_price: price,
                utility: -(-gamma * wealth).exp(),
            }
        })
        .collect();
    Ok(records)
}

/// CE = −(1/γ)·log(−mean utility), with its delta-method standard error.
pub fn certainty_equivalent(
    mean_utility: f64,
    utility_std_error: f64,
    gamma: f64,
) -> Result<(f64, f64), SimError> {
    if !(mean_utility < 0.0) {
        return Err(SimError::InvalidState(format!(
            "mean utility must be negative for a CARA objective, got {mean_utility}"
        )));
    }
    let ce = -(-mean_utility).ln() / gamma;
    let se = utility_std_error / (gamma * mean_utility.abs());
    Ok((ce, se))
}

fn stats_from_records(
    records: &[PathRecord],
    problem: &LiquidationProblem,
) -> Result<SimulationStats, SimError> {
    let n = records.len();
    let mut sum = 0.0;
    for r in records {
        sum += r.utility;
    }
    let mean = sum / n as f64;
    let mut ssq = 0.0;
    for r in records {
        let d = r.utility - mean;
        ssq += d * d;
    }
    let std = if n > 1 {
        (ssq / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let se = std / (n as f64).sqrt();
    let (ce, ce_se) = certainty_equivalent(mean, se, problem.risk_aversion)?;

    let levels = problem.levels();
    let mut fill_counts = vec![0u64; levels + 1];
    for r in records {
        fill_counts[r.fills as usize] += 1;
    }
    let terminal_inventory_counts = (0..=levels)
        .map(|j| {
            let q = problem.delta_size * j as f64;
            (q, fill_counts[levels - j])
        })
        .collect();

    Ok(SimulationStats {
        paths: n,
        mean_utility: mean,
        utility_std_error: se,
        certainty_equivalent: ce,
        ce_std_error: ce_se,
        fill_counts,
        terminal_inventory_counts,
    })
}

/// Simulate and aggregate.
pub fn simulate(
    problem: &LiquidationProblem,
    intensity: &IntensityModel,
    policy: &QuotePolicy,
    config: &SimulationConfig,
) -> Result<SimulationStats, SimError> {
    let records = simulate_paths(problem, intensity, policy, config)?;
    stats_from_records(&records, problem)
}

/// One policy's line in a tournament.
#[derive(Debug, Clone)]
pub struct TournamentRow {
    pub name: String,
    pub certainty_equivalent: f64,
    pub ce_std_error: f64,
    pub mean_utility: f64,
    /// CE minus the first (reference) policy's CE.
    pub delta_ce_vs_reference: f64,
    /// Set when this policy beats the reference by more than 3 joint standard
    /// errors under common random numbers.
    pub flagged: bool,
}

/// Run every policy against common random numbers (shared seed) and compare
/// certainty equivalents against the first policy, which is the benchmark.
pub fn policy_tournament(
    problem: &LiquidationProblem,
    intensity: &IntensityModel,
    policies: &[(String, QuotePolicy)],
    config: &SimulationConfig,
) -> Result<Vec<TournamentRow>, SimError> {
    if policies.is_empty() {
        return Err(SimError::InvalidConfig("no policies to compare".into()));
    }
    let all: Vec<Vec<PathRecord>> = policies
        .iter()
        .map(|(_, policy)| simulate_paths(problem, intensity, policy, config))
        .collect::<Result<_, _>>()?;

    let n = config.paths as f64;
    let gamma = problem.risk_aversion;
    let mean_of = |records: &[PathRecord]| -> f64 {
        records.iter().map(|r| r.utility).sum::<f64>() / n
    };
    let ref_records = &all[0];
    let ref_mean = mean_of(ref_records);

    let mut rows = Vec::with_capacity(policies.len());
    for (idx, (name, _)) in policies.iter().enumerate() {
        let records = &all[idx];
        let stats = stats_from_records(records, problem)?;
        let mean = stats.mean_utility;

        // Paired delta-method error on CE_j − CE_0 under common random numbers.
        let mut var_j = 0.0;
        let mut var_0 = 0.0;
        let mut cov = 0.0;
        for (rj, r0) in records.iter().zip(ref_records) {
            let a = rj.utility - mean;
            let b = r0.utility - ref_mean;
            var_j += a * a;
            var_0 += b * b;
            cov += a * b;
        }
        let denom = (n - 1.0).max(1.0);
        var_j /= denom;
        var_0 /= denom;
        cov /= denom;
        let var_dce = (var_j / (mean * mean) + var_0 / (ref_mean * ref_mean)
            - 2.0 * cov / (mean * ref_mean))
            / (gamma * gamma * n);
        let joint_se = var_dce.max(0.0).sqrt();

        let ref_ce = -(-ref_mean).ln() / gamma;
        let delta_ce = stats.certainty_equivalent - ref_ce;
        rows.push(TournamentRow {
            name: name.clone(),
            certainty_equivalent: stats.certainty_equivalent,
            ce_std_error: stats.ce_std_error,
            mean_utility: mean,
            delta_ce_vs_reference: delta_ce,
            flagged: idx != 0 && delta_ce > 3.0 * joint_se,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value_solver::Penalty;

    fn small_problem() -> LiquidationProblem {
        LiquidationProblem {
            q0: 200.0,
            delta_size: 50.0,
            horizon: 60.0,
            drift: 0.0,
            volatility: 0.3,
            risk_aversion: 0.001,
            penalty: Penalty::Constant(3.0),
        }
    }

    fn intensity() -> IntensityModel {
        IntensityModel::exponential(0.1, 0.3).unwrap()
    }

    fn config(paths: usize) -> SimulationConfig {
        SimulationConfig {
            paths,
            dt: 0.05,
            seed: 7,
            initial_cash: 0.0,
            initial_price: 100.0,
        }
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let p = small_problem();
        let m = intensity();
        let policy = QuotePolicy::Constant(2.0);
        let a = simulate(&p, &m, &policy, &config(2000)).unwrap();
        let b = simulate(&p, &m, &policy, &config(2000)).unwrap();
        assert_eq!(a.mean_utility.to_bits(), b.mean_utility.to_bits());
        assert_eq!(a.fill_counts, b.fill_counts);
    }

    #[test]
    fn inventory_conservation_on_every_path() {
        let p = small_problem();
        let m = intensity();
        let policy = QuotePolicy::Constant(1.0);
        let records = simulate_paths(&p, &m, &policy, &config(500)).unwrap();
        for r in &records {
            let expect = p.q0 - p.delta_size * r.fills as f64;
            assert_eq!(r.terminal_inventory, expect);
        }
    }

    #[test]
    fn unreachable_quote_means_no_fills_and_deterministic_utility() {
        let mut p = small_problem();
        p.volatility = 0.0;
        let m = intensity();
        let policy = QuotePolicy::Constant(1e6);
        let stats = simulate(&p, &m, &policy, &config(200)).unwrap();
        assert_eq!(stats.fill_counts[0], 200);
        // W = x + q0(s − ℓ) with no noise.
        let wealth = 0.0 + 200.0 * (100.0 - 3.0);
        let expect = -(-0.001f64 * wealth).exp();
        assert!((stats.mean_utility - expect).abs() <= 1e-12 * expect.abs());
        assert!(stats.utility_std_error < 1e-18);
        assert!(stats.mean_utility < 0.0);
    }

    #[test]
    fn certainty_equivalent_transforms() {
        let (ce, _) = certainty_equivalent(-1.0, 0.0, 0.001).unwrap();
        assert_eq!(ce, 0.0);
        let u = -(-0.001f64 * 100.0).exp();
        let (ce, _) = certainty_equivalent(u, 0.0, 0.001).unwrap();
        assert!((ce - 100.0).abs() < 1e-9);
        assert!(certainty_equivalent(0.0, 0.0, 0.001).is_err());
        assert!(certainty_equivalent(0.5, 0.0, 0.001).is_err());
    }

    #[test]
    fn ce_ordering_matches_utility_ordering() {
        // Monotone transform: higher mean utility (less negative) -> higher CE.
        let (ce_low, _) = certainty_equivalent(-0.9, 0.0, 0.001).unwrap();
        let (ce_high, _) = certainty_equivalent(-0.8, 0.0, 0.001).unwrap();
        assert!(ce_high > ce_low);
    }

    #[test]
    fn identical_policies_tie_exactly_in_a_tournament() {
        let p = small_problem();
        let m = intensity();
        let policies = vec![
            ("a".to_string(), QuotePolicy::Constant(2.0)),
            ("b".to_string(), QuotePolicy::Constant(2.0)),
        ];
        let rows = policy_tournament(&p, &m, &policies, &config(1000)).unwrap();
        assert_eq!(
            rows[0].certainty_equivalent.to_bits(),
            rows[1].certainty_equivalent.to_bits()
        );
        assert!(!rows[1].flagged);
        assert_eq!(rows[1].delta_ce_vs_reference, 0.0);
    }

    #[test]
    fn dt_must_divide_horizon() {
        let p = small_problem();
        let m = intensity();
        let mut cfg = config(10);
        cfg.dt = 7.0;
        assert!(matches!(
            simulate(&p, &m, &QuotePolicy::Constant(1.0), &cfg),
            Err(SimError::InvalidConfig(_))
        ));
    }
}
