//! Stationary (long-horizon) behavior: as T → ∞ the value increments settle at
//!
//!   θ^∞_Δ(q) = Δ·Σ_{q′ ∈ {Δ,…,q}} H_Δ⁻¹(½γ²σ²q′² − γμq′),
//!
//! and the optimal quote at full inventory tends to
//! δ*^∞ = δ̃*_Δ(H_Δ⁻¹(½γ²σ²q₀² − γμq₀)), equivalently the root of
//!
//!   −μq₀ + ½γσ²q₀² = Δ·Λ_Δ(δ)²/(γΔ·Λ_Δ(δ) − Λ′_Δ(δ)).
//!
//! Valid when γ > 0, μ < ½γσ²Δ and H_Δ vanishes at +∞ (tail decay). Both
//! quote routes are computed and cross-checked; a disagreement flags an
//! inverse-Hamiltonian bracketing bug.

use thiserror::Error;

use crate::hamiltonian::{HamiltonianError, QuoteContext};
use crate::intensity::{Hypothesis, IntensityModel};
use crate::value_solver::LiquidationProblem;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("hypothesis violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),
}

/// Stationary values per inventory level and the full-inventory quote.
#[derive(Debug, Clone)]
pub struct AsymptoticResult {
    /// (q, θ^∞(q)) for q ∈ {0, Δ, …, q₀}; θ^∞(0) = 0.
    pub theta_inf: Vec<(f64, f64)>,
    /// δ*^∞ at q₀.
    pub delta_star_inf: f64,
}

fn check_preconditions(
    problem: &LiquidationProblem,
    intensity: &IntensityModel,
) -> Result<QuoteContext, AsymptoticsError> {
    problem
        .validate()
        .map_err(|e| AsymptoticsError::InvalidProblem(e.to_string()))?;
    let gamma = problem.risk_aversion;
    let bound = 0.5 * gamma * problem.volatility * problem.volatility * problem.delta_size;
    if !(problem.drift < bound) {
        return Err(AsymptoticsError::PreconditionViolated(format!(
            "need mu < (1/2)*gamma*sigma^2*delta_size: {} >= {bound}",
            problem.drift
        )));
    }
    let report = intensity.validate_hypotheses(&IntensityModel::default_probe_grid(), 1e-9);
    if !report.check(Hypothesis::TailDecay).passed {
        return Err(AsymptoticsError::PreconditionViolated(
            "intensity tail does not vanish, so H does not vanish at +infinity".into(),
        ));
    }
    QuoteContext::from_validated(gamma, problem.delta_size, intensity.clone(), &report)
        .map_err(AsymptoticsError::from)
}

/// Exact partial sums of inverse-Hamiltonian evaluations.
pub fn asymptotic_theta(
    problem: &LiquidationProblem,
    intensity: &IntensityModel,
) -> Result<AsymptoticResult, AsymptoticsError> {
    let ctx = check_preconditions(problem, intensity)?;
    let gamma = problem.risk_aversion;
    let sigma = problem.volatility;
    let mu = problem.drift;
    let delta = problem.delta_size;

    let mut theta_inf = Vec::with_capacity(problem.levels() + 1);
    theta_inf.push((0.0, 0.0));
    let mut acc = 0.0;
    let mut last_p = 0.0;
    for j in 1..=problem.levels() {
        let q = delta * j as f64;
        let arg = 0.5 * gamma * gamma * sigma * sigma * q * q - gamma * mu * q;
        last_p = ctx.inverse_hamiltonian(arg)?;
        acc += delta * last_p;
        theta_inf.push((q, acc));
    }
    let delta_star_inf = ctx.optimal_quote(last_p)?;
    Ok(AsymptoticResult {
        theta_inf,
        delta_star_inf,
    })
}

/// δ*^∞ through both characterizations, cross-asserted to 1e-9 ticks.
pub fn asymptotic_quote(
    problem: &LiquidationProblem,
    intensity: &IntensityModel,
) -> Result<f64, AsymptoticsError> {
    let ctx = check_preconditions(problem, intensity)?;
    let gamma = problem.risk_aversion;
    let q0 = problem.q0;
    let delta = problem.delta_size;

    // Route one: composed maps.
    let arg = 0.5 * gamma * gamma * problem.volatility * problem.volatility * q0 * q0
        - gamma * problem.drift * q0;
    let composed = ctx.optimal_quote(ctx.inverse_hamiltonian(arg)?)?;

    // Route two: direct root of the implicit characterization
    //   −μq₀ + ½γσ²q₀² = Δ·Λ² / (γΔ·Λ − Λ′)  (the right side is H_Δ(f(δ))/γ·Δ…
    // decreasing in δ). Bisect on a bracket grown around route one's answer.
    let target = -problem.drift * q0
        + 0.5 * gamma * problem.volatility * problem.volatility * q0 * q0;
    let rhs = |d: f64| {
        let e = intensity.eval(d);
        let gd = gamma * delta;
        delta * e.value * e.value / (gd * e.value - e.d1)
    };
    let mut lo = composed - 1.0;
    let mut hi = composed + 1.0;
    let mut expansions = 0;
    while rhs(lo) < target {
        lo -= 2.0_f64.powi(expansions);
        expansions += 1;
        if expansions > 60 {
            return Err(AsymptoticsError::InternalConsistency(
                "no bracket for the implicit quote characterization".into(),
            ));
        }
    }
    let mut expansions = 0;
    while rhs(hi) > target {
        hi += 2.0_f64.powi(expansions);
        expansions += 1;
        if expansions > 60 {
            return Err(AsymptoticsError::InternalConsistency(
                "no bracket for the implicit quote characterization".into(),
            ));
        }
    }
    let mut implicit = 0.5 * (lo + hi);
    for _ in 0..200 {
        implicit = 0.5 * (lo + hi);
        if rhs(implicit) > target {
            lo = implicit;
        } else {
            hi = implicit;
        }
        if hi - lo <= 1e-13 * (1.0 + implicit.abs()) {
            break;
        }
    }

    if (composed - implicit).abs() > 1e-9 {
        return Err(AsymptoticsError::InternalConsistency(format!(
            "quote routes disagree: composed {composed} vs implicit {implicit}; \
             inverse-Hamiltonian bracketing bug"
        )));
    }
    Ok(composed)
}
