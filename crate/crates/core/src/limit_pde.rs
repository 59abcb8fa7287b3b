//! The small-order-size limit: with Λ_Δ = Λ/Δ and Δ → 0 the discrete values
//! converge to the unique viscosity solution of
//!
//!   −γ∂_tθ(t,q) − γμq + ½γ²σ²q² − H(∂_qθ(t,q)) = 0,
//!   θ(t,0) = 0, θ(T,q) = −ℓ(q)q,
//!
//! with H(p) = γ·sup_δ Λ(δ)(δ−p). The solver reuses the discrete operator of
//! the order-size system with H in place of H_Δ and the one-sided difference
//! (θ(q) − θ(q−dq))/dq, which is monotone under the step restriction
//! dt ≤ γ·dq / sup|H′| (enforced adaptively; |H′(p)| = γΛ(δ̃*(p))).
//!
//! The same module exposes the execution-cost bridge: f(v) = −Λ⁻¹(v) is the
//! per-share cost of trading at rate v, and the cost-side Hamiltonian
//! H̃(p) = sup_{v≥0}(−f(v)v − pv) satisfies H = γ·H̃ — computed here by direct
//! maximization over the trading rate, independent of the quote-space route.

use thiserror::Error;

use crate::hamiltonian::{limit_hamiltonian_warm, HamiltonianError};
use crate::intensity::{IntensityError, IntensityModel};
use crate::march::{backward_march, uniform_times, Scheme};
use crate::value_solver::{solve_theta, LiquidationProblem, SolveError, ValueGrid};

/// Default clip on marketable depth: Λ is only inverted above −50 ticks.
pub const DEFAULT_MAX_MARKETABLE_DEPTH: f64 = -50.0;

#[derive(Debug, Error)]
pub enum LimitPdeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step restriction violated: dt = {dt} but dq/sup Λ(δ*) = {limit}; use dt <= {suggested_dt}")]
    StepRestriction {
        dt: f64,
        limit: f64,
        suggested_dt: f64,
    },
    #[error("Hamiltonian failure at node t={t}, q={q}: {source}")]
    Hamiltonian {
        t: f64,
        q: f64,
        source: HamiltonianError,
    },
    #[error("trading rate {value} outside the invertible range of the intensity")]
    OutOfRange { value: f64 },
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("value bound violated at t={t}, q={q}: theta={theta} outside [{lower}, {upper}]")]
    BoundsViolation {
        t: f64,
        q: f64,
        theta: f64,
        lower: f64,
        upper: f64,
    },
}

/// March the limit equation on inventories {0, dq, …, q0}. `problem.delta_size`
/// is ignored; `base_intensity` is the unscaled Λ.
pub fn solve_limit_hj(
    problem: &LiquidationProblem,
    base_intensity: &IntensityModel,
    dq: f64,
    dt: f64,
) -> Result<ValueGrid, LimitPdeError> {
    if !(dq > 0.0) || !dq.is_finite() {
        return Err(LimitPdeError::InvalidConfig(format!(
            "dq must be positive, got {dq}"
        )));
    }
    let ratio = problem.q0 / dq;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
        return Err(LimitPdeError::InvalidConfig(format!(
            "dq = {dq} must divide q0 = {}",
            problem.q0
        )));
    }
    {
        // Validate everything except the order-size lattice, which dq replaces.
        let mut p = problem.clone();
        p.delta_size = dq;
        p.validate()?;
    }
    let steps = (problem.horizon / dt).round();
    if !(dt > 0.0) || steps < 1.0 || (steps * dt - problem.horizon).abs() > 1e-6 * problem.horizon
    {
        return Err(LimitPdeError::InvalidConfig(format!(
            "dt = {dt} must divide the horizon {}",
            problem.horizon
        )));
    }
    let times = uniform_times(problem.horizon, steps as usize);

    let levels = ratio.round() as usize;
    let inventories: Vec<f64> = (0..=levels).map(|j| dq * j as f64).collect();
    let gamma = problem.risk_aversion;
    let consts: Vec<f64> = inventories
        .iter()
        .map(|&q| {
            let mut c = 0.0;
            c -= problem.drift * q;
            let sq = problem.volatility * q;
            c += 0.5 * gamma * (sq * sq);
            c
        })
        .collect();
    let terminal: Vec<f64> = inventories
        .iter()
        .map(|&q| -problem.penalty.eval(q) * q + 0.0)
        .collect();

    let mut warm: Vec<Option<f64>> = vec![None; inventories.len()];
    let theta = backward_march(&times, &terminal, Scheme::Euler, |t, y, out| -> Result<(), LimitPdeError> {
        out[0] = 0.0;
        let mut lambda_max: f64 = 0.0;
        for j in 1..y.len() {
            let p = (y[j] - y[j - 1]) / dq;
            let (h, quote) = limit_hamiltonian_warm(base_intensity, gamma, p, warm[j]).map_err(
                |source| LimitPdeError::Hamiltonian {
                    t,
                    q: inventories[j],
                    source,
                },
            )?;
            warm[j] = Some(quote);
            lambda_max = lambda_max.max(base_intensity.eval(quote).value);
            out[j] = consts[j] - h / gamma;
        }
        // Monotonicity of the scheme: dt ≤ γ·dq/sup|H′| = dq/sup Λ(δ*),
        // refreshed against the gradients actually encountered.
        let limit = dq / lambda_max;
        if dt > limit {
            return Err(LimitPdeError::StepRestriction {
                dt,
                limit,
                suggested_dt: 0.8 * limit,
            });
        }
        Ok(())
    })?;

    let grid = ValueGrid::new(times, inventories, theta);

    // Same envelope as the discrete solves, with H(0) of the base intensity.
    let (h0, _) = limit_hamiltonian_warm(base_intensity, gamma, 0.0, None).map_err(|source| {
        LimitPdeError::Hamiltonian {
            t: problem.horizon,
            q: 0.0,
            source,
        }
    })?;
    let q0 = problem.q0;
    let lq0 = problem.penalty.eval(q0) * q0;
    let sig2q2 = problem.volatility * problem.volatility * q0 * q0;
    for (it, &t) in grid.times().iter().enumerate() {
        let rem = problem.horizon - t;
        let lower = -lq0 - (-problem.drift).max(0.0) * q0 * rem - 0.5 * gamma * sig2q2 * rem;
        let upper = problem.drift.max(0.0) * q0 * rem + h0 / gamma * rem;
        let tol = 1e-9 * (1.0 + lower.abs() + upper.abs());
        for (iq, &q) in grid.inventories().iter().enumerate() {
            let v = grid.theta_at(it, iq);
            if v < lower - tol || v > upper + tol {
                return Err(LimitPdeError::BoundsViolation {
                    t,
                    q,
                    theta: v,
                    lower,
                    upper,
                });
            }
        }
    }
    Ok(grid)
}

/// One row of the Δ-convergence study.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub delta_size: f64,
    /// sup-node distance between the step interpolant of θ_Δ and the limit grid.
    pub sup_error: f64,
    /// Previous row's error over this row's (populated from the second row on).
    pub ratio: Option<f64>,
}

/// For each Δ, solve the discrete system with Λ_Δ = Λ/Δ and measure the
/// sup-distance of its right-continuous step interpolant
/// θ^c_Δ(t,q) = θ_Δ(t,(k+1)Δ) for q ∈ (kΔ,(k+1)Δ] from the limit grid.
pub fn convergence_study(
    problem: &LiquidationProblem,
    base_intensity: &IntensityModel,
    deltas: &[f64],
    dq: f64,
    dt: f64,
) -> Result<Vec<StudyRow>, LimitPdeError> {
    let limit = solve_limit_hj(problem, base_intensity, dq, dt)?;
    let mut rows: Vec<StudyRow> = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let scaled = base_intensity.rescale_for_order_size(delta)?;
        let mut discrete_problem = problem.clone();
        discrete_problem.delta_size = delta;
        let grid = solve_theta(&discrete_problem, &scaled, dt)?;

        // Map each limit inventory node onto the step interpolant's level.
        let level_of: Vec<usize> = limit
            .inventories()
            .iter()
            .map(|&q| ((q / delta) - 1e-12).ceil().max(0.0) as usize)
            .collect();
        let mut sup = 0.0_f64;
        for it in 0..limit.n_times() {
            for (iq, &lvl) in level_of.iter().enumerate() {
                let d = (grid.theta_at(it, lvl) - limit.theta_at(it, iq)).abs();
                sup = sup.max(d);
            }
        }
        let ratio = rows.last().map(|prev: &StudyRow| prev.sup_error / sup);
        rows.push(StudyRow {
            delta_size: delta,
            sup_error: sup,
            ratio,
        });
    }
    Ok(rows)
}

/// The execution-cost bridge: f(v) = −Λ⁻¹(v) maps the intensity curve to an
/// instantaneous per-share cost of trading at rate v, and
/// H̃(p) = sup_{v≥0}(−f(v)v − pv) is the corresponding Hamiltonian.
#[derive(Debug, Clone)]
pub struct ImpactBridge {
    intensity: IntensityModel,
    /// Λ is inverted only for offsets above this depth (tabulated models have
    /// bounded empirical range).
    pub max_depth: f64,
}

impl ImpactBridge {
    pub fn new(intensity: IntensityModel) -> Self {
        Self {
            intensity,
            max_depth: DEFAULT_MAX_MARKETABLE_DEPTH,
        }
    }

    /// Largest rate the bridge will invert, Λ(max_depth).
    pub fn max_rate(&self) -> f64 {
        self.intensity.eval(self.max_depth).value
    }

    /// f(v) = −Λ⁻¹(v): negative for v < Λ(0) (passive quotes), positive above
    /// (marketable depth). Increasing in v.
    pub fn impact(&self, rate: f64) -> Result<f64, LimitPdeError> {
        Ok(-self.invert_rate(rate)?)
    }

    fn invert_rate(&self, rate: f64) -> Result<f64, LimitPdeError> {
        if !(rate > 0.0) || !rate.is_finite() || rate >= self.max_rate() {
            return Err(LimitPdeError::OutOfRange { value: rate });
        }
        let mut lo = self.max_depth;
        // Expand right until Λ(hi) < rate; the tail vanishes so this terminates.
        let mut hi = lo + 1.0;
        let mut w = 1.0;
        for _ in 0..200 {
            if self.intensity.eval(hi).value < rate {
                break;
            }
            lo = hi;
            w *= 2.0;
            hi = lo + w;
        }
        if self.intensity.eval(hi).value >= rate {
            return Err(LimitPdeError::OutOfRange { value: rate });
        }
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            if self.intensity.eval(mid).value > rate {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok(mid)
    }

    /// H̃(p) = sup_{v≥0}(−f(v)v − pv), maximized over log-rate by golden
    /// section. Satisfies H(p) = γ·H̃(p).
    pub fn hamiltonian_tilde(&self, p: f64) -> Result<f64, LimitPdeError> {
        // The maximizer's offset is p + O(1) for decaying tails; keep the rate
        // window wide on both sides.
        let v_hi = self.max_rate() * (1.0 - 1e-12);
        let v_lo = self
            .intensity
            .eval(p.max(self.max_depth) + 400.0)
            .value
            .max(f64::MIN_POSITIVE * 1e16);
        if v_lo >= v_hi {
            return Err(LimitPdeError::OutOfRange { value: p });
        }
        let gain = |u: f64| -> Result<f64, LimitPdeError> {
            let v = u.exp();
            Ok((-self.impact(v)? - p) * v)
        };
        let mut lo = v_lo.ln();
        let mut hi = v_hi.ln();
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut c = hi - INV_PHI * (hi - lo);
        let mut d = lo + INV_PHI * (hi - lo);
        let mut fc = gain(c)?;
        let mut fd = gain(d)?;
        for _ in 0..300 {
            if hi - lo <= 1e-12 {
                break;
            }
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - INV_PHI * (hi - lo);
                fc = gain(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + INV_PHI * (hi - lo);
                fd = gain(d)?;
            }
        }
        gain(0.5 * (lo + hi)).map(|v| v.max(0.0))
    }
}
