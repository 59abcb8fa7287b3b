//! The optimal-quote map δ̃*(p) and the Hamiltonians driving the value ODEs.
//!
//! For order size Δ and risk aversion γ, posting at offset δ against a
//! reservation-price increment p earns at rate
//! L_Δ(p,δ) = Λ_Δ(δ)(1 − e^{−γΔ(δ−p)}). Its maximizer δ̃*_Δ(p) is the unique
//! root of the strictly increasing map
//!
//!   f(δ) = δ − (1/γΔ)·log(1 − γΔ·Λ_Δ(δ)/Λ′_Δ(δ)),
//!
//! and the Hamiltonian is H_Δ(p) = γΔ·Λ²/(γΔ·Λ − Λ′) evaluated at δ̃*_Δ(p).
//! As Δ→0 (with Λ_Δ = Λ/Δ) these become δ̃*(p) solving δ + Λ/Λ′ = p and
//! H(p) = γ·Λ²/(−Λ′) = γ·sup_δ Λ(δ)(δ−p).
//!
//! Roots are found by Newton iterations safeguarded by a maintained bracket;
//! when the curvature inequality fails (advisory validation) the sup is taken
//! by grid scan plus golden-section and the smallest maximizer is returned.

use thiserror::Error;

use crate::intensity::{IntensityModel, ValidationReport};

/// Residual target for the implicit quote equations, in ticks. Near machine
/// precision so the root is independent of the warm-start path; the bracket
/// collapse below catches targets the arithmetic cannot reach.
const QUOTE_RESIDUAL_TOL: f64 = 1e-15;
/// Contractual residual bound; convergence below this is an error.
const QUOTE_RESIDUAL_MAX: f64 = 1e-10;
const MAX_BRACKET_EXPANSIONS: u32 = 200;
const MAX_ROOT_ITERATIONS: u32 = 200;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("intensity model failed required validation ({0})")]
    InvalidIntensity(String),
    #[error("root search did not converge; last bracket [{lo}, {hi}]")]
    NonConvergence { lo: f64, hi: f64 },
    #[error("value {value} is out of range for the inverse Hamiltonian")]
    OutOfRange { value: f64 },
}

/// Everything needed to price one side of the book: γ, Δ and the intensity.
///
/// Construction validates the model on the default probe grid and refuses
/// non-positive or non-decreasing intensities. A failed curvature check is
/// remembered and switches the quote search to the derivative-free path.
#[derive(Debug, Clone)]
pub struct QuoteContext {
    gamma: f64,
    delta_size: f64,
    intensity: IntensityModel,
    curvature_ok: bool,
}

impl QuoteContext {
    pub fn new(
        gamma: f64,
        delta_size: f64,
        intensity: IntensityModel,
    ) -> Result<Self, HamiltonianError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(HamiltonianError::InvalidParameter {
                name: "gamma",
                reason: format!("must be positive and finite, got {gamma}"),
            });
        }
        if !(delta_size > 0.0) || !delta_size.is_finite() {
            return Err(HamiltonianError::InvalidParameter {
                name: "delta_size",
                reason: format!("must be positive and finite, got {delta_size}"),
            });
        }
        let report = intensity.validate_hypotheses(&IntensityModel::default_probe_grid(), 1e-9);
        Self::from_validated(gamma, delta_size, intensity, &report)
    }

    /// Build from an already-computed validation report (spares re-probing).
    pub fn from_validated(
        gamma: f64,
        delta_size: f64,
        intensity: IntensityModel,
        report: &ValidationReport,
    ) -> Result<Self, HamiltonianError> {
        if !report.required_passed() {
            let failing: Vec<String> = report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.hypothesis.to_string())
                .collect();
            return Err(HamiltonianError::InvalidIntensity(failing.join(", ")));
        }
        let curvature_ok = report
            .check(crate::intensity::Hypothesis::Curvature)
            .passed;
        Ok(Self {
            gamma,
            delta_size,
            intensity,
            curvature_ok,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta_size(&self) -> f64 {
        self.delta_size
    }

    pub fn intensity(&self) -> &IntensityModel {
        &self.intensity
    }

    /// f(δ) = δ − (1/γΔ)·log(1 − γΔ·Λ/Λ′). Strictly increasing under the
    /// curvature hypothesis; f(δ) < δ always since Λ/Λ′ < 0.
    pub fn quote_map(&self, delta: f64) -> f64 {
        let gd = self.gamma * self.delta_size;
        let e = self.intensity.eval(delta);
        if e.value == 0.0 {
            // Λ underflowed: f(δ) = δ − O(1) out there, and only the
            // increasing direction matters to the root search.
            return delta;
        }
        if e.d1 >= 0.0 {
            // Degenerate slope: the limit Λ/Λ′ → −∞.
            return f64::NEG_INFINITY;
        }
        delta - (1.0 - gd * e.value / e.d1).ln() / gd
    }

    /// f′(δ); positive for valid models (used only to steer Newton).
    fn quote_map_deriv(&self, delta: f64) -> f64 {
        let gd = self.gamma * self.delta_size;
        let e = self.intensity.eval(delta);
        if e.value == 0.0 {
            return 1.0;
        }
        if e.d1 >= 0.0 {
            return f64::INFINITY;
        }
        let ratio_deriv = (e.d1 * e.d1 - e.value * e.d2) / (e.d1 * e.d1);
        1.0 + ratio_deriv / (1.0 - gd * e.value / e.d1)
    }

    /// The optimal quote δ̃*_Δ(p): maximizer of L_Δ(p,·).
    pub fn optimal_quote(&self, p: f64) -> Result<f64, HamiltonianError> {
        self.optimal_quote_warm(p, None)
    }

    /// Same as [`optimal_quote`](Self::optimal_quote) with an initial guess,
    /// e.g. the previous time step's quote along a march.
    pub fn optimal_quote_warm(&self, p: f64, guess: Option<f64>) -> Result<f64, HamiltonianError> {
        if !self.curvature_ok {
            return Ok(self.relaxed_argmax(p));
        }
        let seed = guess.unwrap_or_else(|| {
            // Exact for exponentials: k_eff = −Λ′(p)/Λ(p). Plateau shapes make
            // k_eff tiny, so cap the step: the bracket search takes over.
            let e = self.intensity.eval(p);
            let k_eff = -e.d1 / e.value;
            if k_eff.is_finite() && k_eff > 1e-3 {
                p + 1.0 / k_eff
            } else {
                p + 1.0
            }
        });
        solve_increasing(
            |d| self.quote_map(d),
            |d| self.quote_map_deriv(d),
            p,
            p,
            seed,
        )
    }

    /// H_Δ(p) > 0: the supremum of L_Δ(p,·).
    pub fn hamiltonian_value(&self, p: f64) -> Result<f64, HamiltonianError> {
        self.hamiltonian_value_warm(p, None)
    }

    pub fn hamiltonian_value_warm(
        &self,
        p: f64,
        guess: Option<f64>,
    ) -> Result<f64, HamiltonianError> {
        self.hamiltonian_and_quote_warm(p, guess).map(|(h, _)| h)
    }

    /// (H_Δ(p), δ̃*_Δ(p)) in one solve; the quote doubles as the warm start
    /// for the next time step of a march.
    pub fn hamiltonian_and_quote_warm(
        &self,
        p: f64,
        guess: Option<f64>,
    ) -> Result<(f64, f64), HamiltonianError> {
        let d = self.optimal_quote_warm(p, guess)?;
        let h = if self.curvature_ok {
            self.hamiltonian_from_quote(d)
        } else {
            self.execution_gain(p, d)
        };
        Ok((h, d))
    }

    /// H_Δ expressed through the quote: γΔ·Λ²/(γΔ·Λ − Λ′). Exact at the root
    /// of f; equals H_Δ(f(δ)) for any δ.
    pub(crate) fn hamiltonian_from_quote(&self, delta_star: f64) -> f64 {
        let gd = self.gamma * self.delta_size;
        let e = self.intensity.eval(delta_star);
        gd * e.value * e.value / (gd * e.value - e.d1)
    }

    /// L_Δ(p,δ).
    pub fn execution_gain(&self, p: f64, delta: f64) -> f64 {
        let gd = self.gamma * self.delta_size;
        self.intensity.eval(delta).value * (1.0 - (-gd * (delta - p)).exp())
    }

    /// p with H_Δ(p) = y, by bisection on the strictly decreasing H_Δ with
    /// geometric bracket growth. `y` must be positive and reachable.
    pub fn inverse_hamiltonian(&self, y: f64) -> Result<f64, HamiltonianError> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(HamiltonianError::OutOfRange { value: y });
        }
        let h = |p: f64| self.hamiltonian_value(p);

        // Bracket [lo, hi] with H(lo) >= y >= H(hi).
        let mut lo = 0.0;
        let mut hi = 0.0;
        if h(0.0)? >= y {
            let mut w = 1.0;
            loop {
                hi = lo + w;
                if h(hi)? <= y {
                    break;
                }
                lo = hi;
                w *= 2.0;
                if w > 1e9 {
                    return Err(HamiltonianError::OutOfRange { value: y });
                }
            }
        } else {
            let mut w = 1.0;
            loop {
                lo = hi - w;
                if h(lo)? >= y {
                    break;
                }
                hi = lo;
                w *= 2.0;
                if w > 1e9 {
                    // H_Δ is unbounded as p → −∞ for admissible models; if the
                    // search runs away the request was out of range.
                    return Err(HamiltonianError::OutOfRange { value: y });
                }
            }
        }

        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let hm = h(mid)?;
            if (hm - y).abs() <= 1e-12 * y {
                return Ok(mid);
            }
            if hm > y {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() <= 1e-15 * (1.0 + mid.abs()) {
                return Ok(mid);
            }
        }
        Err(HamiltonianError::NonConvergence { lo, hi })
    }

    /// Grid scan plus golden-section for models without the curvature
    /// guarantee; ties break toward the smallest maximizer.
    fn relaxed_argmax(&self, p: f64) -> f64 {
        let span = 200.0;
        let n = 4000usize;
        let step = span / n as f64;
        let mut best_i = 0usize;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let d = p + i as f64 * step;
            let v = self.execution_gain(p, d);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let lo = p + (best_i.saturating_sub(1)) as f64 * step;
        let hi = p + (best_i + 1).min(n) as f64 * step;
        golden_max(|d| self.execution_gain(p, d), lo, hi)
    }
}

/// Hard floor δ ≥ δ^min. The splice point
/// p^min = f(δ^min) < δ^min caches where the floor starts binding.
#[derive(Debug, Clone)]
pub struct ConstrainedContext {
    base: QuoteContext,
    delta_min: f64,
    p_min: f64,
}

impl ConstrainedContext {
    pub fn new(base: QuoteContext, delta_min: f64) -> Result<Self, HamiltonianError> {
        if !delta_min.is_finite() {
            return Err(HamiltonianError::InvalidParameter {
                name: "delta_min",
                reason: format!("must be finite, got {delta_min}"),
            });
        }
        let p_min = base.quote_map(delta_min);
        Ok(Self {
            base,
            delta_min,
            p_min,
        })
    }

    pub fn base(&self) -> &QuoteContext {
        &self.base
    }

    pub fn delta_min(&self) -> f64 {
        self.delta_min
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    /// H^min_Δ(p): the unconstrained H_Δ above p^min, the clamped payoff
    /// L_Δ(p, δ^min) below. Continuous and decreasing.
    pub fn hamiltonian_value(&self, p: f64) -> Result<f64, HamiltonianError> {
        self.hamiltonian_value_warm(p, None)
    }

    pub fn hamiltonian_value_warm(
        &self,
        p: f64,
        guess: Option<f64>,
    ) -> Result<f64, HamiltonianError> {
        self.hamiltonian_and_quote_warm(p, guess).map(|(h, _)| h)
    }

    /// (H^min_Δ(p), constrained quote).
    pub fn hamiltonian_and_quote_warm(
        &self,
        p: f64,
        guess: Option<f64>,
    ) -> Result<(f64, f64), HamiltonianError> {
        if p >= self.p_min {
            let (h, d) = self.base.hamiltonian_and_quote_warm(p, guess)?;
            Ok((h, d.max(self.delta_min)))
        } else {
            Ok((
                self.base.execution_gain(p, self.delta_min),
                self.delta_min,
            ))
        }
    }

    /// The constrained optimal quote max(δ^min, δ̃*_Δ(p)).
    pub fn optimal_quote_warm(&self, p: f64, guess: Option<f64>) -> Result<f64, HamiltonianError> {
        if p >= self.p_min {
            Ok(self.base.optimal_quote_warm(p, guess)?.max(self.delta_min))
        } else {
            Ok(self.delta_min)
        }
    }
}

/// The small-order-size optimal quote: root of δ + Λ(δ)/Λ′(δ) = p.
/// Requires the strict curvature hypothesis Λ Λ″ < 2Λ′².
pub fn limit_optimal_quote(intensity: &IntensityModel, p: f64) -> Result<f64, HamiltonianError> {
    limit_optimal_quote_warm(intensity, p, None)
}

pub fn limit_optimal_quote_warm(
    intensity: &IntensityModel,
    p: f64,
    guess: Option<f64>,
) -> Result<f64, HamiltonianError> {
    let g = |d: f64| {
        let e = intensity.eval(d);
        if e.value == 0.0 {
            return d;
        }
        if e.d1 >= 0.0 {
            return f64::NEG_INFINITY;
        }
        d + e.value / e.d1
    };
    let dg = |d: f64| {
        let e = intensity.eval(d);
        if e.value == 0.0 {
            return 1.0;
        }
        if e.d1 >= 0.0 {
            return f64::INFINITY;
        }
        (2.0 * e.d1 * e.d1 - e.value * e.d2) / (e.d1 * e.d1)
    };
    let seed = guess.unwrap_or_else(|| {
        let e = intensity.eval(p);
        let step = e.value / -e.d1;
        if step.is_finite() && step > 0.0 {
            p + step.min(1e3)
        } else {
            p + 1.0
        }
    });
    solve_increasing(g, dg, p, p, seed)
}

/// The limit Hamiltonian H(p) = γ·Λ(δ̃*)²/(−Λ′(δ̃*)) = γ·sup_δ Λ(δ)(δ−p).
pub fn limit_hamiltonian(
    intensity: &IntensityModel,
    gamma: f64,
    p: f64,
) -> Result<f64, HamiltonianError> {
    limit_hamiltonian_warm(intensity, gamma, p, None).map(|(h, _)| h)
}

/// Returns (H(p), δ̃*(p)); the quote doubles as the next warm start and feeds
/// the CFL bound |H′(p)| = γΛ(δ̃*(p)).
pub fn limit_hamiltonian_warm(
    intensity: &IntensityModel,
    gamma: f64,
    p: f64,
    guess: Option<f64>,
) -> Result<(f64, f64), HamiltonianError> {
    let d = limit_optimal_quote_warm(intensity, p, guess)?;
    let e = intensity.eval(d);
    Ok((gamma * e.value * e.value / -e.d1, d))
}

/// Newton with bisection fallback for increasing g, solving g(x) = target.
/// `lo_start` must satisfy g(lo_start) < target (true for x = p in both quote
/// equations); the upper end grows geometrically until it brackets.
fn solve_increasing(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    target: f64,
    lo_start: f64,
    seed: f64,
) -> Result<f64, HamiltonianError> {
    let tol = QUOTE_RESIDUAL_TOL * target.abs().max(1.0);
    let mut lo = lo_start;
    let mut hi;

    // A good seed may already bracket from above.
    let seed = if seed.is_finite() { seed } else { lo_start + 1.0 };
    let g_seed = if seed > lo { g(seed) } else { f64::NAN };
    if g_seed.is_finite() && g_seed >= target {
        hi = seed;
    } else {
        if g_seed.is_finite() && g_seed < target {
            lo = seed;
        }
        let mut w = 1.0;
        let mut expansions = 0;
        loop {
            hi = lo + w;
            if g(hi) >= target {
                break;
            }
            lo = hi;
            w *= 2.0;
            expansions += 1;
            if expansions > MAX_BRACKET_EXPANSIONS {
                return Err(HamiltonianError::NonConvergence { lo, hi });
            }
        }
    }

    let mut x = 0.5 * (lo + hi);
    if seed > lo && seed < hi {
        x = seed;
    }
    for _ in 0..MAX_ROOT_ITERATIONS {
        let gx = g(x);
        let r = gx - target;
        if r.abs() <= tol {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = dg(x);
        let newton = x - r / slope;
        x = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
            // Bracket exhausted at machine width; accept if within contract.
            let r = g(x) - target;
            if r.abs() <= QUOTE_RESIDUAL_MAX * target.abs().max(1.0) {
                return Ok(x);
            }
            return Err(HamiltonianError::NonConvergence { lo, hi });
        }
    }
    let r = g(x) - target;
    if r.abs() <= QUOTE_RESIDUAL_MAX * target.abs().max(1.0) {
        return Ok(x);
    }
    Err(HamiltonianError::NonConvergence { lo, hi })
}

/// Golden-section maximization on [lo, hi]; assumes a single interior max.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if hi - lo <= 1e-12 * (1.0 + lo.abs()) {
            break;
        }
        // `>=` walks toward the smaller maximizer on ties.
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
