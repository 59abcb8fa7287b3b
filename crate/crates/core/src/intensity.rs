//! Execution-intensity models Λ(δ): the arrival rate of fills as a function of
//! the quote offset δ (in ticks above the reference price).
//!
//! Two families are supported:
//! - [`ExponentialIntensity`]: Λ(δ) = A e^{-kδ},
//! - [`TabulatedIntensity`]: empirical shapes given as knots, interpolated with
//!   a monotone piecewise-cubic in log-intensity (log space guarantees
//!   positivity, monotone fitting preserves strict decrease).
//!
//! Every model evaluates value, first and second derivative at any δ ∈ ℝ, and
//! can be checked against the structural hypotheses (positivity, strict
//! decrease, the curvature inequality Λ Λ″ ≤ 2Λ′², and tail decay).

use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Default log-slope magnitude used to keep plateau shapes strictly decreasing.
pub const DEFAULT_LEFT_SLOPE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IntensityError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid knot table: {0}")]
    InvalidKnots(String),
    #[error("intensity csv, line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("failed to read intensity csv: {0}")]
    Io(#[from] std::io::Error),
}

/// Intensity, first and second derivative at a single quote offset.
///
/// For a valid model `value > 0` and `d1 < 0` at every offset.
#[derive(Debug, Clone, Copy)]
pub struct IntensityEval {
    /// Λ(δ) in fills per second.
    pub value: f64,
    /// Λ′(δ) in fills per second per tick.
    pub d1: f64,
    /// Λ″(δ) in fills per second per tick².
    pub d2: f64,
}

/// Λ(δ) = A e^{-kδ} with A > 0 (per second) and k > 0 (per tick).
#[derive(Debug, Clone, Copy)]
pub struct ExponentialIntensity {
    scale_a: f64,
    decay_k: f64,
}

impl ExponentialIntensity {
    pub fn new(scale_a: f64, decay_k: f64) -> Result<Self, IntensityError> {
        if !(scale_a > 0.0) || !scale_a.is_finite() {
            return Err(IntensityError::InvalidParameter {
                name: "scale_a",
                reason: format!("must be positive and finite, got {scale_a}"),
            });
        }
        if !(decay_k > 0.0) || !decay_k.is_finite() {
            return Err(IntensityError::InvalidParameter {
                name: "decay_k",
                reason: format!("must be positive and finite, got {decay_k}"),
            });
        }
        Ok(Self { scale_a, decay_k })
    }

    pub fn scale_a(&self) -> f64 {
        self.scale_a
    }

    pub fn decay_k(&self) -> f64 {
        self.decay_k
    }

    #[inline]
    pub fn eval(&self, delta: f64) -> IntensityEval {
        let value = self.scale_a * (-self.decay_k * delta).exp();
        IntensityEval {
            value,
            d1: -self.decay_k * value,
            d2: self.decay_k * self.decay_k * value,
        }
    }
}

/// How a tabulated model extends below its first knot.
#[derive(Debug, Clone, Copy)]
pub enum LeftExtension {
    /// Near-constant plateau: log-linear with the given (small) slope magnitude,
    /// so the value decreases by `slope × value` per tick and strict decrease
    /// holds all the way to -∞.
    Slope(f64),
    /// Exponential continuation of the first segment's log-slope.
    Exponential,
}

impl Default for LeftExtension {
    fn default() -> Self {
        LeftExtension::Slope(DEFAULT_LEFT_SLOPE)
    }
}

/// Empirical intensity given as strictly decreasing knots `(δ, rate)`.
///
/// The interpolant is a monotone piecewise-cubic Hermite in log-intensity.
/// Knot slopes are fitted with Fritsch-Carlson weights ([`Self::new`]) or
/// supplied directly when the data comes from a curve with known derivatives
/// ([`Self::with_log_slopes`]). Both ends continue log-linearly: the right
/// tail is an exponential fitted to the last segment, which gives Λ → 0 and
/// δΛ(δ) → 0; the left side follows [`LeftExtension`]. Endpoint spline slopes
/// are matched to the extensions so Λ and Λ′ are continuous everywhere.
#[derive(Debug, Clone)]
pub struct TabulatedIntensity {
    /// Knot offsets, strictly increasing.
    xs: Vec<f64>,
    /// Log rates at the knots.
    ys: Vec<f64>,
    /// Log-slopes at the knots (all negative).
    ms: Vec<f64>,
}

impl TabulatedIntensity {
    fn validate_knots(knots: &[(f64, f64)]) -> Result<(), IntensityError> {
        if knots.len() < 2 {
            return Err(IntensityError::InvalidKnots(format!(
                "need at least 2 knots, got {}",
                knots.len()
            )));
        }
        for (i, &(x, r)) in knots.iter().enumerate() {
            if !x.is_finite() || !r.is_finite() {
                return Err(IntensityError::InvalidKnots(format!(
                    "knot {i} is not finite: ({x}, {r})"
                )));
            }
            if !(r > 0.0) {
                return Err(IntensityError::InvalidKnots(format!(
                    "rate at knot {i} must be positive, got {r}"
                )));
            }
            if i > 0 {
                let (xp, rp) = knots[i - 1];
                if x <= xp {
                    return Err(IntensityError::InvalidKnots(format!(
                        "offsets must be strictly increasing: knot {i} has {x} after {xp}"
                    )));
                }
                if r >= rp {
                    return Err(IntensityError::InvalidKnots(format!(
                        "rates must be strictly decreasing: knot {i} has {r} after {rp}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fit knot slopes with Fritsch-Carlson weights (monotone by construction).
    pub fn new(knots: &[(f64, f64)], left: LeftExtension) -> Result<Self, IntensityError> {
        Self::validate_knots(knots)?;
        let xs: Vec<f64> = knots.iter().map(|&(x, _)| x).collect();
        let ys: Vec<f64> = knots.iter().map(|&(_, r)| r.ln()).collect();
        let n = xs.len();

        // Interval widths and log-space secants (all negative).
        let hs: Vec<f64> = (0..n - 1).map(|i| xs[i + 1] - xs[i]).collect();
        let ss: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / hs[i]).collect();

        let mut ms = vec![0.0; n];
        // Fritsch-Carlson weighted harmonic mean at interior knots. Secants
        // share a sign, so the limiter condition holds automatically.
        for i in 1..n - 1 {
            let w1 = 2.0 * hs[i] + hs[i - 1];
            let w2 = hs[i] + 2.0 * hs[i - 1];
            ms[i] = (w1 + w2) / (w1 / ss[i - 1] + w2 / ss[i]);
        }
        // Endpoint slopes come from the extensions so the splice stays C¹.
        ms[0] = match left {
            LeftExtension::Slope(eps) => {
                if !(eps > 0.0) || !eps.is_finite() {
                    return Err(IntensityError::InvalidParameter {
                        name: "left_slope",
                        reason: format!("must be positive and finite, got {eps}"),
                    });
                }
                // Keep the first segment monotone: |m0| may not exceed 3|s0|.
                (-eps).max(3.0 * ss[0])
            }
            LeftExtension::Exponential => ss[0],
        };
        ms[n - 1] = ss[n - 2];

        Ok(Self { xs, ys, ms })
    }

    /// Use supplied log-slopes dln Λ/dδ at the knots (for data sampled from a
    /// curve with known derivatives). The extensions continue log-linearly
    /// with the endpoint slopes. Each segment's Hermite derivative is checked
    /// to stay negative, so the interpolant remains strictly decreasing.
    pub fn with_log_slopes(
        knots: &[(f64, f64)],
        log_slopes: &[f64],
    ) -> Result<Self, IntensityError> {
        Self::validate_knots(knots)?;
        if log_slopes.len() != knots.len() {
            return Err(IntensityError::InvalidKnots(format!(
                "{} slopes for {} knots",
                log_slopes.len(),
                knots.len()
            )));
        }
        for (i, &m) in log_slopes.iter().enumerate() {
            if !(m < 0.0) || !m.is_finite() {
                return Err(IntensityError::InvalidKnots(format!(
                    "log-slope at knot {i} must be negative and finite, got {m}"
                )));
            }
        }
        let model = Self {
            xs: knots.iter().map(|&(x, _)| x).collect(),
            ys: knots.iter().map(|&(_, r)| r.ln()).collect(),
            ms: log_slopes.to_vec(),
        };
        // dy/dδ is a quadratic in the segment parameter; its maximum sits at
        // an endpoint or the vertex, and every candidate must stay negative.
        for i in 0..model.xs.len() - 1 {
            let h = model.xs[i + 1] - model.xs[i];
            let s = (model.ys[i + 1] - model.ys[i]) / h;
            let (m0, m1) = (model.ms[i], model.ms[i + 1]);
            let a = 3.0 * (m0 + m1) - 6.0 * s;
            let b = 6.0 * s - 4.0 * m0 - 2.0 * m1;
            let mut candidates = vec![0.0, 1.0];
            if a != 0.0 {
                let vertex = -b / (2.0 * a);
                if vertex > 0.0 && vertex < 1.0 {
                    candidates.push(vertex);
                }
            }
            for t in candidates {
                let dy = (a * t + b) * t + m0;
                if !(dy < 0.0) {
                    return Err(IntensityError::InvalidKnots(format!(
                        "supplied slopes make the interpolant non-decreasing on segment {i}"
                    )));
                }
            }
        }
        Ok(model)
    }

    /// Parse `delta_ticks,intensity_per_s` CSV content (UTF-8, dot decimals).
    pub fn from_csv_str(content: &str, left: LeftExtension) -> Result<Self, IntensityError> {
        let mut knots = Vec::new();
        let mut lines = content.lines().enumerate();
        let (_, header) = lines.next().ok_or(IntensityError::Csv {
            line: 1,
            reason: "empty file".into(),
        })?;
        let header_fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if header_fields != ["delta_ticks", "intensity_per_s"] {
            return Err(IntensityError::Csv {
                line: 1,
                reason: format!("expected header `delta_ticks,intensity_per_s`, got `{header}`"),
            });
        }
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>, what: &str| -> Result<f64, IntensityError> {
                s.map(str::trim)
                    .ok_or_else(|| IntensityError::Csv {
                        line: idx + 1,
                        reason: format!("missing {what}"),
                    })?
                    .parse::<f64>()
                    .map_err(|e| IntensityError::Csv {
                        line: idx + 1,
                        reason: format!("bad {what}: {e}"),
                    })
            };
            let d = parse(parts.next(), "delta_ticks")?;
            let r = parse(parts.next(), "intensity_per_s")?;
            if parts.next().is_some() {
                return Err(IntensityError::Csv {
                    line: idx + 1,
                    reason: "expected exactly 2 columns".into(),
                });
            }
            knots.push((d, r));
        }
        Self::new(&knots, left)
    }

    pub fn from_csv_path<P: AsRef<Path>>(
        path: P,
        left: LeftExtension,
    ) -> Result<Self, IntensityError> {
        let content = std::fs::read_to_string(path)?;
        Self::from_csv_str(&content, left)
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().zip(self.ys.iter()).map(|(&x, &y)| (x, y.exp()))
    }

    #[inline]
    pub fn eval(&self, delta: f64) -> IntensityEval {
        let n = self.xs.len();
        let (y, dy, d2y) = if delta <= self.xs[0] {
            let m = self.ms[0];
            (self.ys[0] + m * (delta - self.xs[0]), m, 0.0)
        } else if delta >= self.xs[n - 1] {
            let m = self.ms[n - 1];
            (self.ys[n - 1] + m * (delta - self.xs[n - 1]), m, 0.0)
        } else {
            // Rightmost interval with xs[i] <= delta.
            let i = match self
                .xs
                .binary_search_by(|x| x.partial_cmp(&delta).expect("finite offsets"))
            {
                Ok(i) => i.min(n - 2),
                Err(ins) => ins - 1,
            };
            let h = self.xs[i + 1] - self.xs[i];
            let t = (delta - self.xs[i]) / h;
            hermite(self.ys[i], self.ys[i + 1], self.ms[i], self.ms[i + 1], h, t)
        };
        let value = y.exp();
        IntensityEval {
            value,
            d1: dy * value,
            d2: (d2y + dy * dy) * value,
        }
    }

    /// Same knots with every rate multiplied by `factor` (a log-space shift,
    /// so the interpolant scales exactly).
    fn scaled(&self, factor: f64) -> Self {
        let shift = factor.ln();
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| y + shift).collect(),
            ms: self.ms.clone(),
        }
    }
}

/// Cubic Hermite value and first two derivatives w.r.t. x on one interval.
#[inline]
fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64, t: f64) -> (f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let y = h00 * y0 + h * (h10 * m0 + h11 * m1) + h01 * y1;

    let d_h00 = 6.0 * t2 - 6.0 * t;
    let d_h10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d_h01 = -6.0 * t2 + 6.0 * t;
    let d_h11 = 3.0 * t2 - 2.0 * t;
    let dy = (d_h00 * y0 + d_h01 * y1) / h + d_h10 * m0 + d_h11 * m1;

    let dd_h00 = 12.0 * t - 6.0;
    let dd_h10 = 6.0 * t - 4.0;
    let dd_h01 = -12.0 * t + 6.0;
    let dd_h11 = 6.0 * t - 2.0;
    let d2y = (dd_h00 * y0 + dd_h01 * y1) / (h * h) + (dd_h10 * m0 + dd_h11 * m1) / h;

    (y, dy, d2y)
}

/// Any supported intensity model.
#[derive(Debug, Clone)]
pub enum IntensityModel {
    Exponential(ExponentialIntensity),
    Tabulated(TabulatedIntensity),
}

impl IntensityModel {
    pub fn exponential(scale_a: f64, decay_k: f64) -> Result<Self, IntensityError> {
        Ok(IntensityModel::Exponential(ExponentialIntensity::new(
            scale_a, decay_k,
        )?))
    }

    /// Λ(δ), Λ′(δ), Λ″(δ). Total on ℝ.
    #[inline]
    pub fn eval(&self, delta: f64) -> IntensityEval {
        match self {
            IntensityModel::Exponential(m) => m.eval(delta),
            IntensityModel::Tabulated(m) => m.eval(delta),
        }
    }

    /// The per-order-size scaling Λ_Δ = Λ/Δ: divides the rate (and all
    /// derivatives) by `delta_size`.
    pub fn rescale_for_order_size(&self, delta_size: f64) -> Result<Self, IntensityError> {
        if !(delta_size > 0.0) || !delta_size.is_finite() {
            return Err(IntensityError::InvalidParameter {
                name: "delta_size",
                reason: format!("must be positive and finite, got {delta_size}"),
            });
        }
        Ok(match self {
            IntensityModel::Exponential(m) => IntensityModel::Exponential(ExponentialIntensity {
                scale_a: m.scale_a / delta_size,
                decay_k: m.decay_k,
            }),
            IntensityModel::Tabulated(m) => IntensityModel::Tabulated(m.scaled(1.0 / delta_size)),
        })
    }

    /// Check the structural hypotheses on a probe grid. Failures are reported,
    /// not raised: only positivity and strict decrease are requirements for
    /// the solvers; the curvature inequality is advisory (quotes may fail to
    /// be unique without it) and tail decay matters for asymptotics.
    pub fn validate_hypotheses(&self, probe_grid: &[f64], tol: f64) -> ValidationReport {
        assert!(!probe_grid.is_empty(), "probe grid must be nonempty");
        debug_assert!(probe_grid.windows(2).all(|w| w[0] <= w[1]));

        let mut positivity = HypothesisCheck::pass(Hypothesis::Positivity);
        let mut decrease = HypothesisCheck::pass(Hypothesis::StrictDecrease);
        let mut curvature = HypothesisCheck::pass(Hypothesis::Curvature);
        let mut tail = HypothesisCheck::pass(Hypothesis::TailDecay);

        for &d in probe_grid {
            let e = self.eval(d);
            if !(e.value > 0.0) {
                positivity.record(d);
            }
            if !(e.d1 < 0.0) {
                decrease.record(d);
            }
            if e.value * e.d2 > 2.0 * e.d1 * e.d1 + tol * e.d1 * e.d1 {
                curvature.record(d);
            }
        }
        let end = *probe_grid.last().expect("nonempty");
        if !(self.eval(end).value < tol) {
            tail.record(end);
        }

        ValidationReport {
            checks: vec![positivity, decrease, curvature, tail],
        }
    }

    /// Probe grid used by the solvers before accepting a model:
    /// [-60, 120] ticks, half-tick spacing.
    pub fn default_probe_grid() -> Vec<f64> {
        (0..=360).map(|i| -60.0 + 0.5 * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    Positivity,
    StrictDecrease,
    Curvature,
    TailDecay,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::Positivity => "positivity",
            Hypothesis::StrictDecrease => "strict_decrease",
            Hypothesis::Curvature => "curvature",
            Hypothesis::TailDecay => "tail_decay",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    /// First probed offset where the hypothesis failed.
    pub first_violation: Option<f64>,
}

impl HypothesisCheck {
    fn pass(hypothesis: Hypothesis) -> Self {
        Self {
            hypothesis,
            passed: true,
            first_violation: None,
        }
    }

    fn record(&mut self, delta: f64) {
        if self.passed {
            self.passed = false;
            self.first_violation = Some(delta);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn check(&self, hypothesis: Hypothesis) -> &HypothesisCheck {
        self.checks
            .iter()
            .find(|c| c.hypothesis == hypothesis)
            .expect("all hypotheses are always checked")
    }

    /// Positivity and strict decrease: the two the solvers refuse to run without.
    pub fn required_passed(&self) -> bool {
        self.check(Hypothesis::Positivity).passed && self.check(Hypothesis::StrictDecrease).passed
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Tabulated shape with a near-constant plateau below the touch and an
/// exponential tail above: quoting aggressively buys almost no extra fill
/// probability, so optimal quotes stay positive.
///
/// In log space the curve is exactly 0.1·e^{-0.3δ} for δ ≥ 1.5, log-linear
/// with slope −1e-6 below −1, and a cubic transition in between whose
/// log-slope ramps quadratically from −1e-6 to −0.3. The knots carry the
/// curve's exact slopes, so the piecewise-cubic interpolant reproduces it
/// identically; the log-curvature is ≤ 0 everywhere, which keeps the
/// curvature hypothesis Λ Λ″ ≤ 2Λ′² satisfied with room to spare.
pub fn plateau_preset() -> IntensityModel {
    let scale = 0.1_f64;
    let decay = 0.3_f64;
    let eps = DEFAULT_LEFT_SLOPE;
    let start = -1.0; // plateau ends
    let end = 1.5; // exponential begins
    let span = end - start;
    let ramp = decay - eps;

    let y_end = scale.ln() - decay * end;
    let curve = |d: f64| -> (f64, f64) {
        if d >= end {
            (scale.ln() - decay * d, -decay)
        } else if d >= start {
            let u = (d - start) / span;
            let y = y_end + eps * (end - d) + ramp * span * (1.0 - u * u * u) / 3.0;
            (y, -eps - ramp * u * u)
        } else {
            let y_start = y_end + eps * span + ramp * span / 3.0;
            (y_start - eps * (d - start), -eps)
        }
    };

    let offsets = [
        -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0,
        12.0,
    ];
    let mut knots = Vec::with_capacity(offsets.len());
    let mut slopes = Vec::with_capacity(offsets.len());
    for &d in &offsets {
        let (y, m) = curve(d);
        knots.push((d, y.exp()));
        slopes.push(m);
    }
    IntensityModel::Tabulated(
        TabulatedIntensity::with_log_slopes(&knots, &slopes).expect("preset knots are valid"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_exponential() -> IntensityModel {
        IntensityModel::exponential(0.1, 0.3).unwrap()
    }

    #[test]
    fn exponential_eval_matches_closed_form() {
        let m = fig_exponential();
        let e0 = m.eval(0.0);
        assert_eq!(e0.value, 0.1);
        let e5 = m.eval(5.0);
        // A e^{-k 5} = 0.1 e^{-1.5}
        assert!((e5.value - 0.1 * (-1.5f64).exp()).abs() < 1e-15);
        assert!((e5.value - 0.022313016).abs() < 1e-8);
    }

    #[test]
    fn exponential_derivative_identities() {
        let m = fig_exponential();
        for d in [-10.0, -1.0, 0.0, 0.5, 3.0, 20.0] {
            let e = m.eval(d);
            assert!((e.d1 + 0.3 * e.value).abs() <= 1e-12 * e.value);
            assert!((e.d2 - 0.09 * e.value).abs() <= 1e-12 * e.value);
        }
    }

    #[test]
    fn exponential_rejects_bad_params() {
        assert!(ExponentialIntensity::new(0.0, 0.3).is_err());
        assert!(ExponentialIntensity::new(0.1, -0.3).is_err());
        assert!(ExponentialIntensity::new(f64::NAN, 0.3).is_err());
    }

    #[test]
    fn tabulated_hits_knots_exactly() {
        let knots = [(0.0, 0.08), (1.0, 0.05), (2.5, 0.02), (4.0, 0.011)];
        let m = TabulatedIntensity::new(&knots, LeftExtension::default()).unwrap();
        for &(x, r) in &knots {
            let e = m.eval(x);
            assert!(
                (e.value - r).abs() <= 1e-14 * r,
                "knot ({x}, {r}) evaluated to {}",
                e.value
            );
        }
    }

    #[test]
    fn tabulated_rejects_non_monotone() {
        assert!(TabulatedIntensity::new(
            &[(0.0, 0.05), (1.0, 0.06)],
            LeftExtension::default()
        )
        .is_err());
        assert!(TabulatedIntensity::new(
            &[(0.0, 0.05), (0.0, 0.04)],
            LeftExtension::default()
        )
        .is_err());
        assert!(TabulatedIntensity::new(
            &[(0.0, 0.05), (1.0, -0.1)],
            LeftExtension::default()
        )
        .is_err());
    }

    #[test]
    fn rescale_divides_rate() {
        let m = fig_exponential();
        let r = m.rescale_for_order_size(50.0).unwrap();
        for d in [-3.0, 0.0, 7.0] {
            let a = m.eval(d);
            let b = r.eval(d);
            assert!((b.value * 50.0 - a.value).abs() <= 1e-12 * a.value);
            assert!((b.d1 * 50.0 - a.d1).abs() <= 1e-12 * a.d1.abs());
            assert!((b.d2 * 50.0 - a.d2).abs() <= 1e-12 * a.d2.abs());
        }
        assert!(m.rescale_for_order_size(0.0).is_err());
        assert!(m.rescale_for_order_size(-2.0).is_err());
    }

    #[test]
    fn rescale_by_one_is_identity() {
        let m = plateau_preset();
        let r = m.rescale_for_order_size(1.0).unwrap();
        for d in [-5.0, 0.0, 2.0, 9.0] {
            assert!((m.eval(d).value - r.eval(d).value).abs() <= 1e-15 * m.eval(d).value);
        }
    }

    #[test]
    fn rescale_round_trips() {
        let m = plateau_preset();
        let rt = m
            .rescale_for_order_size(50.0)
            .unwrap()
            .rescale_for_order_size(1.0 / 50.0)
            .unwrap();
        for d in [-4.0, 1.0, 6.0] {
            let a = m.eval(d).value;
            let b = rt.eval(d).value;
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn validation_passes_exponential() {
        let m = fig_exponential();
        let report = m.validate_hypotheses(&IntensityModel::default_probe_grid(), 1e-9);
        assert!(report.all_passed(), "{:?}", report.checks);
        // For exponentials Λ Λ″ = Λ′², strictly inside the inequality.
    }

    #[test]
    fn validation_passes_plateau_preset() {
        let m = plateau_preset();
        let report = m.validate_hypotheses(&IntensityModel::default_probe_grid(), 1e-9);
        assert!(report.all_passed(), "{:?}", report.checks);
    }

    #[test]
    fn validation_flags_increasing_segment() {
        // Bypass the constructor checks by building a raw spline with an
        // increasing piece: simplest is a model whose probe sees d1 >= 0.
        // A two-knot table cannot increase, so probe the flat left extension
        // of a plateau with eps = tiny, forced to zero slope via clamping.
        // Instead, hand-build the violation with knots that pass construction
        // but a probe grid extended past the tail, where d1 < 0 still holds;
        // so directly check that a constructed violation is caught by using
        // an exponential with negated decay through the raw enum.
        let bad = IntensityModel::Exponential(ExponentialIntensity {
            scale_a: 0.1,
            decay_k: -0.3,
        });
        let report = bad.validate_hypotheses(&IntensityModel::default_probe_grid(), 1e-9);
        let c = report.check(Hypothesis::StrictDecrease);
        assert!(!c.passed);
        assert_eq!(c.first_violation, Some(-60.0));
        assert!(!report.required_passed());
    }

    #[test]
    fn plateau_matches_exponential_beyond_two_ticks() {
        let m = plateau_preset();
        for d in [1.5, 2.0, 2.3, 3.7, 5.0, 11.0, 30.0, 80.0] {
            let v = m.eval(d).value;
            let expect = 0.1 * (-0.3 * d).exp();
            assert!(
                (v - expect).abs() <= 1e-10 * expect,
                "delta {d}: {v} vs {expect}"
            );
        }
    }

    #[test]
    fn plateau_log_curvature_stays_below_hypothesis_everywhere() {
        // Pointwise at fine resolution, not just on the default probes.
        let m = plateau_preset();
        let mut d = -20.0;
        while d <= 40.0 {
            let e = m.eval(d);
            assert!(
                e.value * e.d2 <= 2.0 * e.d1 * e.d1 + 1e-9 * e.d1 * e.d1,
                "curvature violated at {d}"
            );
            d += 0.01;
        }
    }

    #[test]
    fn with_log_slopes_rejects_non_monotone_combinations() {
        // A wildly positive interior bump: slopes force the cubic upward.
        let knots = [(0.0, 0.1), (1.0, 0.09)];
        assert!(TabulatedIntensity::with_log_slopes(&knots, &[-5.0, -5.0]).is_err());
        assert!(TabulatedIntensity::with_log_slopes(&knots, &[-0.1]).is_err());
        assert!(TabulatedIntensity::with_log_slopes(&knots, &[-0.1, 0.1]).is_err());
    }

    #[test]
    fn plateau_decreases_slowly_on_the_left() {
        let m = plateau_preset();
        let a = m.eval(-30.0);
        let b = m.eval(-3.0);
        assert!(a.value > b.value);
        assert!(a.d1 < 0.0);
        // Slope magnitude stays tiny relative to the value.
        assert!(a.d1.abs() < 1e-4 * a.value);
    }

    #[test]
    fn csv_round_trip() {
        let csv = "delta_ticks,intensity_per_s\n0.0,0.08\n1.0,0.05\n3.0,0.02\n";
        let m = TabulatedIntensity::from_csv_str(csv, LeftExtension::default()).unwrap();
        assert!((m.eval(1.0).value - 0.05).abs() < 1e-15);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let bad_header = "delta,rate\n0.0,0.08\n";
        match TabulatedIntensity::from_csv_str(bad_header, LeftExtension::default()) {
            Err(IntensityError::Csv { line: 1, .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }
        let bad_value = "delta_ticks,intensity_per_s\n0.0,0.08\n1.0,abc\n";
        match TabulatedIntensity::from_csv_str(bad_value, LeftExtension::default()) {
            Err(IntensityError::Csv { line: 3, .. }) => {}
            other => panic!("expected value error, got {other:?}"),
        }
    }

    #[test]
    fn interpolant_is_strictly_decreasing_between_knots() {
        let m = plateau_preset();
        let mut prev = m.eval(-40.0).value;
        let mut d = -40.0 + 0.01;
        while d < 40.0 {
            let v = m.eval(d).value;
            assert!(v < prev, "not strictly decreasing at {d}");
            prev = v;
            d += 0.01;
        }
    }
}
