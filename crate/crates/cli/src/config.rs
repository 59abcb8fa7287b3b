//! JSON run configuration: schema-validated (unknown keys rejected) and
//! converted into the solver types.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use optliq::value_solver::AssetLeg;
use optliq::{IntensityModel, LeftExtension, LiquidationProblem, Penalty, TabulatedIntensity};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub intensity: IntensityConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_asset: Option<MultiAssetConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market_maker: Option<MarketMakerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quote_compare: Option<QuoteCompareConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub q0: f64,
    pub delta_size: f64,
    pub horizon_s: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub penalty: PenaltyConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyConfig {
    Constant(f64),
    Table(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensityConfig {
    Exponential {
        #[serde(rename = "A")]
        a: f64,
        k: f64,
    },
    TabulatedFile(PathBuf),
    Figure1Tilde,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub delta_min: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub dq: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub policies: Vec<PolicyConfig>,
    #[serde(default)]
    pub initial_cash: f64,
    #[serde(default = "default_initial_price")]
    pub initial_price: f64,
    #[serde(default)]
    pub dump_paths: bool,
}

fn default_initial_price() -> f64 {
    100.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Optimal,
    Shifted(f64),
    Constant(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiAssetConfig {
    pub assets: Vec<AssetConfig>,
    /// Row-major square correlation matrix.
    pub correlation: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetConfig {
    pub q0: f64,
    pub delta_size: f64,
    pub mu: f64,
    pub sigma: f64,
    pub penalty: PenaltyConfig,
    pub intensity: IntensityConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketMakerConfig {
    #[serde(rename = "Q")]
    pub bound: f64,
}

/// Two order-size/intensity variants whose quote surfaces are compared on the
/// coarser common lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuoteCompareConfig {
    pub cases: [QuoteCompareCase; 2],
    /// Compare only inventories up to this level (defaults to q0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuoteCompareCase {
    pub intensity_scale: f64,
    pub delta_size: f64,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Field-level checks with config-key names in the messages.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.problem;
        if !(p.gamma > 0.0) || !p.gamma.is_finite() {
            return Err(CliError::config(format!(
                "problem.gamma must be strictly positive, got {}",
                p.gamma
            )));
        }
        if !(p.q0 > 0.0) {
            return Err(CliError::config("problem.q0 must be positive".into()));
        }
        if !(p.delta_size > 0.0) {
            return Err(CliError::config(
                "problem.delta_size must be positive".into(),
            ));
        }
        if !(p.horizon_s > 0.0) {
            return Err(CliError::config(
                "problem.horizon_s must be positive".into(),
            ));
        }
        if !(p.sigma >= 0.0) {
            return Err(CliError::config(
                "problem.sigma must be nonnegative".into(),
            ));
        }
        if let IntensityConfig::Exponential { a, k } = &self.intensity {
            if !(*a > 0.0) {
                return Err(CliError::config("intensity.A must be positive".into()));
            }
            if !(*k > 0.0) {
                return Err(CliError::config("intensity.k must be positive".into()));
            }
        }
        if let Some(sim) = &self.simulate {
            if sim.paths == 0 {
                return Err(CliError::config("simulate.paths must be >= 1".into()));
            }
            if !(sim.dt > 0.0) {
                return Err(CliError::config("simulate.dt must be positive".into()));
            }
            if sim.policies.is_empty() {
                return Err(CliError::config(
                    "simulate.policies must list at least one policy".into(),
                ));
            }
        }
        if let Some(limit) = &self.limit {
            if !(limit.dq > 0.0) {
                return Err(CliError::config("limit.dq must be positive".into()));
            }
        }
        if let Some(mm) = &self.market_maker {
            if !(mm.bound > 0.0) {
                return Err(CliError::config("market_maker.Q must be positive".into()));
            }
        }
        if let Some(ma) = &self.multi_asset {
            let d = ma.assets.len();
            if d == 0 {
                return Err(CliError::config(
                    "multi_asset.assets must be nonempty".into(),
                ));
            }
            if ma.correlation.len() != d || ma.correlation.iter().any(|row| row.len() != d) {
                return Err(CliError::config(format!(
                    "multi_asset.correlation must be {d}x{d}"
                )));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> LiquidationProblem {
        let p = &self.problem;
        LiquidationProblem {
            q0: p.q0,
            delta_size: p.delta_size,
            horizon: p.horizon_s,
            drift: p.mu,
            volatility: p.sigma,
            risk_aversion: p.gamma,
            penalty: penalty(&p.penalty),
        }
    }

    pub fn intensity(&self) -> Result<IntensityModel, CliError> {
        intensity(&self.intensity)
    }

    pub fn multi_asset_legs(&self) -> Result<(Vec<AssetLeg>, Vec<f64>), CliError> {
        let ma = self
            .multi_asset
            .as_ref()
            .ok_or_else(|| CliError::config("this mode needs a multi_asset block".into()))?;
        let mut legs = Vec::with_capacity(ma.assets.len());
        for a in &ma.assets {
            legs.push(AssetLeg {
                drift: a.mu,
                volatility: a.sigma,
                delta_size: a.delta_size,
                q0: a.q0,
                penalty: penalty(&a.penalty),
                intensity: intensity(&a.intensity)?,
            });
        }
        let flat: Vec<f64> = ma.correlation.iter().flatten().copied().collect();
        Ok((legs, flat))
    }
}

pub fn penalty(config: &PenaltyConfig) -> Penalty {
    match config {
        PenaltyConfig::Constant(c) => Penalty::Constant(*c),
        PenaltyConfig::Table(rows) => {
            Penalty::Table(rows.iter().map(|r| (r[0], r[1])).collect())
        }
    }
}

pub fn intensity(config: &IntensityConfig) -> Result<IntensityModel, CliError> {
    match config {
        IntensityConfig::Exponential { a, k } => {
            IntensityModel::exponential(*a, *k).map_err(|e| CliError::config(e.to_string()))
        }
        IntensityConfig::TabulatedFile(path) => {
            let table = TabulatedIntensity::from_csv_path(path, LeftExtension::default())
                .map_err(|e| CliError::config(e.to_string()))?;
            Ok(IntensityModel::Tabulated(table))
        }
        IntensityConfig::Figure1Tilde => Ok(optliq::intensity::plateau_preset()),
    }
}
