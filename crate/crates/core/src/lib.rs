//! Solvers for optimal liquidation with limit orders under general
//! execution-intensity shapes.
//!
//! A trader unwinding `q0` shares posts ask quotes δ ticks above a drifting
//! Brownian reference price; fills of size Δ arrive at rate Λ_Δ(δ). With CARA
//! risk aversion γ the certainty-equivalent excess value θ_Δ(t,q) solves a
//! triangular backward ODE system driven by the Hamiltonian
//! H_Δ(p) = sup_δ Λ_Δ(δ)(1 − e^{−γΔ(δ−p)}), and the optimal quote surface is
//! read off the inventory differences of θ_Δ.
//!
//! The crate provides:
//! - [`intensity`]: exponential and tabulated intensity models plus hypothesis
//!   validation;
//! - [`hamiltonian`]: the optimal-quote map, H_Δ, its constrained variant, the
//!   small-order-size limit H, and inverses;
//! - [`value_solver`]: backward marches for θ_Δ (general, exponential
//!   closed-form, constrained, multi-asset, two-sided market making) and quote
//!   surfaces;
//! - [`asymptotics`]: stationary values θ^∞ and the long-horizon quote;
//! - [`limit_pde`]: the Δ→0 Hamilton-Jacobi equation, a Δ-convergence study,
//!   and the execution-cost bridge f(v) = −Λ⁻¹(v);
//! - [`execution_sim`]: Monte Carlo verification of value functions and
//!   policy optimality with common random numbers.

pub mod asymptotics;
pub mod execution_sim;
pub mod hamiltonian;
pub mod intensity;
pub mod limit_pde;
mod march;
pub mod value_solver;

pub use intensity::{
    ExponentialIntensity, IntensityError, IntensityEval, IntensityModel, LeftExtension,
    TabulatedIntensity, ValidationReport,
};

pub use hamiltonian::{
    limit_hamiltonian, limit_optimal_quote, ConstrainedContext, HamiltonianError, QuoteContext,
};

pub use march::Scheme;

pub use value_solver::{
    compute_quote_surface, solve_constrained, solve_market_maker, solve_multi_asset, solve_theta,
    solve_theta_exponential, solve_theta_with, LiquidationProblem, MarketMakerProblem,
    MarketMakerSolution, MultiAssetProblem, MultiAssetSolution, Penalty, QuoteSurface, SolveError,
    ValueGrid,
};

pub use asymptotics::{asymptotic_quote, asymptotic_theta, AsymptoticResult, AsymptoticsError};

pub use limit_pde::{convergence_study, solve_limit_hj, ImpactBridge, LimitPdeError, StudyRow};

pub use execution_sim::{
    certainty_equivalent, policy_tournament, simulate, simulate_paths, PathRecord, QuotePolicy,
    SimError, SimulationConfig, SimulationStats, TournamentRow,
};
