//! Batch front-end for the optimal-liquidation solvers.
//!
//! One run per invocation: resolve a preset or a JSON config, dispatch the
//! subcommand, write CSVs plus a `manifest.json` echoing the resolved
//! configuration. Exit codes: 0 success, 2 configuration error, 3 numerical
//! failure.

mod config;
mod output;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use optliq::{
    asymptotic_theta, compute_quote_surface, convergence_study, policy_tournament,
    simulate_paths, solve_constrained, solve_limit_hj, solve_market_maker, solve_multi_asset,
    solve_theta, AsymptoticsError, HamiltonianError, IntensityModel, LimitPdeError,
    MarketMakerProblem, MultiAssetProblem, QuoteContext, QuotePolicy, QuoteSurface, SimError,
    SimulationConfig, SolveError,
};

use config::{PolicyConfig, RunConfig};
use output::{Manifest, OutDir};

#[derive(Debug)]
pub enum CliErrorKind {
    Config,
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    kind: CliErrorKind,
    message: String,
}

impl CliError {
    fn config(message: String) -> Self {
        Self {
            kind: CliErrorKind::Config,
            message,
        }
    }

    fn numerical(message: String) -> Self {
        Self {
            kind: CliErrorKind::Numerical,
            message,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match &e {
            SolveError::InvalidProblem(_)
            | SolveError::Intensity(_)
            | SolveError::InvalidIntensity(_)
            | SolveError::ResourceLimit { .. } => CliError::config(e.to_string()),
            _ => CliError::numerical(e.to_string()),
        }
    }
}

impl From<LimitPdeError> for CliError {
    fn from(e: LimitPdeError) -> Self {
        match &e {
            LimitPdeError::InvalidConfig(_)
            | LimitPdeError::StepRestriction { .. }
            | LimitPdeError::Intensity(_) => CliError::config(e.to_string()),
            LimitPdeError::Solve(inner) => match inner {
                SolveError::InvalidProblem(_)
                | SolveError::Intensity(_)
                | SolveError::InvalidIntensity(_)
                | SolveError::ResourceLimit { .. } => CliError::config(e.to_string()),
                _ => CliError::numerical(e.to_string()),
            },
            _ => CliError::numerical(e.to_string()),
        }
    }
}

impl From<AsymptoticsError> for CliError {
    fn from(e: AsymptoticsError) -> Self {
        match &e {
            AsymptoticsError::PreconditionViolated(_) | AsymptoticsError::InvalidProblem(_) => {
                CliError::config(e.to_string())
            }
            _ => CliError::numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match &e {
            SimError::InvalidConfig(_) => CliError::config(e.to_string()),
            SimError::InvalidState(_) => CliError::numerical(e.to_string()),
        }
    }
}

impl From<HamiltonianError> for CliError {
    fn from(e: HamiltonianError) -> Self {
        match &e {
            HamiltonianError::InvalidParameter { .. } | HamiltonianError::InvalidIntensity(_) => {
                CliError::config(e.to_string())
            }
            _ => CliError::numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "optliq", version, about = "Optimal liquidation with limit orders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in parameter set (fig1..fig6).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Path to a JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Solver time step in seconds (default: horizon/30000).
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the intensity model against the structural hypotheses
    ValidateIntensity(RunArgs),
    /// Solve the value function and emit theta.csv + quotes.csv
    Solve(RunArgs),
    /// Emit only the optimal quote surface
    Quotes(RunArgs),
    /// Solve with the hard quote floor from the constraint block
    Constrained(RunArgs),
    /// Stationary long-horizon values and quote
    Asymptotic(RunArgs),
    /// Solve the small-order-size limit equation
    Limit(RunArgs),
    /// Order-size convergence study (plus optional quote comparison)
    Study(RunArgs),
    /// Monte Carlo verification and policy tournament
    Simulate(RunArgs),
    /// Multi-asset lattice solve
    Multi(RunArgs),
    /// Two-sided market-making solve
    Mm(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ValidateIntensity(_) => "validate-intensity",
            Command::Solve(_) => "solve",
            Command::Quotes(_) => "quotes",
            Command::Constrained(_) => "constrained",
            Command::Asymptotic(_) => "asymptotic",
            Command::Limit(_) => "limit",
            Command::Study(_) => "study",
            Command::Simulate(_) => "simulate",
            Command::Multi(_) => "multi",
            Command::Mm(_) => "mm",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::ValidateIntensity(a)
            | Command::Solve(a)
            | Command::Quotes(a)
            | Command::Constrained(a)
            | Command::Asymptotic(a)
            | Command::Limit(a)
            | Command::Study(a)
            | Command::Simulate(a)
            | Command::Multi(a)
            | Command::Mm(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (label, code) = match e.kind {
                CliErrorKind::Config => ("configuration error", 2),
                CliErrorKind::Numerical => ("numerical failure", 3),
            };
            eprintln!("optliq: {label}: {}", e.message);
            ExitCode::from(code)
        }
    }
}

fn resolve_config(args: &RunArgs) -> Result<(RunConfig, Option<String>), CliError> {
    match (&args.preset, &args.config) {
        (Some(name), None) => {
            let cfg = presets::preset(name).ok_or_else(|| {
                CliError::config(format!(
                    "unknown preset `{name}`; available: {}",
                    presets::PRESET_NAMES.join(", ")
                ))
            })?;
            Ok((cfg, Some(name.clone())))
        }
        (None, Some(path)) => Ok((RunConfig::from_path(path)?, None)),
        (None, None) => Err(CliError::config(
            "either --preset or --config is required".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let (cfg, preset_name) = resolve_config(args)?;
    let dt = args.dt.unwrap_or(cfg.problem.horizon_s / 30_000.0);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(CliError::config(format!("dt must be positive, got {dt}")));
    }
    let mut out = OutDir::new(&args.out)?;
    let mut report = serde_json::Map::new();

    match command {
        Command::ValidateIntensity(_) => {
            let model = cfg.intensity()?;
            let grid = IntensityModel::default_probe_grid();
            let result = model.validate_hypotheses(&grid, 1e-9);
            output::write_validation(&mut out, &result)?;
            report.insert("all_passed".into(), json!(result.all_passed()));
            report.insert("required_passed".into(), json!(result.required_passed()));
        }
        Command::Solve(_) => {
            let problem = cfg.problem();
            let intensity = cfg.intensity()?;
            let grid = solve_theta(&problem, &intensity, dt)?;
            let ctx = QuoteContext::new(problem.risk_aversion, problem.delta_size, intensity)?;
            let surface = compute_quote_surface(&grid, &ctx)?;
            output::write_value_grid(&mut out, "theta.csv", &grid)?;
            output::write_quote_surface(&mut out, "quotes.csv", &surface)?;
            report.insert("theta_t0_q0".into(), json!(grid.theta_at(0, grid.n_inventories() - 1)));
        }
        Command::Quotes(_) => {
            let problem = cfg.problem();
            let intensity = cfg.intensity()?;
            let grid = solve_theta(&problem, &intensity, dt)?;
            let ctx = QuoteContext::new(problem.risk_aversion, problem.delta_size, intensity)?;
            let surface = compute_quote_surface(&grid, &ctx)?;
            output::write_quote_surface(&mut out, "quotes.csv", &surface)?;
        }
        Command::Constrained(_) => {
            let constraint = cfg.constraint.as_ref().ok_or_else(|| {
                CliError::config("constrained mode needs a constraint block".into())
            })?;
            let problem = cfg.problem();
            let intensity = cfg.intensity()?;
            let (grid, surface) =
                solve_constrained(&problem, &intensity, constraint.delta_min, dt)?;
            output::write_value_grid(&mut out, "theta.csv", &grid)?;
            output::write_quote_surface(&mut out, "quotes.csv", &surface)?;

            // Report-only comparison: the unconstrained surface floored at
            // delta_min sits almost exactly on the constrained one.
            let unconstrained_grid = solve_theta(&problem, &intensity, dt)?;
            let ctx = QuoteContext::new(problem.risk_aversion, problem.delta_size, intensity)?;
            let unconstrained = compute_quote_surface(&unconstrained_grid, &ctx)?;
            let floored: Vec<f64> = unconstrained
                .values()
                .iter()
                .map(|v| v.max(constraint.delta_min))
                .collect();
            let mut w = out.writer("quotes_floored.csv")?;
            use std::io::Write as _;
            writeln!(w, "t,q,delta_star_floored")
                .map_err(|e| CliError::config(format!("write failed: {e}")))?;
            let nlev = unconstrained.inventories().len();
            for (it, &t) in unconstrained.times().iter().enumerate() {
                for (iq, &q) in unconstrained.inventories().iter().enumerate() {
                    writeln!(w, "{t},{q},{}", floored[it * nlev + iq])
                        .map_err(|e| CliError::config(format!("write failed: {e}")))?;
                }
            }
            drop(w);
            let sup_gap = surface
                .values()
                .iter()
                .zip(&floored)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            report.insert("sup_quote_gap_vs_floored".into(), json!(sup_gap));
        }
        Command::Asymptotic(_) => {
            let problem = cfg.problem();
            let intensity = cfg.intensity()?;
            let result = asymptotic_theta(&problem, &intensity)?;
            output::write_theta_inf(&mut out, &result.theta_inf, result.delta_star_inf)?;
            report.insert("delta_star_inf".into(), json!(result.delta_star_inf));
        }
        Command::Limit(_) => {
            let limit = cfg
                .limit
                .as_ref()
                .ok_or_else(|| CliError::config("limit mode needs a limit block".into()))?;
            let problem = cfg.problem();
            let base = cfg
                .intensity()?
                .rescale_for_order_size(1.0 / problem.delta_size)
                .map_err(|e| CliError::config(e.to_string()))?;
            let grid = solve_limit_hj(&problem, &base, limit.dq, dt)?;
            output::write_value_grid(&mut out, "theta.csv", &grid)?;
        }
        Command::Study(_) => {
            run_study(&cfg, dt, &mut out, &mut report)?;
        }
        Command::Simulate(_) => {
            run_simulate(&cfg, args.seed, dt, &mut out, &mut report)?;
        }
        Command::Multi(_) => {
            let (legs, correlation) = cfg.multi_asset_legs()?;
            let problem = MultiAssetProblem::new(
                legs,
                correlation,
                cfg.problem.gamma,
                cfg.problem.horizon_s,
            );
            let sol = solve_multi_asset(&problem, dt)?;
            output::write_multi(&mut out, &sol)?;
        }
        Command::Mm(_) => {
            let mm = cfg.market_maker.as_ref().ok_or_else(|| {
                CliError::config("mm mode needs a market_maker block".into())
            })?;
            let problem = MarketMakerProblem {
                inventory_bound: mm.bound,
                delta_size: cfg.problem.delta_size,
                horizon: cfg.problem.horizon_s,
                drift: cfg.problem.mu,
                volatility: cfg.problem.sigma,
                risk_aversion: cfg.problem.gamma,
                penalty: config::penalty(&cfg.problem.penalty),
                intensity: cfg.intensity()?,
            };
            let sol = solve_market_maker(&problem, dt)?;
            output::write_market_maker(&mut out, &sol)?;
        }
    }

    let manifest = Manifest {
        tool: "optliq",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: command.name().to_string(),
        preset: preset_name,
        dt,
        config: &cfg,
        outputs: out.outputs().to_vec(),
        report,
    };
    output::write_manifest(&mut out, &manifest)
}

fn run_study(
    cfg: &RunConfig,
    dt: f64,
    out: &mut OutDir,
    report: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<(), CliError> {
    let problem = cfg.problem();
    let base = cfg
        .intensity()?
        .rescale_for_order_size(1.0 / problem.delta_size)
        .map_err(|e| CliError::config(e.to_string()))?;

    if let Some(limit) = &cfg.limit {
        if limit.deltas.is_empty() {
            return Err(CliError::config(
                "study mode needs limit.deltas to be nonempty".into(),
            ));
        }
        let rows = convergence_study(&problem, &base, &limit.deltas, limit.dq, dt)?;
        output::write_study(out, &rows)?;
    }

    if let Some(compare) = &cfg.quote_compare {
        let mut surfaces: Vec<QuoteSurface> = Vec::with_capacity(2);
        for case in &compare.cases {
            let scaled_base = match &base {
                m => m
                    .rescale_for_order_size(1.0 / case.intensity_scale)
                    .map_err(|e| CliError::config(e.to_string()))?,
            };
            let intensity = scaled_base
                .rescale_for_order_size(case.delta_size)
                .map_err(|e| CliError::config(e.to_string()))?;
            let mut case_problem = problem.clone();
            case_problem.delta_size = case.delta_size;
            let grid = solve_theta(&case_problem, &intensity, dt)?;
            let ctx = QuoteContext::new(problem.risk_aversion, case.delta_size, intensity)?;
            surfaces.push(compute_quote_surface(&grid, &ctx)?);
        }
        // Common inventory lattice: multiples of the coarser order size.
        let coarse = compare.cases[0]
            .delta_size
            .max(compare.cases[1].delta_size);
        let q_max = compare.q_max.unwrap_or(problem.q0);
        let mut common_q = Vec::new();
        let mut q = coarse;
        while q <= q_max + 1e-9 {
            common_q.push(q);
            q += coarse;
        }
        let mut w = out.writer("compare.csv")?;
        use std::io::Write as _;
        writeln!(w, "t,q,delta_star_case1,delta_star_case2")
            .map_err(|e| CliError::config(format!("write failed: {e}")))?;
        let mut sup_gap = 0.0f64;
        let times = surfaces[0].times().to_vec();
        for (it, &t) in times.iter().enumerate() {
            for &qv in &common_q {
                let a = surfaces[0].lookup(t, qv);
                let b = surfaces[1].lookup(t, qv);
                sup_gap = sup_gap.max((a - b).abs());
                writeln!(w, "{t},{qv},{a},{b}")
                    .map_err(|e| CliError::config(format!("write failed: {e}")))?;
                let _ = it;
            }
        }
        report.insert("sup_quote_gap".into(), json!(sup_gap));
    }

    if cfg.limit.is_none() && cfg.quote_compare.is_none() {
        return Err(CliError::config(
            "study mode needs a limit block (deltas) or a quote_compare block".into(),
        ));
    }
    Ok(())
}

fn run_simulate(
    cfg: &RunConfig,
    seed_override: Option<u64>,
    solve_dt: f64,
    out: &mut OutDir,
    report: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<(), CliError> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::config("simulate mode needs a simulate block".into()))?;
    let problem = cfg.problem();
    let intensity = cfg.intensity()?;

    let needs_surface = sim
        .policies
        .iter()
        .any(|p| matches!(p, PolicyConfig::Optimal | PolicyConfig::Shifted(_)));
    let surface = if needs_surface {
        let grid = solve_theta(&problem, &intensity, solve_dt)?;
        let ctx = QuoteContext::new(
            problem.risk_aversion,
            problem.delta_size,
            intensity.clone(),
        )?;
        report.insert(
            "theta_t0_q0".into(),
            json!(grid.theta_at(0, grid.n_inventories() - 1)),
        );
        Some(compute_quote_surface(&grid, &ctx)?)
    } else {
        None
    };

    let config = SimulationConfig {
        paths: sim.paths,
        dt: sim.dt,
        seed: seed_override.unwrap_or(sim.seed),
        initial_cash: sim.initial_cash,
        initial_price: sim.initial_price,
    };

    let named: Vec<(String, QuotePolicy)> = sim
        .policies
        .iter()
        .map(|p| match p {
            PolicyConfig::Optimal => (
                "optimal".to_string(),
                QuotePolicy::Surface(surface.as_ref().expect("surface solved above")),
            ),
            PolicyConfig::Shifted(eps) => (
                format!("shifted{eps:+}"),
                QuotePolicy::Shifted {
                    surface: surface.as_ref().expect("surface solved above"),
                    offset: *eps,
                },
            ),
            PolicyConfig::Constant(c) => (format!("constant{c}"), QuotePolicy::Constant(*c)),
        })
        .collect();

    let rows = policy_tournament(&problem, &intensity, &named, &config)?;
    output::write_tournament(out, &rows)?;

    // Aggregate stats for the first (benchmark) policy.
    let records = simulate_paths(&problem, &intensity, &named[0].1, &config)?;
    let stats = optliq::simulate(&problem, &intensity, &named[0].1, &config)?;
    output::write_histogram(out, &stats)?;
    if sim.dump_paths {
        output::write_paths(out, &records)?;
    }
    report.insert("mean_utility".into(), json!(stats.mean_utility));
    report.insert("utility_std_error".into(), json!(stats.utility_std_error));
    report.insert(
        "certainty_equivalent".into(),
        json!(stats.certainty_equivalent),
    );
    report.insert("ce_std_error".into(), json!(stats.ce_std_error));
    report.insert("seed".into(), json!(config.seed));
    Ok(())
}
