//! CSV and manifest writers. All output is deterministic: fixed headers,
//! row-major by time then inventory, shortest-roundtrip float formatting,
//! and no timestamps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use optliq::{
    MarketMakerSolution, MultiAssetSolution, PathRecord, SimulationStats, StudyRow,
    TournamentRow, ValidationReport, ValueGrid,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    pub fn outputs(&self) -> &[String] {
        &self.written
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::config(format!("write failed: {e}"))
}

pub fn write_value_grid(out: &mut OutDir, name: &str, grid: &ValueGrid) -> Result<(), CliError> {
    let mut w = out.writer(name)?;
    writeln!(w, "t,q,theta").map_err(io_err)?;
    for (it, &t) in grid.times().iter().enumerate() {
        for (iq, &q) in grid.inventories().iter().enumerate() {
            writeln!(w, "{t},{q},{}", grid.theta_at(it, iq)).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn write_quote_surface(
    out: &mut OutDir,
    name: &str,
    surface: &optliq::QuoteSurface,
) -> Result<(), CliError> {
    let mut w = out.writer(name)?;
    writeln!(w, "t,q,delta_star").map_err(io_err)?;
    for (it, &t) in surface.times().iter().enumerate() {
        for (iq, &q) in surface.inventories().iter().enumerate() {
            writeln!(w, "{t},{q},{}", surface.value_at(it, iq)).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn write_multi(out: &mut OutDir, sol: &MultiAssetSolution) -> Result<(), CliError> {
    let d = sol.axes.len();
    let nodes = sol.node_count();
    let q_header: Vec<String> = (1..=d).map(|i| format!("q{i}")).collect();

    let mut w = out.writer("theta.csv")?;
    writeln!(w, "t,{},theta", q_header.join(",")).map_err(io_err)?;
    for (it, &t) in sol.times.iter().enumerate() {
        for node in 0..nodes {
            let coords = sol.node_coords(node);
            let qs: Vec<String> = coords
                .iter()
                .enumerate()
                .map(|(i, &c)| sol.axes[i][c].to_string())
                .collect();
            writeln!(w, "{t},{},{}", qs.join(","), sol.theta_at(it, node)).map_err(io_err)?;
        }
    }
    drop(w);

    let mut w = out.writer("quotes.csv")?;
    writeln!(w, "t,{},asset,delta_star", q_header.join(",")).map_err(io_err)?;
    for (it, &t) in sol.times.iter().enumerate() {
        for node in 0..nodes {
            let coords = sol.node_coords(node);
            let qs: Vec<String> = coords
                .iter()
                .enumerate()
                .map(|(i, &c)| sol.axes[i][c].to_string())
                .collect();
            for asset in 0..d {
                let value = sol.quote_at(asset, it, node);
                if value.is_nan() {
                    continue;
                }
                writeln!(w, "{t},{},{},{value}", qs.join(","), asset + 1).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

pub fn write_market_maker(out: &mut OutDir, sol: &MarketMakerSolution) -> Result<(), CliError> {
    write_value_grid(out, "theta.csv", &sol.grid)?;
    let mut w = out.writer("quotes.csv")?;
    writeln!(w, "t,q,side,delta_star").map_err(io_err)?;
    for (it, &t) in sol.grid.times().iter().enumerate() {
        for (iq, &q) in sol.bid.inventories().iter().enumerate() {
            writeln!(w, "{t},{q},bid,{}", sol.bid.value_at(it, iq)).map_err(io_err)?;
        }
        for (iq, &q) in sol.ask.inventories().iter().enumerate() {
            writeln!(w, "{t},{q},ask,{}", sol.ask.value_at(it, iq)).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn write_validation(out: &mut OutDir, report: &ValidationReport) -> Result<(), CliError> {
    let mut w = out.writer("validation.csv")?;
    writeln!(w, "hypothesis,passed,first_violation").map_err(io_err)?;
    for check in &report.checks {
        let violation = check
            .first_violation
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(w, "{},{},{violation}", check.hypothesis, check.passed).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_study(out: &mut OutDir, rows: &[StudyRow]) -> Result<(), CliError> {
    let mut w = out.writer("study.csv")?;
    writeln!(w, "delta_size,sup_error,ratio").map_err(io_err)?;
    for row in rows {
        let ratio = row.ratio.map(|r| r.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{ratio}", row.delta_size, row.sup_error).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_theta_inf(
    out: &mut OutDir,
    rows: &[(f64, f64)],
    delta_star_inf: f64,
) -> Result<(), CliError> {
    let mut w = out.writer("theta_inf.csv")?;
    writeln!(w, "q,theta_inf").map_err(io_err)?;
    for (q, v) in rows {
        writeln!(w, "{q},{v}").map_err(io_err)?;
    }
    drop(w);
    let mut w = out.writer("delta_star_inf.txt")?;
    writeln!(w, "{delta_star_inf}").map_err(io_err)?;
    Ok(())
}

pub fn write_tournament(out: &mut OutDir, rows: &[TournamentRow]) -> Result<(), CliError> {
    let mut w = out.writer("tournament.csv")?;
    writeln!(
        w,
        "policy,certainty_equivalent,ce_std_error,mean_utility,delta_ce_vs_reference,flagged"
    )
    .map_err(io_err)?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.name,
            row.certainty_equivalent,
            row.ce_std_error,
            row.mean_utility,
            row.delta_ce_vs_reference,
            row.flagged
        )
        .map_err(io_err)?;
    }
    Ok(())
}

pub fn write_paths(out: &mut OutDir, records: &[PathRecord]) -> Result<(), CliError> {
    let mut w = out.writer("paths.csv")?;
    writeln!(w, "path,fills,X_T,q_T,S_T,utility").map_err(io_err)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.path, r.fills, r.terminal_cash, r.terminal_inventory, r.terminal_price, r.utility
        )
        .map_err(io_err)?;
    }
    Ok(())
}

pub fn write_histogram(out: &mut OutDir, stats: &SimulationStats) -> Result<(), CliError> {
    let mut w = out.writer("histogram.csv")?;
    writeln!(w, "fills,terminal_inventory,paths").map_err(io_err)?;
    let levels = stats.terminal_inventory_counts.len() - 1;
    for (j, (q, count)) in stats.terminal_inventory_counts.iter().enumerate().rev() {
        let fills = levels - j;
        writeln!(w, "{fills},{q},{count}").map_err(io_err)?;
    }
    Ok(())
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub dt: f64,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub report: serde_json::Map<String, serde_json::Value>,
}

pub fn write_manifest(out: &mut OutDir, manifest: &Manifest) -> Result<(), CliError> {
    let mut w = out.writer("manifest.json")?;
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::config(format!("manifest serialization failed: {e}")))?;
    w.write_all(text.as_bytes()).map_err(io_err)?;
    w.write_all(b"\n").map_err(io_err)?;
    Ok(())
}
