//! CSV and manifest writers. Floats use Rust's shortest round-trip
//! formatting, so identical inputs give byte-identical files.

use std::io::Write;

use lifestyle_core::sweep::{CellResult, GapSummary, SweepGrid, SweepResult};
use lifestyle_core::welfare::WelfareRow;
use lifestyle_core::StrategyKind;
use serde::Serialize;

use crate::AppError;

pub const WELFARE_COLUMNS: [&str; 7] = ["gamma", "strategy", "ce", "irr", "method", "stderr", "runtime_s"];

pub fn write_welfare_csv(w: impl Write, rows: &[WelfareRow]) -> Result<(), AppError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(WELFARE_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.gamma.to_string(),
            r.strategy.name().to_string(),
            r.ce.to_string(),
            r.irr.to_string(),
            r.method.name().to_string(),
            r.stderr.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:.3}", r.runtime_s),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub const CELL_COLUMNS: [&str; 19] = [
    "cell",
    "market",
    "mu_bond",
    "mu_stock",
    "sigma_bond",
    "sigma_stock",
    "correlation",
    "gamma",
    "status",
    "ce_optimal",
    "ce_pi0",
    "ce_pi1",
    "ce_pi2",
    "ce_pi3",
    "gap_pi0",
    "gap_pi1",
    "gap_pi2",
    "gap_pi3",
    "error",
];

fn cell_record(i: usize, c: &CellResult, sweep: &SweepGrid) -> Vec<String> {
    let [a, b, s1, s2, e] = c.indices;
    let mut rec = vec![
        i.to_string(),
        c.market.to_string(),
        sweep.mu_bond[a].to_string(),
        sweep.mu_stock[b].to_string(),
        sweep.sigma_bond[s1].to_string(),
        sweep.sigma_stock[s2].to_string(),
        sweep.correlation[e].to_string(),
        c.gamma.to_string(),
    ];
    match &c.outcome {
        Ok(v) => {
            rec.push("ok".into());
            rec.push(v.ce_optimal.to_string());
            rec.extend(v.ce_heuristic.iter().map(f64::to_string));
            rec.extend(v.gaps().iter().map(f64::to_string));
            rec.push(String::new());
        }
        Err(msg) => {
            rec.push("failed".into());
            rec.extend(std::iter::repeat_n(String::new(), 9));
            rec.push(msg.clone());
        }
    }
    rec
}

pub fn write_cells_csv(w: impl Write, sweep: &SweepGrid, result: &SweepResult) -> Result<(), AppError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CELL_COLUMNS)?;
    for (i, c) in result.cells.iter().enumerate() {
        out.write_record(cell_record(i, c, sweep))?;
    }
    out.flush()?;
    Ok(())
}

pub const AGGREGATE_COLUMNS: [&str; 6] = ["gamma", "strategy", "avg_gap", "max_gap", "cells", "failed"];

pub fn write_aggregate_csv(w: impl Write, summary: &[GapSummary]) -> Result<(), AppError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(AGGREGATE_COLUMNS)?;
    for s in summary {
        for (k, kind) in StrategyKind::HEURISTICS.iter().enumerate() {
            out.write_record([
                s.gamma.to_string(),
                kind.name().to_string(),
                s.avg[k].to_string(),
                s.max[k].to_string(),
                s.cells.to_string(),
                s.failed.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Cell with the largest `pi3` gap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardestCell {
    pub cell: usize,
    pub gamma: f64,
    pub mu_bond: f64,
    pub sigma_bond: f64,
    pub correlation: f64,
    pub gap_pi3: f64,
    /// Whether the cell has correlation -0.2, bond drift 3% and bond
    /// volatility 3%, where the largest gaps are expected.
    pub in_expected_region: bool,
}

pub fn hardest_cell(sweep: &SweepGrid, result: &SweepResult) -> Option<HardestCell> {
    let (i, c, gap) = result
        .cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.outcome.as_ref().ok().map(|v| (i, c, v.gaps()[3])))
        .max_by(|a, b| a.2.total_cmp(&b.2))?;
    let [a, _, s1, _, e] = c.indices;
    let (mu_bond, sigma_bond, correlation) = (sweep.mu_bond[a], sweep.sigma_bond[s1], sweep.correlation[e]);
    Some(HardestCell {
        cell: i,
        gamma: c.gamma,
        mu_bond,
        sigma_bond,
        correlation,
        gap_pi3: gap,
        in_expected_region: correlation == -0.2 && mu_bond == 0.03 && sigma_bond == 0.03,
    })
}

/// Cells breaking `gap(pi1) >= gap(pi2) >= gap(pi3)` by more than `slack`.
pub fn dominance_violations(result: &SweepResult, slack: f64) -> Vec<usize> {
    result
        .cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let g = c.outcome.as_ref().ok()?.gaps();
            (g[1] + slack < g[2] || g[2] + slack < g[3]).then_some(i)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub producer: String,
    pub config_sha256: String,
    pub fidelity: String,
    pub sweep_grid: String,
    pub cells: usize,
    pub failed_cells: Vec<usize>,
    pub dominance_violations: Vec<usize>,
    pub hardest_cell: Option<HardestCell>,
}

pub fn write_manifest(w: impl Write, manifest: &Manifest) -> Result<(), AppError> {
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, manifest).map_err(std::io::Error::from)?;
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use lifestyle_core::sweep::{aggregate, CellValues};
    use lifestyle_core::welfare::Method;

    #[test]
    fn welfare_golden() {
        let rows = vec![
            WelfareRow {
                gamma: 2.0,
                strategy: StrategyKind::Pi3,
                ce: 3.6496,
                irr: 0.055,
                method: Method::Pde,
                stderr: None,
                runtime_s: 1.23456,
            },
            WelfareRow {
                gamma: 5.0,
                strategy: StrategyKind::Optimal,
                ce: 2.1782,
                irr: 0.0349,
                method: Method::Mc,
                stderr: Some(0.001),
                runtime_s: 10.0,
            },
        ];
        let mut buf = Vec::new();
        write_welfare_csv(&mut buf, &rows).unwrap();
        let expected = "gamma,strategy,ce,irr,method,stderr,runtime_s\n\
                        2,pi3,3.6496,0.055,pde,,1.235\n\
                        5,optimal,2.1782,0.0349,mc,0.001,10.000\n";
        assert_eq!(String::from_utf8(buf).unwrap(), expected);
    }

    #[test]
    fn sweep_files() {
        let mut sweep = SweepGrid::bond_slice();
        sweep.mu_bond = vec![0.03];
        sweep.sigma_bond = vec![0.03, 0.05];
        sweep.gammas = vec![5.0];
        let cell = |market: usize, ok: bool| CellResult {
            market,
            indices: sweep.market_indices(market),
            gamma: 5.0,
            outcome: if ok {
                Ok(CellValues { ce_optimal: 2.0, ce_heuristic: [1.0, 1.5, 1.8, 1.99] })
            } else {
                Err("no convergence".into())
            },
        };
        let result = SweepResult { cells: vec![cell(0, true), cell(1, false)] };
        let mut buf = Vec::new();
        write_cells_csv(&mut buf, &sweep, &result).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0,0.03,0.1,0.03,0.25,-0.2,5,ok,2,1,1.5,1.8,1.99,0.5,0.25,0.09999999999999998,0.0050000000000000044,");
        assert_eq!(lines[2], "1,1,0.03,0.1,0.05,0.25,-0.2,5,failed,,,,,,,,,,no convergence");
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &aggregate(&result).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(4).unwrap(), "5,pi3,0.0050000000000000044,0.0050000000000000044,1,1");
        let hard = hardest_cell(&sweep, &result).unwrap();
        assert!(hard.in_expected_region);
        assert!(dominance_violations(&result, 1e-3).is_empty());
    }
}
