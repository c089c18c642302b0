//! Report artifacts: run JSON, metrics and gate CSVs, comparison table and
//! the gated-fraction bar chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use adabn_core::gate::GateTotals;
use adabn_core::train::{CrossvalSummary, Scenario};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{IoContext, Result};
use crate::experiment::{Command, Results};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const METRICS_HEADER: &str = "scenario,batch_size,fold,epoch,mean_loss,val_accuracy";
pub const GATE_HEADER: &str = "epoch,batches_total,batches_gated,fraction";
pub const GATE_BATCH_HEADER: &str = "batch_size,batches_total,batches_gated,fraction";
pub const COMPARE_HEADER: &str = "batch_size,bn,bn_std,without_bn,without_bn_std,adaptive_bn,adaptive_bn_std";
pub const GRADCHECK_HEADER: &str = "layer,points,worst_relative_error,tolerance,passed";

#[derive(Serialize)]
struct Timing {
    seconds: f64,
}

#[derive(Serialize)]
struct RunJson<'a> {
    version: &'static str,
    command: Command,
    seed: u64,
    config: &'a ExperimentConfig,
    results: &'a Results,
    timing: Timing,
}

pub fn run_json(command: Command, config: &ExperimentConfig, results: &Results, seconds: f64) -> Result<String> {
    let doc = RunJson { version: VERSION, command, seed: config.train.seed, config, results, timing: Timing { seconds } };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

/// `mean ± std` as percentages, e.g. `96.070000,(+/-0.090000)`.
pub fn percent_cell(mean: f64, std: f64) -> String {
    format!("{:.6},(+/-{:.6})", 100.0 * mean, 100.0 * std)
}

pub fn metrics_csv(results: &Results) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for (fold, run) in results.runs() {
        for e in &run.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6}",
                run.scenario, run.batch_size, fold, e.epoch, e.mean_loss, e.val_accuracy
            );
        }
    }
    out
}

fn gate_row(out: &mut String, key: usize, t: &GateTotals) {
    let _ = writeln!(out, "{},{},{},{:.6}", key, t.batches_total, t.batches_gated, t.fraction());
}

/// Gate totals per epoch, pooled over every adaptive run in `results`.
pub fn gate_csv(results: &Results) -> String {
    let mut per_epoch: BTreeMap<usize, GateTotals> = BTreeMap::new();
    for (_, run) in results.runs() {
        for (&epoch, t) in &run.gate_log.per_epoch {
            let e = per_epoch.entry(epoch).or_default();
            e.batches_total += t.batches_total;
            e.batches_gated += t.batches_gated;
        }
    }
    gate_csv_from(&per_epoch)
}

pub fn gate_csv_from(per_epoch: &BTreeMap<usize, GateTotals>) -> String {
    let mut out = format!("{GATE_HEADER}\n");
    for (&epoch, t) in per_epoch {
        gate_row(&mut out, epoch, t);
    }
    out
}

/// Gate totals per batch size, pooled over runs or replications.
pub fn gate_by_batch(results: &Results) -> BTreeMap<usize, GateTotals> {
    let mut by: BTreeMap<usize, GateTotals> = BTreeMap::new();
    let mut add = |bs: usize, t: &GateTotals| {
        let e = by.entry(bs).or_default();
        e.batches_total += t.batches_total;
        e.batches_gated += t.batches_gated;
    };
    match results {
        Results::Gatereport { rows } => rows.iter().for_each(|r| add(r.batch_size, &r.totals)),
        _ => {
            for (_, run) in results.runs() {
                for t in run.gate_log.per_epoch.values() {
                    add(run.batch_size, t);
                }
            }
        }
    }
    by
}

pub fn gate_batch_csv(by: &BTreeMap<usize, GateTotals>) -> String {
    let mut out = format!("{GATE_BATCH_HEADER}\n");
    for (&bs, t) in by {
        gate_row(&mut out, bs, t);
    }
    out
}

/// Table with one row per batch size and a `mean,(+/-std)` pair per scenario.
pub fn compare_csv(cells: &[(usize, Scenario, &CrossvalSummary)]) -> String {
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = format!("{COMPARE_HEADER}\n");
    for bs in sizes {
        let mut row = bs.to_string();
        for scenario in [Scenario::Bn, Scenario::NoBn, Scenario::Adaptive] {
            row.push(',');
            match cells.iter().find(|c| c.0 == bs && c.1 == scenario) {
                Some((_, _, s)) => row.push_str(&percent_cell(s.mean, s.std)),
                None => row.push(','),
            }
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

const BAR_WIDTH: f64 = 36.0;
const GROUP_WIDTH: f64 = 120.0;
const PLOT_HEIGHT: f64 = 220.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 40.0;
const GATED_COLOR: &str = "#3b6ea8";
const UNGATED_COLOR: &str = "#d9822b";

/// Paired bars per batch size: percentage of batches normalized by the gate
/// and percentage passed through.
pub fn gate_svg(by: &BTreeMap<usize, GateTotals>) -> String {
    let width = LEFT + GROUP_WIDTH * by.len() as f64 + 20.0;
    let height = TOP + PLOT_HEIGHT + 50.0;
    let base = TOP + PLOT_HEIGHT;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{LEFT}" y="16" font-size="13">Batches per batch size (%)</text>"#);
    let _ = writeln!(s, r#"<text x="{}" y="32" fill="{GATED_COLOR}">gated (normalized)</text>"#, LEFT);
    let _ = writeln!(s, r#"<text x="{}" y="32" fill="{UNGATED_COLOR}">un-gated</text>"#, LEFT + 130.0);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, width - 10.0);
    for tick in [0, 50, 100] {
        let y = base - PLOT_HEIGHT * tick as f64 / 100.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#, LEFT - 6.0, y + 4.0);
    }
    for (i, (&bs, t)) in by.iter().enumerate() {
        let gated = 100.0 * t.fraction();
        let x0 = LEFT + GROUP_WIDTH * i as f64 + 20.0;
        for (j, (pct, color)) in [(gated, GATED_COLOR), (100.0 - gated, UNGATED_COLOR)].into_iter().enumerate() {
            let x = x0 + j as f64 * (BAR_WIDTH + 6.0);
            let h = PLOT_HEIGHT * pct / 100.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{BAR_WIDTH}" height="{h:.2}" fill="{color}"/>"#,
                base - h
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{pct:.2}</text>"#,
                x + BAR_WIDTH / 2.0,
                base - h - 4.0
            );
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">batch {bs}</text>"#, x0 + BAR_WIDTH + 3.0, base + 18.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn gradcheck_csv(results: &Results) -> String {
    let mut out = format!("{GRADCHECK_HEADER}\n");
    if let Results::Gradcheck { report } = results {
        for c in &report.checks {
            let _ = writeln!(out, "{},{},{:.6e},{:.1e},{}", c.layer, c.points, c.worst, c.tolerance, c.passed());
        }
        let _ = writeln!(
            out,
            "composed_network,1,{:.6e},{:.1e},{}",
            report.composed_worst,
            report.composed_tolerance,
            report.composed_worst < report.composed_tolerance
        );
    }
    out
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).at(&path)?;
    written.push(path);
    Ok(())
}

/// Writes every artifact for `results` under `dir` and returns their paths.
pub fn emit_reports(dir: &Path, command: Command, config: &ExperimentConfig, results: &Results, seconds: f64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).at(dir)?;
    let mut written = Vec::new();
    write(dir, "run.json", &run_json(command, config, results, seconds)?, &mut written)?;
    match results {
        Results::Gradcheck { .. } => write(dir, "gradcheck.csv", &gradcheck_csv(results), &mut written)?,
        Results::Gatereport { .. } => {
            let by = gate_by_batch(results);
            write(dir, "gate_by_batch.csv", &gate_batch_csv(&by), &mut written)?;
            write(dir, "gate_fractions.svg", &gate_svg(&by), &mut written)?;
        }
        _ => {
            write(dir, "metrics.csv", &metrics_csv(results), &mut written)?;
            write(dir, "gate.csv", &gate_csv(results), &mut written)?;
            let by = gate_by_batch(results);
            if !by.is_empty() {
                write(dir, "gate_by_batch.csv", &gate_batch_csv(&by), &mut written)?;
                write(dir, "gate_fractions.svg", &gate_svg(&by), &mut written)?;
            }
            if let Results::Compare { cells } = results {
                let rows: Vec<_> = cells.iter().map(|c| (c.batch_size, c.scenario, &c.summary)).collect();
                write(dir, "compare.csv", &compare_csv(&rows), &mut written)?;
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn totals(total: u64, gated: u64) -> GateTotals {
        GateTotals { batches_total: total, batches_gated: gated }
    }

    #[test]
    fn percent_cell_format() {
        assert_eq!(percent_cell(0.9607, 0.0009), "96.070000,(+/-0.090000)");
    }

    #[test]
    fn gate_row_format() {
        let per_epoch = BTreeMap::from([(2, totals(100, 25))]);
        assert_eq!(gate_csv_from(&per_epoch), "epoch,batches_total,batches_gated,fraction\n2,100,25,0.250000\n");
    }

    #[test]
    fn svg_has_two_bars_per_batch_size() {
        let by = BTreeMap::from([(4, totals(10, 9)), (8, totals(10, 10)), (16, totals(4, 1)), (32, totals(3, 0))]);
        let svg = gate_svg(&by);
        assert_eq!(svg.matches("<rect").count(), 8);
        assert!(svg.contains(">90.00<") && svg.contains(">25.00<") && svg.contains(">75.00<"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn compare_table_layout() {
        let s = CrossvalSummary { fold_accuracies: vec![0.9607; 3], mean: 0.9607, std: 0.0009, runs: vec![] };
        let csv = compare_csv(&[(4, Scenario::Adaptive, &s), (4, Scenario::Bn, &s), (8, Scenario::NoBn, &s)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], COMPARE_HEADER);
        assert_eq!(lines[1], "4,96.070000,(+/-0.090000),,,96.070000,(+/-0.090000)");
        assert_eq!(lines[2], "8,,,96.070000,(+/-0.090000),,");
        assert!(lines.iter().all(|l| l.split(',').count() == 7));
    }
}
