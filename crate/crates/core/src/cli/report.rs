//! Report generation over completed run directories: learning curves,
//! positives-collected curves, a cross-strategy summary table, and the
//! data-efficiency ratio of adaptive vs static collection.

use super::runner::{read_json, CellMetrics, Manifest};
use crate::strategies::{RoundRecord, StrategyKind};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct CellData {
    pub manifest: Manifest,
    pub rounds: Vec<RoundRecord>,
    pub metrics: CellMetrics,
}

fn read_run_log(path: &Path) -> Result<Vec<RoundRecord>> {
    let raw = std::fs::read_to_string(path)?;
    raw.lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| Error::InvalidConfig(format!("parsing {}: {e}", path.display())))
        })
        .collect()
}

/// Scan run roots for `<strategy>/<seed>/manifest.json` cells.
pub fn collect_cells(run_roots: &[PathBuf]) -> Result<Vec<CellData>> {
    let mut cells = Vec::new();
    for root in run_roots {
        let mut strategy_dirs: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        strategy_dirs.sort();
        for strategy_dir in strategy_dirs {
            let mut seed_dirs: Vec<PathBuf> = std::fs::read_dir(&strategy_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir() && p.join("manifest.json").exists())
                .collect();
            seed_dirs.sort();
            for cell_dir in seed_dirs {
                cells.push(CellData {
                    manifest: read_json(&cell_dir.join("manifest.json"))?,
                    rounds: read_run_log(&cell_dir.join("run_log.jsonl"))?,
                    metrics: read_json(&cell_dir.join("metrics.json"))?,
                });
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::InvalidConfig(
            "no completed runs found under the given directories".into(),
        ));
    }
    let fingerprint = &cells[0].manifest.corpus_fingerprint;
    for cell in &cells[1..] {
        if &cell.manifest.corpus_fingerprint != fingerprint {
            return Err(Error::CorpusMismatch(format!(
                "run {}:{} was produced on a different corpus",
                cell.manifest.strategy.as_str(),
                cell.manifest.seed
            )));
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub adaptive_strategy: StrategyKind,
    pub reference_strategy: StrategyKind,
    pub reference_final_ap: f64,
    pub reference_labels: f64,
    /// Mean labels the adaptive strategy needed to reach the reference AP;
    /// None when it never did.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels_needed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportOutput {
    pub n_cells: usize,
    pub efficiency: Vec<EfficiencyReport>,
    /// strategy -> (mean final AP, mean positives, mean labeled)
    pub summary: BTreeMap<StrategyKind, (f64, f64, f64)>,
}

/// Mean AP learning curve of one strategy: per round, mean cumulative labels
/// and mean AP over the seeds that reached that round with metrics.
fn mean_curve(cells: &[&CellData]) -> Vec<(u32, f64, f64, usize)> {
    let mut by_round: BTreeMap<u32, Vec<(u64, f64)>> = BTreeMap::new();
    for cell in cells {
        for record in &cell.rounds {
            if let Some(metrics) = &record.dev_metrics {
                by_round
                    .entry(record.round)
                    .or_default()
                    .push((record.cumulative_labeled, metrics.ap));
            }
        }
    }
    by_round
        .into_iter()
        .map(|(round, entries)| {
            let n = entries.len() as f64;
            let cum = entries.iter().map(|(c, _)| *c as f64).sum::<f64>() / n;
            let ap = entries.iter().map(|(_, a)| *a).sum::<f64>() / n;
            (round, cum, ap, entries.len())
        })
        .collect()
}

pub fn cmd_report(run_roots: &[PathBuf], out_dir: &Path) -> Result<ReportOutput> {
    let cells = collect_cells(run_roots)?;
    std::fs::create_dir_all(out_dir)?;

    let mut by_strategy: BTreeMap<StrategyKind, Vec<&CellData>> = BTreeMap::new();
    for cell in &cells {
        by_strategy.entry(cell.manifest.strategy).or_default().push(cell);
    }

    // (a) AP-vs-labels curves, per seed and averaged.
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("ap_curve.csv"))?);
        writeln!(w, "strategy,seed,round,cumulative_labeled,ap")?;
        for (strategy, cells) in &by_strategy {
            for cell in cells {
                for record in &cell.rounds {
                    if let Some(metrics) = &record.dev_metrics {
                        writeln!(
                            w,
                            "{},{},{},{},{}",
                            strategy.as_str(),
                            cell.manifest.seed,
                            record.round,
                            record.cumulative_labeled,
                            metrics.ap
                        )?;
                    }
                }
            }
        }
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(out_dir.join("ap_curve_mean.csv"))?,
        );
        writeln!(w, "strategy,round,mean_cumulative_labeled,mean_ap,seeds")?;
        for (strategy, cells) in &by_strategy {
            for (round, cum, ap, n) in mean_curve(cells) {
                writeln!(w, "{},{round},{cum},{ap},{n}", strategy.as_str())?;
            }
        }
    }

    // (b) positives-collected curves.
    {
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(out_dir.join("positives_curve.csv"))?,
        );
        writeln!(
            w,
            "strategy,seed,round,cumulative_labeled,positives_in_batch,cumulative_positives"
        )?;
        for (strategy, cells) in &by_strategy {
            for cell in cells {
                for record in &cell.rounds {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        strategy.as_str(),
                        cell.manifest.seed,
                        record.round,
                        record.cumulative_labeled,
                        record.positives_in_batch,
                        record.cumulative_positives
                    )?;
                }
            }
        }
    }

    // (c) cross-strategy summary.
    let mut summary: BTreeMap<StrategyKind, (f64, f64, f64)> = BTreeMap::new();
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("summary.csv"))?);
        writeln!(w, "strategy,seed,final_ap,p_at_r20,positives_collected,labeled")?;
        for (strategy, cells) in &by_strategy {
            let mut aps = Vec::new();
            let mut positives = Vec::new();
            let mut labeled = Vec::new();
            for cell in cells {
                let m = &cell.metrics.all_pairs;
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    strategy.as_str(),
                    cell.manifest.seed,
                    m.ap,
                    m.p_at_r20.map_or(String::new(), |p| p.to_string()),
                    cell.manifest.positives,
                    cell.manifest.labeled
                )?;
                aps.push(m.ap);
                positives.push(cell.manifest.positives as f64);
                labeled.push(cell.manifest.labeled as f64);
            }
            let n = aps.len() as f64;
            let entry = (
                aps.iter().sum::<f64>() / n,
                positives.iter().sum::<f64>() / n,
                labeled.iter().sum::<f64>() / n,
            );
            writeln!(
                w,
                "{},mean,{},,{},{}",
                strategy.as_str(),
                entry.0,
                entry.1,
                entry.2
            )?;
            summary.insert(*strategy, entry);
        }
    }

    // (d) data efficiency: labels the adaptive strategy needs to match the
    // best static strategy's final AP.
    let best_static = summary
        .iter()
        .filter(|(s, _)| !s.is_adaptive())
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(s, v)| (*s, *v));
    let mut efficiency = Vec::new();
    if let Some((reference_strategy, (reference_final_ap, _, reference_labels))) = best_static {
        for (strategy, cells) in &by_strategy {
            if !strategy.is_adaptive() {
                continue;
            }
            let labels_needed = mean_curve(cells)
                .into_iter()
                .find(|(_, _, ap, _)| *ap >= reference_final_ap)
                .map(|(_, cum, _, _)| cum);
            efficiency.push(EfficiencyReport {
                adaptive_strategy: *strategy,
                reference_strategy,
                reference_final_ap,
                reference_labels,
                labels_needed,
                ratio: labels_needed.map(|l| reference_labels / l),
            });
        }
    }
    let raw = serde_json::to_string_pretty(&efficiency)
        .map_err(|e| Error::InvalidConfig(format!("serializing efficiency report: {e}")))?;
    std::fs::write(out_dir.join("efficiency.json"), raw + "\n")?;

    // Console table.
    println!(
        "{:<22} {:>10} {:>12} {:>10}",
        "strategy", "mean AP", "positives", "labeled"
    );
    for (strategy, (ap, positives, labeled)) in &summary {
        println!(
            "{:<22} {:>10.4} {:>12.1} {:>10.1}",
            strategy.as_str(),
            ap,
            positives,
            labeled
        );
    }
    for report in &efficiency {
        match (report.labels_needed, report.ratio) {
            (Some(labels), Some(ratio)) => println!(
                "{} matches {} final AP ({:.4}) after {:.0} labels: {:.1}x data efficiency",
                report.adaptive_strategy.as_str(),
                report.reference_strategy.as_str(),
                report.reference_final_ap,
                labels,
                ratio
            ),
            _ => println!(
                "{} never reaches {} final AP ({:.4})",
                report.adaptive_strategy.as_str(),
                report.reference_strategy.as_str(),
                report.reference_final_ap
            ),
        }
    }

    Ok(ReportOutput {
        n_cells: cells.len(),
        efficiency,
        summary,
    })
}
