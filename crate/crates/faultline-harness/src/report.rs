//! Campaign artifacts: attribution tables, robustness rows, and the
//! machine-readable summary.
//!
//! A finished campaign writes five files into its output directory:
//!
//! * `events.jsonl`, the sealed event log
//! * `report.txt`, the attribution table for humans
//! * `report.csv`, the attribution table for spreadsheets
//! * `robustness.csv`, per-input robustness under the perturbations
//! * `summary.json`, everything above in one machine-readable object

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::campaign::{CampaignOutcome, RobustnessRow};
use crate::error::Result;
use crate::store;

/// Per-module attribution numbers, ordered by pipeline declaration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleRow {
    pub module: String,
    pub alpha: f64,
    pub fc: u64,
    pub fc_normalized: f64,
    pub activations: u64,
    pub violations: u64,
    pub phantom_events: u64,
    pub predicted_accuracy: Option<f64>,
}

/// Machine-readable digest of a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub campaign_id: String,
    pub seed: u64,
    pub dataset_size: usize,
    pub perturbation_count: usize,
    pub pairs: u64,
    pub total_failures: u64,
    /// True when no pair failed; attribution weights are all zero.
    pub no_failures: bool,
    pub average_robustness: f64,
    /// Module with the largest attribution weight, absent without
    /// failures.
    pub worst_module: Option<String>,
    pub modules: Vec<ModuleRow>,
    /// Failure counts per relation id.
    pub relation_violations: BTreeMap<String, u64>,
    pub robustness: Vec<RobustnessRow>,
}

/// Condenses a finished campaign into its summary.
pub fn summarize(outcome: &CampaignOutcome) -> CampaignSummary {
    let report = &outcome.report;
    let modules: Vec<ModuleRow> = report
        .module_ids
        .iter()
        .enumerate()
        .map(|(i, id)| ModuleRow {
            module: id.to_string(),
            alpha: report.alpha[i],
            fc: report.fc[i],
            fc_normalized: report.fc_normalized[i],
            activations: report.activations[i],
            violations: report.violations[i],
            phantom_events: report.phantom_events[i],
            predicted_accuracy: report.predicted_accuracy[i],
        })
        .collect();
    let average_robustness = if outcome.robustness.is_empty() {
        1.0
    } else {
        outcome.robustness.iter().map(|r| r.robustness).sum::<f64>()
            / outcome.robustness.len() as f64
    };
    CampaignSummary {
        campaign_id: outcome.campaign_id.clone(),
        seed: report.meta.seed,
        dataset_size: report.meta.dataset_size as usize,
        perturbation_count: report.meta.perturbations as usize,
        pairs: report.pairs,
        total_failures: report.total_failures,
        no_failures: report.no_failures,
        average_robustness,
        worst_module: report.argmax_alpha().map(|(_, id)| id.to_string()),
        modules,
        relation_violations: report.relation_violations.clone(),
        robustness: outcome.robustness.clone(),
    }
}

/// Plain-text attribution table.
pub fn render_table(summary: &CampaignSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "campaign {}  (seed {})", summary.campaign_id, summary.seed);
    let _ = writeln!(
        out,
        "{} inputs x {} perturbations = {} pairs, {} failures",
        summary.dataset_size, summary.perturbation_count, summary.pairs, summary.total_failures
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>6} {:>8} {:>12} {:>11} {:>8} {:>9}",
        "module", "alpha", "fc", "fc_norm", "activations", "violations", "phantom", "pred_acc"
    );
    for row in &summary.modules {
        let accuracy = row
            .predicted_accuracy
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            out,
            "{:<12} {:>8.4} {:>6} {:>8.4} {:>12} {:>11} {:>8} {:>9}",
            row.module,
            row.alpha,
            row.fc,
            row.fc_normalized,
            row.activations,
            row.violations,
            row.phantom_events,
            accuracy
        );
    }
    let _ = writeln!(out);
    match &summary.worst_module {
        Some(module) => {
            let _ = writeln!(out, "largest attribution: {module}");
        }
        None => {
            let _ = writeln!(out, "no failures observed; attribution is empty");
        }
    }
    let _ = writeln!(out, "average robustness: {:.4}", summary.average_robustness);
    if !summary.relation_violations.is_empty() {
        let _ = writeln!(out, "relation violations:");
        for (relation, count) in &summary.relation_violations {
            let _ = writeln!(out, "  {relation}: {count}");
        }
    }
    out
}

/// Attribution table as CSV.
pub fn render_csv(summary: &CampaignSummary) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["module", "alpha", "fc", "activations", "violations"])?;
    for row in &summary.modules {
        writer.write_record([
            row.module.clone(),
            format!("{:.6}", row.alpha),
            row.fc.to_string(),
            row.activations.to_string(),
            row.violations.to_string(),
        ])?;
    }
    let bytes = writer.into_inner().expect("csv buffer flush cannot fail");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per-input robustness as CSV.
pub fn render_robustness_csv(summary: &CampaignSummary) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["input_ref", "robustness", "avg_distance"])?;
    for row in &summary.robustness {
        writer.write_record([
            row.input_ref.to_string(),
            format!("{:.6}", row.robustness),
            row.avg_distance.map(|d| format!("{d:.6}")).unwrap_or_default(),
        ])?;
    }
    let bytes = writer.into_inner().expect("csv buffer flush cannot fail");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes every campaign artifact into `dir`.
pub fn write_outputs(outcome: &CampaignOutcome, dir: &Path) -> Result<CampaignSummary> {
    fs::create_dir_all(dir)?;
    let summary = summarize(outcome);
    store::write_log(&dir.join("events.jsonl"), &outcome.events)?;
    fs::write(dir.join("report.txt"), render_table(&summary))?;
    fs::write(dir.join("report.csv"), render_csv(&summary)?)?;
    fs::write(dir.join("robustness.csv"), render_robustness_csv(&summary)?)?;
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    Ok(summary)
}

/// Reads a summary back from a campaign directory.
pub fn read_summary(dir: &Path) -> Result<CampaignSummary> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    Ok(serde_json::from_str(&text)?)
}
