//! Append-only event log with tamper-evident records.
//!
//! Every component invocation in a campaign becomes one JSON line.
//! Records carry a logical sequence number instead of a wall clock,
//! so logs are byte-identical across machines and thread counts, and
//! each record seals itself with a truncated digest so edits to a
//! persisted log are detectable. [`replay`] rebuilds a full execution
//! trace from the log alone.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use faultline_core::payload::Payload;
use faultline_core::pipeline::StateId;
use faultline_core::trace::{TraceNode, TraceTree};
use faultline_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// One component invocation, as persisted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub campaign_id: String,
    /// Logical sequence number within the log.
    pub ts: u64,
    pub run_id: String,
    pub input_ref: u64,
    /// Perturbation id for perturbed runs, `None` for reference runs.
    pub perturbation_ref: Option<String>,
    /// Campaign seed the run was derived from.
    pub seed: u64,
    pub spec_digest: String,
    pub path: String,
    pub state: String,
    pub input_digest: String,
    pub output: Option<Payload>,
    pub score: Option<bool>,
    pub flags: BTreeSet<String>,
    /// Truncated digest of the record serialized with this field
    /// blank.
    pub check: String,
}

impl EventRecord {
    fn computed_check(&self) -> String {
        let mut blank = self.clone();
        blank.check = String::new();
        let bytes = serde_json::to_vec(&blank).expect("record serialization cannot fail");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    /// Fills in the integrity check.
    pub fn seal(mut self) -> Self {
        self.check = self.computed_check();
        self
    }

    pub fn verify(&self) -> bool {
        self.check == self.computed_check()
    }
}

/// Flattens one trace into sealed records, starting at sequence
/// number `ts_start`. Nodes are emitted in path order.
pub fn events_from_tree(campaign_id: &str, tree: &TraceTree, ts_start: u64) -> Vec<EventRecord> {
    tree.nodes
        .values()
        .enumerate()
        .map(|(offset, node)| {
            EventRecord {
                campaign_id: campaign_id.to_string(),
                ts: ts_start + offset as u64,
                run_id: tree.run_id.clone(),
                input_ref: tree.input_ref,
                perturbation_ref: tree.perturbation_ref.clone(),
                seed: tree.seed,
                spec_digest: tree.spec_digest.clone(),
                path: node.path.clone(),
                state: node.state.to_string(),
                input_digest: node.input_digest.clone(),
                output: node.output.clone(),
                score: node.score,
                flags: node.flags.clone(),
                check: String::new(),
            }
            .seal()
        })
        .collect()
}

/// Writes records as JSON lines.
pub fn write_log(path: &Path, records: &[EventRecord]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a log, keeping one-based line numbers for error reports.
///
/// Any unparseable line is an integrity failure, wherever it sits.
pub fn read_log(path: &Path) -> Result<Vec<(u64, EventRecord)>> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let number = index as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord = serde_json::from_str(line).map_err(|e| {
            CoreError::Integrity { line: number, message: format!("unparseable record: {e}") }
        })?;
        records.push((number, record));
    }
    Ok(records)
}

/// Rebuilds the trace of one run from a log.
///
/// Verifies the integrity check of every selected record and the
/// cross-record consistency of the run header fields before handing
/// the nodes to the structural trace checks.
pub fn replay(log: &Path, run_id: &str) -> Result<TraceTree> {
    let records = read_log(log)?;
    let selected: Vec<&(u64, EventRecord)> =
        records.iter().filter(|(_, r)| r.run_id == run_id).collect();
    let Some((first_line, first)) = selected.first().map(|(l, r)| (*l, r)) else {
        return Err(HarnessError::Config(format!("run {run_id:?} is not in the log")));
    };
    let mut parts = Vec::with_capacity(selected.len());
    for (line, record) in &selected {
        if !record.verify() {
            return Err(CoreError::Integrity {
                line: *line,
                message: format!("record check mismatch for path {:?}", record.path),
            }
            .into());
        }
        let consistent = record.seed == first.seed
            && record.input_ref == first.input_ref
            && record.perturbation_ref == first.perturbation_ref
            && record.spec_digest == first.spec_digest
            && record.campaign_id == first.campaign_id;
        if !consistent {
            return Err(CoreError::Integrity {
                line: *line,
                message: format!(
                    "record disagrees with the run header on line {first_line}"
                ),
            }
            .into());
        }
        parts.push(TraceNode {
            state: StateId::new(record.state.clone()),
            path: record.path.clone(),
            input_digest: record.input_digest.clone(),
            output: record.output.clone(),
            score: record.score,
            flags: record.flags.clone(),
        });
    }
    Ok(TraceTree::from_parts(
        run_id.to_string(),
        first.seed,
        first.input_ref,
        first.perturbation_ref.clone(),
        first.spec_digest.clone(),
        parts,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tree() -> TraceTree {
        let parts = vec![
            TraceNode {
                state: StateId::new("q0"),
                path: "/".into(),
                input_digest: "d0".into(),
                output: Some(Payload::label("sign")),
                score: None,
                flags: BTreeSet::new(),
            },
            TraceNode {
                state: StateId::new("q1"),
                path: "/0:q1".into(),
                input_digest: "d1".into(),
                output: Some(Payload::label("stop")),
                score: Some(true),
                flags: BTreeSet::new(),
            },
        ];
        TraceTree::from_parts("ref-00000".into(), 42, 0, None, "spec".into(), parts).unwrap()
    }

    #[test]
    fn sealed_records_verify_and_edits_are_detected() {
        let records = events_from_tree("c1", &sample_tree(), 0);
        assert!(records.iter().all(EventRecord::verify));
        let mut tampered = records[0].clone();
        tampered.input_digest = "forged".into();
        assert!(!tampered.verify());
    }

    #[test]
    fn replay_round_trips_a_tree() {
        let tree = sample_tree();
        let records = events_from_tree("c1", &tree, 7);
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("events.jsonl");
        write_log(&log, &records).unwrap();
        let replayed = replay(&log, "ref-00000").unwrap();
        assert_eq!(replayed.canonical_bytes(), tree.canonical_bytes());
    }

    #[test]
    fn missing_runs_and_corruption_are_reported() {
        let tree = sample_tree();
        let records = events_from_tree("c1", &tree, 0);
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("events.jsonl");
        write_log(&log, &records).unwrap();

        let missing = replay(&log, "nope").unwrap_err();
        assert_eq!(missing.exit_code(), 1);

        let mut text = fs::read_to_string(&log).unwrap();
        text = text.replace("d1", "dX");
        fs::write(&log, text).unwrap();
        let corrupt = replay(&log, "ref-00000").unwrap_err();
        assert_eq!(corrupt.exit_code(), 2);
        assert!(corrupt.to_string().contains("line"), "{corrupt}");

        fs::write(&log, "not json\n").unwrap();
        let unparseable = replay(&log, "ref-00000").unwrap_err();
        assert_eq!(unparseable.exit_code(), 2);
    }
}
