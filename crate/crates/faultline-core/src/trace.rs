//! Trace trees and their comparison.
//!
//! Every run produces a tree with one node per component invocation.
//! Node paths encode the route taken: the root is `/`, a child node
//! appends `/<ordinal>:<state>` for its position among the parent's
//! successors. Two runs of the same pipeline are compared by aligning
//! nodes with identical paths; nodes present in only one tree mark
//! activation divergence, which is scored as a fault even when every
//! relation passes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamorphic::composite_score;
use crate::payload::Payload;
use crate::pipeline::{PipelineSpec, StateId};

/// Flag set on nodes whose component failed or broke its contract.
pub const FLAG_COMPONENT_ERROR: &str = "component-error";

/// One component invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub state: StateId,
    pub path: String,
    /// Digest of the payload the component consumed.
    pub input_digest: String,
    /// The produced payload; `None` when the invocation failed.
    pub output: Option<Payload>,
    /// Pass bit filled in when the node is scored against a partner
    /// run; `None` until then.
    pub score: Option<bool>,
    pub flags: BTreeSet<String>,
}

impl TraceNode {
    pub fn is_component_error(&self) -> bool {
        self.flags.contains(FLAG_COMPONENT_ERROR)
    }
}

/// The full record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceTree {
    pub run_id: String,
    /// Campaign seed the run was derived from.
    pub seed: u64,
    pub input_ref: u64,
    /// Perturbation id for perturbed runs, `None` for reference runs.
    pub perturbation_ref: Option<String>,
    /// Digest of the pipeline declaration that produced the tree.
    pub spec_digest: String,
    /// Nodes keyed by path.
    pub nodes: BTreeMap<String, TraceNode>,
}

impl TraceTree {
    /// Rebuilds a tree from loose nodes, checking structural integrity:
    /// a single root, a present parent for every node, and path
    /// segments that agree with node states.
    pub fn from_parts(
        run_id: String,
        seed: u64,
        input_ref: u64,
        perturbation_ref: Option<String>,
        spec_digest: String,
        parts: Vec<TraceNode>,
    ) -> Result<Self> {
        let mut nodes = BTreeMap::new();
        for node in parts {
            if node.path != "/" {
                let (_, segment) = node
                    .path
                    .rsplit_once('/')
                    .ok_or_else(|| Error::integrity(format!("malformed path {:?}", node.path)))?;
                let state_part = segment
                    .split_once(':')
                    .map(|(_, s)| s)
                    .ok_or_else(|| Error::integrity(format!("malformed segment {segment:?}")))?;
                if state_part != node.state.as_str() {
                    return Err(Error::integrity(format!(
                        "path {:?} ends in {state_part:?} but the node claims state {}",
                        node.path, node.state
                    )));
                }
            }
            if nodes.insert(node.path.clone(), node).is_some() {
                return Err(Error::integrity("duplicate node path"));
            }
        }
        if !nodes.contains_key("/") {
            return Err(Error::integrity("tree has no root node"));
        }
        for path in nodes.keys() {
            if path == "/" {
                continue;
            }
            let (parent, _) = path.rsplit_once('/').expect("checked above");
            let parent = if parent.is_empty() { "/" } else { parent };
            if !nodes.contains_key(parent) {
                return Err(Error::integrity(format!(
                    "node {path:?} has no parent {parent:?}"
                )));
            }
        }
        Ok(TraceTree { run_id, seed, input_ref, perturbation_ref, spec_digest, nodes })
    }

    pub fn root(&self) -> Option<&TraceNode> {
        self.nodes.get("/")
    }

    /// States that were invoked at least once in this run.
    pub fn activated_modules(&self) -> BTreeSet<StateId> {
        self.nodes.values().map(|n| n.state.clone()).collect()
    }

    pub fn has_component_errors(&self) -> bool {
        self.nodes.values().any(TraceNode::is_component_error)
    }

    /// Canonical JSON encoding; byte-identical for identical runs.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("trace serialization cannot fail")
    }
}

/// Structural alignment of two trees from the same pipeline.
#[derive(Debug)]
pub struct NodeAlignment<'a> {
    /// Nodes present at the same path in both trees.
    pub aligned: Vec<(&'a TraceNode, &'a TraceNode)>,
    /// Nodes only the reference run visited.
    pub ref_only: Vec<&'a TraceNode>,
    /// Nodes only the perturbed run visited.
    pub pert_only: Vec<&'a TraceNode>,
}

/// Aligns two trees by node path.
///
/// The trees must come from the same pipeline declaration; comparing
/// traces of different declarations is refused rather than producing
/// a meaningless alignment.
pub fn align<'a>(
    reference: &'a TraceTree,
    perturbed: &'a TraceTree,
) -> Result<NodeAlignment<'a>> {
    if reference.spec_digest != perturbed.spec_digest {
        return Err(Error::Mismatch(format!(
            "trace trees come from different pipelines: {} vs {}",
            reference.spec_digest, perturbed.spec_digest
        )));
    }
    let mut alignment =
        NodeAlignment { aligned: Vec::new(), ref_only: Vec::new(), pert_only: Vec::new() };
    for (path, ref_node) in &reference.nodes {
        match perturbed.nodes.get(path) {
            Some(pert_node) => {
                if ref_node.state != pert_node.state {
                    return Err(Error::Mismatch(format!(
                        "path {path:?} holds state {} in one tree and {} in the other",
                        ref_node.state, pert_node.state
                    )));
                }
                alignment.aligned.push((ref_node, pert_node));
            }
            None => alignment.ref_only.push(ref_node),
        }
    }
    for (path, pert_node) in &perturbed.nodes {
        if !reference.nodes.contains_key(path) {
            alignment.pert_only.push(pert_node);
        }
    }
    Ok(alignment)
}

/// Per-module activation-divergence flags: true where exactly one of
/// the two runs invoked the module.
pub fn phantom_flags(
    modules: &[StateId],
    reference: &TraceTree,
    perturbed: &TraceTree,
) -> Vec<bool> {
    let a_ref = reference.activated_modules();
    let a_pert = perturbed.activated_modules();
    modules.iter().map(|m| a_ref.contains(m) != a_pert.contains(m)).collect()
}

/// Why a module failed its checks for one run pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FailureReasons {
    /// Ids of relations that failed, one entry per failing aligned pair.
    pub failed_relations: Vec<String>,
    /// A component invocation crashed or broke its output contract.
    pub component_error: bool,
    /// The module was invoked in only one of the runs, or at diverging
    /// tree positions.
    pub diverged: bool,
}

/// Score of one module over one run pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModuleOutcome {
    Pass,
    Fail(FailureReasons),
    /// The module was invoked in neither run.
    NotApplicable,
}

impl ModuleOutcome {
    pub fn is_fail(&self) -> bool {
        matches!(self, ModuleOutcome::Fail(_))
    }

    /// Pass bit where defined: `None` for modules outside the pair.
    pub fn as_bit(&self) -> Option<bool> {
        match self {
            ModuleOutcome::Pass => Some(true),
            ModuleOutcome::Fail(_) => Some(false),
            ModuleOutcome::NotApplicable => None,
        }
    }
}

/// Scores every module of the pipeline over an aligned run pair.
///
/// A module passes when all its aligned invocation pairs satisfy its
/// composite relation, no invocation errored, and no invocation exists
/// on one side only. Modules with no invocations in either run are
/// not applicable and stay out of the system score.
pub fn module_scores(
    spec: &PipelineSpec,
    alignment: &NodeAlignment<'_>,
) -> Result<Vec<ModuleOutcome>> {
    let mut outcomes = Vec::with_capacity(spec.states.len());
    for state in &spec.states {
        let mut reasons = FailureReasons::default();
        let mut seen = false;

        for (ref_node, pert_node) in &alignment.aligned {
            if ref_node.state != state.id {
                continue;
            }
            seen = true;
            if ref_node.is_component_error() || pert_node.is_component_error() {
                reasons.component_error = true;
                continue;
            }
            match (&ref_node.output, &pert_node.output) {
                (Some(ref_out), Some(pert_out)) => {
                    if let Some(composite) = &state.relations {
                        let outcome = composite_score(composite, ref_out, pert_out)?;
                        if let Some(id) = outcome.failed_relation {
                            reasons.failed_relations.push(id);
                        }
                    }
                }
                // Outputs are only absent on errored invocations; a
                // bare `None` in a hand-assembled tree counts the same.
                _ => reasons.component_error = true,
            }
        }
        for node in alignment.ref_only.iter().chain(&alignment.pert_only) {
            if node.state == state.id {
                seen = true;
                reasons.diverged = true;
                if node.is_component_error() {
                    reasons.component_error = true;
                }
            }
        }

        let outcome = if !seen {
            ModuleOutcome::NotApplicable
        } else if reasons == FailureReasons::default() {
            ModuleOutcome::Pass
        } else {
            ModuleOutcome::Fail(reasons)
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// End-to-end pass bit: every applicable module must pass its checks
/// and must not diverge in activation.
pub fn system_score(outcomes: &[ModuleOutcome], phantom: &[bool]) -> bool {
    debug_assert_eq!(outcomes.len(), phantom.len());
    outcomes
        .iter()
        .zip(phantom)
        .all(|(outcome, &diverged)| outcome.as_bit().unwrap_or(true) && !diverged)
}

/// Everything attribution needs from one (reference, perturbed) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairEvaluation {
    pub module_ids: Vec<StateId>,
    pub outcomes: Vec<ModuleOutcome>,
    pub phantom: Vec<bool>,
    pub activated_ref: Vec<bool>,
    pub activated_pert: Vec<bool>,
    pub system_pass: bool,
}

/// Aligns, scores, and summarizes one run pair.
pub fn evaluate_pair(
    spec: &PipelineSpec,
    reference: &TraceTree,
    perturbed: &TraceTree,
) -> Result<PairEvaluation> {
    let alignment = align(reference, perturbed)?;
    let outcomes = module_scores(spec, &alignment)?;
    let modules = spec.module_ids();
    let phantom = phantom_flags(&modules, reference, perturbed);
    let a_ref = reference.activated_modules();
    let a_pert = perturbed.activated_modules();
    let activated_ref: Vec<bool> = modules.iter().map(|m| a_ref.contains(m)).collect();
    let activated_pert: Vec<bool> = modules.iter().map(|m| a_pert.contains(m)).collect();
    let system_pass = system_score(&outcomes, &phantom);
    Ok(PairEvaluation {
        module_ids: modules,
        outcomes,
        phantom,
        activated_ref,
        activated_pert,
        system_pass,
    })
}

impl PairEvaluation {
    /// Copies a tree with per-node scores filled in from the module
    /// outcomes of this evaluation.
    pub fn apply_scores(&self, tree: &TraceTree) -> TraceTree {
        let mut scored = tree.clone();
        for node in scored.nodes.values_mut() {
            let idx = self.module_ids.iter().position(|m| *m == node.state);
            node.score = idx.and_then(|i| self.outcomes[i].as_bit());
        }
        scored
    }
}
