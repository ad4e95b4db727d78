//! Campaign orchestration: run every input against every
//! perturbation, score the pairs, and accumulate attribution.
//!
//! All scheduling is deterministic. Inputs are processed
//! independently (optionally in parallel), results are reassembled in
//! input order, and run seeds derive from the campaign seed, so the
//! emitted artifacts are byte-identical for a given plan regardless
//! of thread count.

use faultline_core::attribution::{AttributionReport, CampaignMeta, FCAccumulator};
use faultline_core::hashing;
use faultline_core::metamorphic::levenshtein;
use faultline_core::payload::Payload;
use faultline_core::perturb::{PerturbationSet, PerturbationSpec};
use faultline_core::pipeline::{
    execute_run, validate_pipeline, ComponentRegistry, PipelineSpec, RunSetup,
};
use faultline_core::trace::{evaluate_pair, TraceTree};
use faultline_core::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::store::{events_from_tree, EventRecord};

/// Everything needed to execute a campaign.
pub struct CampaignPlan {
    pub pipeline: PipelineSpec,
    pub registry: ComponentRegistry,
    pub dataset: Vec<Payload>,
    pub perturbations: PerturbationSet,
    pub seed: u64,
    /// Worker threads; values below 2 run sequentially.
    pub jobs: usize,
}

/// One scheduled run, for replay and audit tooling.
#[derive(Clone, Debug, PartialEq)]
pub struct RunDescriptor {
    pub run_id: String,
    pub input_ref: u64,
    /// Index into the perturbation set, `None` for the reference run.
    pub perturbation: Option<usize>,
}

/// Per-input robustness under the perturbation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub input_ref: u64,
    pub pairs: u64,
    pub passes: u64,
    /// Fraction of pairs whose system-level comparison passed.
    pub robustness: f64,
    /// Mean edit distance across terminal text outputs, when the
    /// pipeline has any.
    pub avg_distance: Option<f64>,
}

/// Everything a finished campaign produced.
pub struct CampaignOutcome {
    pub campaign_id: String,
    pub accumulator: FCAccumulator,
    pub report: AttributionReport<Real>,
    pub robustness: Vec<RobustnessRow>,
    pub events: Vec<EventRecord>,
}

/// Content-derived campaign identifier.
///
/// Hashes the pipeline declaration, the seed, the perturbation set,
/// and every input payload, so two campaigns share an id exactly when
/// they would produce the same runs.
pub fn campaign_id(plan: &CampaignPlan) -> String {
    let mut parts: Vec<Vec<u8>> = Vec::new();
    parts.push(plan.pipeline.digest().into_bytes());
    parts.push(plan.seed.to_le_bytes().to_vec());
    for spec in &plan.perturbations.specs {
        parts.push(spec.id.clone().into_bytes());
        parts.push(spec.kind.to_string().into_bytes());
        parts.push(vec![spec.severity]);
        parts.push(spec.seed.to_le_bytes().to_vec());
    }
    for input in &plan.dataset {
        parts.push(input.digest().into_bytes());
    }
    let views: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
    hex::encode(hashing::seed_bytes("campaign-id", &views))[..12].to_string()
}

fn reference_run_id(input_ref: u64) -> String {
    format!("ref-{input_ref:05}")
}

fn perturbed_run_id(input_ref: u64, perturbation_id: &str) -> String {
    format!("prt-{input_ref:05}-{perturbation_id}")
}

/// The full run schedule, in emission order.
pub fn run_descriptors(plan: &CampaignPlan) -> Vec<RunDescriptor> {
    let mut descriptors = Vec::new();
    for input_ref in 0..plan.dataset.len() as u64 {
        descriptors.push(RunDescriptor {
            run_id: reference_run_id(input_ref),
            input_ref,
            perturbation: None,
        });
        for (index, spec) in plan.perturbations.specs.iter().enumerate() {
            descriptors.push(RunDescriptor {
                run_id: perturbed_run_id(input_ref, &spec.id),
                input_ref,
                perturbation: Some(index),
            });
        }
    }
    descriptors
}

fn validate_plan(plan: &CampaignPlan) -> Result<()> {
    let report = validate_pipeline(&plan.pipeline, &plan.registry);
    if !report.executable() {
        let lines: Vec<String> = report.errors.iter().map(|i| format!("  {i}")).collect();
        return Err(HarnessError::Validation(lines.join("\n")));
    }
    if plan.dataset.is_empty() {
        return Err(HarnessError::Config("dataset is empty".into()));
    }
    if plan.perturbations.specs.is_empty() {
        return Err(HarnessError::Config("perturbation set is empty".into()));
    }
    plan.perturbations.validate().map_err(HarnessError::Core)?;
    for spec in &plan.perturbations.specs {
        if let Some(state) = &spec.inject_at {
            if plan.pipeline.state(state).is_none() {
                return Err(HarnessError::Config(format!(
                    "perturbation {} injects at undeclared state {state}",
                    spec.id
                )));
            }
        } else {
            for (index, input) in plan.dataset.iter().enumerate() {
                if !spec.kind.accepts(input.kind()) {
                    return Err(HarnessError::Config(format!(
                        "perturbation {} ({}) cannot apply to input {index} ({})",
                        spec.id,
                        spec.kind,
                        input.kind()
                    )));
                }
            }
        }
    }
    Ok(())
}

struct InputBundle {
    trees: Vec<TraceTree>,
    accumulator: FCAccumulator,
    row: RobustnessRow,
}

fn process_input(plan: &CampaignPlan, input_ref: u64, input: &Payload) -> Result<InputBundle> {
    let reference = execute_run(
        &plan.pipeline,
        &plan.registry,
        input,
        &RunSetup {
            run_id: reference_run_id(input_ref),
            input_ref,
            campaign_seed: plan.seed,
            perturbation: None,
        },
    )?;

    let mut accumulator = FCAccumulator::new(plan.pipeline.module_ids());
    let mut trees = vec![reference.clone()];
    let mut passes = 0u64;
    let mut distance_sum = 0.0f64;
    let mut distance_pairs = 0u64;

    for spec in &plan.perturbations.specs {
        let perturbed = execute_run(
            &plan.pipeline,
            &plan.registry,
            input,
            &RunSetup {
                run_id: perturbed_run_id(input_ref, &spec.id),
                input_ref,
                campaign_seed: plan.seed,
                perturbation: Some(spec),
            },
        )?;
        let evaluation = evaluate_pair(&plan.pipeline, &reference, &perturbed)?;
        accumulator.record(&evaluation)?;
        if evaluation.system_pass {
            passes += 1;
        }
        if let Some(distance) = terminal_text_distance(&plan.pipeline, &reference, &perturbed) {
            distance_sum += distance;
            distance_pairs += 1;
        }
        trees.push(evaluation.apply_scores(&perturbed));
    }

    let pairs = plan.perturbations.specs.len() as u64;
    let row = RobustnessRow {
        input_ref,
        pairs,
        passes,
        robustness: passes as f64 / pairs as f64,
        avg_distance: (distance_pairs > 0).then(|| distance_sum / distance_pairs as f64),
    };
    Ok(InputBundle { trees, accumulator, row })
}

/// Mean edit distance over terminal text outputs present in both
/// runs at the same tree position; `None` when the pair has none.
fn terminal_text_distance(
    spec: &PipelineSpec,
    reference: &TraceTree,
    perturbed: &TraceTree,
) -> Option<f64> {
    let mut sum = 0usize;
    let mut count = 0usize;
    for (path, ref_node) in &reference.nodes {
        if !spec.terminals.contains(&ref_node.state) {
            continue;
        }
        let Some(pert_node) = perturbed.nodes.get(path) else { continue };
        let (Some(Payload::Text { value: a }), Some(Payload::Text { value: b })) =
            (&ref_node.output, &pert_node.output)
        else {
            continue;
        };
        sum += levenshtein(a, b);
        count += 1;
    }
    (count > 0).then(|| sum as f64 / count as f64)
}

/// Executes the whole campaign and assembles its artifacts.
pub fn run_campaign(plan: &CampaignPlan) -> Result<CampaignOutcome> {
    validate_plan(plan)?;
    let id = campaign_id(plan);

    let indexed: Vec<(u64, &Payload)> =
        plan.dataset.iter().enumerate().map(|(i, p)| (i as u64, p)).collect();
    let bundles: Vec<InputBundle> = if plan.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            indexed
                .par_iter()
                .map(|(input_ref, input)| process_input(plan, *input_ref, input))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        indexed
            .iter()
            .map(|(input_ref, input)| process_input(plan, *input_ref, input))
            .collect::<Result<Vec<_>>>()?
    };

    let mut accumulator = FCAccumulator::new(plan.pipeline.module_ids());
    let mut robustness = Vec::with_capacity(bundles.len());
    let mut events = Vec::new();
    let mut ts = 0u64;
    for bundle in &bundles {
        accumulator.merge(&bundle.accumulator)?;
        robustness.push(bundle.row.clone());
        for tree in &bundle.trees {
            let records = events_from_tree(&id, tree, ts);
            ts += records.len() as u64;
            events.extend(records);
        }
    }

    let mut report = accumulator.finalize::<Real>()?;
    report.meta = CampaignMeta {
        campaign_id: id.clone(),
        seed: plan.seed,
        dataset_size: plan.dataset.len() as u64,
        perturbations: plan.perturbations.specs.len() as u64,
    };

    Ok(CampaignOutcome { campaign_id: id, accumulator, report, robustness, events })
}

/// Re-executes one scheduled run from the plan, reproducing what the
/// campaign logged for it, including pair scores on perturbed runs.
pub fn reproduce_run(plan: &CampaignPlan, descriptor: &RunDescriptor) -> Result<TraceTree> {
    let input = plan
        .dataset
        .get(descriptor.input_ref as usize)
        .ok_or_else(|| HarnessError::Config(format!("input {} not in dataset", descriptor.input_ref)))?;
    let reference = execute_run(
        &plan.pipeline,
        &plan.registry,
        input,
        &RunSetup {
            run_id: reference_run_id(descriptor.input_ref),
            input_ref: descriptor.input_ref,
            campaign_seed: plan.seed,
            perturbation: None,
        },
    )?;
    let Some(pert_index) = descriptor.perturbation else {
        return Ok(reference);
    };
    let spec: &PerturbationSpec =
        plan.perturbations.specs.get(pert_index).ok_or_else(|| {
            HarnessError::Config(format!("perturbation index {pert_index} out of range"))
        })?;
    let perturbed = execute_run(
        &plan.pipeline,
        &plan.registry,
        input,
        &RunSetup {
            run_id: descriptor.run_id.clone(),
            input_ref: descriptor.input_ref,
            campaign_seed: plan.seed,
            perturbation: Some(spec),
        },
    )?;
    let evaluation = evaluate_pair(&plan.pipeline, &reference, &perturbed)?;
    Ok(evaluation.apply_scores(&perturbed))
}
