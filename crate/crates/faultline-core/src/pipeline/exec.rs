//! Pipeline execution.
//!
//! Executing a pipeline over one input produces a trace tree: one node
//! per component invocation, children ordered by routing ordinals. The
//! executor is deterministic by construction; all randomness flows
//! through seeds derived from the campaign seed with stable hashing.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hashing;
use crate::payload::{Detection, Payload};
use crate::perturb::{PerturbationKind, PerturbationSpec};
use crate::pipeline::{PipelineSpec, Projection, RouteClause, RoutePredicate, StateId};
use crate::trace::{TraceNode, TraceTree, FLAG_COMPONENT_ERROR};

/// Hard ceiling on invocations per run, a guard against declarations
/// that slipped past validation.
const MAX_NODES_PER_RUN: usize = 100_000;

/// Perturbation metadata visible to components during a run.
///
/// Mock components use it to trigger configured fault behavior; real
/// components would ignore it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivePerturbation {
    pub id: String,
    pub kind: PerturbationKind,
    pub severity: u8,
}

/// Per-run context handed to every component invocation.
#[derive(Clone, Debug)]
pub struct RunContext {
    /// Seed unique to this (campaign, input, perturbation) run.
    pub run_seed: u64,
    /// Index of the input within the campaign dataset.
    pub input_ref: u64,
    /// Present on perturbed runs, absent on reference runs.
    pub perturbation: Option<ActivePerturbation>,
}

/// A callable pipeline component.
///
/// Implementations must be pure up to `ctx`: identical input and
/// context yield an identical result.
pub trait Component: Send + Sync {
    fn call(&self, input: &Payload, ctx: &RunContext) -> Result<Payload>;
}

/// Named collection of components a pipeline draws from.
#[derive(Clone, Default)]
pub struct ComponentRegistry {
    components: BTreeMap<String, Arc<dyn Component>>,
}

impl ComponentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a component under a unique name.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        component: Arc<dyn Component>,
    ) -> Result<()> {
        let name = name.into();
        if self.components.contains_key(&name) {
            return Err(Error::Config(format!("component {name:?} registered twice")));
        }
        self.components.insert(name, component);
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.components.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Component>> {
        self.components.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.components.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for ComponentRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.components.keys()).finish()
    }
}

/// Identity of one pipeline run within a campaign.
#[derive(Clone, Debug)]
pub struct RunSetup<'a> {
    pub run_id: String,
    pub input_ref: u64,
    pub campaign_seed: u64,
    /// `None` executes the reference run; `Some` applies the
    /// perturbation at its injection state (the initial state unless
    /// the perturbation targets an internal edge).
    pub perturbation: Option<&'a PerturbationSpec>,
}

/// Executes a reference run with a derived run id.
pub fn execute(
    spec: &PipelineSpec,
    input: &Payload,
    registry: &ComponentRegistry,
    seed: u64,
) -> Result<TraceTree> {
    let setup = RunSetup {
        run_id: format!("run-{seed:016x}"),
        input_ref: 0,
        campaign_seed: seed,
        perturbation: None,
    };
    execute_run(spec, registry, input, &setup)
}

/// Executes one run and returns its trace tree.
///
/// Component failures do not abort the run: the failing invocation is
/// recorded as a node flagged `component-error` with no output and no
/// successors. Configuration-level problems (unknown states, payloads
/// that do not fit declared shapes at the root, incompatible
/// perturbations) abort with an error.
pub fn execute_run(
    spec: &PipelineSpec,
    registry: &ComponentRegistry,
    input: &Payload,
    setup: &RunSetup,
) -> Result<TraceTree> {
    input.validate()?;
    let initial = spec
        .state(&spec.initial)
        .ok_or_else(|| Error::Config(format!("initial state {} is not declared", spec.initial)))?;
    // Perturbations preserve kind and dims, so the raw input must fit
    // the initial state on perturbed runs too.
    if !initial.function.in_shape.accepts(input) {
        return Err(Error::Config(format!(
            "input of kind {} does not fit initial state {}",
            input.kind(),
            spec.initial
        )));
    }

    let inject_at: Option<&StateId> = setup
        .perturbation
        .map(|g| g.inject_at.as_ref().unwrap_or(&spec.initial));
    let ctx = RunContext {
        run_seed: hashing::hash64(
            "run-seed",
            &[
                &setup.campaign_seed.to_le_bytes(),
                &setup.input_ref.to_le_bytes(),
                setup.perturbation.map(|g| g.id.as_bytes()).unwrap_or(b""),
            ],
        ),
        input_ref: setup.input_ref,
        perturbation: setup.perturbation.map(|g| ActivePerturbation {
            id: g.id.clone(),
            kind: g.kind,
            severity: g.severity,
        }),
    };

    let mut nodes: BTreeMap<String, TraceNode> = BTreeMap::new();
    // Entries carry (path, state, payload); children are pushed in
    // reverse ordinal order so the stack pops them in routing order.
    let mut stack: Vec<(String, StateId, Payload)> =
        vec![("/".to_string(), spec.initial.clone(), input.clone())];

    while let Some((path, state_id, mut payload)) = stack.pop() {
        if nodes.len() >= MAX_NODES_PER_RUN {
            return Err(Error::Inconsistent(format!(
                "run {} exceeded {MAX_NODES_PER_RUN} invocations",
                setup.run_id
            )));
        }
        let decl = spec.state(&state_id).ok_or_else(|| {
            Error::Config(format!("route target {state_id} is not declared"))
        })?;

        if let (Some(g), Some(target)) = (setup.perturbation, inject_at) {
            if *target == state_id {
                payload = crate::perturb::apply(g, &payload, setup.campaign_seed)?;
            }
        }

        let input_digest = payload.digest();
        let component = registry.get(&decl.function.component).ok_or_else(|| {
            Error::Config(format!(
                "component {:?} for state {state_id} is not registered",
                decl.function.component
            ))
        })?;

        let result = component.call(&payload, &ctx);
        let mut node = TraceNode {
            state: state_id.clone(),
            path: path.clone(),
            input_digest,
            output: None,
            score: None,
            flags: Default::default(),
        };

        match result {
            Err(_) => {
                node.flags.insert(FLAG_COMPONENT_ERROR.to_string());
            }
            Ok(output) => {
                let contract_ok =
                    output.validate().is_ok() && decl.function.out_shape.accepts(&output);
                if !contract_ok {
                    node.flags.insert(FLAG_COMPONENT_ERROR.to_string());
                } else {
                    let children = route(&decl.routing, &output)?;
                    for (ordinal, (child_state, child_payload)) in
                        children.into_iter().enumerate().rev()
                    {
                        let child_path = if path == "/" {
                            format!("/{ordinal}:{child_state}")
                        } else {
                            format!("{path}/{ordinal}:{child_state}")
                        };
                        stack.push((child_path, child_state, child_payload));
                    }
                    node.output = Some(output);
                }
            }
        }
        nodes.insert(path, node);
    }

    Ok(TraceTree {
        run_id: setup.run_id.clone(),
        seed: setup.campaign_seed,
        input_ref: setup.input_ref,
        perturbation_ref: setup.perturbation.map(|g| g.id.clone()),
        spec_digest: spec.digest(),
        nodes,
    })
}

/// Applies a state's routing clauses to its output.
///
/// Returns successor invocations in deterministic order: clauses in
/// declaration order, selected detections in index order, targets in
/// declaration order. A detection selected by several clauses spawns
/// one invocation per clause.
pub fn route(clauses: &[RouteClause], output: &Payload) -> Result<Vec<(StateId, Payload)>> {
    let mut successors = Vec::new();
    for clause in clauses {
        match &clause.predicate {
            RoutePredicate::Always => {
                for target in &clause.targets {
                    successors
                        .push((target.state.clone(), project_whole(&target.projection, output)?));
                }
            }
            RoutePredicate::LabelIn(labels) => {
                for det in select_detections(output, |d| labels.contains(&d.class))? {
                    for target in &clause.targets {
                        successors
                            .push((target.state.clone(), project_detection(&target.projection, det)));
                    }
                }
            }
            RoutePredicate::ConfidenceAtLeast(threshold) => {
                for det in select_detections(output, |d| d.confidence >= *threshold)? {
                    for target in &clause.targets {
                        successors
                            .push((target.state.clone(), project_detection(&target.projection, det)));
                    }
                }
            }
        }
    }
    Ok(successors)
}

fn select_detections(
    output: &Payload,
    keep: impl Fn(&Detection) -> bool,
) -> Result<Vec<&Detection>> {
    match output {
        Payload::DetectionSet { detections } => {
            Ok(detections.iter().filter(|d| keep(d)).collect())
        }
        other => Err(Error::Config(format!(
            "detection routing applied to {} output",
            other.kind()
        ))),
    }
}

fn project_whole(projection: &Projection, output: &Payload) -> Result<Payload> {
    match projection {
        Projection::Identity => Ok(output.clone()),
        Projection::Crop { .. } => Err(Error::Config(
            "crop projection requires detection routing".into(),
        )),
    }
}

fn project_detection(projection: &Projection, det: &Detection) -> Payload {
    match projection {
        Projection::Identity => Payload::DetectionSet { detections: vec![det.clone()] },
        Projection::Crop { len } => crop_tensor(det, *len),
    }
}

/// Derives the crop a detection would produce.
///
/// Stands in for actual pixel cropping: the tensor is a pure function
/// of the detection's box and class, so identical detections crop
/// identically and moved boxes crop differently. Confidence does not
/// influence the crop.
fn crop_tensor(det: &Detection, len: usize) -> Payload {
    let geometry = [
        det.x.to_bits().to_le_bytes(),
        det.y.to_bits().to_le_bytes(),
        det.w.to_bits().to_le_bytes(),
        det.h.to_bits().to_le_bytes(),
    ];
    let data = (0..len)
        .map(|i| {
            let cell = hashing::hash64(
                "crop-cell",
                &[
                    det.class.as_bytes(),
                    &geometry[0],
                    &geometry[1],
                    &geometry[2],
                    &geometry[3],
                    &(i as u64).to_le_bytes(),
                ],
            );
            hashing::unit_fraction(cell)
        })
        .collect();
    Payload::Tensor { shape: vec![len], data }
}
