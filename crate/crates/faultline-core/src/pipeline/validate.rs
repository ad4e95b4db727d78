//! Static validation of pipeline declarations.
//!
//! Validation never executes components. It checks that the
//! declaration is internally consistent, that every referenced
//! component exists, that payload shapes line up across routing edges,
//! and that the state graph is acyclic. Errors make the pipeline
//! non-executable; warnings flag suspicious but legal declarations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::payload::PayloadKind;
use crate::pipeline::{
    ComponentRegistry, PipelineSpec, Projection, RoutePredicate, ShapeSpec, StateId,
};

/// Classification of a validation finding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IssueCode {
    EmptyPipeline,
    DuplicateState,
    UnknownState,
    MissingComponent,
    BadShape,
    BadPredicate,
    BadProjection,
    ShapeMismatch,
    BadRelation,
    Cycle,
    Unreachable,
    NoTerminals,
}

/// One finding, anchored to the state it concerns when applicable.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationIssue {
    pub code: IssueCode,
    pub state: Option<StateId>,
    pub message: String,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.state {
            Some(state) => write!(f, "[{state}] {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// All findings from one validation pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    /// A pipeline may execute only when no errors were found.
    pub fn executable(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, code: IssueCode, state: Option<&StateId>, message: String) {
        self.errors.push(ValidationIssue { code, state: state.cloned(), message });
    }

    fn warn(&mut self, code: IssueCode, state: Option<&StateId>, message: String) {
        self.warnings.push(ValidationIssue { code, state: state.cloned(), message });
    }
}

/// Validates a pipeline declaration against a component registry.
pub fn validate_pipeline(
    spec: &PipelineSpec,
    registry: &ComponentRegistry,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    if spec.states.is_empty() {
        report.error(IssueCode::EmptyPipeline, None, "pipeline declares no states".into());
        return report;
    }

    let mut ids = BTreeSet::new();
    for state in &spec.states {
        if !ids.insert(state.id.clone()) {
            report.error(
                IssueCode::DuplicateState,
                Some(&state.id),
                format!("state {} is declared more than once", state.id),
            );
        }
    }

    if spec.state(&spec.initial).is_none() {
        report.error(
            IssueCode::UnknownState,
            None,
            format!("initial state {} is not declared", spec.initial),
        );
    }
    for terminal in &spec.terminals {
        if spec.state(terminal).is_none() {
            report.error(
                IssueCode::UnknownState,
                None,
                format!("terminal state {terminal} is not declared"),
            );
        }
    }
    if spec.terminals.is_empty() {
        report.warn(
            IssueCode::NoTerminals,
            None,
            "no terminal states declared; the pipeline produces no end products".into(),
        );
    }

    for state in &spec.states {
        check_state(spec, registry, state, &mut report);
    }

    check_graph(spec, &mut report);
    report
}

fn check_state(
    spec: &PipelineSpec,
    registry: &ComponentRegistry,
    state: &crate::pipeline::StateDecl,
    report: &mut ValidationReport,
) {
    let id = &state.id;

    if !registry.contains(&state.function.component) {
        report.error(
            IssueCode::MissingComponent,
            Some(id),
            format!("component {:?} is not registered", state.function.component),
        );
    }

    for (label, shape) in
        [("input", &state.function.in_shape), ("output", &state.function.out_shape)]
    {
        if let Err(e) = shape.validate() {
            report.error(IssueCode::BadShape, Some(id), format!("{label} shape: {e}"));
        }
    }

    if let Some(composite) = &state.relations {
        if let Err(e) = composite.validate() {
            report.error(IssueCode::BadRelation, Some(id), e.to_string());
        } else {
            for relation in &composite.relations {
                if !relation.spec.accepts_kind(state.function.out_shape.kind) {
                    report.error(
                        IssueCode::BadRelation,
                        Some(id),
                        format!(
                            "relation {:?} cannot evaluate {} outputs",
                            relation.id, state.function.out_shape.kind
                        ),
                    );
                }
            }
        }
    }

    let source_kind = state.function.out_shape.kind;
    for (clause_idx, clause) in state.routing.iter().enumerate() {
        let detection_level = match &clause.predicate {
            RoutePredicate::Always => false,
            RoutePredicate::LabelIn(labels) => {
                if labels.is_empty() {
                    report.error(
                        IssueCode::BadPredicate,
                        Some(id),
                        format!("clause {clause_idx}: label set is empty"),
                    );
                }
                true
            }
            RoutePredicate::ConfidenceAtLeast(c) => {
                if !c.is_finite() || !(0.0..=1.0).contains(c) {
                    report.error(
                        IssueCode::BadPredicate,
                        Some(id),
                        format!("clause {clause_idx}: confidence threshold {c} outside [0, 1]"),
                    );
                }
                true
            }
        };
        if detection_level && source_kind != PayloadKind::DetectionSet {
            report.error(
                IssueCode::BadPredicate,
                Some(id),
                format!(
                    "clause {clause_idx}: detection predicate on {} output",
                    source_kind
                ),
            );
            continue;
        }
        if clause.targets.is_empty() {
            report.error(
                IssueCode::BadPredicate,
                Some(id),
                format!("clause {clause_idx}: no targets"),
            );
        }
        for target in &clause.targets {
            let Some(successor) = spec.state(&target.state) else {
                report.error(
                    IssueCode::UnknownState,
                    Some(id),
                    format!("clause {clause_idx}: target state {} is not declared", target.state),
                );
                continue;
            };
            check_edge_shapes(
                id,
                clause_idx,
                detection_level,
                &state.function.out_shape,
                target,
                &successor.function.in_shape,
                report,
            );
        }
    }
}

fn check_edge_shapes(
    source: &StateId,
    clause_idx: usize,
    detection_level: bool,
    source_out: &ShapeSpec,
    target: &crate::pipeline::RouteTarget,
    target_in: &ShapeSpec,
    report: &mut ValidationReport,
) {
    let edge = format!("clause {clause_idx} -> {}", target.state);
    match (&target.projection, detection_level) {
        (Projection::Identity, false) => {
            if target_in.kind != source_out.kind {
                report.error(
                    IssueCode::ShapeMismatch,
                    Some(source),
                    format!(
                        "{edge}: {} output routed into {} input",
                        source_out.kind, target_in.kind
                    ),
                );
            } else if !target_in.dims.is_empty()
                && !source_out.dims.is_empty()
                && target_in.dims != source_out.dims
            {
                report.error(
                    IssueCode::ShapeMismatch,
                    Some(source),
                    format!(
                        "{edge}: dims {:?} routed into dims {:?}",
                        source_out.dims, target_in.dims
                    ),
                );
            }
        }
        (Projection::Identity, true) => {
            if target_in.kind != PayloadKind::DetectionSet {
                report.error(
                    IssueCode::ShapeMismatch,
                    Some(source),
                    format!(
                        "{edge}: routed detection needs detection_set input, found {}",
                        target_in.kind
                    ),
                );
            }
        }
        (Projection::Crop { .. }, false) => {
            report.error(
                IssueCode::BadProjection,
                Some(source),
                format!("{edge}: crop projection requires detection routing"),
            );
        }
        (Projection::Crop { len }, true) => {
            if *len == 0 {
                report.error(
                    IssueCode::BadProjection,
                    Some(source),
                    format!("{edge}: crop length must be positive"),
                );
            }
            if target_in.kind != PayloadKind::Tensor {
                report.error(
                    IssueCode::ShapeMismatch,
                    Some(source),
                    format!("{edge}: crop produces tensor input, found {}", target_in.kind),
                );
            } else if !target_in.dims.is_empty() && target_in.dims != vec![*len] {
                report.error(
                    IssueCode::ShapeMismatch,
                    Some(source),
                    format!("{edge}: crop length {len} against dims {:?}", target_in.dims),
                );
            }
        }
    }
}

fn check_graph(spec: &PipelineSpec, report: &mut ValidationReport) {
    let mut adjacency: BTreeMap<&StateId, Vec<&StateId>> = BTreeMap::new();
    for state in &spec.states {
        let successors = adjacency.entry(&state.id).or_default();
        for clause in &state.routing {
            for target in &clause.targets {
                if spec.state(&target.state).is_some() {
                    successors.push(&target.state);
                }
            }
        }
    }

    // Cycle detection over the whole declaration, reachable or not.
    let mut color: BTreeMap<&StateId, u8> = BTreeMap::new();
    fn visit<'a>(
        node: &'a StateId,
        adjacency: &BTreeMap<&'a StateId, Vec<&'a StateId>>,
        color: &mut BTreeMap<&'a StateId, u8>,
    ) -> Option<StateId> {
        match color.get(node) {
            Some(1) => return Some(node.clone()),
            Some(2) => return None,
            _ => {}
        }
        color.insert(node, 1);
        if let Some(succ) = adjacency.get(node) {
            for next in succ {
                if let Some(hit) = visit(next, adjacency, color) {
                    return Some(hit);
                }
            }
        }
        color.insert(node, 2);
        None
    }
    for state in &spec.states {
        if let Some(on_cycle) = visit(&state.id, &adjacency, &mut color) {
            report.error(
                IssueCode::Cycle,
                Some(&on_cycle),
                format!("routing reaches state {on_cycle} cyclically"),
            );
            break;
        }
    }

    // Reachability from the initial state.
    if spec.state(&spec.initial).is_none() {
        return;
    }
    let mut seen: BTreeSet<&StateId> = BTreeSet::new();
    let mut queue = VecDeque::from([&spec.initial]);
    while let Some(node) = queue.pop_front() {
        if !seen.insert(node) {
            continue;
        }
        if let Some(succ) = adjacency.get(node) {
            queue.extend(succ.iter().copied());
        }
    }
    for state in &spec.states {
        if !seen.contains(&state.id) {
            report.warn(
                IssueCode::Unreachable,
                Some(&state.id),
                format!("state {} is unreachable from {}", state.id, spec.initial),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamorphic::{CompositeRelation, MetamorphicRelation, RelationSpec};
    use crate::payload::{Payload, PayloadKind};
    use crate::pipeline::{
        ComponentFunction, RouteClause, RoutePredicate, RouteTarget, RunContext, StateDecl,
    };
    use std::sync::Arc;

    struct Echo;
    impl crate::pipeline::Component for Echo {
        fn call(&self, input: &Payload, _ctx: &RunContext) -> crate::error::Result<Payload> {
            Ok(input.clone())
        }
    }

    fn registry(names: &[&str]) -> ComponentRegistry {
        let mut reg = ComponentRegistry::new();
        for name in names {
            reg.register(*name, Arc::new(Echo)).unwrap();
        }
        reg
    }

    fn classifier_state(id: &str, component: &str) -> StateDecl {
        StateDecl {
            id: id.into(),
            function: ComponentFunction {
                component: component.into(),
                in_shape: ShapeSpec::any(PayloadKind::Tensor),
                out_shape: ShapeSpec::any(PayloadKind::Label),
            },
            routing: vec![],
            relations: None,
        }
    }

    fn detector_state(id: &str, component: &str, targets: Vec<RouteTarget>) -> StateDecl {
        StateDecl {
            id: id.into(),
            function: ComponentFunction {
                component: component.into(),
                in_shape: ShapeSpec::any(PayloadKind::Tensor),
                out_shape: ShapeSpec::any(PayloadKind::DetectionSet),
            },
            routing: vec![RouteClause {
                predicate: RoutePredicate::LabelIn(["sign".to_string()].into()),
                targets,
            }],
            relations: None,
        }
    }

    #[test]
    fn well_formed_pipeline_validates_clean() {
        let spec = PipelineSpec {
            states: vec![
                detector_state("q0", "det", vec![RouteTarget::crop("q1", 8)]),
                classifier_state("q1", "cls"),
            ],
            initial: "q0".into(),
            terminals: ["q1".into()].into(),
        };
        let report = validate_pipeline(&spec, &registry(&["det", "cls"]));
        assert!(report.executable(), "{:?}", report.errors);
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    }

    #[test]
    fn missing_component_is_an_error() {
        let spec = PipelineSpec {
            states: vec![classifier_state("q0", "ghost")],
            initial: "q0".into(),
            terminals: ["q0".into()].into(),
        };
        let report = validate_pipeline(&spec, &registry(&[]));
        assert!(!report.executable());
        assert!(report.errors.iter().any(|e| e.code == IssueCode::MissingComponent));
    }

    #[test]
    fn unknown_route_target_is_an_error() {
        let spec = PipelineSpec {
            states: vec![detector_state("q0", "det", vec![RouteTarget::to("nowhere")])],
            initial: "q0".into(),
            terminals: ["q0".into()].into(),
        };
        let report = validate_pipeline(&spec, &registry(&["det"]));
        assert!(report.errors.iter().any(|e| e.code == IssueCode::UnknownState));
    }

    #[test]
    fn shape_mismatch_across_edge_is_an_error() {
        // Crop projection feeds a tensor, but the target wants labels.
        let mut bad = classifier_state("q1", "cls");
        bad.function.in_shape = ShapeSpec::any(PayloadKind::Label);
        let spec = PipelineSpec {
            states: vec![detector_state("q0", "det", vec![RouteTarget::crop("q1", 8)]), bad],
            initial: "q0".into(),
            terminals: ["q1".into()].into(),
        };
        let report = validate_pipeline(&spec, &registry(&["det", "cls"]));
        assert!(report.errors.iter().any(|e| e.code == IssueCode::ShapeMismatch));
    }

    #[test]
    fn detection_predicate_on_label_output_is_an_error() {
        let mut state = classifier_state("q0", "cls");
        state.routing = vec![RouteClause {
            predicate: RoutePredicate::ConfidenceAtLeast(0.5),
            targets: vec![RouteTarget::to("q0")],
        }];
        let spec = PipelineSpec {
            states: vec![state],
            initial: "q0".into(),
            terminals: BTreeSet::new(),
        };
        let report = validate_pipeline(&spec, &registry(&["cls"]));
        assert!(report.errors.iter().any(|e| e.code == IssueCode::BadPredicate));
    }

    #[test]
    fn cycles_are_errors_and_unreachable_states_warn() {
        let mut a = classifier_state("a", "cls");
        a.function.out_shape = ShapeSpec::any(PayloadKind::Tensor);
        a.routing = vec![RouteClause {
            predicate: RoutePredicate::Always,
            targets: vec![RouteTarget::to("b")],
        }];
        let mut b = classifier_state("b", "cls");
        b.function.out_shape = ShapeSpec::any(PayloadKind::Tensor);
        b.routing = vec![RouteClause {
            predicate: RoutePredicate::Always,
            targets: vec![RouteTarget::to("a")],
        }];
        let island = classifier_state("island", "cls");
        let spec = PipelineSpec {
            states: vec![a, b, island],
            initial: "a".into(),
            terminals: ["b".into()].into(),
        };
        let report = validate_pipeline(&spec, &registry(&["cls"]));
        assert!(report.errors.iter().any(|e| e.code == IssueCode::Cycle));
        assert!(report
            .warnings
            .iter()
            .any(|w| w.code == IssueCode::Unreachable && w.state == Some("island".into())));
    }

    #[test]
    fn relation_kind_mismatch_is_an_error() {
        let mut state = classifier_state("q0", "cls");
        state.relations = Some(CompositeRelation::new(vec![MetamorphicRelation::new(
            "wrong",
            RelationSpec::OcrDistance { tau: -2 },
        )]));
        let spec = PipelineSpec {
            states: vec![state],
            initial: "q0".into(),
            terminals: ["q0".into()].into(),
        };
        let report = validate_pipeline(&spec, &registry(&["cls"]));
        assert!(report.errors.iter().any(|e| e.code == IssueCode::BadRelation));
    }
}
