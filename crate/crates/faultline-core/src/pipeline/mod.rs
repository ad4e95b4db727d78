//! The pipeline model: states wrapping components, routing between
//! them, and the shapes of the values they exchange.
//!
//! A pipeline is a rooted, acyclic state machine. Execution starts at
//! the initial state with an external input; each state invokes its
//! component and routes (parts of) the output to successor states.
//! Conditional routing over detection sets spawns one successor
//! invocation per selected detection, which is how a single run fans
//! out into a tree of component calls.

mod exec;
mod validate;

pub use exec::{
    execute, execute_run, route, ActivePerturbation, Component, ComponentRegistry, RunContext,
    RunSetup,
};
pub use validate::{validate_pipeline, IssueCode, ValidationIssue, ValidationReport};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamorphic::CompositeRelation;
use crate::payload::{Payload, PayloadKind};

/// Identifier of a pipeline state.
#[derive(
    Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct StateId(String);

impl StateId {
    pub fn new(id: impl Into<String>) -> Self {
        StateId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StateId {
    fn from(s: &str) -> Self {
        StateId::new(s)
    }
}

/// Declared shape of a payload at a state boundary.
///
/// `dims` refines kinds that carry dimensions (distribution length,
/// tensor shape, mask stack extents); an empty `dims` accepts any
/// dimensions of the right kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: PayloadKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dims: Vec<usize>,
}

impl ShapeSpec {
    pub fn any(kind: PayloadKind) -> Self {
        ShapeSpec { kind, dims: Vec::new() }
    }

    pub fn with_dims(kind: PayloadKind, dims: Vec<usize>) -> Self {
        ShapeSpec { kind, dims }
    }

    /// Whether a concrete payload conforms to this declaration.
    pub fn accepts(&self, payload: &Payload) -> bool {
        payload.kind() == self.kind && (self.dims.is_empty() || payload.dims() == self.dims)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let arity_ok = match self.kind {
            PayloadKind::Label | PayloadKind::Text | PayloadKind::DetectionSet => {
                self.dims.is_empty()
            }
            PayloadKind::Distribution => self.dims.len() <= 1,
            PayloadKind::MaskStack => self.dims.is_empty() || self.dims.len() == 3,
            PayloadKind::Tensor => true,
        };
        if !arity_ok {
            return Err(Error::Config(format!(
                "shape {:?} cannot constrain kind {}",
                self.dims, self.kind
            )));
        }
        if !self.dims.is_empty() && self.dims.iter().product::<usize>() == 0 {
            return Err(Error::Config(format!("shape {:?} has a zero extent", self.dims)));
        }
        Ok(())
    }
}

/// The component a state invokes, with its declared interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentFunction {
    /// Key into the component registry.
    pub component: String,
    pub in_shape: ShapeSpec,
    pub out_shape: ShapeSpec,
}

/// Condition deciding whether (and for which parts of) an output a
/// routing clause fires.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePredicate {
    /// Route the whole output unconditionally.
    Always,
    /// Route each detection whose class is in the set.
    LabelIn(BTreeSet<String>),
    /// Route each detection at or above the confidence threshold.
    ConfidenceAtLeast(f64),
}

/// How a routed value is adapted to the successor's input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Pass the selected value through. Detection routing wraps the
    /// selected detection in a singleton detection set.
    Identity,
    /// Derive a fixed-length crop tensor from the selected detection's
    /// box and class. Only valid on detection routing.
    Crop { len: usize },
}

/// One routing target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteTarget {
    pub state: StateId,
    pub projection: Projection,
}

impl RouteTarget {
    pub fn to(state: impl Into<StateId>) -> Self {
        RouteTarget { state: state.into(), projection: Projection::Identity }
    }

    pub fn crop(state: impl Into<StateId>, len: usize) -> Self {
        RouteTarget { state: state.into(), projection: Projection::Crop { len } }
    }
}

/// A predicate together with the targets it feeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteClause {
    pub predicate: RoutePredicate,
    pub targets: Vec<RouteTarget>,
}

/// One state of the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDecl {
    pub id: StateId,
    pub function: ComponentFunction,
    /// Clauses are applied in order; each spawns its own successor
    /// invocations. Leaf states have no clauses.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routing: Vec<RouteClause>,
    /// Relations checked for this state's outputs across run pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<CompositeRelation>,
}

/// The whole pipeline declaration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    /// Declaration order defines module order in reports.
    pub states: Vec<StateDecl>,
    pub initial: StateId,
    /// States whose outputs are the pipeline's end products.
    pub terminals: BTreeSet<StateId>,
}

impl PipelineSpec {
    pub fn state(&self, id: &StateId) -> Option<&StateDecl> {
        self.states.iter().find(|s| &s.id == id)
    }

    pub fn index_of(&self, id: &StateId) -> Option<usize> {
        self.states.iter().position(|s| &s.id == id)
    }

    /// Module identifiers in declaration order.
    pub fn module_ids(&self) -> Vec<StateId> {
        self.states.iter().map(|s| s.id.clone()).collect()
    }

    /// Canonical JSON encoding, the basis of the pipeline digest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("pipeline serialization cannot fail")
    }

    /// Hex SHA-256 digest identifying this exact declaration.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }
}
