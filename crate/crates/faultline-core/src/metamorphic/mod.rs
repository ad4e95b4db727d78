//! Metamorphic checking: metric kernels and composite relations.
//!
//! A metamorphic relation compares a component's output on an original
//! input against its output on a perturbed variant and yields a pass
//! bit. Relations never need ground-truth labels; they only encode how
//! outputs are allowed to move when the input moves.

pub mod metrics;
pub mod relations;

pub use metrics::{bbox_iou, heaviside, kronecker, levenshtein, linf_deviation, mask_iou};
pub use relations::{
    composite_score, detector_composite, match_detections, CompositeOutcome, CompositeRelation,
    DetectionMatch, DetectorParams, MatchPair, MetamorphicRelation, RelationKind, RelationSpec,
};
