//! Declarative relations and their composite evaluation.
//!
//! Each [`MetamorphicRelation`] names an extractor over a pair of
//! payloads (original run vs perturbed run) plus the thresholds that
//! turn the extracted quantity into a pass bit. A [`CompositeRelation`]
//! is the conjunction of several relations attached to one pipeline
//! state; it fails as soon as any member fails.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamorphic::metrics::{
    bbox_iou, heaviside, levenshtein, linf_deviation, mask_iou,
};
use crate::payload::{Detection, MaskStack, Payload, PayloadKind};

/// The comparison primitive a relation reduces to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    /// Equality indicator.
    Delta,
    /// Threshold indicator.
    Heaviside,
}

/// What a relation measures and the thresholds it applies.
///
/// Bounded-deviation relations follow a single convention: the measured
/// deviation `d` passes while `d <= bound`, expressed as the threshold
/// check `-d >= -bound`. This keeps "larger extracted value is better"
/// true for every heaviside relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "extractor", rename_all = "snake_case")]
pub enum RelationSpec {
    /// Output labels must be identical. An optional vocabulary rejects
    /// labels from outside the expected domain as evaluation errors.
    LabelMatch {
        #[serde(default)]
        vocab: Option<BTreeSet<String>>,
    },
    /// Componentwise deviation of a distribution or tensor stays within
    /// `tau_max` in the infinity norm.
    DeviationLinf { tau_max: f64 },
    /// Every perturbed detection must match some original detection
    /// (no spurious objects). Dropped originals are allowed.
    DetectionSubset { iou_floor: f64 },
    /// Matched detections must keep overlapping: IoU above `tau`
    /// (strictly when `strict`, inclusively otherwise).
    DetectionIouPersist { iou_floor: f64, tau: f64, strict: bool },
    /// Matched detections must keep their class labels.
    DetectionLabels { iou_floor: f64 },
    /// Matched detections must keep their confidence within `tol`.
    DetectionConfidence { iou_floor: f64, tol: f64 },
    /// Mask stacks must be bit-identical.
    SegmentationStrict,
    /// Per-class mask overlap must reach the class threshold. A single
    /// entry applies to every class.
    SegmentationIou { taus: Vec<f64> },
    /// Edit distance between text outputs stays within `-tau`
    /// (`tau` is given negated, so `tau = -2` tolerates distance 2).
    OcrDistance { tau: i64 },
}

impl RelationSpec {
    /// The primitive this relation reduces to.
    pub fn kind(&self) -> RelationKind {
        match self {
            RelationSpec::LabelMatch { .. } | RelationSpec::SegmentationStrict => {
                RelationKind::Delta
            }
            _ => RelationKind::Heaviside,
        }
    }

    /// Whether the relation can evaluate outputs of the given kind.
    pub fn accepts_kind(&self, kind: PayloadKind) -> bool {
        match self {
            RelationSpec::LabelMatch { .. } => kind == PayloadKind::Label,
            RelationSpec::DeviationLinf { .. } => {
                kind == PayloadKind::Distribution || kind == PayloadKind::Tensor
            }
            RelationSpec::DetectionSubset { .. }
            | RelationSpec::DetectionIouPersist { .. }
            | RelationSpec::DetectionLabels { .. }
            | RelationSpec::DetectionConfidence { .. } => kind == PayloadKind::DetectionSet,
            RelationSpec::SegmentationStrict | RelationSpec::SegmentationIou { .. } => {
                kind == PayloadKind::MaskStack
            }
            RelationSpec::OcrDistance { .. } => kind == PayloadKind::Text,
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
            Ok(())
        };
        match self {
            RelationSpec::LabelMatch { vocab } => {
                if let Some(v) = vocab {
                    if v.is_empty() {
                        return Err(Error::Config("label vocabulary is empty".into()));
                    }
                }
                Ok(())
            }
            RelationSpec::DeviationLinf { tau_max } => {
                if !tau_max.is_finite() || *tau_max < 0.0 {
                    return Err(Error::Config(format!(
                        "deviation bound {tau_max} must be nonnegative"
                    )));
                }
                Ok(())
            }
            RelationSpec::DetectionSubset { iou_floor }
            | RelationSpec::DetectionLabels { iou_floor } => unit("iou_floor", *iou_floor),
            RelationSpec::DetectionIouPersist { iou_floor, tau, .. } => {
                unit("iou_floor", *iou_floor)?;
                unit("tau", *tau)
            }
            RelationSpec::DetectionConfidence { iou_floor, tol } => {
                unit("iou_floor", *iou_floor)?;
                if !tol.is_finite() || *tol < 0.0 {
                    return Err(Error::Config(format!(
                        "confidence tolerance {tol} must be nonnegative"
                    )));
                }
                Ok(())
            }
            RelationSpec::SegmentationStrict => Ok(()),
            RelationSpec::SegmentationIou { taus } => {
                if taus.is_empty() {
                    return Err(Error::Config("per-class thresholds are empty".into()));
                }
                taus.iter().try_for_each(|t| unit("segmentation tau", *t))
            }
            RelationSpec::OcrDistance { tau } => {
                if *tau > 0 {
                    return Err(Error::Config(format!(
                        "edit-distance threshold {tau} must be nonpositive"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// A named relation as attached to a pipeline state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetamorphicRelation {
    pub id: String,
    #[serde(flatten)]
    pub spec: RelationSpec,
}

impl MetamorphicRelation {
    pub fn new(id: impl Into<String>, spec: RelationSpec) -> Self {
        MetamorphicRelation { id: id.into(), spec }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Config("relation id is empty".into()));
        }
        self.spec
            .validate()
            .map_err(|e| Error::Config(format!("relation {}: {e}", self.id)))
    }

    /// Evaluates the relation over a pair of outputs.
    pub fn evaluate(&self, reference: &Payload, perturbed: &Payload) -> Result<bool> {
        let fail = |msg: String| Error::Eval(format!("relation {}: {msg}", self.id));
        match &self.spec {
            RelationSpec::LabelMatch { vocab } => {
                let a = as_label(reference).map_err(&fail)?;
                let b = as_label(perturbed).map_err(&fail)?;
                if let Some(v) = vocab {
                    for label in [a, b] {
                        if !v.contains(label) {
                            return Err(fail(format!("label {label:?} outside vocabulary")));
                        }
                    }
                }
                Ok(a == b)
            }
            RelationSpec::DeviationLinf { tau_max } => {
                let a = as_vector(reference).map_err(&fail)?;
                let b = as_vector(perturbed).map_err(&fail)?;
                if reference.kind() != perturbed.kind() {
                    return Err(fail(format!(
                        "kinds differ: {} vs {}",
                        reference.kind(),
                        perturbed.kind()
                    )));
                }
                let deviation = linf_deviation(a, b)?;
                heaviside(-deviation, -tau_max)
            }
            RelationSpec::DetectionSubset { iou_floor } => {
                let m = match_payload_detections(reference, perturbed, *iou_floor)
                    .map_err(|e| fail(e.to_string()))?;
                Ok(m.unmatched_pert.is_empty())
            }
            RelationSpec::DetectionIouPersist { iou_floor, tau, strict } => {
                let m = match_payload_detections(reference, perturbed, *iou_floor)
                    .map_err(|e| fail(e.to_string()))?;
                for pair in &m.pairs {
                    let ok = if *strict { pair.iou > *tau } else { heaviside(pair.iou, *tau)? };
                    if !ok {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            RelationSpec::DetectionLabels { iou_floor } => {
                let refs = as_detections(reference).map_err(&fail)?;
                let perts = as_detections(perturbed).map_err(&fail)?;
                let m = match_detections(refs, perts, *iou_floor)?;
                Ok(m.pairs.iter().all(|p| refs[p.ref_idx].class == perts[p.pert_idx].class))
            }
            RelationSpec::DetectionConfidence { iou_floor, tol } => {
                let refs = as_detections(reference).map_err(&fail)?;
                let perts = as_detections(perturbed).map_err(&fail)?;
                let m = match_detections(refs, perts, *iou_floor)?;
                for p in &m.pairs {
                    let delta = (refs[p.ref_idx].confidence - perts[p.pert_idx].confidence).abs();
                    if !heaviside(-delta, -tol)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            RelationSpec::SegmentationStrict => {
                let a = as_mask(reference).map_err(&fail)?;
                let b = as_mask(perturbed).map_err(&fail)?;
                check_mask_dims(a, b).map_err(&fail)?;
                Ok(a.bits == b.bits)
            }
            RelationSpec::SegmentationIou { taus } => {
                let a = as_mask(reference).map_err(&fail)?;
                let b = as_mask(perturbed).map_err(&fail)?;
                check_mask_dims(a, b).map_err(&fail)?;
                if taus.len() != 1 && taus.len() != a.classes {
                    return Err(fail(format!(
                        "{} thresholds for {} classes",
                        taus.len(),
                        a.classes
                    )));
                }
                for class in 0..a.classes {
                    let tau = if taus.len() == 1 { taus[0] } else { taus[class] };
                    let overlap: f64 = mask_iou(a.plane(class), b.plane(class))?;
                    if !heaviside(overlap, tau)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            RelationSpec::OcrDistance { tau } => {
                let a = as_text(reference).map_err(&fail)?;
                let b = as_text(perturbed).map_err(fail)?;
                let distance = levenshtein(a, b) as i64;
                Ok(-distance >= *tau)
            }
        }
    }
}

/// Conjunction of relations attached to one pipeline state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeRelation {
    pub relations: Vec<MetamorphicRelation>,
}

impl CompositeRelation {
    pub fn new(relations: Vec<MetamorphicRelation>) -> Self {
        CompositeRelation { relations }
    }

    pub fn validate(&self) -> Result<()> {
        if self.relations.is_empty() {
            return Err(Error::Config(
                "composite relation has no members; omit it instead".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for r in &self.relations {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Config(format!("duplicate relation id {:?}", r.id)));
            }
        }
        Ok(())
    }
}

/// Result of evaluating a composite over one output pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompositeOutcome {
    pub pass: bool,
    /// Id of the first failing member, in declaration order.
    pub failed_relation: Option<String>,
}

/// Evaluates the members in order, stopping at the first failure.
pub fn composite_score(
    composite: &CompositeRelation,
    reference: &Payload,
    perturbed: &Payload,
) -> Result<CompositeOutcome> {
    for relation in &composite.relations {
        if !relation.evaluate(reference, perturbed)? {
            return Ok(CompositeOutcome {
                pass: false,
                failed_relation: Some(relation.id.clone()),
            });
        }
    }
    Ok(CompositeOutcome { pass: true, failed_relation: None })
}

/// One greedily matched detection pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchPair {
    pub ref_idx: usize,
    pub pert_idx: usize,
    pub iou: f64,
}

/// Outcome of matching two detection sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionMatch {
    pub pairs: Vec<MatchPair>,
    pub unmatched_ref: Vec<usize>,
    pub unmatched_pert: Vec<usize>,
}

/// Greedy one-to-one matching by descending overlap.
///
/// Candidate pairs below `iou_floor` are never formed. Ties are broken
/// by the lower original index, then the lower perturbed index, which
/// makes the matching deterministic.
pub fn match_detections(
    reference: &[Detection],
    perturbed: &[Detection],
    iou_floor: f64,
) -> Result<DetectionMatch> {
    if !iou_floor.is_finite() || !(0.0..=1.0).contains(&iou_floor) {
        return Err(Error::Config(format!("iou_floor {iou_floor} outside [0, 1]")));
    }
    let mut candidates = Vec::new();
    for (i, r) in reference.iter().enumerate() {
        for (j, p) in perturbed.iter().enumerate() {
            let iou = bbox_iou(&r.bbox(), &p.bbox())?;
            if iou >= iou_floor {
                candidates.push(MatchPair { ref_idx: i, pert_idx: j, iou });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .partial_cmp(&a.iou)
            .expect("bbox_iou rejects NaN")
            .then(a.ref_idx.cmp(&b.ref_idx))
            .then(a.pert_idx.cmp(&b.pert_idx))
    });
    let mut used_ref = vec![false; reference.len()];
    let mut used_pert = vec![false; perturbed.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !used_ref[c.ref_idx] && !used_pert[c.pert_idx] {
            used_ref[c.ref_idx] = true;
            used_pert[c.pert_idx] = true;
            pairs.push(c);
        }
    }
    Ok(DetectionMatch {
        pairs,
        unmatched_ref: (0..reference.len()).filter(|&i| !used_ref[i]).collect(),
        unmatched_pert: (0..perturbed.len()).filter(|&j| !used_pert[j]).collect(),
    })
}

fn match_payload_detections(
    reference: &Payload,
    perturbed: &Payload,
    iou_floor: f64,
) -> Result<DetectionMatch> {
    let refs = as_detections(reference).map_err(Error::Eval)?;
    let perts = as_detections(perturbed).map_err(Error::Eval)?;
    match_detections(refs, perts, iou_floor)
}

/// Parameters for the standard object-detector composite.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorParams {
    /// Overlap floor below which detections are considered distinct.
    pub iou_floor: f64,
    /// Overlap that matched detections must keep.
    pub persist_tau: f64,
    /// Whether the persistence check is strict (`>`) or inclusive.
    pub strict_persist: bool,
    /// Optional bound on confidence drift; `None` disables the check.
    pub confidence_tol: Option<f64>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            iou_floor: 0.5,
            persist_tau: 0.9,
            strict_persist: true,
            confidence_tol: None,
        }
    }
}

/// Builds the standard detector composite: no spurious detections,
/// persisting overlap, stable labels, and (optionally) bounded
/// confidence drift.
pub fn detector_composite(params: &DetectorParams) -> CompositeRelation {
    let mut relations = vec![
        MetamorphicRelation::new(
            "det-subset",
            RelationSpec::DetectionSubset { iou_floor: params.iou_floor },
        ),
        MetamorphicRelation::new(
            "det-iou-persist",
            RelationSpec::DetectionIouPersist {
                iou_floor: params.iou_floor,
                tau: params.persist_tau,
                strict: params.strict_persist,
            },
        ),
        MetamorphicRelation::new(
            "det-labels",
            RelationSpec::DetectionLabels { iou_floor: params.iou_floor },
        ),
    ];
    if let Some(tol) = params.confidence_tol {
        relations.push(MetamorphicRelation::new(
            "det-confidence",
            RelationSpec::DetectionConfidence { iou_floor: params.iou_floor, tol },
        ));
    }
    CompositeRelation::new(relations)
}

fn as_label(p: &Payload) -> std::result::Result<&str, String> {
    match p {
        Payload::Label { value } => Ok(value),
        other => Err(format!("expected label, got {}", other.kind())),
    }
}

fn as_text(p: &Payload) -> std::result::Result<&str, String> {
    match p {
        Payload::Text { value } => Ok(value),
        other => Err(format!("expected text, got {}", other.kind())),
    }
}

fn as_vector(p: &Payload) -> std::result::Result<&[f64], String> {
    match p {
        Payload::Distribution { probs } => Ok(probs),
        Payload::Tensor { data, .. } => Ok(data),
        other => Err(format!("expected distribution or tensor, got {}", other.kind())),
    }
}

fn as_detections(p: &Payload) -> std::result::Result<&[Detection], String> {
    match p {
        Payload::DetectionSet { detections } => Ok(detections),
        other => Err(format!("expected detection_set, got {}", other.kind())),
    }
}

fn as_mask(p: &Payload) -> std::result::Result<&MaskStack, String> {
    match p {
        Payload::MaskStack { mask } => Ok(mask),
        other => Err(format!("expected mask_stack, got {}", other.kind())),
    }
}

fn check_mask_dims(a: &MaskStack, b: &MaskStack) -> std::result::Result<(), String> {
    if (a.classes, a.height, a.width) != (b.classes, b.height, b.width) {
        return Err(format!(
            "mask dimensions differ: {}x{}x{} vs {}x{}x{}",
            a.classes, a.height, a.width, b.classes, b.height, b.width
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, w: f64, h: f64, class: &str, conf: f64) -> Detection {
        Detection::new(x, y, w, h, class, conf)
    }

    fn det_set(items: Vec<Detection>) -> Payload {
        Payload::DetectionSet { detections: items }
    }

    #[test]
    fn label_match_is_plain_equality() {
        let r = MetamorphicRelation::new("m", RelationSpec::LabelMatch { vocab: None });
        assert!(r.evaluate(&Payload::label("stop"), &Payload::label("stop")).unwrap());
        assert!(!r.evaluate(&Payload::label("stop"), &Payload::label("go")).unwrap());
        assert!(r.evaluate(&Payload::label("stop"), &Payload::text("stop")).is_err());
    }

    #[test]
    fn label_vocab_rejects_foreign_labels() {
        let vocab: BTreeSet<String> = ["stop", "go"].iter().map(|s| s.to_string()).collect();
        let r = MetamorphicRelation::new("m", RelationSpec::LabelMatch { vocab: Some(vocab) });
        assert!(r.evaluate(&Payload::label("stop"), &Payload::label("go")).is_ok());
        assert!(r.evaluate(&Payload::label("stop"), &Payload::label("yield")).is_err());
    }

    #[test]
    fn deviation_passes_inside_the_bound_and_fails_outside() {
        let r = MetamorphicRelation::new("m", RelationSpec::DeviationLinf { tau_max: 0.1 });
        let a = Payload::Distribution { probs: vec![0.5, 0.5] };
        let inside = Payload::Distribution { probs: vec![0.55, 0.45] };
        let at_bound = Payload::Distribution { probs: vec![0.6, 0.5] };
        let outside = Payload::Distribution { probs: vec![0.75, 0.5] };
        assert!(r.evaluate(&a, &inside).unwrap());
        assert!(r.evaluate(&a, &at_bound).unwrap(), "bound is inclusive");
        assert!(!r.evaluate(&a, &outside).unwrap());
    }

    #[test]
    fn deviation_requires_matching_kinds() {
        let r = MetamorphicRelation::new("m", RelationSpec::DeviationLinf { tau_max: 0.1 });
        let d = Payload::Distribution { probs: vec![0.5] };
        let t = Payload::tensor1(vec![0.5]);
        assert!(r.evaluate(&d, &t).is_err());
        assert!(r.evaluate(&t, &t).unwrap());
    }

    #[test]
    fn subset_allows_drops_and_rejects_spurious() {
        let a = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let b = det(20.0, 0.0, 10.0, 10.0, "person", 0.8);
        let r = MetamorphicRelation::new("m", RelationSpec::DetectionSubset { iou_floor: 0.5 });
        let reference = det_set(vec![a.clone(), b.clone()]);
        assert!(r.evaluate(&reference, &det_set(vec![a.clone()])).unwrap());
        assert!(r.evaluate(&reference, &det_set(vec![])).unwrap());
        let spurious = det(50.0, 50.0, 5.0, 5.0, "dog", 0.7);
        assert!(!r.evaluate(&reference, &det_set(vec![a, b, spurious])).unwrap());
    }

    #[test]
    fn persistence_threshold_strictness_is_configurable() {
        // 10x10 against 10x9 at the same origin: overlap exactly 0.9.
        let a = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let b = det(0.0, 0.0, 10.0, 9.0, "car", 0.9);
        let strict = MetamorphicRelation::new(
            "m",
            RelationSpec::DetectionIouPersist { iou_floor: 0.5, tau: 0.9, strict: true },
        );
        let inclusive = MetamorphicRelation::new(
            "m",
            RelationSpec::DetectionIouPersist { iou_floor: 0.5, tau: 0.9, strict: false },
        );
        let reference = det_set(vec![a]);
        let perturbed = det_set(vec![b]);
        assert!(!strict.evaluate(&reference, &perturbed).unwrap());
        assert!(inclusive.evaluate(&reference, &perturbed).unwrap());
    }

    #[test]
    fn label_stability_checks_matched_pairs_only() {
        let r = MetamorphicRelation::new("m", RelationSpec::DetectionLabels { iou_floor: 0.5 });
        let a = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let flipped = det(0.0, 0.0, 10.0, 10.0, "truck", 0.9);
        let far = det(80.0, 80.0, 10.0, 10.0, "truck", 0.9);
        assert!(!r.evaluate(&det_set(vec![a.clone()]), &det_set(vec![flipped])).unwrap());
        // The far detection never matches, so its label is not compared.
        assert!(r.evaluate(&det_set(vec![a.clone(), far]), &det_set(vec![a])).unwrap());
    }

    #[test]
    fn confidence_drift_is_bounded_when_configured() {
        let r = MetamorphicRelation::new(
            "m",
            RelationSpec::DetectionConfidence { iou_floor: 0.5, tol: 0.1 },
        );
        let a = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let close = det(0.0, 0.0, 10.0, 10.0, "car", 0.85);
        let far = det(0.0, 0.0, 10.0, 10.0, "car", 0.5);
        assert!(r.evaluate(&det_set(vec![a.clone()]), &det_set(vec![close])).unwrap());
        assert!(!r.evaluate(&det_set(vec![a]), &det_set(vec![far])).unwrap());
    }

    #[test]
    fn matching_is_greedy_with_deterministic_ties() {
        // Two identical originals compete for one perturbed box; the
        // lower original index wins the tie.
        let a0 = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let a1 = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let p = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let m = match_detections(&[a0, a1], &[p], 0.5).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].ref_idx, 0);
        assert_eq!(m.unmatched_ref, vec![1]);
        assert!(m.unmatched_pert.is_empty());
    }

    #[test]
    fn matching_prefers_higher_overlap() {
        let r0 = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let r1 = det(8.0, 0.0, 10.0, 10.0, "car", 0.9);
        // Closer to r1 than to r0.
        let p = det(7.0, 0.0, 10.0, 10.0, "car", 0.9);
        let m = match_detections(&[r0, r1], &[p], 0.0).unwrap();
        assert_eq!(m.pairs[0].ref_idx, 1);
    }

    #[test]
    fn matching_respects_the_floor() {
        let r0 = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let p = det(9.0, 9.0, 10.0, 10.0, "car", 0.9);
        let m = match_detections(&[r0], &[p], 0.5).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_ref, vec![0]);
        assert_eq!(m.unmatched_pert, vec![0]);
    }

    #[test]
    fn segmentation_strict_needs_identical_planes() {
        let r = MetamorphicRelation::new("m", RelationSpec::SegmentationStrict);
        let mut a = MaskStack::zeroed(1, 4, 4);
        a.set(0, 1, 1, true);
        let same = Payload::MaskStack { mask: a.clone() };
        let mut b = a.clone();
        b.set(0, 2, 2, true);
        assert!(r
            .evaluate(&Payload::MaskStack { mask: a.clone() }, &same)
            .unwrap());
        assert!(!r
            .evaluate(&Payload::MaskStack { mask: a }, &Payload::MaskStack { mask: b })
            .unwrap());
    }

    #[test]
    fn segmentation_iou_uses_per_class_thresholds() {
        let mut a = MaskStack::zeroed(2, 2, 4);
        let mut b = MaskStack::zeroed(2, 2, 4);
        // Class 0: identical (overlap 1). Class 1: half overlap.
        for col in 0..4 {
            a.set(0, 0, col, true);
            b.set(0, 0, col, true);
            a.set(1, 0, col, true);
        }
        b.set(1, 0, 0, true);
        b.set(1, 0, 1, true);
        let strict_cls1 = MetamorphicRelation::new(
            "m",
            RelationSpec::SegmentationIou { taus: vec![0.9, 0.75] },
        );
        let loose_cls1 = MetamorphicRelation::new(
            "m",
            RelationSpec::SegmentationIou { taus: vec![0.9, 0.5] },
        );
        let pa = Payload::MaskStack { mask: a };
        let pb = Payload::MaskStack { mask: b };
        assert!(!strict_cls1.evaluate(&pa, &pb).unwrap());
        assert!(loose_cls1.evaluate(&pa, &pb).unwrap());
    }

    #[test]
    fn ocr_distance_threshold_is_negated() {
        let r = MetamorphicRelation::new("m", RelationSpec::OcrDistance { tau: -2 });
        assert!(r.evaluate(&Payload::text("abcdef"), &Payload::text("abcdef")).unwrap());
        assert!(r.evaluate(&Payload::text("abcdef"), &Payload::text("abcxx f")).is_ok());
        assert!(r.evaluate(&Payload::text("abcdef"), &Payload::text("abcdxx")).unwrap());
        assert!(!r.evaluate(&Payload::text("abcdef"), &Payload::text("abxxxf")).unwrap());
    }

    #[test]
    fn relation_parameters_are_validated() {
        let bad = [
            RelationSpec::DeviationLinf { tau_max: -0.1 },
            RelationSpec::DetectionSubset { iou_floor: 1.5 },
            RelationSpec::DetectionIouPersist { iou_floor: 0.5, tau: -0.2, strict: true },
            RelationSpec::DetectionConfidence { iou_floor: 0.5, tol: f64::NAN },
            RelationSpec::SegmentationIou { taus: vec![] },
            RelationSpec::OcrDistance { tau: 2 },
        ];
        for spec in bad {
            assert!(
                MetamorphicRelation::new("m", spec.clone()).validate().is_err(),
                "{spec:?} should be rejected"
            );
        }
        assert!(MetamorphicRelation::new("", RelationSpec::SegmentationStrict)
            .validate()
            .is_err());
    }

    #[test]
    fn composite_short_circuits_and_names_the_first_failure() {
        let composite = CompositeRelation::new(vec![
            MetamorphicRelation::new("first", RelationSpec::DetectionSubset { iou_floor: 0.5 }),
            MetamorphicRelation::new(
                "second",
                RelationSpec::DetectionLabels { iou_floor: 0.5 },
            ),
        ]);
        composite.validate().unwrap();
        let a = det(0.0, 0.0, 10.0, 10.0, "car", 0.9);
        let flipped = det(0.0, 0.0, 10.0, 10.0, "bus", 0.9);
        let spurious = det(50.0, 50.0, 4.0, 4.0, "dog", 0.9);

        let ok = composite_score(&composite, &det_set(vec![a.clone()]), &det_set(vec![a.clone()]))
            .unwrap();
        assert!(ok.pass);
        assert_eq!(ok.failed_relation, None);

        // Both members would fail here; the first in declaration order
        // is reported.
        let both = composite_score(
            &composite,
            &det_set(vec![a.clone()]),
            &det_set(vec![flipped.clone(), spurious]),
        )
        .unwrap();
        assert!(!both.pass);
        assert_eq!(both.failed_relation.as_deref(), Some("first"));

        let only_labels =
            composite_score(&composite, &det_set(vec![a]), &det_set(vec![flipped])).unwrap();
        assert!(!only_labels.pass);
        assert_eq!(only_labels.failed_relation.as_deref(), Some("second"));
    }

    #[test]
    fn empty_composites_are_rejected() {
        assert!(CompositeRelation::new(vec![]).validate().is_err());
        let dup = CompositeRelation::new(vec![
            MetamorphicRelation::new("x", RelationSpec::SegmentationStrict),
            MetamorphicRelation::new("x", RelationSpec::SegmentationStrict),
        ]);
        assert!(dup.validate().is_err());
    }

    #[test]
    fn detector_composite_confidence_member_is_optional() {
        let default = detector_composite(&DetectorParams::default());
        assert_eq!(default.relations.len(), 3);
        let with_conf = detector_composite(&DetectorParams {
            confidence_tol: Some(0.1),
            ..DetectorParams::default()
        });
        assert_eq!(with_conf.relations.len(), 4);
        with_conf.validate().unwrap();
    }
}
