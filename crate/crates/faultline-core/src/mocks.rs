//! Configurable stand-in components.
//!
//! Mocks give campaigns full control over where faults live. Each mock
//! produces a canonical output that depends only on stable identifiers
//! (its name, the input index), so reference and perturbed runs agree
//! by construction. An optional [`FaultProfile`] makes the mock
//! misbehave on perturbed runs that match its trigger, with a seeded
//! per-run probability; reference runs never fire faults. This models
//! components that are sensitive to input deviations, and it makes the
//! injected ground truth exact: every deviation in a campaign is
//! traceable to a configured profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing;
use crate::payload::{Detection, Payload};
use crate::pipeline::{Component, RunContext};
use crate::perturb::PerturbationKind;

/// When a fault profile may fire.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultTrigger {
    /// Restrict to one perturbation family; `None` matches any.
    #[serde(default)]
    pub kind: Option<PerturbationKind>,
    /// Minimum perturbation severity, 0 to match all severities.
    #[serde(default)]
    pub min_severity: u8,
}

/// What a firing fault does to the canonical output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FaultEffect {
    /// Classifier: output a different label. Detector: append `*` to
    /// matching detection classes. `target_class` restricts the flip
    /// to one canonical class; `None` flips any.
    FlipLabel {
        #[serde(default)]
        target_class: Option<String>,
    },
    /// Detector: drop the first `count` detections.
    DropDetections { count: usize },
    /// Detector: add one detection of the given class far from the
    /// canonical ones.
    AddSpuriousDetection { class: String },
    /// Detector: translate every box by `(dx, dy)`.
    ShiftBoxes { dx: f64, dy: f64 },
    /// Text reader: substitute `round(rate * length)` characters with
    /// digits. For digit-free canonical texts the edit distance equals
    /// the substitution count exactly.
    CorruptText { rate: f64 },
    /// Detector: relabel detections of class `from` as class `to`,
    /// changing downstream routing without moving any box.
    Reroute { from: String, to: String },
}

/// A complete fault declaration for one mock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    #[serde(default)]
    pub trigger: FaultTrigger,
    pub effect: FaultEffect,
    /// Probability that a matching perturbed run fires the fault.
    pub probability: f64,
}

impl FaultProfile {
    pub fn validate(&self) -> Result<()> {
        if !self.probability.is_finite() || !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config(format!(
                "fault probability {} outside [0, 1]",
                self.probability
            )));
        }
        if self.trigger.min_severity > 5 {
            return Err(Error::Config(format!(
                "fault trigger severity {} outside 0..=5",
                self.trigger.min_severity
            )));
        }
        if let FaultEffect::CorruptText { rate } = &self.effect {
            if !rate.is_finite() || !(0.0..=1.0).contains(rate) {
                return Err(Error::Config(format!("corruption rate {rate} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Whether the fault fires for this invocation.
    ///
    /// The decision hashes the run seed with the component name, so it
    /// is independent across runs and across components while being
    /// reproducible for the same run.
    fn fires(&self, ctx: &RunContext, component: &str) -> bool {
        let Some(perturbation) = &ctx.perturbation else {
            return false;
        };
        if let Some(kind) = self.trigger.kind {
            if kind != perturbation.kind {
                return false;
            }
        }
        if perturbation.severity < self.trigger.min_severity {
            return false;
        }
        let roll = hashing::unit_fraction(hashing::hash64(
            "fault-fire",
            &[&ctx.run_seed.to_le_bytes(), component.as_bytes()],
        ));
        roll < self.probability
    }
}

/// Mock object detector emitting a fixed canonical detection set.
pub struct MockDetector {
    name: String,
    detections: Vec<Detection>,
    profile: Option<FaultProfile>,
}

impl MockDetector {
    pub fn new(
        name: impl Into<String>,
        detections: Vec<Detection>,
        profile: Option<FaultProfile>,
    ) -> Result<Self> {
        let name = name.into();
        Payload::DetectionSet { detections: detections.clone() }.validate()?;
        if let Some(profile) = &profile {
            profile.validate()?;
            if matches!(profile.effect, FaultEffect::CorruptText { .. }) {
                return Err(Error::Config(format!(
                    "detector {name:?} cannot corrupt text"
                )));
            }
        }
        Ok(MockDetector { name, detections, profile })
    }
}

impl Component for MockDetector {
    fn call(&self, _input: &Payload, ctx: &RunContext) -> Result<Payload> {
        let mut detections = self.detections.clone();
        if let Some(profile) = &self.profile {
            if profile.fires(ctx, &self.name) {
                apply_detector_effect(&profile.effect, &mut detections);
            }
        }
        Ok(Payload::DetectionSet { detections })
    }
}

fn apply_detector_effect(effect: &FaultEffect, detections: &mut Vec<Detection>) {
    match effect {
        FaultEffect::FlipLabel { target_class } => {
            for det in detections.iter_mut() {
                let matches = target_class.as_ref().is_none_or(|c| *c == det.class);
                if matches {
                    det.class.push('*');
                }
            }
        }
        FaultEffect::DropDetections { count } => {
            detections.drain(..(*count).min(detections.len()));
        }
        FaultEffect::AddSpuriousDetection { class } => {
            detections.push(Detection::new(500.0, 500.0, 12.0, 12.0, class.clone(), 0.5));
        }
        FaultEffect::ShiftBoxes { dx, dy } => {
            for det in detections.iter_mut() {
                det.x += dx;
                det.y += dy;
            }
        }
        FaultEffect::Reroute { from, to } => {
            for det in detections.iter_mut() {
                if det.class == *from {
                    det.class = to.clone();
                }
            }
        }
        FaultEffect::CorruptText { .. } => unreachable!("rejected at construction"),
    }
}

/// Mock classifier with a stable per-input canonical label.
pub struct MockClassifier {
    name: String,
    vocab: Vec<String>,
    profile: Option<FaultProfile>,
}

impl MockClassifier {
    pub fn new(
        name: impl Into<String>,
        vocab: Vec<String>,
        profile: Option<FaultProfile>,
    ) -> Result<Self> {
        let name = name.into();
        if vocab.is_empty() {
            return Err(Error::Config(format!("classifier {name:?} has an empty vocabulary")));
        }
        if let Some(profile) = &profile {
            profile.validate()?;
            if !matches!(profile.effect, FaultEffect::FlipLabel { .. }) {
                return Err(Error::Config(format!(
                    "classifier {name:?} only supports label-flip faults"
                )));
            }
        }
        Ok(MockClassifier { name, vocab, profile })
    }

    /// The label this classifier gives an input on a clean run.
    ///
    /// Derived from the input index rather than the payload content so
    /// mild input perturbations leave the canonical answer unchanged;
    /// only a fired fault moves it.
    fn canonical(&self, input_ref: u64) -> &str {
        let pick = hashing::hash64(
            "classifier-label",
            &[self.name.as_bytes(), &input_ref.to_le_bytes()],
        );
        &self.vocab[(pick % self.vocab.len() as u64) as usize]
    }
}

impl Component for MockClassifier {
    fn call(&self, _input: &Payload, ctx: &RunContext) -> Result<Payload> {
        let canonical = self.canonical(ctx.input_ref);
        let mut label = canonical.to_string();
        if let (Some(profile), true) = (&self.profile, self.vocab.len() > 1) {
            if profile.fires(ctx, &self.name) {
                let applies = match &profile.effect {
                    FaultEffect::FlipLabel { target_class: Some(c) } => *c == label,
                    FaultEffect::FlipLabel { target_class: None } => true,
                    _ => unreachable!("rejected at construction"),
                };
                if applies {
                    let canonical_idx =
                        self.vocab.iter().position(|v| v == canonical).expect("own vocab");
                    let step = 1 + (hashing::hash64(
                        "classifier-flip",
                        &[self.name.as_bytes(), &ctx.run_seed.to_le_bytes()],
                    ) % (self.vocab.len() as u64 - 1)) as usize;
                    label = self.vocab[(canonical_idx + step) % self.vocab.len()].clone();
                }
            }
        }
        Ok(Payload::Label { value: label })
    }
}

/// Mock text reader with one canonical text per input.
pub struct MockOcr {
    name: String,
    texts: Vec<String>,
    profile: Option<FaultProfile>,
}

impl MockOcr {
    pub fn new(
        name: impl Into<String>,
        texts: Vec<String>,
        profile: Option<FaultProfile>,
    ) -> Result<Self> {
        let name = name.into();
        if texts.is_empty() {
            return Err(Error::Config(format!("text reader {name:?} has no texts")));
        }
        if let Some(profile) = &profile {
            profile.validate()?;
            if !matches!(profile.effect, FaultEffect::CorruptText { .. }) {
                return Err(Error::Config(format!(
                    "text reader {name:?} only supports text-corruption faults"
                )));
            }
        }
        Ok(MockOcr { name, texts, profile })
    }

    fn canonical(&self, input_ref: u64) -> &str {
        &self.texts[(input_ref % self.texts.len() as u64) as usize]
    }
}

impl Component for MockOcr {
    fn call(&self, _input: &Payload, ctx: &RunContext) -> Result<Payload> {
        let canonical = self.canonical(ctx.input_ref);
        let mut value = canonical.to_string();
        if let Some(profile) = &self.profile {
            if profile.fires(ctx, &self.name) {
                let FaultEffect::CorruptText { rate } = &profile.effect else {
                    unreachable!("rejected at construction")
                };
                value = corrupt_text(canonical, *rate, ctx.run_seed, &self.name);
            }
        }
        Ok(Payload::Text { value })
    }
}

/// Substitutes `round(rate * chars)` characters with digits, choosing
/// positions by seeded hash.
fn corrupt_text(text: &str, rate: f64, run_seed: u64, name: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return text.to_string();
    }
    let substitutions = ((rate * chars.len() as f64).round() as usize).min(chars.len());
    let mut order: Vec<usize> = (0..chars.len()).collect();
    order.sort_by_key(|&i| {
        hashing::hash64(
            "ocr-corrupt-order",
            &[name.as_bytes(), &run_seed.to_le_bytes(), &(i as u64).to_le_bytes()],
        )
    });
    for &position in order.iter().take(substitutions) {
        let digit = hashing::hash64(
            "ocr-corrupt-char",
            &[name.as_bytes(), &run_seed.to_le_bytes(), &(position as u64).to_le_bytes()],
        ) % 10;
        chars[position] = char::from(b'0' + digit as u8);
    }
    chars.into_iter().collect()
}

/// Mock that forwards its input unchanged, for fan-out hubs.
pub struct Passthrough;

impl Component for Passthrough {
    fn call(&self, input: &Payload, _ctx: &RunContext) -> Result<Payload> {
        Ok(input.clone())
    }
}
