//! Seeded input perturbations.
//!
//! A perturbation is a pure function of its declaration, the campaign
//! seed, and the payload content: applying the same perturbation to the
//! same payload always yields the same result, regardless of execution
//! order or parallelism. Severity runs from 1 (mild) to 5 (harsh) and
//! scales each kind's magnitude linearly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing;
use crate::payload::{Payload, PayloadKind};
use crate::pipeline::StateId;

/// The supported perturbation families.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Additive zero-mean noise on tensor values.
    GaussianNoise,
    /// Multiplicative scaling of tensor values.
    BrightnessScale,
    /// A contiguous run of tensor values forced to zero.
    OcclusionPatch,
    /// Random clearing of set mask bits.
    MaskDropout,
    /// Small uniform jitter on tensors or distributions.
    LatentJitter,
    /// Random character substitutions in text.
    CharFlip,
}

impl PerturbationKind {
    /// The payload kinds this family can perturb.
    pub fn accepts(&self, kind: PayloadKind) -> bool {
        match self {
            PerturbationKind::GaussianNoise
            | PerturbationKind::BrightnessScale
            | PerturbationKind::OcclusionPatch => kind == PayloadKind::Tensor,
            PerturbationKind::MaskDropout => kind == PayloadKind::MaskStack,
            PerturbationKind::LatentJitter => {
                kind == PayloadKind::Tensor || kind == PayloadKind::Distribution
            }
            PerturbationKind::CharFlip => kind == PayloadKind::Text,
        }
    }
}

impl std::fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PerturbationKind::GaussianNoise => "gaussian_noise",
            PerturbationKind::BrightnessScale => "brightness_scale",
            PerturbationKind::OcclusionPatch => "occlusion_patch",
            PerturbationKind::MaskDropout => "mask_dropout",
            PerturbationKind::LatentJitter => "latent_jitter",
            PerturbationKind::CharFlip => "char_flip",
        };
        f.write_str(name)
    }
}

/// One declared perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub id: String,
    pub kind: PerturbationKind,
    /// Magnitude level, 1 through 5.
    pub severity: u8,
    /// Declaration-local seed, mixed with the campaign seed.
    pub seed: u64,
    /// Where the perturbation enters the pipeline. `None` perturbs the
    /// external input; `Some(state)` perturbs the payload entering that
    /// state, which exercises internal interfaces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_at: Option<StateId>,
}

impl PerturbationSpec {
    pub fn new(id: impl Into<String>, kind: PerturbationKind, severity: u8, seed: u64) -> Self {
        PerturbationSpec { id: id.into(), kind, severity, seed, inject_at: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Config("perturbation id is empty".into()));
        }
        if !(1..=5).contains(&self.severity) {
            return Err(Error::Config(format!(
                "perturbation {}: severity {} outside 1..=5",
                self.id, self.severity
            )));
        }
        Ok(())
    }
}

/// The perturbations a campaign applies to every input.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub specs: Vec<PerturbationSpec>,
}

impl PerturbationSet {
    pub fn new(specs: Vec<PerturbationSpec>) -> Self {
        PerturbationSet { specs }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for spec in &self.specs {
            spec.validate()?;
            if !ids.insert(spec.id.as_str()) {
                return Err(Error::Config(format!("duplicate perturbation id {:?}", spec.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// Enumerates the campaign's (input, perturbation) pairs, input-major.
pub fn enumerate_pairs<'a>(
    dataset: &'a [Payload],
    set: &'a PerturbationSet,
) -> impl Iterator<Item = (u64, &'a PerturbationSpec)> {
    (0..dataset.len() as u64).flat_map(move |input_ref| {
        set.specs.iter().map(move |spec| (input_ref, spec))
    })
}

/// Applies a perturbation to a payload.
///
/// The result preserves the payload's kind and dimensions. The same
/// (declaration, payload, campaign seed) triple always produces the
/// same output; the payload's own digest enters the seed so repeated
/// applications at different tree positions stay independent.
pub fn apply(spec: &PerturbationSpec, payload: &Payload, campaign_seed: u64) -> Result<Payload> {
    spec.validate()?;
    if !spec.kind.accepts(payload.kind()) {
        return Err(Error::Config(format!(
            "perturbation {} ({}) cannot apply to {} payloads",
            spec.id,
            spec.kind,
            payload.kind()
        )));
    }
    let randomness = Randomness::derive(spec, payload, campaign_seed);
    let severity = spec.severity as f64;

    let perturbed = match (spec.kind, payload.clone()) {
        (PerturbationKind::GaussianNoise, Payload::Tensor { shape, mut data }) => {
            let sigma = 0.05 * severity;
            let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
            let mut rng = randomness.stream();
            for v in &mut data {
                *v += normal.sample(&mut rng);
            }
            Payload::Tensor { shape, data }
        }
        (PerturbationKind::BrightnessScale, Payload::Tensor { shape, mut data }) => {
            let factor = 1.0 + 0.15 * severity;
            for v in &mut data {
                *v *= factor;
            }
            Payload::Tensor { shape, data }
        }
        (PerturbationKind::OcclusionPatch, Payload::Tensor { shape, mut data }) => {
            if !data.is_empty() {
                let fraction = 0.08 * severity;
                let patch = ((data.len() as f64 * fraction).ceil() as usize)
                    .clamp(1, data.len());
                let start = randomness.stream().random_range(0..=data.len() - patch);
                for v in &mut data[start..start + patch] {
                    *v = 0.0;
                }
            }
            Payload::Tensor { shape, data }
        }
        (PerturbationKind::MaskDropout, Payload::MaskStack { mut mask }) => {
            let drop_prob = 0.1 * severity;
            for class in 0..mask.classes {
                for row in 0..mask.height {
                    for col in 0..mask.width {
                        if !mask.get(class, row, col) {
                            continue;
                        }
                        let index =
                            ((class * mask.height + row) * mask.width + col) as u64;
                        // Per-bit randomness keeps drop sets nested
                        // across severities.
                        if randomness.unit_at("mask-bit", index) < drop_prob {
                            mask.set(class, row, col, false);
                        }
                    }
                }
            }
            Payload::MaskStack { mask }
        }
        (PerturbationKind::LatentJitter, Payload::Tensor { shape, mut data }) => {
            jitter(&mut data, severity, &randomness, false);
            Payload::Tensor { shape, data }
        }
        (PerturbationKind::LatentJitter, Payload::Distribution { mut probs }) => {
            jitter(&mut probs, severity, &randomness, true);
            Payload::Distribution { probs }
        }
        (PerturbationKind::CharFlip, Payload::Text { value }) => {
            let flip_prob = (0.15 * severity).min(0.75);
            let flipped: String = value
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    // Per-character randomness keeps flip sets nested
                    // across severities.
                    if randomness.unit_at("char-flip", i as u64) < flip_prob {
                        substitute_char(c, randomness.pick("char-subst", i as u64, 25))
                    } else {
                        c
                    }
                })
                .collect();
            Payload::Text { value: flipped }
        }
        (kind, payload) => {
            // accepts() above makes this unreachable; keep a real error
            // rather than a panic in case the two ever drift.
            return Err(Error::Config(format!(
                "perturbation kind {kind} cannot apply to {} payloads",
                payload.kind()
            )));
        }
    };
    Ok(perturbed)
}

fn jitter(values: &mut [f64], severity: f64, randomness: &Randomness, clamp_unit: bool) {
    let magnitude = 0.02 * severity;
    let mut rng = randomness.stream();
    for v in values.iter_mut() {
        let delta = rng.random_range(-magnitude..=magnitude);
        *v += delta;
        if clamp_unit {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// Replaces a character with a different lowercase letter.
fn substitute_char(original: char, choice: usize) -> char {
    let alphabet: Vec<char> = ('a'..='z').collect();
    let candidate = alphabet[choice % 25];
    if candidate == original {
        // 25 candidates cover every collision with one step.
        alphabet[25]
    } else {
        candidate
    }
}

/// Seed material derived once per application.
struct Randomness {
    base: [u8; 32],
}

impl Randomness {
    fn derive(spec: &PerturbationSpec, payload: &Payload, campaign_seed: u64) -> Self {
        let digest = payload.digest();
        Randomness {
            base: hashing::seed_bytes(
                "perturbation",
                &[
                    &campaign_seed.to_le_bytes(),
                    spec.id.as_bytes(),
                    &spec.seed.to_le_bytes(),
                    digest.as_bytes(),
                ],
            ),
        }
    }

    /// A fresh deterministic stream over the base seed.
    fn stream(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.base)
    }

    /// A stable unit-interval draw for one indexed site.
    fn unit_at(&self, domain: &str, index: u64) -> f64 {
        hashing::unit_fraction(hashing::hash64(
            domain,
            &[&self.base, &index.to_le_bytes()],
        ))
    }

    /// A stable choice in `0..n` for one indexed site.
    fn pick(&self, domain: &str, index: u64, n: usize) -> usize {
        (hashing::hash64(domain, &[&self.base, &index.to_le_bytes()]) % n as u64) as usize
    }
}
