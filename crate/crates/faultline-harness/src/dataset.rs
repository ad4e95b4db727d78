//! Deterministic synthetic datasets.
//!
//! Inputs are generated from the campaign seed and the input index
//! alone, so a campaign replays identically on any machine and any
//! thread count.

use faultline_core::hashing;
use faultline_core::payload::Payload;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};

/// Payload family for generated inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Flat tensors with values uniform in [0, 1).
    Tensor,
    /// Lowercase ASCII strings.
    Text,
}

/// Generates `count` inputs of length `len` each.
pub fn synthetic(kind: SyntheticKind, count: usize, len: usize, campaign_seed: u64) -> Result<Vec<Payload>> {
    if len == 0 {
        return Err(HarnessError::Config("synthetic input length must be positive".into()));
    }
    Ok((0..count as u64)
        .map(|index| {
            let seed = hashing::seed_bytes(
                "dataset",
                &[&campaign_seed.to_le_bytes(), &index.to_le_bytes()],
            );
            let mut rng = ChaCha8Rng::from_seed(seed);
            match kind {
                SyntheticKind::Tensor => {
                    let data: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
                    Payload::tensor1(data)
                }
                SyntheticKind::Text => {
                    let value: String = (0..len)
                        .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
                        .collect();
                    Payload::Text { value }
                }
            }
        })
        .collect())
}

/// Wraps explicit text items as a dataset.
pub fn from_texts(texts: &[String]) -> Vec<Payload> {
    texts.iter().map(Payload::text).collect()
}
