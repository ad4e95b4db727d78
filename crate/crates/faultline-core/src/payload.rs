//! Values exchanged between pipeline components.
//!
//! Components are black boxes; the only thing the framework sees is the
//! typed payload each one consumes and produces. Payloads serialize to
//! canonical JSON (declaration field order, no maps with unordered
//! keys), which makes their digests and the event log byte-stable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The kinds a payload can take, used in shape declarations.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Label,
    Distribution,
    DetectionSet,
    MaskStack,
    Text,
    Tensor,
}

impl std::fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PayloadKind::Label => "label",
            PayloadKind::Distribution => "distribution",
            PayloadKind::DetectionSet => "detection_set",
            PayloadKind::MaskStack => "mask_stack",
            PayloadKind::Text => "text",
            PayloadKind::Tensor => "tensor",
        };
        f.write_str(name)
    }
}

/// Axis-aligned bounding box given as origin plus extent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        BoundingBox { x, y, w, h }
    }
}

/// One detected object: box, class label, and confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub class: String,
    pub confidence: f64,
}

impl Detection {
    pub fn new(
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        class: impl Into<String>,
        confidence: f64,
    ) -> Self {
        Detection { x, y, w, h, class: class.into(), confidence }
    }

    pub fn bbox(&self) -> BoundingBox<f64> {
        BoundingBox::new(self.x, self.y, self.w, self.h)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("x", self.x), ("y", self.y), ("w", self.w), ("h", self.h)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("detection field {name} is not finite")));
            }
        }
        if self.w < 0.0 || self.h < 0.0 {
            return Err(Error::Config("detection extent is negative".into()));
        }
        if !self.confidence.is_finite() || !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Config(format!(
                "detection confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// A stack of binary masks, one plane per class.
///
/// Each plane holds `height * width` bits in row-major order, packed
/// least-significant-bit first and padded to whole bytes, so plane
/// boundaries are byte-aligned and per-class slices can be taken
/// directly. Padding bits must be zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskStack {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub bits: Vec<u8>,
}

impl MaskStack {
    /// Creates an all-zero stack.
    pub fn zeroed(classes: usize, height: usize, width: usize) -> Self {
        let bytes = classes * Self::plane_bytes_for(height, width);
        MaskStack { classes, height, width, bits: vec![0; bytes] }
    }

    fn plane_bytes_for(height: usize, width: usize) -> usize {
        (height * width).div_ceil(8)
    }

    /// Bytes occupied by one class plane.
    pub fn plane_bytes(&self) -> usize {
        Self::plane_bytes_for(self.height, self.width)
    }

    /// The packed bits of one class plane.
    pub fn plane(&self, class: usize) -> &[u8] {
        let stride = self.plane_bytes();
        &self.bits[class * stride..(class + 1) * stride]
    }

    pub fn get(&self, class: usize, row: usize, col: usize) -> bool {
        let bit = row * self.width + col;
        let byte = self.plane(class)[bit / 8];
        byte >> (bit % 8) & 1 == 1
    }

    pub fn set(&mut self, class: usize, row: usize, col: usize, value: bool) {
        let stride = self.plane_bytes();
        let bit = row * self.width + col;
        let byte = &mut self.bits[class * stride + bit / 8];
        if value {
            *byte |= 1 << (bit % 8);
        } else {
            *byte &= !(1 << (bit % 8));
        }
    }

    fn validate(&self) -> Result<()> {
        let expected = self.classes * self.plane_bytes();
        if self.bits.len() != expected {
            return Err(Error::Config(format!(
                "mask stack holds {} bytes, {} classes of {}x{} need {}",
                self.bits.len(),
                self.classes,
                self.height,
                self.width,
                expected
            )));
        }
        // Trailing padding in each plane must be zero so that plane
        // comparisons and popcounts see only real cells.
        let cells = self.height * self.width;
        if !cells.is_multiple_of(8) {
            let mask = !0u8 << (cells % 8);
            for class in 0..self.classes {
                let last = self.plane(class)[self.plane_bytes() - 1];
                if last & mask != 0 {
                    return Err(Error::Config(format!(
                        "mask stack class {class} has nonzero padding bits"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A value flowing along a pipeline edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Label { value: String },
    Distribution { probs: Vec<f64> },
    DetectionSet { detections: Vec<Detection> },
    MaskStack { mask: MaskStack },
    Text { value: String },
    Tensor { shape: Vec<usize>, data: Vec<f64> },
}

impl Payload {
    pub fn label(value: impl Into<String>) -> Self {
        Payload::Label { value: value.into() }
    }

    pub fn text(value: impl Into<String>) -> Self {
        Payload::Text { value: value.into() }
    }

    pub fn tensor1(data: Vec<f64>) -> Self {
        Payload::Tensor { shape: vec![data.len()], data }
    }

    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Label { .. } => PayloadKind::Label,
            Payload::Distribution { .. } => PayloadKind::Distribution,
            Payload::DetectionSet { .. } => PayloadKind::DetectionSet,
            Payload::MaskStack { .. } => PayloadKind::MaskStack,
            Payload::Text { .. } => PayloadKind::Text,
            Payload::Tensor { .. } => PayloadKind::Tensor,
        }
    }

    /// Dimension vector used for shape conformance checks.
    ///
    /// Scalar-ish kinds (labels, text, detection sets) have no dims.
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Payload::Distribution { probs } => vec![probs.len()],
            Payload::MaskStack { mask } => vec![mask.classes, mask.height, mask.width],
            Payload::Tensor { shape, .. } => shape.clone(),
            _ => Vec::new(),
        }
    }

    /// Checks the kind-specific invariants.
    ///
    /// Finiteness is required for every floating-point field: the event
    /// log stores payloads as JSON and non-finite values do not survive
    /// that round trip.
    pub fn validate(&self) -> Result<()> {
        match self {
            Payload::Label { .. } | Payload::Text { .. } => Ok(()),
            Payload::Distribution { probs } => {
                for p in probs {
                    if !p.is_finite() || !(0.0..=1.0).contains(p) {
                        return Err(Error::Config(format!(
                            "distribution entry {p} outside [0, 1]"
                        )));
                    }
                }
                Ok(())
            }
            Payload::DetectionSet { detections } => {
                detections.iter().try_for_each(Detection::validate)
            }
            Payload::MaskStack { mask } => mask.validate(),
            Payload::Tensor { shape, data } => {
                let expected: usize = shape.iter().product();
                if data.len() != expected {
                    return Err(Error::Config(format!(
                        "tensor holds {} values, shape {:?} needs {}",
                        data.len(),
                        shape,
                        expected
                    )));
                }
                if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Config(format!("tensor value {bad} is not finite")));
                }
                Ok(())
            }
        }
    }

    /// Canonical JSON encoding of the payload.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("payload serialization cannot fail")
    }

    /// Hex SHA-256 digest of the canonical encoding.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }
}
