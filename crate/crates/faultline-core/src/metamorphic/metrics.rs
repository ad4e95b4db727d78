//! Numeric kernels underlying the relations.
//!
//! All comparison primitives reject NaN inputs instead of silently
//! propagating them: a relation that cannot be decided is an
//! evaluation error, never a pass or a fail.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::payload::BoundingBox;

/// Default tolerance for equality comparisons on floats.
pub const EQ_TOLERANCE: f64 = 1e-9;

/// Indicator of equality within `eps`: returns `theta == tau` up to the
/// tolerance.
pub fn kronecker<T: Float>(theta: T, tau: T, eps: T) -> Result<bool> {
    if theta.is_nan() || tau.is_nan() || eps.is_nan() {
        return Err(Error::Eval("kronecker input is NaN".into()));
    }
    Ok((theta - tau).abs() <= eps)
}

/// Indicator of threshold clearance: returns `theta >= tau`.
pub fn heaviside<T: Float>(theta: T, tau: T) -> Result<bool> {
    if theta.is_nan() || tau.is_nan() {
        return Err(Error::Eval("heaviside input is NaN".into()));
    }
    Ok(theta >= tau)
}

/// Intersection-over-union of two axis-aligned boxes.
///
/// Degenerate (zero-area) boxes are legal; when the union has zero
/// area the overlap is defined as 0.
///
/// ```
/// use faultline_core::payload::BoundingBox;
/// use faultline_core::metamorphic::bbox_iou;
///
/// let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
/// let b = BoundingBox::new(5.0, 0.0, 10.0, 10.0);
/// assert_eq!(bbox_iou(&a, &b).unwrap(), 50.0 / 150.0);
/// ```
pub fn bbox_iou<T: Float>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> Result<T> {
    for bx in [a, b] {
        if !(bx.x.is_finite() && bx.y.is_finite() && bx.w.is_finite() && bx.h.is_finite()) {
            return Err(Error::Eval("bounding box has a non-finite field".into()));
        }
        if bx.w < T::zero() || bx.h < T::zero() {
            return Err(Error::Eval("bounding box has negative extent".into()));
        }
    }
    let zero = T::zero();
    // Areas use the same corner differences as the intersection, so
    // identical boxes compare to exactly one despite rounding in x + w.
    let extent = |bx: &BoundingBox<T>| ((bx.x + bx.w) - bx.x, (bx.y + bx.h) - bx.y);
    let (aw, ah) = extent(a);
    let (bw, bh) = extent(b);
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = ix.max(zero) * iy.max(zero);
    let union = aw * ah + bw * bh - inter;
    if union <= zero {
        return Ok(zero);
    }
    Ok(inter / union)
}

/// Intersection-over-union of two packed binary masks.
///
/// Operands are packed bit planes of equal length; two empty masks
/// count as identical (overlap 1).
pub fn mask_iou<T: Float>(a: &[u8], b: &[u8]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Eval(format!(
            "mask planes differ in size: {} vs {} bytes",
            a.len(),
            b.len()
        )));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        inter += u64::from((x & y).count_ones());
        union += u64::from((x | y).count_ones());
    }
    if union == 0 {
        return Ok(T::one());
    }
    Ok(T::from(inter).expect("u64 fits") / T::from(union).expect("u64 fits"))
}

/// Edit distance between two strings with unit costs, over Unicode
/// scalar values.
///
/// ```
/// use faultline_core::metamorphic::levenshtein;
///
/// assert_eq!(levenshtein("kitten", "sitting"), 3);
/// assert_eq!(levenshtein("", "abc"), 3);
/// ```
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Largest absolute componentwise deviation between two vectors.
pub fn linf_deviation<T: Float>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Eval(format!(
            "vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut max = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        if x.is_nan() || y.is_nan() {
            return Err(Error::Eval("vector entry is NaN".into()));
        }
        max = max.max((x - y).abs());
    }
    Ok(max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Oracle: rasterize integer boxes onto a grid and count cells.
    /// Written against the geometric definition, not the formula above.
    pub(crate) fn grid_iou_oracle(
        a: (u32, u32, u32, u32),
        b: (u32, u32, u32, u32),
    ) -> f64 {
        let cover = |bx: (u32, u32, u32, u32), cx: u32, cy: u32| -> bool {
            cx >= bx.0 && cx < bx.0 + bx.2 && cy >= bx.1 && cy < bx.1 + bx.3
        };
        let (mut inter, mut union) = (0u64, 0u64);
        let max_x = (a.0 + a.2).max(b.0 + b.2);
        let max_y = (a.1 + a.3).max(b.1 + b.3);
        for cx in 0..max_x {
            for cy in 0..max_y {
                let in_a = cover(a, cx, cy);
                let in_b = cover(b, cx, cy);
                if in_a && in_b {
                    inter += 1;
                }
                if in_a || in_b {
                    union += 1;
                }
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Oracle: full dynamic-programming matrix, no row reuse.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn levenshtein_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in dp.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            dp[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = dp[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
            }
        }
        dp[a.len()][b.len()]
    }

    /// Oracle: expand packed planes bit by bit and count set positions.
    pub(crate) fn mask_iou_oracle(a: &[u8], b: &[u8]) -> f64 {
        assert_eq!(a.len(), b.len());
        let (mut inter, mut union) = (0u64, 0u64);
        for i in 0..a.len() * 8 {
            let bit_a = a[i / 8] >> (i % 8) & 1 == 1;
            let bit_b = b[i / 8] >> (i % 8) & 1 == 1;
            if bit_a && bit_b {
                inter += 1;
            }
            if bit_a || bit_b {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    fn boxf(b: (u32, u32, u32, u32)) -> BoundingBox<f64> {
        BoundingBox::new(b.0 as f64, b.1 as f64, b.2 as f64, b.3 as f64)
    }

    #[test]
    fn kronecker_checks_tolerance() {
        assert!(kronecker(1.0, 1.0 + 1e-12, EQ_TOLERANCE).unwrap());
        assert!(!kronecker(1.0, 1.1, EQ_TOLERANCE).unwrap());
        assert!(kronecker(f64::NAN, 1.0, EQ_TOLERANCE).is_err());
    }

    #[test]
    fn heaviside_is_inclusive_at_the_threshold() {
        assert!(heaviside(0.9, 0.9).unwrap());
        assert!(heaviside(1.0, 0.9).unwrap());
        assert!(!heaviside(0.89, 0.9).unwrap());
        assert!(heaviside(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn bbox_iou_matches_grid_oracle_on_random_integer_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let rand_box = |rng: &mut ChaCha8Rng| {
                (
                    rng.random_range(0..12u32),
                    rng.random_range(0..12u32),
                    rng.random_range(0..9u32),
                    rng.random_range(0..9u32),
                )
            };
            let a = rand_box(&mut rng);
            let b = rand_box(&mut rng);
            let got = bbox_iou(&boxf(a), &boxf(b)).unwrap();
            let want = grid_iou_oracle(a, b);
            // Both sides divide the same two integers, so the results
            // must agree bit for bit.
            assert_eq!(got, want, "boxes {a:?} {b:?}");
        }
    }

    #[test]
    fn bbox_iou_handles_degenerate_boxes() {
        let point = BoundingBox::new(2.0, 2.0, 0.0, 0.0);
        assert_eq!(bbox_iou(&point, &point).unwrap(), 0.0);
        let real = BoundingBox::new(0.0, 0.0, 4.0, 4.0);
        assert_eq!(bbox_iou(&point, &real).unwrap(), 0.0);
        let neg = BoundingBox::new(0.0, 0.0, -1.0, 4.0);
        assert!(bbox_iou(&neg, &real).is_err());
    }

    #[test]
    fn bbox_iou_identity_and_symmetry() {
        let a = BoundingBox::new(1.5, 2.5, 3.0, 4.0);
        let b = BoundingBox::new(2.0, 2.0, 3.0, 5.0);
        assert_eq!(bbox_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(bbox_iou(&a, &b).unwrap(), bbox_iou(&b, &a).unwrap());
    }

    #[test]
    fn mask_iou_matches_bit_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let a: Vec<u8> = (0..32).map(|_| rng.random()).collect();
            let b: Vec<u8> = (0..32).map(|_| rng.random()).collect();
            let got: f64 = mask_iou(&a, &b).unwrap();
            assert_eq!(got, mask_iou_oracle(&a, &b));
        }
    }

    #[test]
    fn empty_masks_count_as_identical() {
        let z = vec![0u8; 8];
        assert_eq!(mask_iou::<f64>(&z, &z).unwrap(), 1.0);
        let mut one = z.clone();
        one[3] = 1;
        assert_eq!(mask_iou::<f64>(&z, &one).unwrap(), 0.0);
        assert!(mask_iou::<f64>(&z, &[0u8; 4]).is_err());
    }

    #[test]
    fn levenshtein_matches_full_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let alphabet: Vec<char> = "abcde".chars().collect();
        for _ in 0..300 {
            let word = |rng: &mut ChaCha8Rng| -> String {
                let len = rng.random_range(0..16usize);
                (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
            };
            let a = word(&mut rng);
            let b = word(&mut rng);
            assert_eq!(levenshtein(&a, &b), levenshtein_oracle(&a, &b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn levenshtein_known_values() {
        assert_eq!(levenshtein("", ""), 0);
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("abc", "axc"), 1);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
        assert_eq!(levenshtein("über", "uber"), 1);
    }

    #[test]
    fn linf_deviation_finds_the_largest_gap() {
        let a = [0.1, 0.5, 0.9];
        let b = [0.1, 0.2, 1.0];
        assert!((linf_deviation(&a, &b).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(linf_deviation::<f64>(&[], &[]).unwrap(), 0.0);
        assert!(linf_deviation(&a, &b[..2]).is_err());
        assert!(linf_deviation(&[f64::NAN], &[0.0]).is_err());
    }
}
