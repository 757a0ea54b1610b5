//! Robust noise level of the parameter masks.

use crate::pipeline::masks::{MaskKind, ParameterMaskSet};

const MAD_TO_SIGMA: f64 = 0.6745;

/// `median(|HH|) / 0.6745` over the diagonal coefficients of a one-level
/// orthonormal Haar transform. Odd trailing rows/columns are dropped.
pub fn plane_noise_sigma(plane: &[f32], height: usize, width: usize) -> f64 {
    let (h2, w2) = (height / 2, width / 2);
    if h2 == 0 || w2 == 0 {
        return 0.0;
    }
    let mut details: Vec<f64> = Vec::with_capacity(h2 * w2);
    for by in 0..h2 {
        let r0 = &plane[2 * by * width..];
        let r1 = &plane[(2 * by + 1) * width..];
        for bx in 0..w2 {
            let (a, b) = (r0[2 * bx] as f64, r0[2 * bx + 1] as f64);
            let (c, d) = (r1[2 * bx] as f64, r1[2 * bx + 1] as f64);
            details.push(((a - b - c + d) * 0.5).abs());
        }
    }
    median(&mut details) / MAD_TO_SIGMA
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Mean [`plane_noise_sigma`] of the eight range-normalized masks.
pub fn estimate_noise_sigma(masks: &ParameterMaskSet) -> f64 {
    let total: f64 = MaskKind::ALL
        .iter()
        .map(|&k| plane_noise_sigma(&masks.normalized(k), masks.height(), masks.width()))
        .sum();
    total / MaskKind::ALL.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn constant_and_ramp_planes() {
        let m = ParameterMaskSet::new(9, 7);
        assert_eq!(estimate_noise_sigma(&m), 0.0);
        let ramp: Vec<f32> = (0..64 * 48).map(|p| (p / 48) as f32 * 0.01 + (p % 48) as f32 * 0.007).collect();
        assert!(plane_noise_sigma(&ramp, 64, 48) <= 1e-3);
        assert_eq!(plane_noise_sigma(&[0.3], 1, 1), 0.0);
    }

    #[test]
    fn haar_detail_by_hand() {
        // a=1, b=0, c=0, d=1 -> HH = 1
        let plane = [1.0, 0.0, 0.0, 1.0];
        assert!((plane_noise_sigma(&plane, 2, 2) - 1.0 / 0.6745).abs() < 1e-12);
    }
}
