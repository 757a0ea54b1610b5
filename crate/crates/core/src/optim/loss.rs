//! Reconstruction and smoothness losses.

use crate::error::Result;
use crate::par;
use crate::pipeline::masks::{MaskKind, ParameterMaskSet};
use crate::scalar::Real;
use crate::tensor::ImageTensor;

pub const DEFAULT_LAMBDA_TV: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_tv: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_tv: DEFAULT_LAMBDA_TV,
        }
    }
}

/// Mean absolute difference over all pixels and channels.
pub fn l1_target_loss<T: Real>(output: &ImageTensor<T>, target: &ImageTensor<T>) -> Result<f64> {
    output.ensure_same_shape(target)?;
    let w = output.width() * output.channels();
    let (a, b) = (output.data(), target.data());
    let total = par::sum_rows(output.height(), |y| {
        let r = y * w..(y + 1) * w;
        a[r.clone()]
            .iter()
            .zip(&b[r])
            .map(|(x, t)| (x.as_f64() - t.as_f64()).abs())
            .sum()
    });
    Ok(total / a.len().max(1) as f64)
}

/// Value and subgradient (`sign(0) = 0`) of [`l1_target_loss`] w.r.t. `output`.
pub fn l1_loss_and_grad<T: Real>(
    output: &ImageTensor<T>,
    target: &ImageTensor<T>,
) -> Result<(f64, ImageTensor<T>)> {
    let value = l1_target_loss(output, target)?;
    let inv_n = T::lit(1.0 / output.data().len().max(1) as f64);
    let mut grad = output.clone();
    for (g, (&o, &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(output.data().iter().zip(target.data()))
    {
        let d = o - t;
        *g = if d > T::zero() {
            inv_n
        } else if d < T::zero() {
            -inv_n
        } else {
            T::zero()
        };
    }
    Ok((value, grad))
}

/// Anisotropic TV of a single `height x width` plane, summed (not averaged).
fn plane_tv<T: Real>(plane: &[T], height: usize, width: usize) -> f64 {
    par::sum_rows(height, |y| {
        let row = &plane[y * width..(y + 1) * width];
        let mut acc = 0.0;
        for x in 0..width {
            if x + 1 < width {
                acc += (row[x + 1] - row[x]).abs().as_f64();
            }
            if y + 1 < height {
                acc += (plane[(y + 1) * width + x] - row[x]).abs().as_f64();
            }
        }
        acc
    })
}

/// Mean anisotropic TV of normalized planes: the sum of absolute forward
/// differences divided by `planes * height * width`.
pub fn tv_of_planes<T: Real>(planes: &[&[T]], height: usize, width: usize) -> f64 {
    if planes.is_empty() || height * width == 0 {
        return 0.0;
    }
    let sum: f64 = planes.iter().map(|p| plane_tv(p, height, width)).sum();
    sum / (planes.len() * height * width) as f64
}

/// Subgradient of [`tv_of_planes`] for one plane, scaled by `scale`.
fn plane_tv_grad<T: Real>(plane: &[T], height: usize, width: usize, scale: T) -> Vec<T> {
    let sign = |d: T| {
        if d > T::zero() {
            scale
        } else if d < T::zero() {
            -scale
        } else {
            T::zero()
        }
    };
    let mut grad = vec![T::zero(); plane.len()];
    par::for_each_row(&mut grad, width, |y, row| {
        for x in 0..width {
            let p = y * width + x;
            let v = plane[p];
            let mut g = T::zero();
            if x + 1 < width {
                g -= sign(plane[p + 1] - v);
            }
            if x > 0 {
                g += sign(v - plane[p - 1]);
            }
            if y + 1 < height {
                g -= sign(plane[p + width] - v);
            }
            if y > 0 {
                g += sign(v - plane[p - width]);
            }
            row[x] = g;
        }
    });
    grad
}

/// TV over the range-normalized views of `kinds`.
pub fn tv_loss_of<T: Real>(masks: &ParameterMaskSet<T>, kinds: &[MaskKind]) -> f64 {
    let planes: Vec<Vec<T>> = kinds.iter().map(|&k| masks.normalized(k)).collect();
    let refs: Vec<&[T]> = planes.iter().map(Vec::as_slice).collect();
    tv_of_planes(&refs, masks.height(), masks.width())
}

/// TV over all eight range-normalized masks.
pub fn tv_loss<T: Real>(masks: &ParameterMaskSet<T>) -> f64 {
    tv_loss_of(masks, &MaskKind::ALL)
}

/// Value of the TV term over `kinds` and its gradient w.r.t. the normalized planes.
pub(crate) fn tv_loss_and_grad<T: Real>(
    masks: &ParameterMaskSet<T>,
    kinds: &[MaskKind],
) -> (f64, Vec<(MaskKind, Vec<T>)>) {
    let (h, w) = (masks.height(), masks.width());
    if kinds.is_empty() {
        return (0.0, Vec::new());
    }
    let scale = T::lit(1.0 / (kinds.len() * h * w) as f64);
    let planes: Vec<Vec<T>> = kinds.iter().map(|&k| masks.normalized(k)).collect();
    let refs: Vec<&[T]> = planes.iter().map(Vec::as_slice).collect();
    let value = tv_of_planes(&refs, h, w);
    let grads = kinds
        .iter()
        .zip(&planes)
        .map(|(&k, p)| (k, plane_tv_grad(p, h, w, scale)))
        .collect();
    (value, grads)
}

/// `l1 + lambda_tv * tv` over all masks.
pub fn total_loss<T: Real>(
    output: &ImageTensor<T>,
    target: &ImageTensor<T>,
    masks: &ParameterMaskSet<T>,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(l1_target_loss(output, target)? + cfg.lambda_tv * tv_loss(masks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rnd(h: usize, w: usize, ch: usize, seed: u64) -> ImageTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(h, w, ch, |_, _, _| rng.random::<f64>())
    }

    #[test]
    fn l1_basics() {
        let a = rnd(8, 8, 3, 1);
        assert_eq!(l1_target_loss(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((l1_target_loss(&b, &a).unwrap() - 0.1).abs() < 1e-12);
        assert!(l1_target_loss(&a, &rnd(8, 7, 3, 1)).is_err());
    }

    #[test]
    fn l1_matches_element_loop() {
        let a = rnd(8, 8, 3, 2).cast::<f32>();
        let b = rnd(8, 8, 3, 3).cast::<f32>();
        let mut acc = 0.0f64;
        for i in 0..a.data().len() {
            acc += (a.data()[i] as f64 - b.data()[i] as f64).abs();
        }
        assert!((l1_target_loss(&a, &b).unwrap() - acc / 192.0).abs() < 1e-7);
    }

    #[test]
    fn l1_gradient_sign_zero_is_zero() {
        let a = rnd(2, 2, 1, 4);
        let (_, g) = l1_loss_and_grad(&a, &a).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tv_constant_is_zero() {
        let mut m = ParameterMaskSet::<f64>::new(6, 5);
        m.fill_ranged(MaskKind::Contrast, 1.7);
        assert_eq!(tv_loss(&m), 0.0);
    }

    #[test]
    fn tv_ramp_and_checkerboard_against_loop_oracle() {
        let (h, w) = (6, 5);
        let ramp: Vec<f64> = (0..h * w)
            .map(|p| (p / w) as f64 / (h - 1) as f64)
            .collect();
        let check: Vec<f64> = (0..h * w).map(|p| ((p / w + p % w) % 2) as f64).collect();
        let flat = vec![0.5; h * w];
        let oracle = |plane: &[f64]| {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    if y + 1 < h {
                        s += (plane[(y + 1) * w + x] - plane[y * w + x]).abs();
                    }
                    if x + 1 < w {
                        s += (plane[y * w + x + 1] - plane[y * w + x]).abs();
                    }
                }
            }
            s / (8 * h * w) as f64
        };
        let with = |p: &[f64]| {
            let mut planes: Vec<&[f64]> = vec![&flat; 8];
            planes[0] = p;
            tv_of_planes(&planes, h, w)
        };
        let tv_ramp = with(&ramp);
        let tv_check = with(&check);
        assert!((tv_ramp - oracle(&ramp)).abs() < 1e-15);
        assert!((tv_ramp - 1.0 / (8 * h) as f64).abs() < 1e-15);
        assert!((tv_check - oracle(&check)).abs() < 1e-15);
        assert!(
            (tv_check - ((h * (w - 1) + w * (h - 1)) as f64) / (8 * h * w) as f64).abs() < 1e-15
        );
        assert!(tv_check > tv_ramp);
    }

    #[test]
    fn tv_gradient_matches_finite_differences() {
        let (h, w) = (5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plane: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
        let g = plane_tv_grad(&plane, h, w, 1.0 / (h * w) as f64);
        let f = |v: &[f64]| tv_of_planes(&[v], h, w);
        let probes: Vec<usize> = (0..h * w).collect();
        assert!(check_gradients(f, &plane, &g, &probes, 1e-7) < 1e-6);
    }

    #[test]
    fn total_is_weighted_sum() {
        let a = rnd(6, 6, 3, 6);
        let b = rnd(6, 6, 3, 7);
        let mut m = ParameterMaskSet::<f64>::new(6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        m.latents_mut(MaskKind::BumpScale)
            .iter_mut()
            .for_each(|z| *z = rng.random_range(-2.0..2.0));
        let l1 = l1_target_loss(&a, &b).unwrap();
        let tv = tv_loss(&m);
        assert!(tv > 0.0);
        let cfg = LossConfig { lambda_tv: 0.2 };
        assert_eq!(total_loss(&a, &b, &m, &cfg).unwrap(), l1 + 0.2 * tv);
        assert_eq!(
            total_loss(&a, &b, &m, &LossConfig { lambda_tv: 0.0 }).unwrap(),
            l1
        );
        assert_eq!(
            total_loss(&a, &a, &ParameterMaskSet::new(6, 6), &cfg).unwrap(),
            0.0
        );
    }
}
