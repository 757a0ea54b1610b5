//! Differentiable primitives shared by the filters and losses.
//!
//! Every forward kernel here has a matching `*_adjoint` that maps an output
//! cotangent to an input cotangent. Borders are clamp-to-edge throughout.
//! Adjoints are written as gathers so that each output row is owned by exactly
//! one task and no floating point reduction order depends on scheduling.

use crate::error::{Error, Result};
use crate::par;
use crate::scalar::Real;
use crate::tensor::{GradientPair, ImageTensor};

/// Rec. 709 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel<T: Real>(sigma: f64, radius: usize) -> Vec<T> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::lit(v / total)).collect()
}

/// Radius covering three standard deviations.
pub fn radius_for_sigma(sigma: f64) -> usize {
    ((3.0 * sigma).ceil() as usize).max(1)
}

/// Rows `y` in `0..n` for which `clamp(y + k, 0, n - 1) == r`.
#[inline]
fn preimage(r: usize, k: isize, n: usize) -> std::ops::Range<usize> {
    let n_i = n as isize;
    let r_i = r as isize;
    let lo = if r == 0 { 0 } else { (r_i - k).max(0) };
    let hi = if r == n - 1 {
        n_i - 1
    } else {
        (r_i - k).min(n_i - 1)
    };
    if lo > hi {
        0..0
    } else {
        lo as usize..hi as usize + 1
    }
}

/// Separable Gaussian blur with a precomputed kernel.
#[derive(Clone, Debug)]
pub struct Blur<T> {
    kernel: Vec<T>,
    radius: usize,
}

impl<T: Real> Blur<T> {
    pub fn new(sigma: f64, radius: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        if radius == 0 {
            return Err(Error::invalid("gaussian radius must be at least 1"));
        }
        Ok(Self {
            kernel: gaussian_kernel(sigma, radius),
            radius,
        })
    }

    pub fn kernel(&self) -> &[T] {
        &self.kernel
    }

    pub fn apply(&self, img: &ImageTensor<T>) -> ImageTensor<T> {
        let tmp = self.horizontal(img);
        self.vertical(&tmp)
    }

    pub fn adjoint(&self, grad: &ImageTensor<T>) -> ImageTensor<T> {
        let tmp = self.vertical_adjoint(grad);
        self.horizontal_adjoint(&tmp)
    }

    fn horizontal(&self, src: &ImageTensor<T>) -> ImageTensor<T> {
        let (h, w, ch) = (src.height(), src.width(), src.channels());
        let mut out = ImageTensor::zeros(h, w, ch);
        let r = self.radius as isize;
        par::for_each_row(out.data_mut(), w * ch, |y, row| {
            let s = &src.data()[y * w * ch..(y + 1) * w * ch];
            for x in 0..w {
                for (t, &wk) in self.kernel.iter().enumerate() {
                    let xx = (x as isize + t as isize - r).clamp(0, w as isize - 1) as usize;
                    for c in 0..ch {
                        row[x * ch + c] += wk * s[xx * ch + c];
                    }
                }
            }
        });
        out
    }

    fn horizontal_adjoint(&self, g: &ImageTensor<T>) -> ImageTensor<T> {
        let (h, w, ch) = (g.height(), g.width(), g.channels());
        let mut out = ImageTensor::zeros(h, w, ch);
        let r = self.radius as isize;
        par::for_each_row(out.data_mut(), w * ch, |y, row| {
            let s = &g.data()[y * w * ch..(y + 1) * w * ch];
            for x in 0..w {
                for (t, &wk) in self.kernel.iter().enumerate() {
                    for src_x in preimage(x, t as isize - r, w) {
                        for c in 0..ch {
                            row[x * ch + c] += wk * s[src_x * ch + c];
                        }
                    }
                }
            }
        });
        out
    }

    fn vertical(&self, src: &ImageTensor<T>) -> ImageTensor<T> {
        let (h, w, ch) = (src.height(), src.width(), src.channels());
        let mut out = ImageTensor::zeros(h, w, ch);
        let r = self.radius as isize;
        let stride = w * ch;
        par::for_each_row(out.data_mut(), stride, |y, row| {
            for (t, &wk) in self.kernel.iter().enumerate() {
                let yy = (y as isize + t as isize - r).clamp(0, h as isize - 1) as usize;
                let s = &src.data()[yy * stride..(yy + 1) * stride];
                for (o, &v) in row.iter_mut().zip(s) {
                    *o += wk * v;
                }
            }
        });
        out
    }

    fn vertical_adjoint(&self, g: &ImageTensor<T>) -> ImageTensor<T> {
        let (h, w, ch) = (g.height(), g.width(), g.channels());
        let mut out = ImageTensor::zeros(h, w, ch);
        let r = self.radius as isize;
        let stride = w * ch;
        par::for_each_row(out.data_mut(), stride, |y, row| {
            for (t, &wk) in self.kernel.iter().enumerate() {
                for src_y in preimage(y, t as isize - r, h) {
                    let s = &g.data()[src_y * stride..(src_y + 1) * stride];
                    for (o, &v) in row.iter_mut().zip(s) {
                        *o += wk * v;
                    }
                }
            }
        });
        out
    }
}

/// Separable Gaussian blur, clamp-to-edge, kernel normalized to unit sum.
pub fn gaussian_blur<T: Real>(
    img: &ImageTensor<T>,
    sigma: f64,
    radius: usize,
) -> Result<ImageTensor<T>> {
    Ok(Blur::new(sigma, radius)?.apply(img))
}

/// Adjoint of [`gaussian_blur`].
pub fn gaussian_blur_adjoint<T: Real>(
    grad: &ImageTensor<T>,
    sigma: f64,
    radius: usize,
) -> Result<ImageTensor<T>> {
    Ok(Blur::new(sigma, radius)?.adjoint(grad))
}

/// Central differences `(f[x+1] - f[x-1]) / 2` with clamped borders.
pub fn central_gradients<T: Real>(img: &ImageTensor<T>) -> Result<GradientPair<T>> {
    img.ensure_channels(1)?;
    let (h, w) = (img.height(), img.width());
    if h < 3 || w < 3 {
        return Err(Error::invalid(format!(
            "central gradients need at least 3x3, got {h}x{w}"
        )));
    }
    let half = T::lit(0.5);
    let mut dx = ImageTensor::zeros(h, w, 1);
    let mut dy = ImageTensor::zeros(h, w, 1);
    let src = img.data();
    par::for_each_row2(dx.data_mut(), w, dy.data_mut(), w, |y, rx, ry| {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            rx[x] = (src[y * w + right] - src[y * w + left]) * half;
            ry[x] = (src[down * w + x] - src[up * w + x]) * half;
        }
    });
    Ok(GradientPair { dx, dy })
}

/// Adjoint of [`central_gradients`]: maps `(g_dx, g_dy)` back onto the source.
pub fn central_gradients_adjoint<T: Real>(grad: &GradientPair<T>) -> Result<ImageTensor<T>> {
    let (h, w) = (grad.dx.height(), grad.dx.width());
    grad.dx.ensure_same_shape(&grad.dy)?;
    let half = T::lit(0.5);
    let gx = grad.dx.data();
    let gy = grad.dy.data();
    let mut out = ImageTensor::zeros(h, w, 1);
    par::for_each_row(out.data_mut(), w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for sx in preimage(x, 1, w) {
                acc += half * gx[y * w + sx];
            }
            for sx in preimage(x, -1, w) {
                acc -= half * gx[y * w + sx];
            }
            for sy in preimage(y, 1, h) {
                acc += half * gy[sy * w + x];
            }
            for sy in preimage(y, -1, h) {
                acc -= half * gy[sy * w + x];
            }
            *o = acc;
        }
    });
    Ok(out)
}

/// Rec. 709 luminance of an RGB raster.
pub fn luminance<T: Real>(img: &ImageTensor<T>) -> Result<ImageTensor<T>> {
    img.ensure_channels(3)?;
    let wts = LUMA_WEIGHTS.map(T::lit);
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| wts[0] * p[0] + wts[1] * p[1] + wts[2] * p[2])
        .collect();
    ImageTensor::from_vec(img.height(), img.width(), 1, data)
}

/// Adds the luminance adjoint of `grad_l` into an RGB cotangent.
pub fn luminance_adjoint_into<T: Real>(grad_l: &ImageTensor<T>, grad_rgb: &mut ImageTensor<T>) {
    let wts = LUMA_WEIGHTS.map(T::lit);
    for (g, p) in grad_l
        .data()
        .iter()
        .zip(grad_rgb.data_mut().chunks_exact_mut(3))
    {
        p[0] += wts[0] * *g;
        p[1] += wts[1] * *g;
        p[2] += wts[2] * *g;
    }
}

/// Adjoint of [`luminance`].
pub fn luminance_adjoint<T: Real>(grad_l: &ImageTensor<T>) -> Result<ImageTensor<T>> {
    grad_l.ensure_channels(1)?;
    let mut out = ImageTensor::zeros(grad_l.height(), grad_l.width(), 3);
    luminance_adjoint_into(grad_l, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, ch: usize, seed: u64) -> ImageTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(h, w, ch, |_, _, _| rng.random::<f64>())
    }

    fn dot(a: &ImageTensor<f64>, b: &ImageTensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn blur_preserves_constants() {
        let img = ImageTensor::<f64>::filled(9, 13, 3, 0.37);
        let out = gaussian_blur(&img, 1.7, 4).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn blur_impulse_center_matches_window_enumeration() {
        let mut img = ImageTensor::<f64>::zeros(15, 15, 1);
        img.set(7, 7, 0, 1.0);
        let out = gaussian_blur(&img, 1.0, 3).unwrap();
        let mut norm = 0.0;
        for i in -3i32..=3 {
            for j in -3i32..=3 {
                norm += (-((i * i + j * j) as f64) / 2.0).exp();
            }
        }
        assert!((out.get(7, 7, 0) - 1.0 / norm).abs() < 1e-12);
        // off-center tap (1, 2)
        assert!((out.get(8, 9, 0) - (-2.5f64).exp() / norm).abs() < 1e-12);
    }

    #[test]
    fn blur_semigroup_sigma_one_twice_vs_root_two() {
        let img = random_image(32, 32, 1, 3);
        let twice = gaussian_blur(&gaussian_blur(&img, 1.0, 4).unwrap(), 1.0, 4).unwrap();
        let once = gaussian_blur(&img, 2f64.sqrt(), 6).unwrap();
        // compare away from the clamped border where the semigroup law holds exactly
        let mut worst = 0.0f64;
        for y in 8..24 {
            for x in 8..24 {
                worst = worst.max((twice.get(y, x, 0) - once.get(y, x, 0)).abs());
            }
        }
        assert!(worst <= 1e-3, "worst {worst}");
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let img = ImageTensor::<f32>::zeros(4, 4, 1);
        assert!(matches!(
            gaussian_blur(&img, 0.0, 2),
            Err(Error::InvalidArgument(_))
        ));
        assert!(gaussian_blur(&img, -1.0, 2).is_err());
    }

    #[test]
    fn blur_mean_preserved_on_constant_padded_image() {
        // interior content surrounded by a constant frame wider than the radius
        let mut img = ImageTensor::<f64>::filled(40, 40, 1, 0.5);
        let noise = random_image(20, 20, 1, 9);
        for y in 0..20 {
            for x in 0..20 {
                img.set(y + 10, x + 10, 0, noise.get(y, x, 0));
            }
        }
        let out = gaussian_blur(&img, 1.5, 5).unwrap();
        assert!((out.mean() - img.mean()).abs() <= 1e-6);
    }

    #[test]
    fn blur_adjoint_is_transpose() {
        for &(h, w) in &[(5, 7), (16, 16), (3, 11)] {
            let x = random_image(h, w, 3, 1);
            let g = random_image(h, w, 3, 2);
            let b = Blur::<f64>::new(1.3, 4).unwrap();
            let lhs = dot(&b.apply(&x), &g);
            let rhs = dot(&x, &b.adjoint(&g));
            assert!((lhs - rhs).abs() < 1e-10, "{h}x{w}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn blur_gradient_matches_finite_differences() {
        let img = random_image(16, 16, 1, 5);
        let weights = random_image(16, 16, 1, 6);
        let blur = Blur::<f64>::new(1.0, 3).unwrap();
        let f = |x: &[f64]| {
            let t = ImageTensor::from_vec(16, 16, 1, x.to_vec()).unwrap();
            dot(&blur.apply(&t), &weights)
        };
        let analytic = blur.adjoint(&weights);
        let probes: Vec<usize> = (0..256).step_by(7).collect();
        let err = check_gradients(f, img.data(), analytic.data(), &probes, 1e-5);
        assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn central_gradients_constant_and_ramp() {
        let c = ImageTensor::<f64>::filled(6, 6, 1, 0.4);
        let g = central_gradients(&c).unwrap();
        assert!(g.dx.data().iter().chain(g.dy.data()).all(|&v| v == 0.0));

        let w = 10;
        let ramp = ImageTensor::<f64>::from_fn(5, w, 1, |_, x, _| x as f64 / w as f64);
        let g = central_gradients(&ramp).unwrap();
        for y in 0..5 {
            for x in 1..w - 1 {
                assert!((g.dx.get(y, x, 0) - 1.0 / w as f64).abs() < 1e-12);
            }
        }
        assert!(g.dy.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn central_gradients_match_loop_oracle() {
        let img = random_image(8, 8, 1, 11);
        let g = central_gradients(&img).unwrap();
        let at = |y: isize, x: isize| img.pixel_clamped(y, x)[0];
        for y in 0..8isize {
            for x in 0..8isize {
                let ex = (at(y, x + 1) - at(y, x - 1)) / 2.0;
                let ey = (at(y + 1, x) - at(y - 1, x)) / 2.0;
                assert_eq!(g.dx.get(y as usize, x as usize, 0), ex);
                assert_eq!(g.dy.get(y as usize, x as usize, 0), ey);
            }
        }
    }

    #[test]
    fn central_gradients_errors() {
        assert!(central_gradients(&ImageTensor::<f32>::zeros(4, 4, 3)).is_err());
        assert!(central_gradients(&ImageTensor::<f32>::zeros(2, 4, 1)).is_err());
    }

    #[test]
    fn central_gradients_adjoint_is_transpose() {
        let x = random_image(7, 9, 1, 21);
        let gx = random_image(7, 9, 1, 22);
        let gy = random_image(7, 9, 1, 23);
        let fwd = central_gradients(&x).unwrap();
        let lhs = dot(&fwd.dx, &gx) + dot(&fwd.dy, &gy);
        let back = central_gradients_adjoint(&GradientPair { dx: gx, dy: gy }).unwrap();
        assert!((lhs - dot(&x, &back)).abs() < 1e-12);
    }

    #[test]
    fn luminance_values() {
        let px = |r: f64, g: f64, b: f64| ImageTensor::from_vec(1, 1, 3, vec![r, g, b]).unwrap();
        assert!((luminance(&px(1.0, 1.0, 1.0)).unwrap().get(0, 0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(luminance(&px(1.0, 0.0, 0.0)).unwrap().get(0, 0, 0), 0.2126);
        for c in [0.0, 0.25, 0.5, 0.9] {
            assert!((luminance(&px(c, c, c)).unwrap().get(0, 0, 0) - c).abs() < 1e-15);
        }
        assert!(luminance(&ImageTensor::<f64>::zeros(2, 2, 1)).is_err());
    }

    #[test]
    fn luminance_adjoint_is_transpose() {
        let x = random_image(4, 5, 3, 31);
        let g = random_image(4, 5, 1, 32);
        let lhs = dot(&luminance(&x).unwrap(), &g);
        let rhs = dot(&x, &luminance_adjoint(&g).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn preimage_covers_every_source_exactly_once() {
        for n in [1usize, 2, 5] {
            for k in -4isize..=4 {
                let mut hits = vec![0; n];
                for r in 0..n {
                    for y in preimage(r, k, n) {
                        assert_eq!((y as isize + k).clamp(0, n as isize - 1) as usize, r);
                        hits[y] += 1;
                    }
                }
                assert!(hits.iter().all(|&c| c == 1), "n={n} k={k}");
            }
        }
    }
}
