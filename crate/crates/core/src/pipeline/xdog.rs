//! XDoG contour compositing.
//!
//! The soft edge response of the luminance darkens the image multiplicatively
//! and uniformly across channels, so hue is untouched.

use super::config::XdogConfig;
use crate::error::{Error, Result};
use crate::ops::{self, radius_for_sigma, Blur};
use crate::scalar::Real;
use crate::tensor::ImageTensor;

pub(crate) struct XdogKernels<T> {
    narrow: Blur<T>,
    wide: Blur<T>,
}

impl<T: Real> XdogKernels<T> {
    pub(crate) fn new(cfg: &XdogConfig) -> Result<Self> {
        let wide_sigma = cfg.k * cfg.sigma_e;
        Ok(Self {
            narrow: Blur::new(cfg.sigma_e, radius_for_sigma(cfg.sigma_e))?,
            wide: Blur::new(wide_sigma, radius_for_sigma(wide_sigma))?,
        })
    }
}

pub(crate) struct XdogTape<T> {
    u: Vec<T>,
    edge: Vec<T>,
    raw: Vec<T>,
    darkness: Vec<T>,
    scale: Vec<T>,
    out: ImageTensor<T>,
}

impl<T: Real> XdogTape<T> {
    pub(crate) fn output(&self) -> &ImageTensor<T> {
        &self.out
    }
}

fn check<T: Real>(img: &ImageTensor<T>, amount: &[T], opacity: &[T]) -> Result<()> {
    img.ensure_channels(3)?;
    if amount.len() != img.pixels() || opacity.len() != img.pixels() {
        return Err(Error::dims(img.pixels(), amount.len().min(opacity.len())));
    }
    Ok(())
}

/// Darkens `img` along XDoG contours by `opacity * clamp(amount * (1 - E), 0, 1)`.
pub fn xdog_contours<T: Real>(
    img: &ImageTensor<T>,
    amount: &[T],
    opacity: &[T],
    cfg: &XdogConfig,
) -> Result<ImageTensor<T>> {
    check(img, amount, opacity)?;
    let kernels = XdogKernels::new(cfg)?;
    Ok(forward(img, amount, opacity, cfg, &kernels).out)
}

/// Soft edge response `E(u)` in `[0, 1]`.
#[inline]
pub fn edge_response<T: Real>(u: T, cfg: &XdogConfig) -> T {
    let eps = T::lit(cfg.epsilon);
    if u >= eps {
        T::one()
    } else {
        (T::one() + (T::lit(cfg.phi) * (u - eps)).tanh())
            .max(T::zero())
            .min(T::one())
    }
}

pub(crate) fn forward<T: Real>(
    img: &ImageTensor<T>,
    amount: &[T],
    opacity: &[T],
    cfg: &XdogConfig,
    kernels: &XdogKernels<T>,
) -> XdogTape<T> {
    let lum = ops::luminance(img).expect("rgb input");
    let g1 = kernels.narrow.apply(&lum);
    let g2 = kernels.wide.apply(&lum);
    let tau = T::lit(cfg.tau);
    let n = img.pixels();
    let mut u = Vec::with_capacity(n);
    let mut edge = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    let mut darkness = Vec::with_capacity(n);
    let mut scale = Vec::with_capacity(n);
    for p in 0..n {
        let up = (T::one() + tau) * g1.data()[p] - tau * g2.data()[p];
        let e = edge_response(up, cfg);
        let r = amount[p] * (T::one() - e);
        let c = r.max(T::zero()).min(T::one());
        u.push(up);
        edge.push(e);
        raw.push(r);
        darkness.push(c);
        scale.push(T::one() - opacity[p] * c);
    }
    let mut out = img.clone();
    for (px, &s) in out.data_mut().chunks_exact_mut(3).zip(&scale) {
        px.iter_mut().for_each(|v| *v *= s);
    }
    XdogTape {
        u,
        edge,
        raw,
        darkness,
        scale,
        out,
    }
}

pub(crate) struct XdogGrads<T> {
    pub image: ImageTensor<T>,
    pub amount: Vec<T>,
    pub opacity: Vec<T>,
}

pub(crate) fn backward<T: Real>(
    img: &ImageTensor<T>,
    amount: &[T],
    opacity: &[T],
    cfg: &XdogConfig,
    kernels: &XdogKernels<T>,
    tape: &XdogTape<T>,
    grad_out: &ImageTensor<T>,
) -> XdogGrads<T> {
    let n = img.pixels();
    let (h, w) = (img.height(), img.width());
    let mut image = ImageTensor::zeros(h, w, 3);
    let mut g_amount = vec![T::zero(); n];
    let mut g_opacity = vec![T::zero(); n];
    let mut g_u = ImageTensor::zeros(h, w, 1);
    let eps = T::lit(cfg.epsilon);
    let phi = T::lit(cfg.phi);
    for p in 0..n {
        let g = &grad_out.data()[p * 3..p * 3 + 3];
        let x = &img.data()[p * 3..p * 3 + 3];
        let s = tape.scale[p];
        let gs = g[0] * x[0] + g[1] * x[1] + g[2] * x[2];
        for c in 0..3 {
            image.data_mut()[p * 3 + c] = g[c] * s;
        }
        g_opacity[p] = -tape.darkness[p] * gs;
        let g_dark = -opacity[p] * gs;
        let r = tape.raw[p];
        if r >= T::zero() && r <= T::one() {
            let e = tape.edge[p];
            g_amount[p] = g_dark * (T::one() - e);
            let g_edge = -amount[p] * g_dark;
            if tape.u[p] < eps {
                let t = e - T::one();
                g_u.data_mut()[p] = g_edge * phi * (T::one() - t * t);
            }
        }
    }
    let tau = T::lit(cfg.tau);
    let mut g_lum = kernels.narrow.adjoint(&g_u.map(|v| v * (T::one() + tau)));
    let wide = kernels.wide.adjoint(&g_u.map(|v| v * tau));
    for (a, b) in g_lum.data_mut().iter_mut().zip(wide.data()) {
        *a -= *b;
    }
    ops::luminance_adjoint_into(&g_lum, &mut image);
    XdogGrads {
        image,
        amount: g_amount,
        opacity: g_opacity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rnd(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    #[test]
    fn constant_image_above_threshold_is_unchanged() {
        let img = ImageTensor::<f64>::filled(12, 12, 3, 0.5);
        let out = xdog_contours(&img, &[2.0; 144], &[1.0; 144], &XdogConfig::default()).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn zero_opacity_is_identity() {
        let img = ImageTensor::from_vec(10, 10, 3, rnd(300, 0.0, 1.0, 1)).unwrap();
        let amount = rnd(100, 0.0, 2.0, 2);
        let out = xdog_contours(&img, &amount, &[0.0; 100], &XdogConfig::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn step_edge_contour_is_localized() {
        let cfg = XdogConfig::default();
        let (h, w, edge) = (16, 40, 20);
        let img = ImageTensor::<f64>::from_fn(h, w, 3, |_, x, _| if x < edge { 0.12 } else { 0.9 });
        let out = xdog_contours(&img, &vec![1.0; h * w], &vec![1.0; h * w], &cfg).unwrap();
        let reach = (3.0 * cfg.k * cfg.sigma_e).ceil() as usize;
        let mut darkened = 0;
        for y in 0..h {
            for x in 0..w {
                let d = (img.get(y, x, 0) - out.get(y, x, 0)).abs();
                let dist = if x < edge { edge - 1 - x } else { x - edge };
                if dist >= reach {
                    assert!(d <= 1e-4, "pixel ({y},{x}) changed by {d}");
                } else if d > 1e-3 {
                    darkened += 1;
                }
                assert!(out.get(y, x, 0) <= img.get(y, x, 0) + 1e-15);
            }
        }
        assert!(darkened > 0, "no contour produced at the edge");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = XdogConfig::default();
        let kernels = XdogKernels::new(&cfg).unwrap();
        let (h, w) = (12, 12);
        // dark-ish image with structure so many pixels sit below the threshold
        let img = ImageTensor::from_vec(h, w, 3, rnd(h * w * 3, 0.0, 0.15, 3)).unwrap();
        let amount = rnd(h * w, 0.2, 0.9, 4);
        let opacity = rnd(h * w, 0.1, 0.9, 5);
        let gout = ImageTensor::from_vec(h, w, 3, rnd(h * w * 3, -1.0, 1.0, 6)).unwrap();
        let tape = forward(&img, &amount, &opacity, &cfg, &kernels);
        let grads = backward(&img, &amount, &opacity, &cfg, &kernels, &tape, &gout);
        let loss = |img: &ImageTensor<f64>, a: &[f64], o: &[f64]| -> f64 {
            let out = forward(img, a, o, &cfg, &kernels).out;
            out.data().iter().zip(gout.data()).map(|(x, y)| x * y).sum()
        };
        // probe only pixels away from the clamp and threshold kinks
        let smooth: Vec<usize> = (0..h * w)
            .filter(|&p| {
                let r = tape.raw[p];
                r > 1e-3 && r < 1.0 - 1e-3 && (tape.u[p] - cfg.epsilon).abs() > 1e-3
            })
            .collect();
        assert!(smooth.len() > 10);
        let e_a = check_gradients(
            |v: &[f64]| loss(&img, v, &opacity),
            &amount,
            &grads.amount,
            &smooth,
            1e-5,
        );
        let e_o = check_gradients(
            |v: &[f64]| loss(&img, &amount, v),
            &opacity,
            &grads.opacity,
            &smooth,
            1e-5,
        );
        assert!(e_a <= 1e-5 && e_o <= 1e-5, "{e_a} {e_o}");
        let img_probes: Vec<usize> = (0..h * w * 3).step_by(13).collect();
        let e_i = check_gradients(
            |v: &[f64]| {
                loss(
                    &ImageTensor::from_vec(h, w, 3, v.to_vec()).unwrap(),
                    &amount,
                    &opacity,
                )
            },
            img.data(),
            grads.image.data(),
            &img_probes,
            1e-6,
        );
        assert!(e_i <= 1e-4, "{e_i}");
    }
}
