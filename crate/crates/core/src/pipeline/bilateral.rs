//! Bilateral filter with per-pixel spatial and range sigmas.
//!
//! Both sigmas are read at the window center `p`:
//! `w(p, q) = exp(-|p - q|^2 / 2 sd(p)^2 - |I(p) - I(q)|^2 / 2 sr(p)^2)`.

use crate::error::{Error, Result};
use crate::par;
use crate::scalar::Real;
use crate::tensor::ImageTensor;

/// Rows per scatter band in the backward pass. Fixed so that the summation
/// order never depends on the number of threads.
const BAND_ROWS: usize = 16;

/// Forward state kept for the backward pass.
pub(crate) struct BilateralTape<T> {
    /// Normalized weights `w / sum(w)`, `taps` per pixel.
    weights: Vec<T>,
    out: ImageTensor<T>,
}

/// Squared distance of every window tap, row-major from `(-r, -r)`.
fn tap_distances(radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut v = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            v.push((dy * dy + dx * dx) as f64);
        }
    }
    v
}

/// Copy of `img` extended by `radius` pixels of edge replication on each side.
fn pad<T: Real>(img: &ImageTensor<T>, radius: usize) -> Vec<T> {
    let (h, w) = (img.height(), img.width());
    let pw = w + 2 * radius;
    let mut out = Vec::with_capacity((h + 2 * radius) * pw * 3);
    for py in 0..h + 2 * radius {
        let y = py.saturating_sub(radius).min(h - 1);
        for px in 0..pw {
            let x = px.saturating_sub(radius).min(w - 1);
            out.extend_from_slice(img.pixel(y, x));
        }
    }
    out
}

fn check<T: Real>(img: &ImageTensor<T>, sigma_d: &[T], sigma_r: &[T], radius: usize) -> Result<()> {
    img.ensure_channels(3)?;
    if sigma_d.len() != img.pixels() || sigma_r.len() != img.pixels() {
        return Err(Error::dims(img.pixels(), sigma_d.len().min(sigma_r.len())));
    }
    if radius == 0 {
        return Err(Error::invalid("bilateral radius must be at least 1"));
    }
    if sigma_d.iter().chain(sigma_r).any(|&s| !(s > T::zero())) {
        return Err(Error::invalid("bilateral sigmas must be strictly positive"));
    }
    Ok(())
}

/// Edge-preserving smoothing of an RGB image.
pub fn bilateral_filter<T: Real>(
    img: &ImageTensor<T>,
    sigma_d: &[T],
    sigma_r: &[T],
    radius: usize,
) -> Result<ImageTensor<T>> {
    check(img, sigma_d, sigma_r, radius)?;
    Ok(forward(img, sigma_d, sigma_r, radius).out)
}

pub(crate) fn forward<T: Real>(
    img: &ImageTensor<T>,
    sigma_d: &[T],
    sigma_r: &[T],
    radius: usize,
) -> BilateralTape<T> {
    let (h, w) = (img.height(), img.width());
    let d2: Vec<T> = tap_distances(radius).into_iter().map(T::lit).collect();
    let nt = d2.len();
    let side = 2 * radius + 1;
    let padded = pad(img, radius);
    let prow = (w + 2 * radius) * 3;
    let mut out = ImageTensor::zeros(h, w, 3);
    let mut weights = vec![T::zero(); h * w * nt];
    let half = T::lit(0.5);
    par::for_each_row2(
        out.data_mut(),
        w * 3,
        &mut weights,
        w * nt,
        |y, orow, wrow| {
            for x in 0..w {
                let p = y * w + x;
                let center = img.pixel(y, x);
                let inv_d = half / (sigma_d[p] * sigma_d[p]);
                let inv_r = half / (sigma_r[p] * sigma_r[p]);
                let wp = &mut wrow[x * nt..(x + 1) * nt];
                let mut total = T::zero();
                let mut acc = [T::zero(); 3];
                for j in 0..side {
                    let start = (y + j) * prow + x * 3;
                    let window = &padded[start..start + side * 3];
                    let taps = &mut wp[j * side..(j + 1) * side];
                    let dist = &d2[j * side..(j + 1) * side];
                    for ((q, wt), &dd) in window.chunks_exact(3).zip(taps).zip(dist) {
                        let c0 = q[0] - center[0];
                        let c1 = q[1] - center[1];
                        let c2 = q[2] - center[2];
                        let range2 = c0 * c0 + c1 * c1 + c2 * c2;
                        let v = (-(dd * inv_d + range2 * inv_r)).exp();
                        *wt = v;
                        total += v;
                        acc[0] += v * q[0];
                        acc[1] += v * q[1];
                        acc[2] += v * q[2];
                    }
                }
                let inv_total = T::one() / total;
                wp.iter_mut().for_each(|v| *v *= inv_total);
                for c in 0..3 {
                    orow[x * 3 + c] = acc[c] * inv_total;
                }
            }
        },
    );
    BilateralTape { weights, out }
}

impl<T: Real> BilateralTape<T> {
    pub(crate) fn output(&self) -> &ImageTensor<T> {
        &self.out
    }
}

/// Cotangents of the image and both sigma masks.
pub(crate) struct BilateralGrads<T> {
    pub image: ImageTensor<T>,
    pub sigma_d: Vec<T>,
    pub sigma_r: Vec<T>,
}

pub(crate) fn backward<T: Real>(
    img: &ImageTensor<T>,
    sigma_d: &[T],
    sigma_r: &[T],
    radius: usize,
    tape: &BilateralTape<T>,
    grad_out: &ImageTensor<T>,
) -> BilateralGrads<T> {
    let (h, w) = (img.height(), img.width());
    let d2: Vec<T> = tap_distances(radius).into_iter().map(T::lit).collect();
    let nt = d2.len();
    let side = 2 * radius + 1;
    let padded = pad(img, radius);
    let pw = w + 2 * radius;
    let prow = pw * 3;
    let bands = h.div_ceil(BAND_ROWS);

    struct Band<T> {
        /// Padded-image cotangent for padded rows `y0 .. y1 + 2r`.
        image: Vec<T>,
        sigma_d: Vec<T>,
        sigma_r: Vec<T>,
    }

    let results: Vec<Band<T>> = par::map_range(bands, |b| {
        let y0 = b * BAND_ROWS;
        let y1 = (y0 + BAND_ROWS).min(h);
        let mut gimg = vec![T::zero(); (y1 - y0 + 2 * radius) * prow];
        let mut gsd = vec![T::zero(); (y1 - y0) * w];
        let mut gsr = vec![T::zero(); (y1 - y0) * w];
        for y in y0..y1 {
            for x in 0..w {
                let p = y * w + x;
                let g = &grad_out.data()[p * 3..p * 3 + 3];
                let center = img.pixel(y, x);
                let out = tape.out.pixel(y, x);
                let sd = sigma_d[p];
                let sr = sigma_r[p];
                let inv_sr2 = T::one() / (sr * sr);
                let inv_sd3 = T::one() / (sd * sd * sd);
                let inv_sr3 = inv_sr2 / sr;
                let wp = &tape.weights[p * nt..(p + 1) * nt];
                let mut acc_sd = T::zero();
                let mut acc_sr = T::zero();
                let mut center_grad = [T::zero(); 3];
                for j in 0..side {
                    let start = (y + j) * prow + x * 3;
                    let window = &padded[start..start + side * 3];
                    let local = (y - y0 + j) * prow + x * 3;
                    let gwin = &mut gimg[local..local + side * 3];
                    let taps = &wp[j * side..(j + 1) * side];
                    let dist = &d2[j * side..(j + 1) * side];
                    for (((q, gq), &wn), &dd) in window
                        .chunks_exact(3)
                        .zip(gwin.chunks_exact_mut(3))
                        .zip(taps)
                        .zip(dist)
                    {
                        let delta = [q[0] - center[0], q[1] - center[1], q[2] - center[2]];
                        let range2 =
                            delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2];
                        // dL/dw scaled by the normalized weight
                        let b = wn
                            * (g[0] * (q[0] - out[0])
                                + g[1] * (q[1] - out[1])
                                + g[2] * (q[2] - out[2]));
                        acc_sd += b * dd * inv_sd3;
                        acc_sr += b * range2 * inv_sr3;
                        let bi = b * inv_sr2;
                        for c in 0..3 {
                            gq[c] += g[c] * wn - bi * delta[c];
                            center_grad[c] += bi * delta[c];
                        }
                    }
                }
                let base = (y - y0 + radius) * prow + (x + radius) * 3;
                for c in 0..3 {
                    gimg[base + c] += center_grad[c];
                }
                gsd[(y - y0) * w + x] = acc_sd;
                gsr[(y - y0) * w + x] = acc_sr;
            }
        }
        Band {
            image: gimg,
            sigma_d: gsd,
            sigma_r: gsr,
        }
    });

    let mut gpad = vec![T::zero(); (h + 2 * radius) * prow];
    let mut sigma_d_grad = Vec::with_capacity(h * w);
    let mut sigma_r_grad = Vec::with_capacity(h * w);
    for (b, band) in results.into_iter().enumerate() {
        let start = b * BAND_ROWS * prow;
        for (dst, src) in gpad[start..start + band.image.len()].iter_mut().zip(&band.image) {
            *dst += *src;
        }
        sigma_d_grad.extend(band.sigma_d);
        sigma_r_grad.extend(band.sigma_r);
    }
    // fold the replicated border back onto the edge pixels it copies
    let mut image = ImageTensor::zeros(h, w, 3);
    for py in 0..h + 2 * radius {
        let y = py.saturating_sub(radius).min(h - 1);
        for px in 0..pw {
            let x = px.saturating_sub(radius).min(w - 1);
            let src = (py * pw + px) * 3;
            let dst = (y * w + x) * 3;
            for c in 0..3 {
                image.data_mut()[dst + c] += gpad[src + c];
            }
        }
    }
    BilateralGrads {
        image,
        sigma_d: sigma_d_grad,
        sigma_r: sigma_r_grad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rnd(h: usize, w: usize, ch: usize, lo: f64, hi: f64, seed: u64) -> ImageTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(h, w, ch, |_, _, _| rng.random_range(lo..hi))
    }

    /// Direct double loop, written independently of the kernel above.
    fn naive(img: &ImageTensor<f64>, sd: &[f64], sr: &[f64], radius: isize) -> ImageTensor<f64> {
        let (h, w) = (img.height() as isize, img.width() as isize);
        let mut out = ImageTensor::zeros(h as usize, w as usize, 3);
        for y in 0..h {
            for x in 0..w {
                let p = (y * w + x) as usize;
                let mut num = [0.0; 3];
                let mut den = 0.0;
                for j in -radius..=radius {
                    for i in -radius..=radius {
                        let q = img.pixel_clamped(y + j, x + i);
                        let c = img.pixel(y as usize, x as usize);
                        let r2: f64 = (0..3).map(|k| (q[k] - c[k]).powi(2)).sum();
                        let wt = (-((i * i + j * j) as f64) / (2.0 * sd[p] * sd[p])).exp()
                            * (-r2 / (2.0 * sr[p] * sr[p])).exp();
                        den += wt;
                        for k in 0..3 {
                            num[k] += wt * q[k];
                        }
                    }
                }
                for k in 0..3 {
                    out.set(y as usize, x as usize, k, num[k] / den);
                }
            }
        }
        out
    }

    #[test]
    fn constant_image_is_unchanged() {
        let img = ImageTensor::<f64>::filled(10, 10, 3, 0.3);
        let sd = rnd(10, 10, 1, 0.3, 3.0, 1).into_vec();
        let sr = rnd(10, 10, 1, 0.05, 1.0, 2).into_vec();
        let out = bilateral_filter(&img, &sd, &sr, 3).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn matches_naive_double_loop() {
        let img = rnd(8, 8, 3, 0.0, 1.0, 3);
        let sd = rnd(8, 8, 1, 0.3, 3.0, 4).into_vec();
        let sr = rnd(8, 8, 1, 0.05, 1.0, 5).into_vec();
        let out = bilateral_filter(&img, &sd, &sr, 2).unwrap();
        assert!(out.max_abs_diff(&naive(&img, &sd, &sr, 2)) < 1e-6);
    }

    #[test]
    fn sharp_range_kernel_preserves_step_edge() {
        let img = ImageTensor::<f64>::from_fn(12, 12, 3, |_, x, _| if x < 6 { 0.0 } else { 1.0 });
        let sd = vec![3.0; 144];
        let sr = vec![0.05; 144];
        let out = bilateral_filter(&img, &sd, &sr, 5).unwrap();
        // cross-edge weight is exp(-3 / (2 * 0.05^2)) ~ 0, same-side pixels are equal
        assert!(out.max_abs_diff(&img) <= 1e-3);
    }

    #[test]
    fn output_stays_within_window_gamut() {
        let img = rnd(9, 9, 3, 0.0, 1.0, 6);
        let sd = rnd(9, 9, 1, 0.3, 3.0, 7).into_vec();
        let sr = rnd(9, 9, 1, 0.05, 1.0, 8).into_vec();
        let r = 2isize;
        let out = bilateral_filter(&img, &sd, &sr, r as usize).unwrap();
        for y in 0..9isize {
            for x in 0..9isize {
                for c in 0..3 {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for j in -r..=r {
                        for i in -r..=r {
                            let v = img.pixel_clamped(y + j, x + i)[c];
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    let v = out.get(y as usize, x as usize, c);
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (h, w, r) = (9, 11, 2);
        let img = rnd(h, w, 3, 0.0, 1.0, 10);
        let sd = rnd(h, w, 1, 0.5, 2.0, 11).into_vec();
        let sr = rnd(h, w, 1, 0.2, 0.8, 12).into_vec();
        let gout = rnd(h, w, 3, -1.0, 1.0, 13);
        let tape = forward(&img, &sd, &sr, r);
        let grads = backward(&img, &sd, &sr, r, &tape, &gout);
        let loss = |img: &ImageTensor<f64>, sd: &[f64], sr: &[f64]| -> f64 {
            let o = forward(img, sd, sr, r).out;
            o.data().iter().zip(gout.data()).map(|(a, b)| a * b).sum()
        };
        let probes: Vec<usize> = (0..h * w).step_by(5).collect();
        let e_sd = check_gradients(
            |v: &[f64]| loss(&img, v, &sr),
            &sd,
            &grads.sigma_d,
            &probes,
            1e-5,
        );
        let e_sr = check_gradients(
            |v: &[f64]| loss(&img, &sd, v),
            &sr,
            &grads.sigma_r,
            &probes,
            1e-5,
        );
        let img_probes: Vec<usize> = (0..h * w * 3).step_by(7).collect();
        let e_img = check_gradients(
            |v: &[f64]| {
                loss(
                    &ImageTensor::from_vec(h, w, 3, v.to_vec()).unwrap(),
                    &sd,
                    &sr,
                )
            },
            img.data(),
            grads.image.data(),
            &img_probes,
            1e-5,
        );
        assert!(
            e_sd <= 1e-5 && e_sr <= 1e-5 && e_img <= 1e-5,
            "{e_sd} {e_sr} {e_img}"
        );
    }

    #[test]
    fn band_scatter_is_exact_across_band_boundaries() {
        // taller than one band so several bands overlap
        let (h, w, r) = (40, 6, 3);
        let img = rnd(h, w, 3, 0.0, 1.0, 20);
        let sd = rnd(h, w, 1, 0.5, 2.0, 21).into_vec();
        let sr = rnd(h, w, 1, 0.2, 0.8, 22).into_vec();
        let gout = rnd(h, w, 3, -1.0, 1.0, 23);
        let tape = forward(&img, &sd, &sr, r);
        let grads = backward(&img, &sd, &sr, r, &tape, &gout);
        let loss = |v: &[f64]| -> f64 {
            let o = forward(
                &ImageTensor::from_vec(h, w, 3, v.to_vec()).unwrap(),
                &sd,
                &sr,
                r,
            )
            .out;
            o.data().iter().zip(gout.data()).map(|(a, b)| a * b).sum()
        };
        let probes: Vec<usize> = (0..h * w * 3).step_by(11).collect();
        assert!(check_gradients(loss, img.data(), grads.image.data(), &probes, 1e-5) <= 1e-5);
    }

    #[test]
    fn rejects_non_positive_sigma() {
        let img = ImageTensor::<f64>::zeros(3, 3, 3);
        assert!(bilateral_filter(&img, &[0.0; 9], &[1.0; 9], 1).is_err());
    }
}
