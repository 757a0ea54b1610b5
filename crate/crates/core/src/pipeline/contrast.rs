//! Luminance-anchored local contrast.
//!
//! `gain = max(1 + c (L - mean(L)) / max(L, 1e-4), 0)` multiplies all channels.

use crate::error::{Error, Result};
use crate::ops::{self, radius_for_sigma, Blur};
use crate::scalar::Real;
use crate::tensor::ImageTensor;

const LUMA_FLOOR: f64 = 1e-4;

pub(crate) struct ContrastTape<T> {
    lum: Vec<T>,
    detail: Vec<T>,
    raw: Vec<T>,
    gain: Vec<T>,
    out: ImageTensor<T>,
}

impl<T: Real> ContrastTape<T> {
    pub(crate) fn output(&self) -> &ImageTensor<T> {
        &self.out
    }
}

pub(crate) fn mean_blur<T: Real>(sigma: f64) -> Result<Blur<T>> {
    Blur::new(sigma, radius_for_sigma(sigma))
}

pub fn local_contrast<T: Real>(
    img: &ImageTensor<T>,
    contrast: &[T],
    mean_sigma: f64,
) -> Result<ImageTensor<T>> {
    img.ensure_channels(3)?;
    if contrast.len() != img.pixels() {
        return Err(Error::dims(img.pixels(), contrast.len()));
    }
    if contrast.iter().any(|&c| c < T::zero()) {
        return Err(Error::invalid("contrast amount must be non-negative"));
    }
    Ok(forward(img, contrast, &mean_blur(mean_sigma)?).out)
}

pub(crate) fn forward<T: Real>(
    img: &ImageTensor<T>,
    contrast: &[T],
    blur: &Blur<T>,
) -> ContrastTape<T> {
    let lum = ops::luminance(img).expect("rgb input");
    let mean = blur.apply(&lum);
    let floor = T::lit(LUMA_FLOOR);
    let n = img.pixels();
    let mut detail = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    let mut gain = Vec::with_capacity(n);
    let mut out = img.clone();
    for p in 0..n {
        let l = lum.data()[p];
        let q = (l - mean.data()[p]) / l.max(floor);
        let r = T::one() + contrast[p] * q;
        let g = r.max(T::zero());
        out.data_mut()[p * 3..p * 3 + 3]
            .iter_mut()
            .for_each(|v| *v *= g);
        detail.push(q);
        raw.push(r);
        gain.push(g);
    }
    ContrastTape {
        lum: lum.into_vec(),
        detail,
        raw,
        gain,
        out,
    }
}

pub(crate) struct ContrastGrads<T> {
    pub image: ImageTensor<T>,
    pub contrast: Vec<T>,
}

pub(crate) fn backward<T: Real>(
    img: &ImageTensor<T>,
    contrast: &[T],
    blur: &Blur<T>,
    tape: &ContrastTape<T>,
    grad_out: &ImageTensor<T>,
) -> ContrastGrads<T> {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let floor = T::lit(LUMA_FLOOR);
    let mut image = ImageTensor::zeros(h, w, 3);
    let mut g_contrast = vec![T::zero(); n];
    let mut g_lum = ImageTensor::zeros(h, w, 1);
    let mut g_mean = ImageTensor::zeros(h, w, 1);
    for p in 0..n {
        let g = &grad_out.data()[p * 3..p * 3 + 3];
        let x = &img.data()[p * 3..p * 3 + 3];
        let gain = tape.gain[p];
        for c in 0..3 {
            image.data_mut()[p * 3 + c] = g[c] * gain;
        }
        if tape.raw[p] <= T::zero() {
            continue;
        }
        let g_gain = g[0] * x[0] + g[1] * x[1] + g[2] * x[2];
        let q = tape.detail[p];
        g_contrast[p] = g_gain * q;
        let g_q = g_gain * contrast[p];
        let l = tape.lum[p];
        let lm = l.max(floor);
        let dq_dl = if l > floor {
            (T::one() - q) / lm
        } else {
            T::one() / lm
        };
        g_lum.data_mut()[p] = g_q * dq_dl;
        g_mean.data_mut()[p] = -g_q / lm;
    }
    let from_mean = blur.adjoint(&g_mean);
    for (a, b) in g_lum.data_mut().iter_mut().zip(from_mean.data()) {
        *a += *b;
    }
    ops::luminance_adjoint_into(&g_lum, &mut image);
    ContrastGrads {
        image,
        contrast: g_contrast,
    }
}
