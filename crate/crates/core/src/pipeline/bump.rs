//! Bump-mapped Phong shading.
//!
//! The blurred luminance acts as a height field. Its normals shade the image
//! through a diffuse term normalized so that a flat surface shades to 1 and a
//! white specular highlight. Both act as `c -> s c + t (1, 1, 1)` with
//! `s, t >= 0`, which leaves hue unchanged.

use super::config::BumpConfig;
use crate::error::{Error, Result};
use crate::ops::{self, radius_for_sigma, Blur};
use crate::scalar::Real;
use crate::tensor::{GradientPair, ImageTensor};

pub(crate) struct BumpTape<T> {
    dx: Vec<T>,
    dy: Vec<T>,
    normal: Vec<[T; 3]>,
    len: Vec<T>,
    n_dot_l: Vec<T>,
    n_dot_v: Vec<T>,
    r_dot_v: Vec<T>,
    diffuse: Vec<T>,
    highlight: Vec<T>,
    shade: Vec<T>,
    out: ImageTensor<T>,
}

impl<T: Real> BumpTape<T> {
    pub(crate) fn output(&self) -> &ImageTensor<T> {
        &self.out
    }
}

pub(crate) fn height_blur<T: Real>(cfg: &BumpConfig) -> Result<Blur<T>> {
    Blur::new(cfg.height_sigma, radius_for_sigma(cfg.height_sigma))
}

fn check<T: Real>(img: &ImageTensor<T>, masks: [&[T]; 3]) -> Result<()> {
    img.ensure_channels(3)?;
    if masks.iter().any(|m| m.len() != img.pixels()) {
        return Err(Error::dims(
            img.pixels(),
            masks.iter().map(|m| m.len()).min().unwrap_or(0),
        ));
    }
    if img.height() < 3 || img.width() < 3 {
        return Err(Error::invalid("bump mapping needs at least 3x3 pixels"));
    }
    Ok(())
}

/// Shades `img` with normals of its blurred luminance.
pub fn bump_phong<T: Real>(
    img: &ImageTensor<T>,
    bump_scale: &[T],
    specular: &[T],
    opacity: &[T],
    cfg: &BumpConfig,
) -> Result<ImageTensor<T>> {
    check(img, [bump_scale, specular, opacity])?;
    let blur = height_blur(cfg)?;
    Ok(forward(img, bump_scale, specular, opacity, cfg, &blur).out)
}

#[inline]
fn vec3<T: Real>(v: [f64; 3]) -> [T; 3] {
    v.map(T::lit)
}

#[inline]
fn dot<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn forward<T: Real>(
    img: &ImageTensor<T>,
    bump_scale: &[T],
    specular: &[T],
    opacity: &[T],
    cfg: &BumpConfig,
    blur: &Blur<T>,
) -> BumpTape<T> {
    let lum = ops::luminance(img).expect("rgb input");
    let height = blur.apply(&lum);
    let GradientPair { dx, dy } = ops::central_gradients(&height).expect("1-channel, >= 3x3");
    let light = vec3::<T>(cfg.light_dir);
    let view = vec3::<T>(cfg.view_dir);
    let alpha = T::lit(cfg.shininess);
    let two = T::lit(2.0);
    let n = img.pixels();
    let mut tape = BumpTape {
        dx: dx.into_vec(),
        dy: dy.into_vec(),
        normal: Vec::with_capacity(n),
        len: Vec::with_capacity(n),
        n_dot_l: Vec::with_capacity(n),
        n_dot_v: Vec::with_capacity(n),
        r_dot_v: Vec::with_capacity(n),
        diffuse: Vec::with_capacity(n),
        highlight: Vec::with_capacity(n),
        shade: Vec::with_capacity(n),
        out: img.clone(),
    };
    for p in 0..n {
        let s = bump_scale[p];
        let nu = [-s * tape.dx[p], -s * tape.dy[p], T::one()];
        let len = dot(&nu, &nu).sqrt();
        let nn = nu.map(|v| v / len);
        let ndl = dot(&nn, &light);
        let ndv = dot(&nn, &view);
        let rdv = two * ndl * ndv - dot(&light, &view);
        let diffuse = ndl.max(T::zero()) / light[2];
        let highlight = rdv.max(T::zero()).powf(alpha);
        let o = opacity[p];
        let shade = T::one() - o + o * diffuse;
        let add = o * specular[p] * highlight;
        for v in &mut tape.out.data_mut()[p * 3..p * 3 + 3] {
            *v = *v * shade + add;
        }
        tape.normal.push(nn);
        tape.len.push(len);
        tape.n_dot_l.push(ndl);
        tape.n_dot_v.push(ndv);
        tape.r_dot_v.push(rdv);
        tape.diffuse.push(diffuse);
        tape.highlight.push(highlight);
        tape.shade.push(shade);
    }
    tape
}

pub(crate) struct BumpGrads<T> {
    pub image: ImageTensor<T>,
    pub bump_scale: Vec<T>,
    pub specular: Vec<T>,
    pub opacity: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    img: &ImageTensor<T>,
    bump_scale: &[T],
    specular: &[T],
    opacity: &[T],
    cfg: &BumpConfig,
    blur: &Blur<T>,
    tape: &BumpTape<T>,
    grad_out: &ImageTensor<T>,
) -> BumpGrads<T> {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let light = vec3::<T>(cfg.light_dir);
    let view = vec3::<T>(cfg.view_dir);
    let alpha = T::lit(cfg.shininess);
    let two = T::lit(2.0);
    let mut image = ImageTensor::zeros(h, w, 3);
    let mut g_scale = vec![T::zero(); n];
    let mut g_spec = vec![T::zero(); n];
    let mut g_opacity = vec![T::zero(); n];
    let mut g_dx = ImageTensor::zeros(h, w, 1);
    let mut g_dy = ImageTensor::zeros(h, w, 1);
    for p in 0..n {
        let g = &grad_out.data()[p * 3..p * 3 + 3];
        let x = &img.data()[p * 3..p * 3 + 3];
        let shade = tape.shade[p];
        for c in 0..3 {
            image.data_mut()[p * 3 + c] = g[c] * shade;
        }
        let g_shade = g[0] * x[0] + g[1] * x[1] + g[2] * x[2];
        let g_add = g[0] + g[1] + g[2];
        let o = opacity[p];
        let spec_value = specular[p] * tape.highlight[p];
        g_opacity[p] = g_shade * (tape.diffuse[p] - T::one()) + g_add * spec_value;
        let g_diffuse = g_shade * o;
        let g_spec_value = g_add * o;
        g_spec[p] = g_spec_value * tape.highlight[p];

        let rdv = tape.r_dot_v[p];
        let g_rdv = if rdv > T::zero() {
            g_spec_value * specular[p] * alpha * rdv.powf(alpha - T::one())
        } else {
            T::zero()
        };
        let ndl = tape.n_dot_l[p];
        let mut g_ndl = g_rdv * two * tape.n_dot_v[p];
        if ndl > T::zero() {
            g_ndl += g_diffuse / light[2];
        }
        let g_ndv = g_rdv * two * ndl;
        let gn = [
            g_ndl * light[0] + g_ndv * view[0],
            g_ndl * light[1] + g_ndv * view[1],
            g_ndl * light[2] + g_ndv * view[2],
        ];
        let nn = &tape.normal[p];
        let proj = dot(&gn, nn);
        let inv_len = T::one() / tape.len[p];
        let g_nu = [
            (gn[0] - proj * nn[0]) * inv_len,
            (gn[1] - proj * nn[1]) * inv_len,
        ];
        let s = bump_scale[p];
        g_scale[p] = -g_nu[0] * tape.dx[p] - g_nu[1] * tape.dy[p];
        g_dx.data_mut()[p] = -s * g_nu[0];
        g_dy.data_mut()[p] = -s * g_nu[1];
    }
    let g_height = ops::central_gradients_adjoint(&GradientPair { dx: g_dx, dy: g_dy })
        .expect("matching shapes");
    let g_lum = blur.adjoint(&g_height);
    ops::luminance_adjoint_into(&g_lum, &mut image);
    BumpGrads {
        image,
        bump_scale: g_scale,
        specular: g_spec,
        opacity: g_opacity,
    }
}
