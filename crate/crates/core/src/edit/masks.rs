//! Edits applied to parameter masks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::masks::{encode, MaskKind, ParameterMaskSet};

/// `P <- clamp(P * factor + offset, lo, hi)` over the whole mask.
pub fn global_adjust(masks: &ParameterMaskSet, kind: MaskKind, factor: f32, offset: f32) -> Result<ParameterMaskSet> {
    if !factor.is_finite() || !offset.is_finite() {
        return Err(Error::invalid("factor and offset must be finite"));
    }
    let range = masks.range(kind);
    let values: Vec<f32> = masks
        .ranged(kind)
        .into_iter()
        .map(|p| (p * factor + offset).clamp(range.lo, range.hi))
        .collect();
    let mut out = masks.clone();
    out.set_ranged(kind, &values)?;
    Ok(out)
}

/// Same as [`global_adjust`] but looks the mask up by name.
pub fn global_adjust_named(masks: &ParameterMaskSet, name: &str, factor: f32, offset: f32) -> Result<ParameterMaskSet> {
    global_adjust(masks, MaskKind::from_name(name)?, factor, offset)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrushMode {
    Set,
    Add,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrushStroke {
    pub center: (f32, f32),
    pub radius: f32,
    pub hardness: f32,
    pub value: f32,
    pub mode: BrushMode,
}

impl BrushStroke {
    /// Falloff weight at distance `d` from the center: 1 inside the hard
    /// core, smoothstep down to 0 at the radius.
    pub fn weight(&self, d: f32) -> f32 {
        let core = self.hardness * self.radius;
        if d <= core {
            1.0
        } else if d >= self.radius {
            0.0
        } else {
            let t = (self.radius - d) / (self.radius - core);
            t * t * (3.0 - 2.0 * t)
        }
    }
}

/// Paints `stroke` into one mask. Only pixels under the (clipped) disk change.
pub fn apply_brush(masks: &ParameterMaskSet, kind: MaskKind, stroke: &BrushStroke) -> Result<ParameterMaskSet> {
    let range = masks.range(kind);
    if !(stroke.radius > 0.0) || !stroke.radius.is_finite() {
        return Err(Error::invalid(format!("brush radius must be positive, got {}", stroke.radius)));
    }
    if !(0.0..=1.0).contains(&stroke.hardness) {
        return Err(Error::invalid(format!("brush hardness must be in [0, 1], got {}", stroke.hardness)));
    }
    if !stroke.value.is_finite() || !stroke.center.0.is_finite() || !stroke.center.1.is_finite() {
        return Err(Error::invalid("brush value and center must be finite"));
    }
    if stroke.mode == BrushMode::Set && (stroke.value < range.lo || stroke.value > range.hi) {
        return Err(Error::invalid(format!(
            "brush value {} outside the {kind} range [{}, {}]",
            stroke.value, range.lo, range.hi
        )));
    }
    let (h, w) = (masks.height(), masks.width());
    let (cx, cy) = stroke.center;
    let r = stroke.radius;
    let x0 = (cx - r).floor().max(0.0) as usize;
    let y0 = (cy - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as i64).min(w as i64 - 1);
    let y1 = ((cy + r).ceil() as i64).min(h as i64 - 1);
    let mut out = masks.clone();
    let mut touched = 0usize;
    if x1 >= 0 && y1 >= 0 {
        let latents = out.latents_mut(kind);
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                let wt = stroke.weight(d);
                if wt <= 0.0 {
                    continue;
                }
                touched += 1;
                let z = &mut latents[y * w + x];
                let p = crate::pipeline::masks::decode(*z, range);
                let next = match stroke.mode {
                    BrushMode::Set => (1.0 - wt) * p + wt * stroke.value,
                    BrushMode::Add => (p + wt * stroke.value).clamp(range.lo, range.hi),
                };
                if next != p {
                    *z = encode(next, range);
                }
            }
        }
    }
    if touched == 0 {
        return Err(Error::invalid(format!(
            "brush at ({cx}, {cy}) with radius {r} does not touch the {w}x{h} image"
        )));
    }
    Ok(out)
}

/// Per-pixel blend weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendMask {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl BlendMask {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::dims(height * width, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("blend mask contains non-finite values"));
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { height, width, values })
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Grayscale rescaled to `[0, 1]`; 16-bit sources keep their precision.
    pub fn from_image(img: &image::DynamicImage) -> Self {
        let gray = img.to_luma16();
        let (w, h) = gray.dimensions();
        let values = gray.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        Self {
            height: h as usize,
            width: w as usize,
            values,
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(Self::from_image(&image::load_from_memory(bytes)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Per mask, `P = (1 - b) * P_A + b * P_B` in ranged space. Pixels with
/// `b = 0` or `b = 1` copy the latent of `a` or `b` unchanged.
pub fn interpolate_masks(a: &ParameterMaskSet, b: &ParameterMaskSet, blend: &BlendMask) -> Result<ParameterMaskSet> {
    if !a.same_dims(b) || blend.height != a.height() || blend.width != a.width() {
        return Err(Error::invalid(format!(
            "dimension mismatch: masks {}x{} and {}x{}, blend {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width(),
            blend.height,
            blend.width
        )));
    }
    let mut out = a.clone();
    for kind in MaskKind::ALL {
        let range = a.range(kind);
        let (pa, pb) = (a.ranged(kind), b.ranged(kind));
        let zb = b.latents(kind);
        let latents = out.latents_mut(kind);
        for (p, &t) in blend.values.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            latents[p] = if t == 1.0 && b.range(kind) == range {
                zb[p]
            } else {
                encode((1.0 - t) * pa[p] + t * pb[p], range)
            };
        }
    }
    Ok(out)
}
