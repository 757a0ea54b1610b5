//! The eight per-pixel parameter masks and their latent encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Real};

/// Filters of the pipeline that own learnable masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Bilateral,
    Xdog,
    Bump,
    Contrast,
}

impl Filter {
    pub const ALL: [Filter; 4] = [
        Filter::Bilateral,
        Filter::Xdog,
        Filter::Bump,
        Filter::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Filter::Bilateral => "bilateral",
            Filter::Xdog => "xdog",
            Filter::Bump => "bump",
            Filter::Contrast => "contrast",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown filter '{name}' (expected bilateral, xdog, bump or contrast)"
                ))
            })
    }

    pub fn masks(self) -> impl Iterator<Item = MaskKind> {
        MaskKind::ALL
            .into_iter()
            .filter(move |m| m.filter() == self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    BilateralSigmaD,
    BilateralSigmaR,
    ContourAmount,
    ContourOpacity,
    BumpScale,
    PhongSpecular,
    BumpOpacity,
    Contrast,
}

pub const MASK_COUNT: usize = 8;

impl MaskKind {
    pub const ALL: [MaskKind; MASK_COUNT] = [
        MaskKind::BilateralSigmaD,
        MaskKind::BilateralSigmaR,
        MaskKind::ContourAmount,
        MaskKind::ContourOpacity,
        MaskKind::BumpScale,
        MaskKind::PhongSpecular,
        MaskKind::BumpOpacity,
        MaskKind::Contrast,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskKind::BilateralSigmaD => "bilateral_sigma_d",
            MaskKind::BilateralSigmaR => "bilateral_sigma_r",
            MaskKind::ContourAmount => "contour_amount",
            MaskKind::ContourOpacity => "contour_opacity",
            MaskKind::BumpScale => "bump_scale",
            MaskKind::PhongSpecular => "phong_specular",
            MaskKind::BumpOpacity => "bump_opacity",
            MaskKind::Contrast => "contrast",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown mask '{name}'")))
    }

    pub fn filter(self) -> Filter {
        match self {
            MaskKind::BilateralSigmaD | MaskKind::BilateralSigmaR => Filter::Bilateral,
            MaskKind::ContourAmount | MaskKind::ContourOpacity => Filter::Xdog,
            MaskKind::BumpScale | MaskKind::PhongSpecular | MaskKind::BumpOpacity => Filter::Bump,
            MaskKind::Contrast => Filter::Contrast,
        }
    }

    pub fn default_range(self) -> MaskRange {
        let (lo, hi) = match self {
            MaskKind::BilateralSigmaD => (0.3, 3.0),
            MaskKind::BilateralSigmaR => (0.05, 1.0),
            MaskKind::ContourAmount => (0.0, 2.0),
            MaskKind::ContourOpacity => (0.0, 1.0),
            MaskKind::BumpScale => (0.0, 5.0),
            MaskKind::PhongSpecular => (0.0, 0.2),
            MaskKind::BumpOpacity => (0.0, 1.0),
            MaskKind::Contrast => (0.0, 2.0),
        };
        MaskRange { lo, hi }
    }
}

impl std::fmt::Display for MaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRange {
    pub lo: f32,
    pub hi: f32,
}

impl MaskRange {
    pub fn new(lo: f32, hi: f32) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "mask range needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn span(&self) -> f32 {
        self.hi - self.lo
    }
}

pub fn default_ranges() -> [MaskRange; MASK_COUNT] {
    MaskKind::ALL.map(MaskKind::default_range)
}

/// Normalized values are clamped into this band before taking the logit so
/// edited masks stay finite.
pub const ENCODE_MARGIN: f64 = 1e-4;

/// Normalized view `sigmoid(z)` of a latent.
#[inline]
pub fn normalize<T: Real>(z: T) -> T {
    sigmoid(z)
}

/// Derivative of [`normalize`].
#[inline]
pub fn normalize_slope<T: Real>(z: T) -> T {
    let s = sigmoid(z);
    s * (T::one() - s)
}

/// Ranged view `lo + (hi - lo) * normalize(z)` of a latent.
#[inline]
pub fn decode<T: Real>(z: T, range: MaskRange) -> T {
    T::lit(range.lo as f64) + T::lit(range.span() as f64) * normalize(z)
}

/// Latent for a normalized value in `[0, 1]`.
#[inline]
pub fn encode_normalized<T: Real>(v: T) -> T {
    let v = v
        .max(T::lit(ENCODE_MARGIN))
        .min(T::lit(1.0 - ENCODE_MARGIN));
    (v / (T::one() - v)).ln()
}

/// Latent for a ranged value (clamped into the range first).
#[inline]
pub fn encode<T: Real>(p: T, range: MaskRange) -> T {
    encode_normalized((p - T::lit(range.lo as f64)) / T::lit(range.span() as f64))
}

/// Per-mask planes of plain values, indexed by [`MaskKind`].
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPlanes<T> {
    pub planes: [Vec<T>; MASK_COUNT],
}

impl<T: Real> MaskPlanes<T> {
    pub fn zeros(pixels: usize) -> Self {
        Self {
            planes: std::array::from_fn(|_| vec![T::zero(); pixels]),
        }
    }

    pub fn constant(pixels: usize, values: [T; MASK_COUNT]) -> Self {
        Self {
            planes: values.map(|v| vec![v; pixels]),
        }
    }

    #[inline]
    pub fn get(&self, kind: MaskKind) -> &[T] {
        &self.planes[kind.index()]
    }

    #[inline]
    pub fn get_mut(&mut self, kind: MaskKind) -> &mut Vec<T> {
        &mut self.planes[kind.index()]
    }
}

/// The optimization variable: one latent plane per mask plus its range.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterMaskSet<T = f32> {
    height: usize,
    width: usize,
    ranges: [MaskRange; MASK_COUNT],
    latents: MaskPlanes<T>,
}

impl<T: Real> ParameterMaskSet<T> {
    /// All latents at zero, i.e. every mask at the midpoint of its range.
    pub fn new(height: usize, width: usize) -> Self {
        Self::with_ranges(height, width, default_ranges())
    }

    pub fn with_ranges(height: usize, width: usize, ranges: [MaskRange; MASK_COUNT]) -> Self {
        Self {
            height,
            width,
            ranges,
            latents: MaskPlanes::zeros(height * width),
        }
    }

    pub fn from_latents(
        height: usize,
        width: usize,
        ranges: [MaskRange; MASK_COUNT],
        latents: MaskPlanes<T>,
    ) -> Result<Self> {
        for (kind, plane) in MaskKind::ALL.iter().zip(&latents.planes) {
            if plane.len() != height * width {
                return Err(Error::dims(
                    format!("{kind} plane of {} values", height * width),
                    plane.len(),
                ));
            }
        }
        for r in &ranges {
            MaskRange::new(r.lo, r.hi)?;
        }
        Ok(Self {
            height,
            width,
            ranges,
            latents,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
    pub fn ranges(&self) -> &[MaskRange; MASK_COUNT] {
        &self.ranges
    }
    pub fn range(&self, kind: MaskKind) -> MaskRange {
        self.ranges[kind.index()]
    }
    pub fn latent_planes(&self) -> &MaskPlanes<T> {
        &self.latents
    }
    pub fn latents(&self, kind: MaskKind) -> &[T] {
        self.latents.get(kind)
    }
    pub fn latents_mut(&mut self, kind: MaskKind) -> &mut [T] {
        self.latents.get_mut(kind)
    }

    pub fn ranged(&self, kind: MaskKind) -> Vec<T> {
        let range = self.range(kind);
        self.latents(kind)
            .iter()
            .map(|&z| decode(z, range))
            .collect()
    }

    /// Range-normalized view `(P - lo) / (hi - lo)`, in `[0, 1]`.
    pub fn normalized(&self, kind: MaskKind) -> Vec<T> {
        self.latents(kind).iter().map(|&z| normalize(z)).collect()
    }

    pub fn ranged_planes(&self) -> MaskPlanes<T> {
        MaskPlanes {
            planes: MaskKind::ALL.map(|k| self.ranged(k)),
        }
    }

    /// Re-encodes ranged values (clamped to the mask range) into latents.
    pub fn set_ranged(&mut self, kind: MaskKind, values: &[T]) -> Result<()> {
        if values.len() != self.pixels() {
            return Err(Error::dims(self.pixels(), values.len()));
        }
        let range = self.range(kind);
        for (z, &p) in self.latents.get_mut(kind).iter_mut().zip(values) {
            *z = encode(p, range);
        }
        Ok(())
    }

    pub fn fill_ranged(&mut self, kind: MaskKind, value: T) {
        let range = self.range(kind);
        let z = encode(value, range);
        self.latents.get_mut(kind).iter_mut().for_each(|v| *v = z);
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn cast<U: Real>(&self) -> ParameterMaskSet<U> {
        ParameterMaskSet {
            height: self.height,
            width: self.width,
            ranges: self.ranges,
            latents: MaskPlanes {
                planes: std::array::from_fn(|i| {
                    self.latents.planes[i]
                        .iter()
                        .map(|v| U::lit(v.as_f64()))
                        .collect()
                }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in MaskKind::ALL {
            assert_eq!(MaskKind::from_name(k.name()).unwrap(), k);
        }
        assert!(MaskKind::from_name("nope").is_err());
        assert_eq!(Filter::Bump.masks().count(), 3);
        assert!(Filter::from_name("wobble").is_err());
    }

    #[test]
    fn init_is_range_midpoint() {
        let m = ParameterMaskSet::<f64>::new(2, 3);
        for k in MaskKind::ALL {
            let r = k.default_range();
            for v in m.ranged(k) {
                assert!((v - (r.lo as f64 + r.hi as f64) / 2.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ranged_view_stays_in_range_for_extreme_latents() {
        let r = MaskKind::BumpScale.default_range();
        for z in [-1e6f64, -40.0, 0.0, 40.0, 1e6] {
            let p = decode(z, r);
            assert!(p >= r.lo as f64 && p <= r.hi as f64);
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let r = MaskKind::ContourAmount.default_range();
        for p in [0.01f64, 0.5, 1.0, 1.7, 1.99] {
            assert!((decode(encode(p, r), r) - p).abs() < 1e-9);
        }
        // boundary values stay finite
        assert!(encode(0.0f32, r).is_finite() && encode(2.0f32, r).is_finite());
    }
}
