//! Serializable edit operations recorded in a project's edit log.

use serde::{Deserialize, Serialize};

use crate::edit::{self, BlendMask, BrushMode, BrushStroke};
use crate::error::{Error, Result};
use crate::pipeline::masks::{MaskKind, ParameterMaskSet};
use crate::slic::{resegment_region, SegmentMap};
use crate::tensor::ImageTensor;

use super::codec::decode_masks;
use super::imageio::decode_rgb;

/// A set of pixels, given either by segment labels or by a rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Labels(Vec<u32>),
    Rect { x: usize, y: usize, width: usize, height: usize },
}

impl Region {
    pub fn pixels(&self, seg: &SegmentMap) -> Result<Vec<bool>> {
        let (h, w) = (seg.height(), seg.width());
        let mask: Vec<bool> = match self {
            Region::Labels(labels) => {
                if let Some(&bad) = labels.iter().find(|&&l| l as usize >= seg.segment_count()) {
                    return Err(Error::invalid(format!("label {bad} out of range")));
                }
                let mut sel = vec![false; seg.segment_count()];
                labels.iter().for_each(|&l| sel[l as usize] = true);
                seg.labels().iter().map(|&l| sel[l as usize]).collect()
            }
            &Region::Rect { x, y, width, height } => (0..h * w)
                .map(|p| {
                    let (py, px) = (p / w, p % w);
                    px >= x && px < x.saturating_add(width) && py >= y && py < y.saturating_add(height)
                })
                .collect(),
        };
        if !mask.iter().any(|&b| b) {
            return Err(Error::invalid("region selects no pixels"));
        }
        Ok(mask)
    }

    /// Labels of every segment touching the region, ascending.
    pub fn labels(&self, seg: &SegmentMap) -> Result<Vec<u32>> {
        let pixels = self.pixels(seg)?;
        let mut hit = vec![false; seg.segment_count()];
        for (&l, &on) in seg.labels().iter().zip(&pixels) {
            if on {
                hit[l as usize] = true;
            }
        }
        Ok((0..seg.segment_count() as u32).filter(|&l| hit[l as usize]).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Global {
        mask: MaskKind,
        factor: f32,
        #[serde(default)]
        offset: f32,
    },
    Brush {
        mask: MaskKind,
        center: (f32, f32),
        radius: f32,
        #[serde(default = "default_hardness")]
        hardness: f32,
        value: f32,
        #[serde(default = "default_mode")]
        mode: BrushMode,
    },
    /// Interpolates two mask sets (assets; `None` means the current masks).
    Blend {
        #[serde(default)]
        a: Option<String>,
        #[serde(default)]
        b: Option<String>,
        blend: String,
    },
    Match {
        source: Region,
        reference: Region,
    },
    Lod {
        region: Region,
        segments: usize,
    },
    Copy {
        source: Region,
        dx: i64,
        dy: i64,
    },
    Color {
        region: Region,
        color: [f32; 3],
        t: f32,
    },
    Content {
        region: Region,
        content: String,
        t: f32,
    },
}

fn default_hardness() -> f32 {
    0.5
}

fn default_mode() -> BrushMode {
    BrushMode::Set
}

/// Segments and masks an edit operates on.
#[derive(Clone, Debug, PartialEq)]
pub struct EditState {
    pub segments: SegmentMap,
    pub masks: ParameterMaskSet,
}

/// Everything besides the state that an edit may read.
pub struct EditContext<'a> {
    pub input: &'a ImageTensor<f32>,
    pub asset: &'a dyn Fn(&str) -> Result<&'a [u8]>,
}

impl EditOp {
    pub fn name(&self) -> &'static str {
        match self {
            EditOp::Global { .. } => "global",
            EditOp::Brush { .. } => "brush",
            EditOp::Blend { .. } => "blend",
            EditOp::Match { .. } => "match",
            EditOp::Lod { .. } => "lod",
            EditOp::Copy { .. } => "copy",
            EditOp::Color { .. } => "color",
            EditOp::Content { .. } => "content",
        }
    }

    /// Asset ids this edit depends on.
    pub fn assets(&self) -> Vec<&str> {
        match self {
            EditOp::Blend { a, b, blend } => a.iter().chain(b.iter()).map(String::as_str).chain([blend.as_str()]).collect(),
            EditOp::Content { content, .. } => vec![content.as_str()],
            _ => Vec::new(),
        }
    }

    pub fn apply(&self, state: &EditState, ctx: &EditContext) -> Result<EditState> {
        let mut next = state.clone();
        match self {
            &EditOp::Global { mask, factor, offset } => {
                next.masks = edit::global_adjust(&state.masks, mask, factor, offset)?;
            }
            &EditOp::Brush {
                mask,
                center,
                radius,
                hardness,
                value,
                mode,
            } => {
                let stroke = BrushStroke {
                    center,
                    radius,
                    hardness,
                    value,
                    mode,
                };
                next.masks = edit::apply_brush(&state.masks, mask, &stroke)?;
            }
            EditOp::Blend { a, b, blend } => {
                let load = |id: &Option<String>| -> Result<ParameterMaskSet> {
                    match id {
                        Some(id) => decode_masks((ctx.asset)(id)?),
                        None => Ok(state.masks.clone()),
                    }
                };
                let blend = BlendMask::from_bytes((ctx.asset)(blend)?)?;
                next.masks = edit::interpolate_masks(&load(a)?, &load(b)?, &blend)?;
            }
            EditOp::Match { source, reference } => {
                let src = source.labels(&state.segments)?;
                let dst = reference.labels(&state.segments)?;
                next.segments = edit::histogram_match_segments(&state.segments, &src, &dst)?;
            }
            &EditOp::Lod { ref region, segments } => {
                let pixels = region.pixels(&state.segments)?;
                next.segments = resegment_region(ctx.input, &state.segments, &pixels, segments)?;
            }
            &EditOp::Copy { ref source, dx, dy } => {
                let labels = source.labels(&state.segments)?;
                next.segments = edit::copy_region(&state.segments, &labels, dx, dy)?;
            }
            &EditOp::Color { ref region, color, t } => {
                let labels = region.labels(&state.segments)?;
                next.segments = edit::color_interpolate(&state.segments, &labels, color, t)?;
            }
            EditOp::Content { region, content, t } => {
                let labels = region.labels(&state.segments)?;
                let img = decode_rgb((ctx.asset)(content)?)?;
                next.segments = edit::content_interpolate(&state.segments, &img, &labels, *t)?;
            }
        }
        Ok(next)
    }
}

/// Edit log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditEntry {
    pub id: u64,
    #[serde(flatten)]
    pub op: EditOp,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shapes() {
        let op: EditOp = serde_json::from_str(r#"{"op":"global","mask":"bump_scale","factor":1.5}"#).unwrap();
        assert_eq!(
            op,
            EditOp::Global {
                mask: MaskKind::BumpScale,
                factor: 1.5,
                offset: 0.0
            }
        );
        let op: EditOp =
            serde_json::from_str(r#"{"op":"copy","source":{"rect":{"x":0,"y":0,"width":2,"height":2}},"dx":3,"dy":0}"#).unwrap();
        assert_eq!(op.name(), "copy");
        let entry = EditEntry { id: 4, op };
        let json = serde_json::to_string(&entry).unwrap();
        assert!(json.starts_with(r#"{"id":4,"op":"copy""#), "{json}");
        assert_eq!(serde_json::from_str::<EditEntry>(&json).unwrap(), entry);
        assert!(serde_json::from_str::<EditOp>(r#"{"op":"global","mask":"nope","factor":1}"#).is_err());
        assert!(serde_json::from_str::<EditOp>(r#"{"op":"explode"}"#).is_err());
    }

    #[test]
    fn regions() {
        let labels: Vec<u32> = (0..16).map(|p| ((p % 4) / 2 + 2 * (p / 8)) as u32).collect();
        let seg = SegmentMap::from_parts(4, 4, labels, vec![[0.0; 3]; 4], 10.0, 4).unwrap();
        let r = Region::Rect {
            x: 1,
            y: 1,
            width: 2,
            height: 1,
        };
        assert_eq!(r.labels(&seg).unwrap(), vec![0, 1]);
        assert_eq!(r.pixels(&seg).unwrap().iter().filter(|&&b| b).count(), 2);
        assert_eq!(Region::Labels(vec![3]).pixels(&seg).unwrap().iter().filter(|&&b| b).count(), 4);
        assert!(Region::Labels(vec![9]).pixels(&seg).is_err());
        assert!(Region::Rect {
            x: 9,
            y: 0,
            width: 1,
            height: 1
        }
        .pixels(&seg)
        .is_err());
    }
}
