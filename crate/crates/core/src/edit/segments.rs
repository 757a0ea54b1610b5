//! Segment-level color tools operating on the abstraction.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::slic::SegmentMap;
use crate::tensor::ImageTensor;

/// Sorted, de-duplicated labels, all of which must exist in `seg`.
fn selection(seg: &SegmentMap, labels: &[u32], what: &str) -> Result<Vec<u32>> {
    if labels.is_empty() {
        return Err(Error::invalid(format!("{what} selection is empty")));
    }
    let set: BTreeSet<u32> = labels.iter().copied().collect();
    if let Some(&bad) = set.iter().find(|&&l| l as usize >= seg.segment_count()) {
        return Err(Error::invalid(format!(
            "{what} label {bad} out of range (map has {} segments)",
            seg.segment_count()
        )));
    }
    Ok(set.into_iter().collect())
}

fn check_t(t: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("interpolation weight must be in [0, 1], got {t}")));
    }
    Ok(())
}

/// Value at quantile `q` of sorted `values`, linearly interpolated.
fn quantile(sorted: &[f32], q: f64) -> f32 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let f = (pos - i as f64) as f32;
    sorted[i] + f * (sorted[j] - sorted[i])
}

/// Maps the mean colors of the source segments, per channel and by rank,
/// onto the distribution of the reference segments' mean colors.
pub fn histogram_match_segments(seg: &SegmentMap, source: &[u32], reference: &[u32]) -> Result<SegmentMap> {
    let source = selection(seg, source, "source")?;
    let reference = selection(seg, reference, "reference")?;
    let mut out = seg.clone();
    let n = source.len();
    for c in 0..3 {
        let mut refs: Vec<f32> = reference.iter().map(|&l| seg.mean_colors()[l as usize][c]).collect();
        refs.sort_by(f32::total_cmp);
        let mut order: Vec<u32> = source.clone();
        order.sort_by(|&a, &b| seg.mean_colors()[a as usize][c].total_cmp(&seg.mean_colors()[b as usize][c]));
        for (rank, &l) in order.iter().enumerate() {
            let q = if n == 1 { 0.5 } else { rank as f64 / (n - 1) as f64 };
            out.mean_colors_mut()[l as usize][c] = quantile(&refs, q);
        }
    }
    Ok(out)
}

/// Blends the selected segments' colors toward the mean of `content` over each segment.
pub fn content_interpolate(seg: &SegmentMap, content: &ImageTensor<f32>, labels: &[u32], t: f32) -> Result<SegmentMap> {
    check_t(t)?;
    content.ensure_channels(3)?;
    if content.height() != seg.height() || content.width() != seg.width() {
        return Err(Error::invalid(format!(
            "content is {}x{}, segmentation is {}x{}",
            content.height(),
            content.width(),
            seg.height(),
            seg.width()
        )));
    }
    let labels = selection(seg, labels, "region")?;
    let mut sums = vec![[0.0f64; 4]; seg.segment_count()];
    for (p, &l) in seg.labels().iter().enumerate() {
        let px = content.pixel(p / seg.width(), p % seg.width());
        let s = &mut sums[l as usize];
        for c in 0..3 {
            s[c] += px[c] as f64;
        }
        s[3] += 1.0;
    }
    let mut out = seg.clone();
    for l in labels {
        let s = sums[l as usize];
        let color = &mut out.mean_colors_mut()[l as usize];
        for c in 0..3 {
            let target = (s[c] / s[3]) as f32;
            color[c] = (1.0 - t) * color[c] + t * target;
        }
    }
    Ok(out)
}

/// Blends the selected segments' colors toward a fixed color.
pub fn color_interpolate(seg: &SegmentMap, labels: &[u32], color: [f32; 3], t: f32) -> Result<SegmentMap> {
    check_t(t)?;
    if color.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(format!("color {color:?} outside [0, 1]")));
    }
    let labels = selection(seg, labels, "region")?;
    let mut out = seg.clone();
    for l in labels {
        let dst = &mut out.mean_colors_mut()[l as usize];
        for c in 0..3 {
            dst[c] = if t == 1.0 { color[c] } else { (1.0 - t) * dst[c] + t * color[c] };
        }
    }
    Ok(out)
}

/// Copies the displayed colors of the source segments, shifted by `(dx, dy)`,
/// onto an overlay. Destination pixels outside the image are dropped.
pub fn copy_region(seg: &SegmentMap, source: &[u32], dx: i64, dy: i64) -> Result<SegmentMap> {
    let source = selection(seg, source, "source")?;
    let mut selected = vec![false; seg.segment_count()];
    for l in source {
        selected[l as usize] = true;
    }
    let (h, w) = (seg.height() as i64, seg.width() as i64);
    let mut writes = Vec::new();
    for (p, &l) in seg.labels().iter().enumerate() {
        if !selected[l as usize] {
            continue;
        }
        let (x, y) = ((p as i64) % w + dx, (p as i64) / w + dy);
        if x >= 0 && y >= 0 && x < w && y < h {
            writes.push(((y * w + x) as usize, seg.color_at(p)));
        }
    }
    if writes.is_empty() {
        return Err(Error::invalid(format!("translation ({dx}, {dy}) moves the whole region out of the image")));
    }
    let mut out = seg.clone();
    for (p, color) in writes {
        out.set_overlay(p, color);
    }
    Ok(out)
}
