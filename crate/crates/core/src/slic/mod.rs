//! SLIC superpixels and the uniform-color abstraction image.
//!
//! Seeds are placed on an `nx x ny` grid whose product is as close as possible
//! to the requested count while matching the image aspect ratio, nudged to the
//! lowest-gradient pixel of their 3x3 neighborhood, and refined by k-means in
//! `(L*, a*, b*, x, y)` with distance `sqrt(d_lab^2 + (m / S)^2 d_xy^2)` over
//! `2S x 2S` windows.

mod color;
mod connectivity;

pub use color::srgb_to_lab;
pub use connectivity::{component_sizes, enforce_connectivity};

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::ImageTensor;

pub const DEFAULT_COMPACTNESS: f32 = 10.0;
pub const DEFAULT_ITERATIONS: usize = 10;

/// Per-pixel segment labels plus the color every segment is painted with.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    mean_colors: Vec<[f32; 3]>,
    compactness: f32,
    requested_segments: usize,
    /// Literal per-pixel colors painted over the segment colors (copy edits).
    overlay: Vec<Option<[f32; 3]>>,
}

impl SegmentMap {
    /// Builds a map from raw labels, computing mean colors from `img`.
    /// Labels must be contiguous `0..count`.
    pub fn from_labels(
        img: &ImageTensor<f32>,
        labels: Vec<u32>,
        compactness: f32,
        requested_segments: usize,
    ) -> Result<Self> {
        img.ensure_channels(3)?;
        if labels.len() != img.pixels() {
            return Err(Error::dims(img.pixels(), labels.len()));
        }
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("segment labels are not contiguous"));
        }
        let mean_colors = mean_colors(img, &labels, count);
        Ok(Self {
            height: img.height(),
            width: img.width(),
            labels,
            mean_colors,
            compactness,
            requested_segments,
            overlay: Vec::new(),
        })
    }

    /// Rebuilds a map from stored parts without recomputing colors.
    pub fn from_parts(
        height: usize,
        width: usize,
        labels: Vec<u32>,
        mean_colors: Vec<[f32; 3]>,
        compactness: f32,
        requested_segments: usize,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::dims(height * width, labels.len()));
        }
        if labels.iter().any(|&l| l as usize >= mean_colors.len()) {
            return Err(Error::invalid("label without a color"));
        }
        Ok(Self {
            height,
            width,
            labels,
            mean_colors,
            compactness,
            requested_segments,
            overlay: Vec::new(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
    pub fn segment_count(&self) -> usize {
        self.mean_colors.len()
    }
    pub fn mean_colors(&self) -> &[[f32; 3]] {
        &self.mean_colors
    }
    pub fn mean_colors_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.mean_colors
    }
    pub fn compactness(&self) -> f32 {
        self.compactness
    }
    pub fn requested_segments(&self) -> usize {
        self.requested_segments
    }
    pub fn overlay(&self) -> &[Option<[f32; 3]>] {
        &self.overlay
    }

    pub fn has_overlay(&self) -> bool {
        self.overlay.iter().any(Option::is_some)
    }

    /// Paints a literal color over pixel `index`.
    pub fn set_overlay(&mut self, index: usize, color: [f32; 3]) {
        if self.overlay.is_empty() {
            self.overlay = vec![None; self.labels.len()];
        }
        self.overlay[index] = Some(color);
    }

    /// Color displayed at pixel `index`: overlay if present, else the segment color.
    pub fn color_at(&self, index: usize) -> [f32; 3] {
        self.overlay
            .get(index)
            .copied()
            .flatten()
            .unwrap_or(self.mean_colors[self.labels[index] as usize])
    }

    fn ensure_matches(&self, img: &ImageTensor<f32>) -> Result<()> {
        if img.height() != self.height || img.width() != self.width {
            return Err(Error::dims(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", img.height(), img.width()),
            ));
        }
        Ok(())
    }
}

fn mean_colors(img: &ImageTensor<f32>, labels: &[u32], count: usize) -> Vec<[f32; 3]> {
    let mut sums = vec![[0.0f64; 3]; count];
    let mut counts = vec![0usize; count];
    for (p, &l) in labels.iter().enumerate() {
        let px = img.pixel(p / img.width(), p % img.width());
        for c in 0..3 {
            sums[l as usize][c] += px[c] as f64;
        }
        counts[l as usize] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| s.map(|v| if n > 0 { (v / n as f64) as f32 } else { 0.0 }))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct SlicParams {
    pub segments: usize,
    pub compactness: f32,
    pub iterations: usize,
}

impl SlicParams {
    pub fn new(segments: usize) -> Self {
        Self {
            segments,
            compactness: DEFAULT_COMPACTNESS,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

/// SLIC segmentation of an RGB image into roughly `segments` superpixels.
pub fn slic_segment(
    img: &ImageTensor<f32>,
    segments: usize,
    compactness: f32,
    iterations: usize,
) -> Result<SegmentMap> {
    img.ensure_channels(3)?;
    let params = SlicParams {
        segments,
        compactness,
        iterations,
    };
    validate(&params, img.pixels())?;
    let (h, w) = (img.height(), img.width());
    let lab = lab_image(img);
    let active = vec![true; h * w];
    let labels = slic_core(&lab, &active, h, w, &params)
        .into_iter()
        .map(|l| l.expect("all pixels active"))
        .collect();
    SegmentMap::from_labels(img, labels, compactness, segments)
}

fn validate(params: &SlicParams, area: usize) -> Result<()> {
    if params.segments == 0 {
        return Err(Error::invalid("segment count must be at least 1"));
    }
    if params.segments > area {
        return Err(Error::invalid(format!(
            "segment count {} exceeds pixel count {area}",
            params.segments
        )));
    }
    if params.iterations == 0 {
        return Err(Error::invalid("SLIC needs at least one iteration"));
    }
    if !(params.compactness >= 0.0) {
        return Err(Error::invalid("compactness must be non-negative"));
    }
    Ok(())
}

fn lab_image(img: &ImageTensor<f32>) -> Vec<[f32; 3]> {
    img.data()
        .chunks_exact(3)
        .map(|p| srgb_to_lab([p[0] as f64, p[1] as f64, p[2] as f64]).map(|v| v as f32))
        .collect()
}

/// Seed grid `(nx, ny)` whose product tracks `segments` and whose cell shape
/// tracks the image aspect ratio. Ties prefer more columns.
pub(crate) fn choose_grid(segments: usize, width: usize, height: usize) -> (usize, usize) {
    let target = segments as f64;
    let aspect = width as f64 / height as f64;
    let mut best = (1, 1);
    let mut best_score = f64::INFINITY;
    for nx in 1..=segments.min(width) {
        let ny = ((target / nx as f64).round() as usize).clamp(1, height);
        let count_err = ((nx * ny) as f64 / target).ln().abs();
        let aspect_err = ((nx as f64 / ny as f64) / aspect).ln().abs();
        let score = count_err + aspect_err;
        if score <= best_score + 1e-12 {
            best_score = score.min(best_score);
            best = (nx, ny);
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f32; 3],
    x: f32,
    y: f32,
}

/// Runs SLIC over the `active` pixels of an `h x w` Lab raster. Returns
/// contiguous labels for active pixels and `None` elsewhere.
fn slic_core(
    lab: &[[f32; 3]],
    active: &[bool],
    h: usize,
    w: usize,
    params: &SlicParams,
) -> Vec<Option<u32>> {
    let area = active.iter().filter(|&&a| a).count();
    let (nx, ny) = choose_grid(params.segments, w, h);
    let step_x = w as f64 / nx as f64;
    let step_y = h as f64 / ny as f64;
    let spacing = (area as f64 / params.segments as f64).sqrt().max(1.0);

    let grad = |p: usize| -> f32 {
        let (y, x) = ((p / w) as isize, (p % w) as isize);
        let at = |yy: isize, xx: isize| {
            lab[yy.clamp(0, h as isize - 1) as usize * w + xx.clamp(0, w as isize - 1) as usize]
        };
        let (l, r, u, d) = (at(y, x - 1), at(y, x + 1), at(y - 1, x), at(y + 1, x));
        (0..3)
            .map(|c| (r[c] - l[c]).powi(2) + (d[c] - u[c]).powi(2))
            .sum()
    };

    let mut centers: Vec<Center> = Vec::with_capacity(nx * ny);
    let perturb = step_x.min(step_y) >= 3.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let sx = (((ix as f64 + 0.5) * step_x) as usize).min(w - 1);
            let sy = (((iy as f64 + 0.5) * step_y) as usize).min(h - 1);
            let mut best = sy * w + sx;
            if perturb {
                let mut best_g = if active[best] {
                    grad(best)
                } else {
                    f32::INFINITY
                };
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (yy, xx) = (sy as isize + dy, sx as isize + dx);
                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                            continue;
                        }
                        let q = yy as usize * w + xx as usize;
                        if !active[q] {
                            continue;
                        }
                        let g = grad(q);
                        if g < best_g {
                            best_g = g;
                            best = q;
                        }
                    }
                }
            }
            if active[best] {
                centers.push(Center {
                    lab: lab[best],
                    x: (best % w) as f32,
                    y: (best / w) as f32,
                });
            }
        }
    }
    if centers.is_empty() {
        // region narrower than the seed grid: start from the active pixel nearest its centroid
        let (mut cx, mut cy) = (0.0f64, 0.0f64);
        for p in (0..h * w).filter(|&p| active[p]) {
            cx += (p % w) as f64;
            cy += (p / w) as f64;
        }
        cx /= area as f64;
        cy /= area as f64;
        let p = (0..h * w)
            .filter(|&p| active[p])
            .min_by(|&a, &b| {
                let da = ((a % w) as f64 - cx).powi(2) + ((a / w) as f64 - cy).powi(2);
                let db = ((b % w) as f64 - cx).powi(2) + ((b / w) as f64 - cy).powi(2);
                da.total_cmp(&db)
            })
            .expect("non-empty region");
        centers.push(Center {
            lab: lab[p],
            x: (p % w) as f32,
            y: (p / w) as f32,
        });
    }

    let s = spacing as f32;
    let spatial_weight = (params.compactness / s).powi(2);
    let cell = spacing.ceil().max(1.0) as usize;
    let (bw, bh) = (w.div_ceil(cell), h.div_ceil(cell));
    let mut labels: Vec<u32> = vec![u32::MAX; h * w];

    for _ in 0..params.iterations {
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); bw * bh];
        for (i, c) in centers.iter().enumerate() {
            let bx = ((c.x.max(0.0) as usize) / cell).min(bw - 1);
            let by = ((c.y.max(0.0) as usize) / cell).min(bh - 1);
            buckets[by * bw + bx].push(i as u32);
        }
        let prev = labels.clone();
        par::for_each_row(&mut labels, w, |y, row| {
            let by = y / cell;
            for (x, out) in row.iter_mut().enumerate() {
                let p = y * w + x;
                if !active[p] {
                    continue;
                }
                let bx = x / cell;
                let px = lab[p];
                let mut best = (f32::INFINITY, u32::MAX);
                for yy in by.saturating_sub(1)..(by + 2).min(bh) {
                    for xx in bx.saturating_sub(1)..(bx + 2).min(bw) {
                        for &ci in &buckets[yy * bw + xx] {
                            let c = &centers[ci as usize];
                            let (ddx, ddy) = (x as f32 - c.x, y as f32 - c.y);
                            if ddx.abs() > s || ddy.abs() > s {
                                continue;
                            }
                            let d = distance2(&px, c, ddx, ddy, spatial_weight);
                            if d < best.0 || (d == best.0 && ci < best.1) {
                                best = (d, ci);
                            }
                        }
                    }
                }
                if best.1 == u32::MAX {
                    best.1 = prev[p];
                }
                if best.1 == u32::MAX {
                    // not covered by any window yet: nearest center overall
                    for (ci, c) in centers.iter().enumerate() {
                        let (ddx, ddy) = (x as f32 - c.x, y as f32 - c.y);
                        let d = distance2(&px, c, ddx, ddy, spatial_weight);
                        if d < best.0 {
                            best = (d, ci as u32);
                        }
                    }
                }
                *out = best.1;
            }
        });

        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for p in (0..h * w).filter(|&p| active[p]) {
            let a = &mut acc[labels[p] as usize];
            let l = lab[p];
            a[0] += l[0] as f64;
            a[1] += l[1] as f64;
            a[2] += l[2] as f64;
            a[3] += (p % w) as f64;
            a[4] += (p / w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                let n = a[5];
                c.lab = [(a[0] / n) as f32, (a[1] / n) as f32, (a[2] / n) as f32];
                c.x = (a[3] / n) as f32;
                c.y = (a[4] / n) as f32;
            }
        }
    }

    let min_size = (area / params.segments) / 4;
    let filled: Vec<u32> = labels
        .iter()
        .map(|&l| if l == u32::MAX { 0 } else { l })
        .collect();
    connectivity::enforce_connectivity_masked(&filled, active, h, w, min_size)
}

#[inline]
fn distance2(px: &[f32; 3], c: &Center, dx: f32, dy: f32, spatial_weight: f32) -> f32 {
    let dl = px[0] - c.lab[0];
    let da = px[1] - c.lab[1];
    let db = px[2] - c.lab[2];
    dl * dl + da * da + db * db + spatial_weight * (dx * dx + dy * dy)
}

/// Paints every pixel with its segment color (and any overlay color).
pub fn render_abstraction(img: &ImageTensor<f32>, seg: &SegmentMap) -> Result<ImageTensor<f32>> {
    seg.ensure_matches(img)?;
    Ok(seg.render())
}

impl SegmentMap {
    /// The abstraction image `I_a`.
    pub fn render(&self) -> ImageTensor<f32> {
        let mut data = Vec::with_capacity(self.labels.len() * 3);
        for p in 0..self.labels.len() {
            data.extend_from_slice(&self.color_at(p));
        }
        ImageTensor::from_vec(self.height, self.width, 3, data).expect("shape is consistent")
    }
}

/// Re-runs SLIC with `segments` superpixels inside `region` only.
///
/// Labels of pixels outside the region keep their values. Labels freed by the
/// region are reused first; if fewer are needed, the highest labels move down
/// into the remaining gaps. A label whose outside part falls apart is split,
/// the largest piece keeping the id.
pub fn resegment_region(
    img: &ImageTensor<f32>,
    seg: &SegmentMap,
    region: &[bool],
    segments: usize,
) -> Result<SegmentMap> {
    seg.ensure_matches(img)?;
    img.ensure_channels(3)?;
    let (h, w) = (seg.height, seg.width);
    if region.len() != h * w {
        return Err(Error::dims(h * w, region.len()));
    }
    let area = region.iter().filter(|&&r| r).count();
    if area == 0 {
        return Err(Error::invalid("region is empty"));
    }
    let params = SlicParams {
        segments,
        compactness: seg.compactness,
        iterations: DEFAULT_ITERATIONS,
    };
    validate(&params, area)?;

    // bounding box
    let (mut y0, mut y1, mut x0, mut x1) = (h, 0, w, 0);
    for p in (0..h * w).filter(|&p| region[p]) {
        let (y, x) = (p / w, p % w);
        y0 = y0.min(y);
        y1 = y1.max(y);
        x0 = x0.min(x);
        x1 = x1.max(x);
    }
    let (bh, bw) = (y1 - y0 + 1, x1 - x0 + 1);
    let full_lab = lab_image(img);
    let mut lab = Vec::with_capacity(bh * bw);
    let mut active = Vec::with_capacity(bh * bw);
    for y in y0..=y1 {
        for x in x0..=x1 {
            lab.push(full_lab[y * w + x]);
            active.push(region[y * w + x]);
        }
    }
    let local = slic_core(&lab, &active, bh, bw, &params);
    let local_count = local
        .iter()
        .flatten()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0);

    let old_count = seg.segment_count();
    let mut outside_pixels = vec![0usize; old_count];
    let mut touched = vec![false; old_count];
    for p in 0..h * w {
        if region[p] {
            touched[seg.labels[p] as usize] = true;
        } else {
            outside_pixels[seg.labels[p] as usize] += 1;
        }
    }
    let freed: Vec<u32> = (0..old_count as u32)
        .filter(|&l| outside_pixels[l as usize] == 0)
        .collect();
    let mut next = old_count as u32;
    let local_ids: Vec<u32> = (0..local_count)
        .map(|i| {
            freed.get(i).copied().unwrap_or_else(|| {
                next += 1;
                next - 1
            })
        })
        .collect();

    let mut labels = seg.labels.clone();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if let Some(l) = local[(y - y0) * bw + (x - x0)] {
                labels[y * w + x] = local_ids[l as usize];
            }
        }
    }
    let mut colors_known: Vec<bool> = (0..next as usize)
        .map(|l| l < old_count && !touched[l])
        .collect();
    let mut colors: Vec<[f32; 3]> = (0..next as usize)
        .map(|l| {
            if l < old_count {
                seg.mean_colors[l]
            } else {
                [0.0; 3]
            }
        })
        .collect();

    // split outside labels that lost connectivity
    let outside: Vec<bool> = region.iter().map(|r| !r).collect();
    for l in (0..old_count).filter(|&l| touched[l] && outside_pixels[l] > 0) {
        let pieces = pieces_of(&labels, &outside, h, w, l as u32);
        if pieces.len() > 1 {
            let largest = (0..pieces.len())
                .max_by_key(|&i| (pieces[i].len(), usize::MAX - i))
                .unwrap();
            for (i, piece) in pieces.iter().enumerate() {
                if i == largest {
                    continue;
                }
                for &p in piece {
                    labels[p] = next;
                }
                colors.push([0.0; 3]);
                colors_known.push(false);
                next += 1;
            }
        }
    }

    // close gaps left by unused freed ids: move the highest label into the lowest gap
    let mut used = vec![false; next as usize];
    for &l in &labels {
        used[l as usize] = true;
    }
    let mut remap: Vec<u32> = (0..next).collect();
    let mut hi = next as usize;
    for gap in 0..next as usize {
        if used[gap] {
            continue;
        }
        while hi > gap + 1 && !used[hi - 1] {
            hi -= 1;
        }
        if hi <= gap + 1 {
            break;
        }
        hi -= 1;
        remap[hi] = gap as u32;
        used[gap] = true;
        used[hi] = false;
        colors[gap] = colors[hi];
        colors_known[gap] = colors_known[hi];
    }
    let count = used.iter().rposition(|&u| u).map_or(0, |i| i + 1);
    for l in labels.iter_mut() {
        *l = remap[*l as usize];
    }
    colors.truncate(count);
    colors_known.truncate(count);

    let fresh = mean_colors(img, &labels, count);
    for l in 0..count {
        if !colors_known[l] {
            colors[l] = fresh[l];
        }
    }
    Ok(SegmentMap {
        height: h,
        width: w,
        labels,
        mean_colors: colors,
        compactness: seg.compactness,
        requested_segments: seg.requested_segments,
        overlay: seg.overlay.clone(),
    })
}

fn pieces_of(labels: &[u32], allowed: &[bool], h: usize, w: usize, label: u32) -> Vec<Vec<usize>> {
    let mut seen = vec![false; labels.len()];
    let mut pieces = Vec::new();
    for s in 0..labels.len() {
        if seen[s] || !allowed[s] || labels[s] != label {
            continue;
        }
        let mut piece = Vec::new();
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(p) = stack.pop() {
            piece.push(p);
            for q in connectivity::neighbors4(p, h, w) {
                if !seen[q] && allowed[q] && labels[q] == label {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        pieces.push(piece);
    }
    pieces
}
