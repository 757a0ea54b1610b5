//! Binary containers for masks and label maps.
//!
//! All integers and floats are little-endian.
//!
//! Mask container: `"TXWV"`, u32 version, u32 height, u32 width, u32 count,
//! `count` names (u32 byte length + UTF-8), `count` pairs of f32 `(lo, hi)`,
//! then `count` planes of `height * width` f32 latents.
//!
//! Label map: `"TXLB"`, u32 version, u32 height, u32 width, u32 segments,
//! `height * width` u32 labels, `segments` RGB triples of f32.

use crate::error::{Error, Result};
use crate::pipeline::masks::{MaskKind, MaskPlanes, MaskRange, ParameterMaskSet, MASK_COUNT};
use crate::slic::SegmentMap;

pub const MASK_MAGIC: &[u8; 4] = b"TXWV";
pub const LABEL_MAGIC: &[u8; 4] = b"TXLB";
pub const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(usize, usize, usize)> {
        let found = self.take(4, "magic")?;
        if found != magic {
            self.pos = 0;
            return Err(self.fail(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            self.pos -= 4;
            return Err(self.fail(format!("unsupported version {version}")));
        }
        let h = self.u32("height")? as usize;
        let w = self.u32("width")? as usize;
        let n = self.u32("count")? as usize;
        Ok((h, w, n))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.fail(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

/// Serializes masks in [`MaskKind::ALL`] order.
pub fn encode_masks(masks: &ParameterMaskSet) -> Vec<u8> {
    let n = masks.pixels();
    let mut out = Vec::with_capacity(20 + MASK_COUNT * (24 + 8 + 4 * n));
    out.extend_from_slice(MASK_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize);
    put_u32(&mut out, masks.height());
    put_u32(&mut out, masks.width());
    put_u32(&mut out, MASK_COUNT);
    for kind in MaskKind::ALL {
        put_u32(&mut out, kind.name().len());
        out.extend_from_slice(kind.name().as_bytes());
    }
    for r in masks.ranges() {
        out.extend_from_slice(&r.lo.to_le_bytes());
        out.extend_from_slice(&r.hi.to_le_bytes());
    }
    for kind in MaskKind::ALL {
        for z in masks.latents(kind) {
            out.extend_from_slice(&z.to_le_bytes());
        }
    }
    out
}

/// Parses a mask container. Masks may appear in any order but all eight
/// must be present exactly once.
pub fn decode_masks(bytes: &[u8]) -> Result<ParameterMaskSet> {
    let mut r = Reader::new(bytes);
    let (h, w, count) = r.header(MASK_MAGIC)?;
    if count != MASK_COUNT {
        r.pos -= 4;
        return Err(r.fail(format!("expected {MASK_COUNT} masks, header says {count}")));
    }
    let mut order = Vec::with_capacity(count);
    for i in 0..count {
        let len = r.u32(&format!("length of name {i}"))? as usize;
        let start = r.pos;
        let raw = r.take(len, &format!("name {i}"))?;
        let name = std::str::from_utf8(raw).map_err(|_| Error::Format {
            offset: start as u64,
            message: format!("name {i} is not UTF-8"),
        })?;
        let kind = MaskKind::from_name(name).map_err(|_| Error::Format {
            offset: start as u64,
            message: format!("unknown mask name '{name}'"),
        })?;
        if order.contains(&kind) {
            return Err(Error::Format {
                offset: start as u64,
                message: format!("duplicate mask name '{name}'"),
            });
        }
        order.push(kind);
    }
    let mut ranges = [MaskRange { lo: 0.0, hi: 1.0 }; MASK_COUNT];
    for &kind in &order {
        let at = r.pos;
        let lo = r.f32(&format!("range of {kind}"))?;
        let hi = r.f32(&format!("range of {kind}"))?;
        ranges[kind.index()] = MaskRange::new(lo, hi).map_err(|e| Error::Format {
            offset: at as u64,
            message: e.to_string(),
        })?;
    }
    let pixels = h.checked_mul(w).ok_or_else(|| r.fail("image size overflows"))?;
    let mut planes = MaskPlanes::zeros(0);
    for (i, &kind) in order.iter().enumerate() {
        let raw = r.take(4 * pixels, &format!("plane {i} ({kind})"))?;
        *planes.get_mut(kind) = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
    }
    r.finish()?;
    ParameterMaskSet::from_latents(h, w, ranges, planes)
}

pub fn encode_labels(seg: &SegmentMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * seg.labels().len() + 12 * seg.segment_count());
    out.extend_from_slice(LABEL_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize);
    put_u32(&mut out, seg.height());
    put_u32(&mut out, seg.width());
    put_u32(&mut out, seg.segment_count());
    for l in seg.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for c in seg.mean_colors() {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a label map. Compactness and the requested count are not stored
/// and must be supplied by the caller.
pub fn decode_labels(bytes: &[u8], compactness: f32, requested_segments: usize) -> Result<SegmentMap> {
    let mut r = Reader::new(bytes);
    let (h, w, count) = r.header(LABEL_MAGIC)?;
    let pixels = h.checked_mul(w).ok_or_else(|| r.fail("image size overflows"))?;
    let raw = r.take(4 * pixels, "labels")?;
    let labels: Vec<u32> = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let at = r.pos;
    let raw = r.take(12 * count, "segment colors")?;
    let colors: Vec<[f32; 3]> = raw
        .chunks_exact(12)
        .map(|c| std::array::from_fn(|i| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().unwrap())))
        .collect();
    r.finish()?;
    SegmentMap::from_parts(h, w, labels, colors, compactness, requested_segments).map_err(|e| Error::Format {
        offset: at as u64,
        message: e.to_string(),
    })
}
