//! On-disk projects: input image, segmentation, fitted masks and edit log.
//!
//! A project directory holds `manifest.json`, `input.png`, `abstraction.png`
//! (the live abstraction, written for inspection only), `labels.bin` and
//! `masks.txwv` (the decomposition before any edit) and `assets/` (files
//! referenced by edits, named by their SHA-256). The live state is always
//! the decomposition with the edit log replayed on top.

pub mod codec;
pub mod imageio;
pub mod ops;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edit::estimate_noise_sigma;
use crate::error::{Error, Result};
use crate::optim::{decompose, l1_target_loss, tv_loss, DecomposeOptions, Decomposition, TraceRow};
use crate::pipeline::masks::{default_ranges, MaskKind, MaskRange, ParameterMaskSet, MASK_COUNT};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::slic::{slic_segment, SegmentMap, DEFAULT_COMPACTNESS, DEFAULT_ITERATIONS};
use crate::tensor::{quantize_u8, ImageTensor};

pub use ops::{EditEntry, EditOp, EditState, Region};

pub const MANIFEST_VERSION: &str = "1.0.0";
const MANIFEST: &str = "manifest.json";
const INPUT: &str = "input.png";
const ABSTRACTION: &str = "abstraction.png";
const LABELS: &str = "labels.bin";
const MASKS: &str = "masks.txwv";
const ASSETS: &str = "assets";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub segments: usize,
    pub compactness: f32,
    pub iterations: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            segments: 1000,
            compactness: DEFAULT_COMPACTNESS,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

/// Settings and final losses of the decomposition stored in a project.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda_tv: f64,
    pub final_l1: f64,
    pub final_tv: f64,
    pub final_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub height: usize,
    pub width: usize,
    pub pipeline: PipelineConfig,
    pub ranges: [MaskRange; MASK_COUNT],
    pub segmentation: SegmentationParams,
    pub decomposition: Option<DecompositionSummary>,
    pub edits: Vec<EditEntry>,
    pub next_edit_id: u64,
}

/// `{l1, tv, noise_sigma}` of the live state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l1: f64,
    pub tv: f64,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug)]
pub struct Project {
    manifest: Manifest,
    input: ImageTensor<f32>,
    base: Option<EditState>,
    live: Option<EditState>,
    assets: BTreeMap<String, Vec<u8>>,
}

fn major(version: &str) -> Option<u64> {
    version.split('.').next()?.parse().ok()
}

impl Project {
    /// A project for `input` that has not been decomposed yet. The input is
    /// quantized to 8 bits, as it is stored.
    pub fn new(input: ImageTensor<f32>) -> Result<Self> {
        input.ensure_channels(3)?;
        if input.pixels() == 0 {
            return Err(Error::invalid("input image is empty"));
        }
        let input = input.map(|v| quantize_u8(v) as f32 / 255.0);
        Ok(Self {
            manifest: Manifest {
                version: MANIFEST_VERSION.into(),
                height: input.height(),
                width: input.width(),
                pipeline: PipelineConfig::default(),
                ranges: default_ranges(),
                segmentation: SegmentationParams::default(),
                decomposition: None,
                edits: Vec::new(),
                next_edit_id: 1,
            },
            input,
            base: None,
            live: None,
            assets: BTreeMap::new(),
        })
    }

    /// Decodes a PNG or JPEG into a new project.
    pub fn from_image_bytes(bytes: &[u8]) -> Result<Self> {
        Self::new(imageio::decode_rgb(bytes)?)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn input(&self) -> &ImageTensor<f32> {
        &self.input
    }

    pub fn is_decomposed(&self) -> bool {
        self.base.is_some()
    }

    pub fn edits(&self) -> &[EditEntry] {
        &self.manifest.edits
    }

    fn live(&self) -> Result<&EditState> {
        self.live.as_ref().ok_or_else(|| Error::invalid("project has not been decomposed"))
    }

    pub fn segments(&self) -> Result<&SegmentMap> {
        Ok(&self.live()?.segments)
    }

    pub fn masks(&self) -> Result<&ParameterMaskSet> {
        Ok(&self.live()?.masks)
    }

    /// Segments, fits and stores the masks. Clears the edit log.
    pub fn decompose(
        &mut self,
        segmentation: SegmentationParams,
        pipeline: PipelineConfig,
        opts: &DecomposeOptions,
        progress: impl FnMut(&TraceRow),
    ) -> Result<Decomposition> {
        pipeline.validate()?;
        opts.validate()?;
        let seg = slic_segment(&self.input, segmentation.segments, segmentation.compactness, segmentation.iterations)?;
        let result = decompose(&seg.render(), &self.input, &pipeline, opts, progress)?;
        self.manifest.segmentation = segmentation;
        self.manifest.pipeline = pipeline;
        self.manifest.ranges = opts.ranges;
        self.manifest.decomposition = Some(DecompositionSummary {
            iterations: opts.iterations,
            learning_rate: opts.learning_rate,
            lambda_tv: opts.lambda_tv,
            final_l1: result.final_l1,
            final_tv: result.final_tv,
            final_total: result.final_total,
        });
        self.set_base(EditState {
            segments: seg,
            masks: result.masks.clone(),
        });
        Ok(result)
    }

    fn set_base(&mut self, state: EditState) {
        self.manifest.edits.clear();
        self.manifest.next_edit_id = 1;
        self.assets.clear();
        self.live = Some(state.clone());
        self.base = Some(state);
    }

    /// Stores `bytes` as an asset and returns its id.
    pub fn add_asset(&mut self, bytes: Vec<u8>) -> String {
        let id = hex::encode(Sha256::digest(&bytes));
        self.assets.entry(id.clone()).or_insert(bytes);
        id
    }

    pub fn asset(&self, id: &str) -> Result<&[u8]> {
        self.assets
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("unknown asset {id}")))
    }

    fn replay(&self, entries: &[EditEntry]) -> Result<EditState> {
        let mut state = self.base.clone().ok_or_else(|| Error::invalid("project has not been decomposed"))?;
        let lookup = |id: &str| self.asset(id);
        let ctx = ops::EditContext {
            input: &self.input,
            asset: &lookup,
        };
        for e in entries {
            state = e.op.apply(&state, &ctx)?;
        }
        Ok(state)
    }

    /// Applies `op` to the live state and appends it to the log.
    pub fn apply_edit(&mut self, op: EditOp) -> Result<u64> {
        let live = self.live()?;
        let lookup = |id: &str| self.asset(id);
        let ctx = ops::EditContext {
            input: &self.input,
            asset: &lookup,
        };
        let next = op.apply(live, &ctx)?;
        let id = self.manifest.next_edit_id;
        self.manifest.next_edit_id += 1;
        self.manifest.edits.push(EditEntry { id, op });
        self.live = Some(next);
        Ok(id)
    }

    /// Removes edit `id` and everything after it, then replays the rest.
    pub fn undo(&mut self, id: u64) -> Result<()> {
        let pos = self
            .manifest
            .edits
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| Error::invalid(format!("no edit with id {id}")))?;
        let state = self.replay(&self.manifest.edits[..pos])?;
        self.manifest.edits.truncate(pos);
        self.live = Some(state);
        Ok(())
    }

    /// The live stylized output `I_o`.
    pub fn render(&self) -> Result<ImageTensor<f32>> {
        let live = self.live()?;
        Pipeline::new(&self.manifest.pipeline)?.apply(&live.segments.render(), &live.masks)
    }

    pub fn render_png(&self) -> Result<Vec<u8>> {
        imageio::encode_png(&self.render()?)
    }

    /// Range-normalized mask as a grayscale image.
    pub fn mask_preview(&self, kind: MaskKind) -> Result<ImageTensor<f32>> {
        let masks = self.masks()?;
        ImageTensor::from_vec(masks.height(), masks.width(), 1, masks.normalized(kind))
    }

    pub fn mask_preview_png(&self, kind: MaskKind) -> Result<Vec<u8>> {
        imageio::encode_png_gray(&self.mask_preview(kind)?)
    }

    /// `l1` compares the 8-bit render with `against` (default: the input).
    pub fn metrics(&self, against: Option<&ImageTensor<f32>>) -> Result<Metrics> {
        let target = against.unwrap_or(&self.input);
        let out = self.render()?.map(|v| quantize_u8(v) as f32 / 255.0);
        let masks = self.masks()?;
        Ok(Metrics {
            l1: l1_target_loss(&out, target)?,
            tv: tv_loss(masks),
            noise_sigma: estimate_noise_sigma(masks),
        })
    }

    /// Cache tag of the live render for a project known as `project_id`.
    pub fn etag(&self, project_id: &str) -> Result<String> {
        let mut h = Sha256::new();
        h.update(project_id.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(&self.manifest.edits)?);
        Ok(hex::encode(h.finalize()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = serde_json::to_vec_pretty(&self.manifest)?;
        manifest.push(b'\n');
        imageio::write_file(&dir.join(MANIFEST), &manifest)?;
        imageio::write_file(&dir.join(INPUT), &imageio::encode_png(&self.input)?)?;
        if let (Some(base), Some(live)) = (&self.base, &self.live) {
            imageio::write_file(&dir.join(LABELS), &codec::encode_labels(&base.segments))?;
            imageio::write_file(&dir.join(MASKS), &codec::encode_masks(&base.masks))?;
            imageio::write_file(&dir.join(ABSTRACTION), &imageio::encode_png(&live.segments.render())?)?;
        }
        if !self.assets.is_empty() {
            let adir = dir.join(ASSETS);
            std::fs::create_dir_all(&adir).map_err(|e| Error::io(&adir, e))?;
            for (id, bytes) in &self.assets {
                imageio::write_file(&adir.join(id), bytes)?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read(&path).map_err(|e| Error::io(path, e))
        };
        let manifest: Manifest = serde_json::from_slice(&read(MANIFEST)?)?;
        if major(&manifest.version) != major(MANIFEST_VERSION) {
            return Err(Error::UnsupportedVersion(manifest.version));
        }
        let input = imageio::decode_rgb(&read(INPUT)?)?;
        if input.height() != manifest.height || input.width() != manifest.width {
            return Err(Error::dims(
                format!("{}x{}", manifest.height, manifest.width),
                input.shape_string(),
            ));
        }
        let mut assets = BTreeMap::new();
        let adir = dir.join(ASSETS);
        if adir.is_dir() {
            for entry in std::fs::read_dir(&adir).map_err(|e| Error::io(&adir, e))? {
                let path = entry.map_err(|e| Error::io(&adir, e))?.path();
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let id = hex::encode(Sha256::digest(&bytes));
                if path.file_name().and_then(|n| n.to_str()) != Some(id.as_str()) {
                    return Err(Error::invalid(format!("asset {} does not match its hash", path.display())));
                }
                assets.insert(id, bytes);
            }
        }
        let base = if manifest.decomposition.is_some() {
            let seg = &manifest.segmentation;
            let segments = codec::decode_labels(&read(LABELS)?, seg.compactness, seg.segments)?;
            let masks = codec::decode_masks(&read(MASKS)?)?;
            if masks.height() != manifest.height || masks.width() != manifest.width {
                return Err(Error::dims(
                    format!("{}x{}", manifest.height, manifest.width),
                    format!("masks {}x{}", masks.height(), masks.width()),
                ));
            }
            Some(EditState { segments, masks })
        } else {
            None
        };
        let mut project = Self {
            manifest,
            input,
            base,
            live: None,
            assets,
        };
        if project.base.is_some() {
            project.live = Some(project.replay(&project.manifest.edits)?);
        }
        Ok(project)
    }
}
