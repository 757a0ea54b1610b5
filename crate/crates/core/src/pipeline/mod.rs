//! The differentiable filter pipeline.
//!
//! Fixed order: Gaussian pre-smoothing, bilateral, XDoG contours, bump-mapped
//! Phong shading, local contrast, and a final clamp to `[0, 1]`. Each stage
//! can be switched off; a disabled stage is skipped and its masks receive no
//! gradient.

pub mod bilateral;
pub mod bump;
pub mod config;
pub mod contrast;
pub mod masks;
pub mod xdog;

pub use bilateral::bilateral_filter;
pub use bump::bump_phong;
pub use config::{ablation_config, BumpConfig, EnabledFilters, PipelineConfig, XdogConfig};
pub use contrast::local_contrast;
pub use masks::{Filter, MaskKind, MaskPlanes, MaskRange, ParameterMaskSet, MASK_COUNT};
pub use xdog::xdog_contours;

use crate::error::{Error, Result};
use crate::ops::Blur;
use crate::scalar::Real;
use crate::tensor::ImageTensor;

/// Pipeline with its fixed kernels built once.
pub struct Pipeline<T> {
    cfg: PipelineConfig,
    pre: Blur<T>,
    xdog: xdog::XdogKernels<T>,
    height: Blur<T>,
    mean: Blur<T>,
}

/// Intermediate images of one forward pass plus what the backward pass needs.
pub struct PipelineTrace<T> {
    input: ImageTensor<T>,
    smoothed: ImageTensor<T>,
    bilateral: Option<bilateral::BilateralTape<T>>,
    after_bilateral: ImageTensor<T>,
    xdog: Option<xdog::XdogTape<T>>,
    after_xdog: ImageTensor<T>,
    bump: Option<bump::BumpTape<T>>,
    after_bump: ImageTensor<T>,
    contrast: Option<contrast::ContrastTape<T>>,
    unclamped: ImageTensor<T>,
    output: ImageTensor<T>,
}

impl<T: Real> PipelineTrace<T> {
    pub fn input(&self) -> &ImageTensor<T> {
        &self.input
    }
    pub fn smoothed(&self) -> &ImageTensor<T> {
        &self.smoothed
    }
    pub fn after_bilateral(&self) -> &ImageTensor<T> {
        &self.after_bilateral
    }
    pub fn after_xdog(&self) -> &ImageTensor<T> {
        &self.after_xdog
    }
    pub fn after_bump(&self) -> &ImageTensor<T> {
        &self.after_bump
    }
    /// Output before the final clamp.
    pub fn unclamped(&self) -> &ImageTensor<T> {
        &self.unclamped
    }
    pub fn output(&self) -> &ImageTensor<T> {
        &self.output
    }
    pub fn into_output(self) -> ImageTensor<T> {
        self.output
    }
}

impl<T: Real> Pipeline<T> {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            pre: Blur::new(cfg.pre_smooth_sigma, cfg.pre_smooth_radius)?,
            xdog: xdog::XdogKernels::new(&cfg.xdog)?,
            height: bump::height_blur(&cfg.bump)?,
            mean: contrast::mean_blur(cfg.contrast_mean_sigma)?,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn check(&self, input: &ImageTensor<T>, ranged: &MaskPlanes<T>) -> Result<()> {
        input.ensure_channels(3)?;
        for (kind, plane) in MaskKind::ALL.iter().zip(&ranged.planes) {
            if plane.len() != input.pixels() {
                return Err(Error::dims(
                    format!("{kind} mask of {} pixels", input.pixels()),
                    plane.len(),
                ));
            }
        }
        if (self.cfg.enabled.bump) && (input.height() < 3 || input.width() < 3) {
            return Err(Error::invalid("pipeline needs at least 3x3 pixels"));
        }
        Ok(())
    }

    pub fn apply(
        &self,
        input: &ImageTensor<T>,
        masks: &ParameterMaskSet<T>,
    ) -> Result<ImageTensor<T>> {
        if masks.height() != input.height() || masks.width() != input.width() {
            return Err(Error::dims(
                format!("{}x{}", input.height(), input.width()),
                format!("{}x{}", masks.height(), masks.width()),
            ));
        }
        self.apply_ranged(input, &masks.ranged_planes())
    }

    /// Runs the pipeline on ranged mask values.
    pub fn apply_ranged(
        &self,
        input: &ImageTensor<T>,
        ranged: &MaskPlanes<T>,
    ) -> Result<ImageTensor<T>> {
        Ok(self.trace(input, ranged)?.output)
    }

    pub fn trace(
        &self,
        input: &ImageTensor<T>,
        ranged: &MaskPlanes<T>,
    ) -> Result<PipelineTrace<T>> {
        self.check(input, ranged)?;
        let on = &self.cfg.enabled;
        let smoothed = if on.pre_smooth {
            self.pre.apply(input)
        } else {
            input.clone()
        };

        let (bil, after_bilateral) = if on.bilateral {
            let tape = bilateral::forward(
                &smoothed,
                ranged.get(MaskKind::BilateralSigmaD),
                ranged.get(MaskKind::BilateralSigmaR),
                self.cfg.bilateral_radius,
            );
            let out = tape.output().clone();
            (Some(tape), out)
        } else {
            (None, smoothed.clone())
        };

        let (xd, after_xdog) = if on.xdog {
            let tape = xdog::forward(
                &after_bilateral,
                ranged.get(MaskKind::ContourAmount),
                ranged.get(MaskKind::ContourOpacity),
                &self.cfg.xdog,
                &self.xdog,
            );
            let out = tape.output().clone();
            (Some(tape), out)
        } else {
            (None, after_bilateral.clone())
        };

        let (bp, after_bump) = if on.bump {
            let tape = bump::forward(
                &after_xdog,
                ranged.get(MaskKind::BumpScale),
                ranged.get(MaskKind::PhongSpecular),
                ranged.get(MaskKind::BumpOpacity),
                &self.cfg.bump,
                &self.height,
            );
            let out = tape.output().clone();
            (Some(tape), out)
        } else {
            (None, after_xdog.clone())
        };

        let (ct, unclamped) = if on.contrast {
            let tape = contrast::forward(&after_bump, ranged.get(MaskKind::Contrast), &self.mean);
            let out = tape.output().clone();
            (Some(tape), out)
        } else {
            (None, after_bump.clone())
        };

        let output = unclamped.clamp01();
        Ok(PipelineTrace {
            input: input.clone(),
            smoothed,
            bilateral: bil,
            after_bilateral,
            xdog: xd,
            after_xdog,
            bump: bp,
            after_bump,
            contrast: ct,
            unclamped,
            output,
        })
    }

    /// Back-propagates an output cotangent. Returns the cotangent of the input
    /// image and of every ranged mask (zero for disabled filters).
    pub fn backward(
        &self,
        trace: &PipelineTrace<T>,
        ranged: &MaskPlanes<T>,
        grad_output: &ImageTensor<T>,
    ) -> Result<(ImageTensor<T>, MaskPlanes<T>)> {
        grad_output.ensure_same_shape(&trace.output)?;
        let mut mask_grads = MaskPlanes::zeros(trace.input.pixels());
        // clamp: pass-through inside [0, 1], zero outside
        let mut g = grad_output.clone();
        for (gv, &x) in g.data_mut().iter_mut().zip(trace.unclamped.data()) {
            if x < T::zero() || x > T::one() {
                *gv = T::zero();
            }
        }

        if let Some(tape) = &trace.contrast {
            let r = contrast::backward(
                &trace.after_bump,
                ranged.get(MaskKind::Contrast),
                &self.mean,
                tape,
                &g,
            );
            *mask_grads.get_mut(MaskKind::Contrast) = r.contrast;
            g = r.image;
        }
        if let Some(tape) = &trace.bump {
            let r = bump::backward(
                &trace.after_xdog,
                ranged.get(MaskKind::BumpScale),
                ranged.get(MaskKind::PhongSpecular),
                ranged.get(MaskKind::BumpOpacity),
                &self.cfg.bump,
                &self.height,
                tape,
                &g,
            );
            *mask_grads.get_mut(MaskKind::BumpScale) = r.bump_scale;
            *mask_grads.get_mut(MaskKind::PhongSpecular) = r.specular;
            *mask_grads.get_mut(MaskKind::BumpOpacity) = r.opacity;
            g = r.image;
        }
        if let Some(tape) = &trace.xdog {
            let r = xdog::backward(
                &trace.after_bilateral,
                ranged.get(MaskKind::ContourAmount),
                ranged.get(MaskKind::ContourOpacity),
                &self.cfg.xdog,
                &self.xdog,
                tape,
                &g,
            );
            *mask_grads.get_mut(MaskKind::ContourAmount) = r.amount;
            *mask_grads.get_mut(MaskKind::ContourOpacity) = r.opacity;
            g = r.image;
        }
        if let Some(tape) = &trace.bilateral {
            let r = bilateral::backward(
                &trace.smoothed,
                ranged.get(MaskKind::BilateralSigmaD),
                ranged.get(MaskKind::BilateralSigmaR),
                self.cfg.bilateral_radius,
                tape,
                &g,
            );
            *mask_grads.get_mut(MaskKind::BilateralSigmaD) = r.sigma_d;
            *mask_grads.get_mut(MaskKind::BilateralSigmaR) = r.sigma_r;
            g = r.image;
        }
        if self.cfg.enabled.pre_smooth {
            g = self.pre.adjoint(&g);
        }
        Ok((g, mask_grads))
    }
}

/// `I_o = O(I_a; P_M)` for one configuration.
pub fn apply_pipeline<T: Real>(
    abstraction: &ImageTensor<T>,
    masks: &ParameterMaskSet<T>,
    cfg: &PipelineConfig,
) -> Result<ImageTensor<T>> {
    Pipeline::new(cfg)?.apply(abstraction, masks)
}
