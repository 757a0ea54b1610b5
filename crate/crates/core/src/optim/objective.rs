//! Loss and latent gradient of a fixed abstraction/target pair.

use crate::error::{Error, Result};
use crate::pipeline::masks::{normalize_slope, MaskKind, MaskPlanes, ParameterMaskSet};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::scalar::Real;
use crate::tensor::ImageTensor;

use super::loss::{l1_loss_and_grad, tv_loss_and_grad};

#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub l1: f64,
    pub tv: f64,
    pub total: f64,
    /// Gradient of `total` w.r.t. the latents (zero for inactive masks).
    pub grad: MaskPlanes<T>,
    pub output: ImageTensor<T>,
}

pub struct Objective<T> {
    pipeline: Pipeline<T>,
    abstraction: ImageTensor<T>,
    target: ImageTensor<T>,
    lambda_tv: f64,
    active: Vec<MaskKind>,
}

impl<T: Real> Objective<T> {
    pub fn new(
        cfg: &PipelineConfig,
        abstraction: ImageTensor<T>,
        target: ImageTensor<T>,
        lambda_tv: f64,
    ) -> Result<Self> {
        abstraction.ensure_channels(3)?;
        abstraction.ensure_same_shape(&target)?;
        if !(lambda_tv >= 0.0) || !lambda_tv.is_finite() {
            return Err(Error::invalid(format!(
                "TV weight must be non-negative, got {lambda_tv}"
            )));
        }
        let pipeline = Pipeline::new(cfg)?;
        let active = cfg
            .active_filters()
            .into_iter()
            .flat_map(|f| f.masks())
            .collect();
        Ok(Self {
            pipeline,
            abstraction,
            target,
            lambda_tv,
            active,
        })
    }

    /// Masks that take part in optimization and in the TV term.
    pub fn active(&self) -> &[MaskKind] {
        &self.active
    }

    pub fn abstraction(&self) -> &ImageTensor<T> {
        &self.abstraction
    }

    pub fn target(&self) -> &ImageTensor<T> {
        &self.target
    }

    pub fn pipeline(&self) -> &Pipeline<T> {
        &self.pipeline
    }

    fn check(&self, masks: &ParameterMaskSet<T>) -> Result<()> {
        if masks.height() != self.abstraction.height() || masks.width() != self.abstraction.width()
        {
            return Err(Error::dims(
                self.abstraction.shape_string(),
                format!("masks {}x{}", masks.height(), masks.width()),
            ));
        }
        Ok(())
    }

    /// Loss only, without back-propagation.
    pub fn loss(&self, masks: &ParameterMaskSet<T>) -> Result<f64> {
        self.check(masks)?;
        let out = self.pipeline.apply(&self.abstraction, masks)?;
        let l1 = super::loss::l1_target_loss(&out, &self.target)?;
        let tv = super::loss::tv_loss_of(masks, &self.active);
        Ok(l1 + self.lambda_tv * tv)
    }

    pub fn evaluate(&self, masks: &ParameterMaskSet<T>) -> Result<Evaluation<T>> {
        self.check(masks)?;
        let ranged = masks.ranged_planes();
        let trace = self.pipeline.trace(&self.abstraction, &ranged)?;
        let (l1, g_out) = l1_loss_and_grad(trace.output(), &self.target)?;
        let (_, mut g_ranged) = self.pipeline.backward(&trace, &ranged, &g_out)?;
        let (tv, tv_grads) = tv_loss_and_grad(masks, &self.active);

        let mut grad = MaskPlanes::zeros(masks.pixels());
        let lambda = T::lit(self.lambda_tv);
        for (kind, g_norm) in tv_grads {
            let span = T::lit(masks.range(kind).span() as f64);
            let g_r = std::mem::take(g_ranged.get_mut(kind));
            let out = grad.get_mut(kind);
            for (((o, &z), &gr), &gn) in out
                .iter_mut()
                .zip(masks.latents(kind))
                .zip(&g_r)
                .zip(&g_norm)
            {
                *o = (gr * span + lambda * gn) * normalize_slope(z);
            }
        }
        Ok(Evaluation {
            l1,
            tv,
            total: l1 + self.lambda_tv * tv,
            grad,
            output: trace.into_output(),
        })
    }
}
