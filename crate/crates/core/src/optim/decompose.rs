//! Fitting the parameter masks to a target image.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::masks::{default_ranges, MaskRange, ParameterMaskSet, MASK_COUNT};
use crate::pipeline::PipelineConfig;
use crate::tensor::ImageTensor;

use super::adam::{adam_step, AdamConfig, LrSchedule, OptimizerState};
use super::loss::DEFAULT_LAMBDA_TV;
use super::objective::Objective;

pub const DEFAULT_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda_tv: f64,
    #[serde(default = "default_ranges")]
    pub ranges: [MaskRange; MASK_COUNT],
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            learning_rate: 0.01,
            lambda_tv: DEFAULT_LAMBDA_TV,
            ranges: default_ranges(),
        }
    }
}

impl DecomposeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("at least one iteration is required"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lambda_tv >= 0.0) || !self.lambda_tv.is_finite() {
            return Err(Error::invalid(format!(
                "TV weight must be non-negative, got {}",
                self.lambda_tv
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::with_base(self.learning_rate)
    }
}

/// Loss values recorded before the update of one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lr: f64,
    pub l1: f64,
    pub tv: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub masks: ParameterMaskSet<f32>,
    pub trace: Vec<TraceRow>,
    /// Losses of the returned masks.
    pub final_l1: f64,
    pub final_tv: f64,
    pub final_total: f64,
    pub output: ImageTensor<f32>,
}

/// Optimizes neutral masks so that the pipeline applied to `abstraction`
/// reproduces `target`. `progress` sees every trace row as it is produced.
pub fn decompose(
    abstraction: &ImageTensor<f32>,
    target: &ImageTensor<f32>,
    cfg: &PipelineConfig,
    opts: &DecomposeOptions,
    mut progress: impl FnMut(&TraceRow),
) -> Result<Decomposition> {
    opts.validate()?;
    let objective = Objective::new(cfg, abstraction.clone(), target.clone(), opts.lambda_tv)?;
    let (h, w) = (abstraction.height(), abstraction.width());
    let mut masks = ParameterMaskSet::<f32>::with_ranges(h, w, opts.ranges);
    let mut state = OptimizerState::new(h * w, AdamConfig::default(), opts.schedule());
    let mut trace = Vec::with_capacity(opts.iterations);
    for iteration in 0..opts.iterations {
        let eval = objective.evaluate(&masks)?;
        let lr = adam_step(&mut state, &mut masks, &eval.grad, objective.active())?;
        let row = TraceRow {
            iteration,
            lr,
            l1: eval.l1,
            tv: eval.tv,
            total: eval.total,
        };
        if !row.total.is_finite() {
            return Err(Error::invalid(format!(
                "loss diverged at iteration {iteration}"
            )));
        }
        progress(&row);
        trace.push(row);
    }
    let last = objective.evaluate(&masks)?;
    Ok(Decomposition {
        masks,
        trace,
        final_l1: last.l1,
        final_tv: last.tv,
        final_total: last.total,
        output: last.output,
    })
}

/// Writes the trace as CSV with a header row.
pub fn write_trace_csv(trace: &[TraceRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "iteration,lr,l1,tv,total")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.lr, r.l1, r.tv, r.total
        )?;
    }
    Ok(())
}
