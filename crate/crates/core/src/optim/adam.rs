//! Adam with a stepped learning-rate decay.

use crate::error::{Error, Result};
use crate::pipeline::masks::{MaskKind, MaskPlanes, ParameterMaskSet};
use crate::scalar::Real;

/// `base` until `start`, then multiplied by `factor` at `start`, `start + every`, ...
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub start: usize,
    pub every: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 0.01,
            factor: 0.98,
            start: 50,
            every: 5,
        }
    }
}

impl LrSchedule {
    pub fn with_base(base: f64) -> Self {
        Self {
            base,
            ..Self::default()
        }
    }

    pub fn lr(&self, iteration: usize) -> f64 {
        if iteration < self.start {
            return self.base;
        }
        let drops = (iteration - self.start) / self.every.max(1) + 1;
        self.base * self.factor.powi(drops as i32)
    }
}

/// Learning rate at `iteration` under the default schedule.
pub fn lr_schedule(iteration: usize) -> f64 {
    LrSchedule::default().lr(iteration)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    step: usize,
    lr: f64,
    adam: AdamConfig,
    schedule: LrSchedule,
    first: MaskPlanes<T>,
    second: MaskPlanes<T>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(pixels: usize, adam: AdamConfig, schedule: LrSchedule) -> Self {
        Self {
            step: 0,
            lr: schedule.lr(0),
            adam,
            schedule,
            first: MaskPlanes::zeros(pixels),
            second: MaskPlanes::zeros(pixels),
        }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Learning rate used by the most recent update (or the next one before any).
    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn first_moment(&self, kind: MaskKind) -> &[T] {
        self.first.get(kind)
    }

    pub fn second_moment(&self, kind: MaskKind) -> &[T] {
        self.second.get(kind)
    }
}

/// One bias-corrected Adam update of the latents of `kinds`. Returns the
/// learning rate that was applied.
pub fn adam_step<T: Real>(
    state: &mut OptimizerState<T>,
    masks: &mut ParameterMaskSet<T>,
    grads: &MaskPlanes<T>,
    kinds: &[MaskKind],
) -> Result<f64> {
    let n = masks.pixels();
    for &k in kinds {
        if grads.get(k).len() != n || state.first.get(k).len() != n {
            return Err(Error::dims(
                format!("{k} plane of {n} values"),
                grads.get(k).len().min(state.first.get(k).len()),
            ));
        }
    }
    let lr = state.schedule.lr(state.step);
    state.step += 1;
    state.lr = lr;
    let t = state.step as i32;
    let b1 = state.adam.beta1;
    let b2 = state.adam.beta2;
    let c1 = T::lit(1.0 - b1.powi(t));
    let c2 = T::lit(1.0 - b2.powi(t));
    let (b1, b2) = (T::lit(b1), T::lit(b2));
    let eps = T::lit(state.adam.eps);
    let lr_t = T::lit(lr);
    for &k in kinds {
        let g = grads.get(k);
        let m = state.first.get_mut(k);
        let v = state.second.get_mut(k);
        for (((z, &gi), mi), vi) in masks
            .latents_mut(k)
            .iter_mut()
            .zip(g)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *z -= lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0), 0.01);
        assert_eq!(lr_schedule(49), 0.01);
        assert_eq!(lr_schedule(50), 0.01 * 0.98);
        assert_eq!(lr_schedule(54), 0.01 * 0.98);
        assert_eq!(lr_schedule(55), 0.01 * 0.98f64.powi(2));
        assert!((lr_schedule(60) - 0.009_411_92).abs() < 1e-15);
    }

    fn single(value: f64) -> (ParameterMaskSet<f64>, MaskPlanes<f64>) {
        let m = ParameterMaskSet::<f64>::new(1, 1);
        let mut g = MaskPlanes::zeros(1);
        g.get_mut(MaskKind::Contrast)[0] = value;
        (m, g)
    }

    #[test]
    fn zero_gradient_leaves_latents() {
        let (mut m, g) = single(0.0);
        let mut s = OptimizerState::new(1, AdamConfig::default(), LrSchedule::default());
        let before = m.clone();
        adam_step(&mut s, &mut m, &g, &MaskKind::ALL).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g0 in [0.3, -2.0, 1e-3] {
            let (mut m, g) = single(g0);
            let mut s = OptimizerState::new(1, AdamConfig::default(), LrSchedule::default());
            adam_step(&mut s, &mut m, &g, &[MaskKind::Contrast]).unwrap();
            // m_hat = g, v_hat = g^2: update = -lr * g / (|g| + eps)
            let expected = -0.01 * g0 / (g0.abs() + 1e-8);
            assert!((m.latents(MaskKind::Contrast)[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_gradient_hand_trace() {
        let (mut m, g) = single(0.5);
        let mut s = OptimizerState::new(1, AdamConfig::default(), LrSchedule::default());
        let mut z = 0.0f64;
        let (mut mm, mut vv) = (0.0f64, 0.0f64);
        let mut steps = Vec::new();
        for t in 1..=3 {
            adam_step(&mut s, &mut m, &g, &[MaskKind::Contrast]).unwrap();
            mm = 0.9 * mm + 0.1 * 0.5;
            vv = 0.999 * vv + 0.001 * 0.25;
            let upd = 0.01 * (mm / (1.0 - 0.9f64.powi(t)))
                / ((vv / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            z -= upd;
            steps.push(upd);
            assert!((m.latents(MaskKind::Contrast)[0] - z).abs() < 1e-15);
        }
        // constant gradient: bias correction makes every step ~lr
        assert!(steps.iter().all(|s| (s - 0.01).abs() < 1e-9));
    }

    #[test]
    fn inactive_masks_are_untouched() {
        let mut m = ParameterMaskSet::<f64>::new(1, 2);
        let mut g = MaskPlanes::zeros(2);
        for k in MaskKind::ALL {
            g.get_mut(k).iter_mut().for_each(|v| *v = 1.0);
        }
        let mut s = OptimizerState::new(2, AdamConfig::default(), LrSchedule::default());
        adam_step(&mut s, &mut m, &g, &[MaskKind::Contrast]).unwrap();
        assert!(m.latents(MaskKind::BumpScale).iter().all(|&z| z == 0.0));
        assert!(m.latents(MaskKind::Contrast).iter().all(|&z| z < 0.0));
    }
}
