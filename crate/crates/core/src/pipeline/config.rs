use serde::{Deserialize, Serialize};

use super::masks::Filter;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XdogConfig {
    /// Standard deviation of the narrow Gaussian.
    pub sigma_e: f64,
    /// Ratio between the wide and narrow Gaussian.
    pub k: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub phi: f64,
}

impl Default for XdogConfig {
    fn default() -> Self {
        Self {
            sigma_e: 1.0,
            k: 1.6,
            tau: 0.99,
            epsilon: 0.1,
            phi: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpConfig {
    /// Blur applied to luminance before it is used as a height field.
    pub height_sigma: f64,
    pub light_dir: [f64; 3],
    pub view_dir: [f64; 3],
    pub shininess: f64,
}

impl Default for BumpConfig {
    fn default() -> Self {
        let n = (0.3f64 * 0.3 + 0.3 * 0.3 + 1.0).sqrt();
        Self {
            height_sigma: 2.0,
            light_dir: [0.3 / n, 0.3 / n, 1.0 / n],
            view_dir: [0.0, 0.0, 1.0],
            shininess: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnabledFilters {
    pub pre_smooth: bool,
    pub bilateral: bool,
    pub xdog: bool,
    pub bump: bool,
    pub contrast: bool,
}

impl Default for EnabledFilters {
    fn default() -> Self {
        Self {
            pre_smooth: true,
            bilateral: true,
            xdog: true,
            bump: true,
            contrast: true,
        }
    }
}

impl EnabledFilters {
    pub fn none() -> Self {
        Self {
            pre_smooth: false,
            bilateral: false,
            xdog: false,
            bump: false,
            contrast: false,
        }
    }

    pub fn get(&self, filter: Filter) -> bool {
        match filter {
            Filter::Bilateral => self.bilateral,
            Filter::Xdog => self.xdog,
            Filter::Bump => self.bump,
            Filter::Contrast => self.contrast,
        }
    }

    pub fn set(&mut self, filter: Filter, on: bool) {
        match filter {
            Filter::Bilateral => self.bilateral = on,
            Filter::Xdog => self.xdog = on,
            Filter::Bump => self.bump = on,
            Filter::Contrast => self.contrast = on,
        }
    }
}

/// Fixed constants of the filter pipeline. Only the masks are learnable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pre_smooth_sigma: f64,
    pub pre_smooth_radius: usize,
    pub bilateral_radius: usize,
    pub xdog: XdogConfig,
    pub bump: BumpConfig,
    pub contrast_mean_sigma: f64,
    pub enabled: EnabledFilters,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pre_smooth_sigma: 1.0,
            pre_smooth_radius: 3,
            bilateral_radius: 5,
            xdog: XdogConfig::default(),
            bump: BumpConfig::default(),
            contrast_mean_sigma: 4.0,
            enabled: EnabledFilters::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("pre_smooth_sigma", self.pre_smooth_sigma),
            ("xdog.sigma_e", self.xdog.sigma_e),
            ("xdog.k * sigma_e", self.xdog.k * self.xdog.sigma_e),
            ("bump.height_sigma", self.bump.height_sigma),
            ("contrast_mean_sigma", self.contrast_mean_sigma),
        ];
        for (name, s) in sigmas {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {s}")));
            }
        }
        if self.pre_smooth_radius == 0 || self.bilateral_radius == 0 {
            return Err(Error::invalid("filter radii must be at least 1"));
        }
        for (name, v) in [
            ("light_dir", self.bump.light_dir),
            ("view_dir", self.bump.view_dir),
        ] {
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "{name} must be unit length, got norm {norm}"
                )));
            }
        }
        if self.bump.light_dir[2] <= 0.0 {
            return Err(Error::invalid("light must face the surface (positive z)"));
        }
        Ok(())
    }

    /// The enabled learnable filters, in pipeline order.
    pub fn active_filters(&self) -> Vec<Filter> {
        Filter::ALL
            .into_iter()
            .filter(|&f| self.enabled.get(f))
            .collect()
    }
}

/// Default configuration with one filter switched off.
pub fn ablation_config(disable: &str) -> Result<PipelineConfig> {
    let filter = Filter::from_name(disable)?;
    let mut cfg = PipelineConfig::default();
    cfg.enabled.set(filter, false);
    Ok(cfg)
}
