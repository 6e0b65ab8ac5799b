//! Single TOML configuration shared by every pipeline stage.
//!
//! Defaults reproduce the reference deployment: a 30 kW rooftop system at
//! Stanford with a 1000 W/m² × 24.98 m² clear-sky model, 15-minute horizon
//! at 2-minute frame spacing, and a 10-member regressor ensemble.

use crate::error::{Error, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub vqvae: VqVaeConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub unet: UNetConfig,
    #[serde(default)]
    pub sunset: SunsetConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Nameplate capacity used to validate PV records, kW.
    pub system_capacity_kw: f64,
    /// NRBR value at or above which a pixel counts as cloud.
    pub pixel_threshold: f64,
    /// Fraction of cloudy foreground pixels above which a frame is cloudy.
    pub fraction_threshold: f64,
    /// Anchor stride when building the interim dataset, minutes.
    pub anchor_stride_min: i64,
    /// Fixed UTC offset of the site, hours (no DST; timestamps stay exact).
    pub utc_offset_hours: f64,
    /// Calendar days reserved for validation (ISO dates).
    pub val_days: Vec<NaiveDate>,
    /// Calendar days reserved for test.
    pub test_days: Vec<NaiveDate>,
    /// Keep only cloudy samples when building task datasets.
    pub cloudy_only: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            system_capacity_kw: 30.0,
            pixel_threshold: -0.05,
            fraction_threshold: 0.05,
            anchor_stride_min: 2,
            utc_offset_hours: -8.0,
            val_days: Vec::new(),
            test_days: Vec::new(),
            cloudy_only: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub days: usize,
    /// First simulated calendar day (local).
    pub start_date: NaiveDate,
    /// Local solar window simulated each day, fractional hours.
    pub day_start_hour: f64,
    pub day_end_hour: f64,
    /// Cloud drift, pixels per minute. CFL requires |v| * dt <= 1 per substep.
    pub velocity_px_min: (f64, f64),
    /// Cloud diffusivity, px²/min.
    pub diffusivity: f64,
    /// Integration substeps per minute.
    pub substeps: usize,
    /// Number of random Fourier modes in the initial opacity field.
    pub spectral_modes: usize,
    /// Spectral amplitude decay exponent.
    pub spectral_slope: f64,
    /// Target mean cloud cover in [0,1].
    pub cloud_cover: f64,
    /// PV attenuation strength κ in (0,1].
    pub kappa: f64,
    /// Radius of the sun-region disk used for PV attenuation, pixels.
    pub sun_region_radius: f64,
    /// Rendered sun disk radius, pixels.
    pub sun_disk_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            days: 10,
            start_date: NaiveDate::from_ymd_opt(2019, 11, 1).unwrap(),
            day_start_hour: 9.0,
            day_end_hour: 15.0,
            velocity_px_min: (0.5, 0.25),
            diffusivity: 0.05,
            substeps: 1,
            spectral_modes: 6,
            spectral_slope: 1.5,
            cloud_cover: 0.45,
            kappa: 0.9,
            sun_region_radius: 6.0,
            sun_disk_radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Maximum solar irradiance, W/m².
    pub p_max_w_m2: f64,
    /// Effective PV panel area, m².
    pub effective_area_m2: f64,
    /// Panel elevation (tilt) angle, degrees.
    pub panel_elevation_deg: f64,
    /// Panel azimuth, degrees clockwise from North.
    pub panel_azimuth_deg: f64,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// Site elevation above sea level, metres.
    pub site_elevation_m: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            p_max_w_m2: 1000.0,
            effective_area_m2: 24.98,
            panel_elevation_deg: 22.5,
            panel_azimuth_deg: 195.0,
            latitude_deg: 37.4275,
            longitude_deg: -122.1697,
            site_elevation_m: 30.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqVaeConfig {
    /// Space-time downsampling factors (t, h, w); each a power of two.
    pub downsample: (usize, usize, usize),
    /// Codebook size K.
    pub codebook_size: usize,
    /// Codebook embedding dimension d.
    pub embedding_dim: usize,
    /// Commitment loss weight β.
    pub beta: f64,
    /// Channel width per downsampling stage.
    pub channels: Vec<usize>,
    /// Attention residual blocks at the bottleneck.
    pub attn_blocks: usize,
    pub attn_heads: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for VqVaeConfig {
    fn default() -> Self {
        Self {
            downsample: (4, 4, 4),
            codebook_size: 128,
            embedding_dim: 16,
            beta: 0.25,
            channels: vec![16, 32],
            attn_blocks: 1,
            attn_heads: 2,
            batch_size: 2,
            steps: 2000,
            lr: 1e-3,
            grad_clip: 5.0,
            seed: 11,
        }
    }
}

impl VqVaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 {
            return Err(Error::config("vqvae.beta must be > 0"));
        }
        if self.codebook_size < 2 {
            return Err(Error::config("vqvae.codebook_size must be >= 2"));
        }
        for &f in [self.downsample.0, self.downsample.1, self.downsample.2].iter() {
            if f == 0 || (f & (f - 1)) != 0 {
                return Err(Error::config("vqvae.downsample factors must be powers of two"));
            }
        }
        let stages = self.n_stages();
        if self.channels.len() != stages {
            return Err(Error::config(format!(
                "vqvae.channels must list one width per downsampling stage ({stages})"
            )));
        }
        Ok(())
    }

    /// Number of strided conv stages needed to reach the downsample factors.
    pub fn n_stages(&self) -> usize {
        let log2 = |x: usize| (usize::BITS - 1 - x.leading_zeros()) as usize;
        log2(self.downsample.0)
            .max(log2(self.downsample.1))
            .max(log2(self.downsample.2))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    /// PhyCell hidden channels at the embedding level.
    pub phycell_channels: usize,
    /// Constrained filter size (odd).
    pub phycell_kernel: usize,
    /// Highest total derivative order modeled by the filter bank.
    pub phycell_orders: usize,
    /// 3D residual context-encoder widths (two stages).
    pub ctx_channels: Vec<usize>,
    /// Sampling temperature (> 0).
    pub temperature: f64,
    /// Top-k truncation; 0 disables.
    pub top_k: usize,
    /// Futures drawn per forecast.
    pub nf: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub grad_clip: f64,
    pub seed: u64,
    /// Weight of the moment loss in the total objective.
    pub moment_weight: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            width: 128,
            depth: 4,
            heads: 4,
            phycell_channels: 16,
            phycell_kernel: 7,
            phycell_orders: 2,
            ctx_channels: vec![16, 32],
            temperature: 1.0,
            top_k: 0,
            nf: 10,
            batch_size: 2,
            steps: 2000,
            lr: 3e-4,
            grad_clip: 5.0,
            seed: 13,
            moment_weight: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::config("prior.temperature must be > 0"));
        }
        if self.nf < 1 {
            return Err(Error::config("prior.nf must be >= 1"));
        }
        if self.phycell_kernel % 2 == 0 {
            return Err(Error::config("prior.phycell_kernel must be odd"));
        }
        if self.width % self.heads != 0 {
            return Err(Error::config("prior.width must divide into heads"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UNetConfig {
    /// Encoder channel widths, one per resolution level.
    pub widths: Vec<usize>,
    /// Residual blocks in the bottleneck.
    pub bottleneck_blocks: usize,
    /// Initial learning rate lr0.
    pub lr0: f64,
    /// Decay factor γ applied every 10 epochs.
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cross-validation folds (= ensemble members).
    pub folds: usize,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64],
            bottleneck_blocks: 2,
            lr0: 2e-4,
            gamma: 0.5,
            epochs: 20,
            batch_size: 8,
            folds: 10,
            grad_clip: 5.0,
            seed: 17,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(Error::config("unet.lr0 must be > 0"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("unet.gamma must be in (0, 1]"));
        }
        if self.widths.is_empty() {
            return Err(Error::config("unet.widths must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SunsetConfig {
    pub filters: usize,
    pub fc_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub gamma: f64,
    pub folds: usize,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for SunsetConfig {
    fn default() -> Self {
        Self {
            filters: 24,
            fc_width: 1024,
            epochs: 20,
            batch_size: 8,
            lr0: 2e-4,
            gamma: 0.5,
            folds: 10,
            grad_clip: 5.0,
            seed: 19,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Winkler score confidence parameter α (interval = 1 - α).
    pub alpha: f64,
    /// Futures per forecast when scoring the stochastic pipeline.
    pub nf: usize,
    /// Clear-sky output below which timestamps are excluded, kW.
    pub daylight_threshold_kw: f64,
    /// Perceptual feature backend: "random-conv" or a weights-blob path.
    pub perceptual: String,
    /// Square resize applied before feature extraction.
    pub perceptual_resize: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            nf: 10,
            daylight_threshold_kw: 0.5,
            perceptual: "random-conv".to_string(),
            perceptual_resize: 224,
            seed: 23,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Config =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.vqvae.validate()?;
        self.prior.validate()?;
        self.unet.validate()?;
        if self.eval.alpha <= 0.0 || self.eval.alpha >= 1.0 {
            return Err(Error::config("eval.alpha must be in (0, 1)"));
        }
        if self.sim.diffusivity < 0.0 {
            return Err(Error::config("sim.diffusivity must be >= 0"));
        }
        for d in &self.data.val_days {
            if self.data.test_days.contains(d) {
                return Err(Error::config(format!("day {d} listed in both val and test")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
