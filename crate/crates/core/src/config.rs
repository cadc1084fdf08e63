//! Plain `key = value` configuration covering the sweep, growth, rendering,
//! dataset and metrics settings.
//!
//! ```text
//! # comments run to the end of the line
//! seed = 7
//! sweep.df_values = 1.8, 2.2
//! render.width = 256
//! ```
//!
//! [`Config::to_text`] writes every key with its resolved value; reading that
//! text back gives the same configuration, and [`Config::hash`] is the SHA-256
//! of it.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::aggregation::GrowthConfig;
use crate::dataset::{SplitOptions, SplitPolicy, SweepSpec};
use crate::error::{Error, Result};
use crate::render::{IntensityModel, RenderConfig, ScanMode};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "HETAGG_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub split: SplitOptions,
    pub fov_retries: usize,
    pub nu: usize,
    pub write_raw: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { split: SplitOptions::default(), fov_retries: 10, nu: 12, write_raw: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsOptions {
    pub per_config_samples: usize,
    pub grid_resolution: usize,
    pub histogram_bins: usize,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self { per_config_samples: 200, grid_resolution: 50, histogram_bins: crate::metrics::HISTOGRAM_BINS }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub sweep: SweepSpec,
    pub growth: GrowthConfig,
    pub render: RenderConfig,
    /// Intensity LUT file; the built-in model when absent.
    pub intensity_lut: Option<PathBuf>,
    pub dataset: DatasetOptions,
    pub metrics: MetricsOptions,
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| value(key, s)).collect()
}

fn join<T: Display>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl Config {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, v)) = line.split_once('=') else {
                return Err(Error::parse(i + 1, format!("expected `key = value`, got {line:?}")));
            };
            cfg.set(key.trim(), v.trim()).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| e.in_file(path))
    }

    /// Sets one key. Values are validated by [`Config::validate`], not here.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = value(key, v)?,
            "sweep.df_values" => self.sweep.df_values = list(key, v)?,
            "sweep.rho_values" => self.sweep.rho_values = list(key, v)?,
            "sweep.c0_values" => self.sweep.c0_values = list(key, v)?,
            "sweep.c1_values" => self.sweep.c1_values = list(key, v)?,
            "sweep.aggregates_per_triple" => self.sweep.aggregates_per_triple = value(key, v)?,
            "sweep.df_choices_per_triple" => self.sweep.df_choices_per_triple = value(key, v)?,
            "growth.k_f" => self.growth.k_f = value(key, v)?,
            "growth.contact_slack" => self.growth.contact_slack = value(key, v)?,
            "growth.max_position_attempts" => self.growth.max_position_attempts = value(key, v)?,
            "growth.max_restarts" => self.growth.max_restarts = value(key, v)?,
            "growth.max_cluster_resamples" => self.growth.max_cluster_resamples = value(key, v)?,
            "growth.target_size_min" => self.growth.target_size_min = value(key, v)?,
            "growth.target_size_max" => self.growth.target_size_max = value(key, v)?,
            "radius.mean" => self.growth.radius.mean = value(key, v)?,
            "radius.std" => self.growth.radius.std = value(key, v)?,
            "render.beta" => self.render.beta = value(key, v)?,
            "render.dose" => self.render.dose = value(key, v)?,
            "render.scan_sigma" => self.render.scan_sigma = value(key, v)?,
            "render.scan_mode" => {
                self.render.scan_mode = match v {
                    "per_pixel" => ScanMode::PerPixel,
                    "per_row" => ScanMode::PerRow,
                    _ => return Err(Error::Config(format!("scan_mode must be per_pixel or per_row, got {v:?}"))),
                }
            }
            "render.width" => self.render.width = value(key, v)?,
            "render.height" => self.render.height = value(key, v)?,
            "render.pixel_size" => self.render.pixel_size = value(key, v)?,
            "render.quantize_levels" => self.render.quantize_levels = value(key, v)?,
            "render.intensity_lut" => self.intensity_lut = (!v.is_empty()).then(|| PathBuf::from(v)),
            "dataset.train_fraction" => self.dataset.split.fraction = value(key, v)?,
            "dataset.min_per_config" => self.dataset.split.min_per_config = value(key, v)?,
            "dataset.split_policy" => {
                self.dataset.split.policy = match v {
                    "strict" => SplitPolicy::Strict,
                    "exclude" => SplitPolicy::Exclude,
                    _ => return Err(Error::Config(format!("split_policy must be strict or exclude, got {v:?}"))),
                }
            }
            "dataset.fov_retries" => self.dataset.fov_retries = value(key, v)?,
            "dataset.nu" => self.dataset.nu = value(key, v)?,
            "dataset.write_raw" => self.dataset.write_raw = value(key, v)?,
            "metrics.per_config_samples" => self.metrics.per_config_samples = value(key, v)?,
            "metrics.grid_resolution" => self.metrics.grid_resolution = value(key, v)?,
            "metrics.histogram_bins" => self.metrics.histogram_bins = value(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        self.growth.validate()?;
        self.render.validate()?;
        let split = &self.dataset.split;
        if !(split.fraction > 0.0 && split.fraction < 1.0) {
            return Err(Error::Config(format!("dataset.train_fraction must be in (0, 1), got {}", split.fraction)));
        }
        if self.dataset.nu == 0 || self.metrics.per_config_samples == 0 {
            return Err(Error::Config("dataset.nu and metrics.per_config_samples must be >= 1".into()));
        }
        if self.metrics.grid_resolution == 0 || self.metrics.histogram_bins == 0 {
            return Err(Error::Config("metrics.grid_resolution and metrics.histogram_bins must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let r = &self.render;
        let g = &self.growth;
        let s = &self.sweep;
        let d = &self.dataset;
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("sweep.df_values", join(&s.df_values)),
            ("sweep.rho_values", join(&s.rho_values)),
            ("sweep.c0_values", join(&s.c0_values)),
            ("sweep.c1_values", join(&s.c1_values)),
            ("sweep.aggregates_per_triple", s.aggregates_per_triple.to_string()),
            ("sweep.df_choices_per_triple", s.df_choices_per_triple.to_string()),
            ("growth.k_f", g.k_f.to_string()),
            ("growth.contact_slack", g.contact_slack.to_string()),
            ("growth.max_position_attempts", g.max_position_attempts.to_string()),
            ("growth.max_restarts", g.max_restarts.to_string()),
            ("growth.max_cluster_resamples", g.max_cluster_resamples.to_string()),
            ("growth.target_size_min", g.target_size_min.to_string()),
            ("growth.target_size_max", g.target_size_max.to_string()),
            ("radius.mean", g.radius.mean.to_string()),
            ("radius.std", g.radius.std.to_string()),
            ("render.beta", r.beta.to_string()),
            ("render.dose", r.dose.to_string()),
            ("render.scan_sigma", r.scan_sigma.to_string()),
            (
                "render.scan_mode",
                match r.scan_mode {
                    ScanMode::PerPixel => "per_pixel".into(),
                    ScanMode::PerRow => "per_row".into(),
                },
            ),
            ("render.width", r.width.to_string()),
            ("render.height", r.height.to_string()),
            ("render.pixel_size", r.pixel_size.to_string()),
            ("render.quantize_levels", r.quantize_levels.to_string()),
            (
                "render.intensity_lut",
                self.intensity_lut.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("dataset.train_fraction", d.split.fraction.to_string()),
            ("dataset.min_per_config", d.split.min_per_config.to_string()),
            (
                "dataset.split_policy",
                match d.split.policy {
                    SplitPolicy::Strict => "strict".into(),
                    SplitPolicy::Exclude => "exclude".into(),
                },
            ),
            ("dataset.fov_retries", d.fov_retries.to_string()),
            ("dataset.nu", d.nu.to_string()),
            ("dataset.write_raw", d.write_raw.to_string()),
            ("metrics.per_config_samples", self.metrics.per_config_samples.to_string()),
            ("metrics.grid_resolution", self.metrics.grid_resolution.to_string()),
            ("metrics.histogram_bins", self.metrics.histogram_bins.to_string()),
        ];
        entries.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn intensity_model(&self) -> Result<IntensityModel> {
        match &self.intensity_lut {
            None => Ok(IntensityModel::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                IntensityModel::from_lut_text(&text).map_err(|e| e.in_file(path))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(Config::from_text(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# tiny\nseed = 7\nsweep.df_values = 1.8, 2.2 # two\nrender.dose = inf\nrender.scan_mode = per_row\n\nrender.intensity_lut = lut.txt\n";
        let cfg = Config::from_text(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sweep.df_values, vec![1.8, 2.2]);
        assert!(cfg.render.dose.is_infinite());
        assert_eq!(cfg.render.scan_mode, ScanMode::PerRow);
        assert_eq!(cfg.intensity_lut, Some(PathBuf::from("lut.txt")));
        let back = Config::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(cfg.hash(), Config::default().hash());
    }

    #[test]
    fn errors_name_lines() {
        for (text, line) in [("seed = 1\nbogus = 2\n", 2), ("seed = x\n", 1), ("\n\nnot a pair\n", 3)] {
            match Config::from_text(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line),
                other => panic!("{other:?}"),
            }
        }
        let cfg = Config::from_text("render.beta = 2\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
