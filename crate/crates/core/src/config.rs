use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::SemConfig;
use crate::sinusoids::{SamplerConfig, SinusoidScene};

pub const FORMAT_VERSION: u32 = 1;

/// Synthetic observation description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n: usize,
    pub amplitudes: Vec<f64>,
    /// Phases in radians; empty means all zero.
    pub phases: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Target SNR in dB. Exactly one of `snr_db` and `sigma2` must be set.
    pub snr_db: Option<f64>,
    pub sigma2: Option<f64>,
    pub noise_seed: u64,
    /// Read the observation from this CSV instead of synthesizing it.
    pub y_file: Option<PathBuf>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n: 64,
            amplitudes: vec![20.0, 6.32, 20.0],
            phases: Vec::new(),
            omegas: vec![0.63, 0.68, 0.73],
            snr_db: Some(7.0),
            sigma2: None,
            noise_seed: 1,
            y_file: None,
        }
    }
}

impl SceneConfig {
    pub fn build(&self) -> Result<SinusoidScene> {
        match (self.snr_db, self.sigma2) {
            (Some(snr), None) => {
                SinusoidScene::from_snr(self.n, &self.amplitudes, &self.phases, &self.omegas, snr)
            }
            (None, Some(s2)) => SinusoidScene::with_noise_variance(
                self.n,
                &self.amplitudes,
                &self.phases,
                &self.omegas,
                s2,
            ),
            _ => Err(Error::Config(
                "scene needs exactly one of snr_db and sigma2".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Histogram bins over `(0, pi)`.
    pub bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { bins: 256 }
    }
}

/// Whole-pipeline configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub format_version: u32,
    pub scene: SceneConfig,
    pub sampler: SamplerConfig,
    pub sem: SemConfig,
    pub report: ReportConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            scene: SceneConfig::default(),
            sampler: SamplerConfig::default(),
            sem: SemConfig::default(),
            report: ReportConfig::default(),
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.scene.y_file.is_none() {
            self.scene.build()?;
        }
        self.sampler.validate()?;
        self.sem.validate()?;
        if self.report.bins < 2 {
            return Err(Error::Config("report.bins must be >= 2".into()));
        }
        Ok(())
    }

    /// Derives every stage seed from one master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scene.noise_seed = seed;
        self.sampler.seed = seed.wrapping_add(1);
        self.sem.seed = seed.wrapping_add(2);
        self
    }
}
