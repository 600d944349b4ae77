use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::phantom::{PhantomConfig, Stage};
use crate::physio::EeSettings;
use crate::quant::{AnalysisMode, Vessel};
use crate::recon::SolverSettings;

/// The embedded default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../../../../configs/default.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingChoice {
    Gro,
    Cava,
}

/// Images handed to the analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    Cs,
    ZeroFilled,
    /// The noise-free phantom series, bypassing acquisition.
    Truth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowTransforms {
    #[serde(rename = "uwt")]
    Uwt,
    #[serde(rename = "uwt+pca")]
    UwtPca,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagePhysiology {
    pub heart_rate_bpm: f64,
    pub resp_rate_bpm: f64,
    pub edv_ml: f64,
    pub esv_ml: f64,
    pub peak_velocity_cm_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CineConfig {
    pub enabled: bool,
    pub sampling: SamplingChoice,
    pub lines_per_frame: usize,
    pub tr_ms: f64,
    pub gro_s: f64,
    pub gro_alpha: f64,
    pub recon_slices: Vec<usize>,
    pub source: ImageSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub enabled: bool,
    pub sampling: SamplingChoice,
    pub lines_per_frame: usize,
    pub tr_ms: f64,
    pub cava_s: f64,
    pub cava_alpha: f64,
    pub venc_cm_s: f64,
    pub vessel: Vessel,
    pub frames: usize,
    pub source: ImageSource,
    pub transforms: FlowTransforms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfig {
    pub iterations: usize,
    pub tol: f64,
    pub threshold_scale: f64,
    pub uwt_levels: usize,
    pub reweight: bool,
    /// Also reconstruct with the opposite reweighting setting and record
    /// both artifact energies.
    pub compare_reweight: bool,
    pub calib_width: usize,
}

impl ReconConfig {
    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            max_iter: self.iterations,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub subjects: usize,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub mode: AnalysisMode,
    pub age_years: f64,
    pub randomize_phases: bool,
    pub subject_variation: f64,
    /// Store reconstructed images in the run containers.
    pub save_images: bool,
    pub phantom: PhantomConfig,
    pub stage: BTreeMap<Stage, StagePhysiology>,
    pub noise: NoiseConfig,
    pub cine: CineConfig,
    pub flow: FlowConfig,
    pub recon: ReconConfig,
    pub physio: EeSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_toml_str("").expect("embedded default config is valid")
    }
}

/// Recursively overlay `top` onto `base`; tables merge, other values replace.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Parse a (possibly partial) config over the embedded defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut base: toml::Value = toml::from_str(DEFAULT_CONFIG)?;
        let top: toml::Value = toml::from_str(text)?;
        merge(&mut base, top);
        let cfg: ExperimentConfig = base.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.cine.sampling != SamplingChoice::Gro {
            return bad("cine acquisitions must use GRO sampling".into());
        }
        if self.flow.sampling != SamplingChoice::Cava {
            return bad("flow acquisitions must use CAVA sampling".into());
        }
        if self.seeds.len() != self.repeats {
            return bad(format!(
                "{} seeds given for {} repeats",
                self.seeds.len(),
                self.repeats
            ));
        }
        if self.repeats == 0 || self.subjects == 0 {
            return bad("at least one subject and one repeat are required".into());
        }
        if self.stages.is_empty() {
            return bad("no stages configured".into());
        }
        for s in &self.stages {
            if !self.stage.contains_key(s) {
                return bad(format!("stage {s} has no [stage.{s}] physiology"));
            }
        }
        if !(0.0..0.5).contains(&self.subject_variation) {
            return bad(format!("subject_variation {} outside [0, 0.5)", self.subject_variation));
        }
        if !(self.noise.sigma >= 0.0) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise.sigma));
        }
        if self.cine.recon_slices.is_empty() {
            return bad("cine.recon_slices is empty".into());
        }
        if let Some(&s) = self
            .cine
            .recon_slices
            .iter()
            .find(|&&s| s >= self.phantom.slice_positions_mm.len())
        {
            return bad(format!("cine recon slice {s} out of range"));
        }
        for (name, lines) in [("cine", self.cine.lines_per_frame), ("flow", self.flow.lines_per_frame)] {
            if lines == 0 || lines > self.phantom.ny {
                return bad(format!("{name}.lines_per_frame {lines} outside 1..={}", self.phantom.ny));
            }
        }
        if self.recon.iterations == 0 || self.recon.uwt_levels == 0 {
            return bad("recon iterations and uwt_levels must be positive".into());
        }
        if !(self.recon.threshold_scale >= 0.0) {
            return bad("recon threshold_scale must be >= 0".into());
        }
        if !(self.age_years < 220.0) {
            return bad(format!("age {} leaves no predicted maximal heart rate", self.age_years));
        }
        Ok(())
    }

    /// Stage physiology on top of the base phantom. The frame interval
    /// follows from the acquisition.
    pub fn stage_phantom(&self, stage: Stage, frame_interval_ms: f64, frames: usize) -> Result<PhantomConfig> {
        let p = self
            .stage
            .get(&stage)
            .ok_or_else(|| Error::InvalidConfig(format!("stage {stage} not configured")))?;
        Ok(PhantomConfig {
            stage,
            heart_rate_bpm: p.heart_rate_bpm,
            resp_rate_bpm: p.resp_rate_bpm,
            edv_ml: p.edv_ml,
            esv_ml: p.esv_ml,
            peak_velocity_cm_s: p.peak_velocity_cm_s,
            frame_interval_ms,
            frames,
            ..self.phantom.clone()
        })
    }

    pub fn cine_frame_interval_ms(&self) -> f64 {
        self.cine.tr_ms * self.cine.lines_per_frame as f64
    }

    pub fn flow_frame_interval_ms(&self) -> f64 {
        self.flow.tr_ms * self.flow.lines_per_frame as f64
    }
}
