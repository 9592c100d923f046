use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::GopPreset;

/// Rate constraints selectable by index in the stream header.
pub const LAMBDA_PRESETS: [f64; 5] = [0.05, 0.01, 0.0025, 0.001, 0.0005];
pub const DEFAULT_LAMBDA_V_FACTOR: f64 = 20.0;

/// Video-level rate constraint, with the motion pre-training constraint
/// tied to it and optional per-frame overrides for frame-wise encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct RateConstraint {
    pub lambda: f64,
    pub lambda_v: f64,
    /// Display-order overrides for the frame-wise stage.
    pub per_frame: Option<Vec<f64>>,
}

impl RateConstraint {
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_factor(lambda, DEFAULT_LAMBDA_V_FACTOR)
    }

    pub fn with_factor(lambda: f64, factor: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Config(format!("lambda_v factor must be positive, got {factor}")));
        }
        Ok(RateConstraint { lambda, lambda_v: factor * lambda, per_frame: None })
    }

    pub fn frame_lambda(&self, index: usize) -> f64 {
        self.per_frame.as_ref().and_then(|v| v.get(index).copied()).unwrap_or(self.lambda)
    }

    /// Index into [`LAMBDA_PRESETS`], if the constraint is one of them.
    pub fn preset_index(&self) -> Option<u8> {
        LAMBDA_PRESETS.iter().position(|&p| p as f32 == self.lambda as f32).map(|i| i as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FlowSource {
    /// Built-in block-matching estimator on the original frames.
    #[default]
    Builtin,
    /// Directory of `<frame>_<ref>.flo` files (display indices).
    FloDir(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Iterations {
    pub pretrain: usize,
    pub frame: usize,
    pub joint: usize,
}

impl Default for Iterations {
    fn default() -> Self {
        Iterations { pretrain: 2_000, frame: 2_000, joint: 10_000 }
    }
}

impl Iterations {
    pub fn full_scale() -> Self {
        Iterations { pretrain: 10_000, frame: 2_000, joint: 100_000 }
    }
}

/// Shape of the per-stage training schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub noise_fraction: f64,
    pub softround_fraction: f64,
    pub noise_start: f64,
    pub noise_end: f64,
    pub temperature_start: f64,
    pub temperature_end: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub checkpoint_every: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            noise_fraction: 0.7,
            softround_fraction: 0.25,
            noise_start: 1.0,
            noise_end: 0.1,
            temperature_start: 0.3,
            temperature_end: 1e-2,
            lr_start: 1e-2,
            lr_end: 1e-4,
            checkpoint_every: 100,
        }
    }
}

impl ScheduleConfig {
    /// Refinement of already trained decoders: no noise phase and a gentler start.
    pub fn refinement() -> Self {
        ScheduleConfig {
            noise_fraction: 0.0,
            softround_fraction: 0.5,
            temperature_start: 0.05,
            lr_start: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.noise_fraction)
            || !frac_ok(self.softround_fraction)
            || self.noise_fraction + self.softround_fraction > 1.0
        {
            return Err(Error::Config("schedule phase fractions must lie in [0, 1] and sum to at most 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_start) || !(0.0..=1.0).contains(&self.noise_end) {
            return Err(Error::Config("noise amplitudes must lie in [0, 1]".into()));
        }
        if !(self.temperature_start > 0.0 && self.temperature_end > 0.0) {
            return Err(Error::Config("soft-round temperatures must be positive".into()));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Encoder settings, loadable from TOML. Every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub lambda: f64,
    pub lambda_v_factor: f64,
    pub frame_lambdas: Option<Vec<f64>>,
    pub seed: u64,
    pub gop: GopPreset,
    /// Encode at most this many frames.
    pub max_frames: Option<usize>,
    pub iterations: Iterations,
    /// Motion pre-training and frame-wise stages.
    pub schedule: ScheduleConfig,
    pub joint_schedule: ScheduleConfig,
    pub flow: FlowSource,
    pub skip_pretrain: bool,
    pub skip_joint: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            lambda: 0.001,
            lambda_v_factor: DEFAULT_LAMBDA_V_FACTOR,
            frame_lambdas: None,
            seed: 0,
            gop: GopPreset::RandomAccess,
            max_frames: None,
            iterations: Iterations::default(),
            schedule: ScheduleConfig::default(),
            joint_schedule: ScheduleConfig::refinement(),
            flow: FlowSource::Builtin,
            skip_pretrain: false,
            skip_joint: false,
        }
    }
}

impl EncoderConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: EncoderConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn rate(&self) -> Result<RateConstraint> {
        let mut r = RateConstraint::with_factor(self.lambda, self.lambda_v_factor)?;
        if let Some(v) = &self.frame_lambdas {
            if let Some(bad) = v.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
                return Err(Error::Config(format!("per-frame lambda {bad} must be positive")));
            }
            r.per_frame = Some(v.clone());
        }
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        self.rate()?;
        self.schedule.validate()?;
        self.joint_schedule.validate()?;
        if self.max_frames == Some(0) {
            return Err(Error::Config("max_frames must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = EncoderConfig::from_toml("lambda = 0.01\nskip_joint = true\n[iterations]\njoint = 5\n").unwrap();
        assert_eq!(cfg.lambda, 0.01);
        assert!(cfg.skip_joint);
        assert_eq!(cfg.iterations.joint, 5);
        assert_eq!(cfg.iterations.pretrain, 2_000);
        let again = EncoderConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn flow_source_forms() {
        let a = EncoderConfig::from_toml("flow = \"builtin\"").unwrap();
        assert_eq!(a.flow, FlowSource::Builtin);
        let b = EncoderConfig::from_toml("[flow]\nflo-dir = \"flows\"").unwrap();
        assert_eq!(b.flow, FlowSource::FloDir("flows".into()));
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(matches!(EncoderConfig::from_toml("lambda = -1.0"), Err(Error::Config(_))));
        assert!(matches!(EncoderConfig::from_toml("lamda = 1.0"), Err(Error::Config(_))));
        assert!(matches!(EncoderConfig::from_toml("[schedule]\nnoise_fraction = 0.9"), Err(Error::Config(_))));
    }

    #[test]
    fn lambda_v_is_twenty_lambda() {
        let r = RateConstraint::new(0.0025).unwrap();
        assert_eq!(r.lambda_v, 20.0 * 0.0025);
        assert_eq!(r.preset_index(), Some(2));
        assert_eq!(RateConstraint::new(0.003).unwrap().preset_index(), None);
    }
}
