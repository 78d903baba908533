//! Experiment configuration.
//!
//! One JSON document drives every command. Unknown keys are rejected so a
//! typo in a sweep cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use metr::attack::AttackSpec;
use metr::codec::{Message, WatermarkKey};
use metr::diffusion::{AlphaSchedule, EpsilonPredictor};
use metr::eval::{MessageSource, ScalerSearchConfig};
use metr::stats::GCriterionConstants;
use metr::tensor::LatentTensor;

use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dims: DimsConfig,
    pub schedule: ScheduleConfig,
    pub predictor: PredictorConfig,
    pub key: KeyConfig,
    pub messages: MessageConfig,
    pub attacks: Vec<AttackSpec>,
    pub p0: f64,
    pub trials: usize,
    #[serde(default = "default_true")]
    pub embed_watermark: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tune: Option<TuneConfig>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorConfig {
    Zero,
    /// One coefficient broadcast to every step.
    Linear { coeff: f64 },
    /// Constant prior mean broadcast over the latent.
    GaussianPrior { mean: f64, variance: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyConfig {
    pub r: usize,
    #[serde(rename = "S")]
    pub scaler: f64,
    pub channel: usize,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MessageConfig {
    Fixed { bits: String },
    Random,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    #[serde(default = "default_s_min")]
    pub s_min: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default = "default_s_step")]
    pub s_step: f64,
    /// Maximum mean distortion allowed; omit for no budget.
    #[serde(default)]
    pub quality_budget: Option<f64>,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_quality_trials")]
    pub quality_trials: usize,
}

fn default_s_min() -> f64 {
    60.0
}
fn default_s_max() -> f64 {
    160.0
}
fn default_s_step() -> f64 {
    10.0
}
fn default_k() -> f64 {
    GCriterionConstants::default().k
}
fn default_b() -> f64 {
    GCriterionConstants::default().b
}
fn default_quality_trials() -> usize {
    4
}

/// Fully validated run parameters, with every referenced module's
/// invariants already enforced.
#[derive(Debug)]
pub struct Loaded {
    pub seed: u64,
    pub channels: usize,
    pub key: WatermarkKey,
    pub schedule: AlphaSchedule,
    pub predictor: EpsilonPredictor,
    pub source: MessageSource,
    pub attacks: Vec<AttackSpec>,
    pub p0: f64,
    pub trials: usize,
    pub embed_watermark: bool,
    pub output_dir: Option<PathBuf>,
    pub tune: Option<ScalerSearchConfig>,
}

pub fn load(path: &Path, seed_override: Option<u64>) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    validate(config, seed_override)
}

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn validate(config: ExperimentConfig, seed_override: Option<u64>) -> CliResult<Loaded> {
    let dims = &config.dims;
    if dims.channels == 0 || dims.height == 0 || dims.width == 0 {
        return config_err(format!(
            "dims must be positive, got {}x{}x{}",
            dims.channels, dims.height, dims.width
        ));
    }
    if config.key.channel >= dims.channels {
        return config_err(format!(
            "key.channel {} out of range for {} channels",
            config.key.channel, dims.channels
        ));
    }
    let key = WatermarkKey::new(
        config.key.r,
        config.key.scaler,
        config.key.channel,
        dims.height,
        dims.width,
    )
    .map_err(|e| CliError::Config(format!("key: {e}")))?;

    let schedule =
        AlphaSchedule::linear(config.schedule.steps, config.schedule.beta_start, config.schedule.beta_end)
            .map_err(|e| CliError::Config(format!("schedule: {e}")))?;

    let predictor = match config.predictor {
        PredictorConfig::Zero => EpsilonPredictor::Zero,
        PredictorConfig::Linear { coeff } => {
            EpsilonPredictor::Linear { coeffs: vec![coeff; schedule.steps()] }
        }
        PredictorConfig::GaussianPrior { mean, variance } => {
            let mean = LatentTensor::zeros(dims.channels, dims.height, dims.width)
                .map_err(|e| CliError::Config(format!("dims: {e}")))?
                .map(|_| mean);
            EpsilonPredictor::GaussianPrior { mean, variance }
        }
    };
    predictor
        .validate(&schedule)
        .map_err(|e| CliError::Config(format!("predictor: {e}")))?;

    let source = match &config.messages {
        MessageConfig::Fixed { bits } => {
            let message = Message::from_bit_string(bits)
                .map_err(|e| CliError::Config(format!("messages.bits: {e}")))?;
            if message.len() != key.radius {
                return config_err(format!(
                    "messages.bits has {} bits but key.r is {}",
                    message.len(),
                    key.radius
                ));
            }
            MessageSource::Fixed(message)
        }
        MessageConfig::Random => MessageSource::Random,
    };

    if config.attacks.is_empty() {
        return config_err("attacks must list at least one attack (use {\"kind\":\"none\"})");
    }
    for attack in &config.attacks {
        attack
            .validate()
            .map_err(|e| CliError::Config(format!("attacks: {e}")))?;
        if let AttackSpec::DiffusionRegen { t_star } = attack {
            if *t_star > schedule.steps() {
                return config_err(format!(
                    "attacks: regeneration step {t_star} exceeds the {}-step schedule",
                    schedule.steps()
                ));
            }
        }
    }

    if config.p0 <= 0.0 || config.p0 >= 1.0 || config.p0.is_nan() {
        return config_err(format!("p0 must be in (0, 1), got {}", config.p0));
    }
    if config.trials == 0 {
        return config_err("trials must be at least 1");
    }

    let tune = match config.tune {
        None => None,
        Some(t) => {
            let cfg = ScalerSearchConfig {
                s_min: t.s_min,
                s_max: t.s_max,
                s_step: t.s_step,
                quality_budget: t.quality_budget.unwrap_or(f64::INFINITY),
                constants: GCriterionConstants { k: t.k, b: t.b },
                trials: t.quality_trials,
            };
            cfg.validate().map_err(|e| CliError::Config(format!("tune: {e}")))?;
            Some(cfg)
        }
    };

    Ok(Loaded {
        seed: seed_override.unwrap_or(config.seed),
        channels: dims.channels,
        key,
        schedule,
        predictor,
        source,
        attacks: config.attacks,
        p0: config.p0,
        trials: config.trials,
        embed_watermark: config.embed_watermark,
        output_dir: config.output_dir,
        tune,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "seed": 0,
            "dims": {"channels": 1, "height": 64, "width": 64},
            "schedule": {"steps": 40, "beta_start": 1e-4, "beta_end": 0.02},
            "predictor": {"kind": "zero"},
            "key": {"r": 10, "S": 100.0, "channel": 0},
            "messages": {"kind": "random"},
            "attacks": [{"kind": "none"}],
            "p0": 0.01,
            "trials": 3
        })
    }

    fn load_value(value: serde_json::Value) -> CliResult<Loaded> {
        let config: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        validate(config, None)
    }

    #[test]
    fn valid_config_loads() {
        let loaded = load_value(base_json()).unwrap();
        assert_eq!(loaded.key.radius, 10);
        assert_eq!(loaded.schedule.steps(), 40);
        assert!(loaded.embed_watermark);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut value = base_json();
        value["typo_field"] = serde_json::json!(1);
        let err = load_value(value).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("typo_field"), "{err}");
    }

    #[test]
    fn oversized_radius_is_rejected_naming_the_constraint() {
        let mut value = base_json();
        value["key"]["r"] = serde_json::json!(32);
        let err = load_value(value).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("min(h/2, w/2)"), "{err}");
    }

    #[test]
    fn fixed_message_must_match_radius() {
        let mut value = base_json();
        value["messages"] = serde_json::json!({"kind": "fixed", "bits": "101"});
        let err = load_value(value).unwrap_err();
        assert!(err.to_string().contains("key.r"), "{err}");
    }

    #[test]
    fn attack_parameters_are_validated_at_load() {
        let mut value = base_json();
        value["attacks"] = serde_json::json!([{"kind": "jpeg", "params": {"quality": 0}}]);
        assert_eq!(load_value(value).unwrap_err().exit_code(), 2);

        let mut value = base_json();
        value["attacks"] = serde_json::json!([{"kind": "diffusion_regen", "params": {"t_star": 41}}]);
        assert!(load_value(value).unwrap_err().to_string().contains("schedule"));
    }

    #[test]
    fn tune_defaults_fill_in() {
        let mut value = base_json();
        value["tune"] = serde_json::json!({});
        let loaded = load_value(value).unwrap();
        let tune = loaded.tune.unwrap();
        assert_eq!(tune.s_min, 60.0);
        assert_eq!(tune.s_max, 160.0);
        assert_eq!(tune.s_step, 10.0);
        assert!(tune.quality_budget.is_infinite());
    }
}
