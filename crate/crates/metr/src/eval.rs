//! Scaler selection and the evaluation metric suite.
//!
//! The trial pipeline pairs a watermarked and a plain generation from the
//! same initial noise, pushes both through the attack channel, and detects
//! both against the trial's reference message. Trials are seeded
//! independently from a base seed, so they can run in any order (or in
//! parallel) and still aggregate to identical results.

use serde::{Deserialize, Serialize};

use crate::attack::{apply_attack, AttackContext, AttackSpec};
use crate::codec::{Message, WatermarkKey};
use crate::diffusion::{
    ddim_sample, detect_message, generate_watermarked_from_noise, AlphaSchedule, EpsilonPredictor,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::stats::{g_criterion, GCriterionConstants};
use crate::tensor::LatentTensor;

const STREAM_TRIAL: u64 = 1;
const STREAM_ATTACK_WM: u64 = 2;
const STREAM_ATTACK_PLAIN: u64 = 3;
const STREAM_SCALER: u64 = 4;

/// Root-mean-square difference over all elements; the image-quality proxy.
pub fn distortion_proxy(a: &LatentTensor, b: &LatentTensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum / a.data().len() as f64).sqrt())
}

/// Mann-Whitney AUC: `P(pos > neg) + 0.5 * P(pos == neg)`. Higher scores
/// must mean more watermark-like.
pub fn auc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(Error::invalid("score lists must be nonempty"));
    }
    let mut all: Vec<(f64, bool)> = scores_pos
        .iter()
        .map(|&s| (s, true))
        .chain(scores_neg.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::invalid("scores must not be NaN"));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Rank sum of the positives with midranks for ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum += midrank;
            }
        }
        i = j;
    }
    let n_pos = scores_pos.len() as f64;
    let n_neg = scores_neg.len() as f64;
    let u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

/// True-positive rate at a fixed false-positive rate. The decision
/// threshold is the `(1 - fpr)` empirical quantile of the negative scores
/// (higher-rank interpolation); positives strictly above it count.
pub fn tpr_at_fpr(scores_pos: &[f64], scores_neg: &[f64], fpr: f64) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(Error::invalid("score lists must be nonempty"));
    }
    if fpr <= 0.0 || fpr >= 1.0 || fpr.is_nan() {
        return Err(Error::invalid(format!("fpr must be in (0, 1), got {fpr}")));
    }
    let mut sorted = scores_neg.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((sorted.len() - 1) as f64 * (1.0 - fpr)).ceil() as usize;
    let threshold = sorted[idx];
    let above = scores_pos.iter().filter(|&&s| s > threshold).count();
    Ok(above as f64 / scores_pos.len() as f64)
}

/// Fraction of matching bits pooled over all aligned message pairs.
pub fn bit_accuracy(truth: &[Message], decoded: &[Message]) -> Result<f64> {
    if truth.len() != decoded.len() || truth.is_empty() {
        return Err(Error::invalid("message lists must be nonempty and aligned"));
    }
    let mut bits = 0usize;
    let mut errors = 0usize;
    for (t, d) in truth.iter().zip(decoded) {
        errors += t.hamming_distance(d)?;
        bits += t.len();
    }
    Ok(1.0 - errors as f64 / bits as f64)
}

/// Fraction of messages decoded with every bit correct.
pub fn word_accuracy(truth: &[Message], decoded: &[Message]) -> Result<f64> {
    if truth.len() != decoded.len() || truth.is_empty() {
        return Err(Error::invalid("message lists must be nonempty and aligned"));
    }
    let mut exact = 0usize;
    for (t, d) in truth.iter().zip(decoded) {
        if t.hamming_distance(d)? == 0 {
            exact += 1;
        }
    }
    Ok(exact as f64 / truth.len() as f64)
}

/// Where each trial's message comes from.
#[derive(Debug, Clone)]
pub enum MessageSource {
    Fixed(Message),
    Random,
}

impl MessageSource {
    fn draw(&self, rng: &mut Rng, radius: usize) -> Result<Message> {
        match self {
            MessageSource::Fixed(msg) => {
                if msg.len() != radius {
                    return Err(Error::invalid(format!(
                        "fixed message has {} bits but the key radius is {radius}",
                        msg.len()
                    )));
                }
                Ok(msg.clone())
            }
            MessageSource::Random => Message::random(rng, radius),
        }
    }
}

/// Shared pipeline parameters for a batch of trials.
#[derive(Clone, Copy)]
pub struct PipelineSettings<'a> {
    pub key: &'a WatermarkKey,
    pub predictor: &'a EpsilonPredictor,
    pub schedule: &'a AlphaSchedule,
    pub channels: usize,
    pub p0: f64,
    pub base_seed: u64,
}

/// Raw outcome of one paired trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub message: Message,
    pub decoded: Message,
    pub p_watermarked: f64,
    pub p_plain: f64,
    pub presence_watermarked: bool,
    pub presence_plain: bool,
    pub detection_resolution: f64,
    pub distortion: f64,
}

/// Aggregate metrics over a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub auc: f64,
    pub tpr_at_1pct_fpr: f64,
    pub bit_accuracy: f64,
    pub word_accuracy: f64,
    pub mean_detection_resolution: f64,
    pub distortion_proxy: f64,
}

/// Runs one trial: paired watermarked/plain generation from the same noise,
/// the attack on both, and detection of both against the trial's message.
pub fn run_trial(
    settings: &PipelineSettings<'_>,
    attack: &AttackSpec,
    source: &MessageSource,
    index: usize,
) -> Result<TrialRecord> {
    let seed = derive_seed(settings.base_seed, STREAM_TRIAL, index as u64);
    let mut rng = Rng::from_seed(seed);
    let message = source.draw(&mut rng, settings.key.radius)?;
    let noise = LatentTensor::gaussian(
        &mut rng,
        settings.channels,
        settings.key.height,
        settings.key.width,
    )?;

    let generated = generate_watermarked_from_noise(
        &noise,
        settings.key,
        &message,
        settings.predictor,
        settings.schedule,
    )?;
    let plain = ddim_sample(&noise, settings.predictor, settings.schedule)?;
    let distortion = distortion_proxy(&generated.image, &plain)?;

    let ctx = AttackContext { predictor: settings.predictor, schedule: settings.schedule };
    let mut rng_wm = Rng::from_seed(derive_seed(settings.base_seed, STREAM_ATTACK_WM, index as u64));
    let mut rng_plain =
        Rng::from_seed(derive_seed(settings.base_seed, STREAM_ATTACK_PLAIN, index as u64));
    let attacked_wm = apply_attack(&generated.image, attack, &ctx, &mut rng_wm)?;
    let attacked_plain = apply_attack(&plain, attack, &ctx, &mut rng_plain)?;

    let report_wm = detect_message(
        &attacked_wm,
        settings.key,
        &message,
        settings.predictor,
        settings.schedule,
        settings.p0,
    )?;
    let report_plain = detect_message(
        &attacked_plain,
        settings.key,
        &message,
        settings.predictor,
        settings.schedule,
        settings.p0,
    )?;

    Ok(TrialRecord {
        index,
        seed,
        decoded: report_wm.decoded.clone(),
        message,
        p_watermarked: report_wm.p_value,
        p_plain: report_plain.p_value,
        presence_watermarked: report_wm.presence,
        presence_plain: report_plain.presence,
        detection_resolution: report_plain.detection_distance - report_wm.detection_distance,
        distortion,
    })
}

/// Aggregates trial records into the metric suite. Scores are `1 - p`, so
/// higher means more watermark-like.
pub fn summarize_trials(records: &[TrialRecord]) -> Result<EvalSummary> {
    if records.is_empty() {
        return Err(Error::invalid("no trials to summarize"));
    }
    let pos: Vec<f64> = records.iter().map(|r| 1.0 - r.p_watermarked).collect();
    let neg: Vec<f64> = records.iter().map(|r| 1.0 - r.p_plain).collect();
    let truth: Vec<Message> = records.iter().map(|r| r.message.clone()).collect();
    let decoded: Vec<Message> = records.iter().map(|r| r.decoded.clone()).collect();
    let n = records.len() as f64;
    Ok(EvalSummary {
        auc: auc(&pos, &neg)?,
        tpr_at_1pct_fpr: tpr_at_fpr(&pos, &neg, 0.01)?,
        bit_accuracy: bit_accuracy(&truth, &decoded)?,
        word_accuracy: word_accuracy(&truth, &decoded)?,
        mean_detection_resolution: records.iter().map(|r| r.detection_resolution).sum::<f64>() / n,
        distortion_proxy: records.iter().map(|r| r.distortion).sum::<f64>() / n,
    })
}

/// Runs `trials` sequential trials of one attack and aggregates them.
pub fn evaluate_attack(
    settings: &PipelineSettings<'_>,
    attack: &AttackSpec,
    source: &MessageSource,
    trials: usize,
) -> Result<(EvalSummary, Vec<TrialRecord>)> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let records = (0..trials)
        .map(|i| run_trial(settings, attack, source, i))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_trials(&records)?;
    Ok((summary, records))
}

/// Search space and acceptance gates for scaler selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalerSearchConfig {
    pub s_min: f64,
    pub s_max: f64,
    pub s_step: f64,
    pub quality_budget: f64,
    pub constants: GCriterionConstants,
    pub trials: usize,
}

impl Default for ScalerSearchConfig {
    fn default() -> Self {
        Self {
            s_min: 60.0,
            s_max: 160.0,
            s_step: 10.0,
            quality_budget: f64::INFINITY,
            constants: GCriterionConstants::default(),
            trials: 4,
        }
    }
}

impl ScalerSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_min <= 0.0 || self.s_min.is_nan() || self.s_min >= self.s_max || self.s_max.is_nan() {
            return Err(Error::invalid(format!(
                "scaler range requires 0 < s_min < s_max, got [{}, {}]",
                self.s_min, self.s_max
            )));
        }
        if self.s_step <= 0.0 || self.s_step.is_nan() {
            return Err(Error::invalid(format!("s_step must be positive, got {}", self.s_step)));
        }
        if self.quality_budget.is_nan() || self.quality_budget < 0.0 {
            return Err(Error::invalid("quality budget must be >= 0"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("scaler search needs at least one quality trial"));
        }
        Ok(())
    }

    fn candidates(&self) -> Vec<f64> {
        let count = ((self.s_max - self.s_min) / self.s_step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.s_min + i as f64 * self.s_step).collect()
    }
}

/// Per-scaler record of the search trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalerCandidate {
    pub scaler: f64,
    pub detection_resolution: f64,
    /// `None` when the criterion denominator is not positive at this scaler.
    pub ratio: Option<f64>,
    pub criterion_pass: bool,
    /// Mean distortion over the quality trials; only computed when the
    /// criterion passed.
    pub distortion: Option<f64>,
    pub qualified: bool,
}

/// Search outcome: the smallest qualifying scaler, if any, plus the full
/// trace either way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalerSearch {
    pub selected: Option<f64>,
    pub trace: Vec<ScalerCandidate>,
}

/// Scaler selection: ascending over the range, each candidate first checks
/// the detection-resolution criterion on one watermarked/plain pair from
/// shared noise, then (if it passes) checks mean distortion against the
/// quality budget. The smallest scaler passing both wins.
pub fn select_scaler(
    cfg: &ScalerSearchConfig,
    key_template: &WatermarkKey,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
    channels: usize,
    base_seed: u64,
) -> Result<ScalerSearch> {
    cfg.validate()?;
    let mut trace = Vec::new();
    let mut selected = None;
    for (i, scaler) in cfg.candidates().into_iter().enumerate() {
        let key = key_template.with_scaler(scaler)?;
        let mut rng = Rng::from_seed(derive_seed(base_seed, STREAM_SCALER, i as u64));

        // Step 1: detection resolution from a single shared-noise pair.
        let message = Message::random(&mut rng, key.radius)?;
        let noise = LatentTensor::gaussian(&mut rng, channels, key.height, key.width)?;
        let generated =
            generate_watermarked_from_noise(&noise, &key, &message, predictor, schedule)?;
        let plain = ddim_sample(&noise, predictor, schedule)?;
        let report_wm =
            detect_message(&generated.image, &key, &message, predictor, schedule, 0.01)?;
        let report_plain = detect_message(&plain, &key, &message, predictor, schedule, 0.01)?;
        let resolution = report_plain.detection_distance - report_wm.detection_distance;

        let (ratio, criterion_pass) = match g_criterion(resolution, scaler, &cfg.constants) {
            Ok(outcome) => (Some(outcome.ratio), outcome.pass),
            Err(Error::CriterionUndefined(_)) => (None, false),
            Err(other) => return Err(other),
        };

        // Step 2: image quality over the configured trials.
        let distortion = if criterion_pass {
            let mut total = 0.0;
            for _ in 0..cfg.trials {
                let msg = Message::random(&mut rng, key.radius)?;
                let noise = LatentTensor::gaussian(&mut rng, channels, key.height, key.width)?;
                let wm = generate_watermarked_from_noise(&noise, &key, &msg, predictor, schedule)?;
                let plain = ddim_sample(&noise, predictor, schedule)?;
                total += distortion_proxy(&wm.image, &plain)?;
            }
            Some(total / cfg.trials as f64)
        } else {
            None
        };

        let qualified = criterion_pass && distortion.is_some_and(|d| d <= cfg.quality_budget);
        if qualified && selected.is_none() {
            selected = Some(scaler);
        }
        trace.push(ScalerCandidate {
            scaler,
            detection_resolution: resolution,
            ratio,
            criterion_pass,
            distortion,
            qualified,
        });
    }
    Ok(ScalerSearch { selected, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.4], &[0.5, 0.1]).unwrap(), 0.75);
        assert!(auc(&[], &[0.5]).is_err());
    }

    #[test]
    fn auc_brute_force_cross_check() {
        let pos = [0.91, 0.55, 0.72, 0.55, 0.13];
        let neg = [0.45, 0.55, 0.08, 0.31];
        let mut wins = 0.0;
        for p in pos {
            for n in neg {
                if p > n {
                    wins += 1.0;
                } else if p == n {
                    wins += 0.5;
                }
            }
        }
        let expected = wins / (pos.len() * neg.len()) as f64;
        assert!((auc(&pos, &neg).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let pos = [0.9, 0.4, 0.62, 0.77];
        let neg = [0.5, 0.1, 0.44];
        let base = auc(&pos, &neg).unwrap();
        let f = |x: f64| (3.0 * x + 1.0).atan();
        let pos_t: Vec<f64> = pos.iter().map(|&x| f(x)).collect();
        let neg_t: Vec<f64> = neg.iter().map(|&x| f(x)).collect();
        assert_eq!(auc(&pos_t, &neg_t).unwrap(), base);
    }

    #[test]
    fn tpr_at_fpr_perfect_separation() {
        let pos = [0.9, 0.8, 0.95];
        let neg = [0.1, 0.2, 0.3];
        for fpr in [0.01, 0.1, 0.5] {
            assert_eq!(tpr_at_fpr(&pos, &neg, fpr).unwrap(), 1.0);
        }
    }

    #[test]
    fn tpr_at_fpr_self_comparison_tracks_fpr() {
        let scores: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        for (fpr, tol) in [(0.01, 2e-3), (0.05, 2e-3), (0.2, 2e-3)] {
            let tpr = tpr_at_fpr(&scores, &scores, fpr).unwrap();
            assert!((tpr - fpr).abs() <= tol, "fpr {fpr}: tpr {tpr}");
        }
    }

    #[test]
    fn tpr_at_fpr_matches_explicit_convention() {
        let pos = [0.93, 0.21, 0.56, 0.74, 0.88, 0.35, 0.66, 0.49, 0.81, 0.12];
        let neg = [0.41, 0.03, 0.59, 0.27, 0.68, 0.15, 0.52, 0.33, 0.07, 0.45];
        // Independent recomputation of the stated convention.
        let expected = {
            let mut sorted = neg.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let fpr = 0.3;
            let idx = ((sorted.len() - 1) as f64 * (1.0 - fpr)).ceil() as usize;
            let threshold = sorted[idx];
            pos.iter().filter(|&&p| p > threshold).count() as f64 / pos.len() as f64
        };
        assert_eq!(tpr_at_fpr(&pos, &neg, 0.3).unwrap(), expected);
        // threshold lands on 0.52; six positives sit strictly above it
        assert_eq!(expected, 0.6);
    }

    #[test]
    fn tpr_nondecreasing_in_fpr() {
        let pos = [0.9, 0.7, 0.5, 0.3, 0.65, 0.82];
        let neg = [0.6, 0.4, 0.2, 0.55, 0.35, 0.75];
        let mut prev = 0.0;
        for fpr in [0.05, 0.1, 0.2, 0.4, 0.6, 0.8] {
            let tpr = tpr_at_fpr(&pos, &neg, fpr).unwrap();
            assert!(tpr >= prev);
            prev = tpr;
        }
    }

    #[test]
    fn accuracy_examples() {
        let a = Message::from_bit_string("101").unwrap();
        let b = Message::from_bit_string("100").unwrap();
        let truth = vec![a.clone(), a.clone()];
        let same = vec![a.clone(), a.clone()];
        assert_eq!(bit_accuracy(&truth, &same).unwrap(), 1.0);
        assert_eq!(word_accuracy(&truth, &same).unwrap(), 1.0);

        let decoded = vec![a.clone(), b];
        assert!((bit_accuracy(&truth, &decoded).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(word_accuracy(&truth, &decoded).unwrap(), 0.5);

        assert!(bit_accuracy(&truth, &[a]).is_err());
    }

    #[test]
    fn word_accuracy_never_exceeds_bit_accuracy() {
        let mut rng = Rng::from_seed(50);
        let truth: Vec<Message> = (0..40).map(|_| Message::random(&mut rng, 8).unwrap()).collect();
        let decoded: Vec<Message> =
            (0..40).map(|_| Message::random(&mut rng, 8).unwrap()).collect();
        let bits = bit_accuracy(&truth, &decoded).unwrap();
        let words = word_accuracy(&truth, &decoded).unwrap();
        assert!(words <= bits + 1e-12);
    }

    #[test]
    fn distortion_proxy_examples() {
        let a = LatentTensor::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(distortion_proxy(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 2.0);
        assert!((distortion_proxy(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        let c = LatentTensor::zeros(1, 2, 3).unwrap();
        assert!(distortion_proxy(&a, &c).is_err());
    }

    #[test]
    fn trials_are_deterministic_and_independent_of_order() {
        let key = WatermarkKey::new(4, 80.0, 0, 16, 16).unwrap();
        let schedule = AlphaSchedule::linear(5, 1e-4, 0.02).unwrap();
        let predictor = EpsilonPredictor::Zero;
        let settings = PipelineSettings {
            key: &key,
            predictor: &predictor,
            schedule: &schedule,
            channels: 1,
            p0: 0.01,
            base_seed: 9,
        };
        let a = run_trial(&settings, &AttackSpec::None, &MessageSource::Random, 3).unwrap();
        let b = run_trial(&settings, &AttackSpec::None, &MessageSource::Random, 3).unwrap();
        assert_eq!(a.message, b.message);
        assert_eq!(a.p_watermarked, b.p_watermarked);
        assert_eq!(a.detection_resolution, b.detection_resolution);
    }

    #[test]
    fn clean_zero_predictor_summary_is_perfect() {
        let key = WatermarkKey::new(4, 80.0, 0, 16, 16).unwrap();
        let schedule = AlphaSchedule::linear(5, 1e-4, 0.02).unwrap();
        let predictor = EpsilonPredictor::Zero;
        let settings = PipelineSettings {
            key: &key,
            predictor: &predictor,
            schedule: &schedule,
            channels: 1,
            p0: 0.01,
            base_seed: 4,
        };
        let (summary, records) =
            evaluate_attack(&settings, &AttackSpec::None, &MessageSource::Random, 20).unwrap();
        assert_eq!(summary.auc, 1.0);
        assert_eq!(summary.bit_accuracy, 1.0);
        assert_eq!(summary.word_accuracy, 1.0);
        assert!(summary.mean_detection_resolution > 0.0);
        assert_eq!(records.len(), 20);
    }

    #[test]
    fn scaler_search_with_infinite_budget_returns_smallest_passing() {
        let key = WatermarkKey::new(4, 60.0, 0, 32, 32).unwrap();
        let schedule = AlphaSchedule::linear(5, 1e-4, 0.02).unwrap();
        let predictor = EpsilonPredictor::Zero;
        let cfg = ScalerSearchConfig { trials: 2, ..Default::default() };
        let search = select_scaler(&cfg, &key, &predictor, &schedule, 1, 0).unwrap();
        assert_eq!(search.trace.len(), 11, "one row per scaler in 60..=160 step 10");
        let first_pass = search
            .trace
            .iter()
            .find(|c| c.criterion_pass)
            .map(|c| c.scaler);
        assert_eq!(search.selected, first_pass);
        assert!(search.selected.is_some(), "exact world should detect easily");
    }

    #[test]
    fn scaler_search_with_zero_budget_finds_nothing_but_keeps_trace() {
        let key = WatermarkKey::new(4, 60.0, 0, 32, 32).unwrap();
        let schedule = AlphaSchedule::linear(5, 1e-4, 0.02).unwrap();
        let predictor = EpsilonPredictor::Zero;
        let cfg = ScalerSearchConfig { quality_budget: 0.0, trials: 2, ..Default::default() };
        let search = select_scaler(&cfg, &key, &predictor, &schedule, 1, 0).unwrap();
        assert!(search.selected.is_none());
        assert_eq!(search.trace.len(), 11);
        assert!(search.trace.iter().all(|c| !c.qualified));
        assert!(
            search
                .trace
                .iter()
                .filter_map(|c| c.distortion)
                .all(|d| d > 0.0),
            "watermarking always distorts"
        );
    }

    #[test]
    fn scaler_search_config_validation() {
        let bad = ScalerSearchConfig { s_min: 100.0, s_max: 50.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ScalerSearchConfig { s_step: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ScalerSearchConfig { trials: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
