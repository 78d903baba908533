//! Closed-form DDIM world.
//!
//! Generation and detection both run on the deterministic DDIM recurrences
//! with analytic noise predictors instead of a trained network:
//!
//! - `Zero` predicts no noise, which makes sampling an exact scalar map and
//!   inversion its exact inverse (a control world where every downstream
//!   accuracy is 1.0);
//! - `Linear` predicts `c_t * x_t`, keeping the whole pipeline per-element
//!   linear so round-trip error can be checked against an independent
//!   scalar recurrence;
//! - `GaussianPrior` is the posterior-mean denoiser for a Gaussian prior on
//!   the clean signal, which injects the realistic inversion error coming
//!   from the one-step lag of DDIM inversion.

use serde::{Deserialize, Serialize};

use crate::codec::{build_mask, decode_bits, embed, encode, ring_means, Message, WatermarkKey};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats::{detection_distance, p_value, DetectionStatistic};
use crate::tensor::{fft2, ifft2, LatentTensor};

/// Variance schedule: `alpha_bar[t]` for `t` in `0..=T`, with
/// `alpha_bar[0] = 1` and strictly decreasing positive values.
#[derive(Debug, Clone)]
pub struct AlphaSchedule {
    alpha_bar: Vec<f64>,
}

impl AlphaSchedule {
    /// Linear beta schedule from `beta_start` to `beta_end` over `steps`
    /// steps; `alpha_bar[t]` is the running product of `1 - beta`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if beta_start <= 0.0 || beta_start.is_nan() || beta_start > beta_end || beta_end >= 1.0 || beta_end.is_nan() {
            return Err(Error::invalid(format!(
                "betas must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut product = 1.0;
        for i in 0..steps {
            let beta = if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            };
            product *= 1.0 - beta;
            alpha_bar.push(product);
        }
        Ok(Self { alpha_bar })
    }

    /// The paper-mirroring default: 40 steps, betas in [1e-4, 0.02].
    pub fn default_t40() -> Self {
        Self::linear(40, 1e-4, 0.02).expect("default schedule parameters are valid")
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }
}

/// Analytic stand-ins for a trained noise predictor.
#[derive(Debug, Clone)]
pub enum EpsilonPredictor {
    /// Predicts zero noise everywhere.
    Zero,
    /// Predicts `coeffs[t-1] * x_t`; one coefficient per step.
    Linear { coeffs: Vec<f64> },
    /// Posterior-mean denoiser for the prior `x_0 ~ N(mean, variance * I)`.
    GaussianPrior { mean: LatentTensor, variance: f64 },
}

impl EpsilonPredictor {
    /// Checks the predictor against a schedule (and, where it has one, a
    /// tensor shape).
    pub fn validate(&self, schedule: &AlphaSchedule) -> Result<()> {
        match self {
            EpsilonPredictor::Zero => Ok(()),
            EpsilonPredictor::Linear { coeffs } => {
                if coeffs.len() != schedule.steps() {
                    return Err(Error::invalid(format!(
                        "linear predictor has {} coefficients for a {}-step schedule",
                        coeffs.len(),
                        schedule.steps()
                    )));
                }
                if !coeffs.iter().all(|c| c.is_finite()) {
                    return Err(Error::invalid("linear predictor coefficients must be finite"));
                }
                Ok(())
            }
            EpsilonPredictor::GaussianPrior { variance, .. } => {
                if *variance <= 0.0 || !variance.is_finite() {
                    return Err(Error::invalid(format!(
                        "prior variance must be positive, got {variance}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Evaluates the predicted noise at `(x_t, t)`, `1 <= t <= T`.
    fn eval(&self, x: &LatentTensor, t: usize, schedule: &AlphaSchedule) -> Result<LatentTensor> {
        debug_assert!(t >= 1 && t <= schedule.steps());
        match self {
            EpsilonPredictor::Zero => Ok(x.map(|_| 0.0)),
            EpsilonPredictor::Linear { coeffs } => {
                let c = coeffs[t - 1];
                Ok(x.map(|v| c * v))
            }
            EpsilonPredictor::GaussianPrior { mean, variance } => {
                let ab = schedule.alpha_bar(t);
                let root_ab = ab.sqrt();
                let rem = 1.0 - ab;
                // Posterior mean of x_0 given x_t under the Gaussian prior:
                // (mean * (1 - ab) + sqrt(ab) * var * x_t) / ((1 - ab) + ab * var)
                let denom = rem + ab * variance;
                let posterior = x.zip_map(mean, |xt, mu| {
                    (mu * rem + root_ab * variance * xt) / denom
                })?;
                let root_rem = rem.sqrt();
                x.zip_map(&posterior, |xt, x0| (xt - root_ab * x0) / root_rem)
            }
        }
    }
}

/// Forward noising `x_t = sqrt(ab_t) x_0 + sqrt(1 - ab_t) eps`; `t = 0`
/// returns `x_0` unchanged.
pub fn forward_noise(
    x0: &LatentTensor,
    eps: &LatentTensor,
    t: usize,
    schedule: &AlphaSchedule,
) -> Result<LatentTensor> {
    if t > schedule.steps() {
        return Err(Error::invalid(format!(
            "step {t} out of range for a {}-step schedule",
            schedule.steps()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let a = ab.sqrt();
    let b = (1.0 - ab).sqrt();
    x0.zip_map(eps, |x, e| a * x + b * e)
}

/// Denoising estimate `(x_t - sqrt(1 - ab_t) eps(x_t, t)) / sqrt(ab_t)`.
pub fn ddim_denoise_estimate(
    xt: &LatentTensor,
    t: usize,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
) -> Result<LatentTensor> {
    if t < 1 || t > schedule.steps() {
        return Err(Error::invalid(format!(
            "step {t} out of range 1..={}",
            schedule.steps()
        )));
    }
    let eps = predictor.eval(xt, t, schedule)?;
    let ab = schedule.alpha_bar(t);
    let root_ab = ab.sqrt();
    let root_rem = (1.0 - ab).sqrt();
    xt.zip_map(&eps, |x, e| (x - root_rem * e) / root_ab)
}

/// Deterministic DDIM sampling from step `t_start` down to 0.
pub fn ddim_sample_from(
    x_start: &LatentTensor,
    t_start: usize,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
) -> Result<LatentTensor> {
    if t_start > schedule.steps() {
        return Err(Error::invalid(format!(
            "start step {t_start} out of range for a {}-step schedule",
            schedule.steps()
        )));
    }
    predictor.validate(schedule)?;
    let mut x = x_start.clone();
    for t in (1..=t_start).rev() {
        let eps = predictor.eval(&x, t, schedule)?;
        let ab = schedule.alpha_bar(t);
        let root_ab = ab.sqrt();
        let root_rem = (1.0 - ab).sqrt();
        let ab_prev = schedule.alpha_bar(t - 1);
        let root_ab_prev = ab_prev.sqrt();
        let root_rem_prev = (1.0 - ab_prev).sqrt();
        x = x.zip_map(&eps, |xt, e| {
            let x0 = (xt - root_rem * e) / root_ab;
            root_ab_prev * x0 + root_rem_prev * e
        })?;
    }
    Ok(x)
}

/// Full-schedule DDIM sampling: noise at step `T` to a clean output.
pub fn ddim_sample(
    x_t: &LatentTensor,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
) -> Result<LatentTensor> {
    ddim_sample_from(x_t, schedule.steps(), predictor, schedule)
}

/// DDIM inversion: estimates the initial noise of a clean output by running
/// the step rule forward in noise level, evaluating the predictor at the
/// current state. The step out of `t = 0` evaluates the predictor with the
/// `t = 1` coefficients, since the schedule defines none at 0.
pub fn ddim_invert(
    x0: &LatentTensor,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
) -> Result<LatentTensor> {
    predictor.validate(schedule)?;
    let mut x = x0.clone();
    for t in 0..schedule.steps() {
        let eps = predictor.eval(&x, t.max(1), schedule)?;
        let ab = schedule.alpha_bar(t);
        let root_ab = ab.sqrt();
        let root_rem = (1.0 - ab).sqrt();
        let ab_next = schedule.alpha_bar(t + 1);
        let root_ab_next = ab_next.sqrt();
        let root_rem_next = (1.0 - ab_next).sqrt();
        x = x.zip_map(&eps, |xt, e| {
            let x0_est = (xt - root_rem * e) / root_ab;
            root_ab_next * x0_est + root_rem_next * e
        })?;
    }
    Ok(x)
}

/// Output of watermarked generation: the clean output and the watermarked
/// initial noise it was sampled from.
#[derive(Debug, Clone)]
pub struct GeneratedWatermarked {
    pub image: LatentTensor,
    pub noise_wm: LatentTensor,
}

/// Embeds the encoded message into the spectrum of the given initial noise
/// and samples an output from the modified noise.
pub fn generate_watermarked_from_noise(
    noise: &LatentTensor,
    key: &WatermarkKey,
    message: &Message,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
) -> Result<GeneratedWatermarked> {
    let pattern = encode(message, key)?;
    let spectrum = fft2(noise);
    let spectrum_wm = embed(&spectrum, &pattern)?;
    let noise_wm = ifft2(&spectrum_wm).real;
    let image = ddim_sample(&noise_wm, predictor, schedule)?;
    Ok(GeneratedWatermarked { image, noise_wm })
}

/// Samples fresh initial noise, embeds, and generates.
pub fn generate_watermarked(
    rng: &mut Rng,
    key: &WatermarkKey,
    message: &Message,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
    channels: usize,
) -> Result<GeneratedWatermarked> {
    let noise = LatentTensor::gaussian(rng, channels, key.height, key.width)?;
    generate_watermarked_from_noise(&noise, key, message, predictor, schedule)
}

/// Everything detection produced for one image.
///
/// When the inverted spectrum has no energy on the mask the chi-squared
/// machinery is undefined; the report then carries `degenerate_sigma =
/// true`, a p-value of 1, and no statistic, rather than failing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub p_value: f64,
    pub presence: bool,
    pub decoded: Message,
    pub detection_distance: f64,
    pub ring_means: Vec<f64>,
    pub degenerate_sigma: bool,
    pub statistic: Option<DetectionStatistic>,
}

/// Inverts an image back to noise, recovers its spectrum, and tests it
/// against the reference message's pattern.
///
/// The presence test needs the reference pattern it is testing for;
/// verification against a known (or claimed) message is the supported
/// protocol. The decoded bits are reported independently of the reference.
pub fn detect_message(
    image: &LatentTensor,
    key: &WatermarkKey,
    reference: &Message,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
    p0: f64,
) -> Result<DetectionReport> {
    if p0 <= 0.0 || p0 >= 1.0 || p0.is_nan() {
        return Err(Error::invalid(format!("presence threshold must be in (0, 1), got {p0}")));
    }
    if image.height() != key.height || image.width() != key.width {
        return Err(Error::invalid(format!(
            "image is {}x{} but key was built for {}x{}",
            image.height(),
            image.width(),
            key.height,
            key.width
        )));
    }
    let inverted = ddim_invert(image, predictor, schedule)?;
    let spectrum = fft2(&inverted);
    let pattern = encode(reference, key)?;
    let mask = build_mask(key)?;
    let means = ring_means(&spectrum, &mask, key.channel)?;
    let decoded = decode_bits(&spectrum, key)?;
    let distance = detection_distance(&spectrum, &pattern)?;
    match p_value(&spectrum, &pattern) {
        Ok(statistic) => Ok(DetectionReport {
            p_value: statistic.p_value,
            presence: statistic.p_value < p0,
            decoded,
            detection_distance: distance,
            ring_means: means,
            degenerate_sigma: false,
            statistic: Some(statistic),
        }),
        Err(Error::DegenerateInput(_)) => Ok(DetectionReport {
            p_value: 1.0,
            presence: false,
            decoded,
            detection_distance: distance,
            ring_means: means,
            degenerate_sigma: true,
            statistic: None,
        }),
        Err(other) => Err(other),
    }
}
