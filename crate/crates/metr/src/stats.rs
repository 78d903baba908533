//! Detection statistics.
//!
//! Presence of a watermark is tested against the null hypothesis that the
//! recovered spectrum is the transform of white real Gaussian noise.
//! Writing `sigma^2` for the mean squared modulus of the masked bins, the
//! statistic
//!
//! ```text
//! z = sum_{i in M} |WM_i - y_i|^2 / sigma^2
//! ```
//!
//! is non-central chi-squared with `|M|` degrees of freedom and
//! non-centrality `lambda = sum_{i in M} |WM_i|^2 / sigma^2`. The count
//! works out to `|M|` because the two factors of two cancel: spectra of
//! real tensors are conjugate-symmetric and the mask is centro-symmetric,
//! so the `|M|` masked bins carry only `|M|/2` independent complex values
//! (`|M|` real components), while `sigma^2` is twice the per-component
//! variance. Under that pairing the match is exact in both mean and
//! variance, which is what makes the null p-values uniform.
//!
//! Small p-values mean `y` is close to the watermark pattern, i.e. the
//! watermark is present.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::codec::{RingMask, WatermarkPattern};
use crate::error::{Error, Result};
use crate::tensor::Spectrum;

/// Poisson tail mass at which the non-central series is truncated.
const SERIES_TAIL: f64 = 1e-12;
/// Hard cap on series terms; hitting it is an error, not a silent result.
const SERIES_MAX_TERMS: usize = 100_000;
/// Estimated variances below this are treated as degenerate input.
const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Everything the presence test produced.
///
/// `sigma_sq` is the masked mean squared modulus, `dof` equals the masked
/// bin count `|M|`, and `lambda == pattern energy / sigma_sq` and
/// `p_value == ncx2_cdf(dof, lambda, z)` hold exactly by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionStatistic {
    pub sigma_sq: f64,
    pub z: f64,
    pub lambda: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Fitted constants of the scaler acceptance rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GCriterionConstants {
    pub k: f64,
    pub b: f64,
}

impl Default for GCriterionConstants {
    fn default() -> Self {
        Self { k: -2.23e-3, b: 0.653 }
    }
}

/// Outcome of the scaler acceptance rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GCriterionOutcome {
    pub ratio: f64,
    pub pass: bool,
}

/// Mean squared modulus of the masked bins: `(1/|M|) sum |y_i|^2`.
pub fn estimate_sigma_sq(spectrum: &Spectrum, mask: &RingMask, channel: usize) -> Result<f64> {
    if mask.total_bins() == 0 {
        return Err(Error::invalid("mask has no bins"));
    }
    if mask.dims() != (spectrum.height(), spectrum.width()) {
        return Err(Error::invalid("mask dims do not match spectrum"));
    }
    if channel >= spectrum.channels() {
        return Err(Error::invalid(format!(
            "channel {channel} out of range for {} channels",
            spectrum.channels()
        )));
    }
    let sum: f64 = mask
        .bins()
        .map(|(u, v)| spectrum.get(channel, u, v).norm_sqr())
        .sum();
    Ok(sum / mask.total_bins() as f64)
}

/// CDF of the non-central chi-squared distribution,
/// `P(chi2_{dof, lambda} <= z)`.
///
/// Evaluated as the Poisson-weighted mixture of central chi-squared CDFs,
/// truncated when the remaining Poisson mass drops below 1e-12. The central
/// CDFs come from the regularized lower incomplete gamma function, with one
/// anchored evaluation extended across the mixture by the stable two-sided
/// recurrence `P(a+1, x) = P(a, x) - x^a e^-x / Gamma(a+1)`.
pub fn ncx2_cdf(dof: usize, lambda: f64, z: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::invalid("degrees of freedom must be positive"));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!("non-centrality must be finite and >= 0, got {lambda}")));
    }
    if !z.is_finite() {
        return Err(Error::invalid(format!("statistic must be finite, got {z}")));
    }
    if z <= 0.0 {
        return Ok(0.0);
    }
    let x = z / 2.0;
    let half_dof = dof as f64 / 2.0;
    let mu = lambda / 2.0;
    if mu == 0.0 {
        return Ok(gamma_lr(half_dof, x).clamp(0.0, 1.0));
    }

    // Poisson weights over j, expanded outward from the mode until the
    // remaining tail mass drops below SERIES_TAIL. The tails are bounded
    // by geometric series on the weight ratios, which stays reliable where
    // a comparison of the accumulated mass against 1 would drown in the
    // rounding drift of tens of thousands of terms.
    let mode = mu.floor().min(1e18) as u64;
    let ln_w_mode = -mu + mode as f64 * mu.ln() - ln_gamma(mode as f64 + 1.0);
    let w_mode = ln_w_mode.exp();
    let mut down: Vec<f64> = Vec::new(); // weights at mode-1, mode-2, ...
    let mut up: Vec<f64> = Vec::new(); // weights at mode+1, mode+2, ...
    let mut w_lo = w_mode;
    let mut w_hi = w_mode;
    let mut lo = mode;
    let mut hi = mode;
    loop {
        if down.len() + up.len() + 1 >= SERIES_MAX_TERMS {
            return Err(Error::SeriesCap { max_terms: SERIES_MAX_TERMS });
        }
        let w_next_up = w_hi * mu / (hi + 1) as f64;
        let w_next_down = if lo > 0 { w_lo * lo as f64 / mu } else { 0.0 };
        // Upper bounds on the mass beyond the current frontier, including
        // the next term on each side.
        let ratio_up = mu / (hi + 2) as f64;
        let rem_up = if ratio_up < 1.0 { w_next_up / (1.0 - ratio_up) } else { f64::INFINITY };
        let rem_down = if lo == 0 {
            0.0
        } else {
            let ratio = lo as f64 / mu;
            if ratio < 1.0 { w_next_down / (1.0 - ratio) } else { f64::INFINITY }
        };
        if rem_up + rem_down < SERIES_TAIL {
            break;
        }
        let mut grew = false;
        if lo > 0 && w_next_down > 0.0 {
            lo -= 1;
            w_lo = w_next_down;
            down.push(w_lo);
            grew = true;
        }
        if w_next_up > 0.0 {
            hi += 1;
            w_hi = w_next_up;
            up.push(w_hi);
            grew = true;
        }
        if !grew {
            break; // both directions underflowed; remaining mass is negligible
        }
    }

    // Central chi-squared CDFs P(a_j, x) with a_j = dof/2 + j for
    // j in [lo, hi], anchored near a ~= x where the recurrence is
    // best conditioned.
    let anchor = ((x - half_dof).round().max(lo as f64).min(hi as f64)) as u64;
    let a_anchor = half_dof + anchor as f64;
    let p_anchor = gamma_lr(a_anchor, x);
    let t_anchor = (a_anchor * x.ln() - x - ln_gamma(a_anchor + 1.0)).exp();

    let weight_at = |j: u64| -> f64 {
        if j == mode {
            w_mode
        } else if j < mode {
            down[(mode - j - 1) as usize]
        } else {
            up[(j - mode - 1) as usize]
        }
    };

    let mut acc = weight_at(anchor) * p_anchor;
    // Walk up from the anchor.
    let mut p = p_anchor;
    let mut t = t_anchor;
    for j in anchor + 1..=hi {
        let a = half_dof + (j - 1) as f64;
        p = (p - t).max(0.0);
        t *= x / (a + 1.0);
        acc += weight_at(j) * p;
    }
    // Walk down from the anchor.
    let mut p = p_anchor;
    let mut t = t_anchor;
    let mut j = anchor;
    while j > lo {
        let a = half_dof + j as f64;
        t *= a / x;
        p = (p + t).min(1.0);
        j -= 1;
        acc += weight_at(j) * p;
    }

    Ok(acc.clamp(0.0, 1.0))
}

/// Full presence test of a recovered spectrum against a reference pattern.
pub fn p_value(spectrum: &Spectrum, pattern: &WatermarkPattern) -> Result<DetectionStatistic> {
    let mask = pattern.mask();
    let channel = pattern.channel();
    let sigma_sq = estimate_sigma_sq(spectrum, mask, channel)?;
    if sigma_sq < DEGENERATE_VARIANCE {
        return Err(Error::DegenerateInput(format!(
            "masked mean power {sigma_sq:e} is below {DEGENERATE_VARIANCE:e}"
        )));
    }
    let residual: f64 = pattern
        .bin_values()
        .map(|((u, v), wm)| {
            let y = spectrum.get(channel, u, v);
            let re = wm - y.re;
            re * re + y.im * y.im
        })
        .sum();
    let z = residual / sigma_sq;
    let lambda = pattern.energy() / sigma_sq;
    let dof = mask.total_bins();
    let p = ncx2_cdf(dof, lambda, z)?;
    Ok(DetectionStatistic { sigma_sq, z, lambda, dof, p_value: p })
}

/// Mean complex-modulus error per masked bin between the reference pattern
/// and the recovered spectrum.
pub fn detection_distance(spectrum: &Spectrum, pattern: &WatermarkPattern) -> Result<f64> {
    let channel = pattern.channel();
    if pattern.mask().dims() != (spectrum.height(), spectrum.width()) {
        return Err(Error::invalid("pattern dims do not match spectrum"));
    }
    if channel >= spectrum.channels() {
        return Err(Error::invalid(format!(
            "channel {channel} out of range for {} channels",
            spectrum.channels()
        )));
    }
    let sum: f64 = pattern
        .bin_values()
        .map(|((u, v), wm)| {
            let y = spectrum.get(channel, u, v);
            let re = wm - y.re;
            (re * re + y.im * y.im).sqrt()
        })
        .sum();
    Ok(sum / pattern.mask().total_bins() as f64)
}

/// Detection-distance gap between an unwatermarked and a watermarked
/// recovery of the same reference pattern. Larger is easier to detect.
pub fn detection_resolution(
    plain: &Spectrum,
    watermarked: &Spectrum,
    pattern: &WatermarkPattern,
) -> Result<f64> {
    if plain.shape() != watermarked.shape() {
        return Err(Error::invalid("spectra have different shapes"));
    }
    Ok(detection_distance(plain, pattern)? - detection_distance(watermarked, pattern)?)
}

/// Scaler acceptance rule: the detection resolution must reach
/// `(k * S + b) * S`. Undefined (an error) when that denominator is not
/// positive, which happens for `S >= -b/k` (about 292.8 with defaults).
pub fn g_criterion(
    detection_resolution: f64,
    scaler: f64,
    consts: &GCriterionConstants,
) -> Result<GCriterionOutcome> {
    let denominator = (consts.k * scaler + consts.b) * scaler;
    if denominator <= 0.0 || !denominator.is_finite() {
        return Err(Error::CriterionUndefined(format!(
            "scaler {scaler} gives non-positive denominator {denominator}"
        )));
    }
    let ratio = detection_resolution / denominator;
    Ok(GCriterionOutcome { ratio, pass: ratio >= 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{build_mask, embed, encode, Message, WatermarkKey};
    use crate::rng::Rng;
    use crate::tensor::{fft2, LatentTensor};
    use rustfft::num_complex::Complex;

    fn key64() -> WatermarkKey {
        WatermarkKey::new(10, 100.0, 0, 64, 64).unwrap()
    }

    fn constant_spectrum(key: &WatermarkKey, value: Complex<f64>) -> Spectrum {
        let mut s = Spectrum::zeros(1, key.height, key.width).unwrap();
        let mask = build_mask(key).unwrap();
        for (u, v) in mask.bins() {
            s.set(0, u, v, value);
        }
        s
    }

    #[test]
    fn sigma_of_constant_modulus_two_is_four() {
        let key = key64();
        let mask = build_mask(&key).unwrap();
        let s = constant_spectrum(&key, Complex::new(2.0, 0.0));
        assert_eq!(estimate_sigma_sq(&s, &mask, 0).unwrap(), 4.0);
        let s = constant_spectrum(&key, Complex::new(0.0, -2.0));
        assert!((estimate_sigma_sq(&s, &mask, 0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_of_zero_spectrum_is_zero_and_p_value_rejects() {
        let key = key64();
        let mask = build_mask(&key).unwrap();
        let s = Spectrum::zeros(1, 64, 64).unwrap();
        assert_eq!(estimate_sigma_sq(&s, &mask, 0).unwrap(), 0.0);
        let pattern = encode(&Message::from_value(0, 10).unwrap(), &key).unwrap();
        assert!(matches!(p_value(&s, &pattern), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn sigma_of_unit_noise_is_near_one() {
        let key = key64();
        let mask = build_mask(&key).unwrap();
        let mut rng = Rng::from_seed(1);
        let s = fft2(&LatentTensor::gaussian(&mut rng, 1, 64, 64).unwrap());
        let est = estimate_sigma_sq(&s, &mask, 0).unwrap();
        assert!((est - 1.0).abs() < 0.15, "estimate {est}");
    }

    #[test]
    fn central_dof2_matches_closed_form() {
        let z = 2.0 * (2.0f64).ln();
        let p = ncx2_cdf(2, 0.0, z).unwrap();
        assert!((p - 0.5).abs() < 1e-12, "p {p}");
        for z in [0.1, 0.5, 1.0, 3.0, 10.0, 40.0] {
            let p = ncx2_cdf(2, 0.0, z).unwrap();
            let exact = -(-z / 2.0).exp_m1();
            assert!((p - exact).abs() < 1e-12, "z={z}: {p} vs {exact}");
        }
    }

    #[test]
    fn cdf_at_origin_is_zero() {
        for (dof, lambda) in [(1usize, 0.0), (2, 5.0), (64, 100.0)] {
            assert_eq!(ncx2_cdf(dof, lambda, 0.0).unwrap(), 0.0);
            assert_eq!(ncx2_cdf(dof, lambda, -3.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_dof_is_rejected() {
        assert!(ncx2_cdf(0, 1.0, 1.0).is_err());
        assert!(ncx2_cdf(4, -1.0, 1.0).is_err());
        assert!(ncx2_cdf(4, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn ncx2_matches_monte_carlo_spot_check() {
        // dof=4, lambda=5, z=8: 2e5-sample oracle, one squared normal
        // mean-shifted by sqrt(5).
        let mut rng = Rng::from_seed(1234);
        let shift = 5.0f64.sqrt();
        let trials = 200_000;
        let mut below = 0usize;
        for _ in 0..trials {
            let mut sum = (rng.next_gaussian() + shift).powi(2);
            for _ in 0..3 {
                sum += rng.next_gaussian().powi(2);
            }
            if sum <= 8.0 {
                below += 1;
            }
        }
        let mc = below as f64 / trials as f64;
        let p = ncx2_cdf(4, 5.0, 8.0).unwrap();
        assert!((p - mc).abs() < 5e-3, "series {p} vs monte carlo {mc}");
    }

    #[test]
    fn ncx2_monotone_in_z_and_bounded() {
        for &(dof, lambda) in &[(2usize, 0.5), (8, 10.0), (64, 1000.0), (690, 6.9e6)] {
            let mut prev = 0.0;
            for i in 0..50 {
                let z = (dof as f64 + lambda) * (0.25 + i as f64 * 0.05);
                let p = ncx2_cdf(dof, lambda, z).unwrap();
                assert!((0.0..=1.0).contains(&p));
                assert!(p >= prev - 1e-14, "not monotone at dof={dof} lambda={lambda} z={z}");
                prev = p;
            }
            let mean = dof as f64 + lambda;
            let spread = (2.0 * (dof as f64 + 2.0 * lambda)).sqrt();
            let deep = ncx2_cdf(dof, lambda, mean + 20.0 * spread + 10.0).unwrap();
            assert!(deep > 1.0 - 1e-6, "CDF should approach 1 in the far tail, got {deep}");
        }
    }

    #[test]
    fn perfect_match_gives_zero_z_and_zero_p() {
        let key = key64();
        let msg = Message::from_bit_string("1010011100").unwrap();
        let pattern = encode(&msg, &key).unwrap();
        let y = constant_spectrum(&key, Complex::new(0.0, 0.0));
        let y = {
            let mut y = y;
            for ((u, v), wm) in pattern.bin_values() {
                y.set(0, u, v, Complex::new(wm, 0.0));
            }
            y
        };
        let stat = p_value(&y, &pattern).unwrap();
        assert_eq!(stat.z, 0.0);
        assert_eq!(stat.p_value, 0.0);
        assert_eq!(stat.dof, pattern.mask().total_bins());
        assert!((stat.lambda - pattern.energy() / stat.sigma_sq).abs() < 1e-9);
    }

    #[test]
    fn p_values_under_null_are_uniform() {
        let key = key64();
        let msg = Message::from_bit_string("1100101011").unwrap();
        let pattern = encode(&msg, &key).unwrap();
        let mut rng = Rng::from_seed(7);
        let trials = 200;
        let mut ps: Vec<f64> = (0..trials)
            .map(|_| {
                let y = fft2(&LatentTensor::gaussian(&mut rng, 1, 64, 64).unwrap());
                p_value(&y, &pattern).unwrap().p_value
            })
            .collect();
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ps.len() as f64;
        let ks = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let hi = (i + 1) as f64 / n - p;
                let lo = p - i as f64 / n;
                hi.max(lo)
            })
            .fold(0.0f64, f64::max);
        assert!(ks < 0.15, "KS distance {ks}");
    }

    #[test]
    fn watermarked_vs_null_p_values_separate_perfectly() {
        let key = key64();
        let mut rng = Rng::from_seed(0);
        let msg = Message::random(&mut rng, 10).unwrap();
        let pattern = encode(&msg, &key).unwrap();
        let mut wm_ps = Vec::new();
        let mut null_ps = Vec::new();
        for _ in 0..100 {
            let noise = LatentTensor::gaussian(&mut rng, 1, 64, 64).unwrap();
            let y0 = fft2(&noise);
            let y1 = embed(&y0, &pattern).unwrap();
            null_ps.push(p_value(&y0, &pattern).unwrap().p_value);
            wm_ps.push(p_value(&y1, &pattern).unwrap().p_value);
        }
        let max_wm = wm_ps.iter().cloned().fold(0.0f64, f64::max);
        let min_null = null_ps.iter().cloned().fold(1.0f64, f64::min);
        assert!(max_wm < min_null, "classes overlap: {max_wm} vs {min_null}");
    }

    #[test]
    fn distance_examples() {
        let key = key64();
        let msg = Message::from_bit_string("1111100000").unwrap();
        let pattern = encode(&msg, &key).unwrap();

        // y == WM
        let mut y = Spectrum::zeros(1, 64, 64).unwrap();
        for ((u, v), wm) in pattern.bin_values() {
            y.set(0, u, v, Complex::new(wm, 0.0));
        }
        assert_eq!(detection_distance(&y, &pattern).unwrap(), 0.0);

        // y == 0 while |WM| = S everywhere
        let zero = Spectrum::zeros(1, 64, 64).unwrap();
        assert!((detection_distance(&zero, &pattern).unwrap() - 100.0).abs() < 1e-12);

        // fixed offset of modulus 5
        let mut offset = y.clone();
        for ((u, v), _) in pattern.bin_values() {
            let cur = offset.get(0, u, v);
            offset.set(0, u, v, cur + Complex::new(3.0, 4.0));
        }
        assert!((detection_distance(&offset, &pattern).unwrap() - 5.0).abs() < 1e-12);

        // resolution: identical inputs -> 0; the two extremes -> S
        assert_eq!(detection_resolution(&y, &y, &pattern).unwrap(), 0.0);
        assert!((detection_resolution(&zero, &y, &pattern).unwrap() - 100.0).abs() < 1e-12);
        // antisymmetry
        let r = detection_resolution(&zero, &offset, &pattern).unwrap();
        let r_swapped = detection_resolution(&offset, &zero, &pattern).unwrap();
        assert!((r + r_swapped).abs() < 1e-12);
    }

    #[test]
    fn distance_triangle_consistency() {
        let key = key64();
        let mut rng = Rng::from_seed(31);
        let msg = Message::random(&mut rng, 10).unwrap();
        let pattern = encode(&msg, &key).unwrap();
        let y1 = fft2(&LatentTensor::gaussian(&mut rng, 1, 64, 64).unwrap());
        let y2 = fft2(&LatentTensor::gaussian(&mut rng, 1, 64, 64).unwrap());
        let d1 = detection_distance(&y1, &pattern).unwrap();
        let d2 = detection_distance(&y2, &pattern).unwrap();
        let cross: f64 = pattern
            .bin_values()
            .map(|((u, v), _)| (y1.get(0, u, v) - y2.get(0, u, v)).norm())
            .sum::<f64>()
            / pattern.mask().total_bins() as f64;
        assert!(d1 <= d2 + cross + 1e-12);
    }

    #[test]
    fn g_criterion_arithmetic() {
        let consts = GCriterionConstants::default();
        let denominator = (consts.k * 100.0 + consts.b) * 100.0;
        assert_eq!(denominator, 43.0);

        let pass = g_criterion(43.0, 100.0, &consts).unwrap();
        assert!(pass.pass);
        assert_eq!(pass.ratio, 1.0);

        let fail = g_criterion(42.7, 100.0, &consts).unwrap();
        assert!(!fail.pass);
        assert!((fail.ratio - 42.7 / 43.0).abs() < 1e-12);

        let zero = g_criterion(0.0, 50.0, &consts).unwrap();
        assert!(!zero.pass);
        assert_eq!(zero.ratio, 0.0);
    }

    #[test]
    fn g_criterion_undefined_for_large_scaler() {
        let consts = GCriterionConstants::default();
        // -b/k ~= 292.8; beyond that the denominator flips sign.
        assert!(g_criterion(10.0, 292.0, &consts).is_ok());
        assert!(matches!(
            g_criterion(10.0, 293.0, &consts),
            Err(Error::CriterionUndefined(_))
        ));
    }

    #[test]
    fn g_criterion_monotone_in_resolution() {
        let consts = GCriterionConstants::default();
        let mut prev = f64::NEG_INFINITY;
        for r_det in [0.0, 10.0, 43.0, 80.0] {
            let out = g_criterion(r_det, 100.0, &consts).unwrap();
            assert!(out.ratio >= prev);
            prev = out.ratio;
        }
    }

    #[test]
    fn statistic_serializes_with_all_fields() {
        let stat = DetectionStatistic {
            sigma_sq: 0.5,
            z: 100.0,
            lambda: 200.0,
            dof: 690,
            p_value: 0.25,
        };
        let json = serde_json::to_value(&stat).unwrap();
        for field in ["sigma_sq", "z", "lambda", "dof", "p_value"] {
            assert!(json.get(field).is_some(), "missing {field}");
        }
    }
}
