//! Image-space attack channel.
//!
//! Attacks operate on the toy world's "image", i.e. the real tensor coming
//! out of DDIM sampling, and always preserve its shape. The JPEG path maps
//! each channel affinely onto [0, 255] so that baseline 8x8-DCT compression
//! is meaningful on latent-valued data, and maps back with the same affine.
//!
//! JSON wire form is tagged: `{"kind":"blur","params":{"radius":4.0}}`;
//! parameterless kinds are just `{"kind":"none"}`.

use serde::{Deserialize, Serialize};

use crate::diffusion::{ddim_sample_from, forward_noise, AlphaSchedule, EpsilonPredictor};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{fft2, ifft2, LatentTensor, Spectrum};

/// One attack and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    /// Identity, bit-exact.
    None,
    /// Rotation about the image center, bilinear, zero fill outside.
    Rotate { degrees: f64 },
    /// Baseline 8x8-DCT JPEG round trip at the given quality.
    Jpeg { quality: u8 },
    /// Keep the central `keep` fraction per axis, rescale back bilinearly.
    CropScale { keep: f64 },
    /// Gaussian blur with std `radius / 2`, truncated at 3 std, edge-clamped.
    Blur { radius: f64 },
    /// Adds i.i.d. noise with std `sigma` times the channel's value range.
    GaussianNoise { sigma: f64 },
    /// Scales contrast around the channel mean: `m + factor * (x - m)`.
    Brightness { factor: f64 },
    /// Forward-noises to step `t_star`, then DDIM-samples back down.
    DiffusionRegen { t_star: usize },
    /// Keeps the lowest `keep` fraction of centered frequencies, zeroing
    /// the rest; a deterministic proxy for autoencoder reconstruction.
    LowpassRecon { keep: f64 },
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackSpec::None => Ok(()),
            AttackSpec::Rotate { degrees } => {
                if !degrees.is_finite() {
                    return Err(Error::invalid("rotation degrees must be finite"));
                }
                Ok(())
            }
            AttackSpec::Jpeg { quality } => {
                if quality == 0 || quality > 100 {
                    return Err(Error::invalid(format!("jpeg quality {quality} out of 1..=100")));
                }
                Ok(())
            }
            AttackSpec::CropScale { keep } | AttackSpec::LowpassRecon { keep } => {
                if keep <= 0.0 || keep > 1.0 || keep.is_nan() {
                    return Err(Error::invalid(format!("keep fraction {keep} out of (0, 1]")));
                }
                Ok(())
            }
            AttackSpec::Blur { radius } => {
                if radius <= 0.0 || !radius.is_finite() {
                    return Err(Error::invalid(format!("blur radius {radius} must be positive")));
                }
                Ok(())
            }
            AttackSpec::GaussianNoise { sigma } => {
                if sigma < 0.0 || !sigma.is_finite() {
                    return Err(Error::invalid(format!("noise sigma {sigma} must be >= 0")));
                }
                Ok(())
            }
            AttackSpec::Brightness { factor } => {
                if factor < 0.0 || !factor.is_finite() {
                    return Err(Error::invalid(format!("brightness factor {factor} must be >= 0")));
                }
                Ok(())
            }
            AttackSpec::DiffusionRegen { t_star } => {
                if t_star == 0 {
                    return Err(Error::invalid("regeneration step must be >= 1"));
                }
                Ok(())
            }
        }
    }

    /// Stable short label, used for report rows and flip-probability keys.
    pub fn kind_name(&self) -> &'static str {
        match self {
            AttackSpec::None => "none",
            AttackSpec::Rotate { .. } => "rotate",
            AttackSpec::Jpeg { .. } => "jpeg",
            AttackSpec::CropScale { .. } => "crop_scale",
            AttackSpec::Blur { .. } => "blur",
            AttackSpec::GaussianNoise { .. } => "gaussian_noise",
            AttackSpec::Brightness { .. } => "brightness",
            AttackSpec::DiffusionRegen { .. } => "diffusion_regen",
            AttackSpec::LowpassRecon { .. } => "lowpass_recon",
        }
    }

    /// Label including the parameter, e.g. `blur_4` or `crop_scale_0.75`.
    pub fn label(&self) -> String {
        match self {
            AttackSpec::None => "none".into(),
            AttackSpec::Rotate { degrees } => format!("rotate_{degrees}"),
            AttackSpec::Jpeg { quality } => format!("jpeg_{quality}"),
            AttackSpec::CropScale { keep } => format!("crop_scale_{keep}"),
            AttackSpec::Blur { radius } => format!("blur_{radius}"),
            AttackSpec::GaussianNoise { sigma } => format!("gaussian_noise_{sigma}"),
            AttackSpec::Brightness { factor } => format!("brightness_{factor}"),
            AttackSpec::DiffusionRegen { t_star } => format!("diffusion_regen_{t_star}"),
            AttackSpec::LowpassRecon { keep } => format!("lowpass_recon_{keep}"),
        }
    }
}

/// Diffusion machinery the generative attacks run through.
pub struct AttackContext<'a> {
    pub predictor: &'a EpsilonPredictor,
    pub schedule: &'a AlphaSchedule,
}

/// Applies one attack. Shape is always preserved; stochastic attacks are
/// deterministic given the rng seed.
pub fn apply_attack(
    image: &LatentTensor,
    spec: &AttackSpec,
    ctx: &AttackContext<'_>,
    rng: &mut Rng,
) -> Result<LatentTensor> {
    spec.validate()?;
    match *spec {
        AttackSpec::None => Ok(image.clone()),
        AttackSpec::Rotate { degrees } => Ok(rotate(image, degrees)),
        AttackSpec::Jpeg { quality } => Ok(jpeg_round_trip(image, quality)),
        AttackSpec::CropScale { keep } => Ok(crop_scale(image, keep)),
        AttackSpec::Blur { radius } => Ok(blur(image, radius)),
        AttackSpec::GaussianNoise { sigma } => Ok(gaussian_noise(image, sigma, rng)),
        AttackSpec::Brightness { factor } => Ok(brightness(image, factor)),
        AttackSpec::DiffusionRegen { t_star } => {
            if t_star > ctx.schedule.steps() {
                return Err(Error::invalid(format!(
                    "regeneration step {t_star} exceeds the {}-step schedule",
                    ctx.schedule.steps()
                )));
            }
            let (c, h, w) = image.shape();
            let eps = LatentTensor::gaussian(rng, c, h, w)?;
            let noised = forward_noise(image, &eps, t_star, ctx.schedule)?;
            ddim_sample_from(&noised, t_star, ctx.predictor, ctx.schedule)
        }
        AttackSpec::LowpassRecon { keep } => Ok(lowpass_recon(image, keep)),
    }
}

fn per_channel(image: &LatentTensor, f: impl Fn(&[f64], usize, usize) -> Vec<f64>) -> LatentTensor {
    let (c, h, w) = image.shape();
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        data.extend(f(image.channel(ch), h, w));
    }
    LatentTensor::new(c, h, w, data).expect("attack kernels preserve shape and finiteness")
}

/// Bilinear sample with zero outside the frame.
fn sample_zero_fill(plane: &[f64], h: usize, w: usize, fy: f64, fx: f64) -> f64 {
    let y0 = fy.floor();
    let x0 = fx.floor();
    let dy = fy - y0;
    let dx = fx - x0;
    let mut acc = 0.0;
    for (ny, wy) in [(y0 as i64, 1.0 - dy), (y0 as i64 + 1, dy)] {
        for (nx, wx) in [(x0 as i64, 1.0 - dx), (x0 as i64 + 1, dx)] {
            if ny >= 0 && ny < h as i64 && nx >= 0 && nx < w as i64 {
                acc += wy * wx * plane[ny as usize * w + nx as usize];
            }
        }
    }
    acc
}

/// Bilinear sample with coordinates clamped to the frame.
fn sample_clamped(plane: &[f64], h: usize, w: usize, fy: f64, fx: f64) -> f64 {
    let fy = fy.clamp(0.0, (h - 1) as f64);
    let fx = fx.clamp(0.0, (w - 1) as f64);
    let y0 = fy.floor() as usize;
    let x0 = fx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let dy = fy - y0 as f64;
    let dx = fx - x0 as f64;
    let top = plane[y0 * w + x0] * (1.0 - dx) + plane[y0 * w + x1] * dx;
    let bottom = plane[y1 * w + x0] * (1.0 - dx) + plane[y1 * w + x1] * dx;
    top * (1.0 - dy) + bottom * dy
}

fn rotate(image: &LatentTensor, degrees: f64) -> LatentTensor {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    per_channel(image, |plane, h, w| {
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                // Inverse map: rotate the output pixel back by -theta.
                let oy = y as f64 - cy;
                let ox = x as f64 - cx;
                let sy = cos * oy + sin * ox + cy;
                let sx = -sin * oy + cos * ox + cx;
                out.push(sample_zero_fill(plane, h, w, sy, sx));
            }
        }
        out
    })
}

fn crop_scale(image: &LatentTensor, keep: f64) -> LatentTensor {
    per_channel(image, |plane, h, w| {
        let keep_h = ((keep * h as f64).round() as usize).clamp(1, h);
        let keep_w = ((keep * w as f64).round() as usize).clamp(1, w);
        let off_y = (h - keep_h) / 2;
        let off_x = (w - keep_w) / 2;
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let sy = (y as f64 + 0.5) * keep_h as f64 / h as f64 - 0.5;
                let sx = (x as f64 + 0.5) * keep_w as f64 / w as f64 - 0.5;
                let sy = sy.clamp(0.0, (keep_h - 1) as f64) + off_y as f64;
                let sx = sx.clamp(0.0, (keep_w - 1) as f64) + off_x as f64;
                out.push(sample_clamped(plane, h, w, sy, sx));
            }
        }
        out
    })
}

fn blur(image: &LatentTensor, radius: f64) -> LatentTensor {
    let sigma = radius / 2.0;
    let half = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * half + 1) as usize);
    for i in -half..=half {
        kernel.push((-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    per_channel(image, |plane, h, w| {
        // Horizontal pass, then vertical, replicating the border.
        let mut mid = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sx = (x as i64 + ki as i64 - half).clamp(0, w as i64 - 1) as usize;
                    acc += k * plane[y * w + sx];
                }
                mid[y * w + x] = acc;
            }
        }
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sy = (y as i64 + ki as i64 - half).clamp(0, h as i64 - 1) as usize;
                    acc += k * mid[sy * w + x];
                }
                out[y * w + x] = acc;
            }
        }
        out
    })
}

fn gaussian_noise(image: &LatentTensor, sigma: f64, rng: &mut Rng) -> LatentTensor {
    let (c, h, w) = image.shape();
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let plane = image.channel(ch);
        let max = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = plane.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = sigma * (max - min);
        data.extend(plane.iter().map(|&v| v + scale * rng.next_gaussian()));
    }
    LatentTensor::new(c, h, w, data).expect("noise keeps shape and finiteness")
}

fn brightness(image: &LatentTensor, factor: f64) -> LatentTensor {
    per_channel(image, |plane, _, _| {
        let mean = plane.iter().sum::<f64>() / plane.len() as f64;
        plane.iter().map(|&v| mean + factor * (v - mean)).collect()
    })
}

fn lowpass_recon(image: &LatentTensor, keep: f64) -> LatentTensor {
    let spectrum = fft2(image);
    let (c, h, w) = spectrum.shape();
    let (cu, cv) = (h / 2, w / 2);
    let distances: Vec<f64> = (0..h * w)
        .map(|i| {
            let du = (i / w) as f64 - cu as f64;
            let dv = (i % w) as f64 - cv as f64;
            (du * du + dv * dv).sqrt()
        })
        .collect();
    let mut sorted = distances.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let keep_count = ((keep * (h * w) as f64).ceil() as usize).clamp(1, h * w);
    let threshold = sorted[keep_count - 1];
    let mut kept = Spectrum::zeros(c, h, w).unwrap();
    for ch in 0..c {
        for (i, &d) in distances.iter().enumerate() {
            if d <= threshold {
                kept.set(ch, i / w, i % w, spectrum.get(ch, i / w, i % w));
            }
        }
    }
    ifft2(&kept).real
}

// Baseline 8x8-DCT JPEG round trip ---------------------------------------

/// Annex-K luminance quantization table, row-major.
const JPEG_BASE_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// libjpeg quality scaling of the base table.
fn quant_table(quality: u8) -> [f64; 64] {
    let scale: i64 = if quality < 50 {
        5000 / quality as i64
    } else {
        200 - 2 * quality as i64
    };
    let mut out = [0.0; 64];
    for (o, &q) in out.iter_mut().zip(&JPEG_BASE_TABLE) {
        *o = ((q as i64 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

/// Orthonormal 8-point DCT-II basis matrix.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut c = [[0.0; 8]; 8];
    for (u, row) in c.iter_mut().enumerate() {
        let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for (x, v) in row.iter_mut().enumerate() {
            *v = alpha * ((2.0 * x as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    c
}

fn jpeg_round_trip(image: &LatentTensor, quality: u8) -> LatentTensor {
    let table = quant_table(quality);
    let basis = dct_basis();
    per_channel(image, |plane, h, w| {
        let max = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = plane.iter().cloned().fold(f64::INFINITY, f64::min);
        if max - min < 1e-12 {
            return plane.to_vec();
        }
        let to_byte = 255.0 / (max - min);

        // Digitize onto [0, 255] and pad to multiples of 8 by edge replication.
        let ph = h.div_ceil(8) * 8;
        let pw = w.div_ceil(8) * 8;
        let mut padded = vec![0.0; ph * pw];
        for y in 0..ph {
            for x in 0..pw {
                let sy = y.min(h - 1);
                let sx = x.min(w - 1);
                padded[y * pw + x] = ((plane[sy * w + sx] - min) * to_byte).round();
            }
        }

        // Blockwise DCT, quantize, dequantize, inverse DCT.
        for by in (0..ph).step_by(8) {
            for bx in (0..pw).step_by(8) {
                let mut block = [[0.0f64; 8]; 8];
                for (y, row) in block.iter_mut().enumerate() {
                    for (x, v) in row.iter_mut().enumerate() {
                        *v = padded[(by + y) * pw + bx + x] - 128.0;
                    }
                }
                let coeffs = mat_mul_t(&mat_mul(&basis, &block), &basis);
                let mut quantized = [[0.0f64; 8]; 8];
                for u in 0..8 {
                    for v in 0..8 {
                        let q = table[u * 8 + v];
                        quantized[u][v] = (coeffs[u][v] / q).round() * q;
                    }
                }
                let restored = mat_mul(&mat_t_mul(&basis, &quantized), &basis);
                for (y, row) in restored.iter().enumerate() {
                    for (x, v) in row.iter().enumerate() {
                        padded[(by + y) * pw + bx + x] = (v + 128.0).clamp(0.0, 255.0);
                    }
                }
            }
        }

        // Crop and map back through the same affine.
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                out.push(min + padded[y * pw + x] / to_byte);
            }
        }
        out
    })
}

fn mat_mul(a: &[[f64; 8]; 8], b: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let mut out = [[0.0; 8]; 8];
    for i in 0..8 {
        for k in 0..8 {
            let aik = a[i][k];
            for j in 0..8 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// `a * b^T`
fn mat_mul_t(a: &[[f64; 8]; 8], b: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let mut out = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            let mut acc = 0.0;
            for k in 0..8 {
                acc += a[i][k] * b[j][k];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// `a^T * b`
fn mat_t_mul(a: &[[f64; 8]; 8], b: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let mut out = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            let mut acc = 0.0;
            for k in 0..8 {
                acc += a[k][i] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}
