//! Dense real/complex tensors and the centered, unitary 2-D DFT.
//!
//! Both tensor types are immutable after construction and hold finite
//! 64-bit values in row-major `C x H x W` order. Spectra use the centered
//! frequency layout: the zero-frequency bin of each channel sits at
//! `(H/2, W/2)` (floor division), for even and odd sizes alike.
//!
//! The transform pair is unitarily normalized (a factor of `1/sqrt(H*W)`
//! in each direction) so energy is preserved exactly between the spatial
//! and frequency domains.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Real-valued `C x H x W` tensor standing in for latent noise or a
/// decoded image.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Complex-valued `C x H x W` tensor in centered frequency layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<Complex<f64>>,
}

/// Result of an inverse transform: the real part of the inverse DFT plus
/// the largest imaginary component that was discarded, for callers that
/// need to check how far the spectrum was from Hermitian.
#[derive(Debug, Clone)]
pub struct InverseFft {
    pub real: LatentTensor,
    pub max_imag_residual: f64,
}

fn check_dims(channels: usize, height: usize, width: usize) -> Result<usize> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "tensor dimensions must be positive, got {channels}x{height}x{width}"
        )));
    }
    channels
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::invalid("tensor dimensions overflow"))
}

impl LatentTensor {
    /// Builds a tensor from row-major data, validating shape and finiteness.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let len = check_dims(channels, height, width)?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("tensor contains non-finite values"));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        let len = check_dims(channels, height, width)?;
        Ok(Self { channels, height, width, data: vec![0.0; len] })
    }

    /// Samples i.i.d. standard normal entries; deterministic per seed.
    pub fn gaussian(rng: &mut Rng, channels: usize, height: usize, width: usize) -> Result<Self> {
        let len = check_dims(channels, height, width)?;
        let data = (0..len).map(|_| rng.next_gaussian()).collect();
        Ok(Self { channels, height, width, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[channel * plane..(channel + 1) * plane]
    }

    /// Elementwise map. The closure must keep values finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self { data, ..*self }
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self { data, ..*self })
    }

    /// Sum of squared entries.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

impl Spectrum {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<Complex<f64>>,
    ) -> Result<Self> {
        let len = check_dims(channels, height, width)?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::invalid("spectrum contains non-finite values"));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        let len = check_dims(channels, height, width)?;
        Ok(Self { channels, height, width, data: vec![Complex::new(0.0, 0.0); len] })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[Complex<f64>] {
        &self.data
    }

    /// Row/column of the zero-frequency bin.
    pub fn center(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> Complex<f64> {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub(crate) fn set(&mut self, channel: usize, row: usize, col: usize, value: Complex<f64>) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    pub fn channel(&self, channel: usize) -> &[Complex<f64>] {
        let plane = self.height * self.width;
        &self.data[channel * plane..(channel + 1) * plane]
    }

    /// Sum of squared moduli.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized 2-D FFT of one `h x w` channel in natural layout.
fn fft2_channel(buf: &mut [Complex<f64>], height: usize, width: usize, direction: FftDirection) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft(width, direction);
        let mut scratch = vec![Complex::new(0.0, 0.0); row_fft.get_inplace_scratch_len()];
        for row in buf.chunks_exact_mut(width) {
            row_fft.process_with_scratch(row, &mut scratch);
        }

        let mut transposed = transpose(buf, height, width);
        let col_fft = planner.plan_fft(height, direction);
        scratch.resize(col_fft.get_inplace_scratch_len(), Complex::new(0.0, 0.0));
        for col in transposed.chunks_exact_mut(height) {
            col_fft.process_with_scratch(col, &mut scratch);
        }
        let back = transpose(&transposed, width, height);
        buf.copy_from_slice(&back);
    });
}

fn transpose(buf: &[Complex<f64>], height: usize, width: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); buf.len()];
    for r in 0..height {
        for c in 0..width {
            out[c * height + r] = buf[r * width + c];
        }
    }
    out
}

/// Per-channel 2-D DFT with unitary normalization and centered output
/// layout. Energy is preserved exactly (Parseval).
pub fn fft2(tensor: &LatentTensor) -> Spectrum {
    let (channels, height, width) = tensor.shape();
    let plane = height * width;
    let scale = 1.0 / (plane as f64).sqrt();
    let mut data = Vec::with_capacity(channels * plane);
    for ch in 0..channels {
        let mut buf: Vec<Complex<f64>> = tensor
            .channel(ch)
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        fft2_channel(&mut buf, height, width, FftDirection::Forward);
        // Shift so the zero-frequency bin lands on (h/2, w/2).
        let mut centered = vec![Complex::new(0.0, 0.0); plane];
        for r in 0..height {
            let rs = (r + height / 2) % height;
            for c in 0..width {
                let cs = (c + width / 2) % width;
                centered[rs * width + cs] = buf[r * width + c] * scale;
            }
        }
        data.extend_from_slice(&centered);
    }
    Spectrum { channels, height, width, data }
}

/// Inverse of [`fft2`]. Returns the real part together with the largest
/// discarded imaginary component.
pub fn ifft2(spectrum: &Spectrum) -> InverseFft {
    let (channels, height, width) = spectrum.shape();
    let plane = height * width;
    let scale = 1.0 / (plane as f64).sqrt();
    let mut data = Vec::with_capacity(channels * plane);
    let mut max_imag = 0.0f64;
    for ch in 0..channels {
        let centered = spectrum.channel(ch);
        let mut buf = vec![Complex::new(0.0, 0.0); plane];
        for r in 0..height {
            let rs = (r + height / 2) % height;
            for c in 0..width {
                let cs = (c + width / 2) % width;
                buf[r * width + c] = centered[rs * width + cs];
            }
        }
        fft2_channel(&mut buf, height, width, FftDirection::Inverse);
        for v in &buf {
            let im = (v.im * scale).abs();
            if im > max_imag {
                max_imag = im;
            }
            data.push(v.re * scale);
        }
    }
    InverseFft {
        real: LatentTensor { channels, height, width, data },
        max_imag_residual: max_imag,
    }
}
