//! Ring geometry and message codec.
//!
//! A message of `r` bits is written into the centered spectrum of the
//! initial noise as `r` concentric rings around the zero-frequency bin:
//! ring `i` (radius `i`, for `i` in `1..=r`) carries bit `i-1` as the real
//! constant `+S` (bit 1) or `-S` (bit 0) on every bin of the ring. Ring
//! membership is by rounded Euclidean distance to the center, which makes
//! the rings disjoint and the mask centro-symmetric, so embedding into the
//! spectrum of a real tensor keeps it (exactly) Hermitian.
//!
//! Decoding reads the sign of the mean real part over each ring.

use std::fmt;

use rustfft::num_complex::Complex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Spectrum;

/// Ring geometry parameters: radius (= message bits), scaler magnitude,
/// the channel the watermark occupies, and the spectrum dims the key was
/// built for.
///
/// JSON wire form: `{"r":10,"S":100.0,"channel":0,"height":64,"width":64}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatermarkKey {
    #[serde(rename = "r")]
    pub radius: usize,
    #[serde(rename = "S")]
    pub scaler: f64,
    pub channel: usize,
    pub height: usize,
    pub width: usize,
}

impl WatermarkKey {
    pub fn new(radius: usize, scaler: f64, channel: usize, height: usize, width: usize) -> Result<Self> {
        let key = Self { radius, scaler, channel, height, width };
        key.validate()?;
        Ok(key)
    }

    /// Checks the key invariants: `0 < r < min(h/2, w/2)` so every ring
    /// fits strictly inside the spectrum, and `S > 0`.
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("key dims must be positive"));
        }
        let bound = (self.height / 2).min(self.width / 2);
        if self.radius == 0 || self.radius >= bound {
            return Err(Error::invalid(format!(
                "radius {} violates 0 < r < min(h/2, w/2) = {bound} for {}x{}",
                self.radius, self.height, self.width
            )));
        }
        if self.scaler <= 0.0 || !self.scaler.is_finite() {
            return Err(Error::invalid(format!("scaler must be positive, got {}", self.scaler)));
        }
        Ok(())
    }

    pub fn with_scaler(&self, scaler: f64) -> Result<Self> {
        Self::new(self.radius, scaler, self.channel, self.height, self.width)
    }
}

/// Concentric ring bins in the centered layout. `rings()[i]` holds the
/// `(row, col)` bins at rounded distance `i + 1` from the center.
#[derive(Debug, Clone)]
pub struct RingMask {
    height: usize,
    width: usize,
    rings: Vec<Vec<(usize, usize)>>,
}

impl RingMask {
    pub fn rings(&self) -> &[Vec<(usize, usize)>] {
        &self.rings
    }

    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    /// Total number of masked bins, the `|M|` of the detection statistic.
    pub fn total_bins(&self) -> usize {
        self.rings.iter().map(Vec::len).sum()
    }

    pub fn bins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rings.iter().flatten().copied()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Builds the ring mask for a key. Ring `i` collects the bins whose
/// Euclidean distance to `(h/2, w/2)` rounds (half away from zero) to `i`.
pub fn build_mask(key: &WatermarkKey) -> Result<RingMask> {
    key.validate()?;
    let (h, w) = (key.height, key.width);
    let (cu, cv) = (h / 2, w / 2);
    let mut rings = vec![Vec::new(); key.radius];
    for u in 0..h {
        for v in 0..w {
            let du = u as f64 - cu as f64;
            let dv = v as f64 - cv as f64;
            let d = (du * du + dv * dv).sqrt().round() as usize;
            if d >= 1 && d <= key.radius {
                rings[d - 1].push((u, v));
            }
        }
    }
    debug_assert!(rings.iter().all(|r| !r.is_empty()));
    Ok(RingMask { height: h, width: w, rings })
}

/// Ordered bit vector; `bits()[i]` is carried by ring `i + 1`.
///
/// Wire form is a bit string such as `"1010011100"`, leftmost character
/// first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    bits: Vec<u8>,
}

impl Message {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("message must have at least one bit"));
        }
        if !bits.iter().all(|&b| b <= 1) {
            return Err(Error::invalid("message bits must be 0 or 1"));
        }
        Ok(Self { bits })
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::invalid(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_bits(bits)
    }

    /// Message whose bit `i` is bit `i` of `value` (LSB carried by ring 1).
    pub fn from_value(value: u64, len: usize) -> Result<Self> {
        if len == 0 || len > 63 {
            return Err(Error::invalid(format!("message length {len} out of range 1..=63")));
        }
        if value >> len != 0 {
            return Err(Error::invalid(format!("value {value} does not fit in {len} bits")));
        }
        Self::from_bits((0..len).map(|i| ((value >> i) & 1) as u8).collect())
    }

    pub fn value(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i))
    }

    pub fn random(rng: &mut Rng, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("message must have at least one bit"));
        }
        Self::from_bits((0..len).map(|_| (rng.next_u64() & 1) as u8).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of positions where the two messages disagree.
    pub fn hamming_distance(&self, other: &Self) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::invalid("messages have different lengths"));
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count())
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl Serialize for Message {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Message {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Message::from_bit_string(&s).map_err(D::Error::custom)
    }
}

/// An encoded message: the ring mask plus the real constant written on each
/// ring (`+S` for bit 1, `-S` for bit 0). Values are constant within a ring
/// and zero imaginary, so the pattern is centro-symmetric by construction.
#[derive(Debug, Clone)]
pub struct WatermarkPattern {
    key: WatermarkKey,
    mask: RingMask,
    ring_values: Vec<f64>,
}

impl WatermarkPattern {
    pub fn key(&self) -> &WatermarkKey {
        &self.key
    }

    pub fn mask(&self) -> &RingMask {
        &self.mask
    }

    pub fn channel(&self) -> usize {
        self.key.channel
    }

    pub fn ring_values(&self) -> &[f64] {
        &self.ring_values
    }

    /// Iterates `((row, col), value)` over every masked bin.
    pub fn bin_values(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.mask
            .rings()
            .iter()
            .zip(&self.ring_values)
            .flat_map(|(ring, &v)| ring.iter().map(move |&bin| (bin, v)))
    }

    /// Total squared modulus of the pattern, `sum |WM_i|^2 = |M| * S^2`.
    pub fn energy(&self) -> f64 {
        self.mask
            .rings()
            .iter()
            .zip(&self.ring_values)
            .map(|(ring, &v)| ring.len() as f64 * v * v)
            .sum()
    }
}

/// Encodes a message against a key: ring `i` takes `+S` if bit `i-1` is 1,
/// `-S` otherwise.
pub fn encode(message: &Message, key: &WatermarkKey) -> Result<WatermarkPattern> {
    if message.len() != key.radius {
        return Err(Error::invalid(format!(
            "message has {} bits but key radius is {}",
            message.len(),
            key.radius
        )));
    }
    let mask = build_mask(key)?;
    let ring_values = message
        .bits()
        .iter()
        .map(|&b| if b == 1 { key.scaler } else { -key.scaler })
        .collect();
    Ok(WatermarkPattern { key: key.clone(), mask, ring_values })
}

/// Returns a copy of the spectrum with the masked bins of the pattern's
/// channel overwritten by the pattern values. Every other bin is untouched.
pub fn embed(spectrum: &Spectrum, pattern: &WatermarkPattern) -> Result<Spectrum> {
    let key = pattern.key();
    if spectrum.height() != key.height || spectrum.width() != key.width {
        return Err(Error::invalid(format!(
            "spectrum is {}x{} but pattern was built for {}x{}",
            spectrum.height(),
            spectrum.width(),
            key.height,
            key.width
        )));
    }
    if key.channel >= spectrum.channels() {
        return Err(Error::invalid(format!(
            "channel {} out of range for {} channels",
            key.channel,
            spectrum.channels()
        )));
    }
    let mut out = spectrum.clone();
    for ((u, v), value) in pattern.bin_values() {
        out.set(key.channel, u, v, Complex::new(value, 0.0));
    }
    Ok(out)
}

/// Mean real part over each ring of the key's channel.
pub fn ring_means(spectrum: &Spectrum, mask: &RingMask, channel: usize) -> Result<Vec<f64>> {
    if mask.dims() != (spectrum.height(), spectrum.width()) {
        return Err(Error::invalid("mask dims do not match spectrum"));
    }
    if channel >= spectrum.channels() {
        return Err(Error::invalid(format!(
            "channel {channel} out of range for {} channels",
            spectrum.channels()
        )));
    }
    Ok(mask
        .rings()
        .iter()
        .map(|ring| {
            ring.iter().map(|&(u, v)| spectrum.get(channel, u, v).re).sum::<f64>()
                / ring.len() as f64
        })
        .collect())
}

/// Decodes bits by the sign of each ring mean: positive mean reads as 1,
/// zero or negative as 0.
pub fn decode_bits(spectrum: &Spectrum, key: &WatermarkKey) -> Result<Message> {
    let mask = build_mask(key)?;
    let means = ring_means(spectrum, &mask, key.channel)?;
    Message::from_bits(means.iter().map(|&m| u8::from(m > 0.0)).collect())
}
