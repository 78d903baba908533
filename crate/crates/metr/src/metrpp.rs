//! Composition of the ring message with a signature-carried group ID.
//!
//! A global message space of `2^r * n` values is partitioned into `n`
//! groups of `2^r`. The group ID travels over a pluggable signature
//! channel (a stand-in for a fine-tuned decoder path, modeled as a binary
//! symmetric channel with per-attack flip probabilities); the within-group
//! ID travels as the ring message. A global message decodes correctly iff
//! both parts decode exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attack::{apply_attack, AttackContext, AttackSpec};
use crate::codec::{Message, WatermarkKey};
use crate::diffusion::{detect_message, generate_watermarked, AlphaSchedule, EpsilonPredictor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Number of distinct global messages for a radius and group count.
pub fn capacity(radius: usize, groups: u64) -> Result<u64> {
    if radius == 0 || radius > 62 {
        return Err(Error::invalid(format!("radius {radius} out of range 1..=62")));
    }
    if groups == 0 {
        return Err(Error::invalid("need at least one group"));
    }
    (1u64 << radius)
        .checked_mul(groups)
        .ok_or_else(|| Error::invalid("capacity overflows u64"))
}

/// A value in `[0, 2^r * n)`. The group ID occupies the high-order bits
/// (`value >> r`); the low `r` bits are the within-group ring message.
///
/// Wire form: `{"value":65535,"r":10,"n":64}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalMessage {
    pub value: u64,
    #[serde(rename = "r")]
    pub radius: usize,
    #[serde(rename = "n")]
    pub groups: u64,
}

impl GlobalMessage {
    pub fn new(value: u64, radius: usize, groups: u64) -> Result<Self> {
        let cap = capacity(radius, groups)?;
        if value >= cap {
            return Err(Error::invalid(format!(
                "value {value} out of range for capacity {cap} (r={radius}, n={groups})"
            )));
        }
        Ok(Self { value, radius, groups })
    }

    pub fn group_id(&self) -> u64 {
        self.value >> self.radius
    }

    /// The within-group part as a ring message (bit `i` on ring `i + 1`).
    pub fn inner(&self) -> Message {
        let mask = (1u64 << self.radius) - 1;
        Message::from_value(self.value & mask, self.radius)
            .expect("inner value fits the radius by construction")
    }

    /// Inverse of `group_id`/`inner`: packs the parts back into a value.
    pub fn join(group_id: u64, inner: &Message, groups: u64) -> Result<Self> {
        let radius = inner.len();
        if group_id >= groups {
            return Err(Error::invalid(format!(
                "group id {group_id} out of range for {groups} groups"
            )));
        }
        Self::new((group_id << radius) | inner.value(), radius, groups)
    }
}

/// Binary symmetric channel standing in for the signature path. Flip
/// probabilities are keyed by attack kind; kinds without an entry are
/// noiseless.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignatureChannel {
    pub bits_per_group_id: usize,
    #[serde(default)]
    pub flip_prob: BTreeMap<String, f64>,
}

impl Default for SignatureChannel {
    fn default() -> Self {
        Self { bits_per_group_id: 48, flip_prob: BTreeMap::new() }
    }
}

impl SignatureChannel {
    pub fn validate(&self) -> Result<()> {
        if self.bits_per_group_id == 0 || self.bits_per_group_id > 63 {
            return Err(Error::invalid(format!(
                "bits_per_group_id {} out of range 1..=63",
                self.bits_per_group_id
            )));
        }
        for (kind, &p) in &self.flip_prob {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::invalid(format!(
                    "flip probability {p} for {kind:?} out of [0, 0.5]"
                )));
            }
        }
        Ok(())
    }

    pub fn with_flip(mut self, kind: &str, p: f64) -> Self {
        self.flip_prob.insert(kind.to_string(), p);
        self
    }

    pub fn flip_prob_for(&self, attack: &AttackSpec) -> f64 {
        self.flip_prob.get(attack.kind_name()).copied().unwrap_or(0.0)
    }
}

/// Result of pushing a group ID through the signature channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureTransmission {
    pub decoded_group_id: u64,
    pub bit_errors: u32,
}

/// Transmits a group ID: each of the channel's bits flips independently
/// with the attack-conditional probability.
pub fn transmit_signature(
    group_id: u64,
    channel: &SignatureChannel,
    attack: &AttackSpec,
    rng: &mut Rng,
) -> Result<SignatureTransmission> {
    channel.validate()?;
    if group_id >> channel.bits_per_group_id != 0 {
        return Err(Error::invalid(format!(
            "group id {group_id} does not fit in {} bits",
            channel.bits_per_group_id
        )));
    }
    let p = channel.flip_prob_for(attack);
    let mut decoded = group_id;
    let mut bit_errors = 0;
    for bit in 0..channel.bits_per_group_id {
        if rng.next_bool(p) {
            decoded ^= 1u64 << bit;
            bit_errors += 1;
        }
    }
    Ok(SignatureTransmission { decoded_group_id: decoded, bit_errors })
}

/// Joint decode outcome. `decoded` is populated only when both parts came
/// back exact, in which case it equals the original message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetrPlusPlusOutcome {
    pub decoded: Option<GlobalMessage>,
    pub metr_ok: bool,
    pub sig_ok: bool,
}

/// Full round trip of a global message: the inner part through
/// generate -> attack -> detect, the group ID through the signature
/// channel under the same attack. The two decodes are independent.
#[allow(clippy::too_many_arguments)]
pub fn encode_decode_metrpp(
    msg: &GlobalMessage,
    key: &WatermarkKey,
    predictor: &EpsilonPredictor,
    schedule: &AlphaSchedule,
    channels: usize,
    attack: &AttackSpec,
    signature: &SignatureChannel,
    p0: f64,
    rng: &mut Rng,
) -> Result<MetrPlusPlusOutcome> {
    if key.radius != msg.radius {
        return Err(Error::invalid(format!(
            "key radius {} does not match message radius {}",
            key.radius, msg.radius
        )));
    }
    let inner = msg.inner();
    let generated = generate_watermarked(rng, key, &inner, predictor, schedule, channels)?;
    let ctx = AttackContext { predictor, schedule };
    let attacked = apply_attack(&generated.image, attack, &ctx, rng)?;
    let report = detect_message(&attacked, key, &inner, predictor, schedule, p0)?;
    let metr_ok = report.decoded == inner;

    let transmission = transmit_signature(msg.group_id(), signature, attack, rng)?;
    let sig_ok = transmission.decoded_group_id == msg.group_id();

    let decoded = if metr_ok && sig_ok {
        Some(GlobalMessage::join(
            transmission.decoded_group_id,
            &report.decoded,
            msg.groups,
        )?)
    } else {
        None
    };
    Ok(MetrPlusPlusOutcome { decoded, metr_ok, sig_ok })
}
