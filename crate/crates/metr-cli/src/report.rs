//! Report emission: deterministic CSV/JSON with atomic writes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use metr::attack::AttackSpec;
use metr::codec::{Message, WatermarkKey};

use crate::error::{CliError, CliResult};

/// One number, six significant digits, locale-independent. Fixed notation
/// inside a sane exponent band, scientific outside it.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.000000".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.5e}", x);
    let (_, exp) = sci.split_once('e').expect("scientific format always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-4..=5).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// Write-temp-then-rename, so partially written reports never appear under
/// the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("invalid output path {}", path.display())))?;
    let tmp = path.with_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Internal(format!("serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Index of everything a `gen` run produced; `detect` and `attack` pair
/// their inputs through it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub key: WatermarkKey,
    pub watermarked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    pub items: Vec<ManifestItem>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestItem {
    pub index: usize,
    pub seed: u64,
    pub message: Message,
    pub image: String,
    pub noise: String,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::Io(format!("cannot pair inputs: missing manifest {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("malformed manifest {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(0.0), "0.000000");
        assert_eq!(fmt_sig6(1.0), "1.00000");
        assert_eq!(fmt_sig6(0.5), "0.500000");
        assert_eq!(fmt_sig6(43.0), "43.0000");
        assert_eq!(fmt_sig6(-2.23e-3), "-0.00223000");
        assert_eq!(fmt_sig6(123456.789), "123457");
        assert_eq!(fmt_sig6(0.993023255), "0.993023");
        assert_eq!(fmt_sig6(1.2345649e-7), "1.23456e-7");
        assert_eq!(fmt_sig6(9.876e9), "9.87600e9");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert!(!path.with_file_name("report.csv.tmp").exists());
    }
}
