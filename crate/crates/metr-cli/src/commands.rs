//! The five batch commands.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use metr::attack::{apply_attack, AttackContext, AttackSpec};
use metr::diffusion::{ddim_sample, detect_message, generate_watermarked_from_noise, DetectionReport};
use metr::eval::{run_trial, summarize_trials, EvalSummary, MessageSource, PipelineSettings, TrialRecord};
use metr::io::{encode_tensor, read_tensor, TensorData};
use metr::rng::{derive_seed, Rng};
use metr::tensor::LatentTensor;

use crate::config::Loaded;
use crate::error::{CliError, CliResult};
use crate::report::{
    fmt_sig6, read_manifest, write_atomic, write_json, Manifest, ManifestItem, MANIFEST_NAME,
};

const STREAM_GEN: u64 = 10;
const STREAM_GEN_MESSAGE: u64 = 11;
const STREAM_ATTACK_CMD: u64 = 12;

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create output dir {}: {e}", dir.display())))
}

fn image_name(index: usize) -> String {
    format!("image_{index:04}.mtr")
}

fn noise_name(index: usize) -> String {
    format!("noise_{index:04}.mtr")
}

fn draw_message(cfg: &Loaded, rng: &mut Rng) -> CliResult<metr::codec::Message> {
    match &cfg.source {
        MessageSource::Fixed(msg) => Ok(msg.clone()),
        MessageSource::Random => {
            metr::codec::Message::random(rng, cfg.key.radius).map_err(CliError::from_run)
        }
    }
}

/// Generates `trials` image/noise pairs plus the pairing manifest.
pub fn cmd_gen(cfg: &Loaded, out: &Path) -> CliResult<()> {
    ensure_dir(out)?;
    let mut items = Vec::with_capacity(cfg.trials);
    for index in 0..cfg.trials {
        let seed = derive_seed(cfg.seed, STREAM_GEN, index as u64);
        let mut msg_rng = Rng::from_seed(derive_seed(cfg.seed, STREAM_GEN_MESSAGE, index as u64));
        let message = draw_message(cfg, &mut msg_rng)?;
        let mut rng = Rng::from_seed(seed);
        let noise = LatentTensor::gaussian(&mut rng, cfg.channels, cfg.key.height, cfg.key.width)
            .map_err(CliError::from_run)?;
        let (image, noise_out) = if cfg.embed_watermark {
            let generated = generate_watermarked_from_noise(
                &noise,
                &cfg.key,
                &message,
                &cfg.predictor,
                &cfg.schedule,
            )
            .map_err(CliError::from_run)?;
            (generated.image, generated.noise_wm)
        } else {
            let image =
                ddim_sample(&noise, &cfg.predictor, &cfg.schedule).map_err(CliError::from_run)?;
            (image, noise)
        };

        let image_file = image_name(index);
        let noise_file = noise_name(index);
        write_atomic(&out.join(&image_file), &encode_tensor(&TensorData::Real(image)))?;
        write_atomic(&out.join(&noise_file), &encode_tensor(&TensorData::Real(noise_out)))?;
        items.push(ManifestItem { index, seed, message, image: image_file, noise: noise_file });
    }
    let manifest = Manifest {
        key: cfg.key.clone(),
        watermarked: cfg.embed_watermark,
        attack: None,
        items,
    };
    write_json(&out.join(MANIFEST_NAME), &manifest)?;
    println!("gen: wrote {} image/noise pairs to {}", cfg.trials, out.display());
    Ok(())
}

fn read_image(dir: &Path, item: &ManifestItem) -> CliResult<LatentTensor> {
    let path = dir.join(&item.image);
    if !path.exists() {
        return Err(CliError::Io(format!(
            "cannot pair inputs: item {} names missing file {}",
            item.index,
            path.display()
        )));
    }
    read_tensor(&path)
        .map_err(CliError::from_run)?
        .into_real()
        .map_err(CliError::from_run)
}

/// Applies the configured attack to every image in the input dir.
pub fn cmd_attack(cfg: &Loaded, inputs: &Path, out: &Path) -> CliResult<()> {
    if cfg.attacks.len() != 1 {
        return Err(CliError::Config(format!(
            "attack command needs exactly one attack in the config, found {} (grids belong to eval)",
            cfg.attacks.len()
        )));
    }
    let attack = &cfg.attacks[0];
    let mut manifest = read_manifest(inputs)?;
    ensure_dir(out)?;
    let ctx = AttackContext { predictor: &cfg.predictor, schedule: &cfg.schedule };
    for item in &manifest.items {
        let image = read_image(inputs, item)?;
        let mut rng = Rng::from_seed(derive_seed(cfg.seed, STREAM_ATTACK_CMD, item.index as u64));
        let attacked = apply_attack(&image, attack, &ctx, &mut rng).map_err(CliError::from_run)?;
        write_atomic(&out.join(&item.image), &encode_tensor(&TensorData::Real(attacked)))?;
    }
    manifest.attack = Some(attack.clone());
    write_json(&out.join(MANIFEST_NAME), &manifest)?;
    println!(
        "attack: applied {} to {} images, wrote {}",
        attack.label(),
        manifest.items.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DetectAggregate {
    trials: usize,
    presence_rate: f64,
    mean_p_value: f64,
    bit_accuracy: f64,
    word_accuracy: f64,
    mean_detection_distance: f64,
}

/// Detects every image listed in the manifest against its recorded
/// message; per-image reports plus one aggregate CSV row.
pub fn cmd_detect(cfg: &Loaded, inputs: &Path, out: &Path) -> CliResult<()> {
    let manifest = read_manifest(inputs)?;
    ensure_dir(out)?;
    let mut reports: Vec<DetectionReport> = Vec::with_capacity(manifest.items.len());
    for item in &manifest.items {
        let image = read_image(inputs, item)?;
        let report = detect_message(
            &image,
            &manifest.key,
            &item.message,
            &cfg.predictor,
            &cfg.schedule,
            cfg.p0,
        )
        .map_err(CliError::from_run)?;
        write_json(&out.join(format!("report_{:04}.json", item.index)), &report)?;
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(CliError::Io("cannot pair inputs: manifest lists no items".into()));
    }

    let truth: Vec<_> = manifest.items.iter().map(|i| i.message.clone()).collect();
    let decoded: Vec<_> = reports.iter().map(|r| r.decoded.clone()).collect();
    let n = reports.len() as f64;
    let aggregate = DetectAggregate {
        trials: reports.len(),
        presence_rate: reports.iter().filter(|r| r.presence).count() as f64 / n,
        mean_p_value: reports.iter().map(|r| r.p_value).sum::<f64>() / n,
        bit_accuracy: metr::eval::bit_accuracy(&truth, &decoded).map_err(CliError::from_run)?,
        word_accuracy: metr::eval::word_accuracy(&truth, &decoded).map_err(CliError::from_run)?,
        mean_detection_distance: reports.iter().map(|r| r.detection_distance).sum::<f64>() / n,
    };
    let mut csv = String::from(
        "trials,presence_rate,mean_p_value,bit_accuracy,word_accuracy,mean_detection_distance\n",
    );
    csv.push_str(&format!(
        "{},{},{},{},{},{}\n",
        aggregate.trials,
        fmt_sig6(aggregate.presence_rate),
        fmt_sig6(aggregate.mean_p_value),
        fmt_sig6(aggregate.bit_accuracy),
        fmt_sig6(aggregate.word_accuracy),
        fmt_sig6(aggregate.mean_detection_distance),
    ));
    write_atomic(&out.join("detect_summary.csv"), csv.as_bytes())?;
    write_json(&out.join("detect_summary.json"), &aggregate)?;
    println!(
        "detect: {} images, presence rate {:.3}, word accuracy {:.3}",
        aggregate.trials, aggregate.presence_rate, aggregate.word_accuracy
    );
    Ok(())
}

#[derive(Serialize)]
struct AttackEvalDetail {
    attack: String,
    spec: AttackSpec,
    summary: EvalSummary,
    trials: Vec<TrialRecord>,
}

/// Runs the full attack x trials grid in memory and emits one CSV row per
/// attack plus a JSON sidecar with every trial record.
pub fn cmd_eval(cfg: &Loaded, out: &Path) -> CliResult<()> {
    ensure_dir(out)?;
    let settings = PipelineSettings {
        key: &cfg.key,
        predictor: &cfg.predictor,
        schedule: &cfg.schedule,
        channels: cfg.channels,
        p0: cfg.p0,
        base_seed: cfg.seed,
    };
    let mut csv =
        String::from("attack,auc,tpr_at_1pct_fpr,bit_accuracy,word_accuracy,mean_detection_resolution\n");
    let mut details = Vec::with_capacity(cfg.attacks.len());
    for attack in &cfg.attacks {
        // Trials are independently seeded, so parallel evaluation with an
        // index-ordered collect reproduces the sequential result exactly.
        let records: Vec<TrialRecord> = (0..cfg.trials)
            .into_par_iter()
            .map(|i| run_trial(&settings, attack, &cfg.source, i))
            .collect::<metr::Result<Vec<_>>>()
            .map_err(CliError::from_run)?;
        let summary = summarize_trials(&records).map_err(CliError::from_run)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            attack.label(),
            fmt_sig6(summary.auc),
            fmt_sig6(summary.tpr_at_1pct_fpr),
            fmt_sig6(summary.bit_accuracy),
            fmt_sig6(summary.word_accuracy),
            fmt_sig6(summary.mean_detection_resolution),
        ));
        println!(
            "eval: {:<22} auc {:.3}  bit {:.3}  word {:.3}",
            attack.label(),
            summary.auc,
            summary.bit_accuracy,
            summary.word_accuracy
        );
        details.push(AttackEvalDetail {
            attack: attack.label(),
            spec: attack.clone(),
            summary,
            trials: records,
        });
    }
    write_atomic(&out.join("eval_summary.csv"), csv.as_bytes())?;
    write_json(&out.join("eval_details.json"), &details)?;
    println!("eval: wrote reports to {}", out.display());
    Ok(())
}

/// Scaler search; one trace row per candidate plus the selection result.
pub fn cmd_tune(cfg: &Loaded, out: &Path) -> CliResult<()> {
    let search_cfg = cfg
        .tune
        .as_ref()
        .ok_or_else(|| CliError::Config("tune command needs a \"tune\" section".into()))?;
    ensure_dir(out)?;
    let search = metr::eval::select_scaler(
        search_cfg,
        &cfg.key,
        &cfg.predictor,
        &cfg.schedule,
        cfg.channels,
        cfg.seed,
    )
    .map_err(CliError::from_run)?;

    let mut csv = String::from(
        "scaler,detection_resolution,ratio,criterion_pass,distortion,qualified\n",
    );
    for candidate in &search.trace {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_sig6(candidate.scaler),
            fmt_sig6(candidate.detection_resolution),
            candidate.ratio.map_or_else(|| "undefined".into(), fmt_sig6),
            candidate.criterion_pass,
            candidate.distortion.map_or_else(|| "skipped".into(), fmt_sig6),
            candidate.qualified,
        ));
    }
    write_atomic(&out.join("tune_trace.csv"), csv.as_bytes())?;
    write_json(&out.join("tune_result.json"), &search)?;
    match search.selected {
        Some(s) => println!("tune: selected scaler {s}"),
        None => println!("tune: no scaler qualified; see trace"),
    }
    Ok(())
}

/// Resolves the output directory: flag beats config.
pub fn resolve_out(cfg: &Loaded, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.output_dir.clone()).ok_or_else(|| {
        CliError::Config("no output directory: pass --out or set output_dir".into())
    })
}
