use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use copyalign_core::datagen::Dataset;
use copyalign_core::eval::{precision_recall_sweep, sweep_csv};
use copyalign_core::gradcheck::run_grad_checks;
use copyalign_core::io::{
    export_maps as write_maps, load_checkpoint, read_dataset, read_features, read_features_csv, read_json,
    save_checkpoint, write_dataset, write_json, Checkpoint, CheckpointMeta,
};
use copyalign_core::pipeline::{detect_dataset, parameter_sweep, run_ablation, IOU_THRESHOLDS};
use copyalign_core::{detect as detect_pair, train as train_network, AlignerRegistry, Detection, Error, FeatureSequence, GroundTruthPair, Network};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{AblateArgs, AlignArgs, DetectArgs, EvalArgs, ExportMapsArgs, Failure, GenArgs, GradCheckArgs, TrainArgs};

type CmdResult = Result<(), Failure>;

fn write_text(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

/// Writes JSON to `out`, or to stdout when `out` is `None`.
fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CmdResult {
    match out {
        Some(path) => Ok(write_json(path, value)?),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn read_sequence(path: &Path, fps: Option<f32>) -> Result<FeatureSequence, Failure> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let fps = fps.ok_or_else(|| Failure::Usage(format!("{}: CSV features need --fps", path.display())))?;
        Ok(read_features_csv(path, fps)?)
    } else {
        Ok(read_features(path)?)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn apply_align(cfg: &mut RunConfig, a: &AlignArgs) {
    if let Some(v) = a.tau {
        cfg.align.tau = v;
    }
    if let Some(v) = a.sigma {
        cfg.align.sigma = v;
    }
    if let Some(v) = a.gamma {
        cfg.align.gamma = v;
    }
    if let Some(v) = a.weighting {
        cfg.align.weighting = v;
    }
}

pub fn gen(mut cfg: RunConfig, a: GenArgs) -> CmdResult {
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let d = &mut cfg.data;
    d.train_pairs = a.pairs.unwrap_or(d.train_pairs);
    d.heldout_pairs = a.heldout.unwrap_or(d.heldout_pairs);
    d.negative_pairs = a.negatives.unwrap_or(d.negative_pairs);
    d.feature_dim = a.dim.unwrap_or(d.feature_dim);
    d.seq_len = a.length.unwrap_or(d.seq_len);
    d.perturb = a.perturb.unwrap_or(d.perturb);
    let data = Dataset::generate(&cfg.gen_config())?;
    write_dataset(&a.out, &data)?;
    eprintln!(
        "wrote {} train, {} held-out, {} negative pairs to {}",
        data.train.len(),
        data.heldout.len(),
        data.negatives.len(),
        a.out.display()
    );
    Ok(())
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> CmdResult {
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = a.lr.unwrap_or(t.learning_rate);
    t.decayed_learning_rate = a.lr_decayed.unwrap_or(t.decayed_learning_rate);
    t.momentum = a.momentum.unwrap_or(t.momentum);
    t.weight_decay = a.weight_decay.unwrap_or(t.weight_decay);
    t.lambda = a.lambda.unwrap_or(t.lambda);
    if let Some(s) = a.encoder {
        cfg.encoder.enabled = s.on();
    }

    let data = read_dataset(&a.data)?;
    cfg.data.feature_dim = data.manifest.config.pair.feature_dim;
    let train_cfg = cfg.train_config();
    let mut net = Network::new(cfg.network_config(), cfg.seed)?;
    let mut csv = String::from("epoch,learning_rate,mean_loss,mean_mask_loss,mean_step_loss,clamped\n");
    train_network(&mut net, &data.train, &train_cfg, |s| {
        eprintln!("epoch {} lr {:e} loss {:.5} (mask {:.5}, step {:.5})", s.epoch, s.learning_rate, s.mean_loss, s.mean_mask_loss, s.mean_step_loss);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.epoch, s.learning_rate, s.mean_loss, s.mean_mask_loss, s.mean_step_loss, s.clamped
        );
    })?;
    let ckpt = Checkpoint {
        seed: cfg.seed,
        meta: CheckpointMeta { network: net.config, train: Some(train_cfg) },
        network: net,
    };
    save_checkpoint(&a.out, &ckpt)?;
    let loss_csv = a.loss_csv.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    write_text(&loss_csv, &csv)?;
    eprintln!("wrote {} and {}", a.out.display(), loss_csv.display());
    Ok(())
}

pub fn detect(mut cfg: RunConfig, a: DetectArgs) -> CmdResult {
    apply_align(&mut cfg, &a.align);
    if let Some(v) = &a.aligner {
        cfg.detect.aligner = v.clone();
    }
    if let Some(s) = a.encoder {
        cfg.encoder.enabled = s.on();
    }
    if let Some(s) = a.mask_map {
        cfg.detect.mask_map = s.on();
    }
    let opts = cfg.detect_options();
    let registry = AlignerRegistry::with_defaults();
    registry.get(&opts.aligner)?;
    opts.align.validate()?;
    let net = load_checkpoint(&a.checkpoint)?.network;

    let dets: Vec<Detection> = match (&a.query, &a.reference, &a.data) {
        (Some(q), Some(r), _) => {
            let query = read_sequence(q, a.fps)?;
            let reference = read_sequence(r, a.fps)?;
            detect_pair(&net, &registry, &query, &reference, (&stem(q), &stem(r)), &opts)?
        }
        (_, _, Some(dir)) => detect_dataset(&net, &registry, &read_dataset(dir)?, &opts)?,
        _ => return Err(Failure::Usage("give --query and --reference, or --data".into())),
    };
    eprintln!("{} detections", dets.len());
    emit_json(a.out.as_deref(), &dets)
}

pub fn eval(a: EvalArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(Failure::Usage(format!("--iou must lie in [0, 1], got {}", a.iou)));
    }
    let dets: Vec<Detection> = read_json(&a.detections)?;
    let gts: Vec<GroundTruthPair> = read_json(&a.annotations)?;
    let report = precision_recall_sweep(&dets, &gts, a.iou)?;
    eprintln!("best F1 {:.4} at IoU threshold {}", report.best_f1, a.iou);
    if let Some(path) = &a.sweep_csv {
        write_text(path, &sweep_csv(&report))?;
    }
    emit_json(a.out.as_deref(), &report)
}

pub fn ablate(mut cfg: RunConfig, a: AblateArgs) -> CmdResult {
    apply_align(&mut cfg, &a.align);
    cfg.align.validate()?;
    let net = load_checkpoint(&a.checkpoint)?.network;
    let data = read_dataset(&a.data)?;
    let registry = AlignerRegistry::with_defaults();

    let arms = run_ablation(&net, &registry, &data, &cfg.align, &IOU_THRESHOLDS)?;
    let mut table = String::from("arm,aligner,encoder,weighting,mask_map");
    for t in IOU_THRESHOLDS {
        let _ = write!(table, ",f1_iou_{t}");
    }
    table.push('\n');
    for r in &arms {
        let _ = write!(table, "{},{},{},{},{}", r.arm.name, r.arm.aligner, r.arm.encoder, r.arm.weighting, r.arm.mask_map);
        for f in &r.f1 {
            let _ = write!(table, ",{f}");
        }
        table.push('\n');
        eprintln!("{:<12} {:?}", r.arm.name, r.f1);
    }
    write_text(&a.out.join("ablation.csv"), &table)?;

    let points = parameter_sweep(&net, &registry, &data, &cfg.detect_options(), a.sweep_iou)?;
    let mut sweep = String::from("parameter,value,f1\n");
    for p in &points {
        let _ = writeln!(sweep, "{},{},{}", p.parameter, p.value, p.f1);
    }
    write_text(&a.out.join("sweep.csv"), &sweep)?;
    eprintln!("wrote ablation.csv and sweep.csv to {}", a.out.display());
    Ok(())
}

pub fn export_maps(mut cfg: RunConfig, a: ExportMapsArgs) -> CmdResult {
    if let Some(s) = a.encoder {
        cfg.encoder.enabled = s.on();
    }
    let net = load_checkpoint(&a.checkpoint)?.network;
    let query = read_sequence(&a.query, a.fps)?.l2_normalize()?;
    let reference = read_sequence(&a.reference, a.fps)?.l2_normalize()?;
    net.check_dim(&query)?;
    net.check_dim(&reference)?;
    let prediction = if cfg.encoder.enabled {
        net.predict(&query, &reference)?
    } else {
        net.predict_without_encoder(&query, &reference)?
    };
    write_maps(&a.out, &prediction)?;
    eprintln!("wrote maps to {}", a.out.display());
    Ok(())
}

pub fn grad_check(a: GradCheckArgs) -> CmdResult {
    let cases = run_grad_checks(a.seed)?;
    let mut failed = 0;
    for c in &cases {
        let status = if c.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<20} max rel error {:.3e} (tolerance {:e}, {} probes, {} kinks skipped) {status}",
            c.name, c.max_rel_error, c.tolerance, c.probes, c.kinks
        );
        failed += usize::from(!c.passed());
    }
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} gradient check(s) failed")));
    }
    Ok(())
}
