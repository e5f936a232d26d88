use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use copyalign_core::io::{read_json, write_features, ANNOTATIONS_FILE};
use copyalign_core::{AlignConfig, Detection, FeatureSequence, TrainConfig};
use copyalign_tensor::Tensor;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_copyalign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn copyalign")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Value following `[default: ` in the help line that mentions `flag`.
fn help_default(help: &str, flag: &str) -> f64 {
    let mut lines = help.lines().skip_while(|l| !l.trim_start().starts_with(flag));
    let text: String = lines.by_ref().take(3).collect::<Vec<_>>().join(" ");
    let start = text.find("[default: ").unwrap_or_else(|| panic!("no default for {flag}")) + 10;
    let end = start + text[start..].find(']').unwrap();
    text[start..end].parse().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn gen_small(&self, name: &str, seed: &str) -> PathBuf {
        let out = self.path(name);
        let o = run(&["gen", "--out", p(&out), "--seed", seed, "--pairs", "24", "--heldout", "4", "--negatives", "2", "--dim", "8"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    }

    fn train_small(&self, data: &Path) -> PathBuf {
        let ckpt = self.path("model.vsck");
        let o = run(&["train", "--data", p(data), "--out", p(&ckpt), "--epochs", "2", "--lr", "0.01"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        ckpt
    }
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_names_symbols_and_published_defaults() {
    let detect = stdout(&run(&["detect", "--help"]));
    for sym in ["τ", "σ", "γ"] {
        assert!(detect.contains(sym), "detect --help lacks {sym}");
    }
    let a = AlignConfig::default();
    assert_eq!(help_default(&detect, "--tau"), a.tau);
    assert_eq!(help_default(&detect, "--sigma"), a.sigma);
    assert_eq!(help_default(&detect, "--gamma"), a.gamma);

    let train = stdout(&run(&["train", "--help"]));
    assert!(train.contains("λ"));
    let t = TrainConfig::default();
    assert_eq!(help_default(&train, "--lambda"), t.lambda);
    assert_eq!(help_default(&train, "--lr "), t.learning_rate);
    assert_eq!(help_default(&train, "--lr-decayed"), t.decayed_learning_rate);
    assert_eq!(help_default(&train, "--momentum"), t.momentum);
    assert_eq!(help_default(&train, "--weight-decay"), t.weight_decay);
    assert_eq!(help_default(&train, "--epochs") as usize, t.epochs);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["detect"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    let ws = Workspace::new();
    assert_eq!(code(&run(&["gen", "--out", p(&ws.path("d")), "--pairs", "0"])), 2);
}

#[test]
fn gen_is_deterministic() {
    let ws = Workspace::new();
    let a = ws.gen_small("a", "11");
    let b = ws.gen_small("b", "11");
    let c = ws.gen_small("c", "12");
    assert_eq!(files(&a), files(&b));
    assert_ne!(files(&a), files(&c));
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let ws = Workspace::new();
    let cfg = ws.path("run.toml");
    fs::write(&cfg, "[align]\ntau = \"high\"\n").unwrap();
    let o = run(&["--config", p(&cfg), "gen", "--out", p(&ws.path("d"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.toml"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let ws = Workspace::new();
    let cfg = ws.path("run.toml");
    fs::write(&cfg, "seed = 11\n[data]\nfeature_dim = 8\ntrain_pairs = 24\nheldout_pairs = 4\nnegative_pairs = 2\n").unwrap();
    let from_file = ws.path("f");
    assert_eq!(code(&run(&["--config", p(&cfg), "gen", "--out", p(&from_file)])), 0);
    assert_eq!(files(&from_file), files(&ws.gen_small("flags", "11")));
    let overridden = ws.path("o");
    assert_eq!(code(&run(&["--config", p(&cfg), "gen", "--out", p(&overridden), "--seed", "12"])), 0);
    assert_ne!(files(&from_file), files(&overridden));
}

#[test]
fn corrupt_inputs_exit_3_with_file_context() {
    let ws = Workspace::new();
    let data = ws.gen_small("d", "3");
    let labels = data.join("train").join("train_00000.labels.json");
    assert!(labels.exists(), "expected {}", labels.display());
    fs::write(&labels, "{").unwrap();
    let o = run(&["train", "--data", p(&data), "--out", p(&ws.path("m.vsck"))]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train_00000.labels.json"));

    let ckpt = ws.path("bad.vsck");
    fs::write(&ckpt, b"VSCK\x01").unwrap();
    let o = run(&["detect", "--checkpoint", p(&ckpt), "--data", p(&data)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn end_to_end_pipeline() {
    let ws = Workspace::new();
    let data = ws.gen_small("data", "5");
    let ckpt = ws.train_small(&data);
    let loss_csv = fs::read_to_string(format!("{}.loss.csv", p(&ckpt))).unwrap();
    assert_eq!(loss_csv.lines().count(), 3);
    assert!(loss_csv.starts_with("epoch,learning_rate,mean_loss"));

    let dets_path = ws.path("dets.json");
    let o = run(&["detect", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&dets_path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dets: Vec<Detection> = read_json(&dets_path).unwrap();
    assert!(dets.iter().all(|d| d.q.start <= d.q.end && d.r.start <= d.r.end));
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(&dets_path).unwrap()).unwrap();
    for key in ["query_id", "ref_id", "q_start", "q_end", "r_start", "r_end", "score"] {
        assert!(raw.as_array().unwrap().iter().all(|d| d.get(key).is_some()), "missing {key}");
    }

    // Same checkpoint, same inputs: identical JSON.
    let again = ws.path("dets2.json");
    assert_eq!(code(&run(&["detect", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&again)])), 0);
    assert_eq!(fs::read(&dets_path).unwrap(), fs::read(&again).unwrap());

    let report = ws.path("report.json");
    let sweep = ws.path("sweep.csv");
    let o = run(&[
        "eval",
        "--detections",
        p(&dets_path),
        "--annotations",
        p(&data.join(ANNOTATIONS_FILE)),
        "--iou",
        "0.5",
        "--out",
        p(&report),
        "--sweep-csv",
        p(&sweep),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["iou_threshold"], 0.5);
    assert!(r["best_f1"].as_f64().unwrap() >= 0.0);
    assert!(fs::read_to_string(&sweep).unwrap().starts_with("score_threshold,precision,recall,f1"));

    let out = ws.path("ablate");
    let o = run(&["ablate", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["HV", "HV+SE", "HV+SE+SW", "SM+SE+SW", "SM+SE+SW+MM"]);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let params: Vec<&str> = sweep.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(params.len(), 12);
    for name in ["tau", "sigma", "gamma"] {
        assert_eq!(params.iter().filter(|&&x| x == name).count(), 4);
    }
}

fn write_seq(path: &Path, rows: usize, dim: usize, f: impl Fn(usize, usize) -> f32) {
    let seq = FeatureSequence::uniform(Tensor::from_fn(&[rows, dim], |k| f(k / dim, k % dim)), 25.0).unwrap();
    write_features(path, &seq).unwrap();
}

#[test]
fn single_pair_detect_and_export() {
    let ws = Workspace::new();
    let data = ws.gen_small("data", "5");
    let ckpt = ws.train_small(&data);
    let q = ws.path("q.vsfq");
    let r = ws.path("r.vsfq");
    write_seq(&q, 12, 8, |i, j| ((i * 7 + j * 3) % 11) as f32 + 0.5);
    write_seq(&r, 10, 8, |i, j| ((i * 5 + j * 2) % 13) as f32 + 0.5);

    let o = run(&["detect", "--checkpoint", p(&ckpt), "--query", p(&q), "--reference", p(&r), "--tau", "0.99", "--sigma", "0.99"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dets: Vec<Detection> = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(dets.iter().all(|d| d.query_id == "q" && d.ref_id == "r"));

    for aligner in ["hv", "sm"] {
        let o = run(&["detect", "--checkpoint", p(&ckpt), "--query", p(&q), "--reference", p(&r), "--aligner", aligner, "--mask-map", "off", "--encoder", "off"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["detect", "--checkpoint", p(&ckpt), "--query", p(&q), "--reference", p(&r), "--aligner", "dtw"]);
    assert_eq!(code(&o), 2);
    let o = run(&["detect", "--checkpoint", p(&ckpt), "--query", p(&q), "--reference", p(&r), "--tau", "1.5"]);
    assert_eq!(code(&o), 2);

    let wide = ws.path("wide.vsfq");
    write_seq(&wide, 10, 6, |i, j| (i + j) as f32 + 1.0);
    let o = run(&["detect", "--checkpoint", p(&ckpt), "--query", p(&q), "--reference", p(&wide)]);
    assert_eq!(code(&o), 2, "width mismatch is a configuration error");

    let maps = ws.path("maps");
    let o = run(&["export-maps", "--checkpoint", p(&ckpt), "--query", p(&q), "--reference", p(&r), "--out", p(&maps)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["similarity.csv", "similarity.pgm", "mask.csv", "mask.pgm", "step.csv"] {
        assert!(maps.join(f).exists(), "missing {f}");
    }
    assert_eq!(fs::read_to_string(maps.join("mask.csv")).unwrap().lines().count(), 12);
    assert!(fs::read(maps.join("mask.pgm")).unwrap().starts_with(b"P5"));
}

#[test]
fn csv_features_need_fps() {
    let ws = Workspace::new();
    let data = ws.gen_small("data", "5");
    let ckpt = ws.train_small(&data);
    let csv = ws.path("q.csv");
    let rows: Vec<String> = (0..6).map(|i| (0..8).map(|j| ((i + j) % 5 + 1).to_string()).collect::<Vec<_>>().join(",")).collect();
    fs::write(&csv, rows.join("\n")).unwrap();
    let o = run(&["detect", "--checkpoint", p(&ckpt), "--query", p(&csv), "--reference", p(&csv)]);
    assert_eq!(code(&o), 2);
    let o = run(&["detect", "--checkpoint", p(&ckpt), "--query", p(&csv), "--reference", p(&csv), "--fps", "25"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_rejects_empty_ground_truth() {
    let ws = Workspace::new();
    let dets = ws.path("d.json");
    let gts = ws.path("g.json");
    fs::write(&dets, "[]").unwrap();
    fs::write(&gts, "[]").unwrap();
    assert_eq!(code(&run(&["eval", "--detections", p(&dets), "--annotations", p(&gts)])), 3);
}

#[test]
fn grad_check_passes() {
    let o = run(&["grad-check"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("ok")).count(), 9);
}
