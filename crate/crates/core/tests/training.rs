use std::sync::OnceLock;

use copyalign_core::datagen::{Dataset, GenConfig, PairConfig, TrainingPair};
use copyalign_core::eval::segment_iou;
use copyalign_core::io::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
use copyalign_core::network::pair_loss;
use copyalign_core::train::Reduction;
use copyalign_core::{detect, AlignerRegistry, DetectOptions, FeatureSequence, Network, NetworkConfig, Segment, TrainConfig};
use copyalign_tensor::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DIM: usize = 16;

fn small_data(train: usize) -> Dataset {
    Dataset::generate(&GenConfig {
        seed: 11,
        train_pairs: train,
        heldout_pairs: 0,
        negative_pairs: 0,
        pair: PairConfig { feature_dim: DIM, ..Default::default() },
    })
    .unwrap()
}

fn net_config() -> NetworkConfig {
    NetworkConfig {
        feature_dim: DIM,
        encoder: Some(copyalign_core::encoder::EncoderConfig { model_dim: DIM, heads: 2, hidden_dim: 32 }),
    }
}

fn mean_loss(net: &Network, pairs: &[TrainingPair], lambda: f64) -> f64 {
    pairs.iter().map(|p| net.loss(&p.anchor, &p.positive, &p.mask_label, &p.step_targets, lambda).unwrap()).sum::<f64>()
        / pairs.len() as f64
}

#[test]
fn untrained_loss_is_near_uniform_cross_entropy() {
    let data = small_data(32);
    let net = Network::new(net_config(), 3).unwrap();
    let expected = 2f64.ln() + 3f64.ln();
    let got = mean_loss(&net, &data.train, 1.0);
    assert!((got - expected).abs() < 0.2, "initial loss {got}, uniform {expected}");
}

#[test]
fn a_single_pair_can_be_overfit() {
    let data = small_data(1);
    let mut net = Network::new(net_config(), 4).unwrap();
    let before = mean_loss(&net, &data.train, 1.0);
    let cfg = TrainConfig { epochs: 200, batch_size: 1, learning_rate: 0.01, decayed_learning_rate: 0.01, ..Default::default() };
    let report = copyalign_core::train(&mut net, &data.train, &cfg, |_| {}).unwrap();
    assert_eq!(report.steps, 200);
    let after = mean_loss(&net, &data.train, 1.0);
    assert!(after < 0.3 * before, "loss {before} -> {after}");
}

fn grad_norm(grads: &copyalign_tensor::Gradients<f32>, var: copyalign_tensor::Var) -> f32 {
    grads.get(var).map_or(0.0, |t| t.data().iter().map(|v| v * v).sum::<f32>().sqrt())
}

#[test]
fn lambda_zero_detaches_the_step_head() {
    let data = small_data(1);
    let p = &data.train[0];
    let net = Network::new(net_config(), 5).unwrap();
    let mut g = Graph::new();
    let b = net.params.bind(&mut g);
    let u = g.constant(p.anchor.frames().clone());
    let v = g.constant(p.positive.frames().clone());
    let l = pair_loss(&mut g, &b, &net.config, u, v, &p.mask_label, &p.step_targets, 0.0).unwrap();
    let grads = g.backward(l.total).unwrap();
    assert_eq!(grad_norm(&grads, b.get("cnn.step.weight").unwrap()), 0.0);
    assert_eq!(grad_norm(&grads, b.get("cnn.step.bias").unwrap()), 0.0);
    assert!(grad_norm(&grads, b.get("cnn.mask.weight").unwrap()) > 0.0);

    // The step loss alone reaches the encoder through the shared trunk.
    let step_grads = g.backward(l.step).unwrap();
    assert!(grad_norm(&step_grads, b.get("encoder.query.weight").unwrap()) > 0.0);
    assert!(grad_norm(&step_grads, b.get("cnn.conv1.weight").unwrap()) > 0.0);
    assert_eq!(grad_norm(&step_grads, b.get("cnn.mask.weight").unwrap()), 0.0);
}

#[test]
fn training_is_deterministic() {
    let data = small_data(8);
    let cfg = TrainConfig { epochs: 2, batch_size: 4, learning_rate: 0.01, ..Default::default() };
    let run = |seed: u64| {
        let mut net = Network::new(net_config(), seed).unwrap();
        let report = copyalign_core::train(&mut net, &data.train, &TrainConfig { seed, ..cfg.clone() }, |_| {}).unwrap();
        (net, report)
    };
    let (a, ra) = run(1);
    let (b, rb) = run(1);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_ne!(run(2).0, a);
}

#[test]
fn mean_reduction_scales_the_update() {
    let data = small_data(4);
    let base = TrainConfig { epochs: 1, batch_size: 4, learning_rate: 0.01, momentum: 0.0, weight_decay: 0.0, ..Default::default() };
    let start = Network::new(net_config(), 6).unwrap();
    let delta = |reduction: Reduction| {
        let mut net = start.clone();
        copyalign_core::train(&mut net, &data.train, &TrainConfig { reduction, ..base.clone() }, |_| {}).unwrap();
        let after = net.params.value("cnn.mask.bias").unwrap().data().to_vec();
        let before = start.params.value("cnn.mask.bias").unwrap().data().to_vec();
        after.iter().zip(&before).map(|(a, b)| a - b).collect::<Vec<f32>>()
    };
    let (sum, mean) = (delta(Reduction::Sum), delta(Reduction::Mean));
    for (s, m) in sum.iter().zip(&mean) {
        assert!((s - 4.0 * m).abs() <= 1e-4 * s.abs().max(1e-6), "{s} vs 4 × {m}");
    }
}

/// A small model trained once per test binary for the detection examples.
fn trained() -> &'static Network {
    static NET: OnceLock<Network> = OnceLock::new();
    NET.get_or_init(|| {
        let data = small_data(200);
        let mut net = Network::new(net_config(), 7).unwrap();
        let cfg = TrainConfig { epochs: 10, batch_size: 16, learning_rate: 5e-3, decayed_learning_rate: 5e-4, ..Default::default() };
        copyalign_core::train(&mut net, &data.train, &cfg, |_| {}).unwrap();
        net
    })
}

fn sequence(len: usize, seed: u64) -> FeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    copyalign_core::datagen::synthetic_sequence(len, DIM, 0.8, 1.0, &mut rng).unwrap()
}

#[test]
fn checkpoint_round_trip_preserves_detections() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let net = trained().clone();
    let ckpt = Checkpoint { seed: 7, meta: CheckpointMeta { network: net.config, train: None }, network: net };
    save_checkpoint(&path, &ckpt).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!((loaded.seed, &loaded.meta), (ckpt.seed, &ckpt.meta));
    let values = |c: &Checkpoint| c.network.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect::<Vec<_>>();
    assert_eq!(values(&loaded), values(&ckpt));
    let (q, r) = (sequence(16, 1), sequence(16, 1));
    let reg = AlignerRegistry::with_defaults();
    let opts = DetectOptions::default();
    assert_eq!(
        detect(&ckpt.network, &reg, &q, &r, ("q", "r"), &opts).unwrap(),
        detect(&loaded.network, &reg, &q, &r, ("q", "r"), &opts).unwrap()
    );
}

#[test]
fn exact_copy_is_detected_over_its_full_duration() {
    let q = sequence(16, 21);
    let dets = detect(trained(), &AlignerRegistry::with_defaults(), &q, &q, ("q", "q"), &DetectOptions::default()).unwrap();
    let best = &dets[0];
    assert!(best.score > 0.5, "{dets:?}");
    let full = Segment::new(0.0, 15.0).unwrap();
    assert!(segment_iou(best.q, full).unwrap() > 0.9 && segment_iou(best.r, full).unwrap() > 0.9, "{best:?}");
}

#[test]
fn unrelated_sequences_give_no_confident_detection() {
    let dets = detect(trained(), &AlignerRegistry::with_defaults(), &sequence(16, 31), &sequence(16, 32), ("a", "b"), &DetectOptions::default()).unwrap();
    assert!(dets.iter().all(|d| d.score < 0.3), "{dets:?}");
}

#[test]
fn copied_middle_is_localised() {
    let reference = sequence(16, 41);
    let rows: Vec<f32> = reference.frames().data()[4 * DIM..12 * DIM].to_vec();
    let mut query_rows = sequence(8, 42).frames().data()[..4 * DIM].to_vec();
    query_rows.extend(rows);
    query_rows.extend(&sequence(8, 43).frames().data()[..4 * DIM]);
    let query = FeatureSequence::uniform(Tensor::new(&[16, DIM], query_rows).unwrap(), 1.0).unwrap();
    let dets = detect(trained(), &AlignerRegistry::with_defaults(), &query, &reference, ("q", "r"), &DetectOptions::default()).unwrap();
    let best = &dets[0];
    let truth = Segment::new(4.0, 11.0).unwrap();
    let (iq, ir) = (segment_iou(best.q, truth).unwrap(), segment_iou(best.r, truth).unwrap());
    assert!(iq >= 0.75 && ir >= 0.75, "IoU {iq} / {ir} for {dets:?}");
}
