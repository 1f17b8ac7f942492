use std::collections::BTreeMap;

use hat_core::checkpoint::Checkpoint;
use hat_core::data::{bicubic_downscale, ImageBuffer, Pair};
use hat_core::model::{preset, HatModel, Init, ParamSpec, ParamStore};
use hat_core::training::*;
use hat_core::Error;
use hat_tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_pairs(seed: u64) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3)
        .map(|_| {
            let phase: f64 = rng.random();
            let hq = ImageBuffer::from_fn(24, 24, 3, |y, x, c| {
                0.5 + 0.4 * ((x as f64 * 0.3 + y as f64 * 0.2 + c as f64 + phase * 6.0).sin())
            })
            .unwrap()
            .quantized();
            Pair::new(bicubic_downscale(&hq, 2).unwrap().quantized(), hq, 2).unwrap()
        })
        .collect()
}

fn small_config(steps: u64) -> TrainConfig {
    let mut c = TrainConfig::for_phase(Phase::Scratch, steps);
    c.batch = 2;
    c.patch = 8;
    c.seed = 7;
    c
}

fn l1_value(p: &[f64], t: &[f64]) -> f64 {
    let tape = Tape::new();
    let a = tape.constant(Tensor::new([p.len()], p.to_vec()).unwrap());
    let b = tape.constant(Tensor::new([t.len()], t.to_vec()).unwrap());
    l1_loss(&a, &b).unwrap().value().item()
}

#[test]
fn l1_closed_forms_and_oracle() {
    let v = [0.1, 0.5, -0.2];
    assert_eq!(l1_value(&v, &v), 0.0);
    let shifted: Vec<f64> = v.iter().map(|x| x - 0.25).collect();
    assert!((l1_value(&v, &shifted) - 0.25).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p: Vec<f64> = (0..257).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t: Vec<f64> = (0..257).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut oracle = 0.0;
    for i in 0..p.len() {
        oracle += (p[i] - t[i]).abs();
    }
    oracle /= p.len() as f64;
    assert!((l1_value(&p, &t) - oracle).abs() < 1e-7);
}

#[test]
fn l1_gradient_is_sign_over_n_and_zero_at_ties() {
    let tape = Tape::new();
    let p = tape.leaf(Tensor::new([4], vec![1.0, 0.0, -2.0, 0.5]).unwrap());
    let t = tape.constant(Tensor::new([4], vec![0.0, 0.0, 1.0, 0.5]).unwrap());
    let loss = l1_loss(&p, &t).unwrap();
    let g = tape.backward(&loss).unwrap().get_or_zeros(&p);
    assert_eq!(g.data(), &[0.25, 0.0, -0.25, 0.0]);
    let short = tape.constant(Tensor::<f64>::zeros([3]));
    assert!(l1_loss(&p, &short).is_err());
}

fn scalar_store(v: f64) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    s.insert("w", Tensor::new([1], vec![v]).unwrap());
    s
}

fn grads(g: f64) -> BTreeMap<String, Tensor<f64>> {
    BTreeMap::from([("w".to_string(), Tensor::new([1], vec![g]).unwrap())])
}

/// Textbook Adam on one scalar.
fn adam_oracle(mut p: f64, gs: &[f64], lr: f64) -> f64 {
    let (b1, b2, eps) = (0.9f64, 0.99f64, 1e-8);
    let (mut m, mut v) = (0.0, 0.0);
    for (t, g) in gs.iter().enumerate() {
        let t = t as i32 + 1;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        p -= lr * mh / (vh.sqrt() + eps);
    }
    p
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut store = scalar_store(0.3);
    let mut adam = Adam::new(&store);
    adam.update(&mut store, &grads(0.0), 0.1).unwrap();
    adam.update(&mut store, &BTreeMap::new(), 0.1).unwrap();
    assert_eq!(store.get("w").unwrap().data(), &[0.3]);
    assert_eq!(adam.step, 2);
}

#[test]
fn adam_matches_scalar_oracle() {
    let mut store = scalar_store(0.0);
    let mut adam = Adam::new(&store);
    adam.update(&mut store, &grads(1.0), 0.1).unwrap();
    let one = store.get("w").unwrap().data()[0];
    assert!((one - adam_oracle(0.0, &[1.0], 0.1)).abs() < 1e-8);
    assert!((one + 0.1).abs() < 1e-8);
    adam.update(&mut store, &grads(1.0), 0.1).unwrap();
    let two = store.get("w").unwrap().data()[0];
    assert!((two - adam_oracle(0.0, &[1.0, 1.0], 0.1)).abs() < 1e-8);
    let seq = [0.3, -1.2, 0.7, 2.0, -0.1];
    let mut store = scalar_store(1.0);
    let mut adam = Adam::new(&store);
    for g in seq {
        adam.update(&mut store, &grads(g), 0.01).unwrap();
    }
    assert!((store.get("w").unwrap().data()[0] - adam_oracle(1.0, &seq, 0.01)).abs() < 1e-12);
}

#[test]
fn adam_rejects_shape_mismatch() {
    let mut store = scalar_store(0.0);
    let mut adam = Adam::new(&store);
    let bad = BTreeMap::from([("w".to_string(), Tensor::<f64>::zeros([2]))]);
    assert!(adam.update(&mut store, &bad, 0.1).is_err());
    let unknown = BTreeMap::from([("q".to_string(), Tensor::<f64>::zeros([1]))]);
    assert!(adam.update(&mut store, &unknown, 0.1).is_err());
    assert_eq!(adam.step, 0);
}

#[test]
fn reference_schedule_values() {
    let s = Schedule::reference(Phase::Scratch);
    assert_eq!(s.lr_at(0), 2e-4);
    assert_eq!(s.lr_at(249_999), 2e-4);
    assert_eq!(s.lr_at(250_000), 1e-4);
    assert_eq!(s.lr_at(400_000), 5e-5);
    assert_eq!(s.lr_at(475_000), 2e-4 / 16.0);
    assert_eq!(s.lr_at(10_000_000), 2e-4 / 16.0);
    let p = Schedule::reference(Phase::Pretrain);
    assert_eq!(p.lr_at(750_000), 2e-4 / 32.0);
    let f = Schedule::reference(Phase::Finetune);
    assert_eq!(f.lr_at(0), 1e-5);
    assert_eq!(f.lr_at(125_000), 5e-6);
}

#[test]
fn rescaled_schedule_keeps_proportions() {
    let s = Schedule::reference(Phase::Scratch).rescaled(1000);
    assert_eq!(s.milestones, vec![500, 800, 900, 950]);
    assert_eq!(s.total_steps, 1000);
    let tiny = Schedule::reference(Phase::Pretrain).rescaled(4);
    assert!(tiny.milestones.windows(2).all(|w| w[0] < w[1]));
    assert!(tiny.validate().is_ok());
    assert!(Schedule::new(1e-3, vec![5, 5], 10).is_err());
    assert!(Schedule::new(1e-3, vec![5, 20], 10).is_err());
    assert!(Schedule::new(0.0, vec![], 10).is_err());
}

#[test]
fn finetune_needs_a_checkpoint_and_starts_low() {
    let model = HatModel::<f64>::new(preset("tiny").unwrap(), 0).unwrap();
    let cfg = TrainConfig::for_phase(Phase::Finetune, 100);
    assert!(matches!(Trainer::new(model.clone(), cfg.clone()), Err(Error::Config(_))));
    let t = Trainer::finetune(&Checkpoint::from_model(&model), cfg).unwrap();
    assert_eq!(t.lr(), 1e-5);
}

fn run_trace(steps: u64) -> Vec<StepRecord> {
    let model = HatModel::<f64>::new(preset("tiny").unwrap(), 1).unwrap();
    let mut t = Trainer::new(model, small_config(40)).unwrap();
    t.run(&small_pairs(2), steps, &mut RunOutputs::default()).unwrap()
}

#[test]
fn seeded_runs_are_identical() {
    let a = run_trace(10);
    let b = run_trace(10);
    assert_eq!(a, b);
    assert_eq!(a.len(), 10);
    assert!(a.iter().all(|r| r.loss.is_finite() && r.loss > 0.0));
}

#[test]
fn split_run_resumes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ck");
    let pairs = small_pairs(3);
    let fresh = || Trainer::new(HatModel::<f64>::new(preset("tiny").unwrap(), 4).unwrap(), small_config(40)).unwrap();

    let whole = fresh().run(&pairs, 20, &mut RunOutputs::default()).unwrap();

    let mut first = fresh();
    let mut out = RunOutputs { checkpoint: Some(path.clone()), ..Default::default() };
    let mut split = first.run(&pairs, 10, &mut out).unwrap();
    let mut resumed = Trainer::<f64>::resume(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(resumed.step, 10);
    split.extend(resumed.run(&pairs, 20, &mut RunOutputs::default()).unwrap());
    assert_eq!(whole, split);
}

#[test]
fn training_checkpoint_roundtrips_bytes() {
    let pairs = small_pairs(5);
    let mut t = Trainer::new(HatModel::<f64>::new(preset("tiny").unwrap(), 5).unwrap(), small_config(40)).unwrap();
    t.run(&pairs, 3, &mut RunOutputs::default()).unwrap();
    let bytes = t.checkpoint().unwrap().encode().unwrap();
    let again = Trainer::<f64>::resume(&Checkpoint::decode(&bytes).unwrap()).unwrap();
    assert_eq!(again.checkpoint().unwrap().encode().unwrap(), bytes);
    assert_eq!(again.optim, t.optim);
}

#[test]
fn loading_into_another_config_names_first_bad_path() {
    let model = HatModel::<f64>::new(preset("tiny").unwrap(), 0).unwrap();
    let ck = Checkpoint::from_model(&model);
    let mut other = preset("tiny").unwrap();
    other.channels = 24;
    other.head_channels = 24;
    let err = ck.model_with(&other).err().unwrap().to_string();
    assert!(err.contains("conv_after_body.bias"), "{err}");
}

#[test]
fn non_finite_loss_aborts_and_keeps_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ck");
    let pairs = small_pairs(6);
    let mut t = Trainer::new(HatModel::<f64>::new(preset("tiny").unwrap(), 6).unwrap(), small_config(40)).unwrap();
    let mut out = RunOutputs { checkpoint: Some(path.clone()), ..Default::default() };
    t.run(&pairs, 2, &mut out).unwrap();
    let saved = std::fs::read(&path).unwrap();
    let bias = t.model.params_mut().get_mut("head.conv_last.bias").unwrap();
    bias.data_mut()[0] = f64::NAN;
    let err = t.run(&pairs, 4, &mut out).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
    assert_eq!(std::fs::read(&path).unwrap(), saved);
    assert_eq!(t.step, 2);
}

#[test]
fn log_lines_and_validation() {
    let pairs = small_pairs(7);
    let mut cfg = small_config(40);
    cfg.val_every = 2;
    let mut t = Trainer::new(HatModel::<f64>::new(preset("tiny").unwrap(), 7).unwrap(), cfg).unwrap();
    let mut log = Vec::new();
    let mut out = RunOutputs { log: Some(&mut log), validation: &pairs[..1], ..Default::default() };
    let recs = t.run(&pairs, 4, &mut out).unwrap();
    let text = String::from_utf8(log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("step=1 lr=0.0002 loss="), "{}", lines[0]);
    assert!(!lines[0].contains("val_psnr"));
    assert!(lines[1].contains(" val_psnr="));
    assert_eq!(lines[3], recs[3].log_line());
    let loss: f64 = lines[2].split("loss=").nth(1).unwrap().parse().unwrap();
    assert_eq!(loss, recs[2].loss);
}

#[test]
fn batches_depend_only_on_seed_and_step() {
    let pairs = small_pairs(8);
    let model = HatModel::<f64>::new(preset("tiny").unwrap(), 8).unwrap();
    let mut a = Trainer::new(model.clone(), small_config(40)).unwrap();
    let b0 = a.batch(&pairs).unwrap();
    assert_eq!(b0.0.shape(), &[2, 3, 8, 8]);
    assert_eq!(b0.1.shape(), &[2, 3, 16, 16]);
    a.step = 5;
    let b5 = a.batch(&pairs).unwrap();
    let mut b = Trainer::new(model, small_config(40)).unwrap();
    b.step = 5;
    assert_eq!(b.batch(&pairs).unwrap(), b5);
    assert_ne!(b0, b5);
}

#[test]
fn optimizer_state_follows_layout() {
    let layout = vec![ParamSpec::new("a", [2, 2], Init::Zeros), ParamSpec::new("b", [3], Init::Ones)];
    let store = ParamStore::<f64>::init(&layout, 0);
    let adam = Adam::new(&store);
    assert_eq!(adam.m.keys().collect::<Vec<_>>(), vec!["a", "b"]);
    assert_eq!(adam.v["a"].shape(), &[2, 2]);
}
