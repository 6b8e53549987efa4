use andikit::network::{
    activation_header, confidence_by_alpha, evaluate, export_activations, train, Checkpoint, Classifier,
    EarlyStopping, Model, ModelConfig, TrainingMeta, TrainingSpec, Verdict, CHECKPOINT_MAGIC,
};
use andikit::trajgen::{build_dataset, Dataset, DatasetSpec, LengthLaw, Mechanism, Trajectory, NUM_CLASSES};
use andikit::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config(len: usize) -> ModelConfig {
    ModelConfig::scaled(len, 0.125)
}

fn dataset(per_class: usize, len: usize, seed: u64) -> Dataset {
    build_dataset(&DatasetSpec::balanced(per_class, LengthLaw::Fixed(len), seed)).unwrap()
}

/// Returns the true label with certainty.
struct Oracle;

impl Classifier for Oracle {
    fn predict_proba(&self, ts: &[Trajectory]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        Ok(ts
            .iter()
            .map(|t| {
                let mut p = [0.0; NUM_CLASSES];
                p[t.label.index()] = 1.0;
                p
            })
            .collect())
    }
}

/// Picks a class uniformly at random from a fixed stream.
struct Coin(u64);

impl Classifier for Coin {
    fn predict_proba(&self, ts: &[Trajectory]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        Ok(ts
            .iter()
            .map(|_| {
                let mut p = [0.0; NUM_CLASSES];
                p[rng.random_range(0..NUM_CLASSES)] = 1.0;
                p
            })
            .collect())
    }
}

#[test]
fn full_scale_final_map_is_512_by_32() {
    let cfg = ModelConfig::full_scale();
    assert_eq!(cfg.stage_lengths().unwrap(), vec![500, 250, 125, 63, 32]);
    let model = Model::<f32>::new(ModelConfig { base_channels: vec![4, 4, 4, 512], ..cfg }, 0).unwrap();
    let out = model.forward_classify(&vec![0.5; 2000]).unwrap();
    assert_eq!(out.final_conv.shape(), &[512, 32]);
    assert_eq!(out.stage_pooled[3].len(), 512);
}

#[test]
fn desk_scale_lengths() {
    let cfg = ModelConfig::scaled(200, 0.5);
    assert_eq!(cfg.stage_lengths().unwrap(), vec![100, 50, 25, 13, 7]);
    assert_eq!(cfg.channels(), vec![32, 64, 128, 256]);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(matches!(Model::<f32>::new(ModelConfig::scaled(0, 1.0), 0), Err(Error::InvalidConfig(_))));
    assert!(matches!(
        Model::<f32>::new(ModelConfig { block_padding: 3, ..ModelConfig::full_scale() }, 0),
        Err(Error::InvalidConfig(_))
    ));
    let m = Model::<f32>::new(tiny_config(64), 0).unwrap();
    assert!(matches!(m.forward_classify(&[0.0; 10]), Err(Error::Shape(_))));
}

#[test]
fn probabilities_sum_to_one_in_f64() {
    let model = Model::<f64>::new(tiny_config(64), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let x: Vec<f64> = (0..128).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = model.forward_classify(&x).unwrap().probabilities;
        assert!(p.iter().all(|&v| v > 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

/// One random input per freshly initialized model: by class symmetry of the
/// initialization the averaged probabilities approach 1/8.
#[test]
fn fresh_models_are_uniform_on_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mean = [0.0; NUM_CLASSES];
    for seed in 0..1000 {
        let model = Model::<f32>::new(ModelConfig::scaled(200, 0.125), seed).unwrap();
        let x: Vec<f32> = (0..400).map(|_| rng.random::<f32>()).collect();
        let p = model.forward_classify(&x).unwrap().probabilities;
        for (m, v) in mean.iter_mut().zip(&p) {
            *m += v / 1000.0;
        }
    }
    for m in mean {
        assert!((m - 0.125).abs() <= 0.05, "{mean:?}");
    }
}

#[test]
fn oracle_and_chance_predictors() {
    let ds = dataset(20, 50, 5);
    let e = evaluate(&Oracle, &ds).unwrap();
    assert_eq!(e.accuracy, 1.0);
    for i in 0..NUM_CLASSES {
        for j in 0..NUM_CLASSES {
            assert_eq!(e.confusion[i][j], if i == j { 1.0 } else { 0.0 });
        }
    }
    let big = Dataset::new(ds.iter().cycle().take(16_000).cloned().collect());
    let e = evaluate(&Coin(6), &big).unwrap();
    // 8 classes x 2000 draws: sd of the mean hit rate ~ 0.0026
    assert!((e.accuracy - 0.125).abs() < 0.01, "{}", e.accuracy);
    for row in &e.confusion {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(matches!(evaluate(&Oracle, &Dataset::new(vec![])), Err(Error::EmptyDataset(_))));
}

#[test]
fn absent_classes_do_not_count_toward_accuracy() {
    let ds = dataset(5, 50, 7);
    let only_bm = Dataset::new(ds.iter().filter(|t| t.label == Mechanism::Bm).cloned().collect());
    let e = evaluate(&Oracle, &only_bm).unwrap();
    assert_eq!(e.accuracy, 1.0);
    assert_eq!(e.support[Mechanism::Bm.index()], 5);
    assert!(e.confusion[0].iter().all(|&v| v == 0.0));
}

#[test]
fn confidence_bins() {
    let ds = dataset(30, 50, 8);
    let bins = confidence_by_alpha(&Oracle, &ds, 10).unwrap();
    for (class, row) in bins.iter().enumerate() {
        for bin in row {
            if let Some(p) = bin.mean_probabilities {
                assert_eq!(p[class], 1.0);
            }
        }
    }
    let bm: Vec<_> = bins[Mechanism::Bm.index()].iter().filter(|b| b.count > 0).collect();
    assert_eq!(bm.len(), 1);
    assert!(bm[0].alpha_lo <= 1.0 && 1.0 < bm[0].alpha_hi);
    assert!(bins[Mechanism::Bm.index()][0].mean_probabilities.is_none());
    assert!(confidence_by_alpha(&Oracle, &ds, 0).is_err());
}

#[test]
fn lr_halves_every_ten_epochs() {
    let spec = TrainingSpec::default();
    assert_eq!(spec.lr_at(9), 1e-4);
    assert_eq!(spec.lr_at(10), 5e-5);
    assert_eq!(spec.lr_at(25), 2.5e-5);
}

#[test]
fn early_stop_fires_on_the_tenth_stalled_epoch() {
    let mut s = EarlyStopping::new(10);
    assert_eq!(s.observe(1.0), Verdict::Improved);
    for _ in 0..9 {
        assert_eq!(s.observe(1.0), Verdict::Stalled);
    }
    assert_eq!(s.observe(1.5), Verdict::Stop);
    let mut s = EarlyStopping::new(10);
    s.observe(1.0);
    for _ in 0..9 {
        s.observe(2.0);
    }
    assert_eq!(s.observe(0.5), Verdict::Improved);
}

#[test]
fn training_memorizes_a_tiny_set_and_is_deterministic() {
    let ds = dataset(8, 64, 9);
    let spec = TrainingSpec {
        learning_rate: 3e-3,
        batch_size: 16,
        max_epochs: 60,
        patience: 60,
        seed: 10,
        ..TrainingSpec::default()
    };
    let run = || train(Model::<f32>::new(tiny_config(64), 11).unwrap(), &ds, &ds, &spec).unwrap();
    let out = run();
    let last = out.history.last().unwrap();
    let best_train = out.history.iter().map(|r| r.train_accuracy).fold(0.0, f64::max);
    assert_eq!(best_train, 1.0, "{last:?}");
    assert_eq!(evaluate(&out.model, &ds).unwrap().accuracy, 1.0);
    let again = run();
    assert_eq!(out.history, again.history);
    assert_eq!(
        Checkpoint { model: out.model, meta: Some(out.meta) }.to_bytes().unwrap(),
        Checkpoint { model: again.model, meta: Some(again.meta) }.to_bytes().unwrap()
    );
}

#[test]
fn training_rejects_empty_sets() {
    let ds = dataset(1, 64, 12);
    let m = || Model::<f32>::new(tiny_config(64), 0).unwrap();
    let empty = Dataset::new(vec![]);
    assert!(matches!(train(m(), &empty, &ds, &TrainingSpec::default()), Err(Error::EmptyDataset(_))));
    assert!(matches!(train(m(), &ds, &empty, &TrainingSpec::default()), Err(Error::EmptyDataset(_))));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let ds = dataset(4, 64, 13);
    let spec = TrainingSpec { max_epochs: 2, batch_size: 8, seed: 14, ..TrainingSpec::default() };
    let out = train(Model::<f32>::new(tiny_config(64), 15).unwrap(), &ds, &ds, &spec).unwrap();
    let ckpt = Checkpoint { model: out.model, meta: Some(out.meta.clone()) };
    let bytes = ckpt.to_bytes().unwrap();
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    let back = Checkpoint::read(bytes.as_slice()).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back.meta, Some(out.meta));
    assert_eq!(back.model.params(), ckpt.model.params());
    assert_eq!(back.model.running_stats(), ckpt.model.running_stats());
    assert_eq!(
        ckpt.model.predict_proba(&ds.trajectories).unwrap(),
        back.model.predict_proba(&ds.trajectories).unwrap()
    );
    assert_eq!(evaluate(&ckpt.model, &ds).unwrap(), evaluate(&back.model, &ds).unwrap());
    let names: Vec<String> = ckpt.manifest().into_iter().map(|e| e.name).collect();
    assert!(names.contains(&"stem.weight".to_string()));
    assert!(names.contains(&"stem.bn.running_var".to_string()));
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let ckpt = Checkpoint { model: Model::new(tiny_config(64), 0).unwrap(), meta: None::<TrainingMeta> };
    let bytes = ckpt.to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::read(bad.as_slice()), Err(Error::Format { .. })));
    assert!(Checkpoint::read(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn activation_export_records() {
    let ds = dataset(2, 64, 16);
    let model = Model::<f32>::new(tiny_config(64), 17).unwrap();
    let mut buf = Vec::new();
    assert_eq!(export_activations(&model, &ds, 4, &mut buf).unwrap(), ds.len());
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], activation_header(64));
    assert_eq!(lines.len(), ds.len() + 1);
    assert_eq!(lines[1].split(',').count(), 66);
    assert!(export_activations(&model, &ds, 0, Vec::new()).is_err());
    assert!(export_activations(&model, &ds, 5, Vec::new()).is_err());

    let twin = Dataset::new(vec![ds.trajectories[0].clone(), ds.trajectories[0].clone()]);
    let mut buf = Vec::new();
    export_activations(&model, &twin, 2, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], lines[2]);
}
