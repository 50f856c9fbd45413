use retinode::data::{fit_normalizer, generate_synthetic, make_windows, RecordingSet, Split, SynthConfig};
use retinode::eval::predict_windows;
use retinode::model::ModelKind;
use retinode::sequence::SequencePlan;
use retinode::train::{curves_csv, forward_eval, preset, train, Checkpoint, CheckpointTag, TrainConfig, ValidateEvery};

fn data() -> RecordingSet {
    generate_synthetic(&SynthConfig {
        t: 500,
        n: 2,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn tiny(kind: ModelKind) -> TrainConfig {
    let mut cfg = preset("desk").unwrap();
    cfg.model = kind;
    cfg.plan = SequencePlan::new(1, 5, 0).unwrap();
    cfg.encoder.channels = vec![4, 4];
    cfg.encoder.kernel = 3;
    cfg.encoder.pooled_blocks = 1;
    cfg.latent_size = 8;
    cfg.hidden_size = 8;
    cfg.convnet.filters = vec![4, 4];
    cfg.batch_size = 64;
    cfg.micro_batch = 32;
    cfg.eval_batch = 64;
    cfg.max_epochs = 2;
    cfg.seed = 5;
    cfg
}

#[test]
fn two_epoch_run_emits_two_rows_per_split() {
    let rec = data();
    for kind in ModelKind::ALL {
        let out = train(&tiny(kind), &rec).unwrap();
        assert_eq!(out.epochs_run, 2, "{kind}");
        assert!(out.diverged.is_none());
        for split in [Split::Train, Split::Validation] {
            assert_eq!(out.curves.iter().filter(|r| r.split == split).count(), 2, "{kind}");
        }
        let csv = curves_csv(&out.curves);
        assert!(csv.starts_with("epoch,split,loss,rho\n"));
        assert_eq!(csv.lines().count(), 5);
        assert!(out.best.val_rho() >= out.last.val_rho());
        assert_eq!(out.best.tag, CheckpointTag::Best);
        assert_eq!(out.last.tag, CheckpointTag::Last);
    }
}

#[test]
fn identical_seed_gives_identical_checkpoints() {
    let rec = data();
    let cfg = tiny(ModelKind::Cfc);
    let a = train(&cfg, &rec).unwrap();
    let b = train(&cfg, &rec).unwrap();
    assert_eq!(a.last.to_bytes(), b.last.to_bytes());
    assert_eq!(a.best.to_bytes(), b.best.to_bytes());
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(train(&other, &rec).unwrap().last.params, a.last.params);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let rec = data();
    let cfg = tiny(ModelKind::Ltc);
    let out = train(&cfg, &rec).unwrap();
    let dir = std::env::temp_dir().join(format!("retinode-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("best.rgck");
    out.best.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(loaded, out.best);

    let windows = make_windows(&rec, &cfg.plan, rec.range(Split::Validation)).unwrap();
    let norm = &loaded.meta.normalizer;
    let a = predict_windows(&out.best.model().unwrap(), &rec, &windows, norm, 16).unwrap();
    let b = predict_windows(&loaded.model().unwrap(), &rec, &windows, norm, 64).unwrap();
    assert_eq!(a, b);

    let (_, preds) = forward_eval(&loaded.model().unwrap(), &cfg, &rec, &windows, norm).unwrap();
    assert_eq!(preds.scores().unwrap().rho(), loaded.val_rho());
    assert_eq!(loaded.optimizer().m, out.best.m);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let rec = data();
    let out = train(&tiny(ModelKind::ConvNet), &rec).unwrap();
    let bytes = out.last.to_bytes();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad).is_err());
    let mut extra = bytes;
    extra.push(0);
    assert!(Checkpoint::from_bytes(&extra).is_err());
}

#[test]
fn small_lr_preset_validates_every_1024_samples() {
    let cfg = preset("small-lr").unwrap();
    assert_eq!(cfg.model, ModelKind::Ltc);
    assert_eq!(cfg.predictor_lr, 1e-6);
    assert_eq!(cfg.validate_every, ValidateEvery::Samples(1024));

    // same schedule on a set large enough for several validation points
    let rec = generate_synthetic(&SynthConfig {
        t: 3000,
        n: 2,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut small = tiny(ModelKind::Ltc);
    small.predictor_lr = cfg.predictor_lr;
    small.validate_every = cfg.validate_every;
    small.max_epochs = cfg.max_epochs;
    small.patience = cfg.patience;
    small.batch_size = 256;
    let out = train(&small, &rec).unwrap();
    let windows = rec.range(Split::Train).len() - 5;
    // one point per full 1,024-sample chunk plus the trailing remainder
    assert_eq!(out.history.len(), windows.div_ceil(1024));
    assert!(out.history.windows(2).all(|w| w[1].samples_seen - w[0].samples_seen <= 1024));
    assert_eq!(out.history[0].samples_seen, 1024);
}

#[test]
fn metrics_use_denormalised_predictions() {
    let rec = data();
    let cfg = tiny(ModelKind::Cfc);
    let out = train(&cfg, &rec).unwrap();
    let norm = fit_normalizer(&rec, rec.range(Split::Train)).unwrap();
    // rates span well beyond [0, 1], so normalisation is not the identity
    assert!(norm.max.iter().any(|&m| m > 2.0));
    let windows = make_windows(&rec, &cfg.plan, rec.range(Split::Test)).unwrap();
    let model = out.best.model().unwrap();
    let preds = predict_windows(&model, &rec, &windows, &norm, 32).unwrap();
    let idx: Vec<usize> = (0..windows.len()).collect();
    let raw = model.predict(&windows.batch_frames(&rec, &idx)).unwrap();
    assert_eq!(preds.pred, norm.denormalize(&raw));
    assert_eq!(preds.target, windows.batch_targets(&rec, &idx, None));
    let mae_denorm = retinode::eval::mae(&preds.pred, &preds.target).unwrap();
    let mae_norm = retinode::eval::mae(&raw, &windows.batch_targets(&rec, &idx, Some(&norm))).unwrap();
    assert_ne!(mae_denorm, mae_norm);
    assert!(preds.pred.iter().all(|&v| v >= 0.0));
}
