use super::*;
use ndarray::Array2;
use rand::Rng;

fn mini(cell: RnnCell) -> ModelConfig {
    ModelConfig {
        conv_filters: [2, 2, 4],
        dense_embed: 8,
        rnn_hidden: 4,
        rnn_cell: cell,
        dropout: 0.0,
        ..Default::default()
    }
}

fn random_inputs(batch: usize, n: usize, seed: u64) -> (Array3<f64>, Array3<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roll =
        Array3::from_shape_simple_fn((batch, n, 88), || (rng.random::<f64>() < 0.2) as u8 as f64);
    let feat = Array3::from_shape_simple_fn((batch, n, 88), || rng.random_range(0.0..2.0));
    let target =
        Array2::from_shape_simple_fn((batch * n, 88), || (rng.random::<f64>() < 0.3) as u8 as f64);
    (roll, feat, target)
}

fn randomize_buffers(model: &mut Crnn, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.buffers_mut().tensors_mut() {
        let var = t.name.ends_with("running_var");
        t.value.mapv_inplace(|_| {
            if var {
                rng.random_range(0.5..2.0)
            } else {
                rng.random_range(-0.3..0.3)
            }
        });
    }
}

fn loss_of(
    model: &Crnn,
    roll: &Array3<f64>,
    feat: &Array3<f64>,
    target: &Array2<f64>,
    batch_stats: bool,
) -> f64 {
    let mut mode = Mode {
        batch_stats,
        dropout: None,
    };
    let (logits, _) = model.forward(roll, feat, &mut mode).unwrap();
    bce_with_logits(&logits, target, None).0
}

/// Largest per-tensor relative error between analytic and central
/// finite-difference gradients.
fn gradient_check(
    cfg: ModelConfig,
    batch: usize,
    batch_stats: bool,
    seed: u64,
) -> Vec<(String, f64)> {
    let mut model = Crnn::new(cfg, seed).unwrap();
    randomize_buffers(&mut model, seed + 1);
    let (roll, feat, target) = random_inputs(batch, 6, seed + 2);
    let mut mode = Mode {
        batch_stats,
        dropout: None,
    };
    let (logits, cache) = model.forward(&roll, &feat, &mut mode).unwrap();
    let (_, dlogits) = bce_with_logits(&logits, &target, None);
    let grads = model.backward(&cache, &dlogits);
    // small enough that steps rarely cross a ReLU or max-pool kink
    let h = 1e-6;
    let mut report = Vec::new();
    for ti in 0..model.params().len() {
        let len = model.params().tensors()[ti].value.len();
        let mut num = Vec::with_capacity(len);
        for k in 0..len {
            let orig = model.params().tensors()[ti].value.as_slice().unwrap()[k];
            let set = |v: f64, m: &mut Crnn| {
                m.params_mut().tensors_mut()[ti]
                    .value
                    .as_slice_mut()
                    .unwrap()[k] = v
            };
            set(orig + h, &mut model);
            let up = loss_of(&model, &roll, &feat, &target, batch_stats);
            set(orig - h, &mut model);
            let down = loss_of(&model, &roll, &feat, &target, batch_stats);
            set(orig, &mut model);
            num.push((up - down) / (2.0 * h));
        }
        let ana = grads.tensors()[ti].value.as_slice().unwrap();
        let diff: f64 = ana
            .iter()
            .zip(&num)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = ana
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(num.iter().map(|a| a * a).sum::<f64>().sqrt());
        let rel = if scale < 1e-10 { diff } else { diff / scale };

        report.push((model.params().tensors()[ti].name.clone(), rel));
    }
    report
}

#[test]
fn gradients_match_finite_differences_lstm() {
    for (name, rel) in gradient_check(mini(RnnCell::Lstm), 1, false, 11) {
        assert!(rel <= 1e-3, "{name}: {rel}");
    }
}

#[test]
fn gradients_match_finite_differences_gru_unidirectional() {
    let cfg = ModelConfig {
        bidirectional: false,
        ..mini(RnnCell::Gru)
    };
    for (name, rel) in gradient_check(cfg, 1, false, 12) {
        assert!(rel <= 1e-3, "{name}: {rel}");
    }
}

#[test]
fn gradients_match_with_batch_statistics() {
    for (name, rel) in gradient_check(mini(RnnCell::Lstm), 2, true, 13) {
        assert!(rel <= 1e-3, "{name}: {rel}");
    }
}

#[test]
fn gradients_with_wider_kernel() {
    let cfg = ModelConfig {
        kernel: [5, 3],
        ..mini(RnnCell::Gru)
    };
    for (name, rel) in gradient_check(cfg, 1, false, 14) {
        assert!(rel <= 1e-3, "{name}: {rel}");
    }
}

#[test]
fn parameter_count_fixture() {
    // closed form for the default model:
    // branch: conv 9*1*16+16+32, 9*16*16+16+32, 9*16*32+32+64, dense 704*256+256
    let branch = (144 + 48) + (2304 + 48) + (4608 + 96) + (704 * 256 + 256);
    let lstm_dir = 4 * 256 * (512 + 256) + 4 * 256;
    let head = 512 * 88 + 88;
    let expected = 2 * branch + 2 * lstm_dir + head;
    let cfg = ModelConfig::default();
    assert_eq!(cfg.parameter_count(), expected);
    assert_eq!(Crnn::new(cfg, 0).unwrap().params().count(), expected);
    for cfg in [
        mini(RnnCell::Gru),
        mini(RnnCell::Lstm),
        ModelConfig {
            bidirectional: false,
            ..mini(RnnCell::Gru)
        },
    ] {
        assert_eq!(
            Crnn::new(cfg.clone(), 0).unwrap().params().count(),
            cfg.parameter_count()
        );
    }
    assert_eq!(cfg_sizes(), (512, 512));
}

fn cfg_sizes() -> (usize, usize) {
    let c = ModelConfig::default();
    (c.embedding_size(), c.rnn_output_size())
}

#[test]
fn output_shape_and_range() {
    let model = Crnn::new(mini(RnnCell::Lstm), 3).unwrap();
    let (roll, feat, _) = random_inputs(1, 200, 4);
    let out = model
        .infer(
            &roll.index_axis(ndarray::Axis(0), 0).to_owned(),
            &feat.index_axis(ndarray::Axis(0), 0).to_owned(),
        )
        .unwrap();
    assert_eq!(out.dim(), (200, 88));
    assert!(out.iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn mismatched_inputs_rejected() {
    let model = Crnn::new(mini(RnnCell::Lstm), 3).unwrap();
    assert!(model
        .infer(&Array2::zeros((10, 88)), &Array2::zeros((11, 88)))
        .is_err());
    assert!(model
        .infer(&Array2::zeros((10, 80)), &Array2::zeros((10, 80)))
        .is_err());
}

#[test]
fn blind_transcription_ignores_roll() {
    let cfg = ModelConfig {
        blind_transcription: true,
        ..mini(RnnCell::Lstm)
    };
    let model = Crnn::new(cfg, 5).unwrap();
    let (roll, feat, _) = random_inputs(1, 30, 6);
    let f = feat.index_axis(ndarray::Axis(0), 0).to_owned();
    let a = model
        .infer(&roll.index_axis(ndarray::Axis(0), 0).to_owned(), &f)
        .unwrap();
    let b = model.infer(&Array2::zeros((30, 88)), &f).unwrap();
    assert_eq!(a, b);
}

#[test]
fn duplicated_batch_rows_agree_in_eval_mode() {
    let model = Crnn::new(mini(RnnCell::Gru), 7).unwrap();
    let (roll, feat, _) = random_inputs(1, 20, 8);
    let r2 = ndarray::concatenate(ndarray::Axis(0), &[roll.view(), roll.view()]).unwrap();
    let f2 = ndarray::concatenate(ndarray::Axis(0), &[feat.view(), feat.view()]).unwrap();
    let (logits, _) = model.forward(&r2, &f2, &mut Mode::eval()).unwrap();
    assert_eq!(logits.slice(s![..20, ..]), logits.slice(s![20.., ..]));
    let single = model.forward(&roll, &feat, &mut Mode::eval()).unwrap().0;
    assert_eq!(single, logits.slice(s![..20, ..]));
}

#[test]
fn embeddings_shift_with_inputs() {
    let mut model = Crnn::new(mini(RnnCell::Lstm), 9).unwrap();
    randomize_buffers(&mut model, 10);
    let (roll, feat, _) = random_inputs(1, 40, 11);
    let (r, f) = (
        roll.index_axis(ndarray::Axis(0), 0).to_owned(),
        feat.index_axis(ndarray::Axis(0), 0).to_owned(),
    );
    let k = 5;
    let shift = |m: &Array2<f64>| {
        let mut out = Array2::zeros(m.raw_dim());
        out.slice_mut(s![k.., ..])
            .assign(&m.slice(s![..40 - k, ..]));
        out
    };
    let e = model.embed(&r, &f).unwrap();
    let es = model.embed(&shift(&r), &shift(&f)).unwrap();
    // three stacked 3-frame convolutions see one frame per layer beyond
    for t in k + 3..40 - 3 {
        for c in 0..e.ncols() {
            assert!((es[[t, c]] - e[[t - k, c]]).abs() < 1e-12, "frame {t}");
        }
    }
}

#[test]
fn weights_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = Crnn::new(mini(RnnCell::Lstm), 12).unwrap();
    randomize_buffers(&mut model, 13);
    let path = dir.path().join("w.bin");
    save_weights(&model, &path).unwrap();
    let loaded = load_weights(&path)
        .unwrap()
        .into_model(Some(model.config()))
        .unwrap();
    assert_eq!(loaded, model);
    let (roll, feat, _) = random_inputs(1, 25, 14);
    let (r, f) = (
        roll.index_axis(ndarray::Axis(0), 0).to_owned(),
        feat.index_axis(ndarray::Axis(0), 0).to_owned(),
    );
    assert_eq!(model.infer(&r, &f).unwrap(), loaded.infer(&r, &f).unwrap());
}

#[test]
fn weight_load_errors() {
    let model = Crnn::new(mini(RnnCell::Lstm), 12).unwrap();
    let store = WeightStore::from_model(&model);
    let wrong = ModelConfig {
        rnn_hidden: 5,
        ..mini(RnnCell::Lstm)
    };
    match store.clone().into_model(Some(&wrong)) {
        Err(Error::WeightLoad { field, .. }) => assert_eq!(field, "rnn.fwd.w_ih"),
        other => panic!("unexpected {other:?}"),
    }
    let other_dropout = ModelConfig {
        dropout: 0.3,
        ..mini(RnnCell::Lstm)
    };
    match store.clone().into_model(Some(&other_dropout)) {
        Err(Error::WeightLoad { field, .. }) => assert_eq!(field, "config"),
        other => panic!("unexpected {other:?}"),
    }
    let mut bytes = store.to_bytes().unwrap();
    bytes[8] = 99;
    assert!(matches!(
        WeightStore::from_bytes(&bytes),
        Err(Error::WeightVersion {
            found: 99,
            expected: WEIGHT_FORMAT_VERSION
        })
    ));
    let bytes = store.to_bytes().unwrap();
    match WeightStore::from_bytes(&bytes[..bytes.len() - 3]) {
        Err(Error::WeightLoad { field, .. }) => assert_eq!(
            field,
            "running_var_or_last".replace(
                "running_var_or_last",
                &store.buffers.tensors().last().unwrap().name
            )
        ),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bce_closed_forms() {
    let half = Array2::from_elem((4, 88), 0.5);
    let t = Array2::from_shape_fn((4, 88), |(i, k)| ((i + k) % 2) as f64);
    assert!((bce_loss(&half, &t).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    let exact = bce_loss(&t, &t).unwrap();
    assert!(
        (exact - 1.0000000494736474e-7).abs() < 1e-12 || exact < 1.7e-6,
        "{exact}"
    );
    assert!(exact >= 0.0);
    assert!(bce_loss(&half, &Array2::zeros((3, 88))).is_err());
    let (l, _) = bce_with_logits(&Array2::zeros((4, 88)), &t, None);
    assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
}

fn toy_examples(count: usize, n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut target = Array2::zeros((n, 88));
            let mut input = Array2::zeros((n, 88));
            let mut feat = Array2::zeros((n, 88));
            let mut t = 2;
            while t + 6 < n {
                let p = rng.random_range(30..60);
                let len = rng.random_range(3..6);
                let shift = rng.random_range(-2i64..=2) as isize;
                for f in t..t + len {
                    target[[f, p]] = 1.0;
                    feat[[f, p]] = 1.0;
                    let g = (f as isize + shift).clamp(0, n as isize - 1) as usize;
                    input[[g, p]] = 1.0;
                }
                t += len + 2;
            }
            TrainingExample::new(input, feat, target).unwrap()
        })
        .collect()
}

#[test]
fn overfits_two_short_examples() {
    let data = toy_examples(2, 40, 21);
    let cfg = ModelConfig {
        conv_filters: [8, 8, 16],
        dense_embed: 32,
        rnn_hidden: 32,
        dropout: 0.0,
        ..Default::default()
    };
    let tcfg = TrainConfig {
        max_epochs: 200,
        min_epochs: 200,
        seed: 3,
        ..Default::default()
    };
    let out = train(&cfg, &tcfg, &data, &data).unwrap();
    let last = out.log.last().unwrap();
    assert!(last.train_loss < 0.02, "{last:?}");
    // best checkpoint contract
    let best = crate::crnn::train::evaluation_loss(&out.model, &data).unwrap();
    assert!(out.log.iter().all(|e| best <= e.valid_loss + 1e-12));
    // seen example reproduced
    let pred = out
        .model
        .infer(&data[0].input_roll, &data[0].features)
        .unwrap();
    let active = data[0].target.iter().filter(|&&t| t > 0.5).count();
    let hit = pred
        .iter()
        .zip(&data[0].target)
        .filter(|(&p, &t)| t > 0.5 && p >= 0.5)
        .count();
    assert!(hit as f64 >= 0.9 * active as f64);
}

#[test]
fn training_is_deterministic_and_logged() {
    let data = toy_examples(4, 30, 22);
    let tcfg = TrainConfig {
        batch_size: 2,
        max_epochs: 2,
        min_epochs: 1,
        seed: 4,
        sequence_crop: 20,
        ..Default::default()
    };
    let cfg = ModelConfig {
        dropout: 0.5,
        ..mini(RnnCell::Lstm)
    };
    let a = train(&cfg, &tcfg, &data[..3], &data[3..]).unwrap();
    let b = train(&cfg, &tcfg, &data[..3], &data[3..]).unwrap();
    assert_eq!(a.log[0].train_loss, b.log[0].train_loss);
    assert_eq!(a.model, b.model);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    write_training_log(&a.log, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("epoch,train_loss,valid_loss\n"));
    assert_eq!(text.lines().count(), a.log.len() + 1);
    assert!(train(&cfg, &tcfg, &data, &[]).is_err());
    let bad = TrainConfig {
        min_epochs: 5,
        max_epochs: 2,
        ..tcfg
    };
    assert!(train(&cfg, &bad, &data, &data).is_err());
}

#[test]
fn divergence_names_the_epoch() {
    let mut data = toy_examples(2, 20, 23);
    data[0].target[[3, 3]] = f64::NAN;
    let tcfg = TrainConfig {
        batch_size: 2,
        max_epochs: 3,
        min_epochs: 1,
        ..Default::default()
    };
    match train(&mini(RnnCell::Lstm), &tcfg, &data, &data) {
        Err(Error::Diverged { epoch: 1, .. }) => {}
        other => panic!("unexpected {:?}", other.map(|o| o.log)),
    }
}
