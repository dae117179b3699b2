use std::cell::Cell;

use serde_json::json;

use super::*;
use crate::augment::scale_tempo;
use crate::evaluate::{accuracy_report, AlignmentReport};
use crate::features::render_notes_to_audio;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.synth.corpus.pieces = 4;
    cfg.synth.corpus.duration = 8.0;
    cfg.synth.valid_pieces = 1;
    cfg.synth.test_pieces = 1;
    cfg.augment.segment_len = 4.0;
    cfg.model = ModelConfig {
        conv_filters: [2, 2, 4],
        dense_embed: 8,
        rnn_hidden: 4,
        dropout: 0.0,
        ..Default::default()
    };
    cfg.train = TrainConfig {
        max_epochs: 2,
        min_epochs: 1,
        ..Default::default()
    };
    cfg
}

fn triplet() -> TripletData {
    let notes: Vec<(u8, f64, f64)> = (0..12)
        .map(|k| {
            (
                50 + (k * 7 % 19) as u8,
                0.3 + 0.5 * k as f64,
                0.7 + 0.5 * k as f64,
            )
        })
        .collect();
    let aligned = NoteSequence::from_tuples(&notes, 6.5).unwrap();
    TripletData {
        audio: render_notes_to_audio(&aligned, 16_000),
        unaligned: scale_tempo(&aligned, 1.1).unwrap(),
        aligned,
    }
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
        assert_eq!(serde_json::to_value(m).unwrap(), json!(m.name()));
    }
    let err = "fastdtw".parse::<Method>().unwrap_err().to_string();
    for name in ["none", "dtw", "crnn", "dtw_then_crnn"] {
        assert!(err.contains(name), "{err}");
    }
    assert!("db".parse::<FeatureScale>().is_err());
}

#[test]
fn partial_json_keeps_defaults_and_threads_seed() {
    let cfg = PipelineConfig::from_json(r#"{"method": "dtw", "seed": 7, "features": {"fps": 50}}"#)
        .unwrap();
    assert_eq!(cfg.method, Method::Dtw);
    assert_eq!(cfg.features.fps, 50);
    assert_eq!(cfg.features.kind, FeatureKind::Cqt);
    assert_eq!(
        (cfg.augment.seed, cfg.train.seed, cfg.synth.corpus.seed),
        (7, 7, 7)
    );
    assert_eq!(cfg.model, ModelConfig::default());
    assert!(PipelineConfig::from_json(r#"{"methd": "dtw"}"#).is_err());
    let back = PipelineConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn validation_rejects_bad_settings() {
    let mut cfg = PipelineConfig::default();
    cfg.features.fps = 30;
    assert!(cfg.validate().is_err());
    let mut cfg = PipelineConfig::default();
    cfg.features.kind = FeatureKind::Chroma;
    assert!(cfg.validate().is_err());
    let mut cfg = PipelineConfig::default();
    cfg.threshold = 1.0;
    assert!(cfg.validate().is_err());
    assert!(PipelineConfig::default().validate().is_ok());
}

#[test]
fn features_follow_frame_rate() {
    let audio = AudioBuffer::silence(16_000, 16_000);
    for (fps, n) in [(25, 25), (100, 100), (200, 200)] {
        let cfg = FeatureConfig {
            fps,
            ..Default::default()
        };
        assert_eq!(extract_features(&audio, &cfg).unwrap().n_frames(), n);
    }
    let mel = FeatureConfig {
        kind: FeatureKind::Mel,
        scale: FeatureScale::Lin,
        fps: 50,
    };
    assert_eq!(
        extract_features(&audio, &mel).unwrap().kind,
        FeatureKind::Mel
    );
}

#[test]
fn none_is_identity_and_crnn_needs_weights() {
    let data = triplet();
    let mut cfg = PipelineConfig {
        method: Method::None,
        ..Default::default()
    };
    assert_eq!(
        run_align(&cfg, &data, &Models::default()).unwrap(),
        data.unaligned
    );
    for m in [Method::Crnn, Method::DtwThenCrnn] {
        cfg.method = m;
        let err = run_align(&cfg, &data, &Models::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}

#[test]
fn dtw_beats_passthrough_on_tempo_change() {
    let data = triplet();
    let mean = |m: Method| {
        let cfg = PipelineConfig {
            method: m,
            ..Default::default()
        };
        let est = run_align(&cfg, &data, &Models::default()).unwrap();
        accuracy_report(&onset_errors(&est, &data.aligned).unwrap())
            .unwrap()
            .mean
    };
    assert!(mean(Method::Dtw) < mean(Method::None));
}

#[test]
fn dtw_then_crnn_reuses_the_plain_model_when_not_retraining() {
    let data = triplet();
    let model = Crnn::new(small_config().model, 1).unwrap();
    let models = Models {
        crnn: Some(model),
        dtw_crnn: None,
    };
    let mut cfg = PipelineConfig {
        method: Method::DtwThenCrnn,
        retrain_for_dtw: false,
        ..Default::default()
    };
    let out = run_align(&cfg, &data, &models).unwrap();
    assert_eq!(out.len(), data.unaligned.len());
    cfg.retrain_for_dtw = true;
    assert!(run_align(&cfg, &data, &models).is_err());
}

#[test]
fn examples_share_one_length() {
    let data = triplet();
    let ex = make_example(
        &data.unaligned,
        &data.aligned,
        &data.audio,
        &FeatureConfig::default(),
    )
    .unwrap();
    let expected = [
        (data.unaligned.duration() * 100.0).ceil() as usize,
        (data.aligned.duration() * 100.0).ceil() as usize,
        data.audio.len().div_ceil(160),
    ]
    .into_iter()
    .max()
    .unwrap();
    assert_eq!(ex.n_frames(), expected);
}

#[test]
fn grid_is_a_cartesian_product() {
    let mut base = PipelineConfig::default();
    base.grid = vec![
        GridAxis {
            key: "features.fps".into(),
            values: vec![json!(100), json!(25)],
        },
        GridAxis {
            key: "model.rnn_cell".into(),
            values: vec![json!("gru"), json!("lstm"), json!("gru")],
        },
    ];
    let points = expand_grid(&base, &base.grid).unwrap();
    assert_eq!(points.len(), 6);
    assert_eq!(points[0].label(), "features.fps=100,model.rnn_cell=gru");
    assert_eq!(points[4].config.features.fps, 25);
    assert_eq!(points[4].config.model.rnn_cell, crate::crnn::RnnCell::Lstm);
    assert!(points.iter().all(|p| p.config.grid.is_empty()));

    let bad = [GridAxis {
        key: "features.fsp".into(),
        values: vec![json!(1)],
    }];
    assert!(expand_grid(&base, &bad).is_err());
    let invalid = [GridAxis {
        key: "features.fps".into(),
        values: vec![json!(30)],
    }];
    assert!(expand_grid(&base, &invalid).is_err());
    assert_eq!(expand_grid(&base, &[]).unwrap().len(), 1);
}

#[test]
fn seed_axis_is_threaded() {
    let mut base = PipelineConfig::default();
    base.set_seed(1);
    let axes = [GridAxis {
        key: "seed".into(),
        values: vec![json!(5)],
    }];
    let p = &expand_grid(&base, &axes).unwrap()[0];
    assert_eq!((p.config.train.seed, p.config.augment.seed), (5, 5));
}

fn fake_report(mean: f64) -> AlignmentReport {
    accuracy_report(&[(crate::symbolic::NoteId(0), mean)]).unwrap()
}

#[test]
fn experiment_resumes_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = PipelineConfig::default();
    base.grid = vec![GridAxis {
        key: "augment.max_dev".into(),
        values: vec![json!(0.05), json!(0.1), json!(0.15)],
    }];
    let calls = Cell::new(0);
    // killed while running point 2
    let mut crashing = |p: &GridPoint, _: &Path| -> Result<AlignmentReport> {
        calls.set(calls.get() + 1);
        if p.index == 2 {
            return Err(Error::config("interrupted"));
        }
        Ok(fake_report(p.config.augment.max_dev / 10.0))
    };
    let table = run_experiment(&base, dir.path(), None, &mut crashing).unwrap();
    assert_eq!(calls.get(), 3);
    assert_eq!(table.rows[2].status, PointStatus::Failed);
    assert!(table.rows[2]
        .error
        .as_deref()
        .unwrap()
        .contains("interrupted"));
    assert!(!dir.path().join("point_002").join(DONE_MARKER).exists());

    let seen = std::cell::RefCell::new(Vec::new());
    let mut resumed = |p: &GridPoint, _: &Path| -> Result<AlignmentReport> {
        seen.borrow_mut().push(p.index);
        Ok(fake_report(0.015))
    };
    let table = run_experiment(&base, dir.path(), None, &mut resumed).unwrap();
    assert_eq!(*seen.borrow(), vec![2]);
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows.iter().all(|r| r.status == PointStatus::Ok));
    assert!((table.rows[0].metrics.as_ref().unwrap().mean_ms - 5.0).abs() < 1e-9);

    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("point,augment.max_dev,status,mean_ms"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn single_point_selection() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = PipelineConfig::default();
    base.grid = vec![GridAxis {
        key: "features.fps".into(),
        values: vec![json!(100), json!(25)],
    }];
    let mut runner = |_: &GridPoint, _: &Path| Ok(fake_report(0.01));
    let table = run_experiment(&base, dir.path(), Some(1), &mut runner).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].settings["features.fps"], json!(25));
    assert!(run_experiment(&base, dir.path(), Some(5), &mut runner).is_err());
    let table = run_experiment(&base, dir.path(), None, &mut runner).unwrap();
    assert_eq!(
        table.rows.iter().map(|r| r.index).collect::<Vec<_>>(),
        vec![0, 1]
    );
}

#[test]
fn synthetic_dataset_has_all_splits_and_reaugments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let manifest = resolve_dataset(&cfg, dir.path()).unwrap();
    let data = load_dataset(&manifest, None).unwrap();
    for s in [Split::Train, Split::Valid, Split::Test] {
        assert!(data.iter().any(|t| t.split == s), "{s:?} missing");
    }
    // cached on the second call
    let again = resolve_dataset(&cfg, dir.path()).unwrap();
    assert_eq!(again, manifest);

    let mut other = cfg.clone();
    other.paths.dataset = Some(manifest.clone());
    assert_eq!(resolve_dataset(&other, dir.path()).unwrap(), manifest);
    other.augment.max_dev = 0.0;
    let fresh = resolve_dataset(&other, dir.path()).unwrap();
    assert_ne!(fresh, manifest);
    let re = load_dataset(&fresh, None).unwrap();
    assert_eq!(re.len(), data.len());
    for (a, b) in data.iter().zip(&re) {
        assert_eq!(a.split, b.split);
        assert_eq!(a.data.aligned, b.data.aligned);
        assert_eq!(b.data.unaligned.notes().len(), b.data.aligned.len());
        for (x, y) in b.data.unaligned.notes().iter().zip(b.data.aligned.notes()) {
            assert!((x.onset - y.onset).abs() < 1e-9);
        }
    }
}

#[test]
fn pipeline_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        method: Method::Crnn,
        ..small_config()
    };
    let strip = |p: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("generated_at");
        v
    };
    let a = run_pipeline(&cfg, &dir.path().join("a"), dir.path()).unwrap();
    let b = run_pipeline(&cfg, &dir.path().join("b"), dir.path()).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        strip(&dir.path().join("a/report.json")),
        strip(&dir.path().join("b/report.json"))
    );
    assert!(dir.path().join("a/crnn.weights").exists());
    assert!(dir.path().join("a/crnn.log.csv").exists());
}
