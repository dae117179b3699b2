use std::path::{Path, PathBuf};

use pianosync_core::augment::{read_manifest, DatasetBuild, Split};
use pianosync_core::crnn::{save_weights, write_training_log};
use pianosync_core::evaluate::{compare_methods, onset_errors, pooled_report, PooledReport};
use pianosync_core::features::read_wav;
use pianosync_core::pipeline::{
    align_sequence, expand_grid, extract_features, load_dataset, reaugment_dataset, run_experiment,
    synthesize_dataset, train_model, write_report, Models, PipelineRunner, PointStatus,
};
use pianosync_core::symbolic::{parse_midi, write_midi};
use pianosync_core::PipelineConfig;

use crate::{
    AlignArgs, AugmentArgs, AugmentFlags, EvaluateArgs, ExperimentArgs, Failure, FeatureFlags,
    FeaturesArgs, SynthArgs, TrainArgs,
};

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn validated(cfg: PipelineConfig) -> Result<PipelineConfig, Failure> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn apply_augment(cfg: &mut PipelineConfig, f: &AugmentFlags) {
    if let Some(v) = f.max_dev {
        cfg.augment.max_dev = v;
    }
    if let Some(v) = f.max_tempo_factor {
        cfg.augment.max_tempo_factor = v;
    }
    if let Some(v) = f.segment_len {
        cfg.augment.segment_len = v;
    }
}

fn apply_features(cfg: &mut PipelineConfig, f: &FeatureFlags) {
    if let Some(v) = f.kind {
        cfg.features.kind = v;
    }
    if let Some(v) = f.scale {
        cfg.features.scale = v;
    }
    if let Some(v) = f.fps {
        cfg.features.fps = v;
    }
}

fn dataset_path(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.paths.dataset.clone())
        .ok_or_else(|| usage("no dataset given: pass --manifest or set paths.dataset"))
}

fn report_build(build: &DatasetBuild, out: &Path) {
    let count = |s: Split| build.triplets.iter().filter(|t| t.split == s).count();
    println!(
        "wrote {} triplets (train {}, valid {}, test {}) to {}",
        build.triplets.len(),
        count(Split::Train),
        count(Split::Valid),
        count(Split::Test),
        out.join(pianosync_core::augment::MANIFEST_FILE).display()
    );
    for (name, e) in &build.failures {
        eprintln!("warning: {name} skipped: {e}");
    }
}

pub fn synth(mut cfg: PipelineConfig, a: SynthArgs) -> Result<(), Failure> {
    let corpus = &mut cfg.synth.corpus;
    if let Some(v) = a.pieces {
        corpus.pieces = v;
    }
    if let Some(v) = a.duration {
        corpus.duration = v;
    }
    if let Some(v) = a.valid_pieces {
        cfg.synth.valid_pieces = v;
    }
    if let Some(v) = a.test_pieces {
        cfg.synth.test_pieces = v;
    }
    apply_augment(&mut cfg, &a.augment);
    let cfg = validated(cfg)?;
    let build = synthesize_dataset(&cfg.synth, &cfg.augment, &a.out)?;
    report_build(&build, &a.out);
    Ok(())
}

pub fn augment(mut cfg: PipelineConfig, a: AugmentArgs) -> Result<(), Failure> {
    apply_augment(&mut cfg, &a.augment);
    let cfg = validated(cfg)?;
    let build = reaugment_dataset(&a.manifest, &cfg.augment, &a.out)?;
    report_build(&build, &a.out);
    Ok(())
}

pub fn features(mut cfg: PipelineConfig, a: FeaturesArgs) -> Result<(), Failure> {
    apply_features(&mut cfg, &a.features);
    cfg.features.validate().map_err(|e| usage(e.to_string()))?;
    let audio = read_wav(&a.audio)?;
    let feat = extract_features(&audio, &cfg.features)?;
    let mut w = csv::Writer::from_path(&a.out).map_err(pianosync_core::Error::from)?;
    let header: Vec<String> = (0..feat.values.ncols())
        .map(|k| format!("bin{k}"))
        .collect();
    w.write_record(&header)
        .map_err(pianosync_core::Error::from)?;
    for row in feat.values.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(pianosync_core::Error::from)?;
    }
    w.flush()
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", a.out.display())))?;
    println!(
        "{} frames x {} bins at {} fps",
        feat.n_frames(),
        feat.values.ncols(),
        feat.fps
    );
    Ok(())
}

pub fn train(mut cfg: PipelineConfig, a: TrainArgs) -> Result<(), Failure> {
    let manifest = dataset_path(a.manifest, &cfg)?;
    let t = &mut cfg.train;
    if let Some(v) = a.max_epochs {
        t.max_epochs = v;
        t.min_epochs = t.min_epochs.min(v);
    }
    if let Some(v) = a.min_epochs {
        t.min_epochs = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.cell {
        cfg.model.rnn_cell = v;
    }
    if a.blind {
        cfg.model.blind_transcription = true;
    }
    apply_features(&mut cfg, &a.features);
    let cfg = validated(cfg)?;
    let dataset = load_dataset(&manifest, None)?;
    let outcome = train_model(&cfg, &dataset, a.prealign)?;
    save_weights(&outcome.model, &a.out)?;
    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("log.csv"));
    write_training_log(&outcome.log, &log_path)?;
    let best = &outcome.log[outcome.best_epoch - 1];
    println!(
        "best epoch {} of {} (valid loss {:.5}); weights in {}",
        outcome.best_epoch,
        outcome.log.len(),
        best.valid_loss,
        a.out.display()
    );
    Ok(())
}

pub fn align(mut cfg: PipelineConfig, a: AlignArgs) -> Result<(), Failure> {
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(w) = a.weights {
        cfg.paths.weights = Some(w);
    }
    if let Some(w) = a.dtw_weights {
        cfg.paths.dtw_weights = Some(w);
    }
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    apply_features(&mut cfg, &a.features);
    let cfg = validated(cfg)?;
    if cfg.method.uses_crnn() && cfg.paths.weights.is_none() && cfg.paths.dtw_weights.is_none() {
        return Err(usage(format!(
            "method {} needs --weights or --dtw-weights",
            cfg.method
        )));
    }
    let models = Models::load(&cfg.paths)?;

    if let (Some(midi), Some(audio)) = (&a.midi, &a.audio) {
        let unaligned = parse_midi(midi)?;
        let audio = read_wav(audio)?;
        let (est, path) = align_sequence(&cfg, &unaligned, &audio, &models)?;
        write_midi(&est, &a.out)?;
        if let (Some(csv), Some(path)) = (&a.path_csv, &path) {
            path.write_csv(csv)?;
        }
        println!("aligned {} notes into {}", est.len(), a.out.display());
        return Ok(());
    }

    let manifest = dataset_path(a.manifest, &cfg)?;
    let split = a.split.unwrap_or(cfg.eval_split);
    let triplets = load_dataset(&manifest, Some(split))?;
    create_dir(&a.out)?;
    if let Some(dir) = &a.path_csv {
        create_dir(dir)?;
    }
    for t in &triplets {
        let (est, path) = align_sequence(&cfg, &t.data.unaligned, &t.data.audio, &models)?;
        write_midi(&est, a.out.join(format!("{}.est.mid", t.name)))?;
        if let (Some(dir), Some(path)) = (&a.path_csv, &path) {
            path.write_csv(&dir.join(format!("{}.path.csv", t.name)))?;
        }
    }
    println!(
        "aligned {} triplets with {} into {}",
        triplets.len(),
        cfg.method,
        a.out.display()
    );
    Ok(())
}

fn print_summary(label: &str, report: &PooledReport) -> Result<(), Failure> {
    let table = compare_methods(&[(label.to_string(), report.pooled.clone())])?;
    print!("{}", table.to_csv()?);
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let report = if let (Some(est), Some(reference)) = (&a.est, &a.reference) {
        let errors = onset_errors(&parse_midi(est)?, &parse_midi(reference)?)?;
        let name = est
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        pooled_report(&[(name, errors)])?
    } else if let (Some(manifest), Some(dir)) = (&a.manifest, &a.estimates) {
        let root = manifest.parent().unwrap_or(Path::new("."));
        let split = a.split.unwrap_or(Split::Test);
        let mut pieces = Vec::new();
        for t in read_manifest(manifest)?
            .into_iter()
            .filter(|t| t.split == split)
        {
            let name = t
                .audio
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let reference = parse_midi(root.join(&t.aligned_midi))?;
            let est = parse_midi(dir.join(format!("{name}.est.mid")))?;
            pieces.push((name, onset_errors(&est, &reference)?));
        }
        if pieces.is_empty() {
            return Err(Failure::Runtime(format!(
                "manifest has no {split:?} triplets"
            )));
        }
        pooled_report(&pieces)?
    } else {
        return Err(usage(
            "pass --est with --reference, or --manifest with --estimates",
        ));
    };
    write_report(&a.out, &a.label, &report)?;
    if let Some(csv) = &a.csv {
        compare_methods(&[(a.label.clone(), report.pooled.clone())])?.write(Some(csv), None)?;
    }
    print_summary(&a.label, &report)
}

pub fn experiment(cfg: PipelineConfig, a: ExperimentArgs) -> Result<(), Failure> {
    let out = a
        .out
        .or_else(|| cfg.paths.output.clone())
        .ok_or_else(|| usage("no output directory: pass --out or set paths.output"))?;
    let cfg = validated(cfg)?;
    let points = expand_grid(&cfg, &cfg.grid).map_err(|e| usage(e.to_string()))?;
    if let Some(p) = a.point.filter(|&p| p >= points.len()) {
        return Err(usage(format!(
            "grid has {} points, no point {p}",
            points.len()
        )));
    }
    let mut runner = PipelineRunner {
        cache_dir: out.join("datasets"),
    };
    let table = run_experiment(&cfg, &out, a.point, &mut runner)?;
    print!("{}", table.to_csv()?);
    let failed = table
        .rows
        .iter()
        .filter(|r| r.status == PointStatus::Failed)
        .count();
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} of {} grid points failed; see {}",
            table.rows.len(),
            out.join("results.csv").display()
        )));
    }
    Ok(())
}
