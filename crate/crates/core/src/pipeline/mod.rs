//! End-to-end pipelines: configuration, datasets, model training, alignment
//! by method and dataset-level evaluation, plus the experiment runner.

mod experiment;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

pub use experiment::{
    expand_grid, run_experiment, ExperimentRow, ExperimentTable, GridAxis, GridPoint,
    PipelineRunner, PointRunner, PointStatus, DONE_MARKER,
};

use crate::augment::{
    build_dataset, read_manifest, synthetic_corpus, write_manifest, AugmentConfig, CorpusConfig,
    DatasetBuild, Piece, Split, TripletData,
};
use crate::crnn::{
    load_weights, save_weights, train, write_training_log, Crnn, ModelConfig, TrainConfig,
    TrainOutcome, TrainingExample,
};
use crate::dtw::{align_notes, DtwConfig, WarpPath};
use crate::error::{Error, Result};
use crate::evaluate::{onset_errors, pooled_report, PooledReport};
use crate::features::{
    compute_cqt, compute_mel, log_scale, resample, AudioBuffer, CqtParams, FeatureKind,
    FeatureMatrix, PIPELINE_SAMPLE_RATE,
};
use crate::postprocess::activations_to_notes;
use crate::symbolic::{check_fps, to_piano_roll, NoteSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The unaligned input, unchanged.
    None,
    Dtw,
    #[default]
    Crnn,
    /// DTW first, then the CRNN on the DTW result.
    DtwThenCrnn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::None, Method::Dtw, Method::Crnn, Method::DtwThenCrnn];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Dtw => "dtw",
            Method::Crnn => "crnn",
            Method::DtwThenCrnn => "dtw_then_crnn",
        }
    }

    pub fn uses_crnn(self) -> bool {
        matches!(self, Method::Crnn | Method::DtwThenCrnn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown method '{s}' (expected one of: none, dtw, crnn, dtw_then_crnn)"
                ))
            })
    }
}

/// Magnitude scale of the network's spectrogram input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScale {
    Lin,
    #[default]
    Log,
}

impl FromStr for FeatureScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lin" => Ok(FeatureScale::Lin),
            "log" => Ok(FeatureScale::Log),
            other => Err(Error::config(format!(
                "unknown feature scale '{other}' (expected lin or log)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// `cqt` or `mel`.
    pub kind: FeatureKind,
    pub scale: FeatureScale,
    /// Frame rate shared by features and piano rolls.
    pub fps: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            kind: FeatureKind::Cqt,
            scale: FeatureScale::Log,
            fps: 100,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.kind, FeatureKind::Cqt | FeatureKind::Mel) {
            return Err(Error::config(format!(
                "network features must be cqt or mel, got {:?}",
                self.kind
            )));
        }
        check_fps(self.fps)
    }

    pub fn hop(&self) -> usize {
        (PIPELINE_SAMPLE_RATE / self.fps) as usize
    }
}

/// Spectrogram input of the network at the configured frame rate.
pub fn extract_features(audio: &AudioBuffer, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let audio = resample(audio, PIPELINE_SAMPLE_RATE)?;
    let feat = match cfg.kind {
        FeatureKind::Mel => compute_mel(&audio, cfg.hop())?,
        _ => compute_cqt(
            &audio,
            &CqtParams {
                hop: cfg.hop(),
                ..Default::default()
            },
        )?,
    };
    match cfg.scale {
        FeatureScale::Lin => Ok(feat),
        FeatureScale::Log => log_scale(&feat),
    }
}

/// Synthetic corpus and how many of its pieces go to validation and test.
/// The last `test_pieces` pieces are the test split, the `valid_pieces`
/// before them the validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub corpus: CorpusConfig,
    pub valid_pieces: usize,
    pub test_pieces: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            corpus: CorpusConfig::default(),
            valid_pieces: 1,
            test_pieces: 2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.corpus.pieces < self.valid_pieces + self.test_pieces + 1 {
            return Err(Error::config(format!(
                "{} pieces cannot hold {} validation and {} test pieces plus training data",
                self.corpus.pieces, self.valid_pieces, self.test_pieces
            )));
        }
        Ok(())
    }

    fn split_of(&self, index: usize) -> Split {
        let n = self.corpus.pieces;
        if index >= n - self.test_pieces {
            Split::Test
        } else if index >= n - self.test_pieces - self.valid_pieces {
            Split::Valid
        } else {
            Split::Train
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Dataset manifest; synthesized when absent.
    pub dataset: Option<PathBuf>,
    /// CRNN weights for the `crnn` method.
    pub weights: Option<PathBuf>,
    /// CRNN weights trained on DTW-prealigned input.
    pub dtw_weights: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub method: Method,
    /// When set, overrides the seeds of every stochastic component.
    pub seed: Option<u64>,
    pub features: FeatureConfig,
    pub synth: SynthConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dtw: DtwConfig,
    /// Activation threshold of the postprocessing.
    pub threshold: f64,
    /// Train a separate model on DTW-prealigned input for `dtw_then_crnn`
    /// instead of reusing the `crnn` model.
    pub retrain_for_dtw: bool,
    /// Dataset split that alignment and evaluation run on.
    pub eval_split: Split,
    pub paths: Paths,
    /// Experiment axes; ignored outside `run_experiment`.
    pub grid: Vec<GridAxis>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            method: Method::default(),
            seed: None,
            features: FeatureConfig::default(),
            synth: SynthConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            dtw: DtwConfig::default(),
            threshold: 0.5,
            retrain_for_dtw: true,
            eval_split: Split::Test,
            paths: Paths::default(),
            grid: Vec::new(),
        }
    }
}

impl PipelineConfig {
    /// Parses a JSON config; missing fields take their defaults and a
    /// `seed` field is threaded through.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: PipelineConfig = serde_json::from_str(text)?;
        if let Some(seed) = cfg.seed {
            cfg.set_seed(seed);
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Seeds corpus generation, augmentation and training from one value.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synth.corpus.seed = seed;
        self.augment.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.synth.validate()?;
        self.augment.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.dtw.cost.validate()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Whether `dtw_then_crnn` uses a model trained on DTW output.
    fn dedicated_dtw_model(&self) -> bool {
        self.method == Method::DtwThenCrnn && self.retrain_for_dtw
    }
}

/// Stored next to a manifest: the augmentation that produced it.
pub const AUGMENT_FILE: &str = "augment.json";

fn finish_build(
    build: &mut DatasetBuild,
    split_of: impl Fn(&str) -> Split,
    augment: &AugmentConfig,
    dir: &Path,
) -> Result<()> {
    for t in &mut build.triplets {
        let stem = t
            .audio
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let piece = stem.rsplit_once("_s").map_or(stem, |(p, _)| p);
        t.split = split_of(piece);
    }
    write_manifest(&build.triplets, &dir.join(crate::augment::MANIFEST_FILE))?;
    let path = dir.join(AUGMENT_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(augment)?).map_err(|e| Error::io(path, e))
}

/// Renders a synthetic corpus and builds a split dataset from it.
pub fn synthesize_dataset(
    synth: &SynthConfig,
    augment: &AugmentConfig,
    out_dir: &Path,
) -> Result<DatasetBuild> {
    synth.validate()?;
    let pieces = synthetic_corpus(&synth.corpus)?;
    let splits: HashMap<String, Split> = pieces
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.clone(), synth.split_of(i)))
        .collect();
    let mut build = build_dataset(&pieces, augment, out_dir)?;
    finish_build(
        &mut build,
        |p| splits.get(p).copied().unwrap_or(Split::Train),
        augment,
        out_dir,
    )?;
    Ok(build)
}

/// Draws new unaligned versions of every triplet in a manifest, keeping
/// audio, aligned MIDI and splits.
pub fn reaugment_dataset(
    manifest: &Path,
    augment: &AugmentConfig,
    out_dir: &Path,
) -> Result<DatasetBuild> {
    let root = manifest.parent().unwrap_or(Path::new("."));
    let triplets = read_manifest(manifest)?;
    let mut splits = HashMap::new();
    let mut pieces = Vec::with_capacity(triplets.len());
    for t in &triplets {
        let name = t
            .audio
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::config(format!("bad audio path {}", t.audio.display())))?
            .to_string();
        let data = t.load(root)?;
        splits.insert(name.clone(), t.split);
        pieces.push(Piece {
            name,
            group: t.group.clone(),
            audio: data.audio,
            notes: data.aligned,
        });
    }
    // one segment per existing triplet
    let longest = pieces
        .iter()
        .map(|p| p.audio.duration())
        .fold(0.0, f64::max);
    let cfg = AugmentConfig {
        segment_len: longest + 1.0,
        ..augment.clone()
    };
    let mut build = build_dataset(&pieces, &cfg, out_dir)?;
    finish_build(
        &mut build,
        |p| splits.get(p).copied().unwrap_or(Split::Train),
        augment,
        out_dir,
    )?;
    Ok(build)
}

/// A triplet read into memory with its name and split.
#[derive(Debug, Clone)]
pub struct LoadedTriplet {
    pub name: String,
    pub split: Split,
    pub data: TripletData,
}

/// Loads the triplets of a manifest, optionally only one split.
pub fn load_dataset(manifest: &Path, split: Option<Split>) -> Result<Vec<LoadedTriplet>> {
    let root = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .into_iter()
        .filter(|t| split.is_none_or(|s| s == t.split))
        .map(|t| {
            let name = t
                .audio
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(LoadedTriplet {
                name,
                split: t.split,
                data: t.load(root)?,
            })
        })
        .collect()
}

fn pad_rows(a: Array2<f64>, n: usize) -> Array2<f64> {
    if a.nrows() == n {
        return a;
    }
    let mut out = Array2::zeros((n, a.ncols()));
    out.slice_mut(s![..a.nrows(), ..]).assign(&a);
    out
}

/// Piano roll of `input` and spectrogram of `audio`, zero-padded to a
/// common length.
pub fn model_inputs(
    input: &NoteSequence,
    audio: &AudioBuffer,
    cfg: &FeatureConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let roll = to_piano_roll(input, cfg.fps)?.to_f64();
    let feat = extract_features(audio, cfg)?.values;
    let n = roll.nrows().max(feat.nrows()).max(1);
    Ok((pad_rows(roll, n), pad_rows(feat, n)))
}

pub fn make_example(
    input: &NoteSequence,
    aligned: &NoteSequence,
    audio: &AudioBuffer,
    cfg: &FeatureConfig,
) -> Result<TrainingExample> {
    let (roll, feat) = model_inputs(input, audio, cfg)?;
    let target = to_piano_roll(aligned, cfg.fps)?.to_f64();
    let n = roll.nrows().max(target.nrows());
    TrainingExample::new(pad_rows(roll, n), pad_rows(feat, n), pad_rows(target, n))
}

/// Runs the network on `input` against `audio` and moves each input note
/// to its detected position.
pub fn refine_with_crnn(
    model: &Crnn,
    input: &NoteSequence,
    audio: &AudioBuffer,
    cfg: &FeatureConfig,
    threshold: f64,
) -> Result<NoteSequence> {
    let (roll, feat) = model_inputs(input, audio, cfg)?;
    let act = model.infer(&roll, &feat)?;
    activations_to_notes(&act, cfg.fps, threshold, input)
}

/// Trained networks available to [`run_align`].
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub crnn: Option<Crnn>,
    /// Network trained on DTW-prealigned input.
    pub dtw_crnn: Option<Crnn>,
}

impl Models {
    /// Loads the weight files named in the config; each file carries its
    /// own model configuration.
    pub fn load(paths: &Paths) -> Result<Self> {
        let load = |p: &Option<PathBuf>| -> Result<Option<Crnn>> {
            p.as_deref()
                .map(|p| load_weights(p)?.into_model(None))
                .transpose()
        };
        Ok(Models {
            crnn: load(&paths.weights)?,
            dtw_crnn: load(&paths.dtw_weights)?,
        })
    }

    fn for_method(&self, cfg: &PipelineConfig) -> Result<&Crnn> {
        let (model, field) = if cfg.dedicated_dtw_model() {
            (self.dtw_crnn.as_ref(), "paths.dtw_weights")
        } else {
            (self.crnn.as_ref(), "paths.weights")
        };
        model.ok_or_else(|| {
            Error::config(format!(
                "method {} needs trained weights ({field} is not set)",
                cfg.method
            ))
        })
    }
}

/// Aligns `unaligned` to `audio` with the configured method, returning the
/// DTW path when one was computed.
pub fn align_sequence(
    cfg: &PipelineConfig,
    unaligned: &NoteSequence,
    audio: &AudioBuffer,
    models: &Models,
) -> Result<(NoteSequence, Option<WarpPath>)> {
    match cfg.method {
        Method::None => Ok((unaligned.clone(), None)),
        Method::Dtw => {
            let (seq, path) = align_notes(unaligned, audio, &cfg.dtw)?;
            Ok((seq, Some(path)))
        }
        Method::Crnn => {
            let model = models.for_method(cfg)?;
            let seq = refine_with_crnn(model, unaligned, audio, &cfg.features, cfg.threshold)?;
            Ok((seq, None))
        }
        Method::DtwThenCrnn => {
            let model = models.for_method(cfg)?;
            let (pre, path) = align_notes(unaligned, audio, &cfg.dtw)?;
            let seq = refine_with_crnn(model, &pre, audio, &cfg.features, cfg.threshold)?;
            Ok((seq, Some(path)))
        }
    }
}

/// Estimated alignment of the triplet's unaligned MIDI.
pub fn run_align(
    cfg: &PipelineConfig,
    data: &TripletData,
    models: &Models,
) -> Result<NoteSequence> {
    Ok(align_sequence(cfg, &data.unaligned, &data.audio, models)?.0)
}

/// Training examples from the unaligned MIDI, or from its DTW alignment
/// when `prealign` is set.
pub fn build_examples(
    cfg: &PipelineConfig,
    triplets: &[&LoadedTriplet],
    prealign: bool,
) -> Result<Vec<TrainingExample>> {
    triplets
        .iter()
        .map(|t| {
            let d = &t.data;
            let input = if prealign {
                align_notes(&d.unaligned, &d.audio, &cfg.dtw)?.0
            } else {
                d.unaligned.clone()
            };
            make_example(&input, &d.aligned, &d.audio, &cfg.features)
        })
        .collect()
}

/// Trains on the train split with early stopping on the valid split.
pub fn train_model(
    cfg: &PipelineConfig,
    dataset: &[LoadedTriplet],
    prealign: bool,
) -> Result<TrainOutcome> {
    let pick = |s: Split| dataset.iter().filter(|t| t.split == s).collect::<Vec<_>>();
    let (train_set, valid_set) = (pick(Split::Train), pick(Split::Valid));
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::config(
            "dataset needs non-empty train and valid splits",
        ));
    }
    log::info!(
        "training on {} examples, validating on {}{}",
        train_set.len(),
        valid_set.len(),
        if prealign {
            " (DTW-prealigned input)"
        } else {
            ""
        }
    );
    let train_examples = build_examples(cfg, &train_set, prealign)?;
    let valid_examples = build_examples(cfg, &valid_set, prealign)?;
    train(&cfg.model, &cfg.train, &train_examples, &valid_examples)
}

/// Aligns every triplet with the configured method and pools onset errors
/// against the aligned MIDI.
pub fn evaluate_method(
    cfg: &PipelineConfig,
    triplets: &[LoadedTriplet],
    models: &Models,
) -> Result<PooledReport> {
    let pieces = triplets
        .iter()
        .map(|t| {
            let est = run_align(cfg, &t.data, models)?;
            Ok((t.name.clone(), onset_errors(&est, &t.data.aligned)?))
        })
        .collect::<Result<Vec<_>>>()?;
    pooled_report(&pieces)
}

/// JSON report file. `generated_at` (Unix seconds) is the only field that
/// differs between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub generated_at: u64,
    pub method: String,
    pub report: PooledReport,
}

pub fn write_report(path: &Path, method: &str, report: &PooledReport) -> Result<()> {
    let file = ReportFile {
        generated_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        method: method.to_string(),
        report: report.clone(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn stored_augment(manifest: &Path) -> Option<AugmentConfig> {
    let path = manifest.parent()?.join(AUGMENT_FILE);
    serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()
}

/// Manifest matching the config's augmentation: the configured dataset
/// when it was built with the same settings, otherwise a dataset derived
/// into `cache_dir` (reused by later calls with equal settings).
pub fn resolve_dataset(cfg: &PipelineConfig, cache_dir: &Path) -> Result<PathBuf> {
    let manifest_in = |dir: &Path| dir.join(crate::augment::MANIFEST_FILE);
    let cached = |dir: &Path, build: &dyn Fn(&Path) -> Result<DatasetBuild>| -> Result<PathBuf> {
        let marker = dir.join(DONE_MARKER);
        if !marker.exists() {
            let built = build(dir)?;
            for (name, e) in &built.failures {
                log::warn!("dataset item {name} failed: {e}");
            }
            std::fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
        }
        Ok(manifest_in(dir))
    };
    match &cfg.paths.dataset {
        Some(manifest) => {
            let same = match stored_augment(manifest) {
                Some(stored) => stored == cfg.augment,
                None => read_manifest(manifest)?
                    .iter()
                    .all(|t| t.max_dev == cfg.augment.max_dev),
            };
            if same {
                return Ok(manifest.clone());
            }
            let key = fnv1a(&format!(
                "{}{}",
                manifest.display(),
                serde_json::to_string(&cfg.augment)?
            ));
            let dir = cache_dir.join(format!("reaugmented-{key:016x}"));
            log::info!(
                "re-augmenting {} into {}",
                manifest.display(),
                dir.display()
            );
            cached(&dir, &|d| reaugment_dataset(manifest, &cfg.augment, d))
        }
        None => {
            let key = fnv1a(&serde_json::to_string(&(&cfg.synth, &cfg.augment))?);
            let dir = cache_dir.join(format!("synthetic-{key:016x}"));
            cached(&dir, &|d| synthesize_dataset(&cfg.synth, &cfg.augment, d))
        }
    }
}

/// Dataset preparation, training of the networks the method needs and
/// evaluation on the evaluation split. Weights, training logs and
/// `report.json` are written to `work_dir`; datasets go to `cache_dir`.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    work_dir: &Path,
    cache_dir: &Path,
) -> Result<PooledReport> {
    cfg.validate()?;
    std::fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
    let manifest = resolve_dataset(cfg, cache_dir)?;
    let dataset = load_dataset(&manifest, None)?;
    let mut models = Models::load(&cfg.paths)?;
    let fit = |prealign: bool, name: &str| -> Result<Crnn> {
        let outcome = train_model(cfg, &dataset, prealign)?;
        save_weights(&outcome.model, &work_dir.join(format!("{name}.weights")))?;
        write_training_log(&outcome.log, &work_dir.join(format!("{name}.log.csv")))?;
        Ok(outcome.model)
    };
    if cfg.method.uses_crnn() {
        if cfg.dedicated_dtw_model() {
            if models.dtw_crnn.is_none() {
                models.dtw_crnn = Some(fit(true, "dtw_crnn")?);
            }
        } else if models.crnn.is_none() {
            models.crnn = Some(fit(false, "crnn")?);
        }
    }
    let test: Vec<LoadedTriplet> = dataset
        .into_iter()
        .filter(|t| t.split == cfg.eval_split)
        .collect();
    if test.is_empty() {
        return Err(Error::config(format!(
            "dataset has no {:?} triplets",
            cfg.eval_split
        )));
    }
    let report = evaluate_method(cfg, &test, &models)?;
    write_report(&work_dir.join("report.json"), cfg.method.name(), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests;
