//! End-to-end orchestration: run configuration, the artifact directory,
//! and the staged train/predict flow behind the CLI.
//!
//! A run is configured once and the configuration is hashed. Every
//! artifact written under that configuration carries the hash, and a
//! manifest in the artifact directory records which stage produced
//! which file. Stages refuse to consume artifacts produced under a
//! different configuration (stale) and, when an input artifact is
//! missing entirely, name the stage that produces it.

pub mod synth;

pub use synth::{generate_synthetic, SyntheticSpec};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boostrank::{
    feature_importance, fit_gbdt, load_gbdt, random_search, rank_candidates, save_gbdt,
    write_trial_log, GbdtModel, HpoSpace, TreeParams,
};
use crate::corpus::{
    self, build_label_vocab, load_samples, split_dataset, Dataset, LabelVocab, SplitSpec,
};
use crate::encoder::{
    self, load_encoder, predict_topk, save_encoder, EncoderConfig, EncoderModel, TokenIndex,
    TrainMode,
};
use crate::error::{Error, Result};
use crate::featbank::{
    build_feature_matrix, load_feature_bank, save_feature_bank, CandidateSet, FeatbankConfig,
    FeatureBank, FeatureMatrix,
};
use crate::metrics::{self, EvalReport, RankedPrediction, PREDICTION_LEN};
use crate::textprep::{EmojiLexicon, NormalizeConfig, Preprocessor, TokenizedText};
use crate::util::{derive_seed, fnv1a64};
use crate::F;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
/// Format version written into the JSON sidecar artifacts (label
/// vocabulary, training histories, hpo results).
const JSON_ARTIFACT_VERSION: u32 = 1;

/// File names inside the artifact directory.
pub mod files {
    pub const MANIFEST: &str = "manifest.json";
    pub const LOCK: &str = "lock";
    pub const TRAIN_SPLIT: &str = "train.jsonl";
    pub const VAL_SPLIT: &str = "val.jsonl";
    pub const LABELS: &str = "labels.json";
    pub const ENCODER_POINTWISE: &str = "encoder.pointwise.bin";
    pub const ENCODER_PAIRWISE: &str = "encoder.pairwise.bin";
    pub const ENCODER_POINTWISE_HISTORY: &str = "encoder.pointwise.history.jsonl";
    pub const ENCODER_PAIRWISE_HISTORY: &str = "encoder.pairwise.history.jsonl";
    pub const FEATURE_BANK: &str = "featbank.bin";
    pub const TRAIN_FEATURES: &str = "features.train.bin";
    pub const VAL_FEATURES: &str = "features.val.bin";
    pub const RERANKER: &str = "reranker.bin";
    pub const RERANKER_HISTORY: &str = "reranker.history.json";
    pub const RERANKER_IMPORTANCE: &str = "reranker.importance.json";
    pub const PREDICTIONS: &str = "predictions.jsonl";
    pub const HPO_TRIALS: &str = "hpo.trials.jsonl";
    pub const HPO_BEST: &str = "hpo.best.json";
}

/// Stage names as they appear in the manifest and in "run this first"
/// errors. Each is a runnable CLI invocation.
pub mod stages {
    pub const PREPROCESS: &str = "preprocess";
    pub const TRAIN_ENCODER_POINTWISE: &str = "train-encoder --mode pointwise";
    pub const TRAIN_ENCODER_PAIRWISE: &str = "train-encoder --mode pairwise";
    pub const BUILD_FEATURES: &str = "build-features";
    pub const TRAIN_RERANKER: &str = "train-reranker";
    pub const PREDICT: &str = "predict";
    pub const HPO: &str = "hpo";
}

/// Labels fed to [`derive_seed`] so every stage draws from its own
/// stream of the global seed.
mod seeds {
    pub const SPLIT: &str = "preprocess";
    pub const ENCODER_POINTWISE: &str = "encoder-pointwise";
    pub const ENCODER_PAIRWISE: &str = "encoder-pairwise";
    pub const FEATURES: &str = "build-features";
    pub const RERANKER: &str = "train-reranker";
    pub const HPO: &str = "hpo";
}

/// How `predict` scores candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Full cascade: feature bank plus boosted reranker.
    #[default]
    Reranker,
    /// Ablation: rank with the pairwise encoder scores alone.
    Pairwise,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Reranker => "reranker",
            Backend::Pairwise => "pairwise",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reranker" => Ok(Backend::Reranker),
            "pairwise" => Ok(Backend::Pairwise),
            other => Err(Error::invalid(format!(
                "unknown backend {other:?} (expected `reranker` or `pairwise`)"
            ))),
        }
    }
}

/// Input and output locations of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Labeled training data, one JSON sample per line.
    pub train: PathBuf,
    /// Data to rank at `predict` time; labels are optional here.
    pub predict: PathBuf,
    /// Directory that receives every trained artifact.
    pub artifacts: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: PathBuf::from("data/train.jsonl"),
            predict: PathBuf::from("data/predict.jsonl"),
            artifacts: PathBuf::from("artifacts"),
        }
    }
}

/// Full configuration of a pipeline run. Deserializes from JSON where
/// every field is optional; unknown keys are rejected.
///
/// The seed fields nested inside `pointwise`, `pairwise` and `hpo` are
/// ignored by the pipeline stages, which replace them with streams
/// derived from the global `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Fraction of the training data that stays in the training split.
    pub train_fraction: f64,
    /// Candidate scoring used by `predict`.
    pub backend: Backend,
    /// Non-gold candidates sampled per gold label when building the
    /// reranker's training matrix.
    pub reranker_negatives: usize,
    pub data: DataConfig,
    pub normalize: NormalizeConfig,
    /// Encoder trained with the pointwise objective.
    pub pointwise: EncoderConfig,
    /// Encoder trained with the pairwise hinge objective.
    pub pairwise: EncoderConfig,
    pub featbank: FeatbankConfig,
    pub reranker: TreeParams,
    pub hpo: HpoSpace,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            train_fraction: 0.9,
            backend: Backend::default(),
            reranker_negatives: 4,
            data: DataConfig::default(),
            normalize: NormalizeConfig::default(),
            pointwise: EncoderConfig::default(),
            pairwise: EncoderConfig::default(),
            featbank: FeatbankConfig::default(),
            reranker: TreeParams::default(),
            hpo: HpoSpace::default(),
        }
    }
}

/// The configuration fields that influence trained artifact content.
/// The predict input, the artifact directory, the backend choice and
/// the hpo search space are deliberately excluded so they can change
/// without invalidating trained artifacts: none of them feeds a stored
/// model, and `hpo` only reads the stored feature matrices.
#[derive(Serialize)]
struct ArtifactRelevantView<'a> {
    seed: u64,
    train_fraction: f64,
    reranker_negatives: usize,
    train: &'a PathBuf,
    normalize: &'a NormalizeConfig,
    pointwise: &'a EncoderConfig,
    pairwise: &'a EncoderConfig,
    featbank: &'a FeatbankConfig,
    reranker: &'a TreeParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction.is_finite()
            && self.train_fraction > 0.0
            && self.train_fraction < 1.0)
        {
            return Err(Error::config(
                "train_fraction",
                "must lie strictly between 0 and 1",
            ));
        }
        if self.reranker_negatives == 0 {
            return Err(Error::config("reranker_negatives", "must be positive"));
        }
        self.normalize.validate()?;
        self.pointwise.validate_at("pointwise")?;
        self.pairwise.validate_at("pairwise")?;
        self.featbank.validate_at("featbank")?;
        self.reranker.validate_at("reranker")?;
        self.hpo.validate_at("hpo")?;
        Ok(())
    }

    /// Hash of every field that changes what the training stages
    /// produce. Two runs with equal hashes may share artifacts.
    pub fn hash(&self) -> u64 {
        let view = ArtifactRelevantView {
            seed: self.seed,
            train_fraction: self.train_fraction,
            reranker_negatives: self.reranker_negatives,
            train: &self.data.train,
            normalize: &self.normalize,
            pointwise: &self.pointwise,
            pairwise: &self.pairwise,
            featbank: &self.featbank,
            reranker: &self.reranker,
        };
        let text = serde_json::to_string(&view).expect("pipeline config serializes");
        fnv1a64(text.as_bytes())
    }
}

/// Parse and validate a configuration. Errors carry the JSON path of
/// the offending field.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: PipelineConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "<root>".to_string() } else { path };
        Error::config(path, e.inner().to_string())
    })?;
    de.end()
        .map_err(|e| Error::config("<root>", e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Read a configuration file (JSON).
pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::invalid(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    parse_config(&fs::read_to_string(path)?)
}

fn format_hash(hash: u64) -> String {
    format!("{hash:016x}")
}

fn parse_hash(text: &str) -> Result<u64> {
    u64::from_str_radix(text, 16)
        .map_err(|_| Error::invalid(format!("malformed config hash {text:?} in an artifact")))
}

/// Which stage wrote which files, under which configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config_hash: String,
    stages: BTreeMap<String, Vec<String>>,
}

/// Exclusive hold on an artifact directory. The lock file is removed
/// when the guard drops.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// An artifact directory bound to one configuration hash.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
    config_hash: u64,
}

impl ArtifactStore {
    pub fn open(dir: impl Into<PathBuf>, config_hash: u64) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ArtifactStore { dir, config_hash })
    }

    pub fn for_config(config: &PipelineConfig) -> Result<Self> {
        Self::open(&config.data.artifacts, config.hash())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Take the directory lock, failing if another run holds it.
    pub fn lock(&self) -> Result<StoreLock> {
        let path = self.path(files::LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(self.dir.clone()))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn read_manifest(&self) -> Result<Option<Manifest>> {
        let path = self.path(files::MANIFEST);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
            Error::invalid(format!(
                "artifact manifest {} is unreadable ({e}); delete the directory to rebuild",
                path.display()
            ))
        })?;
        if manifest.version != MANIFEST_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "artifact manifest",
                found: manifest.version,
                supported: MANIFEST_FORMAT_VERSION,
            });
        }
        Ok(Some(manifest))
    }

    /// Record that `stage` ran under the current configuration and
    /// wrote `artifacts`. A manifest left by a different configuration
    /// is discarded wholesale: its artifacts are unusable here anyway.
    pub fn record_stage(&self, stage: &str, artifacts: &[&str]) -> Result<()> {
        let mut manifest = match self.read_manifest()? {
            Some(m) if parse_hash(&m.config_hash)? == self.config_hash => m,
            _ => Manifest {
                version: MANIFEST_FORMAT_VERSION,
                config_hash: format_hash(self.config_hash),
                stages: BTreeMap::new(),
            },
        };
        manifest.stages.insert(
            stage.to_string(),
            artifacts.iter().map(|s| s.to_string()).collect(),
        );
        self.write_atomic(files::MANIFEST, |w| {
            let text = serde_json::to_string_pretty(&manifest)
                .map_err(|e| Error::invalid(format!("serializing the manifest: {e}")))?;
            writeln!(w, "{text}")?;
            Ok(())
        })?;
        Ok(())
    }

    /// Path of artifact `name`, verified to exist and to have been
    /// produced by `stage` under the current configuration.
    pub fn require(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let path = self.path(name);
        let missing = |path: PathBuf| Error::MissingArtifact {
            path,
            stage: stage.to_string(),
        };
        let Some(manifest) = self.read_manifest()? else {
            return Err(missing(path));
        };
        let found = parse_hash(&manifest.config_hash)?;
        if found != self.config_hash {
            return Err(Error::StaleArtifact {
                path,
                found,
                expected: self.config_hash,
            });
        }
        let recorded = manifest.stages.values().flatten().any(|f| f == name);
        if !recorded || !path.is_file() {
            return Err(missing(path));
        }
        Ok(path)
    }

    /// Write an artifact through a buffered writer, renaming into place
    /// so an interrupted run never leaves a torn file.
    pub fn write_atomic(
        &self,
        name: &str,
        write: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
    ) -> Result<PathBuf> {
        let path = self.path(name);
        let tmp = self.path(&format!("{name}.tmp"));
        let result = (|| {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            write(&mut w)?;
            w.flush()?;
            Ok(())
        })();
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Compare a hash embedded in an artifact against the current run.
    fn check_embedded_hash(&self, path: &Path, found: u64) -> Result<()> {
        if found != self.config_hash {
            return Err(Error::StaleArtifact {
                path: path.to_path_buf(),
                found,
                expected: self.config_hash,
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LabelsFile {
    version: u32,
    config_hash: String,
    names: Vec<String>,
}

fn preprocessor(config: &PipelineConfig) -> Result<Preprocessor> {
    Preprocessor::new(config.normalize.clone(), EmojiLexicon::bundled())
}

fn load_input(path: &Path, require_labels: bool) -> Result<Dataset> {
    if !path.is_file() {
        return Err(Error::invalid(format!(
            "input data file {} does not exist",
            path.display()
        )));
    }
    load_samples(path, require_labels)
}

fn load_split(store: &ArtifactStore, name: &str) -> Result<Dataset> {
    let path = store.require(name, stages::PREPROCESS)?;
    load_samples(path, true)
}

fn load_labels(store: &ArtifactStore) -> Result<LabelVocab> {
    let path = store.require(files::LABELS, stages::PREPROCESS)?;
    let labels: LabelsFile = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(|e| Error::invalid(format!("label vocabulary {}: {e}", path.display())))?;
    if labels.version != JSON_ARTIFACT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "label vocabulary",
            found: labels.version,
            supported: JSON_ARTIFACT_VERSION,
        });
    }
    store.check_embedded_hash(&path, parse_hash(&labels.config_hash)?)?;
    LabelVocab::from_names(labels.names)
}

fn encoder_artifacts(mode: TrainMode) -> (&'static str, &'static str, &'static str) {
    match mode {
        TrainMode::Pointwise => (
            files::ENCODER_POINTWISE,
            files::ENCODER_POINTWISE_HISTORY,
            stages::TRAIN_ENCODER_POINTWISE,
        ),
        TrainMode::Pairwise => (
            files::ENCODER_PAIRWISE,
            files::ENCODER_PAIRWISE_HISTORY,
            stages::TRAIN_ENCODER_PAIRWISE,
        ),
    }
}

fn load_encoder_artifact(store: &ArtifactStore, mode: TrainMode) -> Result<EncoderModel<F>> {
    let (file, _, stage) = encoder_artifacts(mode);
    let path = store.require(file, stage)?;
    let (model, hash) = load_encoder::<F>(BufReader::new(fs::File::open(&path)?))?;
    store.check_embedded_hash(&path, hash)?;
    Ok(model)
}

fn load_bank_artifact(store: &ArtifactStore) -> Result<FeatureBank<F>> {
    let path = store.require(files::FEATURE_BANK, stages::BUILD_FEATURES)?;
    let (bank, hash) = load_feature_bank::<F>(BufReader::new(fs::File::open(&path)?))?;
    store.check_embedded_hash(&path, hash)?;
    Ok(bank)
}

fn load_matrix_artifact(store: &ArtifactStore, name: &str) -> Result<FeatureMatrix<F>> {
    let path = store.require(name, stages::BUILD_FEATURES)?;
    let (matrix, hash) = FeatureMatrix::<F>::load(BufReader::new(fs::File::open(&path)?))?;
    store.check_embedded_hash(&path, hash)?;
    Ok(matrix)
}

fn load_reranker_artifact(store: &ArtifactStore) -> Result<GbdtModel<F>> {
    let path = store.require(files::RERANKER, stages::TRAIN_RERANKER)?;
    let (model, hash) = load_gbdt::<F>(BufReader::new(fs::File::open(&path)?))?;
    store.check_embedded_hash(&path, hash)?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessSummary {
    pub samples: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub label_count: usize,
}

impl PreprocessSummary {
    pub fn summary(&self) -> String {
        format!(
            "preprocess: split {} samples into {} train / {} validation; {} categories",
            self.samples, self.train_samples, self.val_samples, self.label_count
        )
    }
}

/// Validate the training data, build the label vocabulary, and write
/// the seeded train/validation split.
pub fn stage_preprocess(config: &PipelineConfig) -> Result<PreprocessSummary> {
    config.validate()?;
    let store = ArtifactStore::for_config(config)?;
    let _lock = store.lock()?;
    let dataset = load_input(&config.data.train, true)?;
    let vocab = build_label_vocab(&dataset)?;
    if vocab.len() < PREDICTION_LEN {
        return Err(Error::invalid(format!(
            "the training data has {} distinct categories; ranking a top-{PREDICTION_LEN} needs \
             more than {PREDICTION_LEN}",
            vocab.len()
        )));
    }
    let spec = SplitSpec {
        train_fraction: config.train_fraction,
        seed: derive_seed(config.seed, seeds::SPLIT),
    };
    let (train, val) = split_dataset(&dataset, &spec)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid(format!(
            "splitting {} samples at fraction {} leaves an empty side",
            dataset.len(),
            config.train_fraction
        )));
    }
    store.write_atomic(files::TRAIN_SPLIT, |w| corpus::write_samples(&train, w))?;
    store.write_atomic(files::VAL_SPLIT, |w| corpus::write_samples(&val, w))?;
    let labels = LabelsFile {
        version: JSON_ARTIFACT_VERSION,
        config_hash: format_hash(store.config_hash()),
        names: vocab.names().to_vec(),
    };
    store.write_atomic(files::LABELS, |w| {
        let text = serde_json::to_string_pretty(&labels)
            .map_err(|e| Error::invalid(format!("serializing the label vocabulary: {e}")))?;
        writeln!(w, "{text}")?;
        Ok(())
    })?;
    store.record_stage(
        stages::PREPROCESS,
        &[files::TRAIN_SPLIT, files::VAL_SPLIT, files::LABELS],
    )?;
    Ok(PreprocessSummary {
        samples: dataset.len(),
        train_samples: train.len(),
        val_samples: val.len(),
        label_count: vocab.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSummary {
    pub mode: TrainMode,
    pub epochs_run: usize,
    pub best_val_map: f64,
}

impl EncoderSummary {
    pub fn summary(&self) -> String {
        format!(
            "train-encoder[{}]: {} epochs, best validation MAP@6 {:.4}",
            self.mode, self.epochs_run, self.best_val_map
        )
    }
}

/// Train one of the two pair-scoring encoders on the stored split.
pub fn stage_train_encoder(config: &PipelineConfig, mode: TrainMode) -> Result<EncoderSummary> {
    config.validate()?;
    let store = ArtifactStore::for_config(config)?;
    let _lock = store.lock()?;
    let train = load_split(&store, files::TRAIN_SPLIT)?;
    let val = load_split(&store, files::VAL_SPLIT)?;
    let vocab = load_labels(&store)?;
    let prep = preprocessor(config)?;
    let (mut encoder_config, seed_label) = match mode {
        TrainMode::Pointwise => (config.pointwise.clone(), seeds::ENCODER_POINTWISE),
        TrainMode::Pairwise => (config.pairwise.clone(), seeds::ENCODER_PAIRWISE),
    };
    encoder_config.seed = derive_seed(config.seed, seed_label);
    let docs: Vec<TokenizedText> = train
        .iter()
        .map(|s| prep.pair_tokens(&s.text, &s.reply))
        .collect();
    let index = TokenIndex::from_token_lists(docs.iter());
    let model = EncoderModel::<F>::init(&encoder_config, index, vocab.len())?;
    let (model, history) =
        encoder::train(model, &train, &val, &vocab, &prep, mode, &encoder_config)?;
    let (model_file, history_file, stage) = encoder_artifacts(mode);
    store.write_atomic(model_file, |w| {
        save_encoder(&model, &mut *w, store.config_hash())
    })?;
    store.write_atomic(history_file, |w| {
        for epoch in &history {
            let line = serde_json::to_string(epoch)
                .map_err(|e| Error::invalid(format!("serializing epoch stats: {e}")))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    store.record_stage(stage, &[model_file, history_file])?;
    let best_val_map = history.iter().map(|e| e.val_map).fold(f64::NEG_INFINITY, f64::max);
    Ok(EncoderSummary {
        mode,
        epochs_run: history.len(),
        best_val_map,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSummary {
    pub feature_count: usize,
    pub train_groups: usize,
    pub train_rows: usize,
    /// Training samples dropped because negative sampling left them
    /// without both a positive and a negative candidate.
    pub dropped_groups: usize,
    pub val_groups: usize,
    /// Categories that never occur in the training split; their
    /// centroids are zero.
    pub empty_labels: Vec<String>,
}

impl FeatureSummary {
    pub fn summary(&self) -> String {
        let mut line = format!(
            "build-features: {} features per candidate; train {} groups / {} rows ({} dropped), \
             validation {} groups",
            self.feature_count,
            self.train_groups,
            self.train_rows,
            self.dropped_groups,
            self.val_groups
        );
        if !self.empty_labels.is_empty() {
            line.push_str(&format!(
                "; {} categories unseen in training: {}",
                self.empty_labels.len(),
                self.empty_labels.join(", ")
            ));
        }
        line
    }
}

/// Fit the similarity feature bank on the training split and assemble
/// the train (sampled negatives) and validation (all candidates)
/// feature matrices.
pub fn stage_build_features(config: &PipelineConfig) -> Result<FeatureSummary> {
    config.validate()?;
    let store = ArtifactStore::for_config(config)?;
    let _lock = store.lock()?;
    let train = load_split(&store, files::TRAIN_SPLIT)?;
    let val = load_split(&store, files::VAL_SPLIT)?;
    let vocab = load_labels(&store)?;
    let pointwise = load_encoder_artifact(&store, TrainMode::Pointwise)?;
    let pairwise = load_encoder_artifact(&store, TrainMode::Pairwise)?;
    let prep = preprocessor(config)?;
    let stage_seed = derive_seed(config.seed, seeds::FEATURES);
    let (bank, empty) = FeatureBank::<F>::fit(&train, &vocab, &prep, &config.featbank, stage_seed)?;
    let empty_labels: Vec<String> = empty
        .iter()
        .filter_map(|&id| vocab.name(id).map(str::to_string))
        .collect();
    let train_candidates = CandidateSet::SampledNegatives {
        negatives_per_positive: config.reranker_negatives,
        seed: stage_seed,
    };
    let (train_matrix, dropped) =
        build_feature_matrix(&bank, &pointwise, &pairwise, &prep, &train, &vocab, &train_candidates)?;
    if train_matrix.is_empty() {
        return Err(Error::invalid(
            "negative sampling dropped every training group; the label vocabulary may be too small",
        ));
    }
    let (val_matrix, _) =
        build_feature_matrix(&bank, &pointwise, &pairwise, &prep, &val, &vocab, &CandidateSet::All)?;
    store.write_atomic(files::FEATURE_BANK, |w| {
        save_feature_bank(&bank, &mut *w, store.config_hash())
    })?;
    store.write_atomic(files::TRAIN_FEATURES, |w| {
        train_matrix.save(&mut *w, store.config_hash())
    })?;
    store.write_atomic(files::VAL_FEATURES, |w| {
        val_matrix.save(&mut *w, store.config_hash())
    })?;
    store.record_stage(
        stages::BUILD_FEATURES,
        &[files::FEATURE_BANK, files::TRAIN_FEATURES, files::VAL_FEATURES],
    )?;
    Ok(FeatureSummary {
        feature_count: train_matrix.feature_count(),
        train_groups: train_matrix.n_groups(),
        train_rows: train_matrix.n_rows(),
        dropped_groups: dropped,
        val_groups: val_matrix.n_groups(),
        empty_labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankerSummary {
    pub rounds_run: usize,
    pub trees_kept: usize,
    pub baseline_val_map: f64,
    pub best_val_map: f64,
}

impl RerankerSummary {
    pub fn summary(&self) -> String {
        format!(
            "train-reranker: {} rounds, kept {} trees; validation MAP@6 {:.4} (baseline {:.4})",
            self.rounds_run, self.trees_kept, self.best_val_map, self.baseline_val_map
        )
    }
}

/// Fit the boosted reranker on the stored feature matrices.
pub fn stage_train_reranker(config: &PipelineConfig) -> Result<RerankerSummary> {
    config.validate()?;
    let store = ArtifactStore::for_config(config)?;
    let _lock = store.lock()?;
    let train = load_matrix_artifact(&store, files::TRAIN_FEATURES)?;
    let val = load_matrix_artifact(&store, files::VAL_FEATURES)?;
    let seed = derive_seed(config.seed, seeds::RERANKER);
    let (model, history) = fit_gbdt(&train, &val, &config.reranker, seed)?;
    let importance = feature_importance(&model, train.schema())?;
    store.write_atomic(files::RERANKER, |w| {
        save_gbdt(&model, &mut *w, store.config_hash())
    })?;
    store.write_atomic(files::RERANKER_HISTORY, |w| {
        let body = serde_json::json!({
            "version": JSON_ARTIFACT_VERSION,
            "config_hash": format_hash(store.config_hash()),
            "history": history,
        });
        let text = serde_json::to_string_pretty(&body)
            .map_err(|e| Error::invalid(format!("serializing the boosting history: {e}")))?;
        writeln!(w, "{text}")?;
        Ok(())
    })?;
    store.write_atomic(files::RERANKER_IMPORTANCE, |w| {
        let features: Vec<serde_json::Value> = importance
            .iter()
            .map(|(feature, gain)| serde_json::json!({ "feature": feature, "gain": gain }))
            .collect();
        let body = serde_json::json!({
            "version": JSON_ARTIFACT_VERSION,
            "config_hash": format_hash(store.config_hash()),
            "features": features,
        });
        let text = serde_json::to_string_pretty(&body)
            .map_err(|e| Error::invalid(format!("serializing feature importance: {e}")))?;
        writeln!(w, "{text}")?;
        Ok(())
    })?;
    store.record_stage(
        stages::TRAIN_RERANKER,
        &[files::RERANKER, files::RERANKER_HISTORY, files::RERANKER_IMPORTANCE],
    )?;
    Ok(RerankerSummary {
        rounds_run: history.rounds.len(),
        trees_kept: model.trees().len(),
        baseline_val_map: history.baseline_val_map,
        best_val_map: history.best_val_map,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictSummary {
    pub backend: Backend,
    pub output: PathBuf,
    pub predictions: Vec<RankedPrediction>,
}

impl PredictSummary {
    pub fn summary(&self) -> String {
        format!(
            "predict[{}]: wrote {} predictions to {}",
            self.backend,
            self.predictions.len(),
            self.output.display()
        )
    }
}

/// Rank the configured predict input and write one top-6 prediction per
/// sample. `extra_out` receives a copy of the predictions outside the
/// artifact directory.
pub fn stage_predict(
    config: &PipelineConfig,
    extra_out: Option<&Path>,
) -> Result<PredictSummary> {
    config.validate()?;
    let store = ArtifactStore::for_config(config)?;
    let _lock = store.lock()?;
    let target = load_input(&config.data.predict, false)?;
    let vocab = load_labels(&store)?;
    let prep = preprocessor(config)?;
    let predictions = match config.backend {
        Backend::Reranker => {
            let pointwise = load_encoder_artifact(&store, TrainMode::Pointwise)?;
            let pairwise = load_encoder_artifact(&store, TrainMode::Pairwise)?;
            let bank = load_bank_artifact(&store)?;
            let model = load_reranker_artifact(&store)?;
            let (matrix, _) = build_feature_matrix(
                &bank,
                &pointwise,
                &pairwise,
                &prep,
                &target,
                &vocab,
                &CandidateSet::All,
            )?;
            let mut out = Vec::with_capacity(matrix.n_groups());
            for g in 0..matrix.n_groups() {
                let ids = rank_candidates(&model, &matrix, g, vocab.len())?;
                let names: Vec<String> = ids
                    .iter()
                    .map(|&id| {
                        vocab
                            .name(id)
                            .expect("ranked ids index the vocabulary")
                            .to_string()
                    })
                    .collect();
                let idx = matrix.sample_idx(matrix.group(g).start);
                out.push(RankedPrediction::new(idx, names)?);
            }
            out
        }
        Backend::Pairwise => {
            let model = load_encoder_artifact(&store, TrainMode::Pairwise)?;
            let mut out = Vec::with_capacity(target.len());
            for sample in target.iter() {
                let names = predict_topk(&model, sample, &vocab, &prep, PREDICTION_LEN)?;
                out.push(RankedPrediction::new(sample.idx, names)?);
            }
            out
        }
    };
    let output = store.write_atomic(files::PREDICTIONS, |w| {
        metrics::write_predictions(&predictions, &mut *w)
    })?;
    store.record_stage(stages::PREDICT, &[files::PREDICTIONS])?;
    if let Some(path) = extra_out {
        metrics::save_predictions(&predictions, path)?;
    }
    Ok(PredictSummary {
        backend: config.backend,
        output,
        predictions,
    })
}

/// Score a predictions file against gold labels.
pub fn stage_evaluate(pred: &Path, gold: &Path) -> Result<EvalReport> {
    let predictions = metrics::load_predictions(pred)?;
    let gold = load_input(gold, true)?;
    metrics::map_at_k(&predictions, &gold, PREDICTION_LEN)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpoSummary {
    pub trials: usize,
    pub best_score: f64,
    pub best_params: TreeParams,
}

impl HpoSummary {
    pub fn summary(&self) -> String {
        format!(
            "hpo: {} trials, best validation MAP@6 {:.4} (shrinkage {:.4}, depth {}, {} trees, \
             min leaf {})",
            self.trials,
            self.best_score,
            self.best_params.shrinkage,
            self.best_params.max_depth,
            self.best_params.num_trees,
            self.best_params.min_samples_leaf
        )
    }
}

/// Random-search the reranker hyperparameters on the stored feature
/// matrices.
pub fn stage_hpo(config: &PipelineConfig) -> Result<HpoSummary> {
    config.validate()?;
    let store = ArtifactStore::for_config(config)?;
    let _lock = store.lock()?;
    let train = load_matrix_artifact(&store, files::TRAIN_FEATURES)?;
    let val = load_matrix_artifact(&store, files::VAL_FEATURES)?;
    let mut space = config.hpo.clone();
    space.seed = derive_seed(config.seed, seeds::HPO);
    let fit_seed = derive_seed(config.seed, seeds::RERANKER);
    let (best_params, trials) = random_search(&space, &config.reranker, |params| {
        fit_gbdt(&train, &val, params, fit_seed).map(|(_, history)| history.best_val_map)
    })?;
    let best_score = trials
        .iter()
        .map(|t| t.score)
        .fold(f64::NEG_INFINITY, f64::max);
    store.write_atomic(files::HPO_TRIALS, |w| write_trial_log(&mut *w, &trials))?;
    store.write_atomic(files::HPO_BEST, |w| {
        let body = serde_json::json!({
            "version": JSON_ARTIFACT_VERSION,
            "config_hash": format_hash(store.config_hash()),
            "score": best_score,
            "params": best_params,
        });
        let text = serde_json::to_string_pretty(&body)
            .map_err(|e| Error::invalid(format!("serializing the hpo result: {e}")))?;
        writeln!(w, "{text}")?;
        Ok(())
    })?;
    store.record_stage(stages::HPO, &[files::HPO_TRIALS, files::HPO_BEST])?;
    Ok(HpoSummary {
        trials: trials.len(),
        best_score,
        best_params,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSummary {
    pub preprocess: PreprocessSummary,
    /// Absent when the pairwise backend is selected: the pointwise
    /// encoder only feeds the feature bank.
    pub pointwise: Option<EncoderSummary>,
    pub pairwise: EncoderSummary,
    pub features: Option<FeatureSummary>,
    pub reranker: Option<RerankerSummary>,
    pub predict: PredictSummary,
}

/// Run every stage in order: preprocess, the encoders, then (with the
/// reranker backend) the feature bank and the boosted reranker, and
/// finally predict.
pub fn run_cascade(config: &PipelineConfig) -> Result<CascadeSummary> {
    let preprocess = stage_preprocess(config)?;
    let (pointwise, features, reranker) = match config.backend {
        Backend::Reranker => {
            let pointwise = stage_train_encoder(config, TrainMode::Pointwise)?;
            let pairwise_summary = stage_train_encoder(config, TrainMode::Pairwise)?;
            let features = stage_build_features(config)?;
            let reranker = stage_train_reranker(config)?;
            return Ok(CascadeSummary {
                preprocess,
                pointwise: Some(pointwise),
                pairwise: pairwise_summary,
                features: Some(features),
                reranker: Some(reranker),
                predict: stage_predict(config, None)?,
            });
        }
        Backend::Pairwise => (None, None, None),
    };
    let pairwise = stage_train_encoder(config, TrainMode::Pairwise)?;
    let predict = stage_predict(config, None)?;
    Ok(CascadeSummary {
        preprocess,
        pointwise,
        pairwise,
        features,
        reranker,
        predict,
    })
}
