//! Trainable pair scorer.
//!
//! A (tweet text, reply) pair is tokenized, mean-pooled over learned
//! token embeddings, linearly projected, and scored against learned
//! category embeddings by dot product. Two training schemes share this
//! architecture: pointwise (binary cross-entropy on each (query,
//! category) with sampled negatives) and pairwise (margin ranking loss
//! over (query, positive, negative) triplets).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{self, ArtifactKind};
use crate::corpus::{Dataset, LabelVocab, Sample};
use crate::error::{Error, Result};
use crate::metrics::ap_at_k;
use crate::num::{axpy, dot, rank_top_k, scale, Adam, Matrix, Scalar};
use crate::textprep::{Preprocessor, TokenizedText};
use crate::util::derive_seed;

pub const ENCODER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Pointwise,
    Pairwise,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Pointwise => "pointwise",
            TrainMode::Pairwise => "pairwise",
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointwise" => Ok(TrainMode::Pointwise),
            "pairwise" => Ok(TrainMode::Pairwise),
            other => Err(Error::invalid(format!(
                "unknown training mode {other:?} (expected \"pointwise\" or \"pairwise\")"
            ))),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub token_dim: usize,
    pub category_dim: usize,
    /// Token vocabulary size including the reserved OOV row. 0 means
    /// "derive from the fitted token index".
    pub vocab_size: usize,
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step_epochs: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            token_dim: 128,
            category_dim: 128,
            vocab_size: 0,
            margin: 1.0,
            negatives_per_positive: 4,
            epochs: 30,
            batch_size: 128,
            lr0: 3e-5,
            lr_decay: 0.1,
            lr_step_epochs: 10,
            seed: 42,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.validate_at("encoder")
    }

    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        if self.token_dim == 0 {
            return Err(Error::config(format!("{prefix}.token_dim"), "must be positive"));
        }
        if self.category_dim == 0 {
            return Err(Error::config(format!("{prefix}.category_dim"), "must be positive"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::config(format!("{prefix}.margin"), "must be a finite non-negative real"));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::config(
                format!("{prefix}.negatives_per_positive"),
                "must be positive",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config(format!("{prefix}.batch_size"), "must be positive"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config(format!("{prefix}.lr0"), "must be a finite positive real"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config(format!("{prefix}.lr_decay"), "must be in (0, 1]"));
        }
        if self.lr_step_epochs == 0 {
            return Err(Error::config(format!("{prefix}.lr_step_epochs"), "must be positive"));
        }
        Ok(())
    }
}

/// Step-decay schedule: `lr0 × lr_decay^⌊epoch / lr_step_epochs⌋`.
///
/// Computed by repeated division with the reciprocal so decade-style
/// schedules stay exact in binary floating point (3e-5 → 3e-6 → 3e-7;
/// a multiplication ladder drifts at the second step).
pub fn lr_at_epoch(config: &EncoderConfig, epoch: usize) -> f64 {
    let steps = epoch / config.lr_step_epochs.max(1);
    let inv = config.lr_decay.recip();
    let mut lr = config.lr0;
    for _ in 0..steps {
        lr /= inv;
    }
    lr
}

/// Binary cross-entropy on a logit: `(loss, dL/ds)`.
///
/// `loss = −[y ln σ(s) + (1−y) ln(1−σ(s))]`, `dL/ds = σ(s) − y`,
/// evaluated in the overflow-free `ln(1+e^x)` form.
pub fn pointwise_loss<S: Scalar>(s: S, y: bool) -> (S, S) {
    let loss = if y { (-s).ln_1p_exp() } else { s.ln_1p_exp() };
    let target = if y { S::one() } else { S::zero() };
    (loss, s.sigmoid() - target)
}

/// Margin ranking loss: `max(0, margin − (s_pos − s_neg))` with
/// subgradients `(−1, +1)` when the loss is strictly positive and
/// `(0, 0)` otherwise (including exactly at the hinge).
pub fn pairwise_loss<S: Scalar>(s_pos: S, s_neg: S, margin: S) -> (S, S, S) {
    let raw = margin - (s_pos - s_neg);
    if raw > S::zero() {
        (raw, -S::one(), S::one())
    } else {
        (S::zero(), S::zero(), S::zero())
    }
}

/// Draw `k` distinct category ids uniformly from `[0, label_count) \ gold`.
pub fn sample_negatives(
    gold: &[usize],
    label_count: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let gold_set: HashSet<usize> = gold.iter().copied().collect();
    for &g in gold {
        if g >= label_count {
            return Err(Error::CategoryOutOfRange {
                id: g,
                count: label_count,
            });
        }
    }
    let mut pool: Vec<usize> = (0..label_count).filter(|id| !gold_set.contains(id)).collect();
    if k > pool.len() {
        return Err(Error::invalid(format!(
            "cannot sample {k} negatives from {} non-gold categories",
            pool.len()
        )));
    }
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    Ok(pool)
}

/// Token string → embedding row, with row 0 reserved for out-of-vocabulary
/// tokens. Ids follow byte-sorted token order so the index is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenIndex {
    tokens: Vec<String>,
    map: HashMap<String, usize>,
}

impl TokenIndex {
    pub const OOV: usize = 0;

    pub fn from_token_lists<'a>(docs: impl IntoIterator<Item = &'a TokenizedText>) -> Self {
        let set: BTreeSet<&str> = docs
            .into_iter()
            .flat_map(|d| d.iter().map(String::as_str))
            .collect();
        Self::from_sorted(set.into_iter().map(str::to_string).collect())
            .expect("BTreeSet iteration is sorted and distinct")
    }

    /// Rebuild from a serialized token table (must be strictly sorted).
    pub fn from_sorted(tokens: Vec<String>) -> Result<Self> {
        if tokens.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("token table must be strictly sorted"));
        }
        let map = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 1))
            .collect();
        Ok(TokenIndex { tokens, map })
    }

    pub fn id(&self, token: &str) -> usize {
        self.map.get(token).copied().unwrap_or(Self::OOV)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.map.contains_key(token)
    }

    /// Number of embedding rows: known tokens plus the OOV row.
    pub fn size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel<S: Scalar> {
    token_index: TokenIndex,
    /// `vocab_size × token_dim`; row [`TokenIndex::OOV`] serves unknown tokens.
    pub token_embeddings: Matrix<S>,
    /// `K × category_dim`.
    pub category_embeddings: Matrix<S>,
    /// `token_dim × category_dim`.
    pub projection: Matrix<S>,
}

impl<S: Scalar> EncoderModel<S> {
    /// Fresh model with every matrix drawn uniform(−0.05, 0.05) from the
    /// config seed.
    pub fn init(config: &EncoderConfig, token_index: TokenIndex, label_count: usize) -> Result<Self> {
        config.validate()?;
        if label_count == 0 {
            return Err(Error::invalid("label count must be positive"));
        }
        if config.vocab_size != 0 && config.vocab_size != token_index.size() {
            return Err(Error::config(
                "encoder.vocab_size",
                format!(
                    "configured {} but the token index has {} rows",
                    config.vocab_size,
                    token_index.size()
                ),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "encoder-init"));
        let mut draw = |rows: usize, cols: usize| {
            Matrix::from_fn(rows, cols, |_, _| S::from_f64(rng.gen_range(-0.05..0.05)))
        };
        Ok(EncoderModel {
            token_embeddings: draw(token_index.size(), config.token_dim),
            category_embeddings: draw(label_count, config.category_dim),
            projection: draw(config.token_dim, config.category_dim),
            token_index,
        })
    }

    pub fn from_parts(
        token_index: TokenIndex,
        token_embeddings: Matrix<S>,
        category_embeddings: Matrix<S>,
        projection: Matrix<S>,
    ) -> Result<Self> {
        if token_embeddings.rows() != token_index.size() {
            return Err(Error::invalid(format!(
                "token embedding rows {} do not match token index size {}",
                token_embeddings.rows(),
                token_index.size()
            )));
        }
        if projection.rows() != token_embeddings.cols() {
            return Err(Error::invalid(format!(
                "projection rows {} do not match token dim {}",
                projection.rows(),
                token_embeddings.cols()
            )));
        }
        if projection.cols() != category_embeddings.cols() {
            return Err(Error::invalid(format!(
                "projection cols {} do not match category dim {}",
                projection.cols(),
                category_embeddings.cols()
            )));
        }
        Ok(EncoderModel {
            token_index,
            token_embeddings,
            category_embeddings,
            projection,
        })
    }

    pub fn token_index(&self) -> &TokenIndex {
        &self.token_index
    }

    pub fn token_dim(&self) -> usize {
        self.token_embeddings.cols()
    }

    pub fn category_dim(&self) -> usize {
        self.category_embeddings.cols()
    }

    pub fn label_count(&self) -> usize {
        self.category_embeddings.rows()
    }

    pub fn token_ids(&self, pair: &TokenizedText) -> Vec<usize> {
        pair.iter().map(|t| self.token_index.id(t)).collect()
    }

    fn mean_embedding(&self, ids: &[usize]) -> Vec<S> {
        let mut m = vec![S::zero(); self.token_dim()];
        if ids.is_empty() {
            return m;
        }
        for &t in ids {
            axpy(&mut m, S::one(), self.token_embeddings.row(t));
        }
        scale(&mut m, S::one() / S::from_usize(ids.len()));
        m
    }

    /// Query vector: `projectionᵀ · mean(token embeddings)`; the empty
    /// pair maps to the zero vector.
    pub fn encode_ids(&self, ids: &[usize]) -> Vec<S> {
        self.projection.transpose_mul(&self.mean_embedding(ids))
    }

    pub fn encode_pair(&self, pair: &TokenizedText) -> Vec<S> {
        self.encode_ids(&self.token_ids(pair))
    }

    /// Dot product of the query against one category embedding.
    pub fn score(&self, query: &[S], category: usize) -> Result<S> {
        if category >= self.label_count() {
            return Err(Error::CategoryOutOfRange {
                id: category,
                count: self.label_count(),
            });
        }
        Ok(dot(query, self.category_embeddings.row(category)))
    }

    /// Scores against every category.
    pub fn scores(&self, query: &[S]) -> Vec<S> {
        self.category_embeddings.mul_vec(query)
    }

    pub fn category_embedding(&self, category: usize) -> Result<&[S]> {
        if category >= self.label_count() {
            return Err(Error::CategoryOutOfRange {
                id: category,
                count: self.label_count(),
            });
        }
        Ok(self.category_embeddings.row(category))
    }

    pub fn is_finite(&self) -> bool {
        self.token_embeddings.is_finite()
            && self.category_embeddings.is_finite()
            && self.projection.is_finite()
    }

    /// Loss of one pointwise example and its gradient contributions,
    /// added into `grads`.
    pub fn pointwise_example(
        &self,
        ids: &[usize],
        category: usize,
        label: bool,
        grads: &mut GradAccumulator<S>,
    ) -> Result<S> {
        let m = self.mean_embedding(ids);
        let q = self.projection.transpose_mul(&m);
        let s = self.score(&q, category)?;
        let (loss, g) = pointwise_loss(s, label);
        axpy(grads.category.row_mut(category), g, &q);
        let crow = self.category_embeddings.row(category);
        for (r, mr) in m.iter().enumerate() {
            if *mr != S::zero() {
                axpy(grads.projection.row_mut(r), g * *mr, crow);
            }
        }
        if !ids.is_empty() {
            let dm = self.projection.mul_vec(crow);
            let per_token = g / S::from_usize(ids.len());
            for &t in ids {
                axpy(grads.token.row_mut(t), per_token, &dm);
            }
        }
        Ok(loss)
    }

    /// Loss of one (positive, negative) triplet and its gradient
    /// contributions, added into `grads`.
    pub fn pairwise_example(
        &self,
        ids: &[usize],
        positive: usize,
        negative: usize,
        margin: S,
        grads: &mut GradAccumulator<S>,
    ) -> Result<S> {
        if positive == negative {
            return Err(Error::invalid("triplet positive and negative must differ"));
        }
        let m = self.mean_embedding(ids);
        let q = self.projection.transpose_mul(&m);
        let s_pos = self.score(&q, positive)?;
        let s_neg = self.score(&q, negative)?;
        let (loss, g_pos, g_neg) = pairwise_loss(s_pos, s_neg, margin);
        if loss > S::zero() {
            axpy(grads.category.row_mut(positive), g_pos, &q);
            axpy(grads.category.row_mut(negative), g_neg, &q);
            let mut dq = vec![S::zero(); self.category_dim()];
            axpy(&mut dq, g_pos, self.category_embeddings.row(positive));
            axpy(&mut dq, g_neg, self.category_embeddings.row(negative));
            for (r, mr) in m.iter().enumerate() {
                if *mr != S::zero() {
                    axpy(grads.projection.row_mut(r), *mr, &dq);
                }
            }
            if !ids.is_empty() {
                let dm = self.projection.mul_vec(&dq);
                let inv_n = S::one() / S::from_usize(ids.len());
                for &t in ids {
                    axpy(grads.token.row_mut(t), inv_n, &dm);
                }
            }
        }
        Ok(loss)
    }
}

/// Gradient buffers matching an [`EncoderModel`]'s parameter matrices.
#[derive(Debug, Clone)]
pub struct GradAccumulator<S: Scalar> {
    pub token: Matrix<S>,
    pub projection: Matrix<S>,
    pub category: Matrix<S>,
}

impl<S: Scalar> GradAccumulator<S> {
    pub fn zeros_like(model: &EncoderModel<S>) -> Self {
        GradAccumulator {
            token: Matrix::zeros(model.token_embeddings.rows(), model.token_embeddings.cols()),
            projection: Matrix::zeros(model.projection.rows(), model.projection.cols()),
            category: Matrix::zeros(
                model.category_embeddings.rows(),
                model.category_embeddings.cols(),
            ),
        }
    }

    pub fn reset(&mut self) {
        self.token.fill(S::zero());
        self.projection.fill(S::zero());
        self.category.fill(S::zero());
    }

    fn scale_all(&mut self, k: S) {
        scale(self.token.data_mut(), k);
        scale(self.projection.data_mut(), k);
        scale(self.category.data_mut(), k);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_map: f64,
}

struct EncodedSample {
    ids: Vec<usize>,
    gold: Vec<usize>,
}

fn encode_dataset<S: Scalar>(
    dataset: &Dataset,
    vocab: &LabelVocab,
    prep: &Preprocessor,
    model: &EncoderModel<S>,
) -> Result<Vec<EncodedSample>> {
    if !dataset.labeled() {
        return Err(Error::Unlabeled);
    }
    dataset
        .iter()
        .map(|s| {
            Ok(EncodedSample {
                ids: model.token_ids(&prep.pair_tokens(&s.text, &s.reply)),
                gold: vocab.gold_ids(s)?,
            })
        })
        .collect()
}

fn validation_map<S: Scalar>(model: &EncoderModel<S>, samples: &[EncodedSample]) -> Result<f64> {
    let k = 6.min(model.label_count());
    let mut total = 0.0;
    for s in samples {
        let scores = model.scores(&model.encode_ids(&s.ids));
        let ranked = rank_top_k(&scores, k);
        total += ap_at_k(&ranked, &s.gold, k)?;
    }
    Ok(total / samples.len() as f64)
}

enum Example {
    Pointwise { sample: usize, category: usize, label: bool },
    Pairwise { sample: usize, positive: usize, negative: usize },
}

/// Train the model, returning the parameters from the epoch with the
/// best validation MAP and the per-epoch history. Fully deterministic
/// for a fixed config seed.
pub fn train<S: Scalar>(
    model: EncoderModel<S>,
    train: &Dataset,
    val: &Dataset,
    vocab: &LabelVocab,
    prep: &Preprocessor,
    mode: TrainMode,
    config: &EncoderConfig,
) -> Result<(EncoderModel<S>, Vec<EpochStats>)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if vocab.len() != model.label_count() {
        return Err(Error::invalid(format!(
            "label vocab size {} does not match model category count {}",
            vocab.len(),
            model.label_count()
        )));
    }
    let train_enc = encode_dataset(train, vocab, prep, &model)?;
    let val_enc = encode_dataset(val, vocab, prep, &model)?;
    let label_count = model.label_count();
    let margin = S::from_f64(config.margin);

    let mut model = model;
    let mut best_model = model.clone();
    let mut best_map = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.epochs);
    let mut grads = GradAccumulator::zeros_like(&model);
    let mut adam_token = Adam::new(model.token_embeddings.data().len());
    let mut adam_projection = Adam::new(model.projection.data().len());
    let mut adam_category = Adam::new(model.category_embeddings.data().len());

    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(config, epoch);
        let lr_s = S::from_f64(lr);
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("encoder-epoch-{epoch}")));

        // Negatives are re-drawn each epoch; the per-gold count clamps to
        // the available non-gold categories when the label space is small.
        let mut examples = Vec::new();
        for (i, s) in train_enc.iter().enumerate() {
            let avail = label_count - s.gold.len();
            let k = config.negatives_per_positive.min(avail);
            for &g in &s.gold {
                if mode == TrainMode::Pointwise {
                    examples.push(Example::Pointwise { sample: i, category: g, label: true });
                }
                let negatives = sample_negatives(&s.gold, label_count, k, &mut rng)?;
                for n in negatives {
                    examples.push(match mode {
                        TrainMode::Pointwise => Example::Pointwise { sample: i, category: n, label: false },
                        TrainMode::Pairwise => Example::Pairwise { sample: i, positive: g, negative: n },
                    });
                }
            }
        }
        for i in (1..examples.len()).rev() {
            examples.swap(i, rng.gen_range(0..=i));
        }

        let mut loss_total = 0.0f64;
        for batch in examples.chunks(config.batch_size) {
            grads.reset();
            let mut batch_loss = S::zero();
            for example in batch {
                batch_loss += match *example {
                    Example::Pointwise { sample, category, label } => {
                        model.pointwise_example(&train_enc[sample].ids, category, label, &mut grads)?
                    }
                    Example::Pairwise { sample, positive, negative } => model.pairwise_example(
                        &train_enc[sample].ids,
                        positive,
                        negative,
                        margin,
                        &mut grads,
                    )?,
                };
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("encoder training loss at epoch {epoch}")));
            }
            grads.scale_all(S::one() / S::from_usize(batch.len()));
            adam_token.step(model.token_embeddings.data_mut(), grads.token.data(), lr_s);
            adam_projection.step(model.projection.data_mut(), grads.projection.data(), lr_s);
            adam_category.step(
                model.category_embeddings.data_mut(),
                grads.category.data(),
                lr_s,
            );
            loss_total += batch_loss.to_f64();
        }
        if !model.is_finite() {
            return Err(Error::NonFinite(format!("encoder parameters after epoch {epoch}")));
        }

        let train_loss = if examples.is_empty() {
            0.0
        } else {
            loss_total / examples.len() as f64
        };
        let val_map = validation_map(&model, &val_enc)?;
        history.push(EpochStats { epoch, lr, train_loss, val_map });
        if val_map > best_map {
            best_map = val_map;
            best_model = model.clone();
        }
    }
    Ok((best_model, history))
}

/// Rank all categories for one sample and return the top-k names
/// (score descending, ties by ascending category id).
pub fn predict_topk<S: Scalar>(
    model: &EncoderModel<S>,
    sample: &Sample,
    vocab: &LabelVocab,
    prep: &Preprocessor,
    k: usize,
) -> Result<Vec<String>> {
    if k == 0 || k > vocab.len() {
        return Err(Error::invalid(format!(
            "k = {k} must be in 1..={} (label count)",
            vocab.len()
        )));
    }
    if vocab.len() != model.label_count() {
        return Err(Error::invalid(format!(
            "label vocab size {} does not match model category count {}",
            vocab.len(),
            model.label_count()
        )));
    }
    let query = model.encode_pair(&prep.pair_tokens(&sample.text, &sample.reply));
    let scores = model.scores(&query);
    Ok(rank_top_k(&scores, k)
        .into_iter()
        .map(|id| vocab.name(id).expect("id < label count").to_string())
        .collect())
}

pub fn save_encoder<S: Scalar>(
    model: &EncoderModel<S>,
    mut w: impl Write,
    config_hash: u64,
) -> Result<()> {
    binio::write_header(&mut w, ArtifactKind::Encoder, ENCODER_FORMAT_VERSION, config_hash)?;
    binio::write_strings(&mut w, model.token_index.tokens())?;
    binio::write_matrix(&mut w, &model.token_embeddings)?;
    binio::write_matrix(&mut w, &model.category_embeddings)?;
    binio::write_matrix(&mut w, &model.projection)?;
    Ok(())
}

/// Returns the model and the config hash recorded at save time.
pub fn load_encoder<S: Scalar>(mut r: impl Read) -> Result<(EncoderModel<S>, u64)> {
    let config_hash = binio::read_header(&mut r, ArtifactKind::Encoder, ENCODER_FORMAT_VERSION)?;
    let token_index = TokenIndex::from_sorted(binio::read_strings(&mut r)?)?;
    let token_embeddings = binio::read_matrix(&mut r)?;
    let category_embeddings = binio::read_matrix(&mut r)?;
    let projection = binio::read_matrix(&mut r)?;
    let model =
        EncoderModel::from_parts(token_index, token_embeddings, category_embeddings, projection)?;
    Ok((model, config_hash))
}
