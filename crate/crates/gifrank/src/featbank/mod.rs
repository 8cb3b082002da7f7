//! Engineered similarity features for (text, reply, candidate category)
//! triples.
//!
//! Four vector sources are fitted on emoji-stripped training text — TF-IDF,
//! skip-gram word embeddings, hashed-subword embeddings, and sentence-level
//! embeddings (each sentence an atomic symbol co-occurring with its reply).
//! Per-label centroids are mean-pooled over training samples. A fixed
//! 38-feature schema combines per-source distances to the candidate's
//! centroid, distances between encoder query and category embeddings, raw
//! encoder scores, and statistical counts.

pub mod embeddings;
pub mod tfidf;

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::{Dataset, LabelVocab, Sample};
use crate::encoder::{sample_negatives, EncoderModel};
use crate::error::{Error, Result};
use crate::num::{axpy, scale, Matrix, Scalar};
use crate::textprep::{Preprocessor, TokenizedText};
use crate::util::{derive_seed, fnv1a64};

pub use embeddings::{
    sentence_vector, sgns_pair_gradients, train_sgns, train_subword, word_buckets, SgnsConfig,
    SubwordConfig, SubwordEmbeddings, WordEmbeddings,
};
pub use tfidf::{SparseVec, TfIdfModel};

/// Length of the fixed feature schema.
pub const FEATURE_COUNT: usize = 38;
pub const FEATBANK_FORMAT_VERSION: u32 = 1;
pub const MATRIX_FORMAT_VERSION: u32 = 1;

const SOURCES: [&str; 4] = ["tfidf_word", "sgns_word", "subword_word", "sgns_sentence"];
const FIELDS: [&str; 2] = ["text", "reply"];
const DISTS: [&str; 3] = ["euclidean", "manhattan", "cosine"];

/// Ordered feature names plus a hash used to reject mismatched matrices
/// and models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    names: Vec<String>,
    hash: u64,
}

impl FeatureSchema {
    /// The fixed 38-feature schema: 4 sources × 2 fields × 3 distances to
    /// the candidate centroid, 2 encoders × 3 query-to-category-embedding
    /// distances, 2 raw encoder scores, 6 statistical features.
    pub fn standard() -> Self {
        let mut names = Vec::with_capacity(FEATURE_COUNT);
        for source in SOURCES {
            for field in FIELDS {
                for dist in DISTS {
                    names.push(format!("{source}_{field}_{dist}"));
                }
            }
        }
        for mode in ["pointwise", "pairwise"] {
            for dist in DISTS {
                names.push(format!("{mode}_query_{dist}"));
            }
        }
        names.push("pointwise_score".to_string());
        names.push("pairwise_score".to_string());
        for stat in ["emoji_count", "token_count", "keyword_weight"] {
            for field in FIELDS {
                names.push(format!("{stat}_{field}"));
            }
        }
        debug_assert_eq!(names.len(), FEATURE_COUNT);
        FeatureSchema::from_names(names)
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let hash = fnv1a64(names.join("\n").as_bytes());
        FeatureSchema { names, hash }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// `(euclidean, manhattan, cosine_distance)` between two dense vectors.
///
/// `cosine_distance = 1 − u·v/(‖u‖‖v‖)`, defined as `1.0` when either
/// vector has zero norm, and clamped into `[0, 2]`.
pub fn distances<S: Scalar>(u: &[S], v: &[S]) -> Result<(S, S, S)> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u == v {
        // Exact-zero distances for identical vectors (the cosine of two
        // zero vectors is still 1.0 by the zero-norm convention).
        let cos = if u.iter().all(|x| x.is_zero()) {
            S::one()
        } else {
            S::zero()
        };
        return Ok((S::zero(), S::zero(), cos));
    }
    let mut sq = S::zero();
    let mut l1 = S::zero();
    let mut dot_uv = S::zero();
    let mut nu = S::zero();
    let mut nv = S::zero();
    for (&a, &b) in u.iter().zip(v) {
        let d = a - b;
        sq += d * d;
        l1 += d.abs();
        dot_uv += a * b;
        nu += a * a;
        nv += b * b;
    }
    let cos = if nu.is_zero() || nv.is_zero() {
        S::one()
    } else {
        clamp_cosine(S::one() - dot_uv / (nu.sqrt() * nv.sqrt()))
    };
    Ok((sq.sqrt(), l1, cos))
}

fn clamp_cosine<S: Scalar>(c: S) -> S {
    c.max(S::zero()).min(S::from_f64(2.0))
}

/// Same three distances between a sparse vector and a dense one, in
/// O(nnz) given the dense vector's precomputed L1 norm and squared L2
/// norm.
pub fn sparse_dense_distances<S: Scalar>(
    s: &SparseVec<S>,
    dense: &[S],
    dense_l1: S,
    dense_sq: S,
) -> Result<(S, S, S)> {
    if s.dim() != dense.len() {
        return Err(Error::LengthMismatch {
            left: s.dim(),
            right: dense.len(),
        });
    }
    let two = S::from_f64(2.0);
    let mut sq_adj = S::zero();
    let mut l1_adj = S::zero();
    let mut dot_sd = S::zero();
    let mut s_sq = S::zero();
    for &(j, sv) in s.entries() {
        let dv = dense[j];
        sq_adj = sq_adj + sv * sv - two * sv * dv;
        l1_adj = l1_adj + (sv - dv).abs() - dv.abs();
        dot_sd += sv * dv;
        s_sq += sv * sv;
    }
    let sq = (dense_sq + sq_adj).max(S::zero());
    let l1 = (dense_l1 + l1_adj).max(S::zero());
    let cos = if s_sq.is_zero() || dense_sq.is_zero() {
        S::one()
    } else {
        clamp_cosine(S::one() - dot_sd / (s_sq.sqrt() * dense_sq.sqrt()))
    };
    Ok((sq.sqrt(), l1, cos))
}

/// Per-label mean of the sample vectors whose gold labels include that
/// label. Labels absent from the data get a zero centroid and are
/// returned as warnings.
pub fn build_label_centroids<S: Scalar>(
    vectors: &[Vec<S>],
    gold: &[Vec<usize>],
    label_count: usize,
) -> Result<(Matrix<S>, Vec<usize>)> {
    if vectors.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: vectors.len(),
            right: gold.len(),
        });
    }
    if vectors.is_empty() {
        return Err(Error::invalid("centroids need at least one sample"));
    }
    let dim = vectors[0].len();
    let mut m = Matrix::zeros(label_count, dim);
    let mut counts = vec![0usize; label_count];
    for (v, g) in vectors.iter().zip(gold) {
        if v.len() != dim {
            return Err(Error::LengthMismatch {
                left: dim,
                right: v.len(),
            });
        }
        for &k in g {
            if k >= label_count {
                return Err(Error::CategoryOutOfRange {
                    id: k,
                    count: label_count,
                });
            }
            axpy(m.row_mut(k), S::one(), v);
            counts[k] += 1;
        }
    }
    let empty = finalize_centroids(&mut m, &counts);
    Ok((m, empty))
}

/// Sparse-input twin of [`build_label_centroids`]; produces the same
/// dense centroid matrix.
pub fn build_label_centroids_sparse<S: Scalar>(
    vectors: &[SparseVec<S>],
    gold: &[Vec<usize>],
    label_count: usize,
) -> Result<(Matrix<S>, Vec<usize>)> {
    if vectors.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: vectors.len(),
            right: gold.len(),
        });
    }
    if vectors.is_empty() {
        return Err(Error::invalid("centroids need at least one sample"));
    }
    let dim = vectors[0].dim();
    let mut m = Matrix::zeros(label_count, dim);
    let mut counts = vec![0usize; label_count];
    for (v, g) in vectors.iter().zip(gold) {
        if v.dim() != dim {
            return Err(Error::LengthMismatch {
                left: dim,
                right: v.dim(),
            });
        }
        for &k in g {
            if k >= label_count {
                return Err(Error::CategoryOutOfRange {
                    id: k,
                    count: label_count,
                });
            }
            let row = m.row_mut(k);
            for &(j, x) in v.entries() {
                row[j] += x;
            }
            counts[k] += 1;
        }
    }
    let empty = finalize_centroids(&mut m, &counts);
    Ok((m, empty))
}

fn finalize_centroids<S: Scalar>(m: &mut Matrix<S>, counts: &[usize]) -> Vec<usize> {
    let mut empty = Vec::new();
    for (k, &count) in counts.iter().enumerate() {
        if count == 0 {
            empty.push(k);
        } else {
            scale(m.row_mut(k), S::one() / S::from_usize(count));
        }
    }
    empty
}

/// Word-level corpus: for each sample, the emoji-stripped normalized
/// token lists of text and reply as two consecutive documents (empty
/// documents retained to keep alignment).
pub fn build_word_corpus(dataset: &Dataset, prep: &Preprocessor) -> Vec<TokenizedText> {
    let mut docs = Vec::with_capacity(2 * dataset.len());
    for sample in dataset.iter() {
        docs.push(prep.word_doc(&sample.text));
        docs.push(prep.word_doc(&sample.reply));
    }
    docs
}

/// Sentence-level corpus: each emoji-stripped normalized sentence is one
/// atomic symbol; a sample contributes the document [text, reply], so
/// sentences co-occur with their replies. Empty sentences are empty
/// documents and contribute no symbol (they map to the zero vector).
pub fn build_sentence_corpus(dataset: &Dataset, prep: &Preprocessor) -> Vec<TokenizedText> {
    dataset
        .iter()
        .map(|sample| sentence_doc(sample, prep))
        .collect()
}

fn sentence_doc(sample: &Sample, prep: &Preprocessor) -> TokenizedText {
    let symbols: Vec<String> = [&sample.text, &sample.reply]
        .into_iter()
        .map(|raw| prep.sentence_symbol(raw))
        .filter(|s| !s.is_empty())
        .collect();
    TokenizedText::new(symbols)
}

/// Sum of the `top_k` largest weights of the document's L2-normalized
/// TF-IDF vector (all of them if the document has fewer known terms).
pub fn keyword_weight<S: Scalar>(tfidf: &TfIdfModel<S>, doc: &TokenizedText, top_k: usize) -> S {
    let v = tfidf.vectorize(doc);
    let mut weights: Vec<S> = v.entries().iter().map(|&(_, w)| w).collect();
    weights.sort_by(|a, b| b.partial_cmp(a).expect("finite tf-idf weights"));
    weights
        .iter()
        .take(top_k)
        .fold(S::zero(), |acc, &w| acc + w)
}

/// The six statistical features, in schema order:
/// emoji counts, word-token counts, and keyword weights for text and
/// reply.
pub fn statistical_features<S: Scalar>(
    sample: &Sample,
    prep: &Preprocessor,
    tfidf: &TfIdfModel<S>,
    top_k: usize,
) -> [S; 6] {
    let text_doc = prep.word_doc(&sample.text);
    let reply_doc = prep.word_doc(&sample.reply);
    [
        S::from_usize(prep.emoji_count(&sample.text)),
        S::from_usize(prep.emoji_count(&sample.reply)),
        S::from_usize(text_doc.len()),
        S::from_usize(reply_doc.len()),
        keyword_weight(tfidf, &text_doc, top_k),
        keyword_weight(tfidf, &reply_doc, top_k),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatbankConfig {
    pub word: SgnsConfig,
    pub subword: SubwordConfig,
    pub sentence: SgnsConfig,
    pub keyword_top_k: usize,
}

impl Default for FeatbankConfig {
    fn default() -> Self {
        FeatbankConfig {
            word: SgnsConfig::default(),
            subword: SubwordConfig::default(),
            sentence: SgnsConfig::default(),
            keyword_top_k: 3,
        }
    }
}

impl FeatbankConfig {
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        self.word.validate_at(&format!("{prefix}.word"))?;
        self.subword.validate_at(&format!("{prefix}.subword"))?;
        self.sentence.validate_at(&format!("{prefix}.sentence"))?;
        if self.keyword_top_k == 0 {
            return Err(Error::config(
                format!("{prefix}.keyword_top_k"),
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// All fitted vector models plus per-source label centroids. Fitting
/// uses the training split only; every transform takes `&self`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank<S: Scalar> {
    keyword_top_k: usize,
    label_count: usize,
    tfidf: TfIdfModel<S>,
    word: WordEmbeddings<S>,
    subword: SubwordEmbeddings<S>,
    sentence: WordEmbeddings<S>,
    tfidf_centroids: Matrix<S>,
    word_centroids: Matrix<S>,
    subword_centroids: Matrix<S>,
    sentence_centroids: Matrix<S>,
    // Cached per-label norms of the TF-IDF centroids for the sparse
    // distance path; recomputed on load, never serialized.
    tfidf_centroid_l1: Vec<S>,
    tfidf_centroid_sq: Vec<S>,
    schema: FeatureSchema,
}

/// Per-sample intermediates: one of these per sample, then one cheap
/// `candidate_row` call per candidate.
#[derive(Debug, Clone)]
pub struct SampleFeatures<S: Scalar> {
    tfidf_text: SparseVec<S>,
    tfidf_reply: SparseVec<S>,
    word_text: Vec<S>,
    word_reply: Vec<S>,
    subword_text: Vec<S>,
    subword_reply: Vec<S>,
    sentence_text: Vec<S>,
    sentence_reply: Vec<S>,
    /// K × 6: per candidate, the three pointwise then three pairwise
    /// query-to-category-embedding distances.
    query_distances: Matrix<S>,
    pointwise_scores: Vec<S>,
    pairwise_scores: Vec<S>,
    stats: [S; 6],
}

impl<S: Scalar> FeatureBank<S> {
    /// Fit every vector model and the per-source centroids on a labeled
    /// training split. Returns the bank and the ids of labels that never
    /// occur in the training data (their centroids are zero).
    pub fn fit(
        dataset: &Dataset,
        vocab: &LabelVocab,
        prep: &Preprocessor,
        config: &FeatbankConfig,
        seed: u64,
    ) -> Result<(Self, Vec<usize>)> {
        config.validate_at("featbank")?;
        if dataset.is_empty() {
            return Err(Error::invalid("cannot fit a feature bank on an empty dataset"));
        }
        if !dataset.labeled() {
            return Err(Error::Unlabeled);
        }
        let word_corpus = build_word_corpus(dataset, prep);
        let sentence_corpus = build_sentence_corpus(dataset, prep);
        let tfidf = TfIdfModel::fit(&word_corpus)?;
        let word = train_sgns(&word_corpus, &config.word, derive_seed(seed, "featbank-word"))?;
        let subword = train_subword(
            &word_corpus,
            &config.subword,
            derive_seed(seed, "featbank-subword"),
        )?;
        let sentence = train_sgns(
            &sentence_corpus,
            &config.sentence,
            derive_seed(seed, "featbank-sentence"),
        )?;

        let label_count = vocab.len();
        let mut gold = Vec::with_capacity(dataset.len());
        for sample in dataset.iter() {
            gold.push(vocab.gold_ids(sample)?);
        }
        let mut tfidf_vecs = Vec::with_capacity(dataset.len());
        let mut word_vecs = Vec::with_capacity(dataset.len());
        let mut subword_vecs = Vec::with_capacity(dataset.len());
        let mut sentence_vecs = Vec::with_capacity(dataset.len());
        for sample in dataset.iter() {
            let mut combined = prep.word_doc(&sample.text).tokens().to_vec();
            combined.extend(prep.word_doc(&sample.reply).tokens().iter().cloned());
            let combined = TokenizedText::new(combined);
            tfidf_vecs.push(tfidf.vectorize(&combined));
            word_vecs.push(sentence_vector(&word, &combined));
            subword_vecs.push(subword.mean_vector(&combined));
            sentence_vecs.push(sentence_vector(&sentence, &sentence_doc(sample, prep)));
        }
        let (tfidf_centroids, empty) =
            build_label_centroids_sparse(&tfidf_vecs, &gold, label_count)?;
        let (word_centroids, _) = build_label_centroids(&word_vecs, &gold, label_count)?;
        let (subword_centroids, _) = build_label_centroids(&subword_vecs, &gold, label_count)?;
        let (sentence_centroids, _) = build_label_centroids(&sentence_vecs, &gold, label_count)?;
        let bank = FeatureBank::from_parts(
            config.keyword_top_k,
            label_count,
            tfidf,
            word,
            subword,
            sentence,
            tfidf_centroids,
            word_centroids,
            subword_centroids,
            sentence_centroids,
        )?;
        Ok((bank, empty))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        keyword_top_k: usize,
        label_count: usize,
        tfidf: TfIdfModel<S>,
        word: WordEmbeddings<S>,
        subword: SubwordEmbeddings<S>,
        sentence: WordEmbeddings<S>,
        tfidf_centroids: Matrix<S>,
        word_centroids: Matrix<S>,
        subword_centroids: Matrix<S>,
        sentence_centroids: Matrix<S>,
    ) -> Result<Self> {
        if keyword_top_k == 0 {
            return Err(Error::invalid("keyword_top_k must be positive"));
        }
        let dims = [
            ("tfidf", &tfidf_centroids, tfidf.dim()),
            ("word", &word_centroids, word.dim()),
            ("subword", &subword_centroids, subword.dim()),
            ("sentence", &sentence_centroids, sentence.dim()),
        ];
        for (name, centroids, dim) in dims {
            if centroids.rows() != label_count {
                return Err(Error::invalid(format!(
                    "{name} centroids have {} rows, expected {label_count}",
                    centroids.rows()
                )));
            }
            if centroids.cols() != dim {
                return Err(Error::invalid(format!(
                    "{name} centroids have {} columns, expected {dim}",
                    centroids.cols()
                )));
            }
            if !centroids.is_finite() {
                return Err(Error::NonFinite(format!("{name} centroids")));
            }
        }
        let (tfidf_centroid_l1, tfidf_centroid_sq) = centroid_norms(&tfidf_centroids);
        Ok(FeatureBank {
            keyword_top_k,
            label_count,
            tfidf,
            word,
            subword,
            sentence,
            tfidf_centroids,
            word_centroids,
            subword_centroids,
            sentence_centroids,
            tfidf_centroid_l1,
            tfidf_centroid_sq,
            schema: FeatureSchema::standard(),
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn keyword_top_k(&self) -> usize {
        self.keyword_top_k
    }

    pub fn tfidf(&self) -> &TfIdfModel<S> {
        &self.tfidf
    }

    pub fn word(&self) -> &WordEmbeddings<S> {
        &self.word
    }

    pub fn subword(&self) -> &SubwordEmbeddings<S> {
        &self.subword
    }

    pub fn sentence(&self) -> &WordEmbeddings<S> {
        &self.sentence
    }

    pub fn centroids(&self, source: &str) -> Option<&Matrix<S>> {
        match source {
            "tfidf_word" => Some(&self.tfidf_centroids),
            "sgns_word" => Some(&self.word_centroids),
            "subword_word" => Some(&self.subword_centroids),
            "sgns_sentence" => Some(&self.sentence_centroids),
            _ => None,
        }
    }

    fn sentence_symbol_vector(&self, symbol: &str) -> Vec<S> {
        match self.sentence.vector(symbol) {
            Some(v) => v.to_vec(),
            None => vec![S::zero(); self.sentence.dim()],
        }
    }

    /// Compute every per-sample intermediate (field vectors in all four
    /// source spaces, encoder queries/scores, statistical features).
    pub fn sample_features(
        &self,
        pointwise: &EncoderModel<S>,
        pairwise: &EncoderModel<S>,
        prep: &Preprocessor,
        sample: &Sample,
    ) -> Result<SampleFeatures<S>> {
        for (mode, model) in [("pointwise", pointwise), ("pairwise", pairwise)] {
            if model.label_count() != self.label_count {
                return Err(Error::invalid(format!(
                    "{mode} encoder covers {} categories but the feature bank covers {}",
                    model.label_count(),
                    self.label_count
                )));
            }
        }
        let text_doc = prep.word_doc(&sample.text);
        let reply_doc = prep.word_doc(&sample.reply);
        let pair = prep.pair_tokens(&sample.text, &sample.reply);
        let point_query = pointwise.encode_pair(&pair);
        let pair_query = pairwise.encode_pair(&pair);
        let mut query_distances = Matrix::zeros(self.label_count, 6);
        for k in 0..self.label_count {
            let (pe, pm, pc) = distances(&point_query, pointwise.category_embedding(k)?)?;
            let (qe, qm, qc) = distances(&pair_query, pairwise.category_embedding(k)?)?;
            let row = query_distances.row_mut(k);
            row.copy_from_slice(&[pe, pm, pc, qe, qm, qc]);
        }
        Ok(SampleFeatures {
            tfidf_text: self.tfidf.vectorize(&text_doc),
            tfidf_reply: self.tfidf.vectorize(&reply_doc),
            word_text: sentence_vector(&self.word, &text_doc),
            word_reply: sentence_vector(&self.word, &reply_doc),
            subword_text: self.subword.mean_vector(&text_doc),
            subword_reply: self.subword.mean_vector(&reply_doc),
            sentence_text: self.sentence_symbol_vector(&prep.sentence_symbol(&sample.text)),
            sentence_reply: self.sentence_symbol_vector(&prep.sentence_symbol(&sample.reply)),
            query_distances,
            pointwise_scores: pointwise.scores(&point_query),
            pairwise_scores: pairwise.scores(&pair_query),
            stats: statistical_features(sample, prep, &self.tfidf, self.keyword_top_k),
        })
    }

    /// The full 38-value feature row for one candidate, in schema order.
    pub fn candidate_row(&self, f: &SampleFeatures<S>, candidate: usize) -> Result<Vec<S>> {
        if candidate >= self.label_count {
            return Err(Error::CategoryOutOfRange {
                id: candidate,
                count: self.label_count,
            });
        }
        let mut row = Vec::with_capacity(FEATURE_COUNT);
        for sparse in [&f.tfidf_text, &f.tfidf_reply] {
            let (e, m, c) = sparse_dense_distances(
                sparse,
                self.tfidf_centroids.row(candidate),
                self.tfidf_centroid_l1[candidate],
                self.tfidf_centroid_sq[candidate],
            )?;
            row.extend([e, m, c]);
        }
        let dense_pairs: [(&[S], &Matrix<S>); 6] = [
            (&f.word_text, &self.word_centroids),
            (&f.word_reply, &self.word_centroids),
            (&f.subword_text, &self.subword_centroids),
            (&f.subword_reply, &self.subword_centroids),
            (&f.sentence_text, &self.sentence_centroids),
            (&f.sentence_reply, &self.sentence_centroids),
        ];
        for (v, centroids) in dense_pairs {
            let (e, m, c) = distances(v, centroids.row(candidate))?;
            row.extend([e, m, c]);
        }
        row.extend_from_slice(f.query_distances.row(candidate));
        row.push(f.pointwise_scores[candidate]);
        row.push(f.pairwise_scores[candidate]);
        row.extend_from_slice(&f.stats);
        debug_assert_eq!(row.len(), FEATURE_COUNT);
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature row for sample idx unknown, candidate {candidate}"
            )));
        }
        Ok(row)
    }
}

fn centroid_norms<S: Scalar>(m: &Matrix<S>) -> (Vec<S>, Vec<S>) {
    let mut l1 = Vec::with_capacity(m.rows());
    let mut sq = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let row = m.row(r);
        l1.push(row.iter().fold(S::zero(), |acc, &x| acc + x.abs()));
        sq.push(row.iter().fold(S::zero(), |acc, &x| acc + x * x));
    }
    (l1, sq)
}

/// One-shot assembly of the feature vector for a (sample, candidate)
/// pair. When assembling many candidates for one sample, prefer
/// [`FeatureBank::sample_features`] + [`FeatureBank::candidate_row`].
pub fn assemble_features<S: Scalar>(
    bank: &FeatureBank<S>,
    pointwise: &EncoderModel<S>,
    pairwise: &EncoderModel<S>,
    prep: &Preprocessor,
    sample: &Sample,
    candidate: usize,
) -> Result<Vec<S>> {
    let f = bank.sample_features(pointwise, pairwise, prep, sample)?;
    bank.candidate_row(&f, candidate)
}

pub fn save_feature_bank<S: Scalar>(
    bank: &FeatureBank<S>,
    mut w: impl Write,
    config_hash: u64,
) -> Result<()> {
    binio::write_header(
        &mut w,
        binio::ArtifactKind::FeatureModels,
        FEATBANK_FORMAT_VERSION,
        config_hash,
    )?;
    binio::write_usize(&mut w, bank.keyword_top_k)?;
    binio::write_usize(&mut w, bank.label_count)?;
    binio::write_strings(&mut w, bank.tfidf.terms())?;
    binio::write_slice(&mut w, bank.tfidf.idf_weights())?;
    binio::write_usize(&mut w, bank.tfidf.doc_count())?;
    binio::write_strings(&mut w, bank.word.terms())?;
    binio::write_matrix(&mut w, bank.word.matrix())?;
    let (ngram_min, ngram_max) = bank.subword.ngram_range();
    binio::write_usize(&mut w, ngram_min)?;
    binio::write_usize(&mut w, ngram_max)?;
    binio::write_matrix(&mut w, bank.subword.matrix())?;
    binio::write_strings(&mut w, bank.sentence.terms())?;
    binio::write_matrix(&mut w, bank.sentence.matrix())?;
    binio::write_matrix(&mut w, &bank.tfidf_centroids)?;
    binio::write_matrix(&mut w, &bank.word_centroids)?;
    binio::write_matrix(&mut w, &bank.subword_centroids)?;
    binio::write_matrix(&mut w, &bank.sentence_centroids)?;
    Ok(())
}

/// Returns the bank and the config hash recorded at save time.
pub fn load_feature_bank<S: Scalar>(mut r: impl Read) -> Result<(FeatureBank<S>, u64)> {
    let config_hash = binio::read_header(
        &mut r,
        binio::ArtifactKind::FeatureModels,
        FEATBANK_FORMAT_VERSION,
    )?;
    let keyword_top_k = binio::read_usize(&mut r)?;
    let label_count = binio::read_usize(&mut r)?;
    let tfidf_terms = binio::read_strings(&mut r)?;
    let idf: Vec<S> = binio::read_vec(&mut r)?;
    let doc_count = binio::read_usize(&mut r)?;
    let tfidf = TfIdfModel::from_parts(tfidf_terms, idf, doc_count)?;
    let word_terms = binio::read_strings(&mut r)?;
    let word = WordEmbeddings::from_parts(word_terms, binio::read_matrix(&mut r)?)?;
    let ngram_min = binio::read_usize(&mut r)?;
    let ngram_max = binio::read_usize(&mut r)?;
    let subword = SubwordEmbeddings::from_parts(ngram_min, ngram_max, binio::read_matrix(&mut r)?)?;
    let sentence_terms = binio::read_strings(&mut r)?;
    let sentence = WordEmbeddings::from_parts(sentence_terms, binio::read_matrix(&mut r)?)?;
    let tfidf_centroids = binio::read_matrix(&mut r)?;
    let word_centroids = binio::read_matrix(&mut r)?;
    let subword_centroids = binio::read_matrix(&mut r)?;
    let sentence_centroids = binio::read_matrix(&mut r)?;
    let bank = FeatureBank::from_parts(
        keyword_top_k,
        label_count,
        tfidf,
        word,
        subword,
        sentence,
        tfidf_centroids,
        word_centroids,
        subword_centroids,
        sentence_centroids,
    )?;
    Ok((bank, config_hash))
}

/// Which candidate categories get a feature row per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateSet {
    /// Every category (validation and prediction).
    All,
    /// Gold labels plus up to `negatives_per_positive × |gold|` sampled
    /// non-gold categories (training).
    SampledNegatives {
        negatives_per_positive: usize,
        seed: u64,
    },
}

/// Grouped feature matrix: one group of candidate rows per sample, in
/// dataset order, rows within a group in ascending candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<S: Scalar> {
    schema: FeatureSchema,
    values: Vec<S>,
    idx: Vec<u64>,
    candidates: Vec<u64>,
    relevance: Vec<u8>,
    offsets: Vec<usize>,
}

impl<S: Scalar> FeatureMatrix<S> {
    pub fn new(schema: FeatureSchema) -> Self {
        FeatureMatrix {
            schema,
            values: Vec::new(),
            idx: Vec::new(),
            candidates: Vec::new(),
            relevance: Vec::new(),
            offsets: vec![0],
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn feature_count(&self) -> usize {
        self.schema.len()
    }

    pub fn n_rows(&self) -> usize {
        self.relevance.len()
    }

    pub fn n_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    /// Append one sample's rows: `(candidate, relevance, features)`
    /// sorted by ascending candidate id.
    pub fn add_group(&mut self, idx: u64, rows: Vec<(usize, u8, Vec<S>)>) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::invalid("a feature group needs at least one row"));
        }
        if rows.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid(format!(
                "candidates in the group for sample idx {idx} must be strictly increasing"
            )));
        }
        for (candidate, relevance, row) in &rows {
            if row.len() != self.schema.len() {
                return Err(Error::LengthMismatch {
                    left: self.schema.len(),
                    right: row.len(),
                });
            }
            if *relevance > 1 {
                return Err(Error::invalid(format!(
                    "relevance must be 0 or 1, got {relevance} for candidate {candidate}"
                )));
            }
        }
        for (candidate, relevance, row) in rows {
            self.values.extend_from_slice(&row);
            self.idx.push(idx);
            self.candidates.push(candidate as u64);
            self.relevance.push(relevance);
        }
        self.offsets.push(self.relevance.len());
        Ok(())
    }

    /// Row range of group `g`.
    pub fn group(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }

    pub fn row(&self, r: usize) -> &[S] {
        let w = self.schema.len();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn feature(&self, r: usize, column: usize) -> S {
        self.values[r * self.schema.len() + column]
    }

    pub fn relevance(&self, r: usize) -> u8 {
        self.relevance[r]
    }

    /// All relevance labels, indexed by row.
    pub fn relevance_slice(&self) -> &[u8] {
        &self.relevance
    }

    pub fn candidate(&self, r: usize) -> usize {
        self.candidates[r] as usize
    }

    pub fn sample_idx(&self, r: usize) -> u64 {
        self.idx[r]
    }

    /// Columnar text export: header `idx,candidate,relevance,<names…>`,
    /// one row per (sample idx, candidate id).
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        write!(w, "idx,candidate,relevance")?;
        for name in self.schema.names() {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for r in 0..self.n_rows() {
            write!(w, "{},{},{}", self.idx[r], self.candidates[r], self.relevance[r])?;
            for v in self.row(r) {
                write!(w, ",{}", Scalar::to_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, mut w: impl Write, config_hash: u64) -> Result<()> {
        binio::write_header(
            &mut w,
            binio::ArtifactKind::FeatureMatrix,
            MATRIX_FORMAT_VERSION,
            config_hash,
        )?;
        binio::write_strings(&mut w, self.schema.names())?;
        binio::write_usize(&mut w, self.n_rows())?;
        binio::write_slice(&mut w, &self.values)?;
        for &i in &self.idx {
            binio::write_u64(&mut w, i)?;
        }
        for &c in &self.candidates {
            binio::write_u64(&mut w, c)?;
        }
        for &rel in &self.relevance {
            binio::write_u64(&mut w, rel as u64)?;
        }
        binio::write_usize(&mut w, self.offsets.len())?;
        for &o in &self.offsets {
            binio::write_usize(&mut w, o)?;
        }
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<(Self, u64)> {
        let config_hash = binio::read_header(
            &mut r,
            binio::ArtifactKind::FeatureMatrix,
            MATRIX_FORMAT_VERSION,
        )?;
        let schema = FeatureSchema::from_names(binio::read_strings(&mut r)?);
        let n_rows = binio::read_usize(&mut r)?;
        let values: Vec<S> = binio::read_vec(&mut r)?;
        if values.len() != n_rows * schema.len() {
            return Err(Error::invalid(format!(
                "feature matrix holds {} values, expected {} rows × {} features",
                values.len(),
                n_rows,
                schema.len()
            )));
        }
        let mut idx = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            idx.push(binio::read_u64(&mut r)?);
        }
        let mut candidates = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            candidates.push(binio::read_u64(&mut r)?);
        }
        let mut relevance = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let rel = binio::read_u64(&mut r)?;
            if rel > 1 {
                return Err(Error::invalid(format!("relevance must be 0 or 1, got {rel}")));
            }
            relevance.push(rel as u8);
        }
        let offset_count = binio::read_usize(&mut r)?;
        let mut offsets = Vec::with_capacity(offset_count);
        for _ in 0..offset_count {
            offsets.push(binio::read_usize(&mut r)?);
        }
        if offsets.first() != Some(&0)
            || offsets.last() != Some(&n_rows)
            || offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::invalid("feature matrix group offsets are inconsistent"));
        }
        Ok((
            FeatureMatrix {
                schema,
                values,
                idx,
                candidates,
                relevance,
                offsets,
            },
            config_hash,
        ))
    }
}

/// Assemble the grouped feature matrix for a dataset. Returns the matrix
/// and the number of groups dropped because sampling left them without
/// both a positive and a negative row (training mode only).
pub fn build_feature_matrix<S: Scalar>(
    bank: &FeatureBank<S>,
    pointwise: &EncoderModel<S>,
    pairwise: &EncoderModel<S>,
    prep: &Preprocessor,
    dataset: &Dataset,
    vocab: &LabelVocab,
    candidates: &CandidateSet,
) -> Result<(FeatureMatrix<S>, usize)> {
    if vocab.len() != bank.label_count() {
        return Err(Error::invalid(format!(
            "label vocabulary has {} categories but the feature bank covers {}",
            vocab.len(),
            bank.label_count()
        )));
    }
    let mut rng = match candidates {
        CandidateSet::All => None,
        CandidateSet::SampledNegatives { seed, .. } => {
            if !dataset.labeled() {
                return Err(Error::Unlabeled);
            }
            Some(ChaCha8Rng::seed_from_u64(derive_seed(
                *seed,
                "featbank-negatives",
            )))
        }
    };
    let mut matrix = FeatureMatrix::new(bank.schema().clone());
    let mut dropped = 0usize;
    for sample in dataset.iter() {
        let gold: HashSet<usize> = if sample.is_labeled() {
            vocab.gold_ids(sample)?.into_iter().collect()
        } else {
            HashSet::new()
        };
        let ids: Vec<usize> = match (candidates, rng.as_mut()) {
            (CandidateSet::All, _) => (0..vocab.len()).collect(),
            (
                CandidateSet::SampledNegatives {
                    negatives_per_positive,
                    ..
                },
                Some(rng),
            ) => {
                let gold_sorted: Vec<usize> = {
                    let mut g: Vec<usize> = gold.iter().copied().collect();
                    g.sort_unstable();
                    g
                };
                let want = negatives_per_positive * gold_sorted.len();
                let available = vocab.len() - gold_sorted.len();
                let negatives =
                    sample_negatives(&gold_sorted, vocab.len(), want.min(available), rng)?;
                let mut ids = gold_sorted;
                ids.extend(negatives);
                ids.sort_unstable();
                ids
            }
            _ => unreachable!("rng is Some exactly in sampled mode"),
        };
        let has_pos = ids.iter().any(|id| gold.contains(id));
        let has_neg = ids.iter().any(|id| !gold.contains(id));
        if matches!(candidates, CandidateSet::SampledNegatives { .. }) && !(has_pos && has_neg) {
            dropped += 1;
            continue;
        }
        let feats = bank.sample_features(pointwise, pairwise, prep, sample)?;
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let row = bank.candidate_row(&feats, id)?;
            rows.push((id, u8::from(gold.contains(&id)), row));
        }
        matrix.add_group(sample.idx, rows)?;
    }
    Ok((matrix, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_label_vocab;
    use crate::encoder::{EncoderConfig, EncoderModel, TokenIndex};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn sample(idx: u64, text: &str, reply: &str, categories: &[&str]) -> Sample {
        Sample {
            idx,
            text: text.to_string(),
            reply: reply.to_string(),
            mp4: None,
            categories: if categories.is_empty() {
                None
            } else {
                Some(categories.iter().map(|s| s.to_string()).collect())
            },
        }
    }

    fn doc(tokens: &[&str]) -> TokenizedText {
        TokenizedText::new(tokens.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn distance_examples_hold() {
        let (e, m, c) = distances(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!((e, m, c), (5.0, 7.0, 1.0));
        let (e, m, c) = distances(&[3.0, 4.0], &[3.0, 4.0]).unwrap();
        assert_eq!((e, m, c), (0.0, 0.0, 0.0));
        let (e, m, c) = distances(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_relative_eq!(e, std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert_eq!((m, c), (2.0, 1.0));
    }

    #[test]
    fn distance_of_two_zero_vectors_uses_the_convention() {
        let (e, m, c) = distances(&[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!((e, m, c), (0.0, 0.0, 1.0));
    }

    #[test]
    fn distance_length_mismatch_is_an_error() {
        assert!(matches!(
            distances(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    proptest! {
        #[test]
        fn distance_invariants(
            u in proptest::collection::vec(-10.0f64..10.0, 1..8),
            v in proptest::collection::vec(-10.0f64..10.0, 1..8),
        ) {
            let n = u.len().min(v.len());
            let (u, v) = (&u[..n], &v[..n]);
            let (e, m, c) = distances(u, v).unwrap();
            prop_assert!(e >= 0.0 && m >= 0.0);
            prop_assert!((0.0..=2.0).contains(&c));
            let (e2, m2, c2) = distances(v, u).unwrap();
            prop_assert_eq!((e, m, c), (e2, m2, c2));
            let (es, ms, cs) = distances(u, u).unwrap();
            prop_assert_eq!(es, 0.0);
            prop_assert_eq!(ms, 0.0);
            if u.iter().any(|&x| x != 0.0) {
                prop_assert_eq!(cs, 0.0);
            }
        }

        #[test]
        fn sparse_dense_matches_dense(
            dim in 3usize..10,
            seed in 0u64..500,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for j in 0..dim {
                if rng.gen_bool(0.4) {
                    entries.push((j, rng.gen_range(-2.0..2.0)));
                }
            }
            entries.retain(|&(_, x)| x != 0.0);
            let s = SparseVec::new(dim, entries);
            let dense: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let l1 = dense.iter().map(|x| x.abs()).sum::<f64>();
            let sq = dense.iter().map(|x| x * x).sum::<f64>();
            let (e1, m1, c1) = sparse_dense_distances(&s, &dense, l1, sq).unwrap();
            let (e2, m2, c2) = distances(&s.to_dense(), &dense).unwrap();
            prop_assert!((e1 - e2).abs() <= 1e-9, "euclidean {} vs {}", e1, e2);
            prop_assert!((m1 - m2).abs() <= 1e-9, "manhattan {} vs {}", m1, m2);
            prop_assert!((c1 - c2).abs() <= 1e-9, "cosine {} vs {}", c1, c2);
        }
    }

    #[test]
    fn centroid_examples_hold() {
        let vectors = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![4.0, 4.0]];
        let gold = vec![vec![0], vec![0], vec![1]];
        let (m, empty) = build_label_centroids(&vectors, &gold, 3).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
        assert_eq!(m.row(1), &[4.0, 4.0]);
        assert_eq!(m.row(2), &[0.0, 0.0]);
        assert_eq!(empty, vec![2]);
    }

    #[test]
    fn centroid_out_of_range_label_is_an_error() {
        let vectors = vec![vec![1.0]];
        let gold = vec![vec![5]];
        assert!(matches!(
            build_label_centroids(&vectors, &gold, 3),
            Err(Error::CategoryOutOfRange { id: 5, count: 3 })
        ));
    }

    #[test]
    fn sparse_centroids_match_dense_centroids() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 7;
        let mut sparse = Vec::new();
        let mut dense = Vec::new();
        let mut gold = Vec::new();
        for _ in 0..30 {
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for j in 0..dim {
                if rng.gen_bool(0.5) {
                    entries.push((j, rng.gen_range(-1.0..1.0)));
                }
            }
            let s = SparseVec::new(dim, entries);
            dense.push(s.to_dense());
            sparse.push(s);
            gold.push(vec![rng.gen_range(0..4usize)]);
        }
        let (a, ea) = build_label_centroids_sparse(&sparse, &gold, 5).unwrap();
        let (b, eb) = build_label_centroids(&dense, &gold, 5).unwrap();
        assert_eq!(ea, eb);
        for r in 0..5 {
            for j in 0..dim {
                assert_relative_eq!(a.row(r)[j], b.row(r)[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn word_corpus_strips_emoji_and_splits_fields() {
        let prep = Preprocessor::default();
        let data = Dataset::new(vec![sample(
            0,
            "Fell right under my trap",
            "Ouch! 😂",
            &["oops"],
        )])
        .unwrap();
        let docs = build_word_corpus(&data, &prep);
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].tokens(), &["fell", "right", "under", "my", "trap"]);
        assert_eq!(docs[1].tokens(), &["ouch", "!"]);
    }

    #[test]
    fn empty_text_keeps_an_empty_document_for_alignment() {
        let prep = Preprocessor::default();
        let data = Dataset::new(vec![sample(0, "", "ok", &["fine"])]).unwrap();
        let docs = build_word_corpus(&data, &prep);
        assert_eq!(docs.len(), 2);
        assert!(docs[0].is_empty());
        assert_eq!(docs[1].tokens(), &["ok"]);
    }

    #[test]
    fn sentence_corpus_uses_atomic_stripped_symbols() {
        let prep = Preprocessor::default();
        let data = Dataset::new(vec![sample(0, "Hello there", "Ouch! 😂", &["oops"])]).unwrap();
        let docs = build_sentence_corpus(&data, &prep);
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].tokens(), &["hello there", "ouch!"]);
    }

    fn toy_tfidf() -> TfIdfModel<f64> {
        TfIdfModel::fit(&[doc(&["a", "b"]), doc(&["a", "c"])]).unwrap()
    }

    #[test]
    fn keyword_weight_sums_the_top_normalized_weights() {
        let model = toy_tfidf();
        // Hand oracle: normalized weights (1, ln(3/2)+1)/‖·‖ summed.
        let idf_b = (3.0f64 / 2.0).ln() + 1.0;
        let norm = (1.0 + idf_b * idf_b).sqrt();
        let w = keyword_weight(&model, &doc(&["a", "b"]), 3);
        assert_relative_eq!(w, (1.0 + idf_b) / norm, epsilon = 1e-12);
        assert_relative_eq!(w, 1.394541, epsilon = 1e-6);
        // top-1 keeps only the largest weight (term "b", rarer).
        let w1 = keyword_weight(&model, &doc(&["a", "b"]), 1);
        assert_relative_eq!(w1, idf_b / norm, epsilon = 1e-12);
        assert_eq!(keyword_weight(&model, &doc(&["z"]), 3), 0.0);
    }

    #[test]
    fn statistical_features_match_hand_counts() {
        let prep = Preprocessor::default();
        let model = toy_tfidf();
        let s = sample(0, "", "Ouch! 😂😂", &["oops"]);
        let feats = statistical_features(&s, &prep, &model, 3);
        assert_eq!(feats[0], 0.0); // emoji_count_text
        assert_eq!(feats[1], 2.0); // emoji_count_reply
        assert_eq!(feats[2], 0.0); // token_count_text
        assert_eq!(feats[3], 2.0); // token_count_reply: ["ouch", "!"]
        assert_eq!(feats[4], 0.0); // keyword_weight_text
    }

    #[test]
    fn schema_has_38_unique_stable_names() {
        let schema = FeatureSchema::standard();
        assert_eq!(schema.len(), FEATURE_COUNT);
        let unique: HashSet<&String> = schema.names().iter().collect();
        assert_eq!(unique.len(), FEATURE_COUNT);
        assert_eq!(schema.names()[0], "tfidf_word_text_euclidean");
        assert_eq!(schema.position("pointwise_score"), Some(30));
        assert_eq!(schema.position("pairwise_score"), Some(31));
        assert_eq!(schema.position("keyword_weight_reply"), Some(37));
        assert_eq!(schema.hash(), FeatureSchema::standard().hash());
        assert_ne!(
            schema.hash(),
            FeatureSchema::from_names(vec!["x".into()]).hash()
        );
    }

    /// Small labeled dataset, bank, and two untrained encoders shared by
    /// the assembly tests.
    fn fixture() -> (
        Dataset,
        LabelVocab,
        Preprocessor,
        FeatureBank<f64>,
        EncoderModel<f64>,
        EncoderModel<f64>,
    ) {
        let data = Dataset::new(vec![
            sample(0, "funny cat video", "lol that cat 😂", &["haha", "cute"]),
            sample(1, "sad news today", "oh no terrible", &["sad"]),
            sample(2, "look at this dog", "so cute omg", &["cute"]),
            sample(3, "", "speechless 😂", &["haha", "wow"]),
        ])
        .unwrap();
        let vocab = build_label_vocab(&data).unwrap();
        let prep = Preprocessor::default();
        let config = FeatbankConfig {
            word: SgnsConfig {
                dim: 8,
                epochs: 2,
                ..SgnsConfig::default()
            },
            subword: SubwordConfig {
                sgns: SgnsConfig {
                    dim: 8,
                    epochs: 2,
                    ..SgnsConfig::default()
                },
                bucket_count: 1 << 10,
                ..SubwordConfig::default()
            },
            sentence: SgnsConfig {
                dim: 8,
                epochs: 2,
                ..SgnsConfig::default()
            },
            keyword_top_k: 3,
        };
        let (bank, empty) = FeatureBank::fit(&data, &vocab, &prep, &config, 7).unwrap();
        assert!(empty.is_empty());
        let enc_config = EncoderConfig {
            token_dim: 6,
            category_dim: 6,
            seed: 11,
            ..EncoderConfig::default()
        };
        let docs: Vec<TokenizedText> = data
            .iter()
            .map(|s| prep.pair_tokens(&s.text, &s.reply))
            .collect();
        let index = TokenIndex::from_token_lists(&docs);
        let pointwise = EncoderModel::<f64>::init(&enc_config, index.clone(), vocab.len()).unwrap();
        let enc_config2 = EncoderConfig {
            seed: 12,
            ..enc_config
        };
        let pairwise = EncoderModel::<f64>::init(&enc_config2, index, vocab.len()).unwrap();
        (data, vocab, prep, bank, pointwise, pairwise)
    }

    #[test]
    fn assembled_row_has_fixed_schema_length() {
        let (data, _, prep, bank, pointwise, pairwise) = fixture();
        for s in data.iter() {
            for k in 0..bank.label_count() {
                let row = assemble_features(&bank, &pointwise, &pairwise, &prep, s, k).unwrap();
                assert_eq!(row.len(), FEATURE_COUNT);
                assert!(row.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn empty_text_gives_unit_cosine_on_all_text_side_sources() {
        let (data, _, prep, bank, pointwise, pairwise) = fixture();
        let s = &data.samples()[3]; // empty text
        let schema = bank.schema().clone();
        let row = assemble_features(&bank, &pointwise, &pairwise, &prep, s, 0).unwrap();
        for source in SOURCES {
            let pos = schema.position(&format!("{source}_text_cosine")).unwrap();
            assert_eq!(row[pos], 1.0, "{source} text cosine");
        }
    }

    #[test]
    fn candidates_differ_only_in_candidate_dependent_features() {
        let (data, _, prep, bank, pointwise, pairwise) = fixture();
        let s = &data.samples()[0];
        let feats = bank.sample_features(&pointwise, &pairwise, &prep, s).unwrap();
        let a = bank.candidate_row(&feats, 0).unwrap();
        let b = bank.candidate_row(&feats, 1).unwrap();
        // The six statistical features are candidate-independent.
        assert_eq!(a[32..], b[32..]);
        // The raw scores differ between candidates for this fixture.
        let score_pos = bank.schema().position("pointwise_score").unwrap();
        assert_ne!(a[score_pos], b[score_pos]);
    }

    #[test]
    fn candidate_out_of_range_is_an_error() {
        let (data, _, prep, bank, pointwise, pairwise) = fixture();
        let s = &data.samples()[0];
        let feats = bank.sample_features(&pointwise, &pairwise, &prep, s).unwrap();
        assert!(matches!(
            bank.candidate_row(&feats, bank.label_count()),
            Err(Error::CategoryOutOfRange { .. })
        ));
    }

    #[test]
    fn mismatched_encoder_label_count_is_an_error() {
        let (data, vocab, prep, bank, pointwise, _) = fixture();
        let enc_config = EncoderConfig {
            token_dim: 6,
            category_dim: 6,
            seed: 13,
            ..EncoderConfig::default()
        };
        let small = EncoderModel::<f64>::init(
            &enc_config,
            TokenIndex::from_token_lists(&[doc(&["x"])]),
            vocab.len() + 1,
        )
        .unwrap();
        let err = bank
            .sample_features(&pointwise, &small, &prep, &data.samples()[0])
            .unwrap_err();
        assert!(err.to_string().contains("pairwise encoder"));
    }

    #[test]
    fn fitting_is_deterministic_and_transforms_do_not_mutate() {
        let (data, vocab, prep, bank, pointwise, pairwise) = fixture();
        let config = FeatbankConfig {
            word: SgnsConfig {
                dim: 8,
                epochs: 2,
                ..SgnsConfig::default()
            },
            subword: SubwordConfig {
                sgns: SgnsConfig {
                    dim: 8,
                    epochs: 2,
                    ..SgnsConfig::default()
                },
                bucket_count: 1 << 10,
                ..SubwordConfig::default()
            },
            sentence: SgnsConfig {
                dim: 8,
                epochs: 2,
                ..SgnsConfig::default()
            },
            keyword_top_k: 3,
        };
        let (bank2, _) = FeatureBank::fit(&data, &vocab, &prep, &config, 7).unwrap();
        assert_eq!(bank, bank2);
        let mut before = Vec::new();
        save_feature_bank(&bank, &mut before, 1).unwrap();
        for s in data.iter() {
            assemble_features(&bank, &pointwise, &pairwise, &prep, s, 0).unwrap();
        }
        let mut after = Vec::new();
        save_feature_bank(&bank, &mut after, 1).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn feature_bank_round_trips_through_binary() {
        let (_, _, _, bank, _, _) = fixture();
        let mut buf = Vec::new();
        save_feature_bank(&bank, &mut buf, 0xfeed).unwrap();
        let (loaded, hash) = load_feature_bank::<f64>(&buf[..]).unwrap();
        assert_eq!(hash, 0xfeed);
        assert_eq!(loaded, bank);
        // Saving the loaded bank reproduces the bytes exactly.
        let mut buf2 = Vec::new();
        save_feature_bank(&loaded, &mut buf2, 0xfeed).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn feature_bank_load_rejects_wrong_kind_and_version() {
        let (_, _, _, bank, _, _) = fixture();
        let mut buf = Vec::new();
        save_feature_bank(&bank, &mut buf, 0).unwrap();
        // Kind byte patched to the encoder kind.
        let mut wrong_kind = buf.clone();
        wrong_kind[4] = binio::ArtifactKind::Encoder as u8;
        assert!(load_feature_bank::<f64>(&wrong_kind[..]).is_err());
        // Future version.
        let mut wrong_version = buf.clone();
        wrong_version[8] = 99;
        assert!(matches!(
            load_feature_bank::<f64>(&wrong_version[..]),
            Err(Error::UnsupportedVersion { .. })
        ));
    }

    fn tiny_matrix() -> FeatureMatrix<f64> {
        let schema = FeatureSchema::from_names(vec!["f0".into(), "f1".into()]);
        let mut m = FeatureMatrix::new(schema);
        m.add_group(
            7,
            vec![
                (0, 1, vec![1.0, 2.0]),
                (2, 0, vec![3.0, 4.5]),
            ],
        )
        .unwrap();
        m.add_group(9, vec![(1, 0, vec![-1.0, 0.25])]).unwrap();
        m
    }

    #[test]
    fn feature_matrix_groups_and_accessors() {
        let m = tiny_matrix();
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.n_groups(), 2);
        assert_eq!(m.group(0), 0..2);
        assert_eq!(m.group(1), 2..3);
        assert_eq!(m.row(1), &[3.0, 4.5]);
        assert_eq!(m.feature(1, 1), 4.5);
        assert_eq!(m.candidate(1), 2);
        assert_eq!(m.sample_idx(2), 9);
        assert_eq!(m.relevance(0), 1);
    }

    #[test]
    fn feature_matrix_add_group_validates() {
        let schema = FeatureSchema::from_names(vec!["f0".into()]);
        let mut m = FeatureMatrix::new(schema);
        assert!(m.add_group(0, vec![]).is_err());
        assert!(m
            .add_group(0, vec![(1, 0, vec![1.0]), (1, 0, vec![2.0])])
            .is_err()); // duplicate candidate
        assert!(m
            .add_group(0, vec![(2, 0, vec![1.0]), (1, 0, vec![2.0])])
            .is_err()); // descending
        assert!(m.add_group(0, vec![(0, 0, vec![1.0, 2.0])]).is_err()); // width
        assert!(m.add_group(0, vec![(0, 2, vec![1.0])]).is_err()); // relevance
        assert!(m.add_group(0, vec![(0, 1, vec![1.0])]).is_ok());
    }

    #[test]
    fn feature_matrix_csv_is_exact() {
        let m = tiny_matrix();
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "idx,candidate,relevance,f0,f1\n\
             7,0,1,1,2\n\
             7,2,0,3,4.5\n\
             9,1,0,-1,0.25\n"
        );
    }

    #[test]
    fn feature_matrix_round_trips_through_binary() {
        let m = tiny_matrix();
        let mut buf = Vec::new();
        m.save(&mut buf, 42).unwrap();
        let (loaded, hash) = FeatureMatrix::<f64>::load(&buf[..]).unwrap();
        assert_eq!(hash, 42);
        assert_eq!(loaded, m);
    }

    #[test]
    fn build_matrix_all_mode_emits_every_candidate() {
        let (data, vocab, prep, bank, pointwise, pairwise) = fixture();
        let (m, dropped) = build_feature_matrix(
            &bank,
            &pointwise,
            &pairwise,
            &prep,
            &data,
            &vocab,
            &CandidateSet::All,
        )
        .unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(m.n_groups(), data.len());
        assert_eq!(m.n_rows(), data.len() * vocab.len());
        // Rows in ascending candidate order with relevance matching gold.
        let gold0 = vocab.gold_ids(&data.samples()[0]).unwrap();
        for r in m.group(0) {
            assert_eq!(m.candidate(r), r);
            let expected = u8::from(gold0.contains(&m.candidate(r)));
            assert_eq!(m.relevance(r), expected);
        }
    }

    #[test]
    fn build_matrix_sampled_mode_clamps_group_sizes() {
        let (data, vocab, prep, bank, pointwise, pairwise) = fixture();
        let (m, dropped) = build_feature_matrix(
            &bank,
            &pointwise,
            &pairwise,
            &prep,
            &data,
            &vocab,
            &CandidateSet::SampledNegatives {
                negatives_per_positive: 4,
                seed: 5,
            },
        )
        .unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(m.n_groups(), data.len());
        for (g, s) in data.iter().enumerate() {
            let gold = vocab.gold_ids(s).unwrap();
            let want = (4 * gold.len()).min(vocab.len() - gold.len());
            assert_eq!(m.group(g).len(), gold.len() + want);
            let positives = m.group(g).filter(|&r| m.relevance(r) == 1).count();
            assert_eq!(positives, gold.len());
        }
    }

    #[test]
    fn build_matrix_is_deterministic() {
        let (data, vocab, prep, bank, pointwise, pairwise) = fixture();
        let set = CandidateSet::SampledNegatives {
            negatives_per_positive: 2,
            seed: 3,
        };
        let (a, _) =
            build_feature_matrix(&bank, &pointwise, &pairwise, &prep, &data, &vocab, &set)
                .unwrap();
        let (b, _) =
            build_feature_matrix(&bank, &pointwise, &pairwise, &prep, &data, &vocab, &set)
                .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn build_matrix_sampled_mode_requires_labels() {
        let (_, vocab, prep, bank, pointwise, pairwise) = fixture();
        let unlabeled = Dataset::new(vec![sample(0, "hi", "yo", &[])]).unwrap();
        let err = build_feature_matrix(
            &bank,
            &pointwise,
            &pairwise,
            &prep,
            &unlabeled,
            &vocab,
            &CandidateSet::SampledNegatives {
                negatives_per_positive: 4,
                seed: 1,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unlabeled));
    }
}
