//! Skip-gram-with-negative-sampling embeddings at word, subword, and
//! sentence granularity.
//!
//! The word and sentence models share one trainer (a "term" is either a
//! word or an atomic sentence string). The subword model composes its
//! center vectors from hashed character n-gram buckets, so unseen words
//! still map to nonzero vectors.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{axpy, dot, scale, Matrix, Scalar};
use crate::textprep::TokenizedText;
use crate::util::{derive_seed, fnv1a64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr0: f64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr0: 0.025,
        }
    }
}

impl SgnsConfig {
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config(format!("{prefix}.dim"), "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::config(format!("{prefix}.window"), "must be positive"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config(format!("{prefix}.lr0"), "must be a finite positive real"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubwordConfig {
    pub sgns: SgnsConfig,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub bucket_count: usize,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        SubwordConfig {
            sgns: SgnsConfig::default(),
            ngram_min: 3,
            ngram_max: 6,
            bucket_count: 1 << 18,
        }
    }
}

impl SubwordConfig {
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        self.sgns.validate_at(prefix)?;
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::config(
                format!("{prefix}.ngram_min"),
                "need 0 < ngram_min <= ngram_max",
            ));
        }
        if self.bucket_count == 0 {
            return Err(Error::config(format!("{prefix}.bucket_count"), "must be positive"));
        }
        Ok(())
    }
}

/// Per-term dense vectors; unseen terms have no row (callers treat the
/// lookup miss as the zero vector).
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings<S: Scalar> {
    terms: Vec<String>,
    map: HashMap<String, usize>,
    vectors: Matrix<S>,
}

impl<S: Scalar> WordEmbeddings<S> {
    pub fn from_parts(terms: Vec<String>, vectors: Matrix<S>) -> Result<Self> {
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("embedding term table must be strictly sorted"));
        }
        if terms.len() != vectors.rows() {
            return Err(Error::LengthMismatch {
                left: terms.len(),
                right: vectors.rows(),
            });
        }
        let map = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(WordEmbeddings { terms, map, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.vectors
    }

    pub fn vector(&self, term: &str) -> Option<&[S]> {
        self.map.get(term).map(|&i| self.vectors.row(i))
    }
}

/// Mean of the per-token vectors, counting unseen tokens as zero
/// vectors; empty or all-unseen input gives the zero vector.
pub fn sentence_vector<S: Scalar>(embeddings: &WordEmbeddings<S>, tokens: &TokenizedText) -> Vec<S> {
    let mut v = vec![S::zero(); embeddings.dim()];
    if tokens.is_empty() {
        return v;
    }
    for token in tokens.iter() {
        if let Some(row) = embeddings.vector(token) {
            axpy(&mut v, S::one(), row);
        }
    }
    scale(&mut v, S::one() / S::from_usize(tokens.len()));
    v
}

/// Loss and gradients for one SGNS training pair:
/// `L = −ln σ(u_c·v_w) − Σ_i ln σ(−u_{n_i}·v_w)`.
///
/// Returns `(loss, dL/dv_w, dL/du_c, dL/du_n per negative)`.
pub fn sgns_pair_gradients<S: Scalar>(
    v_w: &[S],
    u_c: &[S],
    u_negs: &[Vec<S>],
) -> (S, Vec<S>, Vec<S>, Vec<Vec<S>>) {
    let s_pos = dot(u_c, v_w);
    let mut loss = (-s_pos).ln_1p_exp();
    let g_pos = s_pos.sigmoid() - S::one();
    let mut d_vw = vec![S::zero(); v_w.len()];
    axpy(&mut d_vw, g_pos, u_c);
    let mut d_uc = vec![S::zero(); u_c.len()];
    axpy(&mut d_uc, g_pos, v_w);
    let mut d_un = Vec::with_capacity(u_negs.len());
    for u_n in u_negs {
        let s_neg = dot(u_n, v_w);
        loss += s_neg.ln_1p_exp();
        let g_neg = s_neg.sigmoid();
        axpy(&mut d_vw, g_neg, u_n);
        let mut d = vec![S::zero(); u_n.len()];
        axpy(&mut d, g_neg, v_w);
        d_un.push(d);
    }
    (loss, d_vw, d_uc, d_un)
}

struct Vocab {
    terms: Vec<String>,
    map: HashMap<String, usize>,
    noise_cdf: Vec<f64>,
}

impl Vocab {
    /// Counts every term, orders them, and builds the unigram^0.75 noise
    /// distribution.
    fn build(corpus: &[TokenizedText]) -> Vocab {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for doc in corpus {
            for token in doc.iter() {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut terms = Vec::with_capacity(counts.len());
        let mut noise_cdf = Vec::with_capacity(counts.len());
        let mut cum = 0.0f64;
        for (term, count) in counts {
            terms.push(term.to_string());
            cum += (count as f64).powf(0.75);
            noise_cdf.push(cum);
        }
        let map = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { terms, map, noise_cdf }
    }

    fn len(&self) -> usize {
        self.terms.len()
    }

    fn draw_noise(&self, rng: &mut impl Rng) -> usize {
        let total = *self.noise_cdf.last().expect("non-empty vocab");
        let u = rng.gen_range(0.0..total);
        self.noise_cdf.partition_point(|&c| c <= u)
    }

    fn doc_ids(&self, doc: &TokenizedText) -> Vec<usize> {
        doc.iter().map(|t| self.map[t]).collect()
    }
}

fn init_matrix<S: Scalar>(rows: usize, dim: usize, seed: u64) -> Matrix<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 / dim as f64;
    Matrix::from_fn(rows, dim, |_, _| S::from_f64(rng.gen_range(-half..half)))
}

fn epoch_lr(config: &SgnsConfig, epoch: usize) -> f64 {
    let frac = 1.0 - epoch as f64 / config.epochs.max(1) as f64;
    (config.lr0 * frac).max(config.lr0 * 1e-4)
}

/// One SGD step for a (center-representation, context) pair with sampled
/// negatives. Output rows are updated in place; the center gradient is
/// accumulated into `d_center` for the caller to apply.
#[allow(clippy::too_many_arguments)]
fn pair_step<S: Scalar>(
    center: &[S],
    context: usize,
    output: &mut Matrix<S>,
    vocab: &Vocab,
    negatives: usize,
    lr: S,
    rng: &mut impl Rng,
    d_center: &mut [S],
) {
    for d in d_center.iter_mut() {
        *d = S::zero();
    }
    let g_pos = dot(output.row(context), center).sigmoid() - S::one();
    axpy(d_center, g_pos, output.row(context));
    axpy(output.row_mut(context), -lr * g_pos, center);
    for _ in 0..negatives {
        let n = vocab.draw_noise(rng);
        if n == context {
            continue;
        }
        let g_neg = dot(output.row(n), center).sigmoid();
        axpy(d_center, g_neg, output.row(n));
        axpy(output.row_mut(n), -lr * g_neg, center);
    }
}

/// Train word-level (or sentence-level: terms are atomic sentences)
/// embeddings by SGNS over a fixed symmetric window. Deterministic for a
/// given seed.
pub fn train_sgns<S: Scalar>(
    corpus: &[TokenizedText],
    config: &SgnsConfig,
    seed: u64,
) -> Result<WordEmbeddings<S>> {
    config.validate_at("sgns")?;
    if corpus.is_empty() {
        return Err(Error::invalid("SGNS corpus must be non-empty"));
    }
    let vocab = Vocab::build(corpus);
    let mut input = init_matrix::<S>(vocab.len(), config.dim, derive_seed(seed, "sgns-init"));
    let mut output = Matrix::zeros(vocab.len(), config.dim);
    if vocab.len() > 0 {
        let docs: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.doc_ids(d)).collect();
        let mut d_center = vec![S::zero(); config.dim];
        let mut center = vec![S::zero(); config.dim];
        for epoch in 0..config.epochs {
            let lr = S::from_f64(epoch_lr(config, epoch));
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("sgns-epoch-{epoch}")));
            for ids in &docs {
                for (i, &w) in ids.iter().enumerate() {
                    let lo = i.saturating_sub(config.window);
                    let hi = (i + config.window).min(ids.len().saturating_sub(1));
                    for (j, &context) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                        if j == i {
                            continue;
                        }
                        center.copy_from_slice(input.row(w));
                        pair_step(
                            &center,
                            context,
                            &mut output,
                            &vocab,
                            config.negatives,
                            lr,
                            &mut rng,
                            &mut d_center,
                        );
                        axpy(input.row_mut(w), -lr, &d_center);
                    }
                }
            }
        }
    }
    WordEmbeddings::from_parts(vocab.terms, input)
}

/// Bucket ids for a word: hashed character n-grams of `<word>` in the
/// given length range (n-grams equal to the whole framed word are
/// skipped), plus the whole-word bucket, in that order. Hash = FNV-1a
/// over UTF-8 bytes, modulo the bucket count.
pub fn word_buckets(word: &str, ngram_min: usize, ngram_max: usize, bucket_count: usize) -> Vec<usize> {
    let framed = format!("<{word}>");
    let chars: Vec<(usize, char)> = framed.char_indices().collect();
    let n = chars.len();
    let mut buckets = Vec::new();
    for start in 0..n {
        for len in ngram_min..=ngram_max {
            if start + len > n {
                break;
            }
            if len == n {
                continue; // covered by the whole-word bucket
            }
            let begin = chars[start].0;
            let end = if start + len < n {
                chars[start + len].0
            } else {
                framed.len()
            };
            buckets.push((fnv1a64(&framed.as_bytes()[begin..end]) % bucket_count as u64) as usize);
        }
    }
    buckets.push((fnv1a64(framed.as_bytes()) % bucket_count as u64) as usize);
    buckets
}

/// Hashed character-n-gram embeddings; a word's vector is the mean of
/// its bucket vectors, so out-of-vocabulary words still get nonzero
/// vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordEmbeddings<S: Scalar> {
    ngram_min: usize,
    ngram_max: usize,
    vectors: Matrix<S>,
}

impl<S: Scalar> SubwordEmbeddings<S> {
    pub fn from_parts(ngram_min: usize, ngram_max: usize, vectors: Matrix<S>) -> Result<Self> {
        if ngram_min == 0 || ngram_min > ngram_max {
            return Err(Error::invalid("need 0 < ngram_min <= ngram_max"));
        }
        if vectors.rows() == 0 {
            return Err(Error::invalid("bucket count must be positive"));
        }
        Ok(SubwordEmbeddings {
            ngram_min,
            ngram_max,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn bucket_count(&self) -> usize {
        self.vectors.rows()
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.ngram_min, self.ngram_max)
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.vectors
    }

    pub fn buckets(&self, word: &str) -> Vec<usize> {
        word_buckets(word, self.ngram_min, self.ngram_max, self.bucket_count())
    }

    /// Mean of the word's bucket vectors.
    pub fn vector(&self, word: &str) -> Vec<S> {
        let buckets = self.buckets(word);
        let mut v = vec![S::zero(); self.dim()];
        for &b in &buckets {
            axpy(&mut v, S::one(), self.vectors.row(b));
        }
        scale(&mut v, S::one() / S::from_usize(buckets.len()));
        v
    }

    /// Mean of the per-token word vectors; empty input gives the zero
    /// vector.
    pub fn mean_vector(&self, tokens: &TokenizedText) -> Vec<S> {
        let mut v = vec![S::zero(); self.dim()];
        if tokens.is_empty() {
            return v;
        }
        for token in tokens.iter() {
            axpy(&mut v, S::one(), &self.vector(token));
        }
        scale(&mut v, S::one() / S::from_usize(tokens.len()));
        v
    }
}

/// Train subword embeddings: the SGNS objective with the center word
/// represented as the mean of its bucket vectors (contexts and noise are
/// word-level). Deterministic for a given seed.
pub fn train_subword<S: Scalar>(
    corpus: &[TokenizedText],
    config: &SubwordConfig,
    seed: u64,
) -> Result<SubwordEmbeddings<S>> {
    config.validate_at("subword")?;
    if corpus.is_empty() {
        return Err(Error::invalid("subword corpus must be non-empty"));
    }
    let vocab = Vocab::build(corpus);
    let dim = config.sgns.dim;
    let mut buckets_matrix =
        init_matrix::<S>(config.bucket_count, dim, derive_seed(seed, "subword-init"));
    let mut output = Matrix::zeros(vocab.len(), dim);
    if vocab.len() > 0 {
        let word_to_buckets: Vec<Vec<usize>> = vocab
            .terms
            .iter()
            .map(|w| word_buckets(w, config.ngram_min, config.ngram_max, config.bucket_count))
            .collect();
        let docs: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.doc_ids(d)).collect();
        let mut center = vec![S::zero(); dim];
        let mut d_center = vec![S::zero(); dim];
        for epoch in 0..config.sgns.epochs {
            let lr = S::from_f64(epoch_lr(&config.sgns, epoch));
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("subword-epoch-{epoch}")));
            for ids in &docs {
                for (i, &w) in ids.iter().enumerate() {
                    let w_buckets = &word_to_buckets[w];
                    let lo = i.saturating_sub(config.sgns.window);
                    let hi = (i + config.sgns.window).min(ids.len().saturating_sub(1));
                    for (j, &context) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                        if j == i {
                            continue;
                        }
                        center.fill(S::zero());
                        for &b in w_buckets {
                            axpy(&mut center, S::one(), buckets_matrix.row(b));
                        }
                        scale(&mut center, S::one() / S::from_usize(w_buckets.len()));
                        pair_step(
                            &center,
                            context,
                            &mut output,
                            &vocab,
                            config.sgns.negatives,
                            lr,
                            &mut rng,
                            &mut d_center,
                        );
                        let share = -lr / S::from_usize(w_buckets.len());
                        for &b in w_buckets {
                            axpy(buckets_matrix.row_mut(b), share, &d_center);
                        }
                    }
                }
            }
        }
    }
    SubwordEmbeddings::from_parts(config.ngram_min, config.ngram_max, buckets_matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::l2_norm;
    use approx::assert_relative_eq;

    fn doc(tokens: &[&str]) -> TokenizedText {
        TokenizedText::new(tokens.iter().map(|s| s.to_string()).collect())
    }

    fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
        dot(a, b) / (l2_norm(a) * l2_norm(b))
    }

    fn small_config() -> SgnsConfig {
        SgnsConfig {
            dim: 16,
            epochs: 8,
            ..SgnsConfig::default()
        }
    }

    #[test]
    fn pair_loss_at_zero_scores_is_two_ln_two() {
        let v = vec![0.0f64; 3];
        let u = vec![1.0, 2.0, 3.0];
        let n = vec![vec![0.5, 0.5, 0.5]];
        let (loss, _, _, _) = sgns_pair_gradients(&v, &u, &n);
        assert_relative_eq!(loss, 2.0 * std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn pair_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let dim = 4;
            let rand_vec =
                |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let v_w = rand_vec(&mut rng);
            let u_c = rand_vec(&mut rng);
            let u_negs = vec![rand_vec(&mut rng), rand_vec(&mut rng)];
            let (_, d_vw, d_uc, d_un) = sgns_pair_gradients(&v_w, &u_c, &u_negs);
            let h = 1e-6;
            let loss_at = |v_w: &[f64], u_c: &[f64], u_negs: &[Vec<f64>]| {
                sgns_pair_gradients(v_w, u_c, u_negs).0
            };
            for i in 0..dim {
                let mut p = v_w.clone();
                p[i] += h;
                let mut m = v_w.clone();
                m[i] -= h;
                let fd = (loss_at(&p, &u_c, &u_negs) - loss_at(&m, &u_c, &u_negs)) / (2.0 * h);
                assert_relative_eq!(d_vw[i], fd, max_relative = 1e-5, epsilon = 1e-9);

                let mut p = u_c.clone();
                p[i] += h;
                let mut m = u_c.clone();
                m[i] -= h;
                let fd = (loss_at(&v_w, &p, &u_negs) - loss_at(&v_w, &m, &u_negs)) / (2.0 * h);
                assert_relative_eq!(d_uc[i], fd, max_relative = 1e-5, epsilon = 1e-9);

                let mut p = u_negs.clone();
                p[0][i] += h;
                let mut m = u_negs.clone();
                m[0][i] -= h;
                let fd = (loss_at(&v_w, &u_c, &p) - loss_at(&v_w, &u_c, &m)) / (2.0 * h);
                assert_relative_eq!(d_un[0][i], fd, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
    }

    /// Two disjoint "topics" plus one isolated control word: co-occurring
    /// words must end up closer than words from different topics or the
    /// near-init control.
    #[test]
    fn sgns_learns_cooccurrence_affinity() {
        let mut corpus = Vec::new();
        for _ in 0..150 {
            corpus.push(doc(&["apple", "banana", "apple", "banana"]));
            corpus.push(doc(&["stone", "gravel", "stone", "gravel"]));
        }
        corpus.push(doc(&["quiet"]));
        let emb = train_sgns::<f64>(&corpus, &small_config(), 17).unwrap();
        let a = emb.vector("apple").unwrap();
        let b = emb.vector("banana").unwrap();
        let s = emb.vector("stone").unwrap();
        let q = emb.vector("quiet").unwrap();
        assert!(
            cosine(a, b) > cosine(a, s),
            "within-topic {} <= across-topic {}",
            cosine(a, b),
            cosine(a, s)
        );
        assert!(
            cosine(a, b) > cosine(a, q),
            "within-topic {} <= control {}",
            cosine(a, b),
            cosine(a, q)
        );
    }


    #[test]
    fn sgns_training_is_deterministic() {
        let corpus = vec![doc(&["a", "b", "c"]), doc(&["b", "c", "d"])];
        let e1 = train_sgns::<f64>(&corpus, &small_config(), 5).unwrap();
        let e2 = train_sgns::<f64>(&corpus, &small_config(), 5).unwrap();
        assert_eq!(e1, e2);
        let e3 = train_sgns::<f64>(&corpus, &small_config(), 6).unwrap();
        assert_ne!(e1, e3);
    }

    #[test]
    fn unseen_term_has_no_vector() {
        let corpus = vec![doc(&["a", "b"])];
        let emb = train_sgns::<f64>(&corpus, &small_config(), 1).unwrap();
        assert!(emb.vector("z").is_none());
        assert_eq!(sentence_vector(&emb, &doc(&["z"])), vec![0.0; 16]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(train_sgns::<f64>(&[], &small_config(), 1).is_err());
        assert!(train_subword::<f64>(&[], &SubwordConfig::default(), 1).is_err());
    }

    #[test]
    fn sentence_vector_is_the_token_mean() {
        let terms = vec!["x".to_string(), "y".to_string()];
        let vectors = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let emb = WordEmbeddings::from_parts(terms, vectors).unwrap();
        assert_eq!(sentence_vector(&emb, &doc(&["x", "y"])), vec![0.5, 0.5]);
        assert_eq!(sentence_vector(&emb, &doc(&["x"])), vec![1.0, 0.0]);
        assert_eq!(sentence_vector(&emb, &doc(&[])), vec![0.0, 0.0]);
    }

    #[test]
    fn cat_buckets_match_enumeration() {
        // range [3,3] over "<cat>": "<ca", "cat", "at>" + whole word.
        let got = word_buckets("cat", 3, 3, 1 << 16);
        let expect: Vec<usize> = ["<ca", "cat", "at>", "<cat>"]
            .iter()
            .map(|g| (fnv1a64(g.as_bytes()) % (1 << 16)) as usize)
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn bucket_hashing_is_stable() {
        assert_eq!(word_buckets("cat", 3, 6, 4096), word_buckets("cat", 3, 6, 4096));
        // Pinned value: FNV-1a("<cat>") mod 4096.
        assert_eq!(
            *word_buckets("cat", 3, 6, 4096).last().unwrap(),
            (fnv1a64(b"<cat>") % 4096) as usize
        );
    }

    #[test]
    fn related_words_share_buckets() {
        let cat: std::collections::HashSet<usize> =
            word_buckets("cat", 3, 6, 1 << 18).into_iter().collect();
        let cats: std::collections::HashSet<usize> =
            word_buckets("cats", 3, 6, 1 << 18).into_iter().collect();
        assert!(cat.intersection(&cats).count() >= 2); // "<ca", "cat", ...
        let dog: std::collections::HashSet<usize> =
            word_buckets("dog", 3, 6, 1 << 18).into_iter().collect();
        assert!(cat.intersection(&dog).count() < cat.intersection(&cats).count());
    }

    #[test]
    fn empty_and_short_words_still_get_a_bucket() {
        assert_eq!(word_buckets("", 3, 6, 64).len(), 1); // "<>" only
        assert!(!word_buckets("a", 3, 6, 64).is_empty());
    }

    fn small_subword_config() -> SubwordConfig {
        SubwordConfig {
            sgns: SgnsConfig {
                dim: 16,
                epochs: 6,
                ..SgnsConfig::default()
            },
            bucket_count: 1 << 12,
            ..SubwordConfig::default()
        }
    }

    #[test]
    fn oov_words_get_nonzero_vectors_sharing_known_buckets() {
        let mut corpus = Vec::new();
        for _ in 0..100 {
            corpus.push(doc(&["running", "jumping", "running", "jumping"]));
        }
        let emb = train_subword::<f64>(&corpus, &small_subword_config(), 8).unwrap();
        let oov = emb.vector("runnings");
        assert!(l2_norm(&oov) > 0.0);
        // Shares most of its n-gram buckets with "running".
        let known = emb.vector("running");
        assert!(cosine(&oov, &known) > cosine(&oov, &emb.vector("jumping")));
    }

    #[test]
    fn subword_training_is_deterministic() {
        let corpus = vec![doc(&["abc", "bcd"]), doc(&["bcd", "cde"])];
        let e1 = train_subword::<f64>(&corpus, &small_subword_config(), 4).unwrap();
        let e2 = train_subword::<f64>(&corpus, &small_subword_config(), 4).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn default_configs_match_documented_values() {
        let c = SgnsConfig::default();
        assert_eq!((c.dim, c.window, c.negatives), (64, 5, 5));
        let s = SubwordConfig::default();
        assert_eq!((s.ngram_min, s.ngram_max), (3, 6));
        assert_eq!(s.bucket_count, 1 << 18);
    }
}
