//! Synthetic labeled datasets with a tunable text-to-category signal.
//!
//! Each category owns a small set of signature tokens that appear in no
//! other category. Every generated token is, with probability
//! `strength`, a signature token of one of the sample's gold categories,
//! and otherwise a draw from a shared noise vocabulary. At `strength`
//! 1.0 a plain bag-of-words ranker recovers the gold set almost
//! perfectly; at 0.0 the text carries no label information at all.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Sample, MAX_CATEGORIES};
use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Signature tokens owned by each category.
pub const SIGNATURES_PER_LABEL: usize = 6;

/// Emoji occasionally appended to generated text, all present in the
/// bundled lexicon so the statistical features see them.
const EMOJI: [&str; 5] = ["😂", "🤣", "😍", "😉", "😅"];

const TEXT_EMOJI_PROB: f64 = 0.15;
const REPLY_EMOJI_PROB: f64 = 0.3;

/// Shape of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Number of samples.
    pub samples: usize,
    /// Number of categories (at least 7, so a top-6 cutoff is strict).
    pub labels: usize,
    /// Probability that a token is a gold-category signature token
    /// rather than noise, in `[0, 1]`.
    pub strength: f64,
    /// Size of the shared noise vocabulary.
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            samples: 512,
            labels: 10,
            strength: 1.0,
            vocab_size: 200,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("synth.samples", "must be positive"));
        }
        if self.labels <= MAX_CATEGORIES {
            return Err(Error::config(
                "synth.labels",
                format!(
                    "must exceed {MAX_CATEGORIES} so that a top-{MAX_CATEGORIES} ranking cannot \
                     cover every category"
                ),
            ));
        }
        if self.labels > 999 {
            return Err(Error::config("synth.labels", "at most 999 categories are supported"));
        }
        if !(self.strength.is_finite() && (0.0..=1.0).contains(&self.strength)) {
            return Err(Error::config("synth.strength", "must be a real in [0, 1]"));
        }
        if self.vocab_size == 0 {
            return Err(Error::config("synth.vocab_size", "must be positive"));
        }
        Ok(())
    }
}

/// Name of category `label`. Zero-padded so the names are byte-sorted
/// in id order.
pub fn label_name(label: usize) -> String {
    format!("cat{label:03}")
}

/// The `j`-th signature token of category `label`. Purely alphanumeric,
/// so tokenization keeps it intact, and distinct across categories.
pub fn signature_token(label: usize, j: usize) -> String {
    format!("sig{label:03}x{j}")
}

fn draw_gold(rng: &mut ChaCha8Rng, labels: usize) -> Vec<usize> {
    let count = rng.gen_range(1..=MAX_CATEGORIES);
    // Partial Fisher-Yates: the first `count` entries are a uniform
    // distinct draw from 0..labels.
    let mut pool: Vec<usize> = (0..labels).collect();
    for j in 0..count {
        let pick = rng.gen_range(j..labels);
        pool.swap(j, pick);
    }
    let mut gold = pool[..count].to_vec();
    gold.sort_unstable();
    gold
}

fn compose(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    gold: &[usize],
    min_len: usize,
    max_len: usize,
    emoji_prob: f64,
) -> String {
    let len = rng.gen_range(min_len..=max_len);
    let mut tokens = Vec::with_capacity(len + 1);
    for _ in 0..len {
        if rng.gen_bool(spec.strength) {
            let label = gold[rng.gen_range(0..gold.len())];
            tokens.push(signature_token(label, rng.gen_range(0..SIGNATURES_PER_LABEL)));
        } else {
            tokens.push(format!("w{}", rng.gen_range(0..spec.vocab_size)));
        }
    }
    if rng.gen_bool(emoji_prob) {
        tokens.push(EMOJI[rng.gen_range(0..EMOJI.len())].to_string());
    }
    tokens.join(" ")
}

/// Generate a labeled dataset. Deterministic in the spec: the same spec
/// always yields the same samples.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synth"));
    let mut samples = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let gold = draw_gold(&mut rng, spec.labels);
        let text = compose(&mut rng, spec, &gold, 6, 12, TEXT_EMOJI_PROB);
        let reply = compose(&mut rng, spec, &gold, 3, 8, REPLY_EMOJI_PROB);
        samples.push(Sample {
            idx: i as u64,
            text,
            reply,
            mp4: Some(format!("{i:06}.mp4")),
            categories: Some(gold.into_iter().map(label_name).collect()),
        });
    }
    Dataset::new(samples)
}
