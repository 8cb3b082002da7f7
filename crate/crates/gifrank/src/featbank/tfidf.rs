//! TF-IDF vectorizer with smoothed idf and L2-normalized document vectors.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::textprep::TokenizedText;

/// Sparse vector with entries sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec<S> {
    dim: usize,
    entries: Vec<(usize, S)>,
}

impl<S: Scalar> SparseVec<S> {
    pub fn new(dim: usize, entries: Vec<(usize, S)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|&(i, _)| i < dim));
        SparseVec { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, S)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l2_norm(&self) -> S {
        self.entries
            .iter()
            .fold(S::zero(), |acc, &(_, x)| acc + x * x)
            .sqrt()
    }

    pub fn to_dense(&self) -> Vec<S> {
        let mut v = vec![S::zero(); self.dim];
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }
}

/// Fitted TF-IDF model: term table, per-term idf, document count.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`; document vectors use raw
/// term counts times idf, L2-normalized. Terms unseen at fit time are
/// ignored at transform time.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel<S: Scalar> {
    terms: Vec<String>,
    map: HashMap<String, usize>,
    idf: Vec<S>,
    doc_count: usize,
}

impl<S: Scalar> TfIdfModel<S> {
    pub fn fit(corpus: &[TokenizedText]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("TF-IDF corpus must be non-empty"));
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in corpus {
            let distinct: HashSet<&str> = doc.iter().map(String::as_str).collect();
            for term in distinct {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let n = corpus.len();
        let mut terms = Vec::with_capacity(df.len());
        let mut idf = Vec::with_capacity(df.len());
        for (term, count) in df {
            terms.push(term.to_string());
            idf.push(S::from_f64(((1 + n) as f64 / (1 + count) as f64).ln() + 1.0));
        }
        let map = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(TfIdfModel {
            terms,
            map,
            idf,
            doc_count: n,
        })
    }

    /// Rebuild from serialized parts (terms must be strictly sorted).
    pub fn from_parts(terms: Vec<String>, idf: Vec<S>, doc_count: usize) -> Result<Self> {
        if terms.len() != idf.len() {
            return Err(Error::LengthMismatch {
                left: terms.len(),
                right: idf.len(),
            });
        }
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("TF-IDF term table must be strictly sorted"));
        }
        let map = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(TfIdfModel {
            terms,
            map,
            idf,
            doc_count,
        })
    }

    /// Number of columns (distinct training terms).
    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf_weights(&self) -> &[S] {
        &self.idf
    }

    pub fn term_id(&self, term: &str) -> Option<usize> {
        self.map.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<S> {
        self.term_id(term).map(|i| self.idf[i])
    }

    /// L2-normalized tf·idf vector; unseen terms are dropped, so an empty
    /// or fully-unseen document maps to the zero vector.
    pub fn vectorize(&self, doc: &TokenizedText) -> SparseVec<S> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for token in doc.iter() {
            if let Some(id) = self.term_id(token) {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(usize, S)> = counts
            .into_iter()
            .map(|(id, tf)| (id, S::from_usize(tf) * self.idf[id]))
            .collect();
        let norm = entries
            .iter()
            .fold(S::zero(), |acc, &(_, x)| acc + x * x)
            .sqrt();
        if norm > S::zero() {
            for (_, x) in &mut entries {
                *x /= norm;
            }
        }
        SparseVec::new(self.dim(), entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn doc(tokens: &[&str]) -> TokenizedText {
        TokenizedText::new(tokens.iter().map(|s| s.to_string()).collect())
    }

    fn toy_model() -> TfIdfModel<f64> {
        TfIdfModel::fit(&[doc(&["a", "b"]), doc(&["a", "c"])]).unwrap()
    }

    #[test]
    fn idf_matches_hand_computation() {
        let model = toy_model();
        assert_eq!(model.doc_count(), 2);
        assert_eq!(model.dim(), 3);
        assert_eq!(model.terms(), ["a", "b", "c"]);
        assert_relative_eq!(model.idf("a").unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(model.idf("b").unwrap(), 1.405465, epsilon = 1e-6);
        assert_relative_eq!(model.idf("c").unwrap(), 1.405465, epsilon = 1e-6);
        assert!(model.idf("z").is_none());
    }

    #[test]
    fn document_vector_is_l2_normalized() {
        let model = toy_model();
        let v = model.vectorize(&doc(&["a", "b"])).to_dense();
        // Hand oracle: weights (1, ln(3/2)+1, 0), then L2-normalize.
        let idf_b = (3.0f64 / 2.0).ln() + 1.0;
        let norm = (1.0 + idf_b * idf_b).sqrt();
        assert_relative_eq!(v[0], 1.0 / norm, epsilon = 1e-12);
        assert_relative_eq!(v[1], idf_b / norm, epsilon = 1e-12);
        assert_relative_eq!(v[0], 0.579739, epsilon = 1e-6);
        assert_relative_eq!(v[1], 0.814802, epsilon = 1e-6);
        assert_eq!(v[2], 0.0);
        assert_relative_eq!(
            v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn unseen_terms_are_ignored() {
        let model = toy_model();
        assert!(model.vectorize(&doc(&["z"])).is_zero());
        // Mixed known/unknown keeps only the known part.
        let v = model.vectorize(&doc(&["a", "z"]));
        assert_eq!(v.entries().len(), 1);
        assert_eq!(v.entries()[0].0, 0);
    }

    #[test]
    fn empty_document_is_the_zero_vector() {
        let model = toy_model();
        let v = model.vectorize(&doc(&[]));
        assert!(v.is_zero());
        assert_eq!(v.l2_norm(), 0.0);
    }

    #[test]
    fn repeated_terms_use_raw_counts() {
        let model = TfIdfModel::<f64>::fit(&[doc(&["a", "a", "b"]), doc(&["b"])]).unwrap();
        // Unnormalized weights: a -> 2·idf(a), b -> 1·idf(b).
        let idf_a: f64 = model.idf("a").unwrap();
        let idf_b: f64 = model.idf("b").unwrap();
        let expected = [2.0 * idf_a, idf_b];
        let norm = (expected[0] * expected[0] + expected[1] * expected[1]).sqrt();
        let v = model.vectorize(&doc(&["a", "a", "b"])).to_dense();
        assert_relative_eq!(v[0], expected[0] / norm, epsilon = 1e-12);
        assert_relative_eq!(v[1], expected[1] / norm, epsilon = 1e-12);
    }

    #[test]
    fn vector_norm_is_one_or_zero() {
        let model = toy_model();
        for tokens in [&["a"][..], &["a", "b", "c"], &["z"], &[]] {
            let norm: f64 = model.vectorize(&doc(tokens)).l2_norm();
            assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12, "norm {norm}");
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(TfIdfModel::<f64>::fit(&[]).is_err());
    }

    #[test]
    fn round_trip_through_parts() {
        let model = toy_model();
        let rebuilt = TfIdfModel::from_parts(
            model.terms().to_vec(),
            model.idf_weights().to_vec(),
            model.doc_count(),
        )
        .unwrap();
        assert_eq!(rebuilt, model);
        assert!(TfIdfModel::from_parts(vec!["b".into(), "a".into()], vec![1.0, 1.0], 1).is_err());
    }
}
