//! Vocabulary construction and sparse count / TF-IDF vectors.
//!
//! IDF is smoothed, `ln((1 + N) / (1 + df)) + 1`, applied to raw term
//! counts, and TF-IDF rows are scaled to unit Euclidean norm.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::textprep::CleanDoc;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("vocabulary terms are not strictly increasing at index {0}")]
    UnsortedVocabulary(usize),
    #[error("sparse index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("idf length {idf} does not match vocabulary size {vocab}")]
    IdfLength { idf: usize, vocab: usize },
    #[error("idf weight at column {0} is below 1 or not finite")]
    IdfValue(usize),
}

/// Term → column map. Columns follow byte-lexicographic term order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from terms that must already be strictly increasing.
    pub fn from_sorted_terms(terms: Vec<String>) -> Result<Self, FeatureError> {
        if let Some(i) = terms.windows(2).position(|w| w[0] >= w[1]) {
            return Err(FeatureError::UnsortedVocabulary(i + 1));
        }
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Every distinct token of the corpus, independent of document order.
pub fn build_vocabulary(corpus: &[CleanDoc]) -> Vocabulary {
    let set: BTreeSet<&str> = corpus
        .iter()
        .flat_map(|d| d.tokens.iter().map(String::as_str))
        .collect();
    Vocabulary::from_sorted_terms(set.into_iter().map(str::to_string).collect())
        .expect("BTreeSet iterates in sorted order")
}

/// Sparse row: strictly increasing column indices, no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<T> {
    indices: Vec<usize>,
    values: Vec<T>,
    dim: usize,
}

impl<T: Scalar> SparseVector<T> {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    /// Accepts pairs in any order; duplicates are summed and zeros dropped.
    pub fn from_pairs(
        dim: usize,
        pairs: impl IntoIterator<Item = (usize, T)>,
    ) -> Result<Self, FeatureError> {
        let mut pairs: Vec<(usize, T)> = pairs.into_iter().collect();
        if let Some(&(index, _)) = pairs.iter().find(|(i, _)| *i >= dim) {
            return Err(FeatureError::IndexOutOfRange { index, dim });
        }
        pairs.sort_by_key(|&(i, _)| i);
        let mut out = SparseVector::zeros(dim);
        for (i, v) in pairs {
            match out.indices.last() {
                Some(&last) if last == i => {
                    let slot = out.values.last_mut().unwrap();
                    *slot = *slot + v;
                }
                _ => {
                    out.indices.push(i);
                    out.values.push(v);
                }
            }
        }
        out.retain_nonzero();
        Ok(out)
    }

    /// Builds from a dense slice, skipping zeros.
    pub fn from_dense(dense: &[T]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseVector {
            indices,
            values,
            dim: dense.len(),
        }
    }

    fn retain_nonzero(&mut self) {
        let mut k = 0;
        for j in 0..self.indices.len() {
            if !self.values[j].is_zero() {
                self.indices[k] = self.indices[j];
                self.values[k] = self.values[j];
                k += 1;
            }
        }
        self.indices.truncate(k);
        self.values.truncate(k);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> T {
        self.indices
            .binary_search(&index)
            .map(|k| self.values[k])
            .unwrap_or_else(|_| T::zero())
    }

    pub fn dot(&self, dense: &[T]) -> T {
        self.iter()
            .fold(T::zero(), |acc, (i, v)| acc + v * dense[i])
    }

    pub fn norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Raw term counts; out-of-vocabulary tokens are ignored.
pub fn count_transform<T: Scalar>(doc: &CleanDoc, vocab: &Vocabulary) -> SparseVector<T> {
    let mut counts: Vec<(usize, usize)> = doc
        .tokens
        .iter()
        .filter_map(|t| vocab.get(t))
        .map(|i| (i, 1))
        .collect();
    counts.sort_unstable_by_key(|&(i, _)| i);
    counts.dedup_by(|next, acc| {
        if next.0 == acc.0 {
            acc.1 += 1;
            true
        } else {
            false
        }
    });
    SparseVector {
        indices: counts.iter().map(|&(i, _)| i).collect(),
        values: counts.iter().map(|&(_, c)| T::count(c)).collect(),
        dim: vocab.len(),
    }
}

/// Smoothed inverse document frequencies, one per vocabulary column.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfWeights<T> {
    idf: Vec<T>,
    n_docs: usize,
}

impl<T: Scalar> IdfWeights<T> {
    pub fn new(idf: Vec<T>, n_docs: usize) -> Result<Self, FeatureError> {
        if let Some(i) = idf.iter().position(|&v| !(v.is_finite() && v >= T::one())) {
            return Err(FeatureError::IdfValue(i));
        }
        Ok(IdfWeights { idf, n_docs })
    }

    pub fn weights(&self) -> &[T] {
        &self.idf
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }
}

pub fn fit_idf<T: Scalar>(corpus: &[CleanDoc], vocab: &Vocabulary) -> IdfWeights<T> {
    let mut df = vec![0usize; vocab.len()];
    for doc in corpus {
        let mut seen: Vec<usize> = doc.tokens.iter().filter_map(|t| vocab.get(t)).collect();
        seen.sort_unstable();
        seen.dedup();
        for i in seen {
            df[i] += 1;
        }
    }
    let n = T::count(corpus.len());
    let idf = df
        .into_iter()
        .map(|d| ((T::one() + n) / (T::one() + T::count(d))).ln() + T::one())
        .collect();
    IdfWeights {
        idf,
        n_docs: corpus.len(),
    }
}

/// Counts × IDF, scaled to unit norm. A document with no known terms stays zero.
pub fn tfidf_transform<T: Scalar>(
    doc: &CleanDoc,
    vocab: &Vocabulary,
    idf: &IdfWeights<T>,
) -> SparseVector<T> {
    let mut v = count_transform::<T>(doc, vocab);
    for (k, &i) in v.indices.iter().enumerate() {
        v.values[k] = v.values[k] * idf.idf[i];
    }
    let norm = v.norm();
    if !norm.is_zero() {
        for x in &mut v.values {
            *x = *x / norm;
        }
    }
    v.retain_nonzero();
    v
}

/// Which document representation a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Count,
    Tfidf,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Count => "count",
            FeatureKind::Tfidf => "tfidf",
        }
    }
}

/// A fitted feature space: vocabulary plus IDF for TF-IDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer<T> {
    pub vocab: Vocabulary,
    pub idf: Option<IdfWeights<T>>,
}

impl<T: Scalar> Featurizer<T> {
    pub fn fit(corpus: &[CleanDoc], kind: FeatureKind) -> Self {
        let vocab = build_vocabulary(corpus);
        let idf = match kind {
            FeatureKind::Count => None,
            FeatureKind::Tfidf => Some(fit_idf(corpus, &vocab)),
        };
        Featurizer { vocab, idf }
    }

    pub fn kind(&self) -> FeatureKind {
        if self.idf.is_some() {
            FeatureKind::Tfidf
        } else {
            FeatureKind::Count
        }
    }

    pub fn transform(&self, doc: &CleanDoc) -> SparseVector<T> {
        match &self.idf {
            None => count_transform(doc, &self.vocab),
            Some(idf) => tfidf_transform(doc, &self.vocab, idf),
        }
    }

    /// Row-order-preserving parallel transform.
    pub fn transform_all(&self, docs: &[CleanDoc]) -> Vec<SparseVector<T>> {
        docs.par_iter().map(|d| self.transform(d)).collect()
    }
}
