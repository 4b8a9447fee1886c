//! Self-contained binary model bundle.
//!
//! A bundle carries the cleaning tables, vocabulary, optional IDF
//! weights, classifier parameters and a little metadata. Encoding is
//! deterministic and reals are stored as raw IEEE-754 binary64, so a
//! save/load/save cycle reproduces the file byte for byte and decision
//! scores bit for bit. The byte layout is documented in
//! `docs/bundle-format.md`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::Document;
use crate::corpus::{ClassCounts, Label};
use crate::features::{FeatureKind, Featurizer, IdfWeights, SparseVector, Vocabulary};
use crate::models::{predict, LinearKind, LinearModel, ModelError, NbModel, Scores};
use crate::scalar::Scalar;
use crate::textprep::{preprocess_document, CleanDoc, PipelineConfig};

pub const MAGIC: [u8; 8] = *b"VNBUNDL\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;
const TRAILER_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model bundle (bad magic)")]
    BadMagic,
    #[error(
        "bundle format version {found} is not supported (this build reads version {supported})"
    )]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("bundle integrity check failed: {0}")]
    Integrity(String),
    #[error("bundle stores {stored}-bit reals but {requested}-bit reals were requested")]
    ScalarMismatch { stored: u8, requested: u8 },
    #[error("invalid bundle field `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl ToString) -> PersistError {
    PersistError::Validation {
        field,
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    NaiveBayes,
    Logistic,
    Sgd,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "nb",
            ModelKind::Logistic => "lr",
            ModelKind::Sgd => "sgd",
        }
    }

    fn code(self) -> u8 {
        match self {
            ModelKind::NaiveBayes => 0,
            ModelKind::Logistic => 1,
            ModelKind::Sgd => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        [ModelKind::NaiveBayes, ModelKind::Logistic, ModelKind::Sgd]
            .get(code as usize)
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier<T> {
    NaiveBayes(NbModel<T>),
    Linear(LinearModel<T>),
}

impl<T: Scalar> Classifier<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::NaiveBayes(_) => ModelKind::NaiveBayes,
            Classifier::Linear(m) if m.kind() == LinearKind::Logistic => ModelKind::Logistic,
            Classifier::Linear(_) => ModelKind::Sgd,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Classifier::NaiveBayes(m) => m.vocab_size(),
            Classifier::Linear(m) => m.dim(),
        }
    }

    pub fn scores(&self, x: &SparseVector<T>) -> Result<Scores<T>, ModelError> {
        match self {
            Classifier::NaiveBayes(m) => m.log_posterior(x),
            Classifier::Linear(m) => m.decision(x),
        }
    }

    /// False only for a linear model that hit its iteration limit.
    pub fn converged(&self) -> bool {
        match self {
            Classifier::NaiveBayes(_) => true,
            Classifier::Linear(m) => m.converged(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleMetadata {
    pub n_train_docs: u64,
    pub class_counts: ClassCounts,
    /// Seconds since the Unix epoch; 0 when not recorded.
    pub created_unix: u64,
}

/// Everything needed to classify raw documents.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    pub pipeline: PipelineConfig,
    pub features: Featurizer<T>,
    pub model: Classifier<T>,
    pub metadata: BundleMetadata,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn new(
        pipeline: PipelineConfig,
        features: Featurizer<T>,
        model: Classifier<T>,
        metadata: BundleMetadata,
    ) -> Result<Self, PersistError> {
        let bundle = ModelBundle {
            pipeline,
            features,
            model,
            metadata,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<(), PersistError> {
        let v = self.features.vocab.len();
        if let Some(idf) = &self.features.idf {
            if idf.len() != v {
                return Err(invalid(
                    "idf",
                    format!("length {} but vocabulary has {v} terms", idf.len()),
                ));
            }
        }
        if self.model.dim() != v {
            return Err(invalid(
                "model",
                format!(
                    "dimension {} but vocabulary has {v} terms",
                    self.model.dim()
                ),
            ));
        }
        let counted: u64 = self.metadata.class_counts.counts.iter().sum();
        if counted != self.metadata.class_counts.total || counted != self.metadata.n_train_docs {
            return Err(invalid(
                "metadata",
                "class counts do not add up to the training-corpus size",
            ));
        }
        Ok(())
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.features.kind()
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn clean(&self, doc: &Document) -> CleanDoc {
        preprocess_document(doc, &self.pipeline)
    }

    pub fn scores(&self, doc: &CleanDoc) -> Result<Scores<T>, ModelError> {
        self.model.scores(&self.features.transform(doc))
    }

    pub fn predict(&self, doc: &CleanDoc) -> Result<Label, ModelError> {
        predict(&self.scores(doc)?)
    }
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn real<T: Scalar>(&mut self, v: T) {
        self.0.extend_from_slice(&v.widen().to_bits().to_le_bytes());
    }
    fn reals<T: Scalar>(&mut self, vs: &[T]) {
        vs.iter().for_each(|&v| self.real(v));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn section(&mut self, tag: &[u8; 4], body: Enc) {
        self.0.extend_from_slice(tag);
        self.len(body.0.len());
        self.0.extend_from_slice(&body.0);
    }
}

fn encode_pipeline(p: &PipelineConfig) -> Enc {
    let mut e = Enc(Vec::new());
    e.0.extend_from_slice(&p.digest());
    e.len(p.min_token_len());
    e.str(p.numeric_placeholder());
    e.len(p.stopwords().len());
    p.stopwords().iter().for_each(|w| e.str(w));
    e.len(p.lemma_exceptions().len());
    for (k, v) in p.lemma_exceptions() {
        e.str(k);
        e.str(v);
    }
    e
}

fn encode_model<T: Scalar>(model: &Classifier<T>) -> Enc {
    let mut e = Enc(Vec::new());
    e.u8(model.kind().code());
    match model {
        Classifier::NaiveBayes(m) => {
            e.real(m.alpha());
            e.len(m.vocab_size());
            e.reals(m.class_log_prior());
            m.feature_log_prob().iter().for_each(|row| e.reals(row));
        }
        Classifier::Linear(m) => {
            e.u8(u8::from(m.converged()));
            m.active().iter().for_each(|&a| e.u8(u8::from(a)));
            e.len(m.dim());
            e.reals(m.bias());
            m.weights().iter().for_each(|row| e.reals(row));
        }
    }
    e
}

/// Deterministic encoding of a bundle.
pub fn encode<T: Scalar>(bundle: &ModelBundle<T>) -> Vec<u8> {
    let mut meta = Enc(Vec::new());
    meta.u8(match bundle.feature_kind() {
        FeatureKind::Count => 0,
        FeatureKind::Tfidf => 1,
    });
    meta.u8(bundle.model_kind().code());
    meta.u64(bundle.metadata.n_train_docs);
    meta.u64(bundle.metadata.created_unix);
    bundle
        .metadata
        .class_counts
        .counts
        .iter()
        .for_each(|&c| meta.u64(c));

    let mut vocab = Enc(Vec::new());
    vocab.len(bundle.features.vocab.len());
    bundle
        .features
        .vocab
        .terms()
        .iter()
        .for_each(|t| vocab.str(t));

    let mut payload = Enc(Vec::new());
    payload.section(b"META", meta);
    payload.section(b"PIPE", encode_pipeline(&bundle.pipeline));
    payload.section(b"VOCB", vocab);
    if let Some(idf) = &bundle.features.idf {
        let mut body = Enc(Vec::new());
        body.len(idf.n_docs());
        body.len(idf.len());
        body.reals(idf.weights());
        payload.section(b"IDFW", body);
    }
    payload.section(b"MODL", encode_model(&bundle.model));

    let mut out = Enc(Vec::with_capacity(
        HEADER_LEN + payload.0.len() + TRAILER_LEN,
    ));
    out.0.extend_from_slice(&MAGIC);
    out.u32(FORMAT_VERSION);
    out.u8(T::BITS);
    out.0.extend_from_slice(&[0; 3]);
    out.len(payload.0.len());
    out.0.extend_from_slice(&payload.0);
    let crc = crc32fast::hash(&out.0);
    out.u32(crc);
    out.0
}

pub fn save_bundle<T: Scalar, W: Write>(
    bundle: &ModelBundle<T>,
    mut sink: W,
) -> Result<(), PersistError> {
    sink.write_all(&encode(bundle))
        .and_then(|_| sink.flush())
        .map_err(|source| PersistError::Io {
            context: "writing bundle".into(),
            source,
        })
}

pub fn save_bundle_file<T: Scalar>(
    bundle: &ModelBundle<T>,
    path: &Path,
) -> Result<(), PersistError> {
    fs::write(path, encode(bundle)).map_err(|source| PersistError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                PersistError::Integrity(format!("section {} ends early", self.section))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize, PersistError> {
        let n = self.u64()?;
        // every counted element occupies at least one byte
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(PersistError::Integrity(format!(
                "implausible length {n} in section {}",
                self.section
            )));
        }
        Ok(n as usize)
    }
    fn real<T: Scalar>(&mut self) -> Result<T, PersistError> {
        let v = f64::from_bits(self.u64()?);
        T::from_f64(v).ok_or_else(|| invalid("real", format!("{v} does not fit the scalar type")))
    }
    fn reals<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>, PersistError> {
        (0..n).map(|_| self.real()).collect()
    }
    fn str(&mut self) -> Result<String, PersistError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| invalid(self.section, "string is not UTF-8"))
    }
    fn section(&mut self, tag: &[u8; 4], name: &'static str) -> Result<Dec<'a>, PersistError> {
        let found = self.take(4)?;
        if found != tag {
            return Err(PersistError::Integrity(format!("expected section {name}")));
        }
        let n = self.len()?;
        Ok(Dec {
            buf: self.take(n)?,
            pos: 0,
            section: name,
        })
    }
    fn peek_tag(&self) -> Option<&'a [u8]> {
        self.buf.get(self.pos..self.pos + 4)
    }
    fn finish(self) -> Result<(), PersistError> {
        if self.pos != self.buf.len() {
            return Err(PersistError::Integrity(format!(
                "trailing bytes in section {}",
                self.section
            )));
        }
        Ok(())
    }
}

/// Validates the fixed header and checksum; returns the scalar width and payload.
fn open(bytes: &[u8]) -> Result<(u8, &[u8]), PersistError> {
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(if bytes.len() < MAGIC.len() {
            PersistError::Integrity("file is truncated".into())
        } else {
            PersistError::BadMagic
        });
    }
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(PersistError::Integrity("file is truncated".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(PersistError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let payload_len = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = (HEADER_LEN + TRAILER_LEN) as u64 + payload_len;
    if bytes.len() as u64 != expected {
        return Err(PersistError::Integrity(format!(
            "file is {} bytes but its header declares {expected}",
            bytes.len()
        )));
    }
    let body_end = bytes.len() - TRAILER_LEN;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(PersistError::Integrity("checksum mismatch".into()));
    }
    if bytes[13..16] != [0, 0, 0] {
        return Err(PersistError::Integrity(
            "reserved header bytes are not zero".into(),
        ));
    }
    Ok((bytes[12], &bytes[HEADER_LEN..body_end]))
}

/// Scalar width recorded in an encoded bundle, after integrity checks.
pub fn peek_scalar_bits(bytes: &[u8]) -> Result<u8, PersistError> {
    open(bytes).map(|(bits, _)| bits)
}

fn decode_pipeline(mut d: Dec<'_>) -> Result<PipelineConfig, PersistError> {
    let digest: [u8; 32] = d.take(32)?.try_into().unwrap();
    let min_len = d.len()?;
    let placeholder = d.str()?;
    let n = d.len()?;
    let stopwords = (0..n).map(|_| d.str()).collect::<Result<_, _>>()?;
    let n = d.len()?;
    let mut lemmas = std::collections::BTreeMap::new();
    for _ in 0..n {
        let k = d.str()?;
        lemmas.insert(k, d.str()?);
    }
    d.finish()?;
    let cfg = PipelineConfig::new(stopwords, lemmas, placeholder, min_len)
        .map_err(|e| invalid("pipeline", e))?;
    if cfg.digest() != digest {
        return Err(invalid(
            "pipeline",
            "table digest does not match the embedded tables",
        ));
    }
    Ok(cfg)
}

fn decode_model<T: Scalar>(
    mut d: Dec<'_>,
    expected: ModelKind,
) -> Result<Classifier<T>, PersistError> {
    let kind =
        ModelKind::from_code(d.u8()?).ok_or_else(|| invalid("model", "unknown model kind"))?;
    if kind != expected {
        return Err(invalid("model", "model kind disagrees with metadata"));
    }
    let model = match kind {
        ModelKind::NaiveBayes => {
            let alpha = d.real()?;
            let v = d.len()?;
            let prior: Vec<T> = d.reals(4)?;
            let rows = (0..4).map(|_| d.reals(v)).collect::<Result<Vec<_>, _>>()?;
            let prior = [prior[0], prior[1], prior[2], prior[3]];
            Classifier::NaiveBayes(
                NbModel::from_parts(prior, rows, alpha, v).map_err(|e| invalid("model", e))?,
            )
        }
        ModelKind::Logistic | ModelKind::Sgd => {
            let converged = d.u8()? != 0;
            let mut active = [false; 4];
            for a in &mut active {
                *a = d.u8()? != 0;
            }
            let v = d.len()?;
            let bias: Vec<T> = d.reals(4)?;
            let rows = (0..4).map(|_| d.reals(v)).collect::<Result<Vec<_>, _>>()?;
            let linear = if kind == ModelKind::Logistic {
                LinearKind::Logistic
            } else {
                LinearKind::Hinge
            };
            let bias = [bias[0], bias[1], bias[2], bias[3]];
            Classifier::Linear(
                LinearModel::from_parts(rows, bias, active, linear, converged)
                    .map_err(|e| invalid("model", e))?,
            )
        }
    };
    d.finish()?;
    Ok(model)
}

/// Exact inverse of [`encode`], re-validating every invariant.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ModelBundle<T>, PersistError> {
    let (bits, payload) = open(bytes)?;
    if bits != T::BITS {
        return Err(PersistError::ScalarMismatch {
            stored: bits,
            requested: T::BITS,
        });
    }
    let mut p = Dec {
        buf: payload,
        pos: 0,
        section: "payload",
    };

    let mut meta = p.section(b"META", "META")?;
    let feature_kind = match meta.u8()? {
        0 => FeatureKind::Count,
        1 => FeatureKind::Tfidf,
        k => return Err(invalid("feature_kind", format!("unknown code {k}"))),
    };
    let model_kind =
        ModelKind::from_code(meta.u8()?).ok_or_else(|| invalid("model_kind", "unknown code"))?;
    let n_train_docs = meta.u64()?;
    let created_unix = meta.u64()?;
    let mut counts = [0u64; 4];
    for c in &mut counts {
        *c = meta.u64()?;
    }
    meta.finish()?;

    let pipeline = decode_pipeline(p.section(b"PIPE", "PIPE")?)?;

    let mut vd = p.section(b"VOCB", "VOCB")?;
    let n = vd.len()?;
    let terms = (0..n).map(|_| vd.str()).collect::<Result<Vec<_>, _>>()?;
    vd.finish()?;
    let vocab = Vocabulary::from_sorted_terms(terms).map_err(|e| invalid("vocabulary", e))?;

    let idf = if p.peek_tag() == Some(b"IDFW".as_slice()) {
        let mut d = p.section(b"IDFW", "IDFW")?;
        let n_docs = d.len()?;
        let n = d.len()?;
        let weights = d.reals(n)?;
        d.finish()?;
        Some(IdfWeights::new(weights, n_docs).map_err(|e| invalid("idf", e))?)
    } else {
        None
    };
    match (feature_kind, &idf) {
        (FeatureKind::Tfidf, None) => return Err(invalid("idf", "missing for a tf-idf bundle")),
        (FeatureKind::Count, Some(_)) => {
            return Err(invalid("idf", "present in a count-feature bundle"))
        }
        _ => {}
    }

    let model = decode_model(p.section(b"MODL", "MODL")?, model_kind)?;
    p.finish()?;

    let total = counts.iter().sum();
    ModelBundle::new(
        pipeline,
        Featurizer { vocab, idf },
        model,
        BundleMetadata {
            n_train_docs,
            class_counts: ClassCounts { counts, total },
            created_unix,
        },
    )
}

pub fn load_bundle<T: Scalar, R: Read>(mut source: R) -> Result<ModelBundle<T>, PersistError> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|source| PersistError::Io {
            context: "reading bundle".into(),
            source,
        })?;
    decode(&bytes)
}

pub fn load_bundle_file<T: Scalar>(path: &Path) -> Result<ModelBundle<T>, PersistError> {
    let bytes = fs::read(path).map_err(|source| PersistError::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    decode(&bytes)
}
