//! News-veracity text classification.
//!
//! The crate covers the whole classical pipeline: CSV ingestion
//! ([`corpus`]), text cleaning ([`textprep`]), count and TF-IDF features
//! ([`features`]), three linear classifiers ([`models`]), evaluation
//! reports ([`metrics`]) and a self-contained binary model bundle
//! ([`persistence`]). The [`cli`] module drives all of it from the
//! command line.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the command line tool uses by default.

pub mod cli;
pub mod corpus;
pub mod features;
pub mod metrics;
pub mod models;
pub mod persistence;
pub mod scalar;
pub mod textprep;

pub use corpus::{ClassCounts, Document, Label, RawRecord};
pub use scalar::{Measure, Scalar};
pub use textprep::{CleanDoc, PipelineConfig};

/// Exact rational used for metric cross-checks.
pub type Exact = num_rational::Ratio<u128>;

pub type SparseVec = features::SparseVector<f64>;
pub type Idf = features::IdfWeights<f64>;
pub type NaiveBayes = models::NbModel<f64>;
pub type Linear = models::LinearModel<f64>;
pub type Bundle = persistence::ModelBundle<f64>;
pub type Report = metrics::EvalReport<f64>;
pub type ExactReport = metrics::EvalReport<Exact>;
