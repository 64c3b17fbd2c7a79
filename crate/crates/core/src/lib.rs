//! Transit customer-feedback analytics.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: feedback records, auxiliary data files and the synthetic corpus generator
//! - [`textprep`]: tokenization, term filtering, stemming, n-grams and vocabularies
//! - [`topics`]: LDA topic derivation, condensation to the broad transit topics and
//!   training-set construction
//! - [`features`]: TF-IDF vectorization
//! - [`classify`]: linear and naive Bayes classifiers, cross-validation and the
//!   external-classifier bridge protocol
//! - [`eval`]: confusion matrices and precision/recall/F1 reports
//! - [`enrich`]: asset matching, sentiment and customer characteristics
//! - [`report`]: aggregation tables, ridership-normalized rates and CSV/JSON/SVG output

pub mod classify;
pub mod corpus;
pub mod enrich;
pub mod error;
pub mod eval;
pub mod features;
pub mod report;
pub mod rng;
pub mod textprep;
pub mod topics;

pub use error::{Error, Result};
