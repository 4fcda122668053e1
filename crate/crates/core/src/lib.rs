//! Rule-consistent multi-label text classification.
//!
//! The pipeline mines weighted soft implications `a => b (w)` from label
//! co-occurrence ([`rulekit`]), encodes them as ASP weak constraints
//! ([`asp`]), adds label-corrected copies of training records
//! ([`augment`]), trains a linear classifier on TF-IDF features
//! ([`features`], [`model`]) under weighted BCE plus a fuzzy implication
//! penalty, tunes per-label thresholds and audits predictions for rule
//! violations ([`eval`], [`asp`]).

pub mod asp;
pub mod augment;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod rulekit;

pub use error::{Error, Result};
