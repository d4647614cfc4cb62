//! Builds sentence-level training corpora for systematic-review data
//! elements from review tables and their cited full texts, then trains and
//! applies a class-weighted linear SVM over word n-grams to find those
//! sentences in new articles.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod g17;
pub mod io;
pub mod pipeline;
pub mod registry;
pub mod select;
pub mod similarity;
pub mod synth;
pub mod svm;
pub mod text;

pub use error::{Error, Result};
