//! Two-stage question/answer pair generation.
//!
//! Stage one picks a pivotal answer span in a sentence, either by scoring
//! its named entities ([`answersel::ne`]) or with a pointer network over
//! token positions ([`answersel::pointer`]). Stage two encodes that span
//! with BIO tags next to POS/NER/dependency features and generates a
//! question with an attentional encoder-decoder ([`qgmodel`]).
//!
//! Everything runs on a small reverse-mode kernel ([`kernel`]); batch work
//! fans out over rayon when the `parallel` feature is on.

pub mod answersel;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evalmetrics;
pub mod features;
pub mod gradsuite;
pub mod kernel;
pub mod parallel;
pub mod pipeline;
pub mod qgmodel;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
