//! Siamese finetuning of sentence-embedding encoders.
//!
//! The pipeline: load labeled corpora ([`corpus`]), build an encoder
//! ([`encoder`]), generate same/different-class pairs ([`episodes`]),
//! finetune with the Siamese or the naive classification regime
//! ([`training`]), and score embeddings by their cosine-distance gap
//! ([`eval`]). [`experiment`] ties these together for the four-way
//! ORIG / NAIVE / SIAMESE / ALL comparison and [`synthetic`] generates
//! seeded stand-in corpora.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod episodes;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod numfmt;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
