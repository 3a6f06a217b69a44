//! Core of the efficient-attention distillation lab.
//!
//! Everything here is `no_std` with `alloc`: tensors and reverse-mode
//! differentiation, attention patterns, the encoder, the convert and distill
//! stages, corpus handling, evaluation and benchmark accounting. File formats
//! and the command line live in the `eadl` crate.
#![no_std]
extern crate alloc;

pub mod attention;
pub mod bench;
pub mod convert;
pub mod corpus;
pub mod distill;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod ner;
pub mod numcore;
pub mod rng;

pub use error::{Error, Result};
