//! Pixel-space contrastive learning on interleaved image-text documents.
//!
//! The pipeline: ingest interleaved web documents ([`corpus`]), render each
//! multimodal snippet onto a 2x2 pixel grid with a bitmap font ([`font`],
//! [`render`]), sample consecutive-snippet positive pairs with masking
//! augmentations ([`sampler`], [`augment`]), train a single vision-transformer
//! encoder with a contrastive objective ([`model`]), and evaluate on
//! consecutive-information-retrieval benchmarks ([`retrieval`]). Embeddings
//! and checkpoints persist in stable binary formats ([`store`]).
//!
//! Batch rendering, embedding extraction, and ranking are data-parallel via
//! rayon when the default `parallel` feature is on; outputs are bit-identical
//! to the sequential fallback at any thread count.

pub mod augment;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod font;
pub mod model;
pub mod render;
pub mod retrieval;
pub mod sampler;
pub mod seed;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
