//! Duplicate detection and fusion for knowledge graphs.
//!
//! The crate is organised along the matching workflow: entities are read by
//! [`ingest`], values are canonicalised by [`normalize`], candidate pairs come
//! from [`blocking`], are scored by [`compare`] and gated by [`pipeline`].
//! [`evaluate`] scores results against a gold standard and learns
//! configurations; [`fusion`] merges confirmed duplicates.

pub mod blocking;
pub mod compare;
pub mod config;
pub mod ingest;
pub mod model;
pub mod normalize;
pub mod evaluate;
pub mod fusion;
pub mod pipeline;
pub mod synthetic;
