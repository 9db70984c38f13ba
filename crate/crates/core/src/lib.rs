//! Data preparation toolkit for Vietnamese–Japanese machine translation.
//!
//! The stages run in order: [`corpus`] ingestion, rare-word flagging in
//! [`analyze`], BM25 few-shot retrieval in [`retrieve`], dual-temperature
//! chain-of-thought generation in [`generate`], and merging, splitting and
//! export in [`assemble`]. [`metrics`] scores translations with corpus BLEU.

pub mod analyze;
pub mod assemble;
pub mod corpus;
pub mod generate;
pub mod metrics;
pub mod retrieve;
