//! High-order graph-based dependency parsing.
//!
//! The pipeline scores every candidate arc of a sentence with a biaffine
//! scorer, transfers those scores into a factor graph of two-arc grandparent
//! and consecutive-sibling constraints, solves the decomposed MAP problem by
//! consensus ADMM, and decodes a tree by minimum-Bayes-risk head selection
//! with a maximum-spanning-arborescence fallback. Small-instance exact
//! engines (brute-force enumeration, loopy belief propagation) are included
//! so every approximate component can be checked against ground truth.
//!
//! This crate is `no_std` (alloc required); file formats and the command
//! line live in the companion `hodep-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod admm;
pub mod corpus;
pub mod decoder;
pub mod factor_graph;
pub mod linalg;
pub mod model_io;
pub mod oracle;
pub mod pipeline;
pub mod scorer;
pub mod synthetic;
pub mod trainer;
pub mod verify;
