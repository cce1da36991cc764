//! Core of the `mlsolv` solvation free energy model.
//!
//! The model predicts the solvation free energy of a solvent/solute pair as
//! a sum of pairwise atomic interaction terms. Each molecule is parsed from
//! SMILES into a heavy-atom graph ([`graph`]), turned into a matrix of
//! per-atom embedding vectors pretrained with a skip-gram objective
//! ([`embed`]), and encoded into per-atom feature vectors by either a
//! skip-connected graph convolution stack or a bidirectional recurrent
//! stack ([`encoders`]). The inner products between solvent and solute
//! feature vectors form an interaction map whose total is the predicted
//! free energy in kcal/mol ([`interaction`]); its marginals attribute the
//! prediction to individual atoms. Training, dataset splitting and the
//! cross-validation protocol live in [`train`].
//!
//! This crate is `no_std` (with `alloc`) and fully deterministic: all
//! stochastic steps are driven by explicit seeds and the float math goes
//! through `libm`, so identical inputs give bitwise identical results
//! across platforms. File formats, ingestion and the command line live in
//! the companion `mlsolv` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cluster;
pub mod embed;
pub mod encoders;
pub mod graph;
pub mod interaction;
pub mod optim;
pub mod tape;
pub mod tensor;
pub mod train;
