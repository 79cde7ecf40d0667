//! Robust imitation learning from noisy demonstrations on exactly solvable
//! tabular MDPs.
//!
//! The crate provides:
//!
//! - a catalog of margin losses with their symmetry properties ([`loss`]),
//! - finite MDPs with exact occupancy measures, planning, and rollout
//!   sampling ([`mdp`], [`gridworld`]),
//! - noisy demonstration generation under an expert/non-expert mixture
//!   model ([`demo`]),
//! - balanced-risk machinery and tabular classifier training ([`risk`]),
//! - co-pseudo-labeling sample selection ([`pseudo`]),
//! - the full RIL-Co training loop plus GAIL-style, naive-pseudo-labeling,
//!   and behavior-cloning baselines ([`trainer`]),
//! - brute-force verifiers for the analytical identities the method rests
//!   on ([`verify`]),
//! - experiment sweeps with CSV/SVG reporting ([`sweep`], [`plot`]).
//!
//! Everything is deterministic given explicit seeds, including under the
//! `parallel` feature (each work unit derives its own RNG stream).

pub mod demo;
pub mod error;
pub mod fileio;
pub mod gridworld;
pub mod loss;
pub mod mdp;
pub mod parallel;
pub mod plot;
pub mod pseudo;
pub mod risk;
pub mod sweep;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
