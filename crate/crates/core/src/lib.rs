//! Cross-verification of quantum devices through measurement-pattern flow
//! ambiguity.
//!
//! One graph state admits several information flows, each compiling to a
//! circuit of different width and depth whose outcome probabilities are
//! exactly related. This crate builds those circuits, simulates them on
//! noisy simulated devices, and quantifies device agreement via the squared
//! l2-distance between output vectors, computed exactly and estimated
//! scalably from collision statistics.
//!
//! Modules follow the pipeline:
//!
//! * [`graphs`] — open graphs, flows, validation, builtins, and the
//!   circuit-to-graph mapping.
//! * [`patterns`] — compiling (graph, flow, angles) to circuits, angle
//!   rewriting with randomization bits, outcome masks and relations.
//! * [`simulator`] — exact statevector evaluation, shot sampling, noise.
//! * [`verifier`] — distance computation, collision estimators, sanity
//!   checks, regression and auxiliary analysis.
//! * [`harness`] — devices, experiment orchestration, persistence, plots.

pub mod graphs;
pub mod harness;
pub mod patterns;
pub mod seed;
pub mod simulator;
pub mod verifier;
