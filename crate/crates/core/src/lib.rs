//! Single-base-station localization of radio sources in cluttered 2-D maps.
//!
//! The crate simulates multipath propagation with an image-source ray tracer,
//! encodes each link's paths as a vector, a matrix or an image, trains one of
//! three localizers on them and turns heatmap predictions into top-K
//! candidates and a dispersion-based uncertainty score.
//!
//! The runnable examples are the best starting point:
//!
//! | example | shows |
//! |---|---|
//! | `trace_paths` | direct and reflected paths in a hand-built scene |
//! | `generate_dataset` | writing and reloading a dataset with its splits |
//! | `encode_inputs` | the three input encodings and the heatmap target |
//! | `train_mlp` | the shortest-path regressor, LOS vs NLOS accuracy |
//! | `train_pathcnn` | the all-paths regressor next to the MLP |
//! | `train_unet` | heatmap training, checkpointing, metrics and figures |
//! | `topk_candidates` | mixture fitting and both top-K extraction methods |
//! | `uncertainty_bins` | dispersion score against error |
//! | `ablation` | retraining without individual input angles |
//!
//! The `nlosloc` binary wraps the same pipeline as `generate`, `train`,
//! `evaluate`, `ablate` and `plot` subcommands.

// NaN must fail validation, hence `!(x > 0.0)` style checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod models;
pub mod nn;
pub mod plot;
pub mod postprocess;

pub use error::{Error, Result};
