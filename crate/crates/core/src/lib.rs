//! Implicit-feedback recommenders (SLIM, WRMF, Multi-VAE, popularity and random
//! baselines) together with the accuracy and popularity-bias measurements used
//! to compare them on long-tail listening data.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`] loads, generates, summarises and splits user × artist play counts.
//! * [`metrics`] holds AUC, AP@K, GAP and ΔGAP.
//! * [`model`] defines the [`model::Recommender`] contract, the baselines, top-N
//!   selection and the binary model container.
//! * [`slim`], [`wrmf`] and [`multivae`] are the three learned models.
//! * [`harness`] wires everything into tuning, evaluation reports and the
//!   simulated-user ΔGAP analysis.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled (the default) and plain iterators otherwise. Every
//! parallel stage is written so its output does not depend on thread count.

pub mod corpus;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod multivae;
pub mod par;
pub mod rng;
pub mod slim;
pub mod wrmf;

pub use error::{Error, Result};
