//! Multimodal top-N recommendation benchmark engine.
//!
//! The pipeline runs in four stages: interaction ingestion and splitting
//! ([`corpus`]), item text preparation and embedding loading ([`textprep`]),
//! modality alignment and early fusion ([`earlyfusion`]), and model training,
//! ranking and evaluation ([`models`], [`latefusion`], [`metrics`]). The
//! [`bench`] module drives all of them from one declarative configuration.

pub mod corpus;
pub mod ids;
pub mod rng;
pub mod textprep;
pub mod earlyfusion;
pub mod models;
pub mod latefusion;
pub mod metrics;
pub mod bench;
