//! Corpus handling, run settings and manifests, and the command implementations.

pub mod commands;
pub mod corpus;
pub mod manifest;
pub mod settings;
pub mod synth;

pub use commands::*;
pub use corpus::LsfCorpus;
pub use manifest::RunManifest;
pub use settings::Settings;
