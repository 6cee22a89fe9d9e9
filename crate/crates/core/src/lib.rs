//! Blind video quality assessment at desk scale.
//!
//! The crate covers the full no-reference pipeline for user-generated
//! content: clip ingestion ([`clip_io`]), temporal and spatial sampling
//! ([`sampling`]), signal features ([`features`]), learned regressors
//! ([`regressors`]), discrete-level scoring and ensemble fusion
//! ([`scoring`]), correlation metrics ([`eval`]) and an efficiency harness
//! with MACs/parameter accounting ([`bench`]). The [`cli`] module backs the
//! `ugc-vqa` binary.
//!
//! Runnable walkthroughs for each capability live in `examples/`:
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example ingest_and_sample
//! ```

pub mod bench;
pub mod cli;
pub mod clip_io;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod regressors;
pub mod sampling;
pub mod scoring;
