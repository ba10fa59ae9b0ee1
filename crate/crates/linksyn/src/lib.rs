//! Graph-guided synthesis of question-answer training data.
//!
//! The library turns an annotated QA corpus into new QA instances in five
//! stages, each usable on its own:
//!
//! 1. [`consolidation`] — merge near-duplicate knowledge-point labels
//!    (surface clustering + co-occurrence clustering).
//! 2. [`graph`] — build the weighted knowledge-point co-occurrence graph
//!    and compute its structural statistics.
//! 3. [`sampling`] — sample knowledge-point paths by random walk under
//!    coverage, popularity, or hybrid policies, grounded in an explicit
//!    distribution-value objective.
//! 4. [`selection`] — attach seed instances to each path under target
//!    difficulty/discipline attributes.
//! 5. [`synthesis`] + [`filters`] — prompt a generation backend per seed
//!    group, then decontaminate and quality-screen the output.
//!
//! [`pipeline`] chains the stages behind a single config with a resumable
//! run manifest; the `linksyn` binary exposes every stage as a subcommand.
//!
//! All randomness flows through [`rng::RngStream`], so every stage is
//! byte-reproducible for a fixed seed, including under parallel execution.

pub mod consolidation;
pub mod corpus;
pub mod filters;
pub mod graph;
pub(crate) mod par;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod selection;
pub mod synthesis;
