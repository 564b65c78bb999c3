//! Research-workflow mining over full-text scholarly corpora.

pub mod analytics;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod error;
pub mod generate;
pub mod http;
pub mod llm;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod pu;
pub mod shallow;
pub mod stage;
pub mod text;
pub mod workflow;

pub use error::{Error, Result};
