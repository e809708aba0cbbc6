pub mod cli;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod neural;
pub mod pipeline;
pub mod readability;
pub mod shallow;
pub mod synth;
pub mod textprep;
pub mod util;
