pub mod config;
pub mod credit;
pub mod envs;
pub mod graph;
pub mod http;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod retrieval;
pub mod runtime;
pub mod skills;
pub mod trajectory;
