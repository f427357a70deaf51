// Every chapter is compiled as the docs of an empty module so that
// `cargo test --doc -p skillgen-book` runs the book's code blocks.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/trajectories.md")]
pub mod trajectories {}
#[doc = include_str!("src/graph.md")]
pub mod graph {}
#[doc = include_str!("src/credit.md")]
pub mod credit {}
#[doc = include_str!("src/skills.md")]
pub mod skills {}
#[doc = include_str!("src/retrieval.md")]
pub mod retrieval {}
#[doc = include_str!("src/prompts.md")]
pub mod prompts {}
#[doc = include_str!("src/episodes.md")]
pub mod episodes {}
#[doc = include_str!("src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("src/pipeline.md")]
pub mod pipeline {}
