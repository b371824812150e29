pub mod analysis;
pub mod bench;
pub mod catalog;
pub mod config;
pub mod embedding;
pub mod geometry;
pub mod llm;
pub mod orchestrator;
pub mod prompts;
pub mod retrieval;
pub mod sandbox;
