//! Natural-language network management: graph model, prompt generation,
//! model gateway, sandboxed execution and benchmark evaluation.

pub mod bench;
pub mod eval;
pub mod graph;
pub mod llm;
pub mod promptgen;
pub mod sandbox;
pub mod suite;
