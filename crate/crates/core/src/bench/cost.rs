use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::graph::generate_traffic_graph;
use crate::llm::{compute_cost, Cost, ModelConfig, Usage};
use crate::promptgen::{build_task_context, Application, PromptGenerator};
use crate::sandbox::ExecBackendKind;

/// Reply length assumed when pricing a prompt that was never sent.
pub const ASSUMED_OUTPUT_TOKENS: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptPath {
    Codegen,
    Strawman,
}

impl fmt::Display for PromptPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptPath::Codegen => "codegen",
            PromptPath::Strawman => "strawman",
        })
    }
}

/// Estimated prompt size and price of one query on one graph size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub size: usize,
    pub nodes: usize,
    pub edges: usize,
    pub model: String,
    pub query: usize,
    pub path: PromptPath,
    pub prompt_tokens: usize,
    pub output_tokens: u64,
    pub cost: Cost,
    pub overflow: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSweep {
    pub samples: Vec<CostSample>,
    /// First size at which each (model, path) overflows the context limit.
    pub first_overflow: BTreeMap<(String, PromptPath), Option<usize>>,
}

/// Splits an element budget into a node and an edge count.
fn split_size(size: usize) -> (usize, usize) {
    let nodes = (size / 3).max(2);
    let edges = size.saturating_sub(nodes).min(nodes * (nodes - 1));
    (nodes, edges)
}

/// Prices the codegen and strawman prompts of every query on synthetic
/// traffic graphs of the given sizes (nodes plus edges).
pub fn cost_sweep(
    sizes: &[usize],
    models: &[ModelConfig],
    queries: &[String],
    prompts: &PromptGenerator,
    seed: u64,
) -> Result<CostSweep, BenchError> {
    if sizes.is_empty() || models.is_empty() || queries.is_empty() {
        return Err(BenchError::Config("cost sweep needs sizes, models and queries".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::Config("sizes must be strictly ascending".into()));
    }
    let mut samples = Vec::new();
    let mut first_overflow: BTreeMap<(String, PromptPath), Option<usize>> = BTreeMap::new();
    for &size in sizes {
        let (nodes, edges) = split_size(size);
        let g = generate_traffic_graph(nodes, edges, seed).map_err(|e| BenchError::Config(e.to_string()))?;
        let ctx = build_task_context(Application::Traffic, &g);
        for (qi, q) in queries.iter().enumerate() {
            let codegen = prompts
                .build_codegen_prompt(&ctx, q, ExecBackendKind::GraphApi)
                .map_err(|e| BenchError::Config(e.to_string()))?
                .estimated_tokens;
            let strawman = prompts
                .build_strawman_prompt(Application::Traffic, &g, q, usize::MAX)
                .map_err(|e| BenchError::Config(e.to_string()))?
                .estimated_tokens;
            for cfg in models {
                for (path, tokens) in [(PromptPath::Codegen, codegen), (PromptPath::Strawman, strawman)] {
                    let overflow = tokens > cfg.context_limit;
                    let first = first_overflow.entry((cfg.name.clone(), path)).or_insert(None);
                    if overflow && first.is_none() {
                        *first = Some(size);
                    }
                    let usage = Usage { tokens_in: tokens as u64, tokens_out: ASSUMED_OUTPUT_TOKENS };
                    samples.push(CostSample {
                        size,
                        nodes,
                        edges,
                        model: cfg.name.clone(),
                        query: qi,
                        path,
                        prompt_tokens: tokens,
                        output_tokens: ASSUMED_OUTPUT_TOKENS,
                        cost: compute_cost(usage, cfg.pricing),
                        overflow,
                    });
                }
            }
        }
    }
    Ok(CostSweep { samples, first_overflow })
}

impl CostSweep {
    /// Per-query samples, one CSV row each (ready for a cost CDF).
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("size,nodes,edges,model,query,path,prompt_tokens,output_tokens,cost_usd,overflow\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                s.size, s.nodes, s.edges, s.model, s.query, s.path, s.prompt_tokens, s.output_tokens, s.cost, s.overflow
            ));
        }
        out
    }

    /// Mean prompt tokens and cost per (size, model, path), plus the first
    /// overflowing size of each model and path.
    pub fn summary(&self) -> String {
        let mut groups: BTreeMap<(usize, &str, PromptPath), (usize, u128, usize, bool)> = BTreeMap::new();
        for s in &self.samples {
            let g = groups.entry((s.size, s.model.as_str(), s.path)).or_default();
            g.0 += s.prompt_tokens;
            g.1 += s.cost.nanos();
            g.2 += 1;
            g.3 |= s.overflow;
        }
        let mut out = String::from("size,model,path,mean_prompt_tokens,mean_cost_usd,overflow\n");
        for ((size, model, path), (tokens, nanos, n, overflow)) in &groups {
            let n = *n as u128;
            let mean_cost = Cost::from_nanos((nanos + n / 2) / n);
            out.push_str(&format!("{size},{model},{path},{},{mean_cost},{overflow}\n", (*tokens as u128 + n / 2) / n));
        }
        out.push_str("\nmodel,path,first_overflow_size\n");
        for ((model, path), first) in &self.first_overflow {
            out.push_str(&format!("{model},{path},{}\n", first.map_or("none".to_string(), |s| s.to_string())));
        }
        out
    }
}
