//! Shared fixtures for the benchmarks.

use clustergcf::dataset::{self, SplitConfig};
use clustergcf::synthetic::PlantedPartition;
use clustergcf::{BipartiteGraph, InteractionDataset, Result};

pub struct Fixture {
    pub dataset: InteractionDataset,
    pub graph: BipartiteGraph,
}

/// Planted-partition data split with the default ratios.
pub fn fixture(n_users: usize, n_items: usize, per_user: usize, seed: u64) -> Result<Fixture> {
    let gen = PlantedPartition {
        n_users,
        n_items,
        n_blocks: 4,
        interactions_per_user: per_user,
        ..PlantedPartition::default()
    };
    let dataset = dataset::split(&gen.generate(seed), &SplitConfig::default(), seed)?;
    let graph = BipartiteGraph::build(&dataset)?;
    Ok(Fixture { dataset, graph })
}
