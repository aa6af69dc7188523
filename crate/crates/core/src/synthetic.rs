//! Planted-partition interaction generator used by tests, benchmarks and the
//! end-to-end learning checks.
//!
//! Users and items are split into `n_blocks` latent groups. A user draws most
//! of its interactions from its own group; within a group, item popularity
//! follows a power law so there is signal beyond group membership.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPartition {
    pub n_users: usize,
    pub n_items: usize,
    pub n_blocks: usize,
    pub interactions_per_user: usize,
    /// Probability that a draw comes from the user's own block.
    pub within_block: f64,
    /// Exponent `a` of the in-block popularity weights `1 / rank^a`.
    pub popularity_exponent: f64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        PlantedPartition {
            n_users: 200,
            n_items: 200,
            n_blocks: 2,
            interactions_per_user: 40,
            within_block: 0.9,
            popularity_exponent: 1.5,
        }
    }
}

impl PlantedPartition {
    pub fn block_of_user(&self, u: usize) -> usize {
        u % self.n_blocks
    }

    pub fn block_of_item(&self, i: usize) -> usize {
        i / self.block_size()
    }

    fn block_size(&self) -> usize {
        self.n_items / self.n_blocks
    }

    /// `(user_key, item_key)` pairs, keys formatted `u<id>` / `i<id>`.
    pub fn generate(&self, seed: u64) -> Vec<(String, String)> {
        assert!(self.n_blocks >= 1 && self.n_items >= self.n_blocks);
        let block = self.block_size();
        assert!(self.interactions_per_user <= block, "a user cannot fill its block");
        let weights: Vec<f64> = (1..=block)
            .map(|r| 1.0 / (r as f64).powf(self.popularity_exponent))
            .collect();
        let popularity = WeightedIndex::new(&weights).expect("positive weights");
        let mut rng = seed::rng_for(seed, "synthetic", &[]);
        let mut pairs = Vec::with_capacity(self.n_users * self.interactions_per_user);
        let mut taken = vec![false; self.n_items];
        for u in 0..self.n_users {
            taken.iter_mut().for_each(|t| *t = false);
            let own = self.block_of_user(u);
            let mut count = 0;
            while count < self.interactions_per_user {
                let b = if self.n_blocks == 1 || rng.gen::<f64>() < self.within_block {
                    own
                } else {
                    let other = rng.gen_range(0..self.n_blocks - 1);
                    if other >= own {
                        other + 1
                    } else {
                        other
                    }
                };
                // Redraw only the item so rejections do not skew block mass.
                loop {
                    let item = b * block + popularity.sample(&mut rng);
                    if !taken[item] {
                        taken[item] = true;
                        pairs.push((format!("u{u}"), format!("i{item}")));
                        count += 1;
                        break;
                    }
                }
            }
        }
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_block_mass() {
        let g = PlantedPartition::default();
        let pairs = g.generate(1);
        assert_eq!(pairs.len(), 8000);
        let within = pairs
            .iter()
            .filter(|(u, i)| {
                let u: usize = u[1..].parse().unwrap();
                let i: usize = i[1..].parse().unwrap();
                g.block_of_user(u) == g.block_of_item(i)
            })
            .count();
        let frac = within as f64 / pairs.len() as f64;
        assert!((0.86..0.94).contains(&frac), "{frac}");
        let items: std::collections::HashSet<_> = pairs.iter().map(|p| &p.1).collect();
        assert_eq!(items.len(), 200);
        assert_eq!(pairs, g.generate(1));
    }
}
