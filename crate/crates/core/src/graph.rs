//! The user–item bipartite graph and its symmetrically normalized adjacency.
//!
//! Users occupy node ids `[0, N)` and items `[N, N + M)`. The adjacency is a
//! single `(N+M) x (N+M)` symmetric matrix so that one kernel call updates
//! users and items together, and the reverse pass can reuse `spmm`.

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    n_users: usize,
    n_items: usize,
    laplacian: CsrMatrix,
    user_degrees: Vec<usize>,
    item_degrees: Vec<usize>,
}

impl BipartiteGraph {
    /// Builds the graph from training edges only. Edge `(u, i)` gets weight
    /// `1 / sqrt(|N_u| |N_i|)` in both directions.
    pub fn build(ds: &InteractionDataset) -> Result<Self> {
        Self::from_edges(ds.n_users, ds.n_items, &ds.train)
    }

    pub fn from_edges(n_users: usize, n_items: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut user_degrees = vec![0usize; n_users];
        let mut item_degrees = vec![0usize; n_items];
        for &(u, i) in edges {
            if u as usize >= n_users || i as usize >= n_items {
                return Err(Error::InvalidDataset(format!("edge ({u}, {i}) out of range")));
            }
            user_degrees[u as usize] += 1;
            item_degrees[i as usize] += 1;
        }
        if let Some(u) = user_degrees.iter().position(|&d| d == 0) {
            return Err(Error::InvalidDataset(format!("user {u} is isolated")));
        }
        if let Some(i) = item_degrees.iter().position(|&d| d == 0) {
            return Err(Error::InvalidDataset(format!("item {i} is isolated")));
        }
        let n = n_users + n_items;
        let entries = edges.iter().flat_map(|&(u, i)| {
            let w = 1.0
                / ((user_degrees[u as usize] as f64).sqrt()
                    * (item_degrees[i as usize] as f64).sqrt());
            let (u, i) = (u as usize, n_users + i as usize);
            [(u, i, w), (i, u, w)]
        });
        let laplacian = CsrMatrix::from_triplets(n, n, entries)?;
        if laplacian.nnz() != 2 * edges.len() {
            return Err(Error::InvalidDataset("duplicate training edge".into()));
        }
        Ok(BipartiteGraph {
            n_users,
            n_items,
            laplacian,
            user_degrees,
            item_degrees,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    pub fn user_degrees(&self) -> &[usize] {
        &self.user_degrees
    }

    pub fn item_degrees(&self) -> &[usize] {
        &self.item_degrees
    }

    /// Training degree of a node id in `[0, N + M)`.
    pub fn degree(&self, node: usize) -> usize {
        if node < self.n_users {
            self.user_degrees[node]
        } else {
            self.item_degrees[node - self.n_users]
        }
    }

    pub fn item_node(&self, item: u32) -> usize {
        self.n_users + item as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::sparse::spmm;

    #[test]
    fn single_edge() {
        let g = BipartiteGraph::from_edges(1, 1, &[(0, 0)]).unwrap();
        assert_eq!(g.laplacian().get(0, 1), 1.0);
        assert_eq!(g.laplacian().get(1, 0), 1.0);
        assert_eq!(g.laplacian().get(0, 0), 0.0);
    }

    #[test]
    fn degree_four_user() {
        let g = BipartiteGraph::from_edges(1, 4, &[(0, 0), (0, 1), (0, 2), (0, 3)]).unwrap();
        for i in 0..4 {
            assert_eq!(g.laplacian().get(0, 1 + i), 0.5);
        }
    }

    #[test]
    fn shared_item() {
        let g = BipartiteGraph::from_edges(2, 1, &[(0, 0), (1, 0)]).unwrap();
        let w = g.laplacian().get(0, 2);
        assert!((w - 0.70711).abs() < 1e-5);
        assert_eq!(w, 1.0 / 2f64.sqrt());
    }

    #[test]
    fn isolated_nodes_rejected() {
        assert!(matches!(
            BipartiteGraph::from_edges(2, 1, &[(0, 0)]),
            Err(Error::InvalidDataset(_))
        ));
        assert!(matches!(
            BipartiteGraph::from_edges(1, 2, &[(0, 0)]),
            Err(Error::InvalidDataset(_))
        ));
    }

    #[test]
    fn symmetric_zero_diagonal_and_row_counts() {
        let edges = [(0, 0), (0, 2), (1, 1), (2, 0), (2, 1), (2, 2), (1, 3)];
        let g = BipartiteGraph::from_edges(3, 4, &edges).unwrap();
        let l = g.laplacian();
        assert!(l.is_symmetric());
        for r in 0..g.n_nodes() {
            assert_eq!(l.get(r, r), 0.0);
            assert_eq!(l.row_nnz(r), g.degree(r));
        }
    }

    #[test]
    fn one_hop_matches_node_form() {
        let edges = [(0u32, 0u32), (0, 2), (1, 1), (2, 0), (2, 1), (2, 2), (1, 3)];
        let (n_users, n_items) = (3, 4);
        let g = BipartiteGraph::from_edges(n_users, n_items, &edges).unwrap();
        let x = DenseMatrix::from_fn(g.n_nodes(), 3, |r, c| ((r * 7 + c * 3) % 5) as f64 - 1.7);
        let y = spmm(g.laplacian(), &x).unwrap();
        for u in 0..n_users {
            let mut expect = vec![0.0; 3];
            for &(eu, ei) in &edges {
                if eu as usize == u {
                    let w = 1.0
                        / ((g.user_degrees()[u] as f64).sqrt()
                            * (g.item_degrees()[ei as usize] as f64).sqrt());
                    for c in 0..3 {
                        expect[c] += w * x.get(n_users + ei as usize, c);
                    }
                }
            }
            for c in 0..3 {
                assert!((y.get(u, c) - expect[c]).abs() <= 1e-12);
            }
        }
    }
}
