//! Full-ranking top-K evaluation.
//!
//! Every item is scored for every user; the user's training items (and
//! validation items when evaluating on test) are removed from the ranking.
//! Ties are broken by ascending item id so results are exact and
//! reproducible.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{InteractionDataset, Split};
use crate::dense::DenseMatrix;
use crate::error::{invalid_arg, Error, Result};
use crate::propagation::score_all_items;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub recall: f64,
    pub hr: f64,
    pub ndcg: f64,
    pub k: usize,
    pub n_users_evaluated: usize,
}

impl fmt::Display for EvalResult {
    /// Percentages with two decimals.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Recall@{k} {:.2}  HR@{k} {:.2}  NDCG@{k} {:.2}  (users: {})",
            100.0 * self.recall,
            100.0 * self.hr,
            100.0 * self.ndcg,
            self.n_users_evaluated,
            k = self.k
        )
    }
}

/// Per-user metric values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMetrics {
    pub recall: f64,
    pub hit: f64,
    pub ndcg: f64,
}

#[inline]
fn discount(rank0: usize) -> f64 {
    1.0 / ((rank0 + 2) as f64).log2()
}

/// Descending score, then ascending id.
#[inline]
fn rank_order(scores: &[f64], a: u32, b: u32) -> Ordering {
    scores[b as usize]
        .total_cmp(&scores[a as usize])
        .then(a.cmp(&b))
}

/// Top-`k` item ids with `excluded` (sorted) removed.
pub fn top_k(scores: &[f64], excluded: &[u32], k: usize) -> Vec<u32> {
    let mut cand: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| excluded.binary_search(i).is_err())
        .collect();
    if k < cand.len() {
        cand.select_nth_unstable_by(k, |&a, &b| rank_order(scores, a, b));
        cand.truncate(k);
    }
    cand.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    cand
}

/// Metrics for one ranked list against a sorted target set.
pub fn user_metrics(ranked: &[u32], targets: &[u32], k: usize) -> UserMetrics {
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (r, item) in ranked.iter().take(k).enumerate() {
        if targets.binary_search(item).is_ok() {
            hits += 1;
            dcg += discount(r);
        }
    }
    let idcg: f64 = (0..targets.len().min(k)).map(discount).sum();
    UserMetrics {
        recall: hits as f64 / targets.len() as f64,
        hit: if hits > 0 { 1.0 } else { 0.0 },
        ndcg: dcg / idcg,
    }
}

/// Evaluates arbitrary per-user score vectors. `excluded[u]` and
/// `targets[u]` must be sorted; users with no targets are skipped.
pub fn evaluate_scores<F>(
    n_users: usize,
    score_fn: F,
    excluded: &[Vec<u32>],
    targets: &[Vec<u32>],
    k: usize,
) -> Result<EvalResult>
where
    F: Fn(u32) -> Result<Vec<f64>> + Sync,
{
    if k == 0 {
        return Err(invalid_arg!("k must be at least 1"));
    }
    if excluded.len() != n_users || targets.len() != n_users {
        return Err(invalid_arg!("masks and targets must have one entry per user"));
    }
    let per_user: Vec<Option<UserMetrics>> = (0..n_users)
        .into_par_iter()
        .map(|u| {
            if targets[u].is_empty() {
                return Ok(None);
            }
            let scores = score_fn(u as u32)?;
            let ranked = top_k(&scores, &excluded[u], k);
            Ok(Some(user_metrics(&ranked, &targets[u], k)))
        })
        .collect::<Result<_>>()?;
    let (mut recall, mut hr, mut ndcg, mut n) = (0.0, 0.0, 0.0, 0usize);
    for m in per_user.into_iter().flatten() {
        recall += m.recall;
        hr += m.hit;
        ndcg += m.ndcg;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySplit("no user has evaluation targets".into()));
    }
    let nf = n as f64;
    Ok(EvalResult {
        recall: recall / nf,
        hr: hr / nf,
        ndcg: ndcg / nf,
        k,
        n_users_evaluated: n,
    })
}

fn masks(ds: &InteractionDataset, split: Split) -> Vec<Vec<u32>> {
    let mut excluded = ds.items_by_user(&ds.train);
    if split == Split::Test {
        for &(u, i) in &ds.validation {
            excluded[u as usize].push(i);
        }
        excluded.iter_mut().for_each(|v| v.sort_unstable());
    }
    excluded
}

pub fn evaluate(final_emb: &DenseMatrix, ds: &InteractionDataset, split: Split, k: usize) -> Result<EvalResult> {
    let pairs = ds.split_pairs(split);
    if pairs.is_empty() {
        return Err(Error::EmptySplit(format!("{split:?} split has no interactions")));
    }
    if final_emb.n_rows() != ds.n_nodes() {
        return Err(invalid_arg!(
            "embedding has {} rows, dataset has {} nodes",
            final_emb.n_rows(),
            ds.n_nodes()
        ));
    }
    let targets = ds.items_by_user(pairs);
    let excluded = masks(ds, split);
    evaluate_scores(
        ds.n_users,
        |u| score_all_items(final_emb, ds.n_users, u),
        &excluded,
        &targets,
        k,
    )
}

/// Top-`k` recommendations per user with train and validation items removed.
pub fn rank_users(
    final_emb: &DenseMatrix,
    ds: &InteractionDataset,
    users: &[u32],
    k: usize,
) -> Result<Vec<Vec<u32>>> {
    if k == 0 {
        return Err(invalid_arg!("k must be at least 1"));
    }
    let excluded = masks(ds, Split::Test);
    users
        .iter()
        .map(|&u| {
            if u as usize >= ds.n_users {
                return Err(invalid_arg!("user {u} out of range"));
            }
            let scores = score_all_items(final_emb, ds.n_users, u)?;
            Ok(top_k(&scores, &excluded[u as usize], k))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_target_first() {
        let m = user_metrics(&[3, 1, 2], &[3], 20);
        assert_eq!(m, UserMetrics { recall: 1.0, hit: 1.0, ndcg: 1.0 });
    }

    #[test]
    fn half_recall() {
        let ranked: Vec<u32> = (0..20).collect();
        let m = user_metrics(&ranked, &[5, 7, 100, 101], 20);
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.hit, 1.0);
    }

    #[test]
    fn ndcg_rank_two() {
        let m = user_metrics(&[0, 9, 1], &[9], 5);
        assert!((m.ndcg - 0.63093).abs() < 1e-5);
        assert_eq!(m.ndcg, 1.0 / 3f64.log2());
    }

    #[test]
    fn top_k_ties_and_masking() {
        let scores = [1.0, 3.0, 3.0, 0.5, 3.0];
        assert_eq!(top_k(&scores, &[], 3), vec![1, 2, 4]);
        assert_eq!(top_k(&scores, &[2], 3), vec![1, 4, 0]);
        assert_eq!(top_k(&scores, &[1, 2], 10), vec![4, 0, 3]);
    }

    #[test]
    fn empty_split_and_bad_k() {
        let ds = InteractionDataset::from_splits(1, 2, vec![(0, 0), (0, 1)], vec![], vec![]).unwrap();
        let f = DenseMatrix::zeros(3, 2);
        assert!(matches!(evaluate(&f, &ds, Split::Test, 20), Err(Error::EmptySplit(_))));
        let ds = InteractionDataset::from_splits(2, 2, vec![(0, 0), (1, 1)], vec![], vec![(0, 1)]).unwrap();
        assert!(evaluate(&DenseMatrix::zeros(4, 2), &ds, Split::Test, 0).is_err());
    }

    #[test]
    fn evaluate_masks_train_and_validation_on_test() {
        // user 0: train {0}, validation {1}, test {2}; items scored 0 > 1 > 2 > 3.
        let ds = InteractionDataset::from_splits(
            2,
            4,
            vec![(0, 0), (1, 1), (1, 2), (1, 3)],
            vec![(0, 1)],
            vec![(0, 2)],
        )
        .unwrap();
        let mut f = DenseMatrix::zeros(6, 1);
        f.set(0, 0, 1.0);
        for (i, s) in [4.0, 3.0, 2.0, 1.0].iter().enumerate() {
            f.set(2 + i, 0, *s);
        }
        let res = evaluate(&f, &ds, Split::Test, 1).unwrap();
        assert_eq!(res.recall, 1.0);
        assert_eq!(res.n_users_evaluated, 1);
        let ranked = rank_users(&f, &ds, &[0], 4).unwrap();
        assert_eq!(ranked[0], vec![2, 3]);
    }
}
