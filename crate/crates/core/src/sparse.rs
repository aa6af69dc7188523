//! Compressed sparse row storage and the three kernels that every
//! propagation and gradient step reduces to: `spmm`, `spmm_transpose` and
//! `row_scale`.
//!
//! Matrices are canonical after construction (column indices strictly
//! increasing within a row, no duplicates, no stored zeros), so the kernels
//! never branch on structure. Each output row of `spmm` is produced by exactly
//! one worker and accumulated in column order, which makes results
//! bit-identical regardless of the thread count.

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{invalid_arg, Error, Result};

const PAR_MIN_ROWS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a canonical matrix from unordered `(row, col, value)` entries.
    /// Duplicate coordinates are summed; entries that end up zero are dropped.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n_cols > u32::MAX as usize {
            return Err(invalid_arg!("too many columns for u32 indices: {n_cols}"));
        }
        let mut entries: Vec<(usize, usize, f64)> = entries.into_iter().collect();
        for &(r, c, v) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(invalid_arg!(
                    "entry ({r}, {c}) out of bounds for {n_rows}x{n_cols}"
                ));
            }
            if !v.is_finite() {
                return Err(invalid_arg!("non-finite value at ({r}, {c})"));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            i += 1;
            while i < entries.len() && entries[i].0 == r && entries[i].1 == c {
                v += entries[i].2;
                i += 1;
            }
            if v != 0.0 {
                col_idx.push(c as u32);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Adopts raw CSR arrays after checking every canonical-form invariant.
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 {
            return Err(invalid_arg!("row_ptr must have length n_rows+1 and start at 0"));
        }
        if col_idx.len() != values.len() || row_ptr[n_rows] != col_idx.len() {
            return Err(invalid_arg!("row_ptr[n_rows] must equal nnz"));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(invalid_arg!("row_ptr decreases at row {r}"));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid_arg!("row {r} columns not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c as usize >= n_cols) {
                return Err(invalid_arg!("row {r} has a column index >= {n_cols}"));
            }
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(invalid_arg!("stored values must be finite and nonzero"));
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    /// Stored value at `(r, c)`, zero when absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|r| {
                let (cols, vals) = self.row(r);
                cols.iter()
                    .zip(vals)
                    .all(|(&c, &v)| self.get(c as usize, r) == v)
            })
    }
}

/// `A · X`.
pub fn spmm(a: &CsrMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_cols != x.n_rows() {
        return Err(invalid_arg!(
            "spmm: A is {}x{} but X has {} rows",
            a.n_rows,
            a.n_cols,
            x.n_rows()
        ));
    }
    let d = x.n_cols();
    let mut out = DenseMatrix::zeros(a.n_rows, d);
    if d == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(d)
        .with_min_len(PAR_MIN_ROWS)
        .enumerate()
        .for_each(|(r, out_row)| {
            let (cols, vals) = a.row(r);
            for (&c, &w) in cols.iter().zip(vals) {
                for (o, xv) in out_row.iter_mut().zip(x.row(c as usize)) {
                    *o += w * xv;
                }
            }
        });
    check_finite(&out, "spmm")?;
    Ok(out)
}

/// `Aᵀ · X` computed by scattering rows of `X`; `Aᵀ` is never formed.
pub fn spmm_transpose(a: &CsrMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_rows != x.n_rows() {
        return Err(invalid_arg!(
            "spmm_transpose: A is {}x{} but X has {} rows",
            a.n_rows,
            a.n_cols,
            x.n_rows()
        ));
    }
    let mut out = DenseMatrix::zeros(a.n_cols, x.n_cols());
    for r in 0..a.n_rows {
        let (cols, vals) = a.row(r);
        let xr = x.row(r);
        for (&c, &w) in cols.iter().zip(vals) {
            for (o, xv) in out.row_mut(c as usize).iter_mut().zip(xr) {
                *o += w * xv;
            }
        }
    }
    check_finite(&out, "spmm_transpose")?;
    Ok(out)
}

/// Scales row `r` of `X` by `w[r]`.
pub fn row_scale(x: &DenseMatrix, w: &[f64]) -> Result<DenseMatrix> {
    if w.len() != x.n_rows() {
        return Err(invalid_arg!(
            "row_scale: {} weights for {} rows",
            w.len(),
            x.n_rows()
        ));
    }
    let d = x.n_cols();
    let mut out = x.clone();
    if d == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(d)
        .with_min_len(PAR_MIN_ROWS)
        .zip(w.par_iter())
        .for_each(|(row, &s)| row.iter_mut().for_each(|v| *v *= s));
    Ok(out)
}

fn check_finite(m: &DenseMatrix, what: &str) -> Result<()> {
    match m.as_slice().iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(pos) => Err(Error::NumericOverflow(format!(
            "{what} produced a non-finite value in row {}",
            pos / m.n_cols().max(1)
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn explicit_transpose(a: &CsrMatrix) -> CsrMatrix {
        let mut t = Vec::new();
        for r in 0..a.n_rows() {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                t.push((c as usize, r, v));
            }
        }
        CsrMatrix::from_triplets(a.n_cols(), a.n_rows(), t).unwrap()
    }

    fn dense(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn canonicalizes_triplets() {
        let a = CsrMatrix::from_triplets(
            2,
            3,
            vec![(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (0, 1, 1.0), (1, 1, 0.0), (0, 2, 1.0), (0, 2, -1.0)],
        )
        .unwrap();
        assert_eq!(a.row_ptr(), &[0, 1, 3]);
        assert_eq!(a.col_idx(), &[1, 0, 2]);
        assert_eq!(a.values(), &[3.0, 3.0, 1.0]);
    }

    #[test]
    fn from_parts_checks_invariants() {
        assert!(CsrMatrix::from_parts(2, 2, vec![0, 1, 2], vec![1, 0], vec![1.0, 1.0]).is_ok());
        assert!(CsrMatrix::from_parts(2, 2, vec![1, 1, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 1], vec![0], vec![0.0]).is_err());
        assert!(CsrMatrix::from_triplets(1, 1, vec![(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn spmm_identity_is_exact() {
        let x = dense(&[&[1.5, -2.0], &[0.25, 3.0], &[7.0, 1e-9]]);
        assert_eq!(spmm(&CsrMatrix::identity(3), &x).unwrap(), x);
        assert_eq!(spmm_transpose(&CsrMatrix::identity(3), &x).unwrap(), x);
    }

    #[test]
    fn spmm_empty_row_is_zero() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 1, 1.0), (2, 0, 2.0)]).unwrap();
        let x = dense(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let y = spmm(&a, &x).unwrap();
        assert_eq!(y.row(1), &[0.0, 0.0]);
        assert_eq!(y.row(0), &[3.0, 4.0]);
        assert_eq!(y.row(2), &[2.0, 4.0]);
    }

    #[test]
    fn spmm_hand_example() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 0.5), (1, 0, 0.5)]).unwrap();
        let y = spmm(&a, &dense(&[&[2.0], &[4.0]])).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn spmm_transpose_hand_example() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0)]).unwrap();
        let y = spmm_transpose(&a, &dense(&[&[3.0], &[5.0]])).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 3.0]);
    }

    #[test]
    fn spmm_transpose_matches_spmm_when_symmetric() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 1, 0.3), (1, 0, 0.3), (1, 2, -1.2), (2, 1, -1.2), (2, 2, 4.0)],
        )
        .unwrap();
        assert!(a.is_symmetric());
        let x = dense(&[&[1.0, 2.0], &[-3.0, 0.5], &[2.5, 1.0]]);
        assert_eq!(spmm_transpose(&a, &x).unwrap(), spmm(&a, &x).unwrap());
    }

    #[test]
    fn dimension_mismatches() {
        let a = CsrMatrix::identity(3);
        let x = DenseMatrix::zeros(2, 2);
        assert!(matches!(spmm(&a, &x), Err(Error::InvalidArgument(_))));
        assert!(matches!(spmm_transpose(&a, &x), Err(Error::InvalidArgument(_))));
        assert!(matches!(row_scale(&x, &[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn spmm_reports_overflow() {
        let a = CsrMatrix::from_triplets(1, 2, vec![(0, 0, 1e308), (0, 1, 1e308)]).unwrap();
        let x = dense(&[&[10.0], &[10.0]]);
        assert!(matches!(spmm(&a, &x), Err(Error::NumericOverflow(_))));
    }

    #[test]
    fn row_scale_examples() {
        let x = dense(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(row_scale(&x, &[1.0, 1.0]).unwrap(), x);
        assert_eq!(row_scale(&x, &[0.0, 0.0]).unwrap(), DenseMatrix::zeros(2, 2));
        assert_eq!(
            row_scale(&x, &[0.5, 2.0]).unwrap(),
            dense(&[&[0.5, 1.0], &[6.0, 8.0]])
        );
    }

    fn arb_csr(max_dim: usize) -> impl Strategy<Value = CsrMatrix> {
        (1..max_dim, 1..max_dim).prop_flat_map(|(r, c)| {
            proptest::collection::vec((0..r, 0..c, -2.0f64..2.0), 0..(r * c + 1))
                .prop_map(move |t| CsrMatrix::from_triplets(r, c, t).unwrap())
        })
    }

    fn arb_dense(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
        proptest::collection::vec(-5.0f64..5.0, rows * cols)
            .prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
    }

    proptest! {
        #[test]
        fn transpose_kernel_matches_explicit_transpose(
            (a, x) in arb_csr(12).prop_flat_map(|a| { let n = a.n_rows(); (Just(a), arb_dense(n, 3)) })
        ) {
            let fast = spmm_transpose(&a, &x).unwrap();
            let reference = spmm(&explicit_transpose(&a), &x).unwrap();
            prop_assert!(fast.max_abs_diff(&reference) <= 1e-12);
        }

        #[test]
        fn spmm_distributes_over_addition(
            (a, x, y) in arb_csr(12).prop_flat_map(|a| {
                let n = a.n_cols();
                (Just(a), arb_dense(n, 4), arb_dense(n, 4))
            })
        ) {
            let mut sum = x.clone();
            sum.add_assign(&y);
            let lhs = spmm(&a, &sum).unwrap();
            let mut rhs = spmm(&a, &x).unwrap();
            rhs.add_assign(&spmm(&a, &y).unwrap());
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
        }

        #[test]
        fn row_scale_inverts(
            (x, w) in (1usize..10).prop_flat_map(|n| (arb_dense(n, 3), proptest::collection::vec(0.1f64..10.0, n)))
        ) {
            let inv: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
            let back = row_scale(&row_scale(&x, &w).unwrap(), &inv).unwrap();
            prop_assert!(back.max_abs_diff(&x) <= 1e-12);
        }
    }

    #[test]
    fn spmm_is_thread_count_independent() {
        let n = 500;
        let t: Vec<_> = (0..n)
            .flat_map(|r| (0..7).map(move |k| (r, (r * 31 + k * 17) % n, 1.0 / (1 + k + r % 5) as f64)))
            .collect();
        let a = CsrMatrix::from_triplets(n, n, t).unwrap();
        let x = DenseMatrix::from_fn(n, 8, |r, c| ((r * 13 + c * 7) % 11) as f64 * 0.1 - 0.5);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let y1 = one.install(|| spmm(&a, &x).unwrap());
        let y4 = four.install(|| spmm(&a, &x).unwrap());
        assert_eq!(y1.as_slice(), y4.as_slice());
    }
}
