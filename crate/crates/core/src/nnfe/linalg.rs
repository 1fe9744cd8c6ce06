//! Row-chunked parallel matrix products.
//!
//! Chunk boundaries depend only on the matrix shape, never on the thread
//! count, so results are bit-identical across runs and machines.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

const CHUNK_ROWS: usize = 32;

fn par_row_chunks<F>(rows: usize, cols: usize, f: F) -> Array2<f64>
where
    F: Fn(usize, usize) -> Array2<f64> + Sync,
{
    if rows <= CHUNK_ROWS {
        return f(0, rows);
    }
    let parts: Vec<Array2<f64>> = (0..rows.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| f(c * CHUNK_ROWS, ((c + 1) * CHUNK_ROWS).min(rows)))
        .collect();
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let out = concatenate(Axis(0), &views).expect("chunks share column count");
    debug_assert_eq!(out.ncols(), cols);
    out
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub(crate) fn matmul_nt(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    par_row_chunks(a.nrows(), b.nrows(), |lo, hi| a.slice(s![lo..hi, ..]).dot(&b.t()))
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub(crate) fn matmul_nn(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    par_row_chunks(a.nrows(), b.ncols(), |lo, hi| a.slice(s![lo..hi, ..]).dot(&b))
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`.
pub(crate) fn matmul_tn(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    par_row_chunks(a.ncols(), b.ncols(), |lo, hi| a.slice(s![.., lo..hi]).t().dot(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sample(rows: usize, cols: usize, salt: f64) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| ((i * 31 + j * 7) as f64 * 0.37 + salt).sin())
    }

    #[test]
    fn products_match_plain_dot() {
        let a = sample(70, 13, 0.1);
        let b = sample(45, 13, 0.2);
        let c = sample(13, 45, 0.3);
        assert!((matmul_nt(a.view(), b.view()) - a.dot(&b.t())).iter().all(|d| d.abs() < 1e-12));
        assert!((matmul_nn(a.view(), c.view()) - a.dot(&c)).iter().all(|d| d.abs() < 1e-12));
        let d = sample(13, 70, 0.4);
        assert!((matmul_tn(d.view(), b.t()) - d.t().dot(&b.t())).iter().all(|d| d.abs() < 1e-12));
    }
}
