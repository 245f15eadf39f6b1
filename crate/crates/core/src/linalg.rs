//! Small dense helpers on top of nalgebra.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative invertibility test: `|det| > 1e-10 · Π(row norms)`.
pub fn is_invertible(a: &DMatrix<f64>) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    if a.nrows() == 0 {
        return true;
    }
    let scale: f64 = a.row_iter().map(|r| r.norm()).product();
    if scale == 0.0 {
        return false;
    }
    a.clone().lu().determinant().abs() > 1e-10 * scale
}

/// Eigenvalues of a symmetric matrix in ascending order with matching eigenvectors.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = 0.5 * (a + a.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Orthonormal basis of the column space, dropping directions whose singular
/// value is below `rel_tol · σ_max`.
pub fn orthonormal_range(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(rows, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * smax)
        .collect();
    DMatrix::from_fn(rows, keep.len(), |r, c| u[(r, keep[c])])
}

/// Right singular vectors spanning the numerical kernel.
///
/// Returns `(basis, singular values descending)`; a direction belongs to the
/// kernel when its singular value is below `rel_tol · σ_max`. Columns beyond the
/// row count are always kernel directions.
pub fn numerical_kernel(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, Vec<f64>) {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return (DMatrix::zeros(0, 0), Vec::new());
    }
    if rows == 0 {
        return (DMatrix::identity(cols, cols), Vec::new());
    }
    // pad so the SVD yields a full set of right singular vectors
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sv.first().cloned().unwrap_or(0.0);
    let ker: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| smax == 0.0 || svd.singular_values[i] < rel_tol * smax)
        .collect();
    let basis = DMatrix::from_fn(cols, ker.len(), |r, c| vt[(ker[c], r)]);
    (basis, sv)
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(cols, |i, _| 1.0 + (i as f64 * 0.618_034).fract());
    let mut est = 0.0;
    for _ in 0..200 {
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        v /= n;
        let w = a.transpose() * (a * &v);
        let next = w.norm().sqrt();
        v = w;
        if (next - est).abs() <= 1e-10 * next {
            return next;
        }
        est = next;
    }
    est
}

/// Sines of the principal angles measuring how far span(`u`) sticks out of
/// span(`v`). Both inputs must have orthonormal columns. The largest entry is
/// zero iff span(`u`) ⊆ span(`v`).
pub fn containment_sines(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Vec<f64> {
    if u.ncols() == 0 {
        return Vec::new();
    }
    let resid = u - v * (v.transpose() * u);
    let svd = resid.svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.truncate(u.ncols());
    s
}
