//! Dense linear-algebra helpers shared by both stages.
//!
//! Matrices are vectorized column-major (`vec(X)` stacks columns), which is
//! also nalgebra's storage order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Frobenius inner product `tr(AᵀB)`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Singular value decomposition with singular values sorted in decreasing
/// order. Returns `(U, s, V)` with `A = U diag(s) Vᵀ` in thin form.
///
/// Computed with faer: nalgebra's bidiagonal SVD loses accuracy on
/// rank-deficient inputs such as thresholded iterates.
pub fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return (
            DMatrix::zeros(m, 0),
            DVector::zeros(0),
            DMatrix::zeros(n, 0),
        );
    }
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().expect("svd of a finite matrix");
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let mut order: Vec<usize> = (0..k).collect();
    // stable sort keeps the decomposition's own order on exact ties
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let u_sorted = DMatrix::from_fn(m, k, |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(n, k, |r, c| v[(r, order[c])]);
    let s_sorted = DVector::from_iterator(k, order.iter().map(|&i| s[i]));
    (u_sorted, s_sorted, v_sorted)
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sorted_symmetric_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let vals = eig.eigenvalues;
    let vecs = eig.eigenvectors;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| {
        vals[i]
            .partial_cmp(&vals[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted_vals = DVector::from_iterator(order.len(), order.iter().map(|&i| vals[i]));
    let sorted_vecs = DMatrix::from_fn(vecs.nrows(), order.len(), |r, c| vecs[(r, order[c])]);
    (sorted_vals, sorted_vecs)
}

/// Orthonormal basis of the complement of `span(basis)`, built by
/// Gram-Schmidt over the standard basis vectors (twice, for stability),
/// always taking the candidate with the largest remaining component.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    let have = basis.ncols();
    let want = d - have;
    let mut cols: Vec<DVector<f64>> = (0..have).map(|j| basis.column(j).into_owned()).collect();
    let mut out = Vec::with_capacity(want);
    let mut used = vec![false; d];
    for _ in 0..want {
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for (i, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            for _ in 0..2 {
                for c in &cols {
                    let proj = c.dot(&e);
                    e.axpy(-proj, c, 1.0);
                }
            }
            let n = e.norm();
            if best.as_ref().is_none_or(|b| n > b.2 + 1e-12) {
                best = Some((i, e, n));
            }
        }
        let (i, e, n) = best.expect("complement candidate");
        used[i] = true;
        let q = e / n;
        cols.push(q.clone());
        out.push(q);
    }
    if out.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration. Equal to its largest singular value.
pub fn power_sigma_max(a: &DMatrix<f64>, tol: f64, max_iters: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // non-constant start so graph Laplacians (constant null vector) converge
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 1.618_033_988_7).sin());
    let norm = v.norm();
    v /= norm;
    let mut rho = 0.0;
    for _ in 0..max_iters {
        let w = a * &v;
        let next_rho = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let done = (next_rho - rho).abs() <= tol * next_rho.abs().max(1e-300);
        rho = next_rho;
        if done {
            break;
        }
    }
    // the Rayleigh quotient under-estimates; the last norm ratio is a better
    // estimate once converged, so report the larger of the two
    let w = a * &v;
    rho.max(w.norm()).max(0.0)
}

/// Largest principal-angle sine between a subspace and the orthogonal
/// complement `perp` of an estimate: `‖perpᵀ basis‖₂`.
pub fn sin_theta(perp: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    if perp.ncols() == 0 {
        return 0.0;
    }
    sorted_svd(&(perp.transpose() * basis))
        .1
        .get(0)
        .copied()
        .unwrap_or(0.0)
}

/// `log|A|` of a symmetric positive definite matrix via Cholesky.
pub fn logdet_spd(a: &DMatrix<f64>) -> Result<f64> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("cholesky failed in log-determinant".into()))?;
    Ok(2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .take(a.nrows())
            .map(|d| d.ln())
            .sum::<f64>())
}

pub fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("cholesky failed in inverse".into()))?;
    Ok(chol.inverse())
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}
