//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Thin SVD with singular values sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn sorted_svd(m: &DMatrix<f64>) -> Result<SortedSvd> {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return Ok(SortedSvd {
            u: DMatrix::zeros(r, 0),
            singular_values: DVector::zeros(0),
            v: DMatrix::zeros(c, 0),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVD input"));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Solver("SVD did not return U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Solver("SVD did not return V".into()))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(SortedSvd {
        u: DMatrix::from_fn(r, k, |i, j| u[(i, order[j])]),
        singular_values: DVector::from_fn(k, |j, _| svd.singular_values[order[j]]),
        v: DMatrix::from_fn(c, k, |i, j| vt[(order[j], i)]),
    })
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(singular_values: &DVector<f64>, rel_tol: f64) -> usize {
    let top = singular_values.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|s| **s > rel_tol * top).count()
}

/// Moore-Penrose pseudoinverse, truncating singular values below
/// `rel_tol` times the largest one.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (r, c) = m.shape();
    let svd = sorted_svd(m)?;
    let rank = numerical_rank(&svd.singular_values, rel_tol);
    let mut out = DMatrix::zeros(c, r);
    for j in 0..rank {
        let s = svd.singular_values[j];
        out += svd.v.column(j) * svd.u.column(j).transpose() / s;
    }
    Ok(out)
}

/// Orthonormal basis of the orthogonal complement of the column span of `q`,
/// whose columns are assumed orthonormal. Built by Gram-Schmidt over the
/// standard basis, so the result is deterministic.
pub fn orthonormal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let target = n - q.ncols().min(n);
    let mut basis: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(target);
    for i in 0..n {
        if out.len() == target {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&v);
                v -= b * p;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            basis.push(v.clone());
            out.push(v);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Ratio of largest to smallest singular value; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    match sorted_svd(m) {
        Ok(svd) if !svd.singular_values.is_empty() => {
            let k = svd.singular_values.len();
            let smin = svd.singular_values[k - 1];
            if smin == 0.0 {
                f64::INFINITY
            } else {
                svd.singular_values[0] / smin
            }
        }
        Ok(_) => 1.0,
        Err(_) => f64::INFINITY,
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Spectral radius via the eigenvalues of a general real matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Smallest entry, `+inf` for an empty matrix.
pub fn min_entry(m: &DMatrix<f64>) -> f64 {
    m.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Relative threshold below which [`chop`] treats an entry as round-off.
pub const CHOP_TOL: f64 = 1e-13;

/// Zeroes entries below `CHOP_TOL` times the largest magnitude, so that
/// structural zeros produced by orthogonal factorisations stay exact.
pub fn chop(m: DMatrix<f64>) -> DMatrix<f64> {
    let floor = CHOP_TOL * max_abs(&m);
    m.map(|v| if v.abs() <= floor { 0.0 } else { v })
}

/// Rows of the identity selected by `rows`.
pub fn select_rows(n: usize, rows: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), n);
    for (i, &r) in rows.iter().enumerate() {
        m[(i, r)] = 1.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chop_clears_round_off_only() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, -1e-17, 1e-10]);
        assert_eq!(chop(m), DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1e-10]));
    }

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 3.0, 0.0, 0.0, 2.0]);
        let s = sorted_svd(&m).unwrap();
        assert!(s.singular_values[0] >= s.singular_values[1]);
        let r = &s.u * DMatrix::from_diagonal(&s.singular_values) * s.v.transpose();
        assert_relative_eq!(r, m, epsilon = 1e-12);
    }

    #[test]
    fn pinv_of_full_column_rank_is_left_inverse() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
        let p = pinv(&m, 1e-10).unwrap();
        assert_relative_eq!(&p * &m, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        let p = pinv(&DMatrix::zeros(2, 3), 1e-10).unwrap();
        assert_eq!(p, DMatrix::zeros(3, 2));
    }

    #[test]
    fn complement_spans_the_rest() {
        let q = DMatrix::from_column_slice(3, 1, &[0.0, 0.6, 0.8]);
        let c = orthonormal_complement(&q);
        assert_eq!(c.ncols(), 2);
        let full = DMatrix::from_columns(&[q.column(0), c.column(0), c.column(1)]);
        assert_relative_eq!(full.transpose() * &full, DMatrix::identity(3, 3), epsilon = 1e-12);
        assert_eq!(orthonormal_complement(&DMatrix::identity(2, 2)).ncols(), 0);
        assert_eq!(orthonormal_complement(&DMatrix::zeros(2, 0)), DMatrix::identity(2, 2));
    }

    #[test]
    fn rank_and_condition() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let s = sorted_svd(&m).unwrap();
        assert_eq!(numerical_rank(&s.singular_values, 1e-10), 1);
        assert!(condition_number(&m) > 1e12);
        assert_relative_eq!(condition_number(&DMatrix::identity(3, 3)), 1.0);
    }

    #[test]
    fn eigen_helpers() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_relative_eq!(min_eigenvalue(&m), 1.0, epsilon = 1e-12);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&r), 1.0, epsilon = 1e-12);
    }
}
