//! Small dense symmetric kernels. Dimensions here are tiny (d ≲ 50), so a
//! cyclic Jacobi sweep is exact enough and easy to reason about.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: DVector<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn off_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SymEigen> {
    if m.nrows() != m.ncols() {
        return Err(Error::Structural(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let n = m.nrows();
    let mut a = symmetrize(m);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    let tol = 1e-12 * scale;

    let mut converged = n <= 1 || off_norm(&a) <= tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                // smaller root of t^2 + 2θt − 1 = 0 keeps the rotation < π/4
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&a) <= tol;
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, idx.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vectors.set_column(col, &v.column(i));
    }
    Ok(SymEigen { values, vectors })
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(sym_eigen(m)?.values.iter().copied().collect())
}

/// Spectral norm of a symmetric matrix.
pub fn op_norm(m: &DMatrix<f64>) -> Result<f64> {
    let ev = sym_eigen(m)?.values;
    Ok(ev.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())))
}

/// Symmetric square root; eigenvalues below zero are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = sym_eigen(m)?;
    let d = DMatrix::from_diagonal(&e.values.map(|x| x.max(0.0).sqrt()));
    Ok(&e.vectors * d * e.vectors.transpose())
}

/// log det of a symmetric PSD matrix; −∞ when singular after clamping.
pub fn logdet_psd(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if let Some(ch) = symmetrize(m).cholesky() {
        return Ok(2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>());
    }
    let ev = eigenvalues(m)?;
    if ev.iter().any(|&x| x <= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ev.iter().map(|x| x.ln()).sum())
}

pub fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    symmetrize(m)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

/// Rows/cols `idx` of `m`.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Rows `r` × cols `c` of `m`.
pub fn block(m: &DMatrix<f64>, r: &[usize], c: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_small_cases() {
        let v = eigenvalues(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 1.0]);
        let v = eigenvalues(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]))).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
        let v = eigenvalues(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_random_matrix() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.0, 1.0, -2.0, 0.0, 5.0, 2.0, 0.5, 1.0, 2.0, 1.0],
        );
        let e = sym_eigen(&m).unwrap();
        let back = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((back - &m).norm() < 1e-10);
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - DMatrix::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn sqrt_and_logdet() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_sqrt(&m).unwrap();
        assert!((&r * &r - &m).norm() < 1e-10);
        assert!((logdet_psd(&m).unwrap() - 11f64.ln()).abs() < 1e-12);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(logdet_psd(&sing).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn non_square_is_structural() {
        assert!(matches!(sym_eigen(&DMatrix::zeros(2, 3)), Err(Error::Structural(_))));
    }
}
