//! Small dense linear-algebra helpers shared by the engine and the oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SmdError};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Serialize a [`Vector`] as a plain list of numbers: `#[serde(with = "crate::linalg::plain")]`.
pub mod plain {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector, D::Error> {
        Vec::<f64>::deserialize(d).map(Vector::from_vec)
    }
}

/// Smallest eigenvalue of a symmetric matrix together with its eigenvector.
pub fn min_eigen(sym: &Matrix) -> (f64, Vector) {
    let eig = sym.clone().symmetric_eigen();
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Stack sample inputs as the rows of a design matrix.
pub fn rows_to_matrix(rows: &[Vector]) -> Matrix {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    Matrix::from_fn(n, d, |i, j| rows[i][j])
}

/// Orthonormal basis of the null space of `x` (n x m, full row rank), as columns.
pub fn null_space_basis(x: &Matrix) -> Result<Matrix> {
    let (n, m) = x.shape();
    if n > m {
        return Err(SmdError::Input(format!("null space of a {n}x{m} matrix with n > m")));
    }
    // Orthonormal basis of the row space first, then complete with coordinate vectors.
    let mut basis: Vec<Vector> = Vec::with_capacity(m);
    for i in 0..n {
        let mut v = x.row(i).transpose();
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        let nrm = v.norm();
        if nrm <= 1e-10 * x.row(i).norm().max(1.0) {
            return Err(SmdError::Input("design matrix is rank deficient".into()));
        }
        basis.push(v / nrm);
    }
    let mut null: Vec<Vector> = Vec::with_capacity(m - n);
    for j in 0..m {
        if basis.len() == m {
            break;
        }
        let mut v = Vector::zeros(m);
        v[j] = 1.0;
        // two passes of Gram-Schmidt for stability
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let nrm = v.norm();
        if nrm > 1e-6 {
            let v = v / nrm;
            basis.push(v.clone());
            null.push(v);
        }
    }
    Ok(Matrix::from_columns(&null).resize(m, m - n, 0.0))
}

/// Numerical rank of `x` via singular values.
pub fn rank(x: &Matrix) -> usize {
    if x.is_empty() {
        return 0;
    }
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let tol = smax * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON * 16.0;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// `‖a - b‖ / ‖b‖`, falling back to the absolute distance when `b` is zero.
pub fn rel_err(a: &Vector, b: &Vector) -> f64 {
    let d = (a - b).norm();
    let nb = b.norm();
    if nb > 0.0 {
        d / nb
    } else {
        d
    }
}

pub fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
