//! Symmetric eigendecomposition.
//!
//! Small matrices use cyclic Jacobi rotations. Larger ones (covariances of image data run
//! to 3072x3072) go through Householder tridiagonalization followed by implicit QL, which
//! is O(n^3) with a much smaller constant than a full Jacobi sweep schedule.

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Largest dimension handled by [`jacobi_eig`] inside [`symmetric_eig`].
pub const JACOBI_MAX_DIM: usize = 128;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Matrix<f64>,
}

fn check_symmetric(a: &Matrix<f64>) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::shape("symmetric_eig", a.shape(), a.shape()));
    }
    let n = a.rows();
    let scale = a.max_abs().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

pub fn symmetric_eig(a: &Matrix<f64>) -> Result<SymmetricEigen> {
    if a.rows() <= JACOBI_MAX_DIM {
        jacobi_eig(a)
    } else {
        tridiagonal_ql_eig(a)
    }
}

fn sorted(values: Vec<f64>, vectors_as_rows: Matrix<f64>) -> SymmetricEigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for (k, &v) in vectors_as_rows.row(src).iter().enumerate() {
            vectors.set(k, col, v);
        }
    }
    SymmetricEigen {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors,
    }
}

/// Cyclic Jacobi. Stops when the off-diagonal Frobenius norm drops below
/// `1e-10 * max(1, ||A||_F)`.
pub fn jacobi_eig(a: &Matrix<f64>) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut m = a.data().to_vec();
    // rows of `vt` are eigenvectors
    let mut vt = Matrix::<f64>::identity(n).into_vec();
    let tol = JACOBI_TOL * a.frobenius_norm().max(1.0);

    let off = |m: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&m) < tol;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_MAX_SWEEPS {
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let kp = m[k * n + p];
                    let kq = m[k * n + q];
                    m[k * n + p] = c * kp - s * kq;
                    m[k * n + q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let pk = m[p * n + k];
                    let qk = m[q * n + k];
                    m[p * n + k] = c * pk - s * qk;
                    m[q * n + k] = s * pk + c * qk;
                }
                for k in 0..n {
                    let pk = vt[p * n + k];
                    let qk = vt[q * n + k];
                    vt[p * n + k] = c * pk - s * qk;
                    vt[q * n + k] = s * pk + c * qk;
                }
            }
        }
        sweep += 1;
        converged = off(&m) < tol;
    }
    if !converged {
        return Err(Error::NoConvergence(sweep));
    }
    let values = (0..n).map(|i| m[i * n + i]).collect();
    Ok(sorted(values, Matrix::from_vec(n, n, vt)?))
}

/// Householder tridiagonalization + implicit QL with Wilkinson-style shifts.
///
/// Works on the transpose of the usual accumulator so that every inner loop walks a
/// contiguous row.
pub fn tridiagonal_ql_eig(a: &Matrix<f64>) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    let n = a.rows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    let mut w = a.data().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut w, &mut d, &mut e);
    tql2(n, &mut w, &mut d, &mut e)?;
    Ok(sorted(d, Matrix::from_vec(n, n, w)?))
}

fn tred2(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = w[at(j, n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for &dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[at(j, i - 1)];
                w[at(j, i)] = 0.0;
                w[at(i, j)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                w[at(i, j)] = f;
                g = e[j] + w[at(j, j)] * f;
                let row = &w[at(j, 0)..at(j, 0) + n];
                for k in j + 1..i {
                    g += row[k] * d[k];
                    e[k] += row[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let row = &mut w[at(j, 0)..at(j, 0) + n];
                for k in j..i {
                    row[k] -= f * e[k] + g * d[k];
                }
                d[j] = row[i - 1];
                row[i] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        w[at(i, n - 1)] = w[at(i, i)];
        w[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = w[at(i + 1, k)] / h;
            }
            for j in 0..=i {
                let (head, tail) = w.split_at_mut(at(i + 1, 0));
                let next = &tail[..n];
                let row = &mut head[at(j, 0)..at(j, 0) + n];
                let mut g = 0.0;
                for k in 0..=i {
                    g += next[k] * row[k];
                }
                for k in 0..=i {
                    row[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            w[at(i + 1, k)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[at(j, n - 1)];
        w[at(j, n - 1)] = 0.0;
    }
    w[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    const MAX_ITERS: usize = 60;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_ITERS {
                    return Err(Error::NoConvergence(iter));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = w.split_at_mut((i + 1) * n);
                    let vi = &mut lo[i * n..];
                    let vi1 = &mut hi[..n];
                    for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                        let hk = *b;
                        *b = s * *a + c * hk;
                        *a = c * *a - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = Rng::new(seed);
        let b = Matrix::from_fn(n, n, |_, _| rng.gaussian());
        b.add(&b.transpose()).unwrap().scale(0.5)
    }

    fn residuals(a: &Matrix<f64>, eig: &SymmetricEigen) -> (f64, f64, f64) {
        let v = &eig.vectors;
        let av = a.matmul(v).unwrap();
        let vl = v.matmul(&Matrix::diag(&eig.values)).unwrap();
        let eq = av.sub(&vl).unwrap().max_abs();
        let orth = v
            .matmul_tn(v)
            .unwrap()
            .sub(&Matrix::identity(a.rows()))
            .unwrap()
            .max_abs();
        let recon = vl.matmul_nt(v).unwrap().sub(a).unwrap().max_abs();
        (eq, orth, recon)
    }

    /// Cofactor expansion, only for tiny matrices.
    fn det(a: &Matrix<f64>) -> f64 {
        let n = a.rows();
        if n == 1 {
            return a.get(0, 0);
        }
        (0..n)
            .map(|j| {
                let minor = Matrix::from_fn(n - 1, n - 1, |r, c| {
                    a.get(r + 1, if c < j { c } else { c + 1 })
                });
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a.get(0, j) * det(&minor)
            })
            .sum()
    }

    #[test]
    fn diagonal_input() {
        let a = Matrix::diag(&[3.0, 1.0, 2.0]);
        let eig = jacobi_eig(&a).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        // columns are the permuted identity
        assert_eq!(eig.vectors.column(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(eig.vectors.column(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(eig.vectors.column(2), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn classic_two_by_two() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        for eig in [jacobi_eig(&a).unwrap(), tridiagonal_ql_eig(&a).unwrap()] {
            assert!((eig.values[0] - 3.0).abs() < 1e-12);
            assert!((eig.values[1] - 1.0).abs() < 1e-12);
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let v0 = eig.vectors.column(0);
            let v1 = eig.vectors.column(1);
            assert!((v0[0].abs() - h).abs() < 1e-12 && (v0[0] - v0[1]).abs() < 1e-12);
            assert!((v1[0].abs() - h).abs() < 1e-12 && (v1[0] + v1[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_reconstruction_both_routes() {
        let a = random_symmetric(10, 5);
        for eig in [jacobi_eig(&a).unwrap(), tridiagonal_ql_eig(&a).unwrap()] {
            let (eq, orth, recon) = residuals(&a, &eig);
            assert!(
                eq < 1e-8 && orth < 1e-8 && recon < 1e-8,
                "{eq} {orth} {recon}"
            );
            assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn routes_agree_on_larger_matrix() {
        let a = random_symmetric(150, 6);
        let j = jacobi_eig(&a).unwrap();
        let q = symmetric_eig(&a).unwrap();
        for (x, y) in j.values.iter().zip(&q.values) {
            assert!((x - y).abs() < 1e-9);
        }
        let (eq, orth, _) = residuals(&a, &q);
        assert!(eq < 1e-8 && orth < 1e-8, "{eq} {orth}");
    }

    #[test]
    fn trace_and_determinant() {
        for seed in 0..5 {
            let a = random_symmetric(5, seed);
            let eig = symmetric_eig(&a).unwrap();
            let sum: f64 = eig.values.iter().sum();
            let prod: f64 = eig.values.iter().product();
            assert!((sum - a.trace()).abs() < 1e-8);
            assert!((prod - det(&a)).abs() < 1e-8 * det(&a).abs().max(1.0));
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(symmetric_eig(&a), Err(Error::NotSymmetric(_))));
        assert!(matches!(
            tridiagonal_ql_eig(&a),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn rank_deficient_covariance() {
        let mut rng = Rng::new(2);
        let x = Matrix::from_fn(200, 3, |_, _| rng.gaussian());
        let lift = Matrix::from_fn(3, 140, |_, _| rng.gaussian());
        let data = x.matmul(&lift).unwrap();
        let cov = data.gram().scale(1.0 / 200.0);
        let eig = symmetric_eig(&cov).unwrap();
        assert!(eig.values[2] > 1.0);
        assert!(eig.values[3].abs() < 1e-8 * eig.values[0]);
    }
}
