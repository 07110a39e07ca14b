//! Small dense linear algebra: LU with partial pivoting (kept as a reusable
//! factorization so adjoint solves can share it), column-pivoted Householder
//! QR for kernel bases, and Gram whitening built on nalgebra's symmetric
//! eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Pivots at or below this fraction of the largest matrix entry are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

/// Default relative tolerance for numerical rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Row-pivoted LU factorization `P A = L U`, stored compactly.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
}

impl LuFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::invalid(format!(
                "LU needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let scale = a.amax().max(f64::MIN_POSITIVE);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > PIVOT_TOLERANCE * scale) {
                return Err(Error::SingularMatrix { pivot: best, column: k, scale });
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        let ukj = lu[(k, j)];
                        lu[(i, j)] -= factor * ukj;
                    }
                }
            }
        }
        Ok(LuFactor { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut y = DVector::from_iterator(n, self.perm.iter().map(|&p| b[p]));
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }

    /// Solves `Aᵀ x = b` with the same factorization.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length mismatch");
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, Lᵀ v = w, x = Pᵀ v.
        let mut w = b.clone();
        for i in 0..n {
            let mut s = w[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * w[j];
            }
            w[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for j in (i + 1)..n {
                s -= self.lu[(j, i)] * w[j];
            }
            w[i] = s;
        }
        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        x
    }

    /// Smallest and largest |U_kk|, a cheap conditioning indicator.
    pub fn pivot_range(&self) -> (f64, f64) {
        let d = self.lu.diagonal();
        let min = d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let max = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        (min, max)
    }
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::invalid(format!(
            "matrix has {} rows but rhs has length {}",
            a.nrows(),
            b.len()
        )));
    }
    Ok(LuFactor::new(a)?.solve(b))
}

/// Column-pivoted Householder QR of an `m x n` matrix with the full `m x m`
/// orthogonal factor. Returns `(Q, rank)`.
pub fn pivoted_qr_full(a: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, usize) {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(m, m);
    let mut norms: Vec<f64> = (0..n).map(|j| r.column(j).norm_squared()).collect();
    let steps = m.min(n);
    let mut first_diag = 0.0;
    let mut rank = 0;
    for k in 0..steps {
        // pivot on the largest remaining column norm
        let (mut p, mut best) = (k, -1.0);
        for (j, &nv) in norms.iter().enumerate().skip(k) {
            if nv > best {
                best = nv;
                p = j;
            }
        }
        if p != k {
            r.swap_columns(p, k);
            norms.swap(p, k);
        }
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        let alpha = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if k == 0 {
            first_diag = alpha;
        }
        if alpha <= tol * first_diag.max(f64::MIN_POSITIVE) || alpha == 0.0 {
            break;
        }
        rank += 1;
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            // R <- H R
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..m {
                    r[(i, j)] -= f * v[i - k];
                }
            }
            // Q <- Q H
            for i in 0..m {
                let dot: f64 = (k..m).map(|l| q[(i, l)] * v[l - k]).sum();
                let f = 2.0 * dot / vnorm2;
                for l in k..m {
                    q[(i, l)] -= f * v[l - k];
                }
            }
        }
        for (j, nv) in norms.iter_mut().enumerate().skip(k + 1) {
            *nv = (k + 1..m).map(|i| r[(i, j)] * r[(i, j)]).sum();
        }
    }
    (q, rank)
}

/// Orthonormal basis (as columns) of `ker Bᵀ`, i.e. of the orthogonal
/// complement of `range B`.
pub fn left_kernel_basis(b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let m = b.nrows();
    let (q, rank) = pivoted_qr_full(b, tol);
    q.columns(rank, m - rank).into_owned()
}

fn check_symmetric(g: &DMatrix<f64>, what: &str) -> Result<()> {
    if g.nrows() != g.ncols() {
        return Err(Error::invalid(format!("{what} is not square")));
    }
    let scale = g.amax().max(f64::MIN_POSITIVE);
    if (g - g.transpose()).amax() > 1e-10 * scale {
        return Err(Error::invalid(format!("{what} is not symmetric")));
    }
    Ok(())
}

/// `G^{-1/2}` for a symmetric positive definite Gram matrix.
pub fn inv_sqrt_spd(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(g, "Gram matrix")?;
    if g.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if !(min > RANK_TOLERANCE * max) {
        return Err(Error::invalid(format!(
            "Gram matrix is not positive definite (eigenvalues in [{min:.3e}, {max:.3e}])"
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Eigenvalues of the pencil `(A, G)` for symmetric `A` and SPD `G`, ascending.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.shape() != g.shape() {
        return Err(Error::invalid("pencil matrices differ in shape"));
    }
    let w = inv_sqrt_spd(g)?;
    let sym = 0.5 * (a + a.transpose());
    let m = &w * sym * &w;
    let m = 0.5 * (&m + m.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

/// Smallest singular value of a (possibly rectangular) matrix.
pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    sv.min()
}

/// Symmetric part `(A + Aᵀ)/2`.
pub fn sym_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_solve_returns_rhs() {
        let a = DMatrix::<f64>::identity(4, 4);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.5, 0.0]);
        assert_eq!(dense_solve(&a, &b).unwrap(), b);
    }

    #[test]
    fn diagonal_solve() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let b = DVector::from_vec(vec![2.0, 8.0]);
        let x = dense_solve(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_system_residual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..n {
            a[(i, i)] += 10.0;
        }
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let lu = LuFactor::new(&a).unwrap();
        let x = lu.solve(&b);
        let res = (&a * &x - &b).norm();
        assert!(res <= 1e-10 * (a.norm() * x.norm() + b.norm()));
        let xt = lu.solve_transpose(&b);
        let res_t = (a.transpose() * &xt - &b).norm();
        assert!(res_t <= 1e-10 * (a.norm() * xt.norm() + b.norm()));
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(dense_solve(&a, &b), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn needs_pivoting() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![3.0, 5.0]);
        let x = dense_solve(&a, &b).unwrap();
        assert_eq!(x.as_slice(), &[5.0, 3.0]);
    }

    #[test]
    fn left_kernel_is_orthogonal_to_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DMatrix::from_fn(7, 3, |_, _| rng.gen_range(-1.0..1.0));
        let k = left_kernel_basis(&b, RANK_TOLERANCE);
        assert_eq!(k.ncols(), 4);
        assert!((k.transpose() * &b).amax() < 1e-13);
        assert!((k.transpose() * &k - DMatrix::identity(4, 4)).amax() < 1e-13);
    }

    #[test]
    fn rank_deficient_kernel() {
        // third column is the sum of the first two
        let b = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 0.0],
        );
        let k = left_kernel_basis(&b, RANK_TOLERANCE);
        assert_eq!(k.ncols(), 2);
        assert!((k.transpose() * &b).amax() < 1e-13);
    }

    #[test]
    fn indefinite_gram_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(inv_sqrt_spd(&g), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn generalized_eigs_of_scaled_identity() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 6.0]));
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let ev = generalized_eigenvalues(&a, &g).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
