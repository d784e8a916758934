//! Small dense Hermitian linear algebra.
//!
//! The Cholesky factorization is written out here because the covariance
//! likelihood and its gradient need the factor, its log-determinant and
//! triangular solves, never an explicit inverse. Eigendecompositions go
//! through nalgebra.

use nalgebra::SymmetricEigen;

use crate::{CMatrix, CVector, Error, Result, C64};

/// Lower-triangular factor `C = G Gᴴ` of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    g: CMatrix,
}

impl Cholesky {
    pub fn factor(c: &CMatrix) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", n, c.ncols())));
        }
        let mut g = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = c[(j, j)].re;
            for k in 0..j {
                d -= g[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            g[(j, j)] = C64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = c[(i, j)];
                for k in 0..j {
                    s -= g[(i, k)] * g[(j, k)].conj();
                }
                g[(i, j)] = s / djj;
            }
        }
        Ok(Self { g })
    }

    pub fn factor_matrix(&self) -> &CMatrix {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// `ln det C = 2 Σ ln G_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.g[(i, i)].re.ln()).sum::<f64>()
    }

    /// Solve `G z = b` in place.
    pub fn forward_solve_mut(&self, b: &mut [C64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.g[(i, k)] * b[k];
            }
            b[i] = s / self.g[(i, i)].re;
        }
    }

    /// Solve `Gᴴ z = b` in place.
    pub fn backward_solve_mut(&self, b: &mut [C64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.g[(k, i)].conj() * b[k];
            }
            b[i] = s / self.g[(i, i)].re;
        }
    }

    /// `C⁻¹ b`.
    pub fn solve(&self, b: &CVector) -> CVector {
        let mut z = b.clone();
        self.forward_solve_mut(z.as_mut_slice());
        self.backward_solve_mut(z.as_mut_slice());
        z
    }

    /// `C⁻¹ B`, column by column.
    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        let mut z = b.clone();
        for mut col in z.column_iter_mut() {
            let s = col.as_mut_slice();
            self.forward_solve_mut(s);
            self.backward_solve_mut(s);
        }
        z
    }

    /// `tr(C⁻¹ A)` for Hermitian `A`, computed as `tr(G⁻¹ A G⁻ᴴ)` with two
    /// rounds of forward substitution.
    pub fn trace_inv_times(&self, a: &CMatrix) -> f64 {
        // W = G⁻¹ A, then Z = G⁻¹ Wᴴ = G⁻¹ A G⁻ᴴ since A = Aᴴ.
        let mut w = a.clone();
        for mut col in w.column_iter_mut() {
            self.forward_solve_mut(col.as_mut_slice());
        }
        let mut z = w.adjoint();
        for mut col in z.column_iter_mut() {
            self.forward_solve_mut(col.as_mut_slice());
        }
        (0..self.dim()).map(|i| z[(i, i)].re).sum()
    }
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `k` pairs with `values[k]`.
    pub vectors: CMatrix,
}

pub fn hermitian_eigen(c: &CMatrix) -> HermitianEigen {
    let eig = SymmetricEigen::new(c.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_columns(&order.iter().map(|&k| eig.eigenvectors.column(k)).collect::<Vec<_>>());
    HermitianEigen { values, vectors }
}
