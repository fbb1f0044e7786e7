//! Stationary radial kernels and their Gram machinery.
//!
//! Every kernel here is a function of `r = |x - y|` only. The gradient in the
//! first argument is written as `(x - y) * q(r)` with `q(r) = k'(r) / r`, which
//! stays finite at `r = 0` for the C2 families.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::geometry::CenterSet;
use crate::{distance_sq, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Matern12,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Gaussian,
        KernelFamily::Matern12,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }

    /// Whether the kernel is C2, i.e. whether first derivatives of kernel
    /// sections are available.
    pub fn is_differentiable(self) -> bool {
        !matches!(self, KernelFamily::Matern12)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" | "se" => Ok(KernelFamily::Gaussian),
            "matern12" | "matern1/2" | "exponential" => Ok(KernelFamily::Matern12),
            "matern32" | "matern3/2" => Ok(KernelFamily::Matern32),
            "matern52" | "matern5/2" => Ok(KernelFamily::Matern52),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel family `{other}`"
            ))),
        }
    }
}

/// A stationary Mercer kernel with lengthscale `rho` and variance `sigma^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub variance: f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel {
            family: KernelFamily::Matern52,
            lengthscale: 0.5,
            variance: 1.0,
        }
    }
}

impl Kernel {
    pub fn new(family: KernelFamily, lengthscale: f64, variance: f64) -> Result<Self> {
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variance must be positive, got {variance}"
            )));
        }
        Ok(Kernel {
            family,
            lengthscale,
            variance,
        })
    }

    pub fn gaussian(lengthscale: f64) -> Self {
        Kernel::new(KernelFamily::Gaussian, lengthscale, 1.0).expect("valid lengthscale")
    }

    pub fn matern52(lengthscale: f64) -> Self {
        Kernel::new(KernelFamily::Matern52, lengthscale, 1.0).expect("valid lengthscale")
    }

    /// Value on the diagonal, `K(x, x) = sigma^2`.
    pub fn diagonal(&self) -> f64 {
        self.variance
    }

    fn profile(&self, r2: f64) -> f64 {
        let rho = self.lengthscale;
        let s2 = self.variance;
        match self.family {
            KernelFamily::Gaussian => s2 * (-r2 / (2.0 * rho * rho)).exp(),
            KernelFamily::Matern12 => s2 * (-r2.sqrt() / rho).exp(),
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() * r2.sqrt() / rho;
                s2 * (1.0 + a) * (-a).exp()
            }
            KernelFamily::Matern52 => {
                let a = 5f64.sqrt() * r2.sqrt() / rho;
                s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    /// `k'(r) / r` as a function of `r^2`; finite at zero for C2 families.
    fn radial_slope(&self, r2: f64) -> Result<f64> {
        let rho = self.lengthscale;
        let s2 = self.variance;
        match self.family {
            KernelFamily::Gaussian => Ok(-s2 / (rho * rho) * (-r2 / (2.0 * rho * rho)).exp()),
            KernelFamily::Matern12 => Err(Error::UnsupportedDerivative("matern12")),
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() * r2.sqrt() / rho;
                Ok(-s2 * 3.0 / (rho * rho) * (-a).exp())
            }
            KernelFamily::Matern52 => {
                let a = 5f64.sqrt() * r2.sqrt() / rho;
                Ok(-s2 * 5.0 / (3.0 * rho * rho) * (1.0 + a) * (-a).exp())
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.profile(distance_sq(x, y))
    }

    /// Gradient of `K(x, y)` with respect to `x`, written into `out`.
    pub fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        let q = self.radial_slope(distance_sq(x, y))?;
        for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
            *o = q * (a - b);
        }
        Ok(())
    }

    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.grad_x_into(x, y, &mut out)?;
        Ok(out)
    }

    /// `K(X, Y)`; entry `(i, j)` is `K(X_i, Y_j)`.
    pub fn gram(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), ys.len(), |i, j| self.eval(&xs[i], &ys[j]))
    }

    /// Symmetric Gram matrix of one point set.
    pub fn gram_sym(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.diagonal();
            for j in 0..i {
                let v = self.eval(&xs[i], &xs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Kernel sections at the centers evaluated at `x`: `[K(x, xi_1), ..., K(x, xi_N)]`.
    pub fn sections(&self, centers: &CenterSet, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(centers.len(), centers.iter().map(|c| self.eval(x, c)))
    }

    /// For each probe `x`, the `d x N` matrix whose column `j` is the
    /// gradient of `K(x, xi_j)` in `x`.
    pub fn grad_gram(&self, xs: &[Vec<f64>], centers: &CenterSet) -> Result<Vec<DMatrix<f64>>> {
        xs.iter()
            .map(|x| self.section_gradients(centers, x))
            .collect()
    }

    /// Gradients of all kernel sections at a single point, as a `d x N` matrix.
    pub fn section_gradients(&self, centers: &CenterSet, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = x.len();
        let mut phi = DMatrix::zeros(d, centers.len());
        let mut col = vec![0.0; d];
        for (j, c) in centers.iter().enumerate() {
            self.grad_x_into(x, c, &mut col)?;
            phi.column_mut(j).copy_from_slice(&col);
        }
        Ok(phi)
    }

    /// Cholesky factorization of the center Gram matrix with jitter escalation.
    pub fn factorize(&self, centers: &CenterSet) -> Result<GramFactorization> {
        GramFactorization::new(*self, centers.clone())
    }
}

/// Relative jitter levels tried after the unjittered factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Cholesky factor of `K(Xi, Xi) + jitter * I`.
#[derive(Clone, Debug)]
pub struct GramFactorization {
    kernel: Kernel,
    centers: CenterSet,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl GramFactorization {
    pub fn new(kernel: Kernel, centers: CenterSet) -> Result<Self> {
        let gram = kernel.gram_sym(centers.points());
        let n = gram.nrows();
        let mean_diag = gram.trace() / n as f64;
        let levels = std::iter::once(0.0).chain(JITTER_LADDER.iter().map(|j| j * mean_diag));
        for jitter in levels {
            let mut shifted = gram.clone();
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Ok(GramFactorization {
                    kernel,
                    centers,
                    gram,
                    chol,
                    jitter,
                });
            }
        }
        Err(Error::SingularGram {
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * mean_diag,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn centers(&self) -> &CenterSet {
        &self.centers
    }

    /// The unjittered Gram matrix `K(Xi, Xi)`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Lower-triangular factor `L` with `L L^T = K + jitter I`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Solves `(K + jitter I) a = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `L^-1 k` for a vector of kernel sections `k`.
    pub(crate) fn whiten(&self, sections: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(sections)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Relative Frobenius error of `L L^T` against `K + jitter I`.
    pub fn reconstruction_error(&self) -> f64 {
        let l = self.lower();
        let mut target = self.gram.clone();
        for i in 0..target.nrows() {
            target[(i, i)] += self.jitter;
        }
        (&l * l.transpose() - &target).norm() / target.norm()
    }
}
