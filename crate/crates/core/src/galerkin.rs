//! Least-squares Galerkin realization of the policy-evaluation equation
//! `A v = b`, `(A v)(x) = psi(x)^T grad v(x)`, over `H_N`.
//!
//! With `Phi(x)` the `d x N` matrix of kernel-section gradients and
//! `l(x) = Phi(x)^T psi(x)` the vector of unsymmetric-kernel values
//! `[A K(., xi_j)](x)`, the coefficients solve
//!
//! ```text
//! [ int l(x) l(x)^T dx ] alpha = int l(x) b(x) dx
//! ```
//!
//! with every integral replaced by a tensor Gauss–Legendre rule.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{closed_loop_field, pde_rhs, ControlAffineSystem, CostSpec, Policy};
use crate::geometry::CenterSet;
use crate::kernels::Kernel;
use crate::native_approx::Approximant;
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// Relative floor on the PE margin: `beta > PE_RELATIVE_FLOOR * trace(M) / N`.
pub const PE_RELATIVE_FLOOR: f64 = 1e-12;

/// `Phi(x, Xi)`: column `j` is `grad_x K(x, xi_j)`.
pub fn phi_matrix(k: &Kernel, centers: &CenterSet, x: &[f64]) -> Result<DMatrix<f64>> {
    k.section_gradients(centers, x)
}

/// `l*(y, x) = grad_x K(x, y)^T psi(x)`, the closed-loop operator applied to
/// the kernel section at `y` and evaluated at `x`.
pub fn unsym_kernel(
    k: &Kernel,
    sys: &ControlAffineSystem,
    pol: &Policy,
    y: &[f64],
    x: &[f64],
) -> Result<f64> {
    let g = k.grad_x(x, y)?;
    let psi = closed_loop_field(sys, pol, x);
    Ok(g.iter().zip(psi.iter()).map(|(a, b)| a * b).sum())
}

/// `(A v)(x) = psi(x)^T grad v(x)` for an approximant `v`.
pub fn apply_operator(
    v: &Approximant,
    sys: &ControlAffineSystem,
    pol: &Policy,
    x: &[f64],
) -> Result<f64> {
    let g = v.grad(x)?;
    let psi = closed_loop_field(sys, pol, x);
    Ok(g.iter().zip(psi.iter()).map(|(a, b)| a * b).sum())
}

/// Assembled Galerkin matrix, right-hand side and diagnostics.
#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Quadrature estimate of `int b^2 dx`.
    pub rhs_energy: f64,
    /// Smallest eigenvalue of `matrix` (the PE margin `beta(N)`).
    pub pe_margin: f64,
    pub max_eigenvalue: f64,
    pub quadrature_nodes: usize,
}

impl GalerkinSystem {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn pe_threshold(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        PE_RELATIVE_FLOOR * self.matrix.trace() / self.len() as f64
    }

    /// `lambda_max / lambda_min`, infinite when the margin is not positive.
    pub fn condition_estimate(&self) -> f64 {
        if self.pe_margin > 0.0 {
            self.max_eigenvalue / self.pe_margin
        } else {
            f64::INFINITY
        }
    }

    /// Square root of the quadrature estimate of `|A v - b|^2_{L2}` at `alpha`.
    pub fn residual_norm(&self, alpha: &DVector<f64>) -> f64 {
        let quad =
            alpha.dot(&(&self.matrix * alpha)) - 2.0 * alpha.dot(&self.rhs) + self.rhs_energy;
        quad.max(0.0).sqrt()
    }
}

/// Assembles with `b(x) = -r(x, mu(x))` from the policy.
pub fn assemble(
    k: &Kernel,
    centers: &CenterSet,
    sys: &ControlAffineSystem,
    pol: &Policy,
    cost: &CostSpec,
    rule: &QuadratureRule,
) -> Result<GalerkinSystem> {
    assemble_with_rhs(k, centers, sys, pol, |x| pde_rhs(cost, pol, x), rule)
}

/// Assembles with an arbitrary right-hand side `b`.
pub fn assemble_with_rhs(
    k: &Kernel,
    centers: &CenterSet,
    sys: &ControlAffineSystem,
    pol: &Policy,
    b: impl Fn(&[f64]) -> f64 + Sync,
    rule: &QuadratureRule,
) -> Result<GalerkinSystem> {
    if !k.family.is_differentiable() {
        return Err(Error::UnsupportedDerivative(k.family.name()));
    }
    let n = centers.len();
    let per_node: Vec<Result<(DVector<f64>, f64)>> = rule
        .nodes
        .par_iter()
        .map(|x| {
            let phi = phi_matrix(k, centers, x)?;
            let psi = closed_loop_field(sys, pol, x);
            let l = phi.tr_mul(&psi);
            let bx = b(x);
            if !bx.is_finite() || l.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Galerkin assembly"));
            }
            Ok((l, bx))
        })
        .collect();

    // Deterministic reduction in node order.
    let mut matrix = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    let mut rhs_energy = 0.0;
    for (node, w) in per_node.into_iter().zip(&rule.weights) {
        let (l, bx) = node?;
        matrix.ger(*w, &l, &l, 1.0);
        rhs.axpy(w * bx, &l, 1.0);
        rhs_energy += w * bx * bx;
    }
    let sym = (&matrix + matrix.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigenvalues();
    Ok(GalerkinSystem {
        pe_margin: eig.min(),
        max_eigenvalue: eig.max(),
        matrix: sym,
        rhs,
        rhs_energy,
        quadrature_nodes: rule.len(),
    })
}

/// Coefficients of the Galerkin solution, refusing systems whose PE margin
/// does not clear [`GalerkinSystem::pe_threshold`].
pub fn solve_coefficients(gsys: &GalerkinSystem) -> Result<DVector<f64>> {
    let threshold = gsys.pe_threshold();
    if !(gsys.pe_margin > threshold) {
        return Err(Error::PeViolation {
            margin: gsys.pe_margin,
            threshold,
        });
    }
    let m = &gsys.matrix;
    let solve = |r: &DVector<f64>| -> Option<DVector<f64>> {
        match m.clone().cholesky() {
            Some(ch) => Some(ch.solve(r)),
            None => m.clone().lu().solve(r),
        }
    };
    let mut alpha = solve(&gsys.rhs).ok_or(Error::PeViolation {
        margin: gsys.pe_margin,
        threshold,
    })?;
    // One step of iterative refinement.
    let resid = &gsys.rhs - m * &alpha;
    if let Some(delta) = solve(&resid) {
        alpha += delta;
    }
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Galerkin solve"));
    }
    Ok(alpha)
}

pub fn solve_value(gsys: &GalerkinSystem, k: &Kernel, centers: &CenterSet) -> Result<Approximant> {
    if gsys.len() != centers.len() {
        return Err(Error::InvalidArgument(format!(
            "system of size {} for {} centers",
            gsys.len(),
            centers.len()
        )));
    }
    Approximant::new(*k, centers.clone(), solve_coefficients(gsys)?)
}

pub fn residual_norm(gsys: &GalerkinSystem, alpha: &DVector<f64>) -> f64 {
    gsys.residual_norm(alpha)
}

/// One-line diagnostics of a solve.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SolveDiagnostics {
    pub n: usize,
    pub pe_margin: f64,
    pub condition: f64,
    pub residual: f64,
}

impl SolveDiagnostics {
    pub fn new(gsys: &GalerkinSystem, alpha: &DVector<f64>) -> Self {
        SolveDiagnostics {
            n: gsys.len(),
            pe_margin: gsys.pe_margin,
            condition: gsys.condition_estimate(),
            residual: gsys.residual_norm(alpha),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{benchmark_system, MatrixField, VectorField};
    use crate::geometry::{grid_centers, Domain};
    use crate::quadrature::{gauss_legendre_tensor, integrate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn fd_phi(k: &Kernel, c: &CenterSet, x: &[f64], h: f64) -> DMatrix<f64> {
        DMatrix::from_fn(x.len(), c.len(), |i, j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (k.eval(&xp, &c.points()[j]) - k.eval(&xm, &c.points()[j])) / (2.0 * h)
        })
    }

    #[test]
    fn phi_examples() {
        let k = Kernel::matern52(0.5);
        let x = vec![0.25, -0.4];
        let single = CenterSet::new(vec![x.clone()]).unwrap();
        assert_eq!(phi_matrix(&k, &single, &x).unwrap(), DMatrix::zeros(2, 1));

        let c = grid_centers(&Domain::square(1.0), 3).unwrap();
        let phi = phi_matrix(&k, &c, &x).unwrap();
        let fd = fd_phi(&k, &c, &x, 1e-5);
        for (a, b) in phi.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
        }

        let alpha = DVector::from_fn(9, |i, _| (i as f64 * 0.7).sin());
        let v = Approximant::new(k, c.clone(), alpha.clone()).unwrap();
        let via_phi = &phi * &alpha;
        let g = v.grad(&x).unwrap();
        assert!((via_phi[0] - g[0]).abs() < 1e-14 && (via_phi[1] - g[1]).abs() < 1e-14);
    }

    #[test]
    fn unsym_kernel_examples() {
        let b = benchmark_system();
        let k = Kernel::matern52(0.5);
        let pol = &b.optimal_policy;
        assert_eq!(
            unsym_kernel(&k, &b.system, pol, &[0.3, 0.2], &[0.0, 0.0]).unwrap(),
            0.0
        );
        assert_eq!(
            unsym_kernel(&k, &b.system, pol, &[0.3, 0.2], &[0.3, 0.2]).unwrap(),
            0.0
        );

        let (x, y): ([f64; 2], [f64; 2]) = ([0.41, -0.73], [-0.2, 0.15]);
        let g = k.grad_x(&x, &y).unwrap();
        let c = (2.0 * x[0]).cos() + 2.0;
        let u = -c * x[1];
        let psi = [
            -x[0] + x[1],
            -0.5 * x[0] - 0.5 * x[1] * (1.0 - c * c) + c * u,
        ];
        let by_hand = g[0] * psi[0] + g[1] * psi[1];
        assert!((unsym_kernel(&k, &b.system, pol, &y, &x).unwrap() - by_hand).abs() <= 1e-12);
    }

    #[test]
    fn zero_field_gives_zero_system() {
        let f: VectorField = Arc::new(|_: &[f64]| DVector::zeros(2));
        let g: MatrixField = Arc::new(|_: &[f64]| DMatrix::zeros(2, 1));
        let sys = ControlAffineSystem::new(2, 1, f, g).unwrap();
        let b = benchmark_system();
        let c = grid_centers(&Domain::square(1.0), 2).unwrap();
        let rule = gauss_legendre_tensor(&Domain::square(1.0), 6).unwrap();
        let gs = assemble(
            &Kernel::matern52(0.5),
            &c,
            &sys,
            &Policy::zero(1),
            &b.cost,
            &rule,
        )
        .unwrap();
        assert_eq!(gs.matrix, DMatrix::zeros(4, 4));
        assert_eq!(gs.pe_margin, 0.0);
        assert!(matches!(
            solve_value(&gs, &Kernel::matern52(0.5), &c),
            Err(Error::PeViolation { .. })
        ));
    }

    #[test]
    fn matern12_rejected() {
        let b = benchmark_system();
        let k = Kernel::new(crate::KernelFamily::Matern12, 0.5, 1.0).unwrap();
        let c = grid_centers(&Domain::square(1.0), 2).unwrap();
        let rule = gauss_legendre_tensor(&Domain::square(1.0), 4).unwrap();
        assert!(matches!(
            assemble(&k, &c, &b.system, &b.optimal_policy, &b.cost, &rule),
            Err(Error::UnsupportedDerivative(_))
        ));
    }

    #[test]
    fn nonfinite_rhs_rejected() {
        let b = benchmark_system();
        let c = grid_centers(&Domain::square(1.0), 2).unwrap();
        let rule = gauss_legendre_tensor(&Domain::square(1.0), 4).unwrap();
        let res = assemble_with_rhs(
            &Kernel::matern52(0.5),
            &c,
            &b.system,
            &b.optimal_policy,
            |_| f64::NAN,
            &rule,
        );
        assert_eq!(res.unwrap_err(), Error::NonFinite("Galerkin assembly"));
    }

    #[test]
    fn benchmark_system_properties() {
        let dom = Domain::square(1.0);
        let b = benchmark_system();
        let k = Kernel::matern52(0.5);
        let c = grid_centers(&dom, 5).unwrap();
        let r40 = gauss_legendre_tensor(&dom, 40).unwrap();
        let gs = assemble(&k, &c, &b.system, &b.optimal_policy, &b.cost, &r40).unwrap();
        assert!(gs.pe_margin > 0.0);
        assert_eq!(gs.matrix, gs.matrix.transpose());

        let r60 = gauss_legendre_tensor(&dom, 60).unwrap();
        let gs60 = assemble(&k, &c, &b.system, &b.optimal_policy, &b.cost, &r60).unwrap();
        let rel = (&gs.matrix - &gs60.matrix).norm() / gs60.matrix.norm();
        // Third derivatives of the kernel jump at r = 0, so tensor quadrature
        // converges algebraically here; 40 vs 60 points moves M by ~2e-7.
        assert!(rel <= 1e-6, "refinement change {rel:e}");

        // Bilinear form against an independent per-entry integration of l* l.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
        let bb = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
        let coarse = gauss_legendre_tensor(&dom, 20).unwrap();
        let gsc = assemble(&k, &c, &b.system, &b.optimal_policy, &b.cost, &coarse).unwrap();
        let pts = c.points();
        let mut direct = 0.0;
        for i in 0..25 {
            for j in 0..25 {
                let mij = integrate(
                    |x| {
                        unsym_kernel(&k, &b.system, &b.optimal_policy, &pts[i], x).unwrap()
                            * unsym_kernel(&k, &b.system, &b.optimal_policy, &pts[j], x).unwrap()
                    },
                    &coarse,
                )
                .unwrap();
                direct += bb[i] * mij * a[j];
            }
        }
        let form = bb.dot(&(&gsc.matrix * &a));
        assert!(
            (form - direct).abs() <= 1e-8 * direct.abs().max(1e-12),
            "{form} vs {direct}"
        );

        for i in [0usize, 7, 12, 24] {
            let direct = integrate(
                |x| {
                    unsym_kernel(&k, &b.system, &b.optimal_policy, &pts[i], x).unwrap()
                        * pde_rhs(&b.cost, &b.optimal_policy, x)
                },
                &coarse,
            )
            .unwrap();
            assert!((gsc.rhs[i] - direct).abs() <= 1e-8 * direct.abs().max(1e-12));
        }
    }

    #[test]
    fn zero_rhs_solves_to_zero() {
        let dom = Domain::square(1.0);
        let b = benchmark_system();
        let k = Kernel::matern52(0.5);
        let c = grid_centers(&dom, 3).unwrap();
        let rule = gauss_legendre_tensor(&dom, 20).unwrap();
        let gs = assemble_with_rhs(&k, &c, &b.system, &b.optimal_policy, |_| 0.0, &rule).unwrap();
        let v = solve_value(&gs, &k, &c).unwrap();
        assert!(v.coefficients().iter().all(|a| *a == 0.0));
        assert_eq!(gs.residual_norm(v.coefficients()), 0.0);
    }

    #[test]
    fn solution_is_least_squares_optimal() {
        let dom = Domain::square(1.0);
        let b = benchmark_system();
        let k = Kernel::matern52(0.5);
        let c = grid_centers(&dom, 5).unwrap();
        let rule = gauss_legendre_tensor(&dom, 30).unwrap();
        let gs = assemble(&k, &c, &b.system, &b.optimal_policy, &b.cost, &rule).unwrap();
        let alpha = solve_coefficients(&gs).unwrap();
        let at_sol = gs.residual_norm(&alpha);
        let zero = DVector::zeros(25);
        assert!((gs.residual_norm(&zero) - gs.rhs_energy.sqrt()).abs() < 1e-12);
        assert!(at_sol <= gs.residual_norm(&zero));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let pert = DVector::from_fn(25, |_, _| rng.random_range(-1e-2..1e-2));
            assert!(at_sol <= gs.residual_norm(&(&alpha + pert)) + 1e-12);
        }
        let orth = (&gs.matrix * &alpha - &gs.rhs).amax();
        assert!(
            orth <= 1e-8 * gs.rhs.amax(),
            "orthogonality defect {orth:e}"
        );
    }
}
