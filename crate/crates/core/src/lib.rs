//! Kernel-based Galerkin approximation of value functions and optimal
//! controllers for control-affine systems `xdot = f(x) + g(x) u`.
//!
//! The policy-evaluation equation `(f + g mu)^T grad v = -r(x, mu(x))` is
//! solved in the least-squares sense over the span of kernel sections
//! `K(., xi_j)` placed at a set of centers. Alternating that solve with the
//! greedy update `mu <- -1/2 R^-1 g^T grad v` gives policy iteration.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`kernels`] | Gaussian / Matérn kernels, Gram matrices, derivatives, jittered Cholesky |
//! | [`geometry`] | box domains, center sets, fill distance, greedy center placement |
//! | [`native_approx`] | projected kernel, power function, interpolation, approximants |
//! | [`dynamics`] | control-affine systems, costs, policies, RK4 simulation, benchmark |
//! | [`quadrature`] | tensor Gauss–Legendre rules |
//! | [`galerkin`] | assembly and solution of the least-squares Galerkin system |
//! | [`policy_iteration`] | policy update, PI loop, controller error |
//! | [`experiments`] | convergence studies, error and power maps, CSV output |

// `!(x > 0.0)` is used deliberately: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod galerkin;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod native_approx;
pub mod policy_iteration;
pub mod quadrature;

pub use error::{Error, Result};
pub use geometry::{CenterSet, Domain};
pub use kernels::{GramFactorization, Kernel, KernelFamily};
pub use native_approx::Approximant;

/// Euclidean distance between two points of equal dimension.
pub(crate) fn distance_sq(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
