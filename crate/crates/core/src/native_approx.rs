//! Approximation in the span `H_N` of kernel sections at a center set: the
//! projected kernel `K_N`, the power function, interpolation and the
//! [`Approximant`] type shared by every solver in the crate.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::geometry::CenterSet;
use crate::kernels::{GramFactorization, Kernel};
use crate::{Error, Result};

impl GramFactorization {
    /// Reproducing kernel of `H_N`: `K_Xi(x)^T K^-1 K_Xi(y)`.
    pub fn kernel_n(&self, x: &[f64], y: &[f64]) -> f64 {
        let wx = self.whiten(&self.kernel().sections(self.centers(), x));
        if x == y {
            return wx.norm_squared();
        }
        let wy = self.whiten(&self.kernel().sections(self.centers(), y));
        wx.dot(&wy)
    }

    /// Power function `sqrt(K(x,x) - K_N(x,x))`, with the radicand clamped at
    /// zero against roundoff.
    pub fn power(&self, x: &[f64]) -> f64 {
        // Exact zero on an unjittered center; the formula below cancels to
        // ~1e-8 there, which swamps comparisons between nested center sets.
        if self.jitter() == 0.0 && self.centers().iter().any(|c| c == x) {
            return 0.0;
        }
        let wx = self.whiten(&self.kernel().sections(self.centers(), x));
        (self.kernel().diagonal() - wx.norm_squared())
            .max(0.0)
            .sqrt()
    }
}

pub fn kernel_n(k: &Kernel, centers: &CenterSet, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(k.factorize(centers)?.kernel_n(x, y))
}

pub fn power_function(k: &Kernel, centers: &CenterSet, x: &[f64]) -> Result<f64> {
    Ok(k.factorize(centers)?.power(x))
}

/// Power function over many probe points, in probe order.
pub fn power_map(fact: &GramFactorization, probes: &[Vec<f64>]) -> Vec<f64> {
    probes.par_iter().map(|x| fact.power(x)).collect()
}

/// `v_N = sum_j alpha_j K(., xi_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Approximant {
    kernel: Kernel,
    centers: CenterSet,
    coefficients: DVector<f64>,
    /// Jitter of the Gram factorization used to produce the coefficients, if any.
    jitter: f64,
}

impl Approximant {
    pub fn new(kernel: Kernel, centers: CenterSet, coefficients: DVector<f64>) -> Result<Self> {
        if coefficients.len() != centers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for {} centers",
                coefficients.len(),
                centers.len()
            )));
        }
        Ok(Approximant {
            kernel,
            centers,
            coefficients,
            jitter: 0.0,
        })
    }

    pub fn zero(kernel: Kernel, centers: CenterSet) -> Self {
        let n = centers.len();
        Approximant::new(kernel, centers, DVector::zeros(n)).expect("matching length")
    }

    pub(crate) fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn centers(&self) -> &CenterSet {
        &self.centers
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(self.coefficients.iter())
            .map(|(c, a)| a * self.kernel.eval(x, c))
            .sum()
    }

    /// Exact gradient `sum_j alpha_j grad_x K(x, xi_j)`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = x.len();
        let mut out = vec![0.0; d];
        let mut g = vec![0.0; d];
        for (c, a) in self.centers.iter().zip(self.coefficients.iter()) {
            self.kernel.grad_x_into(x, c, &mut g)?;
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += a * gi;
            }
        }
        Ok(out)
    }

    /// `alpha^T K alpha`.
    pub fn h_norm_sq(&self) -> f64 {
        let k = self.kernel.gram_sym(self.centers.points());
        self.coefficients.dot(&(&k * &self.coefficients)).max(0.0)
    }

    pub fn h_norm(&self) -> f64 {
        self.h_norm_sq().sqrt()
    }

    /// `|self - other|_H`, computed on the concatenated expansion. Both
    /// approximants must use the same kernel.
    pub fn h_distance(&self, other: &Approximant) -> Result<f64> {
        if self.kernel != other.kernel {
            return Err(Error::InvalidArgument(
                "H-distance needs approximants over the same kernel".into(),
            ));
        }
        let mut points = self.centers.points().to_vec();
        points.extend_from_slice(other.centers.points());
        let coeffs = DVector::from_iterator(
            points.len(),
            self.coefficients
                .iter()
                .copied()
                .chain(other.coefficients.iter().map(|c| -c)),
        );
        Ok(Approximant::new(self.kernel, CenterSet::new(points)?, coeffs)?.h_norm())
    }
}

/// Interpolates `values` given at the centers: solves `K alpha = values`.
pub fn interpolate(k: &Kernel, centers: &CenterSet, values: &[f64]) -> Result<Approximant> {
    let fact = k.factorize(centers)?;
    interpolate_with(&fact, values)
}

pub fn interpolate_with(fact: &GramFactorization, values: &[f64]) -> Result<Approximant> {
    if values.len() != fact.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values for {} centers",
            values.len(),
            fact.len()
        )));
    }
    let alpha = fact.solve(&DVector::from_column_slice(values));
    Ok(Approximant::new(*fact.kernel(), fact.centers().clone(), alpha)?.with_jitter(fact.jitter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{grid_centers, tensor_grid, Domain};
    use crate::kernels::KernelFamily;
    use approx::assert_relative_eq;

    #[test]
    fn projected_kernel_at_centers() {
        let k = Kernel::matern52(0.5);
        let c = grid_centers(&Domain::square(1.0), 3).unwrap();
        let f = k.factorize(&c).unwrap();
        for p in c.iter() {
            assert_relative_eq!(f.kernel_n(p, p), 1.0, max_relative = 1e-10);
            assert!(f.power(p) <= 1e-7);
        }
    }

    #[test]
    fn projected_kernel_single_center() {
        let k = Kernel::new(KernelFamily::Gaussian, 0.8, 2.0).unwrap();
        let xi = vec![0.2, -0.1];
        let c = CenterSet::new(vec![xi.clone()]).unwrap();
        let (x, y) = ([0.5, 0.3], [-0.4, 0.9]);
        assert_relative_eq!(
            kernel_n(&k, &c, &x, &y).unwrap(),
            k.eval(&x, &xi) * k.eval(&xi, &y) / 2.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn projected_kernel_matches_direct_solve() {
        let k = Kernel::gaussian(1.0);
        let c = grid_centers(&Domain::square(1.0), 3).unwrap();
        let f = k.factorize(&c).unwrap();
        let gram = k.gram(c.points(), c.points());
        let lu = gram.lu();
        for (x, y) in [([0.13, -0.42], [0.77, 0.05]), ([-0.9, 0.9], [0.31, -0.66])] {
            let ky = k.sections(&c, &y);
            let sol = lu.solve(&ky).unwrap();
            let direct = k.sections(&c, &x).dot(&sol);
            assert!((f.kernel_n(&x, &y) - direct).abs() <= 1e-10);
        }
    }

    #[test]
    fn power_one_center_closed_form() {
        let c = CenterSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let p = power_function(&Kernel::gaussian(1.0), &c, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(p, (1.0 - (-1.0f64).exp()).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(p, 0.795_060_1, max_relative = 1e-6);
    }

    #[test]
    fn power_is_monotone_under_nesting() {
        let dom = Domain::square(1.0);
        let k = Kernel::matern52(0.5);
        let coarse = grid_centers(&dom, 3).unwrap();
        let fine = coarse
            .with_point(vec![0.5, 0.5])
            .with_point(vec![-0.25, 0.75]);
        let fc = k.factorize(&coarse).unwrap();
        let ff = k.factorize(&fine).unwrap();
        for x in tensor_grid(&dom, 31) {
            let (pc, pf) = (fc.power(&x), ff.power(&x));
            assert!(pf <= pc + 1e-9);
            assert!((0.0..=1.0).contains(&pc));
        }
    }

    #[test]
    fn power_vanishes_on_and_near_centers() {
        let k = Kernel::matern52(0.5);
        let c = grid_centers(&Domain::square(1.0), 7).unwrap();
        let f = k.factorize(&c).unwrap();
        for p in c.iter() {
            assert_eq!(f.power(p), 0.0);
            // Off the center by a hair the general formula runs, and its
            // cancellation floor must still sit well inside 1e-7.
            let q = [p[0] + 1e-12, p[1]];
            assert!(f.power(&q) <= 1e-7, "{}", f.power(&q));
        }
    }

    #[test]
    fn interpolating_a_gram_column_reproduces_the_section() {
        let k = Kernel::matern52(0.5);
        let c = grid_centers(&Domain::square(1.0), 3).unwrap();
        let col: Vec<f64> = c.iter().map(|p| k.eval(p, &c.points()[0])).collect();
        let v = interpolate(&k, &c, &col).unwrap();
        assert!((v.coefficients()[0] - 1.0).abs() < 1e-10);
        assert!(v.coefficients().iter().skip(1).all(|a| a.abs() < 1e-10));
        for x in tensor_grid(&Domain::square(1.0), 7) {
            assert!((v.eval(&x) - k.eval(&x, &c.points()[0])).abs() < 1e-10);
        }

        let zero = interpolate(&k, &c, &[0.0; 9]).unwrap();
        assert!(zero.coefficients().iter().all(|a| *a == 0.0));
        assert_eq!(zero.eval(&[0.3, 0.3]), 0.0);
        assert!(interpolate(&k, &c, &[0.0; 4]).is_err());
    }

    #[test]
    fn interpolation_improves_with_more_centers() {
        let dom = Domain::square(1.0);
        let k = Kernel::matern52(0.5);
        let f = |x: &[f64]| 0.5 * x[0] * x[0] + x[1] * x[1];
        let probes = tensor_grid(&dom, 101);
        let sup_err = |n: usize| {
            let c = grid_centers(&dom, n).unwrap();
            let vals: Vec<f64> = c.iter().map(|p| f(p)).collect();
            let v = interpolate(&k, &c, &vals).unwrap();
            for (p, val) in c.iter().zip(&vals) {
                assert!((v.eval(p) - val).abs() <= 1e-8);
            }
            probes
                .iter()
                .map(|x| (v.eval(x) - f(x)).abs())
                .fold(0.0, f64::max)
        };
        assert!(sup_err(9) < sup_err(5));
    }

    #[test]
    fn eval_and_norm_small_cases() {
        let k = Kernel::new(KernelFamily::Matern32, 0.6, 2.25).unwrap();
        let c = CenterSet::new(vec![vec![0.0, 0.0], vec![0.4, -0.3]]).unwrap();
        let zero = Approximant::zero(k, c.clone());
        assert_eq!(zero.eval(&[0.1, 0.1]), 0.0);
        assert_eq!(zero.grad(&[0.1, 0.1]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(zero.h_norm(), 0.0);

        let e1 = Approximant::new(k, c.clone(), DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(e1.eval(&[0.0, 0.0]), 2.25);
        assert_relative_eq!(e1.h_norm(), 1.5, max_relative = 1e-15);

        let (a, b) = (0.7, -1.3);
        let v = Approximant::new(k, c.clone(), DVector::from_vec(vec![a, b])).unwrap();
        let k12 = k.eval(&c.points()[0], &c.points()[1]);
        let expanded = a * a * 2.25 + 2.0 * a * b * k12 + b * b * 2.25;
        assert!((v.h_norm_sq() - expanded).abs() <= 1e-12);
        assert!(Approximant::new(k, c, DVector::zeros(3)).is_err());
    }

    #[test]
    fn single_center_gradient_vanishes_at_center() {
        let c = CenterSet::new(vec![vec![0.3, 0.3]]).unwrap();
        let v = Approximant::new(Kernel::matern52(0.5), c, DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(v.grad(&[0.3, 0.3]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn h_distance_to_self_is_zero() {
        let c = grid_centers(&Domain::square(1.0), 3).unwrap();
        let v = Approximant::new(
            Kernel::gaussian(0.5),
            c,
            DVector::from_fn(9, |i, _| i as f64),
        )
        .unwrap();
        assert!(v.h_distance(&v).unwrap() < 1e-6);
        let other = Approximant::zero(Kernel::matern52(0.5), v.centers().clone());
        assert!(v.h_distance(&other).is_err());
    }
}
