//! Tensor-product Gauss–Legendre quadrature on a box.

use crate::geometry::Domain;
use crate::{Error, Result};

pub const DEFAULT_ORDER: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending. Newton iteration on `P_n` from Chebyshev-like guesses.
pub fn gauss_legendre_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(z) and P_{n-1}(z).
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = (p1, p0);
            dp = nf * (z * pn - pn1) / (z * z - 1.0);
            let step = pn / dp;
            z -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Tensor product of `order`-point rules mapped onto `dom`; node ordering
/// matches [`crate::geometry::tensor_grid`] (first axis slowest).
pub fn gauss_legendre_tensor(dom: &Domain, order: usize) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::InvalidArgument(
            "quadrature order must be at least 1".into(),
        ));
    }
    let (x, w) = gauss_legendre_1d(order);
    let d = dom.dim();
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
        .map(|k| {
            let (l, u) = (dom.lower()[k], dom.upper()[k]);
            let half = 0.5 * (u - l);
            let mid = 0.5 * (u + l);
            (
                x.iter().map(|t| mid + half * t).collect(),
                w.iter().map(|wi| half * wi).collect(),
            )
        })
        .collect();
    let total = order.pow(d as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut p = vec![0.0; d];
        let mut wt = 1.0;
        for k in (0..d).rev() {
            let i = idx % order;
            idx /= order;
            p[k] = axes[k].0[i];
            wt *= axes[k].1[i];
        }
        nodes.push(p);
        weights.push(wt);
    }
    Ok(QuadratureRule { nodes, weights })
}

/// `sum_i w_i fn(x_i)`, summed in node order.
pub fn integrate(f: impl Fn(&[f64]) -> f64, rule: &QuadratureRule) -> Result<f64> {
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite("integrand evaluation"));
        }
        acc += w * v;
    }
    Ok(acc)
}
