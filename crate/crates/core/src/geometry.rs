//! Box domains, center sets, fill distance and greedy center placement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernels::Kernel;
use crate::native_approx::power_map;
use crate::{distance_sq, Error, Result};

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(format!(
                "domain bounds must be nonempty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "domain needs finite lower < upper componentwise, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Domain { lower, upper })
    }

    /// `[-half_width, half_width]^2`.
    pub fn square(half_width: f64) -> Self {
        Domain::new(vec![-half_width; 2], vec![half_width; 2]).expect("positive half width")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// The box scaled by `factor` about its center.
    pub fn inflate(&self, factor: f64) -> Domain {
        let c = self.center();
        let lower = self
            .lower
            .iter()
            .zip(&c)
            .map(|(l, m)| m + factor * (l - m))
            .collect();
        let upper = self
            .upper
            .iter()
            .zip(&c)
            .map(|(u, m)| m + factor * (u - m))
            .collect();
        Domain::new(lower, upper).expect("inflating a valid box by a positive factor")
    }
}

/// Tensor grid with `n` points per axis including the box endpoints, or the
/// axis midpoint when `n == 1`. The first coordinate varies slowest.
pub fn tensor_grid(dom: &Domain, n: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = dom
        .lower
        .iter()
        .zip(&dom.upper)
        .map(|(&l, &u)| {
            if n == 1 {
                vec![0.5 * (l + u)]
            } else {
                (0..n)
                    .map(|i| l + (u - l) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let d = axes.len();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; d];
            for k in (0..d).rev() {
                p[k] = axes[k][idx % n];
                idx /= n;
            }
            p
        })
        .collect()
}

/// Ordered centers `Xi_N`; the order defines basis indexing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    points: Vec<Vec<f64>>,
}

impl CenterSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidArgument("center set must be nonempty".into()));
        };
        let d = first.len();
        if d == 0
            || points
                .iter()
                .any(|p| p.len() != d || p.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "centers must be finite points of one common nonzero dimension".into(),
            ));
        }
        Ok(CenterSet { points })
    }

    /// Like [`CenterSet::new`] but also checks every point lies in `dom`.
    pub fn within(dom: &Domain, points: Vec<Vec<f64>>) -> Result<Self> {
        let set = CenterSet::new(points)?;
        if let Some(p) = set.points.iter().find(|p| !dom.contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "center {p:?} lies outside the domain"
            )));
        }
        Ok(set)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec<f64>> {
        self.points.iter()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn with_point(&self, p: Vec<f64>) -> CenterSet {
        let mut points = self.points.clone();
        points.push(p);
        CenterSet { points }
    }

    /// Distance from `x` to the nearest center.
    pub fn nearest_distance(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|c| distance_sq(x, c))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

pub fn grid_centers(dom: &Domain, n_per_dim: usize) -> Result<CenterSet> {
    if n_per_dim == 0 {
        return Err(Error::InvalidArgument(
            "n_per_dim must be at least 1".into(),
        ));
    }
    CenterSet::new(tensor_grid(dom, n_per_dim))
}

/// Fill distance approximated on a `probe_n^d` probe grid. This is a lower
/// bound of the true supremum that is exact whenever the maximizer lies on
/// the probe grid.
pub fn fill_distance(centers: &CenterSet, dom: &Domain, probe_n: usize) -> Result<f64> {
    if probe_n < 2 {
        return Err(Error::InvalidArgument("probe_n must be at least 2".into()));
    }
    let probes = tensor_grid(dom, probe_n);
    Ok(probes
        .par_iter()
        .map(|x| centers.nearest_distance(x))
        .reduce(|| 0.0, f64::max))
}

/// Index and value of the maximum, ties going to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

/// Outcome of one greedy augmentation step.
#[derive(Clone, Debug)]
pub struct GreedyStep {
    pub centers: CenterSet,
    pub candidate: Vec<f64>,
    /// Row-major index of the candidate in the probe grid.
    pub probe_index: usize,
    /// Power function value at the candidate before augmentation.
    pub max_power: f64,
}

/// Adds the probe-grid point where the power function is largest.
pub fn greedy_augment(
    centers: &CenterSet,
    kernel: &Kernel,
    dom: &Domain,
    probe_n: usize,
) -> Result<GreedyStep> {
    if probe_n < 2 {
        return Err(Error::InvalidArgument("probe_n must be at least 2".into()));
    }
    let fact = kernel.factorize(centers)?;
    let probes = tensor_grid(dom, probe_n);
    let power = power_map(&fact, &probes);
    let (probe_index, max_power) = argmax(&power).expect("probe grid is nonempty");
    let candidate = probes[probe_index].clone();
    Ok(GreedyStep {
        centers: centers.with_point(candidate.clone()),
        candidate,
        probe_index,
        max_power,
    })
}
