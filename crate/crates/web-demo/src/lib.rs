//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations on the square `[-1, 1]^2`, all returning flat arrays in
//! probe order (first coordinate slowest):
//!
//! * [`power_map`]: power function of a center set;
//! * [`greedy_candidate`]: the probe-grid argmax of that power function;
//! * [`controller_error_map`]: `|mu_N - u*|` for the benchmark after one
//!   Galerkin solve with the exact policy on a center grid.
//!
//! Centers travel as flat `[x1, y1, x2, y2, ...]` arrays.

use kernel_pi::dynamics::benchmark_system;
use kernel_pi::experiments::{power_map_for, solve_exact_policy, ValueTarget};
use kernel_pi::geometry::{grid_centers, tensor_grid, CenterSet, Domain};
use kernel_pi::policy_iteration::policy_update;
use kernel_pi::quadrature::gauss_legendre_tensor;
use kernel_pi::{Error, Kernel, KernelFamily};
use wasm_bindgen::prelude::*;

/// Largest probe resolution accepted; keeps a single call interactive.
pub const MAX_PROBE_N: usize = 161;

fn domain() -> Domain {
    Domain::square(1.0)
}

fn kernel(family: &str, lengthscale: f64) -> Result<Kernel, Error> {
    Kernel::new(family.parse::<KernelFamily>()?, lengthscale, 1.0)
}

fn check_probe_n(probe_n: usize) -> Result<(), Error> {
    if (2..=MAX_PROBE_N).contains(&probe_n) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "probe_n must be in 2..={MAX_PROBE_N}"
        )))
    }
}

fn centers(flat: &[f64]) -> Result<CenterSet, Error> {
    if flat.is_empty() || !flat.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(
            "centers must be a nonempty flat list of (x, y) pairs".into(),
        ));
    }
    CenterSet::within(&domain(), flat.chunks(2).map(<[f64]>::to_vec).collect())
}

pub fn power_map_values(
    family: &str,
    lengthscale: f64,
    flat: &[f64],
    probe_n: usize,
) -> Result<Vec<f64>, Error> {
    check_probe_n(probe_n)?;
    Ok(power_map_for(
        &kernel(family, lengthscale)?,
        &centers(flat)?,
        &domain(),
        probe_n,
    )?
    .values)
}

/// `[x, y, power]` of the greedy candidate.
pub fn greedy_candidate_point(
    family: &str,
    lengthscale: f64,
    flat: &[f64],
    probe_n: usize,
) -> Result<Vec<f64>, Error> {
    check_probe_n(probe_n)?;
    let map = power_map_for(
        &kernel(family, lengthscale)?,
        &centers(flat)?,
        &domain(),
        probe_n,
    )?;
    Ok(vec![map.candidate[0], map.candidate[1], map.max_power])
}

pub fn controller_error_values(
    family: &str,
    lengthscale: f64,
    grid_n: usize,
    quadrature_order: usize,
    probe_n: usize,
) -> Result<Vec<f64>, Error> {
    check_probe_n(probe_n)?;
    if !(2..=15).contains(&grid_n) || !(4..=60).contains(&quadrature_order) {
        return Err(Error::InvalidArgument(
            "grid_n must be in 2..=15 and quadrature_order in 4..=60".into(),
        ));
    }
    let dom = domain();
    let k = kernel(family, lengthscale)?;
    let c = grid_centers(&dom, grid_n)?;
    let rule = gauss_legendre_tensor(&dom, quadrature_order)?;
    let (_, v) = solve_exact_policy(&k, &c, &rule, &ValueTarget::Benchmark)?;
    let b = benchmark_system();
    let mu = policy_update(&v, &b.system, b.cost.input_weight())?;
    Ok(tensor_grid(&dom, probe_n)
        .iter()
        .map(|x| (mu.eval(x) - b.optimal_policy.eval(x)).amax())
        .collect())
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Power function of `centers` over a `probe_n x probe_n` grid.
#[wasm_bindgen]
pub fn power_map(
    family: &str,
    lengthscale: f64,
    centers: &[f64],
    probe_n: usize,
) -> Result<Vec<f64>, JsError> {
    power_map_values(family, lengthscale, centers, probe_n).map_err(js)
}

/// Next greedy center as `[x, y, power]`.
#[wasm_bindgen]
pub fn greedy_candidate(
    family: &str,
    lengthscale: f64,
    centers: &[f64],
    probe_n: usize,
) -> Result<Vec<f64>, JsError> {
    greedy_candidate_point(family, lengthscale, centers, probe_n).map_err(js)
}

/// Controller error of a single exact-policy solve on a `grid_n x grid_n` grid.
#[wasm_bindgen]
pub fn controller_error_map(
    family: &str,
    lengthscale: f64,
    grid_n: usize,
    quadrature_order: usize,
    probe_n: usize,
) -> Result<Vec<f64>, JsError> {
    controller_error_values(family, lengthscale, grid_n, quadrature_order, probe_n).map_err(js)
}
