//! Policy iteration: Galerkin policy evaluation alternated with the update
//! `mu_{i+1} = -1/2 R^-1 g^T grad v_i`.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::dynamics::{verify_stabilizing, ControlAffineSystem, CostSpec, Policy, Provenance};
use crate::galerkin::{assemble, solve_coefficients};
use crate::geometry::{tensor_grid, CenterSet, Domain};
use crate::kernels::Kernel;
use crate::native_approx::Approximant;
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// `|mu(0)|_inf` above which a policy is flagged as not admissible.
pub const ADMISSIBILITY_TOL: f64 = 1e-6;

/// Policy `x -> -1/2 R^-1 g(x)^T grad(x)` for an arbitrary gradient field.
pub fn policy_from_gradient(
    grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    sys: &ControlAffineSystem,
    input_weight: &nalgebra::DMatrix<f64>,
    provenance: Provenance,
) -> Result<Policy> {
    let r_inv = input_weight
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("R is not invertible".into()))?;
    let sys = sys.clone();
    Ok(Policy::new(
        Arc::new(move |x: &[f64]| {
            let g = grad(x);
            let gt_grad = sys.input_map(x).tr_mul(&DVector::from_vec(g));
            &r_inv * gt_grad * -0.5
        }),
        provenance,
    ))
}

/// The improved policy for a kernel approximant `v`.
pub fn policy_update(
    v: &Approximant,
    sys: &ControlAffineSystem,
    input_weight: &nalgebra::DMatrix<f64>,
) -> Result<Policy> {
    if !v.kernel().family.is_differentiable() {
        return Err(Error::UnsupportedDerivative(v.kernel().family.name()));
    }
    let v = v.clone();
    policy_from_gradient(
        move |x| v.grad(x).expect("differentiable kernel checked above"),
        sys,
        input_weight,
        Provenance::KernelApproximant,
    )
}

/// `max_x |mu(x) - mu_ref(x)|_inf` over the given probe points.
pub fn controller_error_on(mu: &Policy, mu_ref: &Policy, probes: &[Vec<f64>]) -> f64 {
    probes
        .par_iter()
        .map(|x| (mu.eval(x) - mu_ref.eval(x)).amax())
        .reduce(|| 0.0, f64::max)
}

/// Controller sup-error over a `probe_n^d` grid on `dom`.
pub fn controller_error(mu: &Policy, mu_ref: &Policy, dom: &Domain, probe_n: usize) -> Result<f64> {
    if probe_n < 2 {
        return Err(Error::InvalidArgument("probe_n must be at least 2".into()));
    }
    Ok(controller_error_on(mu, mu_ref, &tensor_grid(dom, probe_n)))
}

/// Inputs of a policy-iteration run.
#[derive(Clone, Debug)]
pub struct PiSettings<'a> {
    pub kernel: Kernel,
    pub centers: &'a CenterSet,
    pub system: &'a ControlAffineSystem,
    pub cost: &'a CostSpec,
    pub initial_policy: Policy,
    pub rule: &'a QuadratureRule,
    pub domain: &'a Domain,
    /// Stop once the controller sup-change drops to this level.
    pub tol: f64,
    pub max_iter: usize,
    /// Probe resolution for the stopping metric.
    pub probe_n: usize,
    /// Optional policy to report the controller error against each iterate.
    pub reference: Option<Policy>,
    /// Skip the simulation check of the initial policy.
    pub skip_stability_check: bool,
}

#[derive(Clone, Debug)]
pub struct PiIterate {
    /// `v_i`, the evaluation of the policy in force during this step.
    pub value: Approximant,
    /// `mu_{i+1}`.
    pub policy: Policy,
    pub policy_delta: f64,
    pub pe_margin: f64,
    pub residual: f64,
    /// `|mu_{i+1}(0)|_inf`.
    pub origin_control: f64,
    pub reference_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PiResult {
    pub iterates: Vec<PiIterate>,
    pub converged: bool,
}

impl PiResult {
    pub fn iterations_used(&self) -> usize {
        self.iterates.len()
    }

    pub fn final_policy(&self) -> Option<&Policy> {
        self.iterates.last().map(|it| &it.policy)
    }

    pub fn final_value(&self) -> Option<&Approximant> {
        self.iterates.last().map(|it| &it.value)
    }
}

pub fn policy_iterate(s: &PiSettings<'_>) -> Result<PiResult> {
    if !(s.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            s.tol
        )));
    }
    if s.probe_n < 2 {
        return Err(Error::InvalidArgument("probe_n must be at least 2".into()));
    }
    if s.max_iter == 0 {
        return Ok(PiResult {
            iterates: Vec::new(),
            converged: false,
        });
    }
    if !s.skip_stability_check {
        let report = verify_stabilizing(s.system, &s.initial_policy, s.domain);
        if !report.stabilizing {
            return Err(Error::NotStabilizing(report.to_string()));
        }
    }

    let probes = tensor_grid(s.domain, s.probe_n);
    let origin = vec![0.0; s.system.state_dim()];
    let mut current = s.initial_policy.clone();
    let mut iterates = Vec::new();
    let mut converged = false;
    for i in 0..s.max_iter {
        let wrap = |e: Error| Error::IterationFailed {
            iteration: i,
            source: Box::new(e),
        };
        let gsys =
            assemble(&s.kernel, s.centers, s.system, &current, s.cost, s.rule).map_err(wrap)?;
        let alpha = solve_coefficients(&gsys).map_err(wrap)?;
        let residual = gsys.residual_norm(&alpha);
        let value = Approximant::new(s.kernel, s.centers.clone(), alpha)?;
        let next = policy_update(&value, s.system, s.cost.input_weight())?;
        let policy_delta = controller_error_on(&next, &current, &probes);
        let reference_error = s
            .reference
            .as_ref()
            .map(|r| controller_error_on(&next, r, &probes));
        iterates.push(PiIterate {
            value,
            origin_control: next.eval(&origin).amax(),
            policy: next.clone(),
            policy_delta,
            pe_margin: gsys.pe_margin,
            residual,
            reference_error,
        });
        current = next;
        if policy_delta <= s.tol {
            converged = true;
            break;
        }
    }
    Ok(PiResult {
        iterates,
        converged,
    })
}
