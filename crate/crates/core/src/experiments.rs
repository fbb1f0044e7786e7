//! Experiment harness on the two-dimensional benchmark: error decay against
//! fill distance, policy-iteration controller decay, error and power maps,
//! greedy center placement, and the numerical property suites.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{benchmark_system, Benchmark, Policy, Provenance};
use crate::galerkin::{apply_operator, assemble, assemble_with_rhs, solve_value, GalerkinSystem};
use crate::geometry::{
    argmax, fill_distance, greedy_augment, grid_centers, tensor_grid, CenterSet, Domain,
};
use crate::kernels::{Kernel, KernelFamily};
use crate::native_approx::{power_map, Approximant};
use crate::policy_iteration::{
    controller_error_on, policy_from_gradient, policy_iterate, policy_update, PiSettings,
};
use crate::quadrature::{gauss_legendre_tensor, QuadratureRule};
use crate::{Error, Result};

/// Everything an experiment run needs. Every field has a default, so a
/// config file only lists what it overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub kernel_family: KernelFamily,
    pub lengthscale: f64,
    pub variance: f64,
    /// Extra families run by the convergence study next to `kernel_family`.
    pub compare_families: Vec<KernelFamily>,
    /// Center grids, as points per axis.
    pub grid_sizes: Vec<usize>,
    pub quadrature_order: usize,
    /// Probe grid for sup-errors, maps and the PI stopping metric.
    pub probe_n: usize,
    /// Probe grid for fill distances.
    pub fill_probe_n: usize,
    /// Initial policy `mu_0(x) = -gain * x2`.
    pub initial_gain: f64,
    pub pi_tol: f64,
    pub pi_max_iter: usize,
    pub skip_stability_check: bool,
    /// Center grid for the error map, power map and greedy runs.
    pub map_grid: usize,
    pub greedy_rounds: usize,
    pub seed: u64,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain_lower: vec![-1.0, -1.0],
            domain_upper: vec![1.0, 1.0],
            kernel_family: KernelFamily::Matern52,
            lengthscale: 0.5,
            variance: 1.0,
            compare_families: vec![KernelFamily::Gaussian],
            grid_sizes: vec![5, 7, 9, 11],
            quadrature_order: crate::quadrature::DEFAULT_ORDER,
            probe_n: 101,
            fill_probe_n: 241,
            initial_gain: 3.0,
            pi_tol: 1e-6,
            pi_max_iter: 20,
            skip_stability_check: false,
            map_grid: 9,
            greedy_rounds: 2,
            seed: 0,
            out_dir: "out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn domain(&self) -> Result<Domain> {
        Domain::new(self.domain_lower.clone(), self.domain_upper.clone())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::new(self.kernel_family, self.lengthscale, self.variance)
    }

    pub fn kernel_of(&self, family: KernelFamily) -> Result<Kernel> {
        Kernel::new(family, self.lengthscale, self.variance)
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        gauss_legendre_tensor(&self.domain()?, self.quadrature_order)
    }

    /// Checks sizes and that the domain is the benchmark's state space.
    pub fn validate(&self) -> Result<()> {
        let dom = self.domain()?;
        if dom.dim() != 2 {
            return Err(Error::InvalidArgument(
                "the benchmark system is two-dimensional".into(),
            ));
        }
        if !dom.contains(&[0.0, 0.0]) {
            return Err(Error::InvalidArgument(
                "the domain must contain the origin".into(),
            ));
        }
        self.kernel()?;
        if self.grid_sizes.is_empty() || self.grid_sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "grid_sizes must be nonempty and positive".into(),
            ));
        }
        if self.quadrature_order == 0 || self.map_grid == 0 {
            return Err(Error::InvalidArgument(
                "quadrature_order and map_grid must be positive".into(),
            ));
        }
        if self.probe_n < 2 || self.fill_probe_n < 2 {
            return Err(Error::InvalidArgument(
                "probe resolutions must be at least 2".into(),
            ));
        }
        if !(self.pi_tol > 0.0) {
            return Err(Error::InvalidArgument("pi_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn initial_policy(&self) -> Policy {
        let gain = self.initial_gain;
        Policy::from_fn(move |x| DVector::from_element(1, -gain * x[1]))
    }
}

fn at_grid(grid_per_dim: usize) -> impl Fn(Error) -> Error {
    move |e| Error::LadderPoint {
        grid_per_dim,
        source: Box::new(e),
    }
}

/// Least-squares line through `(log h, log e)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SlopeStatus {
    Fitted(SlopeFit),
    /// Fewer than two usable points.
    Unavailable,
    /// Errors at the round-off floor; a slope would be meaningless.
    Degenerate,
}

impl SlopeStatus {
    pub fn fit(&self) -> Option<&SlopeFit> {
        match self {
            SlopeStatus::Fitted(f) => Some(f),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SlopeStatus::Fitted(_) => "fitted",
            SlopeStatus::Unavailable => "unavailable",
            SlopeStatus::Degenerate => "degenerate",
        }
    }
}

/// Errors at or below this level count as exact recovery.
pub const ERROR_NOISE_FLOOR: f64 = 1e-9;

pub fn fit_loglog(h: &[f64], err: &[f64]) -> SlopeStatus {
    assert_eq!(h.len(), err.len());
    if h.len() < 2 {
        return SlopeStatus::Unavailable;
    }
    if err.iter().all(|e| *e <= ERROR_NOISE_FLOOR) {
        return SlopeStatus::Degenerate;
    }
    if err.iter().any(|e| !(*e > 0.0)) || h.iter().any(|v| !(*v > 0.0)) {
        return SlopeStatus::Degenerate;
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return SlopeStatus::Unavailable;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    SlopeStatus::Fitted(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: h.len(),
    })
}

/// One point of an error-decay ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRecord {
    pub family: KernelFamily,
    pub grid_per_dim: usize,
    pub n: usize,
    pub fill_distance: f64,
    pub sup_error: f64,
    /// `|v - v_N|_H`, only when the target lies in a finite kernel span.
    pub h_error: Option<f64>,
    pub pe_margin: f64,
    pub condition: f64,
    pub residual: f64,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayStudy {
    pub records: Vec<DecayRecord>,
    pub fit: SlopeStatus,
}

impl DecayStudy {
    fn from_records(records: Vec<DecayRecord>) -> Self {
        let h: Vec<f64> = records.iter().map(|r| r.fill_distance).collect();
        let e: Vec<f64> = records.iter().map(|r| r.sup_error).collect();
        DecayStudy {
            fit: fit_loglog(&h, &e),
            records,
        }
    }
}

/// What the value approximation is compared against.
#[derive(Clone, Debug)]
pub enum ValueTarget {
    /// `V*` of the benchmark, with right-hand side `-r(x, u*(x))`.
    Benchmark,
    /// A kernel expansion `v`, with right-hand side `(A v)(x)`.
    Manufactured(Approximant),
}

impl ValueTarget {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            ValueTarget::Benchmark => Benchmark::optimal_value(x),
            ValueTarget::Manufactured(v) => v.eval(x),
        }
    }
}

/// Sup over the probes of `|(v_N - v_N(0)) - (v - v(0))|`.
///
/// The operator annihilates constants, so the Galerkin solution carries an
/// arbitrary offset; pinning both functions to zero at the origin (the
/// boundary condition of the policy-evaluation equation) removes it.
pub fn value_sup_error(v: &Approximant, target: &ValueTarget, probes: &[Vec<f64>]) -> f64 {
    let origin = [0.0, 0.0];
    let (v0, t0) = (v.eval(&origin), target.value(&origin));
    probes
        .par_iter()
        .map(|x| ((v.eval(x) - v0) - (target.value(x) - t0)).abs())
        .reduce(|| 0.0, f64::max)
}

/// Galerkin solve with the exact optimal policy in the operator.
pub fn solve_exact_policy(
    kernel: &Kernel,
    centers: &CenterSet,
    rule: &QuadratureRule,
    target: &ValueTarget,
) -> Result<(GalerkinSystem, Approximant)> {
    let b = benchmark_system();
    let gsys = match target {
        ValueTarget::Benchmark => {
            assemble(kernel, centers, &b.system, &b.optimal_policy, &b.cost, rule)?
        }
        ValueTarget::Manufactured(v) => assemble_with_rhs(
            kernel,
            centers,
            &b.system,
            &b.optimal_policy,
            |x| apply_operator(v, &b.system, &b.optimal_policy, x).expect("C2 kernel"),
            rule,
        )?,
    };
    let v = solve_value(&gsys, kernel, centers)?;
    Ok((gsys, v))
}

/// Value-error decay against fill distance with the exact policy.
pub fn convergence_study(cfg: &ExperimentConfig, kernel: &Kernel) -> Result<DecayStudy> {
    convergence_study_for(cfg, kernel, &ValueTarget::Benchmark)
}

pub fn convergence_study_for(
    cfg: &ExperimentConfig,
    kernel: &Kernel,
    target: &ValueTarget,
) -> Result<DecayStudy> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    let rule = cfg.rule()?;
    let probes = tensor_grid(&dom, cfg.probe_n);
    let mut records = Vec::with_capacity(cfg.grid_sizes.len());
    for &g in &cfg.grid_sizes {
        let wrap = at_grid(g);
        let centers = grid_centers(&dom, g)?;
        let (gsys, v) = solve_exact_policy(kernel, &centers, &rule, target).map_err(&wrap)?;
        let h_error = match target {
            ValueTarget::Manufactured(t) => Some(v.h_distance(t)?),
            ValueTarget::Benchmark => None,
        };
        records.push(DecayRecord {
            family: kernel.family,
            grid_per_dim: g,
            n: centers.len(),
            fill_distance: fill_distance(&centers, &dom, cfg.fill_probe_n)?,
            sup_error: value_sup_error(&v, target, &probes),
            h_error,
            pe_margin: gsys.pe_margin,
            condition: gsys.condition_estimate(),
            residual: gsys.residual_norm(v.coefficients()),
            iterations: None,
            converged: None,
        });
    }
    Ok(DecayStudy::from_records(records))
}

/// Policy iteration on one center grid of the benchmark.
pub fn run_pi(
    cfg: &ExperimentConfig,
    centers: &CenterSet,
) -> Result<crate::policy_iteration::PiResult> {
    let dom = cfg.domain()?;
    let rule = cfg.rule()?;
    let b = benchmark_system();
    policy_iterate(&PiSettings {
        kernel: cfg.kernel()?,
        centers,
        system: &b.system,
        cost: &b.cost,
        initial_policy: cfg.initial_policy(),
        rule: &rule,
        domain: &dom,
        tol: cfg.pi_tol,
        max_iter: cfg.pi_max_iter,
        probe_n: cfg.probe_n,
        reference: Some(b.optimal_policy.clone()),
        skip_stability_check: cfg.skip_stability_check,
    })
}

/// Controller-error decay of policy iteration against fill distance.
pub fn pi_decay_study(cfg: &ExperimentConfig) -> Result<DecayStudy> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    let kernel = cfg.kernel()?;
    let mut records = Vec::with_capacity(cfg.grid_sizes.len());
    for &g in &cfg.grid_sizes {
        let wrap = at_grid(g);
        let centers = grid_centers(&dom, g)?;
        let res = run_pi(cfg, &centers).map_err(&wrap)?;
        let last = res.iterates.last().ok_or_else(|| {
            wrap(Error::InvalidArgument(
                "policy iteration ran no steps".into(),
            ))
        })?;
        records.push(DecayRecord {
            family: kernel.family,
            grid_per_dim: g,
            n: centers.len(),
            fill_distance: fill_distance(&centers, &dom, cfg.fill_probe_n)?,
            sup_error: last.reference_error.expect("reference policy configured"),
            h_error: None,
            pe_margin: res
                .iterates
                .iter()
                .map(|it| it.pe_margin)
                .fold(f64::INFINITY, f64::min),
            condition: f64::NAN,
            residual: last.residual,
            iterations: Some(res.iterations_used()),
            converged: Some(res.converged),
        });
    }
    Ok(DecayStudy::from_records(records))
}

/// Mean of the nearest and farthest tenth of the probe points by distance
/// to the nearest center.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecileContrast {
    pub near_mean: f64,
    pub far_mean: f64,
}

pub fn decile_contrast(errors: &[f64], nearest: &[f64]) -> DecileContrast {
    let mut idx: Vec<usize> = (0..errors.len()).collect();
    idx.sort_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(a.cmp(&b)));
    let k = (errors.len() / 10).max(1);
    let mean = |ids: &[usize]| ids.iter().map(|&i| errors[i]).sum::<f64>() / ids.len() as f64;
    DecileContrast {
        near_mean: mean(&idx[..k]),
        far_mean: mean(&idx[idx.len() - k..]),
    }
}

#[derive(Clone, Debug)]
pub struct ErrorMap {
    pub centers: CenterSet,
    pub probes: Vec<Vec<f64>>,
    /// `|mu_N(x) - u*(x)|` per probe.
    pub errors: Vec<f64>,
    pub nearest_center: Vec<f64>,
    pub contrast: DecileContrast,
    pub iterations: usize,
    pub converged: bool,
}

/// Controller error of policy iteration over the probe grid.
pub fn error_map(cfg: &ExperimentConfig, grid_per_dim: usize) -> Result<ErrorMap> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    let centers = grid_centers(&dom, grid_per_dim)?;
    let res = run_pi(cfg, &centers).map_err(at_grid(grid_per_dim))?;
    let policy = res
        .final_policy()
        .ok_or_else(|| Error::InvalidArgument("policy iteration ran no steps".into()))?;
    error_map_for(
        &dom,
        &centers,
        policy,
        cfg.probe_n,
        res.iterations_used(),
        res.converged,
    )
}

pub fn error_map_for(
    dom: &Domain,
    centers: &CenterSet,
    policy: &Policy,
    probe_n: usize,
    iterations: usize,
    converged: bool,
) -> Result<ErrorMap> {
    let b = benchmark_system();
    let probes = tensor_grid(dom, probe_n);
    let errors: Vec<f64> = probes
        .par_iter()
        .map(|x| (policy.eval(x) - b.optimal_policy.eval(x)).amax())
        .collect();
    let nearest_center: Vec<f64> = probes.iter().map(|x| centers.nearest_distance(x)).collect();
    let contrast = decile_contrast(&errors, &nearest_center);
    Ok(ErrorMap {
        centers: centers.clone(),
        probes,
        errors,
        nearest_center,
        contrast,
        iterations,
        converged,
    })
}

#[derive(Clone, Debug)]
pub struct PowerMap {
    pub centers: CenterSet,
    pub probes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub candidate: Vec<f64>,
    pub candidate_index: usize,
    pub max_power: f64,
    pub jitter: f64,
}

pub fn power_map_for(
    kernel: &Kernel,
    centers: &CenterSet,
    dom: &Domain,
    probe_n: usize,
) -> Result<PowerMap> {
    let fact = kernel.factorize(centers)?;
    let probes = tensor_grid(dom, probe_n);
    let values = power_map(&fact, &probes);
    let (candidate_index, max_power) = argmax(&values).expect("nonempty probe grid");
    Ok(PowerMap {
        centers: centers.clone(),
        candidate: probes[candidate_index].clone(),
        probes,
        values,
        candidate_index,
        max_power,
        jitter: fact.jitter(),
    })
}

/// Power function of a center grid and the greedy candidate.
pub fn power_map_study(cfg: &ExperimentConfig, grid_per_dim: usize) -> Result<PowerMap> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    power_map_for(
        &cfg.kernel()?,
        &grid_centers(&dom, grid_per_dim)?,
        &dom,
        cfg.probe_n,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreedyRound {
    pub round: usize,
    pub centers_before: usize,
    pub max_power_before: f64,
    /// Probe-grid argmax of the power function before the round.
    pub argmax_index: usize,
    pub candidate: Vec<f64>,
    pub candidate_index: usize,
    pub max_power_after: f64,
}

/// Repeated greedy augmentation starting from a center grid.
pub fn greedy_rounds(
    cfg: &ExperimentConfig,
    grid_per_dim: usize,
    rounds: usize,
) -> Result<(CenterSet, Vec<GreedyRound>)> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    let kernel = cfg.kernel()?;
    let mut centers = grid_centers(&dom, grid_per_dim)?;
    let mut out = Vec::with_capacity(rounds);
    let mut before = power_map_for(&kernel, &centers, &dom, cfg.probe_n)?;
    for round in 1..=rounds {
        let step = greedy_augment(&centers, &kernel, &dom, cfg.probe_n)?;
        let after = power_map_for(&kernel, &step.centers, &dom, cfg.probe_n)?;
        out.push(GreedyRound {
            round,
            centers_before: centers.len(),
            max_power_before: before.max_power,
            argmax_index: before.candidate_index,
            candidate: step.candidate.clone(),
            candidate_index: step.probe_index,
            max_power_after: after.max_power,
        });
        centers = step.centers;
        before = after;
    }
    Ok((centers, out))
}

/// Random coefficient vector with unit Euclidean norm.
pub fn unit_coefficients(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = v.norm();
    v / norm
}

pub fn random_points(rng: &mut ChaCha8Rng, dom: &Domain, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            dom.lower()
                .iter()
                .zip(dom.upper())
                .map(|(l, u)| rng.random_range(*l..=*u))
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub n: usize,
    pub relative_error: f64,
    pub residual: f64,
    pub pe_margin: f64,
}

/// Manufactured-solution check: `v = sum a_j K(., xi_j)` on a center grid,
/// right-hand side `A v` computed analytically, then recover `a`.
pub fn manufactured_recovery(
    cfg: &ExperimentConfig,
    grid_per_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RecoveryReport> {
    let dom = cfg.domain()?;
    let kernel = cfg.kernel()?;
    let centers = grid_centers(&dom, grid_per_dim)?;
    let truth = unit_coefficients(rng, centers.len());
    let target = Approximant::new(kernel, centers.clone(), truth.clone())?;
    let (gsys, v) = solve_exact_policy(
        &kernel,
        &centers,
        &cfg.rule()?,
        &ValueTarget::Manufactured(target),
    )?;
    Ok(RecoveryReport {
        n: centers.len(),
        relative_error: (v.coefficients() - &truth).norm() / truth.norm(),
        residual: gsys.residual_norm(v.coefficients()),
        pe_margin: gsys.pe_margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioPoint {
    pub grid_per_dim: usize,
    pub fill_distance: f64,
    pub controller_error: f64,
    pub h_error: f64,
    pub ratio: f64,
}

/// Controller error over value H-error for Galerkin approximations of a
/// manufactured value function `v` in the span of `target_centers` kernel
/// sections placed at seeded random points.
pub fn controller_ratio_diagnostic(
    cfg: &ExperimentConfig,
    target_centers: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RatioPoint>> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    let kernel = cfg.kernel()?;
    let rule = cfg.rule()?;
    let b = benchmark_system();
    let probes = tensor_grid(&dom, cfg.probe_n);
    let truth_centers = CenterSet::within(&dom, random_points(rng, &dom, target_centers))?;
    let truth = Approximant::new(
        kernel,
        truth_centers,
        unit_coefficients(rng, target_centers),
    )?;
    let mu = policy_update(&truth, &b.system, b.cost.input_weight())?;
    let target = ValueTarget::Manufactured(truth.clone());
    cfg.grid_sizes
        .iter()
        .map(|&g| {
            let centers = grid_centers(&dom, g)?;
            let (_, v) =
                solve_exact_policy(&kernel, &centers, &rule, &target).map_err(at_grid(g))?;
            let mu_n = policy_update(&v, &b.system, b.cost.input_weight())?;
            let controller_error = controller_error_on(&mu_n, &mu, &probes);
            let h_error = v.h_distance(&truth)?;
            Ok(RatioPoint {
                grid_per_dim: g,
                fill_distance: fill_distance(&centers, &dom, cfg.fill_probe_n)?,
                controller_error,
                h_error,
                ratio: controller_error / h_error,
            })
        })
        .collect()
}

/// A named numerical check with its observed value and pass threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            passed: observed <= threshold,
            observed,
            threshold,
        }
    }
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            (f(&xp) - f(&xm)) / (2.0 * step)
        })
        .collect()
}

/// `|g - fd|_inf / max(|fd|_inf, floor)`.
fn relative_gap(g: &[f64], fd: &[f64], floor: f64) -> f64 {
    let gap = g
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = fd.iter().map(|b| b.abs()).fold(0.0, f64::max).max(floor);
    gap / scale
}

pub const FD_STEP: f64 = 1e-5;

/// Worst relative gap between analytic and central-difference gradients
/// of kernel sections and of random approximants.
pub fn derivative_check(
    kernel: &Kernel,
    dom: &Domain,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let floor = 1e-8 * kernel.variance;
    let mut worst_kernel: f64 = 0.0;
    let mut worst_approx: f64 = 0.0;
    for _ in 0..samples {
        let mut pts = random_points(rng, dom, 2);
        let (x, y) = (pts.remove(0), pts.remove(0));
        let g = kernel.grad_x(&x, &y)?;
        let fd = central_difference(|p| kernel.eval(p, &y), &x, FD_STEP);
        worst_kernel = worst_kernel.max(relative_gap(&g, &fd, floor));

        let n = rng.random_range(1..=12);
        let centers = CenterSet::new(random_points(rng, dom, n))?;
        let v = Approximant::new(*kernel, centers, unit_coefficients(rng, n))?;
        let x = random_points(rng, dom, 1).remove(0);
        let g = v.grad(&x)?;
        let fd = central_difference(|p| v.eval(p), &x, FD_STEP);
        worst_approx = worst_approx.max(relative_gap(&g, &fd, floor));
    }
    Ok((worst_kernel, worst_approx))
}

/// Observed quantities of the power-function suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerSuite {
    pub max_at_centers: f64,
    pub min_value: f64,
    /// `max P - sigma` (nonpositive when the upper bound holds).
    pub excess_over_sigma: f64,
    /// Largest `P_fine - P_coarse` over the probes.
    pub monotonicity_violation: f64,
    /// Largest `|f - Pi_N f| - P_N |f|_H` over probes and random `f`.
    pub bound_violation: f64,
}

/// Power-function properties with a coarse grid nested inside a fine one.
pub fn power_suite(
    kernel: &Kernel,
    dom: &Domain,
    coarse_grid: usize,
    fine_grid: usize,
    functions: usize,
    probe_n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PowerSuite> {
    let coarse = grid_centers(dom, coarse_grid)?;
    let fine = grid_centers(dom, fine_grid)?;
    let fc = kernel.factorize(&coarse)?;
    let ff = kernel.factorize(&fine)?;
    let probes = tensor_grid(dom, probe_n);
    let pc = power_map(&fc, &probes);
    let pf = power_map(&ff, &probes);
    let max_at_centers = coarse
        .iter()
        .map(|c| fc.power(c))
        .chain(fine.iter().map(|c| ff.power(c)))
        .fold(0.0, f64::max);
    let min_value = pc.iter().chain(&pf).copied().fold(f64::INFINITY, f64::min);
    let max_value = pc.iter().chain(&pf).copied().fold(0.0, f64::max);
    let monotonicity_violation = pc
        .iter()
        .zip(&pf)
        .map(|(c, f)| f - c)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut bound_violation = f64::NEG_INFINITY;
    for _ in 0..functions {
        let f = Approximant::new(*kernel, fine.clone(), unit_coefficients(rng, fine.len()))?;
        let norm = f.h_norm();
        let samples: Vec<f64> = coarse.iter().map(|c| f.eval(c)).collect();
        let proj = crate::native_approx::interpolate_with(&fc, &samples)?;
        let worst = probes
            .par_iter()
            .zip(pc.par_iter())
            .map(|(x, p)| (f.eval(x) - proj.eval(x)).abs() - p * norm)
            .reduce(|| f64::NEG_INFINITY, f64::max);
        bound_violation = bound_violation.max(worst);
    }
    Ok(PowerSuite {
        max_at_centers,
        min_value,
        excess_over_sigma: max_value - kernel.variance.sqrt(),
        monotonicity_violation,
        bound_violation,
    })
}

/// Worst Hamiltonian residual of `(V*, u*)` and worst gap between the
/// update applied to `grad V*` and `u*`, over random points.
pub fn optimal_pair_consistency(
    dom: &Domain,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let b = benchmark_system();
    let from_value = policy_from_gradient(
        Benchmark::optimal_value_gradient,
        &b.system,
        b.cost.input_weight(),
        Provenance::ExplicitFormula,
    )?;
    let mut hamiltonian: f64 = 0.0;
    let mut update: f64 = 0.0;
    for x in random_points(rng, dom, samples) {
        let u = b.optimal_policy.eval(&x);
        let psi = b.system.field(&x, &u);
        let g = Benchmark::optimal_value_gradient(&x);
        let h = psi[0] * g[0] + psi[1] * g[1] + b.cost.running_cost(&x, &u);
        hamiltonian = hamiltonian.max(h.abs());
        update = update.max((from_value.eval(&x) - u).amax());
    }
    Ok((hamiltonian, update))
}

/// The property suite behind the `kernel-check` command.
pub fn property_suite(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let dom = cfg.domain()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();
    for family in [
        KernelFamily::Gaussian,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ] {
        let k = cfg.kernel_of(family)?;
        let (gk, ga) = derivative_check(&k, &dom, 200, &mut rng)?;
        checks.push(Check::at_most(
            format!("{family}: grad_x vs central difference"),
            gk,
            1e-6,
        ));
        checks.push(Check::at_most(
            format!("{family}: approximant gradient vs central difference"),
            ga,
            1e-6,
        ));
    }
    for family in KernelFamily::ALL {
        let k = cfg.kernel_of(family)?;
        let mut worst_psd: f64 = 0.0;
        let mut worst_sym: f64 = 0.0;
        for n in [5usize, 20, 50] {
            let pts = random_points(&mut rng, &dom, n);
            let g = k.gram(&pts, &pts);
            worst_sym = worst_sym.max((&g - g.transpose()).amax());
            let min_eig = g.symmetric_eigenvalues().min();
            worst_psd = worst_psd.max(-min_eig / (1e-12 * n as f64));
        }
        checks.push(Check::at_most(
            format!("{family}: Gram symmetry defect"),
            worst_sym,
            0.0,
        ));
        checks.push(Check::at_most(
            format!("{family}: Gram negative eigenvalue / (1e-12 N)"),
            worst_psd,
            1.0,
        ));
    }
    let k = cfg.kernel()?;
    let ps = power_suite(&k, &dom, 3, 7, 50, 41, &mut rng)?;
    checks.push(Check::at_most(
        "power function at centers",
        ps.max_at_centers,
        1e-7,
    ));
    checks.push(Check::at_most(
        "power function below zero",
        -ps.min_value,
        0.0,
    ));
    checks.push(Check::at_most(
        "power function above sigma",
        ps.excess_over_sigma,
        0.0,
    ));
    checks.push(Check::at_most(
        "power function monotonicity violation",
        ps.monotonicity_violation,
        1e-9,
    ));
    checks.push(Check::at_most(
        "power function error bound violation",
        ps.bound_violation,
        1e-8,
    ));
    let (ham, upd) = optimal_pair_consistency(&dom, 1000, &mut rng)?;
    checks.push(Check::at_most(
        "Hamiltonian residual of (V*, u*)",
        ham,
        1e-10,
    ));
    checks.push(Check::at_most("policy update of V* vs u*", upd, 1e-12));
    Ok(checks)
}

/// Single exact-policy solve with a value map over the probe grid.
#[derive(Clone, Debug)]
pub struct Approximation {
    pub value: Approximant,
    pub system: GalerkinSystem,
    pub fill_distance: f64,
    pub sup_error: f64,
    pub controller_error: f64,
    pub probes: Vec<Vec<f64>>,
    /// `(v_N(x) - v_N(0), V*(x))` per probe.
    pub values: Vec<(f64, f64)>,
}

pub fn approximate(cfg: &ExperimentConfig, grid_per_dim: usize) -> Result<Approximation> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    let kernel = cfg.kernel()?;
    let centers = grid_centers(&dom, grid_per_dim)?;
    let (gsys, value) =
        solve_exact_policy(&kernel, &centers, &cfg.rule()?, &ValueTarget::Benchmark)
            .map_err(at_grid(grid_per_dim))?;
    let b = benchmark_system();
    let probes = tensor_grid(&dom, cfg.probe_n);
    let v0 = value.eval(&[0.0, 0.0]);
    let values: Vec<(f64, f64)> = probes
        .par_iter()
        .map(|x| (value.eval(x) - v0, Benchmark::optimal_value(x)))
        .collect();
    let sup_error = values
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let policy = policy_update(&value, &b.system, b.cost.input_weight())?;
    Ok(Approximation {
        fill_distance: fill_distance(&centers, &dom, cfg.fill_probe_n)?,
        controller_error: controller_error_on(&policy, &b.optimal_policy, &probes),
        value,
        system: gsys,
        sup_error,
        probes,
        values,
    })
}
