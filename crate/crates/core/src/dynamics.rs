//! Control-affine systems `xdot = f(x) + g(x) u`, running costs, feedback
//! policies, and fixed-step RK4 simulation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::geometry::Domain;
use crate::{Error, Result};

pub type VectorField = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ControlAffineSystem {
    state_dim: usize,
    input_dim: usize,
    drift: VectorField,
    input_map: MatrixField,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .finish_non_exhaustive()
    }
}

impl ControlAffineSystem {
    /// Builds a system and checks `f(0) = 0` and the shape of `g(0)`.
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        drift: VectorField,
        input_map: MatrixField,
    ) -> Result<Self> {
        if state_dim == 0 || input_dim == 0 {
            return Err(Error::InvalidArgument(
                "state and input dimensions must be positive".into(),
            ));
        }
        let origin = vec![0.0; state_dim];
        let f0 = drift(&origin);
        if f0.len() != state_dim || f0.iter().any(|v| v.abs() > 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "drift must vanish at the origin, got {f0:?}"
            )));
        }
        let g0 = input_map(&origin);
        if g0.shape() != (state_dim, input_dim) {
            return Err(Error::InvalidArgument(format!(
                "input map has shape {:?}, expected ({state_dim}, {input_dim})",
                g0.shape()
            )));
        }
        Ok(ControlAffineSystem {
            state_dim,
            input_dim,
            drift,
            input_map,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn drift(&self, x: &[f64]) -> DVector<f64> {
        (self.drift)(x)
    }

    pub fn input_map(&self, x: &[f64]) -> DMatrix<f64> {
        (self.input_map)(x)
    }

    pub fn field(&self, x: &[f64], u: &DVector<f64>) -> DVector<f64> {
        self.drift(x) + self.input_map(x) * u
    }
}

/// Running cost `r(x, u) = Q(x) + u^T R u`.
#[derive(Clone)]
pub struct CostSpec {
    state_cost: ScalarField,
    input_weight: DMatrix<f64>,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSpec")
            .field("input_weight", &self.input_weight)
            .finish_non_exhaustive()
    }
}

impl CostSpec {
    /// Checks `Q(0) = 0` and that `R` is symmetric positive definite.
    pub fn new(
        state_cost: ScalarField,
        input_weight: DMatrix<f64>,
        state_dim: usize,
    ) -> Result<Self> {
        if !input_weight.is_square() || input_weight.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "R must be a nonempty square matrix".into(),
            ));
        }
        if (&input_weight - input_weight.transpose()).amax() > 1e-12 * input_weight.amax() {
            return Err(Error::InvalidArgument("R must be symmetric".into()));
        }
        if input_weight.clone().symmetric_eigenvalues().min() <= 0.0 {
            return Err(Error::InvalidArgument("R must be positive definite".into()));
        }
        let q0 = state_cost(&vec![0.0; state_dim]);
        if q0 != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Q must vanish at the origin, got {q0}"
            )));
        }
        Ok(CostSpec {
            state_cost,
            input_weight,
        })
    }

    pub fn state_cost(&self, x: &[f64]) -> f64 {
        (self.state_cost)(x)
    }

    pub fn input_weight(&self) -> &DMatrix<f64> {
        &self.input_weight
    }

    pub fn running_cost(&self, x: &[f64], u: &DVector<f64>) -> f64 {
        self.state_cost(x) + u.dot(&(&self.input_weight * u))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ExplicitFormula,
    KernelApproximant,
}

/// State feedback `u = mu(x)`.
#[derive(Clone)]
pub struct Policy {
    law: VectorField,
    provenance: Provenance,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Policy")
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

impl Policy {
    pub fn new(law: VectorField, provenance: Provenance) -> Self {
        Policy { law, provenance }
    }

    pub fn from_fn(law: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Policy::new(Arc::new(law), Provenance::ExplicitFormula)
    }

    pub fn zero(input_dim: usize) -> Self {
        Policy::from_fn(move |_| DVector::zeros(input_dim))
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        (self.law)(x)
    }

    /// `mu(0) = 0` within `tol` (infinity norm).
    pub fn is_admissible_at_origin(&self, dim: usize, tol: f64) -> bool {
        self.eval(&vec![0.0; dim]).amax() <= tol
    }
}

/// `psi(x) = f(x) + g(x) mu(x)`.
pub fn closed_loop_field(sys: &ControlAffineSystem, pol: &Policy, x: &[f64]) -> DVector<f64> {
    sys.field(x, &pol.eval(x))
}

pub fn running_cost(cost: &CostSpec, x: &[f64], u: &DVector<f64>) -> f64 {
    cost.running_cost(x, u)
}

/// Right-hand side `b(x) = -r(x, mu(x))` of the policy-evaluation equation.
pub fn pde_rhs(cost: &CostSpec, pol: &Policy, x: &[f64]) -> f64 {
    -cost.running_cost(x, &pol.eval(x))
}

/// The two-dimensional benchmark with known optimal pair:
/// `f = [-x1 + x2; -0.5 x1 - 0.5 x2 (1 - (cos 2x1 + 2)^2)]`, `g = [0; cos 2x1 + 2]`,
/// `Q = |x|^2`, `R = 1`, `V* = 0.5 x1^2 + x2^2`, `u* = -(cos 2x1 + 2) x2`.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub system: ControlAffineSystem,
    pub cost: CostSpec,
    pub optimal_policy: Policy,
}

impl Benchmark {
    pub fn optimal_value(x: &[f64]) -> f64 {
        0.5 * x[0] * x[0] + x[1] * x[1]
    }

    pub fn optimal_value_gradient(x: &[f64]) -> Vec<f64> {
        vec![x[0], 2.0 * x[1]]
    }

    pub fn optimal_control(x: &[f64]) -> f64 {
        -((2.0 * x[0]).cos() + 2.0) * x[1]
    }
}

pub fn benchmark_system() -> Benchmark {
    let drift: VectorField = Arc::new(|x: &[f64]| {
        let c = (2.0 * x[0]).cos() + 2.0;
        DVector::from_vec(vec![-x[0] + x[1], -0.5 * x[0] - 0.5 * x[1] * (1.0 - c * c)])
    });
    let input_map: MatrixField =
        Arc::new(|x: &[f64]| DMatrix::from_vec(2, 1, vec![0.0, (2.0 * x[0]).cos() + 2.0]));
    let system =
        ControlAffineSystem::new(2, 1, drift, input_map).expect("benchmark drift vanishes at 0");
    let cost = CostSpec::new(
        Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
        DMatrix::from_element(1, 1, 1.0),
        2,
    )
    .expect("benchmark cost is valid");
    let optimal_policy =
        Policy::from_fn(|x| DVector::from_element(1, Benchmark::optimal_control(x)));
    Benchmark {
        system,
        cost,
        optimal_policy,
    }
}

/// A sampled trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Set when some state left the supplied domain.
    pub left_domain: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

fn axpy(x: &[f64], h: f64, k: &DVector<f64>) -> Vec<f64> {
    x.iter().zip(k.iter()).map(|(a, b)| a + h * b).collect()
}

/// Fixed-step classical RK4 over `[0, t_final]` (the last step is shortened
/// to land on `t_final`).
pub fn simulate(
    sys: &ControlAffineSystem,
    pol: &Policy,
    x0: &[f64],
    t_final: f64,
    dt: f64,
    domain: Option<&Domain>,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_final >= dt) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and t_final >= dt, got dt={dt}, t_final={t_final}"
        )));
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::InvalidArgument(
            "initial state has the wrong dimension".into(),
        ));
    }
    let rhs = |x: &[f64]| closed_loop_field(sys, pol, x);
    let steps = (t_final / dt - 1e-9).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut left_domain = domain.is_some_and(|d| !d.contains(&x));
    times.push(t);
    states.push(x.clone());
    for i in 0..steps {
        let h = if i + 1 == steps { t_final - t } else { dt };
        let k1 = rhs(&x);
        let k2 = rhs(&axpy(&x, 0.5 * h, &k1));
        let k3 = rhs(&axpy(&x, 0.5 * h, &k2));
        let k4 = rhs(&axpy(&x, h, &k3));
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory simulation"));
        }
        t = if i + 1 == steps { t_final } else { t + h };
        if let Some(d) = domain {
            left_domain |= !d.contains(&x);
        }
        times.push(t);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        left_domain,
    })
}

/// Per-initial-condition outcome of [`verify_stabilizing`].
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRun {
    pub initial: Vec<f64>,
    pub final_norm: f64,
    pub stayed_inside: bool,
    pub contracted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub stabilizing: bool,
    pub runs: Vec<StabilityRun>,
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in self
            .runs
            .iter()
            .filter(|r| !(r.stayed_inside && r.contracted))
        {
            write!(
                f,
                "x0={:?}: final |x|={:.3e}, inside={}, contracted={}; ",
                r.initial, r.final_norm, r.stayed_inside, r.contracted
            )?;
        }
        Ok(())
    }
}

pub const STABILITY_T_FINAL: f64 = 10.0;
pub const STABILITY_DT: f64 = 1e-3;
pub const STABILITY_INFLATION: f64 = 1.5;
pub const STABILITY_CONTRACTION: f64 = 0.1;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Simulates from the corners and face midpoints of the box (the `3^d - 1`
/// points of `{lower, mid, upper}^d` other than the midpoint). The policy
/// passes when every run stays inside the box inflated 1.5x and ends with
/// `|x(T)| <= 0.1 |x(0)|`. A run that blows up counts as a failure.
pub fn verify_stabilizing(
    sys: &ControlAffineSystem,
    pol: &Policy,
    dom: &Domain,
) -> StabilityReport {
    let d = dom.dim();
    let inflated = dom.inflate(STABILITY_INFLATION);
    let mid = dom.center();
    let mut runs = Vec::new();
    for idx in 0..3usize.pow(d as u32) {
        let mut rest = idx;
        let x0: Vec<f64> = (0..d)
            .map(|k| {
                let level = rest % 3;
                rest /= 3;
                match level {
                    0 => dom.lower()[k],
                    1 => mid[k],
                    _ => dom.upper()[k],
                }
            })
            .collect();
        if x0 == mid {
            continue;
        }
        let start_norm = norm(&x0);
        let run = match simulate(
            sys,
            pol,
            &x0,
            STABILITY_T_FINAL,
            STABILITY_DT,
            Some(&inflated),
        ) {
            Ok(traj) => {
                let final_norm = norm(traj.final_state());
                StabilityRun {
                    initial: x0,
                    final_norm,
                    stayed_inside: !traj.left_domain,
                    contracted: final_norm <= STABILITY_CONTRACTION * start_norm,
                }
            }
            Err(_) => StabilityRun {
                initial: x0,
                final_norm: f64::INFINITY,
                stayed_inside: false,
                contracted: false,
            },
        };
        runs.push(run);
    }
    StabilityReport {
        stabilizing: runs.iter().all(|r| r.stayed_inside && r.contracted),
        runs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn benchmark_values() {
        let b = benchmark_system();
        assert_eq!(Benchmark::optimal_value(&[1.0, 1.0]), 1.5);
        assert_eq!(b.optimal_policy.eval(&[0.0, 1.0])[0], -3.0);
        let g = b.system.input_map(&[std::f64::consts::FRAC_PI_2, 7.0]);
        assert_eq!(g[(0, 0)], 0.0);
        assert_relative_eq!(g[(1, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_loop_field_examples() {
        let b = benchmark_system();
        let zero = Policy::zero(1);
        assert_eq!(
            closed_loop_field(&b.system, &zero, &[1.0, 0.0]).as_slice(),
            &[-1.0, -0.5]
        );
        assert_eq!(
            closed_loop_field(&b.system, &b.optimal_policy, &[0.0, 0.0]).as_slice(),
            &[0.0, 0.0]
        );

        let x: [f64; 2] = [0.37, -0.81];
        let c = (2.0 * x[0]).cos() + 2.0;
        let u = -c * x[1];
        let by_hand = [
            -x[0] + x[1],
            -0.5 * x[0] - 0.5 * x[1] * (1.0 - c * c) + c * u,
        ];
        let psi = closed_loop_field(&b.system, &b.optimal_policy, &x);
        assert!((psi[0] - by_hand[0]).abs() <= 1e-12 && (psi[1] - by_hand[1]).abs() <= 1e-12);
    }

    #[test]
    fn costs() {
        let b = benchmark_system();
        assert_eq!(running_cost(&b.cost, &[0.0, 0.0], &DVector::zeros(1)), 0.0);
        assert_eq!(running_cost(&b.cost, &[1.0, 1.0], &DVector::zeros(1)), 2.0);
        assert_eq!(
            running_cost(&b.cost, &[1.0, 0.0], &DVector::from_element(1, 2.0)),
            5.0
        );
        assert_eq!(pde_rhs(&b.cost, &b.optimal_policy, &[0.0, 0.0]), 0.0);
        assert_eq!(pde_rhs(&b.cost, &b.optimal_policy, &[0.0, 1.0]), -10.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let shifted: VectorField = Arc::new(|x: &[f64]| DVector::from_vec(vec![x[0] + 1.0]));
        let g: MatrixField = Arc::new(|_: &[f64]| DMatrix::from_element(1, 1, 1.0));
        assert!(ControlAffineSystem::new(1, 1, shifted, g.clone()).is_err());
        let f: VectorField = Arc::new(|x: &[f64]| DVector::from_vec(vec![-x[0]]));
        assert!(ControlAffineSystem::new(1, 2, f, g).is_err());

        let q: ScalarField = Arc::new(|x: &[f64]| x[0] * x[0]);
        assert!(CostSpec::new(q.clone(), DMatrix::from_element(1, 1, -1.0), 1).is_err());
        assert!(CostSpec::new(
            q.clone(),
            DMatrix::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]),
            1
        )
        .is_err());
        let q_off: ScalarField = Arc::new(|x: &[f64]| 1.0 + x[0] * x[0]);
        assert!(CostSpec::new(q_off, DMatrix::identity(1, 1), 1).is_err());
        assert!(CostSpec::new(q, DMatrix::identity(1, 1), 1).is_ok());
    }

    #[test]
    fn equilibrium_stays_put() {
        let b = benchmark_system();
        let traj = simulate(&b.system, &b.optimal_policy, &[0.0, 0.0], 1.0, 0.1, None).unwrap();
        assert_eq!(traj.times.len(), 11);
        assert!(traj.states.iter().all(|s| s == &vec![0.0, 0.0]));
    }

    #[test]
    fn optimal_policy_regulates() {
        let b = benchmark_system();
        let traj = simulate(&b.system, &b.optimal_policy, &[0.5, 0.5], 10.0, 1e-3, None).unwrap();
        assert_relative_eq!(*traj.times.last().unwrap(), 10.0);
        assert!(norm(traj.final_state()) <= 1e-2);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let b = benchmark_system();
        let run = |dt: f64| {
            simulate(&b.system, &b.optimal_policy, &[0.9, -0.6], 1.0, dt, None)
                .unwrap()
                .final_state()
                .to_vec()
        };
        let reference = run(1e-4);
        let err = |dt: f64| {
            let x = run(dt);
            norm(&[x[0] - reference[0], x[1] - reference[1]])
        };
        let ratio = err(0.04) / err(0.02);
        assert!((10.0..=22.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn simulate_rejects_bad_steps() {
        let b = benchmark_system();
        assert!(simulate(&b.system, &b.optimal_policy, &[0.1, 0.1], 1.0, 0.0, None).is_err());
        assert!(simulate(&b.system, &b.optimal_policy, &[0.1, 0.1], 0.01, 0.1, None).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let f: VectorField = Arc::new(|x: &[f64]| DVector::from_vec(vec![x[0] * x[0] * x[0]]));
        let g: MatrixField = Arc::new(|_: &[f64]| DMatrix::from_element(1, 1, 1.0));
        let sys = ControlAffineSystem::new(1, 1, f, g).unwrap();
        let res = simulate(&sys, &Policy::zero(1), &[2.0], 10.0, 0.01, None);
        assert_eq!(res, Err(Error::NonFinite("trajectory simulation")));
    }

    #[test]
    fn stability_verifier() {
        let b = benchmark_system();
        let dom = Domain::square(1.0);
        let report = verify_stabilizing(&b.system, &b.optimal_policy, &dom);
        assert!(report.stabilizing, "{report}");
        assert_eq!(report.runs.len(), 8);

        let bad = Policy::from_fn(|x| DVector::from_element(1, 3.0 * x[1]));
        assert!(!verify_stabilizing(&b.system, &bad, &dom).stabilizing);

        let lin = Policy::from_fn(|x| DVector::from_element(1, -3.0 * x[1]));
        assert!(verify_stabilizing(&b.system, &lin, &dom).stabilizing);
    }
}
