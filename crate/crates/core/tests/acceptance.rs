//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Thresholds are fixed here, not taken from the config.

use std::time::Instant;

use kernel_pi::experiments::{
    controller_ratio_diagnostic, convergence_study, derivative_check, error_map, greedy_rounds,
    manufactured_recovery, optimal_pair_consistency, pi_decay_study, power_suite, ExperimentConfig,
    SlopeStatus,
};
use kernel_pi::KernelFamily;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn pass_if(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn slope_detail(fit: &SlopeStatus) -> (f64, f64, String) {
    match fit.fit() {
        Some(f) => (
            f.slope,
            f.r_squared,
            format!("slope {:.3}, R^2 {:.3}", f.slope, f.r_squared),
        ),
        None => (f64::NAN, f64::NAN, format!("slope {}", fit.label())),
    }
}

fn base() -> ExperimentConfig {
    ExperimentConfig {
        domain_lower: vec![-1.0, -1.0],
        domain_upper: vec![1.0, 1.0],
        kernel_family: KernelFamily::Matern52,
        lengthscale: 0.5,
        variance: 1.0,
        grid_sizes: vec![5, 7, 9, 11],
        quadrature_order: 40,
        probe_n: 101,
        initial_gain: 3.0,
        pi_tol: 1e-6,
        pi_max_iter: 20,
        seed: SEED,
        ..ExperimentConfig::default()
    }
}

fn value_decay() -> Outcome {
    let cfg = base();
    match convergence_study(&cfg, &cfg.kernel().unwrap()) {
        Ok(study) => {
            let (slope, r2, text) = slope_detail(&study.fit);
            let errs: Vec<String> = study
                .records
                .iter()
                .map(|r| format!("{:.2e}", r.sup_error))
                .collect();
            pass_if(
                slope >= 1.5 && r2 >= 0.95,
                format!(
                    "{text} (need >= 1.5, >= 0.95); sup errors [{}]",
                    errs.join(", ")
                ),
            )
        }
        Err(e) => pass_if(false, format!("error: {e}")),
    }
}

fn controller_decay() -> Outcome {
    match pi_decay_study(&base()) {
        Ok(study) => {
            let (slope, r2, text) = slope_detail(&study.fit);
            let converged = study.records.iter().all(|r| r.converged == Some(true));
            let pe = study.records.iter().all(|r| r.pe_margin > 0.0);
            let iters: Vec<String> = study
                .records
                .iter()
                .map(|r| {
                    format!(
                        "{}{}",
                        r.iterations.unwrap(),
                        if r.converged == Some(true) { "" } else { "*" }
                    )
                })
                .collect();
            pass_if(
                slope >= 1.5 && r2 >= 0.9 && converged && pe,
                format!(
                    "{text} (need >= 1.5, >= 0.9); all converged {converged}, all beta > 0 {pe}; iterations [{}] (* = budget hit)",
                    iters.join(", ")
                ),
            )
        }
        Err(e) => pass_if(false, format!("error: {e}")),
    }
}

fn manufactured() -> Outcome {
    let cfg = base();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for g in [3usize, 5, 7] {
        match manufactured_recovery(&cfg, g, &mut rng) {
            Ok(r) => {
                worst = worst.max(r.relative_error);
                parts.push(format!("N={} {:.1e}", r.n, r.relative_error));
            }
            Err(e) => return pass_if(false, format!("N={}: {e}", g * g)),
        }
    }
    pass_if(
        worst <= 1e-6,
        format!(
            "relative coefficient error {} (need <= 1e-6)",
            parts.join(", ")
        ),
    )
}

fn derivatives() -> Outcome {
    let cfg = base();
    let dom = cfg.domain().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ok = true;
    let mut parts = Vec::new();
    for fam in [KernelFamily::Gaussian, KernelFamily::Matern52] {
        let (gk, ga) = derivative_check(&cfg.kernel_of(fam).unwrap(), &dom, 200, &mut rng).unwrap();
        ok &= gk <= 1e-6 && ga <= 1e-6;
        parts.push(format!("{fam}: grad_x {gk:.1e}, grad_approx {ga:.1e}"));
    }
    pass_if(ok, format!("{} (need <= 1e-6)", parts.join("; ")))
}

fn power() -> Outcome {
    let cfg = base();
    let dom = cfg.domain().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let k = cfg.kernel().unwrap();
    let s = power_suite(&k, &dom, 3, 7, 50, cfg.probe_n, &mut rng).unwrap();
    let ok = s.max_at_centers <= 1e-7
        && s.min_value >= 0.0
        && s.excess_over_sigma <= 0.0
        && s.monotonicity_violation <= 1e-9
        && s.bound_violation <= 1e-8;
    pass_if(
        ok,
        format!(
            "at centers {:.1e} (<= 1e-7), min {:.1e} (>= 0), max - sigma {:.2e} (<= 0), monotonicity {:.1e} (<= 1e-9), bound slack {:.1e} (<= 1e-8)",
            s.max_at_centers, s.min_value, s.excess_over_sigma, s.monotonicity_violation, s.bound_violation
        ),
    )
}

fn optimal_pair() -> Outcome {
    let dom = base().domain().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (ham, upd) = optimal_pair_consistency(&dom, 1000, &mut rng).unwrap();
    pass_if(
        ham <= 1e-10 && upd <= 1e-12,
        format!("Hamiltonian residual {ham:.1e} (<= 1e-10), update vs u* {upd:.1e} (<= 1e-12)"),
    )
}

fn ratio() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    match controller_ratio_diagnostic(&base(), 121, &mut rng) {
        Ok(points) => {
            let mut r: Vec<f64> = points.iter().map(|p| p.ratio).collect();
            let shown: Vec<String> = r.iter().map(|v| format!("{v:.3}")).collect();
            r.sort_by(f64::total_cmp);
            let n = r.len();
            let median = if n % 2 == 1 {
                r[n / 2]
            } else {
                0.5 * (r[n / 2 - 1] + r[n / 2])
            };
            let max = r[n - 1];
            pass_if(
                max <= 2.0 * median,
                format!(
                    "ratios [{}], max {max:.3} <= 2 x median {median:.3}",
                    shown.join(", ")
                ),
            )
        }
        Err(e) => pass_if(false, format!("error: {e}")),
    }
}

fn error_deciles() -> Outcome {
    match error_map(&base(), 9) {
        Ok(m) => pass_if(
            m.contrast.near_mean < m.contrast.far_mean,
            format!(
                "nearest-decile mean {:.4e} vs farthest-decile mean {:.4e}, need strictly less (PI {} iterations, converged {})",
                m.contrast.near_mean, m.contrast.far_mean, m.iterations, m.converged
            ),
        ),
        Err(e) => pass_if(false, format!("error: {e}")),
    }
}

fn greedy() -> Outcome {
    match greedy_rounds(&base(), 9, 2) {
        Ok((_, rounds)) => {
            let ok = rounds.len() == 2
                && rounds.iter().all(|r| {
                    r.max_power_after < r.max_power_before && r.candidate_index == r.argmax_index
                });
            let parts: Vec<String> = rounds
                .iter()
                .map(|r| {
                    format!(
                        "round {}: max {:.6} drops by {:.1e}, candidate {:?} at argmax {}",
                        r.round,
                        r.max_power_before,
                        r.max_power_before - r.max_power_after,
                        r.candidate,
                        r.candidate_index == r.argmax_index
                    )
                })
                .collect();
            pass_if(ok, parts.join("; "))
        }
        Err(e) => pass_if(false, format!("error: {e}")),
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Matern-5/2 value-error decay rate", value_decay),
        (
            "controller decay rate under policy iteration",
            controller_decay,
        ),
        ("manufactured-solution recovery", manufactured),
        ("kernel and approximant derivatives", derivatives),
        ("power-function suite", power),
        ("optimal-pair consistency", optimal_pair),
        ("controller/value error ratio boundedness", ratio),
        ("error map decile contrast", error_deciles),
        ("greedy power reduction", greedy),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = run();
        let status = if out.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!out.passed);
        println!(
            "criterion {} {status} {name}: {} [{:.1}s]",
            i + 1,
            out.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
