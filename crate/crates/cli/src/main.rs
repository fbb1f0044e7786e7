//! `kernel-pi`: experiment harness for kernel Galerkin policy evaluation and
//! policy iteration on the two-dimensional benchmark.
//!
//! Every subcommand writes CSV files plus `manifest.json` into the output
//! directory. Exit codes: 0 success, 2 configuration error, 3 numerical
//! failure, 4 property-suite failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kernel_pi::experiments::{self, DecayStudy, ExperimentConfig, SlopeStatus};
use kernel_pi::geometry::grid_centers;
use kernel_pi::{io, Error, KernelFamily};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(
    name = "kernel-pi",
    version,
    about = "Kernel Galerkin policy evaluation and policy iteration experiments"
)]
struct Cli {
    /// Key-value config file (TOML syntax, `key = value` per line).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derivative, PSD, power-function and optimal-pair property suite.
    KernelCheck,
    /// Single Galerkin solve with the exact optimal policy.
    Approximate {
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Policy iteration from the configured initial policy.
    Pi {
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Value-error decay against fill distance over the grid ladder.
    Convergence,
    /// Controller-error decay of policy iteration over the grid ladder.
    PiDecay,
    /// Controller error of policy iteration over the probe grid.
    ErrorMap {
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Power function over the probe grid and the greedy candidate.
    PowerMap {
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Iterated greedy center augmentation.
    Greedy {
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Approximate { .. } => "approximate",
            Command::Pi { .. } => "pi",
            Command::Convergence => "convergence",
            Command::PiDecay => "pi-decay",
            Command::ErrorMap { .. } => "error-map",
            Command::PowerMap { .. } => "power-map",
            Command::Greedy { .. } => "greedy",
        }
    }
}

enum Failure {
    Config(String),
    Numerical(String),
    Suite(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    /// Jitter added to each Gram factorization, in solve order.
    jitter: Vec<f64>,
    /// PE margin of each Galerkin solve, in solve order.
    pe_margins: Vec<f64>,
    files: Vec<String>,
    summary: Value,
}

struct Run {
    cfg: ExperimentConfig,
    out: PathBuf,
    jitter: Vec<f64>,
    pe_margins: Vec<f64>,
    files: Vec<String>,
    summary: serde_json::Map<String, Value>,
}

impl Run {
    /// Writes through a temporary file so readers never see a partial CSV.
    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> kernel_pi::Result<()>,
    ) -> Result<(), Failure> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        write_atomic(&self.out.join(name), &buf)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, key: &str, v: impl Serialize) {
        self.summary.insert(
            key.into(),
            serde_json::to_value(v).expect("serializable summary"),
        );
    }

    fn finish(&self, command: &str) -> Result<(), Failure> {
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.cfg.seed,
            config: &self.cfg,
            jitter: self.jitter.clone(),
            pe_margins: self.pe_margins.clone(),
            files: self.files.clone(),
            summary: Value::Object(self.summary.clone()),
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write_atomic(&self.out.join("manifest.json"), text.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    res.map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn grid_rows(probes: &[Vec<f64>], values: &[f64]) -> Vec<Vec<String>> {
    probes
        .iter()
        .zip(values)
        .map(|(p, v)| vec![f(p[0]), f(p[1]), f(*v)])
        .collect()
}

fn slope_json(s: &SlopeStatus) -> Value {
    match s {
        SlopeStatus::Fitted(fit) => {
            json!({"status": "fitted", "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared, "points": fit.points})
        }
        other => json!({"status": other.label()}),
    }
}

fn decay_rows(study: &DecayStudy) -> Vec<Vec<String>> {
    study
        .records
        .iter()
        .map(|r| {
            vec![
                r.family.to_string(),
                r.grid_per_dim.to_string(),
                r.n.to_string(),
                f(r.fill_distance),
                f(r.sup_error),
                r.h_error.map(f).unwrap_or_default(),
                f(r.pe_margin),
                f(r.condition),
                f(r.residual),
                r.iterations.map(|i| i.to_string()).unwrap_or_default(),
                r.converged.map(|c| c.to_string()).unwrap_or_default(),
            ]
        })
        .collect()
}

const DECAY_HEADER: [&str; 11] = [
    "family",
    "grid_per_dim",
    "n",
    "fill_distance",
    "sup_error",
    "h_error",
    "pe_margin",
    "condition",
    "residual",
    "iterations",
    "converged",
];

fn execute(cmd: &Command, run: &mut Run) -> Result<(), Failure> {
    let cfg = run.cfg.clone();
    let dom = cfg.domain()?;
    match cmd {
        Command::KernelCheck => {
            let checks = experiments::property_suite(&cfg)?;
            let rows = checks.iter().map(|c| {
                vec![
                    c.name.clone(),
                    f(c.observed),
                    f(c.threshold),
                    c.passed.to_string(),
                ]
            });
            run.write("checks.csv", |w| {
                io::write_table(w, &["check", "observed", "threshold", "passed"], rows)
            })?;
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            run.note("checks", checks.len());
            run.note("failed", &failed);
            if !failed.is_empty() {
                run.finish(cmd.name())?;
                return Err(Failure::Suite(format!(
                    "failed checks: {}",
                    failed.join("; ")
                )));
            }
        }
        Command::Approximate { grid } => {
            let g = grid.unwrap_or(cfg.map_grid);
            let a = experiments::approximate(&cfg, g)?;
            run.pe_margins.push(a.system.pe_margin);
            run.jitter.push(a.value.jitter());
            run.write("approximant.csv", |w| {
                io::write_approximant_csv(w, &a.value)
            })?;
            let rows = a
                .probes
                .iter()
                .zip(&a.values)
                .map(|(p, (v, t))| vec![f(p[0]), f(p[1]), f(*v), f(*t), f((v - t).abs())]);
            run.write("values.csv", |w| {
                io::write_table(w, &["x1", "x2", "v_n", "v_star", "abs_error"], rows)
            })?;
            run.note("grid_per_dim", g);
            run.note("fill_distance", a.fill_distance);
            run.note("value_sup_error", a.sup_error);
            run.note("controller_sup_error", a.controller_error);
            run.note("condition", a.system.condition_estimate());
        }
        Command::Pi { grid } => {
            let g = grid.unwrap_or(cfg.map_grid);
            let centers = grid_centers(&dom, g)?;
            let res = experiments::run_pi(&cfg, &centers)?;
            let rows = res.iterates.iter().enumerate().map(|(i, it)| {
                vec![
                    (i + 1).to_string(),
                    f(it.pe_margin),
                    f(it.residual),
                    f(it.policy_delta),
                    it.reference_error.map(f).unwrap_or_default(),
                ]
            });
            run.write("pi_log.csv", |w| {
                io::write_table(
                    w,
                    &[
                        "iteration",
                        "pe_margin",
                        "residual",
                        "policy_delta",
                        "controller_error",
                    ],
                    rows,
                )
            })?;
            run.pe_margins
                .extend(res.iterates.iter().map(|it| it.pe_margin));
            if let Some(v) = res.final_value() {
                run.jitter.push(v.jitter());
                run.write("value.csv", |w| io::write_approximant_csv(w, v))?;
            }
            run.note("grid_per_dim", g);
            run.note("iterations", res.iterations_used());
            run.note("converged", res.converged);
            run.note(
                "final_controller_error",
                res.iterates.last().and_then(|it| it.reference_error),
            );
        }
        Command::Convergence => {
            let mut families = vec![cfg.kernel_family];
            families.extend(
                cfg.compare_families
                    .iter()
                    .copied()
                    .filter(|f| *f != cfg.kernel_family),
            );
            let mut records = Vec::new();
            let mut slopes = Vec::new();
            let mut failure = None;
            for fam in families {
                match experiments::convergence_study(&cfg, &cfg.kernel_of(fam)?) {
                    Ok(study) => {
                        run.pe_margins
                            .extend(study.records.iter().map(|r| r.pe_margin));
                        slopes.push((fam, slope_json(&study.fit)));
                        records.extend(decay_rows(&study));
                    }
                    Err(e) => {
                        slopes.push((fam, json!({"status": "failed", "error": e.to_string()})));
                        failure.get_or_insert((fam, e));
                    }
                }
            }
            run.write("convergence.csv", |w| {
                io::write_table(w, &DECAY_HEADER, records)
            })?;
            run.note(
                "slopes",
                slopes
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.clone()))
                    .collect::<serde_json::Map<_, _>>(),
            );
            if let Some((fam, e)) = failure {
                run.finish(cmd.name())?;
                return Err(prefix(Failure::from(e), fam));
            }
        }
        Command::PiDecay => {
            let study = experiments::pi_decay_study(&cfg)?;
            run.pe_margins
                .extend(study.records.iter().map(|r| r.pe_margin));
            run.write("pi_decay.csv", |w| {
                io::write_table(w, &DECAY_HEADER, decay_rows(&study))
            })?;
            run.note("slope", slope_json(&study.fit));
            run.note(
                "all_converged",
                study.records.iter().all(|r| r.converged == Some(true)),
            );
        }
        Command::ErrorMap { grid } => {
            let g = grid.unwrap_or(cfg.map_grid);
            let map = experiments::error_map(&cfg, g)?;
            let rows = map
                .probes
                .iter()
                .zip(map.errors.iter().zip(&map.nearest_center))
                .map(|(p, (e, d))| vec![f(p[0]), f(p[1]), f(*e), f(*d)]);
            run.write("error_map.csv", |w| {
                io::write_table(w, &["x1", "x2", "error", "nearest_center"], rows)
            })?;
            run.write("centers.csv", |w| io::write_centers_csv(w, &map.centers))?;
            run.note("grid_per_dim", g);
            run.note("contrast", &map.contrast);
            run.note("iterations", map.iterations);
            run.note("converged", map.converged);
        }
        Command::PowerMap { grid } => {
            let g = grid.unwrap_or(cfg.map_grid);
            let map = experiments::power_map_study(&cfg, g)?;
            run.jitter.push(map.jitter);
            run.write("power_map.csv", |w| {
                io::write_table(
                    w,
                    &["x1", "x2", "power"],
                    grid_rows(&map.probes, &map.values),
                )
            })?;
            run.write("centers.csv", |w| io::write_centers_csv(w, &map.centers))?;
            let cand = vec![vec![
                f(map.candidate[0]),
                f(map.candidate[1]),
                f(map.max_power),
            ]];
            run.write("candidate.csv", |w| {
                io::write_table(w, &["x1", "x2", "power"], cand)
            })?;
            run.note("grid_per_dim", g);
            run.note("candidate", &map.candidate);
            run.note("max_power", map.max_power);
        }
        Command::Greedy { grid, rounds } => {
            let g = grid.unwrap_or(cfg.map_grid);
            let (centers, log) =
                experiments::greedy_rounds(&cfg, g, rounds.unwrap_or(cfg.greedy_rounds))?;
            let rows = log.iter().map(|r| {
                vec![
                    r.round.to_string(),
                    r.centers_before.to_string(),
                    f(r.max_power_before),
                    f(r.candidate[0]),
                    f(r.candidate[1]),
                    f(r.max_power_after),
                ]
            });
            run.write("greedy.csv", |w| {
                io::write_table(
                    w,
                    &[
                        "round",
                        "centers_before",
                        "max_power_before",
                        "x1",
                        "x2",
                        "max_power_after",
                    ],
                    rows,
                )
            })?;
            run.write("centers.csv", |w| io::write_centers_csv(w, &centers))?;
            run.note("rounds", &log);
        }
    }
    run.finish(cmd.name())
}

fn prefix(fl: Failure, fam: KernelFamily) -> Failure {
    match fl {
        Failure::Numerical(m) => Failure::Numerical(format!("{fam}: {m}")),
        Failure::Config(m) => Failure::Config(format!("{fam}: {m}")),
        other => other,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load_config(&cli).and_then(|cfg| {
        let out = PathBuf::from(&cfg.out_dir);
        fs::create_dir_all(&out)
            .map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
        let mut run = Run {
            cfg,
            out,
            jitter: Vec::new(),
            pe_margins: Vec::new(),
            files: Vec::new(),
            summary: serde_json::Map::new(),
        };
        execute(&cli.command, &mut run)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Suite(m)) => {
            eprintln!("property suite failed: {m}");
            ExitCode::from(4)
        }
    }
}
