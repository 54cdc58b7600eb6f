//! Command-line front end.
//!
//! Every command prints a JSON [`RunReport`] on stdout and, unless `--json`
//! is given, a short human summary on stderr. Exit codes: 0 ok, 1 input
//! error, 2 numerical refusal with fallback, 3 internal inconsistency.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cgdare::{find_reference, CgdareSolution, ReferenceConfig, ReferenceSearch};
use crate::closedform::solve_closed_form;
use crate::error::{Error, Result};
use crate::grde::{simulate, solve_full, GrdeTrajectory};
use crate::linalg::{Tolerance, Vector};
use crate::model::{
    default_nilpotent_dim, load, matrix_to_json, random_nilpotent_problem, random_problem, save,
    to_json_string, validate, vector_to_json, LqProblem, ProblemKind,
};
use crate::oracle::batch_optimal;
use crate::pencil;
use crate::reduction::solve_hybrid;

#[derive(Debug, Parser)]
#[command(
    name = "singular-lq",
    version,
    about = "Finite-horizon LQ problems with singular weights"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Print only the JSON report.
    #[arg(long, global = true)]
    pub json: bool,
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long, global = true, value_name = "TOL")]
    pub rank_tol: Option<f64>,
    /// Absolute residual threshold.
    #[arg(long, global = true, value_name = "TOL")]
    pub residual_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Backward recursion over the whole horizon.
    Full,
    /// Full steps up to the nilpotency index, then the reduced recursion.
    Reduced,
    /// Full steps up to the nilpotency index, then the closed form.
    ClosedForm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Reduced => "reduced",
            Method::ClosedForm => "closed-form",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing assumptions of a problem file.
    Validate { problem: PathBuf },
    /// Compute the cost-to-go and gain schedule.
    Solve {
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Full)]
        method: Method,
        /// Write the trajectory here instead of embedding it in the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pencil singularity criteria and zero-eigenvalue bookkeeping.
    Analyze { problem: PathBuf },
    /// Compare the Riccati cost with the batch optimum and a simulation.
    Verify {
        problem: PathBuf,
        /// Initial state, overriding the one in the file.
        #[arg(long, value_name = "v1,v2,...", allow_hyphen_values = true)]
        x0: Option<String>,
    },
    /// Time the solution methods on generated problems.
    Bench(BenchArgs),
    /// Write a generated problem.
    Gen(GenArgs),
}

fn parse_kind(s: &str) -> std::result::Result<ProblemKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long = "horizon", short = 'T', default_value_t = 500)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated generator kinds.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "nilpotent_block")]
    pub kinds: Vec<ProblemKind>,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    /// Size of the nilpotent block for `nilpotent_block` problems.
    #[arg(long)]
    pub nil_dim: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_kind, default_value = "generic")]
    pub kind: ProblemKind,
    #[arg(long = "horizon", short = 'T', default_value_t = crate::model::DEFAULT_HORIZON)]
    pub horizon: usize,
    #[arg(long)]
    pub nil_dim: Option<usize>,
    /// Output file; the problem is printed on stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Fallback,
    Error,
}

/// Machine-readable outcome of one command.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub inputs: Value,
    pub results: Value,
    pub residuals: BTreeMap<String, f64>,
    /// Milliseconds per phase.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    error_code: i32,
}

impl RunReport {
    pub fn new(command: &str, inputs: Value) -> Self {
        Self {
            command: command.into(),
            status: Status::Ok,
            reason: None,
            inputs,
            results: json!({}),
            residuals: BTreeMap::new(),
            timings: BTreeMap::new(),
            error_code: 0,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Ok => 0,
            Status::Fallback => 2,
            Status::Error => self.error_code,
        }
    }

    fn fail(mut self, err: &Error) -> Self {
        self.status = Status::Error;
        self.reason = Some(err.to_string());
        self.error_code = if err.is_internal() {
            3
        } else if err.is_refusal() {
            2
        } else {
            1
        };
        self
    }

    fn inconsistent(mut self, reason: String) -> Self {
        self.status = Status::Error;
        self.reason = Some(reason);
        self.error_code = 3;
        self
    }

    fn fallback(&mut self, reason: String) {
        self.status = Status::Fallback;
        self.reason = Some(reason);
    }

    fn set(&mut self, key: &str, value: Value) {
        self.results
            .as_object_mut()
            .expect("results is an object")
            .insert(key.into(), value);
    }

    fn time(&mut self, phase: &str, start: Instant) {
        *self.timings.entry(phase.into()).or_insert(0.0) += start.elapsed().as_secs_f64() * 1e3;
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    fn summary(&self) -> String {
        let mut out = format!("{}: {}", self.command, status_str(self.status));
        if let Some(reason) = &self.reason {
            out.push_str(&format!(" ({reason})"));
        }
        out.push('\n');
        for (k, v) in &self.residuals {
            out.push_str(&format!("  {k:<28} {v:.3e}\n"));
        }
        for (k, v) in &self.timings {
            out.push_str(&format!("  {k:<28} {v:.3} ms\n"));
        }
        out
    }
}

fn status_str(s: Status) -> &'static str {
    match s {
        Status::Ok => "ok",
        Status::Fallback => "fallback",
        Status::Error => "error",
    }
}

fn tolerance(g: &GlobalArgs) -> Result<Tolerance> {
    let d = Tolerance::default();
    Tolerance::new(
        g.rank_tol.unwrap_or(d.rank_rel),
        g.residual_tol.unwrap_or(d.residual_abs),
        d.residual_rel,
    )
}

fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

/// Relative difference `|a − b| / (1 + |b|)`.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

/// Parses `"v1,v2,..."`.
pub fn parse_vector(text: &str) -> Result<Vector> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad vector entry `{}`: {e}", s.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Vector::from_vec(values))
}

/// Outcome of [`solve_with_method`].
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub trajectory: GrdeTrajectory,
    /// Why the full recursion was used instead of the requested method.
    pub fallback: Option<String>,
    pub details: serde_json::Map<String, Value>,
    pub residuals: BTreeMap<String, f64>,
    pub timings: BTreeMap<String, f64>,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Locates a reference solution, describing the search in `details`.
fn reference_for(
    p: &LqProblem,
    tol: &Tolerance,
    out: &mut SolveOutcome,
) -> Result<std::result::Result<CgdareSolution, String>> {
    let start = Instant::now();
    let config = ReferenceConfig {
        tol: *tol,
        ..ReferenceConfig::default()
    };
    let search = find_reference(p, &config);
    out.timings.insert("reference_ms".into(), ms(start));
    match search {
        Err(e) if e.is_refusal() => Ok(Err(e.to_string())),
        Err(e) => Err(e),
        Ok(ReferenceSearch::NotFound {
            iterations,
            last_change,
            reason,
        }) => {
            out.details.insert(
                "reference".into(),
                json!({ "found": false, "iterations": iterations, "last_change": last_change, "reason": reason }),
            );
            Ok(Err(format!("no reference solution: {reason}")))
        }
        Ok(ReferenceSearch::Found {
            solution,
            source,
            iterations,
        }) => {
            out.details.insert(
                "reference".into(),
                json!({
                    "found": true,
                    "source": source,
                    "iterations": iterations,
                    "nu": solution.nu,
                    "dim_U": solution.dim_u(),
                    "inertia_RX": solution.inertia_rx,
                }),
            );
            out.residuals
                .insert("reference_residual".into(), solution.residual_norm);
            out.residuals.insert(
                "reference_kernel_condition".into(),
                solution.kernel_condition_residual,
            );
            Ok(Ok(solution))
        }
    }
}

/// Solves a validated problem with the requested method, falling back to
/// the full recursion on any numerical refusal.
pub fn solve_with_method(p: &LqProblem, method: Method, tol: &Tolerance) -> Result<SolveOutcome> {
    validate(p, tol)?.into_result()?;
    let mut out = SolveOutcome {
        trajectory: GrdeTrajectory {
            x: vec![],
            k: vec![],
            g: vec![],
        },
        fallback: None,
        details: serde_json::Map::new(),
        residuals: BTreeMap::new(),
        timings: BTreeMap::new(),
    };
    let mut solved = None;
    if method != Method::Full {
        match reference_for(p, tol, &mut out)? {
            Err(reason) => out.fallback = Some(reason),
            Ok(sol) => {
                let start = Instant::now();
                match method {
                    Method::Reduced => {
                        let hyb = solve_hybrid(p, &sol, tol)?;
                        out.timings.insert("reduced_ms".into(), ms(start));
                        if let Some(c) = hyb.report.checkpoint {
                            out.residuals
                                .insert("checkpoint_block_11".into(), c.block_11);
                            out.residuals
                                .insert("checkpoint_block_12".into(), c.block_12);
                        }
                        out.fallback = hyb.report.fallback_reason.clone();
                        out.details.insert(
                            "reduction".into(),
                            serde_json::to_value(&hyb.report).expect("serialises"),
                        );
                        solved = Some(hyb.trajectory);
                    }
                    Method::ClosedForm => match solve_closed_form(p, &sol, tol) {
                        Ok(cf) => {
                            out.timings.insert("closed_form_ms".into(), ms(start));
                            out.residuals.insert(
                                "checkpoint_block_11".into(),
                                cf.report.checkpoint.block_11,
                            );
                            out.residuals.insert(
                                "checkpoint_block_12".into(),
                                cf.report.checkpoint.block_12,
                            );
                            out.residuals
                                .insert("stein_residual".into(), cf.report.stein_residual);
                            out.residuals
                                .insert("terminal_mismatch".into(), cf.report.terminal_mismatch);
                            out.details.insert(
                                "closed_form".into(),
                                serde_json::to_value(&cf.report).expect("serialises"),
                            );
                            solved = Some(cf.trajectory);
                        }
                        Err(Error::ClosedFormInapplicable(reason)) => out.fallback = Some(reason),
                        Err(e) if e.is_refusal() => out.fallback = Some(e.to_string()),
                        Err(e) => return Err(e),
                    },
                    Method::Full => unreachable!(),
                }
            }
        }
    }
    out.trajectory = match solved {
        Some(t) if out.fallback.is_none() => t,
        _ => {
            let start = Instant::now();
            let t = solve_full(p, tol)?;
            out.timings.insert("full_ms".into(), ms(start));
            t
        }
    };
    Ok(out)
}

fn cmd_validate(problem: &Path, tol: &Tolerance) -> RunReport {
    let mut report = RunReport::new("validate", json!({ "problem": path_value(problem) }));
    let p = match load(problem) {
        Ok(p) => p,
        Err(e) => return report.fail(&e),
    };
    let v = match validate(&p, tol) {
        Ok(v) => v,
        Err(e) => return report.fail(&e),
    };
    for c in &v.checks {
        report.residuals.insert(c.name.into(), c.residual);
    }
    report.set("n", json!(p.n()));
    report.set("m", json!(p.m()));
    report.set("T", json!(p.horizon));
    report.set("validation", serde_json::to_value(&v).expect("serialises"));
    if !v.passed {
        let err = Error::Validation(v.failures().join(", "));
        return report.fail(&err);
    }
    report
}

fn cmd_solve(problem: &Path, method: Method, out: Option<&Path>, tol: &Tolerance) -> RunReport {
    let mut report = RunReport::new(
        "solve",
        json!({
            "problem": path_value(problem),
            "method": method.as_str(),
            "out": out.map(path_value),
        }),
    );
    let p = match load(problem) {
        Ok(p) => p,
        Err(e) => return report.fail(&e),
    };
    let outcome = match solve_with_method(&p, method, tol) {
        Ok(o) => o,
        Err(e) => return report.fail(&e),
    };
    report.residuals = outcome.residuals;
    report.timings = outcome.timings;
    report.set("method", json!(method.as_str()));
    report.set("T", json!(p.horizon));
    for (k, v) in outcome.details {
        report.set(&k, v);
    }
    report.set("X_0", matrix_to_json(&outcome.trajectory.x[0]));
    let traj = outcome.trajectory.to_json();
    match out {
        Some(path) => {
            let text = serde_json::to_string_pretty(&traj).expect("serialises") + "\n";
            if let Err(e) = std::fs::write(path, text) {
                return report.fail(&Error::Io(e));
            }
        }
        None => report.set("trajectory", traj),
    }
    if let Some(reason) = outcome.fallback {
        report.set("solved_by", json!("full"));
        report.fallback(reason);
    } else {
        report.set("solved_by", json!(method.as_str()));
    }
    report
}

fn cmd_analyze(problem: &Path, tol: &Tolerance) -> RunReport {
    let mut report = RunReport::new("analyze", json!({ "problem": path_value(problem) }));
    let p = match load(problem).and_then(|p| validate(&p, tol)?.into_result().map(|_| p)) {
        Ok(p) => p,
        Err(e) => return report.fail(&e),
    };
    let start = Instant::now();
    let config = ReferenceConfig {
        tol: *tol,
        ..ReferenceConfig::default()
    };
    let sol = match find_reference(&p, &config) {
        Ok(ReferenceSearch::Found {
            solution,
            source,
            iterations,
        }) => {
            report.set(
                "reference",
                json!({
                    "found": true,
                    "source": source,
                    "iterations": iterations,
                    "nu": solution.nu,
                    "dim_U": solution.dim_u(),
                    "inertia_RX": solution.inertia_rx,
                }),
            );
            report
                .residuals
                .insert("reference_residual".into(), solution.residual_norm);
            Some(solution)
        }
        Ok(ReferenceSearch::NotFound { reason, .. }) => {
            report.set("reference", json!({ "found": false, "reason": reason }));
            None
        }
        Err(e) if e.is_refusal() => {
            report.set(
                "reference",
                json!({ "found": false, "reason": e.to_string() }),
            );
            None
        }
        Err(e) => return report.fail(&e),
    };
    report.time("reference", start);
    let start = Instant::now();
    let analysis = match pencil::analyze(&p.triple, sol.as_ref(), tol) {
        Ok(a) => a,
        Err(e) => return report.fail(&e),
    };
    report.time("pencil", start);
    // With N singular both sides of the determinant identity vanish and only
    // absolute agreement is meaningful.
    let det_threshold = if analysis.n_criterion.n_singular {
        1e-6
    } else {
        1e-8
    };
    report.set(
        "pencil",
        serde_json::to_value(&analysis).expect("serialises"),
    );
    report.set("det_identity_threshold", json!(det_threshold));

    let mut problems = Vec::new();
    if !analysis.n_criterion_consistent {
        problems.push("N singularity criterion disagrees with its characterisation".to_string());
    }
    if analysis.closed_loop_consistent == Some(false) {
        problems
            .push("closed-loop singularity criterion disagrees with its characterisation".into());
    }
    if let Some(mu) = analysis.mu {
        if !mu.additive {
            problems.push(format!(
                "zero multiplicities not additive: {} != {} + {}",
                mu.mu_block, mu.mu_ax, mu.mu_rx
            ));
        }
    }
    if let Some(r) = analysis.det_identity_residual {
        report.residuals.insert("det_identity".into(), r);
        if r > det_threshold {
            problems.push(format!("determinant identity residual {r:.3e}"));
        }
    }
    if problems.is_empty() {
        report
    } else {
        report.inconsistent(problems.join("; "))
    }
}

fn cmd_verify(problem: &Path, x0: Option<&str>, tol: &Tolerance) -> RunReport {
    let mut report = RunReport::new(
        "verify",
        json!({ "problem": path_value(problem), "x0": x0 }),
    );
    let p = match load(problem).and_then(|p| validate(&p, tol)?.into_result().map(|_| p)) {
        Ok(p) => p,
        Err(e) => return report.fail(&e),
    };
    let x0 = match x0.map(parse_vector).transpose() {
        Ok(Some(v)) => v,
        Ok(None) => match p.require_x0() {
            Ok(v) => v.clone(),
            Err(e) => return report.fail(&e),
        },
        Err(e) => return report.fail(&e),
    };
    if x0.len() != p.n() {
        return report.fail(&Error::Dimension {
            field: "x0".into(),
            expected: format!("{}", p.n()),
            found: format!("{}", x0.len()),
        });
    }

    let start = Instant::now();
    let traj = match solve_full(&p, tol) {
        Ok(t) => t,
        Err(e) => return report.fail(&e),
    };
    report.time("grde", start);
    let j_grde = (x0.transpose() * &traj.x[0] * &x0)[(0, 0)];

    let start = Instant::now();
    let oracle = match batch_optimal(&p, &x0, tol) {
        Ok(o) => o,
        Err(e) => return report.fail(&e),
    };
    report.time("oracle", start);

    let start = Instant::now();
    let sim = match simulate(&p, &traj, &x0, None) {
        Ok(s) => s,
        Err(e) => return report.fail(&e),
    };
    report.time("simulation", start);

    report.set("x0", vector_to_json(&x0));
    report.set("J_grde", json!(j_grde));
    report.set("J_oracle", json!(oracle.j_star));
    report.set("J_oracle_closed_form", json!(oracle.j_closed_form));
    report.set("J_simulated", json!(sim.cost));
    let diffs = [
        ("grde_vs_oracle", relative_difference(j_grde, oracle.j_star)),
        (
            "simulated_vs_oracle",
            relative_difference(sim.cost, oracle.j_star),
        ),
        ("grde_vs_simulated", relative_difference(j_grde, sim.cost)),
    ];
    let threshold = tol.residual_rel;
    report.set("threshold", json!(threshold));
    let mut worst = 0.0_f64;
    for (k, v) in diffs {
        report.residuals.insert(k.into(), v);
        worst = worst.max(v);
    }
    if worst > threshold {
        return report.inconsistent(format!("costs disagree (relative difference {worst:.3e})"));
    }
    report
}

fn generate(
    kind: ProblemKind,
    n: usize,
    m: usize,
    seed: u64,
    nil_dim: Option<usize>,
) -> Result<LqProblem> {
    match kind {
        ProblemKind::NilpotentBlock => random_nilpotent_problem(
            n,
            m,
            nil_dim.unwrap_or_else(|| default_nilpotent_dim(n)),
            seed,
        ),
        other => random_problem(n, m, seed, other),
    }
}

#[derive(Debug, Default, Serialize)]
struct TimingSummary {
    samples_ms: Vec<f64>,
    mean_ms: Option<f64>,
    median_ms: Option<f64>,
}

impl TimingSummary {
    fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        samples.shrink_to_fit();
        Self {
            samples_ms: samples,
            mean_ms: Some(mean),
            median_ms: Some(median),
        }
    }
}

/// Agreement demanded between methods in the benchmark.
pub const METHOD_AGREEMENT: f64 = 1e-8;

fn cmd_bench(args: &BenchArgs, tol: &Tolerance) -> RunReport {
    let mut report = RunReport::new("bench", serde_json::to_value(args).expect("serialises"));
    let mut instances = Vec::new();
    let (mut t_full, mut t_reduced, mut t_closed) = (Vec::new(), Vec::new(), Vec::new());
    let mut worst = 0.0_f64;
    for &kind in &args.kinds {
        for rep in 0..args.repetitions {
            let seed = args.seed + rep as u64;
            let mut p = match generate(kind, args.n, args.m, seed, args.nil_dim) {
                Ok(p) => p,
                Err(e) => return report.fail(&e),
            };
            p.horizon = args.horizon;

            let start = Instant::now();
            let full = match solve_full(&p, tol) {
                Ok(t) => t,
                Err(e) => return report.fail(&e),
            };
            let full_ms = ms(start);
            t_full.push(full_ms);

            let mut record = json!({ "kind": kind.as_str(), "seed": seed, "full_ms": full_ms });
            let obj = record.as_object_mut().expect("object");
            let start = Instant::now();
            let config = ReferenceConfig {
                tol: *tol,
                ..ReferenceConfig::default()
            };
            let sol = match find_reference(&p, &config) {
                Ok(s) => s.into_solution(),
                Err(e) if e.is_refusal() => None,
                Err(e) => return report.fail(&e),
            };
            obj.insert("reference_ms".into(), json!(ms(start)));
            let Some(sol) = sol else {
                obj.insert("reference_found".into(), json!(false));
                instances.push(record);
                continue;
            };
            obj.insert("reference_found".into(), json!(true));
            obj.insert("nu".into(), json!(sol.nu));
            obj.insert("dim_U".into(), json!(sol.dim_u()));

            let start = Instant::now();
            match solve_hybrid(&p, &sol, tol) {
                Ok(h) => {
                    let elapsed = ms(start);
                    let diff = h.trajectory.max_relative_difference(&full);
                    worst = worst.max(diff);
                    t_reduced.push(elapsed);
                    obj.insert("reduced_ms".into(), json!(elapsed));
                    obj.insert("reduced_dim".into(), json!(h.report.reduced_dim));
                    obj.insert("reduced_fallback".into(), json!(h.report.fallback_reason));
                    obj.insert("reduced_vs_full".into(), json!(diff));
                }
                Err(e) => return report.fail(&e),
            }

            let start = Instant::now();
            match solve_closed_form(&p, &sol, tol) {
                Ok(cf) => {
                    let elapsed = ms(start);
                    let diff = cf.trajectory.max_relative_difference(&full);
                    worst = worst.max(diff);
                    t_closed.push(elapsed);
                    obj.insert("closed_form_ms".into(), json!(elapsed));
                    obj.insert("closed_form_vs_full".into(), json!(diff));
                }
                Err(e) if e.is_refusal() => {
                    obj.insert("closed_form_refused".into(), json!(e.to_string()));
                }
                Err(e) => return report.fail(&e),
            }
            instances.push(record);
        }
    }
    report
        .timings
        .insert("full_total_ms".into(), t_full.iter().sum());
    report
        .timings
        .insert("reduced_total_ms".into(), t_reduced.iter().sum());
    report
        .timings
        .insert("closed_form_total_ms".into(), t_closed.iter().sum());
    report.set("instances", Value::Array(instances));
    report.set(
        "summary",
        json!({
            "full": TimingSummary::from_samples(t_full),
            "reduced": TimingSummary::from_samples(t_reduced),
            "closed_form": TimingSummary::from_samples(t_closed),
        }),
    );
    report
        .residuals
        .insert("max_method_disagreement".into(), worst);
    if worst > METHOD_AGREEMENT {
        return report.inconsistent(format!(
            "methods disagree (relative difference {worst:.3e})"
        ));
    }
    report
}

/// Either a report, or the raw problem document for `gen` without `--out`.
enum Output {
    Report(RunReport),
    Raw(String),
}

fn cmd_gen(args: &GenArgs) -> Output {
    let mut report = RunReport::new("gen", serde_json::to_value(args).expect("serialises"));
    let mut p = match generate(args.kind, args.n, args.m, args.seed, args.nil_dim) {
        Ok(p) => p,
        Err(e) => return Output::Report(report.fail(&e)),
    };
    p.horizon = args.horizon;
    match &args.out {
        None => Output::Raw(to_json_string(&p) + "\n"),
        Some(path) => {
            if let Err(e) = save(&p, path) {
                return Output::Report(report.fail(&e));
            }
            report.set("out", path_value(path));
            report.set("n", json!(p.n()));
            report.set("m", json!(p.m()));
            report.set("T", json!(p.horizon));
            Output::Report(report)
        }
    }
}

fn execute(cli: &Cli) -> Output {
    let tol = match tolerance(&cli.global) {
        Ok(t) => t,
        Err(e) => {
            let name = match &cli.command {
                Command::Validate { .. } => "validate",
                Command::Solve { .. } => "solve",
                Command::Analyze { .. } => "analyze",
                Command::Verify { .. } => "verify",
                Command::Bench(_) => "bench",
                Command::Gen(_) => "gen",
            };
            return Output::Report(RunReport::new(name, json!({})).fail(&e));
        }
    };
    Output::Report(match &cli.command {
        Command::Validate { problem } => cmd_validate(problem, &tol),
        Command::Solve {
            problem,
            method,
            out,
        } => cmd_solve(problem, *method, out.as_deref(), &tol),
        Command::Analyze { problem } => cmd_analyze(problem, &tol),
        Command::Verify { problem, x0 } => cmd_verify(problem, x0.as_deref(), &tol),
        Command::Bench(args) => cmd_bench(args, &tol),
        Command::Gen(args) => return cmd_gen(args),
    })
}

/// Runs the command line given in `args` (program name first) and returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli) {
        Output::Raw(text) => {
            let _ = stdout.write_all(text.as_bytes());
            0
        }
        Output::Report(report) => {
            let _ = writeln!(stdout, "{}", report.to_json_string());
            if !cli.global.json {
                let _ = stderr.write_all(report.summary().as_bytes());
            }
            report.exit_code()
        }
    }
}
