//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when the instance or a parameter is rejected,
//! 3 when `solve` diverges, 64 on usage errors.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, LoadedInstance};
use crate::model;
use crate::rp;
use crate::solver::{self, fmt_num, SolverConfig, Status, Variant};
use crate::spectral::{self, SpectralReport, Witness};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

/// Steps of the oscillating trajectory written by `witness`.
const OSCILLATION_STEPS: usize = 200;

#[derive(Debug, Parser)]
#[command(name = "coupled-splitting", version, about = "Splitting methods for block-coupled quadratic programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a solver and write trace.csv.
    Solve(ExperimentSpec),
    /// Build the expected update matrix and write report.json.
    Analyze(ExperimentSpec),
    /// Spectral radii of the two-block BCD iteration matrices (bcd_rates.csv).
    CompareBcd(ExperimentSpec),
    /// Exact expected iterates of randomly permuted ADMM (expectation.csv).
    RpExpect(ExperimentSpec),
    /// Search for a null direction that breaks subproblem uniqueness (witness.json).
    Witness(ExperimentSpec),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Analyze(_) => "analyze",
            Command::CompareBcd(_) => "compare-bcd",
            Command::RpExpect(_) => "rp-expect",
            Command::Witness(_) => "witness",
        }
    }

    pub fn spec(&self) -> &ExperimentSpec {
        match self {
            Command::Solve(s)
            | Command::Analyze(s)
            | Command::CompareBcd(s)
            | Command::RpExpect(s)
            | Command::Witness(s) => s,
        }
    }
}

/// Solver variant as given on the command line. The `rp*` values draw a fresh
/// block order every iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CliVariant {
    Fixed(Variant),
    Permuted(Variant),
}

impl FromStr for CliVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rpadmm" => Ok(CliVariant::Permuted(Variant::AdmmCyclicN)),
            "rpbcd" => Ok(CliVariant::Permuted(Variant::Bcd)),
            _ => s.parse::<Variant>().map(CliVariant::Fixed).map_err(|_| {
                format!(
                    "unknown variant `{s}` (expected admm2, admm2_linearized, admm_cyclic_n, bcd, bcpg, rpadmm or rpbcd)"
                )
            }),
        }
    }
}

impl fmt::Display for CliVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliVariant::Fixed(v) => write!(f, "{v}"),
            CliVariant::Permuted(Variant::Bcd) => f.write_str("rpbcd"),
            CliVariant::Permuted(_) => f.write_str("rpadmm"),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct ExperimentSpec {
    /// Instance file (JSON).
    pub instance_path: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    pub max_iter: usize,
    /// Defaults to admm2 for two blocks and admm_cyclic_n otherwise.
    #[arg(long)]
    pub variant: Option<CliVariant>,
    #[arg(long, env = "COUPLED_SPLITTING_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output directory.
    #[arg(long = "out", default_value = ".")]
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    fn variant_for(&self, n: usize) -> CliVariant {
        self.variant.unwrap_or(CliVariant::Fixed(if n == 2 {
            Variant::Admm2
        } else {
            Variant::AdmmCyclicN
        }))
    }

    fn config(&self, variant: Variant) -> SolverConfig {
        SolverConfig::new(variant)
            .with_beta(self.beta)
            .with_gamma(self.gamma)
            .with_tol(self.tol)
            .with_max_iter(self.max_iter)
    }

    fn header(&self, command: &str, extra: &[String]) -> Vec<String> {
        let mut lines = vec![
            format!("seed={}", self.seed),
            format!("command={command}"),
            format!("instance={}", self.instance_path.display()),
            format!("beta={}", fmt_num(self.beta)),
            format!("gamma={}", fmt_num(self.gamma)),
            format!("tol={}", fmt_num(self.tol)),
            format!("max_iter={}", self.max_iter),
        ];
        lines.extend_from_slice(extra);
        lines
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeDocument {
    pub seed: u64,
    pub beta: f64,
    pub report: SpectralReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessDocument {
    pub seed: u64,
    pub beta: f64,
    pub witness: Option<Witness>,
    /// Smallest perturbed-step `‖x^{k+1} - x^k‖` over the second half of the
    /// oscillating trajectory.
    pub tail_gap: Option<f64>,
    pub max_optimality_residual: Option<f64>,
}

/// What a successful dispatch produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub exit: u8,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Usage(_) => EXIT_USAGE,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `args` (including the program name) and dispatches.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.exit)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

pub fn dispatch(command: &Command) -> Result<Outcome> {
    let spec = command.spec();
    let loaded = io::load_instance(&spec.instance_path)?;
    match command {
        Command::Solve(_) => solve(spec, &loaded),
        Command::Analyze(_) => analyze(spec, &loaded),
        Command::CompareBcd(_) => compare_bcd(spec, &loaded),
        Command::RpExpect(_) => rp_expect(spec, &loaded),
        Command::Witness(_) => witness(spec, &loaded),
    }
}

fn write(spec: &ExperimentSpec, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    io::write_output(&spec.output_dir, name, text)?;
    files.push(spec.output_dir.join(name));
    Ok(())
}

fn solve(spec: &ExperimentSpec, loaded: &LoadedInstance) -> Result<Outcome> {
    let inst = &loaded.instance;
    let variant = spec.variant_for(inst.n());
    let mut files = Vec::new();
    match variant {
        CliVariant::Fixed(v) => {
            let cfg = spec.config(v);
            cfg.validate(inst)?;
            let reference = (v.is_two_block() && inst.is_quadratic())
                .then(|| model::solve_kkt_oracle(inst).ok())
                .flatten();
            let trace = solver::run_solver(inst, &cfg, &loaded.x0, &loaded.mu0, reference.as_ref())?;
            let header = spec.header("solve", &[format!("variant={variant}")]);
            write(spec, "trace.csv", &trace.to_csv(&header), &mut files)?;
            let exit = if trace.status == Status::Diverged { EXIT_DIVERGED } else { EXIT_OK };
            let residual = trace.last().max_residual().map(fmt_num).unwrap_or_default();
            Ok(Outcome {
                exit,
                files,
                summary: format!("status={} k={} residual={residual}", trace.status, trace.iterations()),
            })
        }
        CliVariant::Permuted(v) => {
            let cfg = spec.config(v);
            cfg.validate(inst)?;
            let trials = spec.trials.unwrap_or(1);
            let run = rp::run_rp_solver(inst, &cfg, &loaded.x0, &loaded.mu0, spec.seed, trials)?;
            let header = spec.header("solve", &[format!("variant={variant}"), format!("trials={trials}")]);
            write(spec, "trace.csv", &run.traces_csv(&header), &mut files)?;
            let diverged = run.traces.iter().filter(|t| t.status == Status::Diverged).count();
            let converged = run.traces.iter().filter(|t| t.status == Status::Converged).count();
            Ok(Outcome {
                exit: if diverged > 0 { EXIT_DIVERGED } else { EXIT_OK },
                files,
                summary: format!("trials={trials} converged={converged} diverged={diverged}"),
            })
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")))
    }
}

fn analyze(spec: &ExperimentSpec, loaded: &LoadedInstance) -> Result<Outcome> {
    check_beta(spec.beta)?;
    let report = spectral::analyze(&loaded.instance, spec.beta)?;
    let doc = AnalyzeDocument {
        seed: spec.seed,
        beta: spec.beta,
        report,
    };
    let mut files = Vec::new();
    write(spec, "report.json", &serde_json::to_string_pretty(&doc)?, &mut files)?;
    let v = &doc.report.verdicts;
    let prop = v.prop_3_1.map_or("n/a".to_string(), |b| b.to_string());
    Ok(Outcome {
        exit: EXIT_OK,
        files,
        summary: format!(
            "rho_M={} lemma_3_1={} lemma_3_3={} lemma_3_4={} lemma_3_5={} prop_3_1={prop}",
            fmt_num(doc.report.rho_m),
            v.lemma_3_1,
            v.lemma_3_3,
            v.lemma_3_4,
            v.lemma_3_5
        ),
    })
}

fn compare_bcd(spec: &ExperimentSpec, loaded: &LoadedInstance) -> Result<Outcome> {
    let inst = &loaded.instance;
    if inst.n() != 2 {
        return Err(Error::Usage(format!(
            "compare-bcd needs exactly 2 blocks, instance has {}",
            inst.n()
        )));
    }
    let rates = spectral::bcd_rate_matrices(&inst.h, inst.blocks.dim(0))?;
    let r = rates.radii;
    let mut text = String::new();
    for line in spec.header("compare-bcd", &[]) {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str("matrix,rho\n");
    for (name, rho) in [("M1", r.rho1), ("M2", r.rho2), ("M3", r.rho3)] {
        text.push_str(&format!("{name},{}\n", fmt_num(rho)));
    }
    if let (Some(s1), Some(closed)) = (r.sigma1, r.rho3_closed_form) {
        text.push_str(&format!("sigma1,{}\nM3_closed_form,{}\n", fmt_num(s1), fmt_num(closed)));
    }
    let mut files = Vec::new();
    write(spec, "bcd_rates.csv", &text, &mut files)?;
    Ok(Outcome {
        exit: EXIT_OK,
        files,
        summary: format!(
            "rho1={} rho2={} rho3={} verdict={}",
            fmt_num(r.rho1),
            fmt_num(r.rho2),
            fmt_num(r.rho3),
            r.verdict()
        ),
    })
}

fn rp_expect(spec: &ExperimentSpec, loaded: &LoadedInstance) -> Result<Outcome> {
    check_beta(spec.beta)?;
    let inst = &loaded.instance;
    let exact = rp::run_expected_iteration(inst, spec.beta, &loaded.x0, &loaded.mu0, spec.max_iter)?;
    let mut files = Vec::new();
    let mut extra = Vec::new();
    let mut summary = format!(
        "exact: k={} converged={} last_step={}",
        exact.last().k,
        exact.converged,
        exact.final_step.map(fmt_num).unwrap_or_default()
    );
    let sampled = match spec.trials {
        Some(trials) => {
            let variant = match spec.variant_for(inst.n()) {
                CliVariant::Permuted(v) => v,
                CliVariant::Fixed(_) => Variant::AdmmCyclicN,
            };
            let cfg = spec.config(variant);
            cfg.validate(inst)?;
            let run = rp::run_rp_solver(inst, &cfg, &loaded.x0, &loaded.mu0, spec.seed, trials)?;
            extra.push(format!("trials={trials}"));
            let header = spec.header("rp-expect", &extra);
            write(spec, "rp_trace.csv", &run.traces_csv(&header), &mut files)?;
            summary.push_str(&format!("; sample_mean: trials={trials} k={}", run.mean.last().k));
            Some(run.mean)
        }
        None => None,
    };
    let mut traces = vec![&exact];
    traces.extend(sampled.as_ref());
    let header = spec.header("rp-expect", &extra);
    write(spec, "expectation.csv", &rp::expectation_csv(&traces, &header), &mut files)?;
    Ok(Outcome {
        exit: EXIT_OK,
        files,
        summary,
    })
}

fn witness(spec: &ExperimentSpec, loaded: &LoadedInstance) -> Result<Outcome> {
    check_beta(spec.beta)?;
    let inst = &loaded.instance;
    let found = spectral::divergence_witness(inst, spec.beta, &[])?;
    let mut files = Vec::new();
    let mut doc = WitnessDocument {
        seed: spec.seed,
        beta: spec.beta,
        witness: found.clone(),
        tail_gap: None,
        max_optimality_residual: None,
    };
    let summary = match &found {
        None => "none".to_string(),
        Some(w) => {
            let cfg = spec.config(Variant::Admm2);
            let ybar = DVector::from_vec(w.ybar.clone());
            let steps = spec.max_iter.min(OSCILLATION_STEPS);
            let demo = spectral::oscillation_demo(inst, &cfg, &ybar, &loaded.x0, &loaded.mu0, steps)?;
            let header = spec.header("witness", &["trajectory=baseline".into()]);
            write(spec, "baseline_trace.csv", &demo.baseline.to_csv(&header), &mut files)?;
            let header = spec.header("witness", &["trajectory=perturbed".into()]);
            write(spec, "perturbed_trace.csv", &demo.perturbed.to_csv(&header), &mut files)?;
            doc.tail_gap = Some(demo.tail_gap);
            doc.max_optimality_residual = Some(demo.max_optimality_residual);
            format!(
                "ybar={:?} certificate_defect={} tail_gap={}",
                w.ybar,
                fmt_num(w.certificate.max_defect()),
                fmt_num(demo.tail_gap)
            )
        }
    };
    write(spec, "witness.json", &serde_json::to_string_pretty(&doc)?, &mut files)?;
    Ok(Outcome {
        exit: EXIT_OK,
        files,
        summary,
    })
}
