use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use landscape_core::autodiff::Objective;
use landscape_core::{
    full_certificate, minimize, random_init, AugmentedLoss, AugmentedModel, EmpiricalLossConfig,
    OptimizerConfig, Verdict,
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{num, Arm, Experiment};
use crate::error::CliError;
use crate::report::{rows_to_csv, summarize, summary_text, ReportRow};

/// Rows of one invocation in (arm, λ index, seed) order, plus the runs that
/// raised an error instead of finishing.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<(usize, String)>,
}

impl Report {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

struct Job<'a> {
    arm: &'a Arm,
    lambda_index: usize,
    seed: u64,
}

fn run_one(exp: &Experiment, job: &Job) -> Result<ReportRow, CliError> {
    let lambda = job.arm.lambdas[job.lambda_index];
    let model = AugmentedModel::new(exp.spec.clone(), job.arm.mode)?;
    let cfg = EmpiricalLossConfig::new(exp.hinge, lambda, job.arm.mode)?;
    let obj = AugmentedLoss::new(&exp.dataset, exp.spec.clone(), cfg)?;
    let opt = OptimizerConfig {
        seed: job.seed,
        ..exp.optimizer.clone()
    };
    let init = random_init(&model, opt.init_scale, job.seed)?;
    let run = minimize(&obj, init.as_slice(), &opt)?;
    let cert = full_certificate(&exp.dataset, &model, &cfg, &run, &exp.thresholds)?;
    Ok(ReportRow {
        run_id: 0,
        arm: job.arm.label.clone(),
        lambda_index: job.lambda_index,
        lambda,
        seed: job.seed,
        termination: run.termination.to_string(),
        iterations: run.iterations,
        perturbations: run.perturbations,
        loss: run.loss,
        grad_norm: cert.grad_norm,
        min_hessian_eig: cert.min_hessian_eig,
        nonsmooth: !obj.is_smooth(),
        probe_pass: cert.probe.as_ref().map(|p| p.pass),
        inactivity: cert.inactivity,
        max_tensor_residual: cert.max_tensor_residual(),
        max_scaled_residual: cert.max_scaled_residual(),
        train_error: cert.train_error,
        oracle_error: cert.oracle_error,
        verdict: cert.verdict,
        failing: cert.failing.iter().map(|s| s.to_string()).collect(),
    })
}

fn error_row(job: &Job) -> ReportRow {
    ReportRow {
        run_id: 0,
        arm: job.arm.label.clone(),
        lambda_index: job.lambda_index,
        lambda: job.arm.lambdas[job.lambda_index],
        seed: job.seed,
        termination: "error".to_string(),
        iterations: 0,
        perturbations: 0,
        loss: f64::NAN,
        grad_norm: f64::NAN,
        min_hessian_eig: None,
        nonsmooth: false,
        probe_pass: None,
        inactivity: None,
        max_tensor_residual: f64::NAN,
        max_scaled_residual: f64::NAN,
        train_error: f64::NAN,
        oracle_error: f64::NAN,
        verdict: Verdict::Failed,
        failing: vec!["runtime".to_string()],
    }
}

fn execute(exp: &Experiment, arms: &[Arm], command: &'static str) -> Report {
    let mut jobs = Vec::new();
    for arm in arms {
        for lambda_index in 0..arm.lambdas.len() {
            for i in 0..exp.seed_count as u64 {
                jobs.push(Job {
                    arm,
                    lambda_index,
                    seed: exp.seed_offset + i,
                });
            }
        }
    }
    let results: Vec<Result<ReportRow, CliError>> = jobs.par_iter().map(|j| run_one(exp, j)).collect();
    let mut rows = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    for (id, (job, res)) in jobs.iter().zip(results).enumerate() {
        let mut row = match res {
            Ok(row) => row,
            Err(e) => {
                failures.push((id, e.to_string()));
                error_row(job)
            }
        };
        row.run_id = id;
        rows.push(row);
    }
    Report {
        command,
        rows,
        failures,
    }
}

/// Every seed of every λ for the configured augmentation.
pub fn run_experiment(exp: &Experiment) -> Report {
    let arms = exp.arms(false).expect("run always has an arm");
    execute(exp, &arms, "run")
}

/// Baseline and augmented arms with shared seeds; the base-network part of
/// each initialization is identical across arms.
pub fn compare_baseline(exp: &Experiment) -> Result<Report, CliError> {
    let arms = exp.arms(true)?;
    Ok(execute(exp, &arms, "compare"))
}

/// The sweep matrix and run count, without running anything.
pub fn describe(exp: &Experiment) -> String {
    let compare = exp.baseline.is_some();
    let arms = exp.arms(compare).expect("arms validated");
    let mut out = String::new();
    let _ = writeln!(out, "experiment: {}", exp.name);
    let _ = writeln!(
        out,
        "dataset: {} (n={}, d={})",
        exp.dataset_source,
        exp.dataset.len(),
        exp.dataset.dim()
    );
    let _ = writeln!(
        out,
        "network: {} {:?}, {} base parameters",
        exp.spec.activation(),
        exp.spec.widths(),
        exp.spec.param_count()
    );
    let _ = writeln!(out, "hinge power: {}", exp.hinge.power());
    let _ = writeln!(out, "mode: {}", if compare { "compare" } else { "run" });
    for arm in &arms {
        let n_params = AugmentedModel::new(exp.spec.clone(), arm.mode)
            .map(|m| m.n_params())
            .unwrap_or(0);
        let lambdas: Vec<String> = arm.lambdas.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(
            out,
            "arm {}: {} parameters, lambda in {{{}}}",
            arm.label,
            n_params,
            lambdas.join(", ")
        );
    }
    let _ = writeln!(
        out,
        "seeds: {} starting at {}",
        exp.seed_count, exp.seed_offset
    );
    let lambda_counts: Vec<String> = arms.iter().map(|a| a.lambdas.len().to_string()).collect();
    let total: usize = arms.iter().map(|a| a.lambdas.len() * exp.seed_count).sum();
    let _ = writeln!(
        out,
        "sweep: {} arm(s) x [{}] lambda(s) x {} seed(s)",
        arms.len(),
        lambda_counts.join(", "),
        exp.seed_count
    );
    let _ = writeln!(out, "{total} runs planned");
    out
}

fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes `dataset.csv`, `rows.csv`, `summary.txt` and `manifest.txt` into
/// `out_dir`.
pub fn write_outputs(exp: &Experiment, report: &Report, out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let dataset_csv = exp.dataset.to_csv_string();
    let rows_csv = rows_to_csv(&report.rows);
    let cells = summarize(&report.rows, &exp.thresholds);
    write_file(&out_dir.join("dataset.csv"), &dataset_csv)?;
    write_file(&out_dir.join("rows.csv"), &rows_csv)?;
    write_file(&out_dir.join("summary.txt"), &summary_text(&cells))?;

    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut m = String::new();
    let _ = writeln!(m, "format = landscape-lab manifest v1");
    let _ = writeln!(m, "tool_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "command = {}", report.command);
    let _ = writeln!(m, "created_unix = {created}");
    let _ = writeln!(m, "dataset_sha256 = {}", hex_sha256(dataset_csv.as_bytes()));
    let _ = writeln!(m, "rows_sha256 = {}", hex_sha256(rows_csv.as_bytes()));
    let _ = writeln!(m, "runs = {}", report.rows.len());
    let _ = writeln!(m, "runtime_failures = {}", report.failures.len());
    for (id, msg) in &report.failures {
        let _ = writeln!(m, "failure.{id} = {}", msg.replace('\n', " "));
    }
    for (k, v) in exp.echo() {
        let _ = writeln!(m, "config.{k} = {v}");
    }
    write_file(&out_dir.join("manifest.txt"), &m)
}

/// Reads the `config.thresholds.*` entries of a manifest back into
/// thresholds.
pub fn thresholds_from_manifest(text: &str) -> Result<landscape_core::Thresholds, CliError> {
    let mut th = landscape_core::Thresholds::default();
    let bad = |k: &str| CliError::Config {
        path: format!("manifest:{k}"),
        message: "unparsable value".to_string(),
    };
    for line in text.lines() {
        let Some((k, v)) = line.split_once(" = ") else {
            continue;
        };
        let Some(name) = k.strip_prefix("config.thresholds.") else {
            continue;
        };
        let f = || v.parse::<f64>().map_err(|_| bad(k));
        let u = || v.parse::<u64>().map_err(|_| bad(k));
        match name {
            "grad_tol" => th.grad_tol = f()?,
            "hessian_tol" => th.hessian_tol = f()?,
            "inactivity_tol" => th.inactivity_tol = f()?,
            "tensor_rel_tol" => th.tensor_rel_tol = f()?,
            "max_order" => th.max_order = u()? as u32,
            "restarts" => th.restarts = u()? as usize,
            "probe_c" => th.probe_c = f()?,
            "probe_radius" => th.probe_radius = f()?,
            "probe_dirs" => th.probe_dirs = u()? as usize,
            "probe_seed" => th.probe_seed = u()?,
            _ => return Err(bad(k)),
        }
    }
    Ok(th)
}

/// Formats a fraction the way the report files do.
pub fn fmt_fraction(count: usize, total: usize) -> String {
    num(count as f64 / total as f64)
}
