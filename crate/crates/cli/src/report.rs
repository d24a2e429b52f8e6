use std::collections::BTreeMap;
use std::fmt::Write as _;

use landscape_core::certify::judge;
use landscape_core::{Thresholds, Verdict};

use crate::config::num;
use crate::error::CliError;

pub const HEADER: &str = "run_id,arm,lambda_index,lambda,seed,termination,iterations,perturbations,\
loss,grad_norm,min_hessian_eig,probe_pass,inactivity,max_tensor_residual,max_scaled_residual,\
train_error,oracle_error,verdict,failing";

/// Hessian column value when curvature was not computed for a kinked network.
pub const NONSMOOTH: &str = "nonsmooth-skipped";
/// Hessian column value when the network was too large for a dense Hessian.
pub const SKIPPED: &str = "skipped";

/// One optimizer run and its certificate. Runs that errored carry
/// `termination = "error"`, NaN numerics and verdict `failed`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run_id: usize,
    pub arm: String,
    pub lambda_index: usize,
    pub lambda: f64,
    pub seed: u64,
    pub termination: String,
    pub iterations: usize,
    pub perturbations: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub min_hessian_eig: Option<f64>,
    /// Set when curvature was skipped because the network is not smooth.
    pub nonsmooth: bool,
    pub probe_pass: Option<bool>,
    pub inactivity: Option<f64>,
    pub max_tensor_residual: f64,
    pub max_scaled_residual: f64,
    pub train_error: f64,
    pub oracle_error: f64,
    pub verdict: Verdict,
    pub failing: Vec<String>,
}

impl ReportRow {
    pub fn is_error(&self) -> bool {
        self.termination == "error"
    }

    pub fn preconditions_hold(&self, th: &Thresholds) -> bool {
        self.grad_norm <= th.grad_tol
            && self.min_hessian_eig.is_none_or(|l| l >= -th.hessian_tol)
    }

    /// Converged to a stationary point whose base network misclassifies more
    /// than the oracle allows.
    pub fn is_stuck(&self, th: &Thresholds) -> bool {
        !self.is_error() && self.grad_norm <= th.grad_tol && self.train_error > self.oracle_error
    }

    /// Verdict recomputed from the numeric columns alone.
    pub fn recompute_verdict(&self, th: &Thresholds) -> Verdict {
        if self.is_error() {
            return Verdict::Failed;
        }
        judge(
            self.grad_norm,
            self.min_hessian_eig,
            self.probe_pass,
            self.inactivity,
            self.max_scaled_residual,
            self.train_error,
            self.oracle_error,
            th,
        )
        .0
    }

    fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let eig = match self.min_hessian_eig {
            Some(l) => num(l),
            None if self.nonsmooth => NONSMOOTH.to_string(),
            None => SKIPPED.to_string(),
        };
        let probe = match self.probe_pass {
            Some(b) => b.to_string(),
            None => String::new(),
        };
        [
            self.run_id.to_string(),
            self.arm.clone(),
            self.lambda_index.to_string(),
            num(self.lambda),
            self.seed.to_string(),
            self.termination.clone(),
            self.iterations.to_string(),
            self.perturbations.to_string(),
            num(self.loss),
            num(self.grad_norm),
            eig,
            probe,
            opt(self.inactivity),
            num(self.max_tensor_residual),
            num(self.max_scaled_residual),
            num(self.train_error),
            num(self.oracle_error),
            self.verdict.to_string(),
            self.failing.join(";"),
        ]
        .join(",")
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::with_capacity(256 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

fn parse_verdict(s: &str) -> Option<Verdict> {
    match s {
        "certified-global" => Some(Verdict::CertifiedGlobal),
        "stationary-only" => Some(Verdict::StationaryOnly),
        "failed" => Some(Verdict::Failed),
        _ => None,
    }
}

/// Inverse of [`rows_to_csv`].
pub fn parse_rows(text: &str) -> Result<Vec<ReportRow>, CliError> {
    let mut lines = text.lines();
    let bad = |line: usize, what: &str| CliError::Config {
        path: format!("rows.csv:{line}"),
        message: what.to_string(),
    };
    if lines.next() != Some(HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 19 {
            return Err(bad(ln, "wrong number of fields"));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad number"));
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad(ln, "bad integer"));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { float(s).map(Some) };
        let (min_hessian_eig, nonsmooth) = match f[10] {
            NONSMOOTH => (None, true),
            SKIPPED => (None, false),
            s => (Some(float(s)?), false),
        };
        let probe_pass = match f[11] {
            "" => None,
            "true" => Some(true),
            "false" => Some(false),
            _ => return Err(bad(ln, "bad probe flag")),
        };
        rows.push(ReportRow {
            run_id: int(f[0])? as usize,
            arm: f[1].to_string(),
            lambda_index: int(f[2])? as usize,
            lambda: float(f[3])?,
            seed: int(f[4])?,
            termination: f[5].to_string(),
            iterations: int(f[6])? as usize,
            perturbations: int(f[7])? as usize,
            loss: float(f[8])?,
            grad_norm: float(f[9])?,
            min_hessian_eig,
            nonsmooth,
            probe_pass,
            inactivity: opt(f[12])?,
            max_tensor_residual: float(f[13])?,
            max_scaled_residual: float(f[14])?,
            train_error: float(f[15])?,
            oracle_error: float(f[16])?,
            verdict: parse_verdict(f[17]).ok_or_else(|| bad(ln, "bad verdict"))?,
            failing: if f[18].is_empty() {
                Vec::new()
            } else {
                f[18].split(';').map(str::to_string).collect()
            },
        });
    }
    Ok(rows)
}

/// Aggregates over the rows of one (arm, λ) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub arm: String,
    pub lambda: f64,
    pub runs: usize,
    pub converged: usize,
    pub errors: usize,
    pub certified_global: usize,
    pub stationary_only: usize,
    pub failed: usize,
    pub train_error_positive: usize,
    pub stuck: usize,
    /// Mean inactivity magnitude over converged runs.
    pub mean_inactivity: Option<f64>,
}

impl CellSummary {
    pub fn fraction(&self, count: usize) -> f64 {
        count as f64 / self.runs as f64
    }
}

/// Cells in order of first appearance.
pub fn summarize(rows: &[ReportRow], th: &Thresholds) -> Vec<CellSummary> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut cells: BTreeMap<(String, usize), CellSummary> = BTreeMap::new();
    let mut inact: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = (r.arm.clone(), r.lambda_index);
        let cell = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            CellSummary {
                arm: r.arm.clone(),
                lambda: r.lambda,
                runs: 0,
                converged: 0,
                errors: 0,
                certified_global: 0,
                stationary_only: 0,
                failed: 0,
                train_error_positive: 0,
                stuck: 0,
                mean_inactivity: None,
            }
        });
        cell.runs += 1;
        if r.is_error() {
            cell.errors += 1;
        }
        if r.termination == "converged" {
            cell.converged += 1;
            if let Some(a) = r.inactivity {
                inact.entry(key.clone()).or_default().push(a);
            }
        }
        match r.verdict {
            Verdict::CertifiedGlobal => cell.certified_global += 1,
            Verdict::StationaryOnly => cell.stationary_only += 1,
            Verdict::Failed => cell.failed += 1,
        }
        if !r.is_error() && r.train_error > 0.0 {
            cell.train_error_positive += 1;
        }
        if r.is_stuck(th) {
            cell.stuck += 1;
        }
    }
    for (key, v) in inact {
        if let Some(c) = cells.get_mut(&key) {
            c.mean_inactivity = Some(v.iter().sum::<f64>() / v.len() as f64);
        }
    }
    order.into_iter().map(|k| cells.remove(&k).expect("cell recorded")).collect()
}

fn table(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, header.to_vec());
    for row in body {
        line(&mut out, row.iter().map(String::as_str).collect());
    }
    out
}

/// Aligned summary table, plus a stuck-fraction comparison when there are
/// two arms.
pub fn summary_text(cells: &[CellSummary]) -> String {
    let header = [
        "arm",
        "lambda",
        "runs",
        "converged",
        "errors",
        "frac_certified_global",
        "frac_stationary_only",
        "frac_failed",
        "frac_train_error_gt_0",
        "frac_stuck",
        "mean_inactivity_converged",
    ];
    let body: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.arm.clone(),
                num(c.lambda),
                c.runs.to_string(),
                c.converged.to_string(),
                c.errors.to_string(),
                num(c.fraction(c.certified_global)),
                num(c.fraction(c.stationary_only)),
                num(c.fraction(c.failed)),
                num(c.fraction(c.train_error_positive)),
                num(c.fraction(c.stuck)),
                c.mean_inactivity.map(num).unwrap_or_else(|| "-".to_string()),
            ]
        })
        .collect();
    let mut out = table(&header, &body);

    let mut arms: Vec<&str> = Vec::new();
    for c in cells {
        if !arms.contains(&c.arm.as_str()) {
            arms.push(&c.arm);
        }
    }
    if arms.len() == 2 {
        let mut lambdas: Vec<f64> = Vec::new();
        for c in cells {
            if !lambdas.contains(&c.lambda) {
                lambdas.push(c.lambda);
            }
        }
        let stuck = |arm: &str, l: f64| {
            cells
                .iter()
                .find(|c| c.arm == arm && c.lambda == l)
                .map(|c| num(c.fraction(c.stuck)))
                .unwrap_or_else(|| "-".to_string())
        };
        let h0 = format!("stuck[{}]", arms[0]);
        let h1 = format!("stuck[{}]", arms[1]);
        let body: Vec<Vec<String>> = lambdas
            .iter()
            .map(|&l| vec![num(l), stuck(arms[0], l), stuck(arms[1], l)])
            .collect();
        out.push('\n');
        out.push_str(&table(&["lambda", &h0, &h1], &body));
    }
    let _ = writeln!(out);
    out
}
