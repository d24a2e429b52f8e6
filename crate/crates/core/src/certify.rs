//! Numerical certificates for candidate minima: special-neuron inactivity,
//! vanishing weighted moment tensors, training error against the best
//! achievable error, and sampled higher-order stationarity.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{AugmentedLoss, AugmentedModel, Augmentation};
use crate::autodiff::{dense_hessian, grad, Objective, DENSE_HESSIAN_LIMIT};
use crate::datasets::Dataset;
use crate::error::{LabError, Result};
use crate::loss::{misclassification_rate, EmpiricalLossConfig, HingeLoss};
use crate::network::forward_batch;
use crate::optimize::RunResult;
use crate::tensor::{lift, sym_max, WeightedPointTensor, DEFAULT_RESTARTS};

pub const PROBE_MAGNITUDES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Thresholds {
    pub grad_tol: f64,
    pub hessian_tol: f64,
    pub inactivity_tol: f64,
    /// Relative factor of the scaled tensor tolerance.
    pub tensor_rel_tol: f64,
    pub max_order: u32,
    pub restarts: usize,
    pub probe_c: f64,
    pub probe_radius: f64,
    pub probe_dirs: usize,
    pub probe_seed: u64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            grad_tol: 1e-8,
            hessian_tol: 1e-4,
            inactivity_tol: 1e-3,
            tensor_rel_tol: 1e-4,
            max_order: 4,
            restarts: DEFAULT_RESTARTS,
            probe_c: 10.0,
            probe_radius: 1e-2,
            probe_dirs: 32,
            probe_seed: 0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grad_tol", self.grad_tol),
            ("hessian_tol", self.hessian_tol),
            ("inactivity_tol", self.inactivity_tol),
            ("tensor_rel_tol", self.tensor_rel_tol),
            ("probe_c", self.probe_c),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.probe_radius > 0.0 && self.probe_radius < 1.0) {
            return Err(LabError::invalid("probe_radius must be in (0, 1)"));
        }
        if self.restarts == 0 || self.probe_dirs == 0 {
            return Err(LabError::invalid("restarts and probe_dirs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    CertifiedGlobal,
    StationaryOnly,
    Failed,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::CertifiedGlobal => "certified-global",
            Verdict::StationaryOnly => "stationary-only",
            Verdict::Failed => "failed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InactivityReport {
    /// `|a|` in skip modes, the largest exponential-exit weight magnitude in
    /// per-layer mode.
    pub magnitude: f64,
    pub pass: bool,
}

pub fn inactivity_check(model: &AugmentedModel, params: &[f64], tol: f64) -> Result<InactivityReport> {
    if params.len() != model.n_params() {
        return Err(LabError::LayoutMismatch(format!(
            "{} model expects {} parameters, got {}",
            model.mode(),
            model.n_params(),
            params.len()
        )));
    }
    let (_, exit) = model.special_indices();
    if exit.is_empty() {
        return Err(LabError::LayoutMismatch(format!(
            "{} model has no special neuron",
            model.mode()
        )));
    }
    let magnitude = exit.iter().map(|&i| params[i].abs()).fold(0.0, f64::max);
    Ok(InactivityReport {
        magnitude,
        pass: magnitude <= tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TensorResidual {
    pub order: u32,
    pub value: f64,
    pub tolerance: f64,
}

impl TensorResidual {
    pub fn pass(&self) -> bool {
        self.value <= self.tolerance
    }

    /// `value / tolerance`, zero when both vanish.
    pub fn scaled(&self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            self.value / self.tolerance
        }
    }
}

/// `sym_max` of `Σ c_i x_i^{⊗p}` for `p = 0..=max_order`.
pub fn tensor_residuals(
    coeffs: &[f64],
    points: &[Vec<f64>],
    max_order: u32,
    rel_tol: f64,
    restarts: usize,
) -> Result<Vec<TensorResidual>> {
    (0..=max_order)
        .map(|p| {
            let t = WeightedPointTensor::new(p, coeffs.to_vec(), points.to_vec())?;
            Ok(TensorResidual {
                order: p,
                value: sym_max(&t, restarts).0,
                tolerance: t.scaled_tolerance(rel_tol),
            })
        })
        .collect()
}

/// `c_i = ℓ'(−y_i·score_i)·y_i·exp(wᵀx_i + b)`.
pub fn exponential_moment_weights(
    dataset: &Dataset,
    base_scores: &[f64],
    w: &[f64],
    b: f64,
    loss: &HingeLoss,
) -> Result<Vec<f64>> {
    if base_scores.len() != dataset.len() {
        return Err(LabError::DimensionMismatch {
            what: "scores",
            expected: dataset.len(),
            got: base_scores.len(),
        });
    }
    if w.len() != dataset.dim() {
        return Err(LabError::DimensionMismatch {
            what: "special neuron weights",
            expected: dataset.dim(),
            got: w.len(),
        });
    }
    let mut out = Vec::with_capacity(dataset.len());
    for (i, ((x, &y), &s)) in dataset.features().iter().zip(dataset.labels()).zip(base_scores).enumerate() {
        let d = loss.grad(-y * s);
        if d == 0.0 {
            out.push(0.0);
            continue;
        }
        let z = b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        if !(z.abs() <= crate::error::EXP_GUARD) {
            return Err(LabError::ExpOverflow {
                exponent: z,
                sample: Some(i),
            });
        }
        out.push(d * y * z.exp());
    }
    Ok(out)
}

/// Residuals of the exponentially weighted moment tensors, orders `0..=P`.
pub fn moment_residuals(
    dataset: &Dataset,
    base_scores: &[f64],
    w: &[f64],
    b: f64,
    max_order: u32,
    loss: &HingeLoss,
) -> Result<Vec<f64>> {
    let c = exponential_moment_weights(dataset, base_scores, w, b, loss)?;
    Ok(tensor_residuals(&c, dataset.features(), max_order, 1.0, DEFAULT_RESTARTS)?
        .into_iter()
        .map(|r| r.value)
        .collect())
}

/// Smallest misclassification rate any classifier can reach: samples with
/// identical features must share a prediction, so each group contributes
/// its minority count.
pub fn majority_vote_oracle(dataset: &Dataset) -> f64 {
    let mut groups: HashMap<Vec<u64>, (usize, usize)> = HashMap::new();
    for (x, &y) in dataset.features().iter().zip(dataset.labels()) {
        let key = x.iter().map(|v| (v + 0.0).to_bits()).collect();
        let e = groups.entry(key).or_default();
        if y > 0.0 {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let minority: usize = groups.values().map(|&(p, n)| p.min(n)).sum();
    minority as f64 / dataset.len() as f64
}

/// Outcome of sampling `L(θ + δ) ≥ L(θ) − C‖δ‖^{k+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StationarityOrder {
    pub k: u32,
    pub c: f64,
    pub radius: f64,
    pub probes: usize,
    /// Largest `L(θ) − C‖δ‖^{k+1} − L(θ + δ)` seen; positive means a violation.
    pub worst_violation: f64,
    pub pass: bool,
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Probes `n_dirs` random unit directions at 8 magnitudes log-spaced from
/// `radius` down to `radius·1e−4`. Points where the loss overflows count as
/// satisfying the inequality.
pub fn kth_order_probe<O: Objective>(
    obj: &O,
    params: &[f64],
    k: u32,
    c: f64,
    radius: f64,
    n_dirs: usize,
    seed: u64,
) -> Result<StationarityOrder> {
    if k == 0 {
        return Err(LabError::invalid("probe order must be at least 1"));
    }
    if !(radius > 0.0 && radius < 1.0) {
        return Err(LabError::invalid("probe radius must be in (0, 1)"));
    }
    if n_dirs == 0 {
        return Err(LabError::invalid("probe needs at least one direction"));
    }
    let base = crate::autodiff::value(obj, params)?;
    let slack = 1e-13 * base.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_dirs {
        let dir = unit_direction(&mut rng, params.len());
        for j in 0..PROBE_MAGNITUDES {
            let t = radius * 10f64.powf(-4.0 * j as f64 / (PROBE_MAGNITUDES - 1) as f64);
            let trial: Vec<f64> = params.iter().zip(&dir).map(|(p, d)| p + t * d).collect();
            let Some(v) = crate::optimize::try_value(obj, &trial)? else {
                continue;
            };
            let violation = base - c * t.powi(k as i32 + 1) - v;
            worst = worst.max(violation);
        }
    }
    Ok(StationarityOrder {
        k,
        c,
        radius,
        probes: n_dirs * PROBE_MAGNITUDES,
        worst_violation: worst,
        pass: worst <= slack,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub grad_norm: f64,
    /// `None` when curvature was not computed (nonsmooth activation or too
    /// many parameters).
    pub min_hessian_eig: Option<f64>,
    /// First-order probe, used in place of curvature for nonsmooth networks.
    pub probe: Option<StationarityOrder>,
    /// `None` for unaugmented models.
    pub inactivity: Option<f64>,
    pub tensor_residuals: Vec<TensorResidual>,
    pub train_error: f64,
    pub oracle_error: f64,
    pub verdict: Verdict,
    /// Names of the checks that failed.
    pub failing: Vec<&'static str>,
}

impl Certificate {
    pub fn max_tensor_residual(&self) -> f64 {
        self.tensor_residuals.iter().map(|r| r.value).fold(0.0, f64::max)
    }

    pub fn max_scaled_residual(&self) -> f64 {
        self.tensor_residuals.iter().map(TensorResidual::scaled).fold(0.0, f64::max)
    }

    /// grad norm within tolerance and no negative curvature beyond it.
    pub fn preconditions_hold(&self, th: &Thresholds) -> bool {
        self.grad_norm <= th.grad_tol && self.min_hessian_eig.is_none_or(|l| l >= -th.hessian_tol)
    }
}

/// Verdict and failing fields from the certificate's numeric content.
pub fn judge(
    grad_norm: f64,
    min_hessian_eig: Option<f64>,
    probe_pass: Option<bool>,
    inactivity: Option<f64>,
    max_scaled_residual: f64,
    train_error: f64,
    oracle_error: f64,
    th: &Thresholds,
) -> (Verdict, Vec<&'static str>) {
    let mut hard = Vec::new();
    if !(grad_norm <= th.grad_tol) {
        hard.push("grad_norm");
    }
    if let Some(l) = min_hessian_eig {
        if !(l >= -th.hessian_tol) {
            hard.push("min_hessian_eig");
        }
    }
    if probe_pass == Some(false) {
        hard.push("probe");
    }
    if let Some(a) = inactivity {
        if !(a <= th.inactivity_tol) {
            hard.push("inactivity");
        }
    }
    let mut soft = Vec::new();
    if !(max_scaled_residual <= 1.0) {
        soft.push("tensor_residuals");
    }
    if train_error != oracle_error {
        soft.push("train_error");
    }
    let verdict = if !hard.is_empty() {
        Verdict::Failed
    } else if !soft.is_empty() {
        Verdict::StationaryOnly
    } else {
        Verdict::CertifiedGlobal
    };
    hard.extend(soft);
    (verdict, hard)
}

/// Moment weights and points certified for `model`: exponential weights on
/// raw points for the skip exponential neuron, `ℓ'(−y_i f̃(x_i))·y_i` on
/// lifted points `(x_i, 1)` otherwise.
fn moment_inputs(
    dataset: &Dataset,
    model: &AugmentedModel,
    params: &[f64],
    base_scores: &[f64],
    loss: &HingeLoss,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if model.mode() == Augmentation::SkipExp {
        let skip = model.skip_parts(params)?.expect("skip mode has skip parts");
        let c = exponential_moment_weights(dataset, base_scores, &skip.w, skip.b, loss)?;
        return Ok((c, dataset.features().to_vec()));
    }
    let mut c = Vec::with_capacity(dataset.len());
    for (i, (x, &y)) in dataset.features().iter().zip(dataset.labels()).enumerate() {
        let s = model.score(params, x).map_err(|e| e.at_sample(i))?;
        c.push(loss.grad(-y * s) * y);
    }
    Ok((c, lift(dataset.features())))
}

/// Assembles every check for the final point of `run`.
pub fn full_certificate(
    dataset: &Dataset,
    model: &AugmentedModel,
    cfg: &EmpiricalLossConfig,
    run: &RunResult,
    th: &Thresholds,
) -> Result<Certificate> {
    th.validate()?;
    if cfg.augmentation != model.mode() {
        return Err(LabError::LayoutMismatch(format!(
            "loss configured for {}, model is {}",
            cfg.augmentation,
            model.mode()
        )));
    }
    let params = &run.params;
    let obj = AugmentedLoss::new(dataset, model.spec().clone(), *cfg)?;
    let grad_norm = grad(&obj, params)?.norm();
    let smooth = obj.is_smooth();
    let min_hessian_eig = if smooth && params.len() <= DENSE_HESSIAN_LIMIT {
        Some(dense_hessian(&obj, params)?.min_eigenvalue())
    } else {
        None
    };
    let probe = if smooth {
        None
    } else {
        Some(kth_order_probe(
            &obj,
            params,
            1,
            th.probe_c,
            th.probe_radius,
            th.probe_dirs,
            th.probe_seed,
        )?)
    };
    let inactivity = match model.mode() {
        Augmentation::None => None,
        _ => Some(inactivity_check(model, params, th.inactivity_tol)?.magnitude),
    };
    let base = model.base_params(params)?;
    let base_scores = forward_batch(model.spec(), &base, dataset.features())?;
    let (c, points) = moment_inputs(dataset, model, params, &base_scores, &cfg.base_loss)?;
    let tensor_residuals = tensor_residuals(&c, &points, th.max_order, th.tensor_rel_tol, th.restarts)?;
    let train_error = misclassification_rate(&base_scores, dataset.labels())?;
    let oracle_error = majority_vote_oracle(dataset);
    let max_scaled = tensor_residuals.iter().map(TensorResidual::scaled).fold(0.0, f64::max);
    let (verdict, failing) = judge(
        grad_norm,
        min_hessian_eig,
        probe.as_ref().map(|p| p.pass),
        inactivity,
        max_scaled,
        train_error,
        oracle_error,
        th,
    );
    Ok(Certificate {
        grad_norm,
        min_hessian_eig,
        probe,
        inactivity,
        tensor_residuals,
        train_error,
        oracle_error,
        verdict,
        failing,
    })
}
