//! Deterministic gradient descent with Armijo backtracking and
//! negative-curvature escapes.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::AugmentedModel;
use crate::autodiff::{dense_hessian, value, value_and_grad, Gradient, Objective, DENSE_HESSIAN_LIMIT};
use crate::error::{LabError, Result};
use crate::network::ParamVector;

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;
const NOISE_ULPS: f64 = 64.0;
/// Largest loss increase ever accepted.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Armijo's condition under a quadratic model of the line: the slope at the
/// trial point must satisfy `φ'(t) ≤ (2c − 1) φ'(0)`.
fn slope_armijo(g0: &[f64], gt: &[f64], gn2: f64) -> bool {
    let dot: f64 = g0.iter().zip(gt).map(|(a, b)| a * b).sum();
    -dot <= (1.0 - 2.0 * ARMIJO_C) * gn2
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub init_scale: f64,
    /// Length of the move along a negative-curvature direction.
    pub perturb_radius: f64,
    /// Maximum number of negative-curvature escapes per run.
    pub max_perturbations: usize,
    /// Eigenvalues below `−curvature_tol` count as negative curvature.
    pub curvature_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 20_000,
            grad_tol: 1e-8,
            init_scale: 0.01,
            perturb_radius: 1e-3,
            max_perturbations: 10,
            curvature_tol: 1e-4,
            initial_step: 1e-2,
            max_step: 1e10,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("init_scale", self.init_scale),
            ("perturb_radius", self.perturb_radius),
            ("curvature_tol", self.curvature_tol),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(LabError::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Termination {
    Converged,
    MaxIters,
    Overflow,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::Overflow => "overflow",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub params: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    /// Smallest Hessian eigenvalue at the final point when it was computed.
    pub min_hessian_eig: Option<f64>,
    pub iterations: usize,
    pub perturbations: usize,
    pub termination: Termination,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Uniform(−scale, scale) entries, base parameters first so that models
/// sharing a base network and seed share `θ`. Weights leaving special
/// neurons start at exactly zero.
pub fn random_init(model: &AugmentedModel, scale: f64, seed: u64) -> Result<ParamVector> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(LabError::invalid("init scale must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..model.spec().param_count())
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    let mut values = model.embed_base(&base)?;
    let (feed, _exit) = model.special_indices();
    for i in feed {
        values[i] = rng.gen_range(-scale..scale);
    }
    ParamVector::from_flat(model.layout(), values)
}

fn curvature<O: Objective>(obj: &O, x: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
    if !obj.is_smooth() || x.len() > DENSE_HESSIAN_LIMIT {
        return Ok(None);
    }
    Ok(Some(dense_hessian(obj, x)?.min_eigen()))
}

enum Eval {
    Ok(f64, Gradient),
    Overflow,
}

fn evaluate<O: Objective>(obj: &O, x: &[f64]) -> Result<Eval> {
    match value_and_grad(obj, x) {
        Ok((f, g)) if f.is_finite() && g.values.iter().all(|v| v.is_finite()) => Ok(Eval::Ok(f, g)),
        Ok(_) => Ok(Eval::Overflow),
        Err(e) if e.is_overflow() => Ok(Eval::Overflow),
        Err(e) => Err(e),
    }
}

/// Gradient descent from `init`. Accepted steps satisfy the Armijo
/// condition, so the loss never increases between accepted iterates.
pub fn minimize<O: Objective>(obj: &O, init: &[f64], cfg: &OptimizerConfig) -> Result<RunResult> {
    cfg.validate()?;
    if init.len() != obj.n_params() {
        return Err(LabError::DimensionMismatch {
            what: "initial parameters",
            expected: obj.n_params(),
            got: init.len(),
        });
    }
    let mut x = init.to_vec();
    let mut result = RunResult {
        seed: cfg.seed,
        params: Vec::new(),
        loss: f64::NAN,
        grad_norm: f64::NAN,
        min_hessian_eig: None,
        iterations: 0,
        perturbations: 0,
        termination: Termination::Overflow,
    };
    let (mut f, mut g) = match evaluate(obj, &x)? {
        Eval::Ok(f, g) => (f, g),
        Eval::Overflow => {
            result.params = x;
            return Ok(result);
        }
    };
    let mut step = cfg.initial_step;
    // Loss just before the most recent escape; convergence must beat it.
    let mut escape_floor = f64::INFINITY;
    let mut eig_cache: Option<(usize, f64)> = None;

    let finish = |x: Vec<f64>, f: f64, gn: f64, eig: Option<f64>, iters, perturbs, term| RunResult {
        seed: cfg.seed,
        params: x,
        loss: f,
        grad_norm: gn,
        min_hessian_eig: eig,
        iterations: iters,
        perturbations: perturbs,
        termination: term,
    };

    let mut iter = 0;
    loop {
        let gn = g.norm();
        if gn < 10.0 * cfg.grad_tol {
            let recheck = match eig_cache {
                Some((at, _)) => gn <= cfg.grad_tol || iter >= at + 100,
                None => true,
            };
            let eig = if recheck {
                let c = curvature(obj, &x)?;
                if let Some((lambda, dir)) = &c {
                    eig_cache = Some((iter, *lambda));
                    if *lambda < -cfg.curvature_tol {
                        if result.perturbations >= cfg.max_perturbations {
                            return Ok(finish(x, f, gn, Some(*lambda), iter, result.perturbations, Termination::MaxIters));
                        }
                        let mut best: Option<(f64, Vec<f64>, Gradient)> = None;
                        for sign in [1.0, -1.0] {
                            let trial: Vec<f64> = x
                                .iter()
                                .zip(dir)
                                .map(|(a, d)| a + sign * cfg.perturb_radius * d)
                                .collect();
                            if let Eval::Ok(ft, gt) = evaluate(obj, &trial)? {
                                if best.as_ref().is_none_or(|(fb, _, _)| ft < *fb) {
                                    best = Some((ft, trial, gt));
                                }
                            }
                        }
                        if let Some((ft, xt, gt)) = best {
                            result.perturbations += 1;
                            escape_floor = f;
                            x = xt;
                            f = ft;
                            g = gt;
                            eig_cache = None;
                            step = cfg.initial_step;
                            continue;
                        }
                    }
                }
                c.map(|(l, _)| l)
            } else {
                eig_cache.map(|(_, l)| l)
            };
            if gn <= cfg.grad_tol {
                let curvature_ok = eig.is_none_or(|l| l >= -cfg.curvature_tol);
                let smooth_needs_eig = obj.is_smooth() && x.len() <= DENSE_HESSIAN_LIMIT;
                if curvature_ok && (!smooth_needs_eig || eig.is_some()) && f < escape_floor {
                    return Ok(finish(x, f, gn, eig, iter, result.perturbations, Termination::Converged));
                }
            }
        }
        if iter >= cfg.max_iters {
            let eig = eig_cache.filter(|(at, _)| *at == iter).map(|(_, l)| l);
            return Ok(finish(x, f, gn, eig, iter, result.perturbations, Termination::MaxIters));
        }
        iter += 1;

        let gn2 = gn * gn;
        let noise = (NOISE_ULPS * f64::EPSILON * f.abs()).min(MONOTONE_SLACK);
        let first = (2.0 * step).min(cfg.max_step);
        let mut t = first;
        let mut saw_overflow = false;
        let mut accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&g.values).map(|(a, b)| a - t * b).collect();
            match evaluate(obj, &trial)? {
                Eval::Ok(ft, gt) if ft <= f - ARMIJO_C * t * gn2 => break Some((t, trial, ft, gt)),
                // Below rounding resolution of the loss, judge the step by the
                // slope at the trial point instead.
                Eval::Ok(ft, gt) if ft <= f + noise && slope_armijo(&g.values, &gt.values, gn2) => {
                    break Some((t, trial, ft, gt))
                }
                Eval::Ok(..) => {}
                Eval::Overflow => saw_overflow = true,
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        if let Some((t0, ..)) = &accepted {
            if *t0 == first {
                // The first trial was accepted: keep doubling while the loss keeps falling.
                let mut t = 2.0 * t0;
                while t <= cfg.max_step {
                    let trial: Vec<f64> = x.iter().zip(&g.values).map(|(a, b)| a - t * b).collect();
                    match evaluate(obj, &trial)? {
                        Eval::Ok(ft, gt) if ft < accepted.as_ref().map_or(f, |a| a.2) => {
                            accepted = Some((t, trial, ft, gt));
                        }
                        _ => break,
                    }
                    t *= 2.0;
                }
            }
        }
        match accepted {
            Some((t, xt, ft, gt)) => {
                step = t;
                x = xt;
                f = ft;
                g = gt;
            }
            None => {
                let term = if saw_overflow { Termination::Overflow } else { Termination::MaxIters };
                let eig = eig_cache.map(|(_, l)| l);
                return Ok(finish(x, f, gn, eig, iter, result.perturbations, term));
            }
        }
    }
}

/// One [`minimize`] per seed `cfg.seed + i`, in seed order.
pub fn multi_start<O: Objective>(
    obj: &O,
    model: &AugmentedModel,
    n_seeds: usize,
    cfg: &OptimizerConfig,
) -> Result<Vec<RunResult>> {
    if n_seeds == 0 {
        return Err(LabError::invalid("seed count must be at least 1"));
    }
    if model.n_params() != obj.n_params() {
        return Err(LabError::LayoutMismatch(format!(
            "model has {} parameters, objective {}",
            model.n_params(),
            obj.n_params()
        )));
    }
    (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed + i;
            let run_cfg = OptimizerConfig { seed, ..cfg.clone() };
            let init = random_init(model, cfg.init_scale, seed)?;
            minimize(obj, init.as_slice(), &run_cfg)
        })
        .collect()
}

/// Loss at `params`, or `None` when it overflows.
pub fn try_value<O: Objective>(obj: &O, params: &[f64]) -> Result<Option<f64>> {
    match value(obj, params) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_overflow() => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{AugmentedLoss, Augmentation};
    use crate::autodiff::Real;
    use crate::datasets::gen_xor;
    use crate::loss::{EmpiricalLossConfig, HingeLoss};
    use crate::network::{Activation, NetworkSpec};

    struct Quadratic;
    impl Objective for Quadratic {
        fn n_params(&self) -> usize {
            1
        }
        fn eval<S: Real>(&self, p: &[S]) -> Result<S> {
            Ok((p[0].clone() - 3.0).powi(2))
        }
    }

    /// `x² − y² + y⁴/4`: saddle at the origin, minima at `y = ±√2`.
    struct Saddle;
    impl Objective for Saddle {
        fn n_params(&self) -> usize {
            2
        }
        fn eval<S: Real>(&self, p: &[S]) -> Result<S> {
            let (x, y) = (p[0].clone(), p[1].clone());
            Ok(x.powi(2) - y.powi(2) + y.powi(4) * 0.25)
        }
    }

    struct Overflowing;
    impl Objective for Overflowing {
        fn n_params(&self) -> usize {
            1
        }
        fn eval<S: Real>(&self, p: &[S]) -> Result<S> {
            Ok(p[0].guarded_exp()? * -1.0)
        }
    }

    fn xor_objective(lambda: f64) -> (AugmentedModel, EmpiricalLossConfig, NetworkSpec) {
        let spec = NetworkSpec::new(2, vec![2], Activation::Tanh).unwrap();
        let cfg = EmpiricalLossConfig::new(HingeLoss::default(), lambda, Augmentation::SkipExp).unwrap();
        (AugmentedModel::new(spec.clone(), Augmentation::SkipExp).unwrap(), cfg, spec)
    }

    #[test]
    fn quadratic_converges() {
        let r = minimize(&Quadratic, &[0.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!((r.params[0] - 3.0).abs() < 1e-6);
        assert!(r.grad_norm <= 1e-8);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let r = minimize(&Quadratic, &[3.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::Converged);
    }

    #[test]
    fn escapes_strict_saddle() {
        let r = minimize(&Saddle, &[0.0, 0.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.perturbations >= 1);
        assert!((r.params[1].abs() - 2f64.sqrt()).abs() < 1e-6);
        assert!(r.loss < 0.0);
    }

    #[test]
    fn overflow_is_reported() {
        let r = minimize(&Overflowing, &[39.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Overflow);
        assert!(r.params[0] <= 40.0);
        let r = minimize(&Overflowing, &[41.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::Overflow);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn random_init_contract() {
        let (model, _, spec) = xor_objective(0.1);
        let a = random_init(&model, 0.01, 7).unwrap();
        let b = random_init(&model, 0.01, 7).unwrap();
        let c = random_init(&model, 0.01, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.as_slice()[spec.param_count()], 0.0);
        assert!(a.as_slice().iter().all(|v| v.abs() < 0.01));
        let tiny = random_init(&model, 1e-300, 3).unwrap();
        assert!(tiny.as_slice().iter().all(|v| v.abs() <= 1e-300));
        assert!(random_init(&model, 0.0, 3).is_err());
        let plain = AugmentedModel::new(spec.clone(), Augmentation::None).unwrap();
        let p = random_init(&plain, 0.01, 7).unwrap();
        assert_eq!(p.as_slice(), &a.as_slice()[..spec.param_count()]);
        let per = AugmentedModel::new(spec, Augmentation::PerLayerExp).unwrap();
        let q = random_init(&per, 0.01, 7).unwrap();
        assert_eq!(per.base_params(q.as_slice()).unwrap(), p.as_slice());
        for i in per.exp_exit_rows().into_iter().flatten() {
            assert_eq!(q.as_slice()[i], 0.0);
        }
    }

    #[test]
    fn descent_is_monotone_and_deterministic() {
        let ds = gen_xor();
        let (model, cfg, spec) = xor_objective(0.1);
        let obj = AugmentedLoss::new(&ds, spec, cfg).unwrap();
        let init = random_init(&model, 0.5, 3).unwrap();
        let mut prev = f64::INFINITY;
        for iters in [1, 2, 5, 10, 50, 200] {
            let c = OptimizerConfig { max_iters: iters, max_perturbations: 0, ..Default::default() };
            let r = minimize(&obj, init.as_slice(), &c).unwrap();
            assert!(r.loss <= prev + 1e-12);
            prev = r.loss;
            assert_eq!(r, minimize(&obj, init.as_slice(), &c).unwrap());
        }
    }

    #[test]
    fn multi_start_matches_sequential_runs() {
        let ds = gen_xor();
        let (model, cfg, spec) = xor_objective(0.1);
        let obj = AugmentedLoss::new(&ds, spec, cfg).unwrap();
        let oc = OptimizerConfig { max_iters: 300, seed: 5, ..Default::default() };
        let runs = multi_start(&obj, &model, 3, &oc).unwrap();
        assert_eq!(runs.len(), 3);
        for (i, r) in runs.iter().enumerate() {
            let seed = 5 + i as u64;
            assert_eq!(r.seed, seed);
            let init = random_init(&model, oc.init_scale, seed).unwrap();
            let single = minimize(&obj, init.as_slice(), &OptimizerConfig { seed, ..oc.clone() }).unwrap();
            assert_eq!(r, &single);
        }
        assert!(multi_start(&obj, &model, 0, &oc).is_err());
    }
}
