//! Exact first and second derivatives of scalar objectives over a flat
//! parameter vector.
//!
//! Objectives implement [`Objective::eval`] generically over [`Real`]. The
//! gradient comes from one reverse sweep over a `Var<f64>` tape; a
//! Hessian-vector product comes from the same sweep over `Var<Dual>`, with the
//! direction seeded into the dual parts (forward-over-reverse). The
//! finite-difference routines at the bottom only ever evaluate the objective
//! at `f64` and serve as independent oracles.

mod real;
mod tape;

pub use real::{Dual, Real};
pub use tape::{Tape, Var};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LabError, Result};

/// Largest parameter count for which a dense Hessian is formed.
pub const DENSE_HESSIAN_LIMIT: usize = 600;

/// A scalar function of a flat parameter vector.
pub trait Objective: Sync {
    fn n_params(&self) -> usize;

    fn eval<S: Real>(&self, params: &[S]) -> Result<S>;

    /// False when the objective contains kinks (relu-type activations), in
    /// which case curvature-based claims are not made.
    fn is_smooth(&self) -> bool {
        true
    }
}

impl<O: Objective> Objective for &O {
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn eval<S: Real>(&self, params: &[S]) -> Result<S> {
        (**self).eval(params)
    }
    fn is_smooth(&self) -> bool {
        (**self).is_smooth()
    }
}

/// Gradient aligned with the parameter vector it was taken at.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_len(obj: &impl Objective, params: &[f64]) -> Result<()> {
    if params.len() != obj.n_params() {
        return Err(LabError::DimensionMismatch {
            what: "parameter vector",
            expected: obj.n_params(),
            got: params.len(),
        });
    }
    Ok(())
}

pub fn value<O: Objective>(obj: &O, params: &[f64]) -> Result<f64> {
    check_len(obj, params)?;
    obj.eval(params)
}

/// Loss value and reverse-mode gradient.
pub fn value_and_grad<O: Objective>(obj: &O, params: &[f64]) -> Result<(f64, Gradient)> {
    check_len(obj, params)?;
    let tape = Tape::with_capacity(params.len() * 8);
    let vars: Vec<Var<f64>> = params.iter().map(|&p| tape.var(p)).collect();
    let out = obj.eval(&vars)?;
    let values = tape.adjoints(&out, vars.len());
    Ok((*out.inner(), Gradient { values }))
}

pub fn grad<O: Objective>(obj: &O, params: &[f64]) -> Result<Gradient> {
    value_and_grad(obj, params).map(|(_, g)| g)
}

/// Hessian-vector product `H(params) · direction`.
pub fn hvp<O: Objective>(obj: &O, params: &[f64], direction: &[f64]) -> Result<Vec<f64>> {
    check_len(obj, params)?;
    if direction.len() != params.len() {
        return Err(LabError::DimensionMismatch {
            what: "hvp direction",
            expected: params.len(),
            got: direction.len(),
        });
    }
    let tape = Tape::with_capacity(params.len() * 8);
    let vars: Vec<Var<Dual>> = params
        .iter()
        .zip(direction)
        .map(|(&p, &v)| tape.var(Dual::new(p, v)))
        .collect();
    let out = obj.eval(&vars)?;
    Ok(tape
        .adjoints(&out, vars.len())
        .into_iter()
        .map(|d| d.du)
        .collect())
}

/// Dense symmetric Hessian assembled column by column from exact HVPs.
#[derive(Clone, Debug)]
pub struct DenseHessian {
    pub matrix: DMatrix<f64>,
    /// max |H_ij − H_ji| before symmetrization.
    pub asymmetry: f64,
}

impl DenseHessian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Smallest eigenvalue and a unit eigenvector for it.
    pub fn min_eigen(&self) -> (f64, Vec<f64>) {
        if self.dim() == 0 {
            return (0.0, Vec::new());
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        let (idx, &val) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        (val, eig.eigenvectors.column(idx).iter().copied().collect())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigen().0
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * nalgebra::DVector::from_column_slice(v))
            .iter()
            .copied()
            .collect()
    }
}

pub fn dense_hessian<O: Objective>(obj: &O, params: &[f64]) -> Result<DenseHessian> {
    let n = params.len();
    if n > DENSE_HESSIAN_LIMIT {
        return Err(LabError::TooLarge(format!(
            "dense Hessian needs at most {DENSE_HESSIAN_LIMIT} parameters, got {n}"
        )));
    }
    let mut raw = DMatrix::zeros(n, n);
    let mut basis = vec![0.0; n];
    for j in 0..n {
        basis[j] = 1.0;
        let col = hvp(obj, params, &basis)?;
        basis[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            raw[(i, j)] = v;
        }
    }
    let mut asymmetry: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asymmetry = asymmetry.max((raw[(i, j)] - raw[(j, i)]).abs());
        }
    }
    let matrix = (&raw + raw.transpose()) * 0.5;
    Ok(DenseHessian { matrix, asymmetry })
}

/// Either a materialized Hessian or a matrix-free HVP operator.
pub enum HessianProbe<'a, O: Objective> {
    Dense(DenseHessian),
    Operator { objective: &'a O, params: Vec<f64> },
}

impl<'a, O: Objective> HessianProbe<'a, O> {
    /// Dense when the parameter count allows it, otherwise matrix-free.
    pub fn new(objective: &'a O, params: &[f64]) -> Result<Self> {
        if params.len() <= DENSE_HESSIAN_LIMIT {
            Ok(HessianProbe::Dense(dense_hessian(objective, params)?))
        } else {
            check_len(objective, params)?;
            Ok(HessianProbe::Operator {
                objective,
                params: params.to_vec(),
            })
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            HessianProbe::Dense(h) => Ok(h.apply(v)),
            HessianProbe::Operator { objective, params } => hvp(*objective, params, v),
        }
    }
}

/// Central-difference step used by the oracles: `1e−5 · max(1, |θ_j|)`.
pub fn fd_step(param: f64) -> f64 {
    1e-5 * param.abs().max(1.0)
}

/// Central finite-difference gradient (f64 evaluations only).
pub fn fd_grad<O: Objective>(obj: &O, params: &[f64]) -> Result<Vec<f64>> {
    check_len(obj, params)?;
    let mut x = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for j in 0..params.len() {
        let h = fd_step(params[j]);
        x[j] = params[j] + h;
        let fp = obj.eval(&x)?;
        x[j] = params[j] - h;
        let fm = obj.eval(&x)?;
        x[j] = params[j];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Dense Hessian from central differences of function values. Symmetric by
/// construction; accuracy is roughly `1e−5` relative for well-scaled
/// objectives.
pub fn fd_hessian<O: Objective>(obj: &O, params: &[f64]) -> Result<DMatrix<f64>> {
    check_len(obj, params)?;
    let n = params.len();
    let f0 = obj.eval(params)?;
    let mut x = params.to_vec();
    let mut h = DMatrix::zeros(n, n);
    let steps: Vec<f64> = params.iter().map(|&p| 1e-4 * p.abs().max(1.0)).collect();
    for i in 0..n {
        let hi = steps[i];
        x[i] = params[i] + hi;
        let fp = obj.eval(&x)?;
        x[i] = params[i] - hi;
        let fm = obj.eval(&x)?;
        x[i] = params[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                x[i] = params[i] + si * hi;
                x[j] = params[j] + sj * hj;
                let v = obj.eval(&x);
                x[i] = params[i];
                x[j] = params[j];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                + corner(-1.0, -1.0)?)
                / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// λa²/2 on one coordinate of a vector of length n.
    struct Ridge {
        n: usize,
        slot: usize,
        lambda: f64,
    }

    impl Objective for Ridge {
        fn n_params(&self) -> usize {
            self.n
        }
        fn eval<S: Real>(&self, p: &[S]) -> Result<S> {
            Ok(p[self.slot].clone() * p[self.slot].clone() * (0.5 * self.lambda))
        }
    }

    struct Constant;

    impl Objective for Constant {
        fn n_params(&self) -> usize {
            3
        }
        fn eval<S: Real>(&self, _p: &[S]) -> Result<S> {
            Ok(S::from_f64(4.2))
        }
    }

    /// Smooth non-quadratic test function with cross terms.
    struct Rosenbrockish;

    impl Objective for Rosenbrockish {
        fn n_params(&self) -> usize {
            3
        }
        fn eval<S: Real>(&self, p: &[S]) -> Result<S> {
            let a = p[1].clone() - p[0].clone() * p[0].clone();
            let b = p[2].clone().tanh() * p[0].clone().exp();
            Ok(a.clone() * a * 10.0 + b.clone() * b + (p[0].clone() - 1.0).powi(2))
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let g = grad(&Constant, &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(g.values, vec![0.0; 3]);
    }

    #[test]
    fn ridge_gradient_sits_in_its_slot() {
        let obj = Ridge {
            n: 4,
            slot: 2,
            lambda: 0.3,
        };
        let g = grad(&obj, &[5.0, 6.0, -2.0, 1.0]).unwrap();
        assert_eq!(g.values, vec![0.0, 0.0, -0.6, 0.0]);
    }

    #[test]
    fn hvp_of_ridge_is_lambda_on_its_axis() {
        let obj = Ridge {
            n: 3,
            slot: 1,
            lambda: 0.7,
        };
        let hv = hvp(&obj, &[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(hv, vec![0.0, 0.7, 0.0]);
        let zero = hvp(&obj, &[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(zero, vec![0.0; 3]);
    }

    #[test]
    fn dense_hessian_of_ridge_is_single_diagonal_entry() {
        let obj = Ridge {
            n: 3,
            slot: 0,
            lambda: 2.5,
        };
        let h = dense_hessian(&obj, &[0.1, 0.2, 0.3]).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = 2.5;
        assert_eq!(h.matrix, expected);
        assert_eq!(h.asymmetry, 0.0);
    }

    #[test]
    fn reverse_mode_matches_finite_differences() {
        let p = [0.4, -0.3, 0.8];
        let g = grad(&Rosenbrockish, &p).unwrap();
        let fd = fd_grad(&Rosenbrockish, &p).unwrap();
        for (a, b) in g.values.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn exact_hessian_matches_fd_hessian() {
        let p = [0.4, -0.3, 0.8];
        let h = dense_hessian(&Rosenbrockish, &p).unwrap();
        let fd = fd_hessian(&Rosenbrockish, &p).unwrap();
        assert!((&h.matrix - &fd).amax() < 1e-4);
        assert!(h.asymmetry < 1e-12);
        let v = [0.3, -1.0, 0.5];
        let hv = hvp(&Rosenbrockish, &p, &v).unwrap();
        let dense_hv = h.apply(&v);
        for (a, b) in hv.iter().zip(&dense_hv) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn probe_picks_dense_for_small_problems() {
        let obj = Ridge {
            n: 2,
            slot: 0,
            lambda: 1.0,
        };
        let probe = HessianProbe::new(&obj, &[0.0, 0.0]).unwrap();
        assert!(matches!(probe, HessianProbe::Dense(_)));
        assert_eq!(probe.apply(&[1.0, 1.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn dense_hessian_refuses_large_problems() {
        let obj = Ridge {
            n: DENSE_HESSIAN_LIMIT + 1,
            slot: 0,
            lambda: 1.0,
        };
        let p = vec![0.0; DENSE_HESSIAN_LIMIT + 1];
        assert!(matches!(
            dense_hessian(&obj, &p),
            Err(LabError::TooLarge(_))
        ));
        let probe = HessianProbe::new(&obj, &p).unwrap();
        assert!(matches!(probe, HessianProbe::Operator { .. }));
    }

    #[test]
    fn length_mismatch_is_reported() {
        assert!(matches!(
            grad(&Constant, &[1.0]),
            Err(LabError::DimensionMismatch { .. })
        ));
    }
}
