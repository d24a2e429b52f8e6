//! Symmetric tensors in factored form `T = Σ c_i x_i^{⊗k}`, evaluated on
//! rank-1 arguments `u^{⊗k}`, and a zero test by maximizing `|T(u,…,u)|` over
//! the unit sphere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};

pub const DEFAULT_RESTARTS: usize = 32;
pub const DENSE_LIMIT: usize = 1_000_000;
const UNIT_TOL: f64 = 1e-12;
const START_SEED: u64 = 0x7e45_0125;
const MAX_ASCENT_STEPS: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPointTensor {
    order: u32,
    coeffs: Vec<f64>,
    points: Vec<Vec<f64>>,
}

/// A point `x` lifted to `(x, 1)`, so that `(uᵀx + v)` is a homogeneous
/// inner product in one more dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPoint(Vec<f64>);

impl AugmentedPoint {
    pub fn new(x: &[f64]) -> Self {
        let mut v = Vec::with_capacity(x.len() + 1);
        v.extend_from_slice(x);
        v.push(1.0);
        AugmentedPoint(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn lift(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points.iter().map(|x| AugmentedPoint::new(x).into_inner()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl WeightedPointTensor {
    pub fn new(order: u32, coeffs: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.len() != points.len() {
            return Err(LabError::DimensionMismatch {
                what: "tensor coefficients",
                expected: points.len(),
                got: coeffs.len(),
            });
        }
        if points.is_empty() {
            return Err(LabError::invalid("a tensor needs at least one point"));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(LabError::invalid("points must have dimension at least 1"));
        }
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(LabError::DimensionMismatch {
                what: "tensor point",
                expected: d,
                got: p.len(),
            });
        }
        Ok(WeightedPointTensor {
            order,
            coeffs,
            points,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// `Σ |c_i| · max(1, ‖x_i‖)^k`, the natural size of the tensor.
    pub fn scale(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.points)
            .map(|(c, x)| c.abs() * norm(x).max(1.0).powi(self.order as i32))
            .sum()
    }

    /// Zero-test tolerance `rel · scale()`.
    pub fn scaled_tolerance(&self, rel: f64) -> f64 {
        rel * self.scale()
    }

    fn value_unchecked(&self, u: &[f64]) -> f64 {
        let k = self.order as i32;
        self.coeffs
            .iter()
            .zip(&self.points)
            .map(|(c, x)| c * dot(u, x).powi(k))
            .sum()
    }

    /// Value and Euclidean gradient of `g(u) = Σ c_i (uᵀx_i)^k`.
    fn value_and_grad(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let k = self.order as i32;
        let mut value = 0.0;
        let mut g = vec![0.0; u.len()];
        for (c, x) in self.coeffs.iter().zip(&self.points) {
            let s = dot(u, x);
            value += c * s.powi(k);
            let w = c * f64::from(self.order) * s.powi(k - 1);
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += w * xj;
            }
        }
        (value, g)
    }
}

/// `Σ c_i (uᵀx_i)^k` for a unit vector `u`.
pub fn eval_rank1(t: &WeightedPointTensor, u: &[f64]) -> Result<f64> {
    if u.len() != t.dim() {
        return Err(LabError::DimensionMismatch {
            what: "rank-1 argument",
            expected: t.dim(),
            got: u.len(),
        });
    }
    let n = norm(u);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(LabError::invalid(format!("argument is not a unit vector (norm {n})")));
    }
    Ok(t.value_unchecked(u))
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    use rand::Rng;
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Projected gradient ascent of `sign·g` on the sphere with backtracking.
fn ascend(t: &WeightedPointTensor, mut u: Vec<f64>, sign: f64, scale: f64) -> (f64, Vec<f64>) {
    let (mut val, mut grad) = t.value_and_grad(&u);
    let mut step = 1.0 / scale;
    for _ in 0..MAX_ASCENT_STEPS {
        let radial = dot(&grad, &u);
        let tangent: Vec<f64> = grad.iter().zip(&u).map(|(g, ui)| sign * (g - radial * ui)).collect();
        let tn2 = dot(&tangent, &tangent);
        if tn2.sqrt() <= 1e-15 * scale {
            break;
        }
        let mut accepted = false;
        while step * tn2.sqrt() > 1e-16 {
            let trial = normalized(u.iter().zip(&tangent).map(|(a, b)| a + step * b).collect());
            let (v, g) = t.value_and_grad(&trial);
            if sign * v >= sign * val + 1e-4 * step * tn2 {
                u = trial;
                val = v;
                grad = g;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (val, u)
}

/// Approximate `max_{‖u‖=1} |Σ c_i (uᵀx_i)^k|` and a maximizer, from
/// `restarts` seeded random starts plus each normalized point, ascending
/// both `g` and `−g`. Ties go to the earliest start.
pub fn sym_max(t: &WeightedPointTensor, restarts: usize) -> (f64, Vec<f64>) {
    let d = t.dim();
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    if t.order == 0 {
        return (t.coeffs.iter().sum::<f64>().abs(), e1);
    }
    let scale = t.scale();
    if scale == 0.0 {
        return (0.0, e1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut starts: Vec<Vec<f64>> = (0..restarts).map(|_| random_unit(&mut rng, d)).collect();
    starts.extend(
        t.points
            .iter()
            .filter(|x| norm(x) > 0.0)
            .map(|x| normalized(x.clone())),
    );
    let mut best = (t.value_unchecked(&e1).abs(), e1);
    let mut have_best = false;
    for start in starts {
        for sign in [1.0, -1.0] {
            let (v, u) = ascend(t, start.clone(), sign, scale);
            if !have_best || v.abs() > best.0 {
                best = (v.abs(), u);
                have_best = true;
            }
        }
    }
    best
}

/// `sym_max ≤ tol`.
pub fn is_zero_tensor(t: &WeightedPointTensor, tol: f64) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(LabError::invalid("zero-test tolerance must be positive"));
    }
    Ok(sym_max(t, DEFAULT_RESTARTS).0 <= tol)
}

/// Explicit `d^k` array in row-major index order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dim: usize,
    order: u32,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.order as usize);
        let flat = index.iter().fold(0, |acc, &i| {
            assert!(i < self.dim);
            acc * self.dim + i
        });
        self.data[flat]
    }

    /// Full contraction with `u ⊗ … ⊗ u`.
    pub fn contract(&self, u: &[f64]) -> f64 {
        let mut cur = self.data.clone();
        for _ in 0..self.order {
            cur = cur
                .chunks(self.dim)
                .map(|row| dot(row, u))
                .collect();
        }
        cur[0]
    }
}

pub fn dense_materialize(t: &WeightedPointTensor) -> Result<DenseTensor> {
    let d = t.dim();
    let size = (0..t.order).try_fold(1usize, |acc, _| acc.checked_mul(d));
    let size = match size {
        Some(s) if s <= DENSE_LIMIT => s,
        _ => {
            return Err(LabError::TooLarge(format!(
                "dense tensor of order {} in dimension {d} exceeds {DENSE_LIMIT} entries",
                t.order
            )))
        }
    };
    let k = t.order as usize;
    let mut data = vec![0.0; size];
    let mut index = vec![0usize; k];
    for (flat, dst) in data.iter_mut().enumerate() {
        let mut rest = flat;
        for slot in index.iter_mut().rev() {
            *slot = rest % d;
            rest /= d;
        }
        // Multiply in sorted index order so that permuted entries agree bitwise.
        index.sort_unstable();
        *dst = t
            .coeffs
            .iter()
            .zip(&t.points)
            .map(|(c, x)| index.iter().fold(*c, |acc, &i| acc * x[i]))
            .sum();
    }
    Ok(DenseTensor {
        dim: d,
        order: t.order,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_tensor(seed: u64, d: usize, k: u32, n: usize) -> WeightedPointTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let points = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        WeightedPointTensor::new(k, coeffs, points).unwrap()
    }

    fn spectral_radius(t: &WeightedPointTensor) -> f64 {
        let d = t.dim();
        let mut m = DMatrix::<f64>::zeros(d, d);
        for (c, x) in t.coeffs().iter().zip(t.points()) {
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] += c * x[i] * x[j];
                }
            }
        }
        m.symmetric_eigen().eigenvalues.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    fn circle_grid_max(t: &WeightedPointTensor) -> f64 {
        (0..10_000)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 10_000.0;
                t.value_unchecked(&[a.cos(), a.sin()]).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn rank1_examples() {
        let v = vec![0.3, -1.2];
        let t = WeightedPointTensor::new(3, vec![1.0, -1.0], vec![v.clone(), v]).unwrap();
        assert_eq!(eval_rank1(&t, &[0.6, 0.8]).unwrap(), 0.0);
        let t0 = WeightedPointTensor::new(0, vec![0.5, 2.0], vec![vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(eval_rank1(&t0, &[-1.0]).unwrap(), 2.5);
        let t2 = WeightedPointTensor::new(2, vec![1.0], vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(eval_rank1(&t2, &[0.0, 1.0]).unwrap(), 0.0);
        assert!(eval_rank1(&t2, &[1.0, 1.0]).is_err());
        assert!(eval_rank1(&t2, &[1.0]).is_err());
    }

    #[test]
    fn sym_max_examples() {
        let t = WeightedPointTensor::new(3, vec![1.0], vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let (v, u) = sym_max(&t, DEFAULT_RESTARTS);
        assert!((v - 1.0).abs() < 1e-12);
        assert!((u[0].abs() - 1.0).abs() < 1e-6);
        let t0 = WeightedPointTensor::new(0, vec![-0.5, -1.0], vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(sym_max(&t0, 4).0, 1.5);
    }

    #[test]
    fn sym_max_matches_spectral_radius_for_order_two() {
        for seed in 0..20 {
            let t = random_tensor(seed, 1 + (seed as usize % 4), 2, 1 + (seed as usize % 6));
            let (v, _) = sym_max(&t, DEFAULT_RESTARTS);
            let r = spectral_radius(&t);
            assert!((v - r).abs() <= 1e-8 * r.max(1.0), "seed {seed}: {v} vs {r}");
        }
    }

    #[test]
    fn sym_max_matches_grid_in_the_plane() {
        for seed in 0..10 {
            let t = random_tensor(100 + seed, 2, 3, 3);
            let (v, _) = sym_max(&t, DEFAULT_RESTARTS);
            let g = circle_grid_max(&t);
            assert!(v >= g - 1e-9 && v - g <= 1e-3, "seed {seed}: {v} vs {g}");
        }
    }

    #[test]
    fn zero_tensor_examples() {
        let z = WeightedPointTensor::new(2, vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap();
        assert!(is_zero_tensor(&z, 1e-300).unwrap());
        let c = WeightedPointTensor::new(4, vec![1.0, -1.0], vec![vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(is_zero_tensor(&c, 1e-12).unwrap());
        let e = WeightedPointTensor::new(2, vec![1.0], vec![vec![1.0, 0.0]]).unwrap();
        assert!(!is_zero_tensor(&e, 0.5).unwrap());
        assert!(is_zero_tensor(&e, 0.0).is_err());
    }

    #[test]
    fn dense_examples() {
        let t = WeightedPointTensor::new(2, vec![1.0], vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(dense_materialize(&t).unwrap().data(), &[1.0, 2.0, 2.0, 4.0]);
        let t1 = WeightedPointTensor::new(1, vec![2.0, -1.0], vec![vec![1.0, 0.5], vec![3.0, 1.0]]).unwrap();
        assert_eq!(dense_materialize(&t1).unwrap().data(), &[-1.0, 0.0]);
        let big = WeightedPointTensor::new(5, vec![1.0], vec![vec![0.0; 32]]).unwrap();
        assert!(matches!(dense_materialize(&big), Err(LabError::TooLarge(_))));
    }

    #[test]
    fn lift_appends_one() {
        let l = lift(&[vec![2.0, -1.0]]);
        assert_eq!(l, vec![vec![2.0, -1.0, 1.0]]);
        assert_eq!(AugmentedPoint::new(&[]).as_slice(), &[1.0]);
    }

    fn unit_from(raw: &[f64]) -> Option<Vec<f64>> {
        let n = norm(raw);
        (n > 1e-3).then(|| raw.iter().map(|x| x / n).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rank1_values_bounded_by_sym_max(
            seed in 0u64..10_000, d in 1usize..4, k in 1u32..5, n in 1usize..7
        ) {
            let t = random_tensor(seed, d, k, n);
            let (best, _) = sym_max(&t, DEFAULT_RESTARTS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..100 {
                let u = random_unit(&mut rng, d);
                prop_assert!(t.value_unchecked(&u).abs() <= best + 1e-6);
            }
        }

        #[test]
        fn permutation_invariance(seed in 0u64..10_000, d in 1usize..4, k in 1u32..5, n in 2usize..7) {
            let t = random_tensor(seed, d, k, n);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.rotate_left(1);
            idx.swap(0, n - 1);
            let p = WeightedPointTensor::new(
                k,
                idx.iter().map(|&i| t.coeffs()[i]).collect(),
                idx.iter().map(|&i| t.points()[i].clone()).collect(),
            ).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_unit(&mut rng, d);
            prop_assert!((t.value_unchecked(&u) - p.value_unchecked(&u)).abs() < 1e-12 * t.scale().max(1.0));
            let (a, _) = sym_max(&t, DEFAULT_RESTARTS);
            let (b, _) = sym_max(&p, DEFAULT_RESTARTS);
            prop_assert!((a - b).abs() <= 1e-8 * t.scale().max(1.0));
        }

        #[test]
        fn dense_contraction_matches_rank1(
            seed in 0u64..10_000, d in 1usize..4, k in 0u32..5, n in 1usize..5,
            raw in prop::collection::vec(-1.0f64..1.0, 3)
        ) {
            let t = random_tensor(seed, d, k, n);
            if let Some(u) = unit_from(&raw[..d]) {
                let dense = dense_materialize(&t).unwrap();
                prop_assert!((dense.contract(&u) - t.value_unchecked(&u)).abs() < 1e-10 * t.scale().max(1.0));
            }
        }

        #[test]
        fn dense_is_symmetric(seed in 0u64..10_000, d in 1usize..4, n in 1usize..4) {
            let t = random_tensor(seed, d, 3, n);
            let dense = dense_materialize(&t).unwrap();
            for i in 0..d {
                for j in 0..d {
                    for l in 0..d {
                        let v = dense.get(&[i, j, l]);
                        for perm in [[i, l, j], [j, i, l], [j, l, i], [l, i, j], [l, j, i]] {
                            prop_assert_eq!(v, dense.get(&perm));
                        }
                    }
                }
            }
        }
    }
}
