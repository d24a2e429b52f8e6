//! Synthetic binary datasets with known ground truth and a small CSV format.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::network::MAX_INPUT_DIM;

/// Half-width of the cube every generated feature lies in.
pub const FEATURE_BOUND: f64 = 3.0;

const MAX_REJECTIONS: usize = 1_000_000;
const MAX_MONOMIALS: usize = 100_000;

/// Sparse multivariate polynomial `Σ coef · Π x_j^{e_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        if let Some((e, _)) = terms.iter().find(|(e, _)| e.len() != dim) {
            return Err(LabError::DimensionMismatch {
                what: "monomial exponents",
                expected: dim,
                got: e.len(),
            });
        }
        Ok(Polynomial { dim, terms })
    }

    /// `wᵀx + b`.
    pub fn affine(w: &[f64], b: f64) -> Self {
        let d = w.len();
        let mut terms: Vec<(Vec<u32>, f64)> = (0..d)
            .map(|j| {
                let mut e = vec![0; d];
                e[j] = 1;
                (e, w[j])
            })
            .collect();
        terms.push((vec![0; d], b));
        Polynomial { dim: d, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&k, &xi)| xi.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }
}

/// Provenance and ground truth attached to a dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: Option<u64>,
    /// Degree of a polynomial that separates the data.
    pub degree: Option<u32>,
    /// Minimum misclassification rate achievable by any classifier.
    pub min_error: Option<f64>,
    /// Guaranteed `min_i y_i·P(x_i)` for the witness polynomial.
    pub margin: Option<f64>,
    /// Separating polynomial; kept in memory only.
    pub witness: Option<Polynomial>,
}

impl DatasetMeta {
    pub fn named(generator: impl Into<String>) -> Self {
        DatasetMeta {
            generator: generator.into(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>, meta: DatasetMeta) -> Result<Self> {
        if features.is_empty() {
            return Err(LabError::invalid("a dataset needs at least one sample"));
        }
        if features.len() != labels.len() {
            return Err(LabError::DimensionMismatch {
                what: "labels",
                expected: features.len(),
                got: labels.len(),
            });
        }
        let d = features[0].len();
        if d == 0 || d > MAX_INPUT_DIM {
            return Err(LabError::invalid(format!(
                "feature dimension must be in 1..={MAX_INPUT_DIM}, got {d}"
            )));
        }
        for (i, x) in features.iter().enumerate() {
            if x.len() != d {
                return Err(LabError::invalid(format!(
                    "sample {i} has {} features, expected {d}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(LabError::invalid(format!("sample {i} has a non-finite feature")));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(LabError::invalid(format!(
                "label of sample {i} is {}, expected -1 or 1",
                labels[i]
            )));
        }
        if meta.degree == Some(0) {
            return Err(LabError::invalid("declared separating degree must be at least 1"));
        }
        Ok(Dataset {
            features,
            labels,
            meta,
        })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// `min_i y_i·P(x_i)`.
    pub fn polynomial_margin(&self, p: &Polynomial) -> f64 {
        self.features
            .iter()
            .zip(&self.labels)
            .map(|(x, y)| y * p.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// The file representation written by [`save`].
    pub fn to_csv_string(&self) -> String {
        let m = &self.meta;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".to_string());
        let mut out = format!(
            "# landscape-lab v1; d={}; n={}; generator={}; t={}; seed={}",
            self.dim(),
            self.len(),
            m.generator,
            opt(m.degree.map(|t| t.to_string())),
            opt(m.seed.map(|s| s.to_string())),
        );
        if let Some(e) = m.min_error {
            let _ = write!(out, "; min_error={e:.16e}");
        }
        if let Some(g) = m.margin {
            let _ = write!(out, "; margin={g:.16e}");
        }
        out.push('\n');
        for (x, y) in self.features.iter().zip(&self.labels) {
            for v in x {
                let _ = write!(out, "{v:.16e},");
            }
            out.push_str(if *y > 0.0 { "1\n" } else { "-1\n" });
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(LabError::Format {
            line: 1,
            message: "empty file".into(),
        })?;
        let fmt_err = |line: usize, message: String| LabError::Format { line, message };
        let body = header
            .strip_prefix("# landscape-lab v1")
            .ok_or_else(|| fmt_err(1, "missing '# landscape-lab v1' header".into()))?;
        let (mut d, mut n) = (None, None);
        let mut meta = DatasetMeta::default();
        for field in body.split(';').map(str::trim).filter(|f| !f.is_empty()) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| fmt_err(1, format!("malformed header field '{field}'")))?;
            let bad = || fmt_err(1, format!("bad value for '{key}': '{value}'"));
            let none = value == "none";
            match key {
                "d" => d = Some(value.parse::<usize>().map_err(|_| bad())?),
                "n" => n = Some(value.parse::<usize>().map_err(|_| bad())?),
                "generator" => meta.generator = value.to_string(),
                "t" if none => {}
                "t" => meta.degree = Some(value.parse().map_err(|_| bad())?),
                "seed" if none => {}
                "seed" => meta.seed = Some(value.parse().map_err(|_| bad())?),
                "min_error" => meta.min_error = Some(value.parse().map_err(|_| bad())?),
                "margin" => meta.margin = Some(value.parse().map_err(|_| bad())?),
                _ => return Err(fmt_err(1, format!("unknown header field '{key}'"))),
            }
        }
        let d = d.ok_or_else(|| fmt_err(1, "header lacks d".into()))?;
        let n = n.ok_or_else(|| fmt_err(1, "header lacks n".into()))?;
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != d + 1 {
                return Err(fmt_err(
                    line_no,
                    format!("expected {} columns, found {}", d + 1, cells.len()),
                ));
            }
            let mut x = Vec::with_capacity(d);
            for c in &cells[..d] {
                x.push(
                    c.parse::<f64>()
                        .map_err(|_| fmt_err(line_no, format!("bad number '{c}'")))?,
                );
            }
            let y = match cells[d] {
                "1" | "+1" | "1.0" => 1.0,
                "-1" | "-1.0" => -1.0,
                other => return Err(fmt_err(line_no, format!("label must be -1 or 1, got '{other}'"))),
            };
            features.push(x);
            labels.push(y);
        }
        if features.len() != n {
            return Err(fmt_err(
                text.lines().count(),
                format!("header declares {n} rows, found {}", features.len()),
            ));
        }
        Dataset::new(features, labels, meta)
    }
}

pub fn save(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset.to_csv_string())?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    Dataset::from_csv_str(&fs::read_to_string(path)?)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
    let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
    random_unit(rng, d).into_iter().map(|u| r * u).collect()
}

fn feature_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

fn check_size(n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(LabError::invalid("n must be at least 1"));
    }
    if d == 0 || d > MAX_INPUT_DIM {
        return Err(LabError::invalid(format!("d must be in 1..={MAX_INPUT_DIM}")));
    }
    Ok(())
}

/// Samples accepted by `keep` until `n` distinct ones are collected.
fn rejection_sample(
    rng: &mut ChaCha8Rng,
    n: usize,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    mut keep: impl FnMut(&[f64]) -> Option<f64>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut seen = HashSet::new();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut attempts = 0;
    while features.len() < n {
        attempts += 1;
        if attempts > MAX_REJECTIONS {
            return Err(LabError::invalid(
                "generator rejected too many samples; relax the margin",
            ));
        }
        let x = draw(rng);
        if let Some(y) = keep(&x) {
            if seen.insert(feature_key(&x)) {
                features.push(x);
                labels.push(y);
            }
        }
    }
    Ok((features, labels))
}

/// Points uniform in the radius-2 ball labeled by a random hyperplane;
/// points closer than `margin` to the plane are redrawn.
pub fn gen_linearly_separable(n: usize, d: usize, margin: f64, seed: u64) -> Result<Dataset> {
    check_size(n, d)?;
    if !(margin > 0.0 && margin < 1.0) {
        return Err(LabError::invalid("margin must be in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_unit(&mut rng, d);
    let b = rng.gen_range(-0.25..0.25);
    let plane = Polynomial::affine(&w, b);
    let (features, labels) = rejection_sample(
        &mut rng,
        n,
        |r| uniform_in_ball(r, d, 2.0),
        |x| {
            let s = plane.eval(x);
            (s.abs() >= margin).then(|| s.signum())
        },
    )?;
    Dataset::new(
        features,
        labels,
        DatasetMeta {
            generator: "linear".into(),
            seed: Some(seed),
            degree: Some(1),
            min_error: Some(0.0),
            margin: Some(margin),
            witness: Some(plane),
        },
    )
}

/// The four points `(±1, ±1)` labeled by `x₁·x₂`.
pub fn gen_xor() -> Dataset {
    let features = vec![
        vec![1.0, 1.0],
        vec![1.0, -1.0],
        vec![-1.0, 1.0],
        vec![-1.0, -1.0],
    ];
    let labels = features.iter().map(|x| x[0] * x[1]).collect();
    Dataset::new(
        features,
        labels,
        DatasetMeta {
            generator: "xor".into(),
            seed: None,
            degree: Some(2),
            min_error: Some(0.0),
            margin: Some(1.0),
            witness: Some(Polynomial {
                dim: 2,
                terms: vec![(vec![1, 1], 1.0)],
            }),
        },
    )
    .expect("xor dataset is valid")
}

/// Two concentric classes in the plane: `‖x‖ < 1` labeled +1 and
/// `2 < ‖x‖ ≤ 2.8` labeled −1, separated by `2.25 − ‖x‖²`.
pub fn gen_circles(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(LabError::invalid("circles needs n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_inner = n.div_ceil(2);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    while features.len() < n {
        let inner = features.len() < n_inner;
        let r = if inner {
            rng.gen::<f64>().sqrt()
        } else {
            let u: f64 = 1.0 - rng.gen::<f64>();
            (4.0 + u * (2.8 * 2.8 - 4.0)).sqrt()
        };
        if (inner && r >= 1.0) || (!inner && r <= 2.0) {
            continue;
        }
        let angle = rng.gen::<f64>() * std::f64::consts::TAU;
        let x = vec![r * angle.cos(), r * angle.sin()];
        if seen.insert(feature_key(&x)) {
            features.push(x);
            labels.push(if inner { 1.0 } else { -1.0 });
        }
    }
    let witness = Polynomial::new(
        2,
        vec![(vec![0, 0], 2.25), (vec![2, 0], -1.0), (vec![0, 2], -1.0)],
    )?;
    Dataset::new(
        features,
        labels,
        DatasetMeta {
            generator: "circles".into(),
            seed: Some(seed),
            degree: Some(2),
            min_error: Some(0.0),
            margin: Some(1.25),
            witness: Some(witness),
        },
    )
}

fn monomials(d: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == d {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(d, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, max_degree, &mut Vec::with_capacity(d), &mut out);
    out
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Points uniform in `[−2, 2]^d` labeled by the sign of a random degree-`t`
/// polynomial; points with `|P(x)| < 0.1` are redrawn.
pub fn gen_poly_separable(n: usize, d: usize, degree: u32, seed: u64) -> Result<Dataset> {
    const MARGIN: f64 = 0.1;
    check_size(n, d)?;
    if degree == 0 {
        return Err(LabError::invalid("polynomial degree must be at least 1"));
    }
    if binomial(d + degree as usize, degree as usize) > MAX_MONOMIALS {
        return Err(LabError::TooLarge(format!(
            "degree {degree} in dimension {d} has too many monomials"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |r: &mut ChaCha8Rng| (0..d).map(|_| r.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
    let mut terms: Vec<(Vec<u32>, f64)> = monomials(d, degree)
        .into_iter()
        .map(|e| {
            let top = e.iter().sum::<u32>() == degree;
            let mag = if top { rng.gen_range(0.5..1.0) } else { rng.gen_range(0.0..1.0) };
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            (e, sign * mag)
        })
        .collect();
    let constant = terms
        .iter()
        .position(|(e, _)| e.iter().all(|&k| k == 0))
        .expect("constant monomial present");
    terms[constant].1 = 0.0;
    let probe = Polynomial { dim: d, terms };
    let mut pilot: Vec<f64> = (0..(4 * n).max(64)).map(|_| probe.eval(&draw(&mut rng))).collect();
    pilot.sort_by(f64::total_cmp);
    let mut terms = probe.terms;
    terms[constant].1 = -pilot[pilot.len() / 2];
    let scale = terms.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
    for (_, c) in &mut terms {
        *c /= scale;
    }
    let poly = Polynomial { dim: d, terms };
    let (features, labels) = rejection_sample(&mut rng, n, draw, |x| {
        let s = poly.eval(x);
        (s.abs() >= MARGIN).then(|| s.signum())
    })?;
    Dataset::new(
        features,
        labels,
        DatasetMeta {
            generator: "poly".into(),
            seed: Some(seed),
            degree: Some(degree),
            min_error: Some(0.0),
            margin: Some(MARGIN),
            witness: Some(poly),
        },
    )
}

/// `n_groups` distinct planar points, each repeated `dups` times; within a
/// group `round(flip_fraction·dups)` copies carry the opposite label.
pub fn gen_conflicting(
    n_groups: usize,
    dups: usize,
    flip_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_groups == 0 {
        return Err(LabError::invalid("n_groups must be at least 1"));
    }
    if dups < 2 {
        return Err(LabError::invalid("dups must be at least 2"));
    }
    if !(0.0..=1.0).contains(&flip_fraction) {
        return Err(LabError::invalid("flip_fraction must be in [0, 1]"));
    }
    let flips = (flip_fraction * dups as f64).round() as usize;
    if 2 * flips > dups {
        return Err(LabError::invalid(format!(
            "flip_fraction {flip_fraction} makes {flips} of {dups} copies the majority"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut features = Vec::with_capacity(n_groups * dups);
    let mut labels = Vec::with_capacity(n_groups * dups);
    while seen.len() < n_groups {
        let x = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        if !seen.insert(feature_key(&x)) {
            continue;
        }
        let y = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        for k in 0..dups {
            features.push(x.clone());
            labels.push(if k < dups - flips { y } else { -y });
        }
    }
    let n = features.len();
    Dataset::new(
        features,
        labels,
        DatasetMeta {
            generator: "conflicting".into(),
            seed: Some(seed),
            degree: None,
            min_error: Some((n_groups * flips) as f64 / n as f64),
            margin: None,
            witness: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn in_bounds(ds: &Dataset) -> bool {
        ds.features()
            .iter()
            .flatten()
            .all(|v| v.abs() <= FEATURE_BOUND)
    }

    #[test]
    fn linear_generator_contract() {
        let ds = gen_linearly_separable(64, 4, 0.3, 5).unwrap();
        assert_eq!((ds.len(), ds.dim()), (64, 4));
        let w = ds.meta().witness.clone().unwrap();
        assert!(ds.polynomial_margin(&w) >= 0.3);
        assert_eq!(ds.meta().degree, Some(1));
        assert!(in_bounds(&ds));
        assert_eq!(ds, gen_linearly_separable(64, 4, 0.3, 5).unwrap());
        assert_ne!(ds, gen_linearly_separable(64, 4, 0.3, 6).unwrap());
    }

    #[test]
    fn xor_contract() {
        let ds = gen_xor();
        assert_eq!(ds.labels(), &[1.0, -1.0, -1.0, 1.0]);
        let w = ds.meta().witness.clone().unwrap();
        assert_eq!(w.degree(), 2);
        assert_eq!(ds.polynomial_margin(&w), 1.0);
    }

    #[test]
    fn xor_is_not_linearly_separable() {
        // Grid over unit directions and offsets; sgn(0) = +1.
        let ds = gen_xor();
        let mut best = 1.0_f64;
        for i in 0..720 {
            let t = i as f64 * std::f64::consts::TAU / 720.0;
            let (w0, w1) = (t.cos(), t.sin());
            for j in 0..=200 {
                let b = -3.0 + 0.03 * j as f64;
                let wrong = ds
                    .features()
                    .iter()
                    .zip(ds.labels())
                    .filter(|(x, &y)| {
                        let s = w0 * x[0] + w1 * x[1] + b;
                        (if s >= 0.0 { 1.0 } else { -1.0 }) != y
                    })
                    .count();
                best = best.min(wrong as f64 / 4.0);
            }
        }
        assert_eq!(best, 0.25);
    }

    #[test]
    fn circles_contract() {
        let ds = gen_circles(40, 3).unwrap();
        for (x, &y) in ds.features().iter().zip(ds.labels()) {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if y > 0.0 {
                assert!(r < 1.0);
            } else {
                assert!(r > 2.0 && r <= 2.8 + 1e-12);
            }
        }
        let w = ds.meta().witness.clone().unwrap();
        assert!(ds.polynomial_margin(&w) >= 1.25);
        assert_eq!(ds.labels().iter().filter(|&&y| y > 0.0).count(), 20);
        assert!(in_bounds(&ds));
    }

    #[test]
    fn poly_generator_contract() {
        for t in 1..=3 {
            let ds = gen_poly_separable(50, 3, t, 11).unwrap();
            let w = ds.meta().witness.clone().unwrap();
            assert_eq!(w.degree(), t);
            assert!(ds.polynomial_margin(&w) >= 0.1);
            assert!(in_bounds(&ds));
            assert_eq!(ds.meta().degree, Some(t));
            let max_coef = w.terms().iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
            assert!((max_coef - 1.0).abs() < 1e-15);
        }
        assert!(gen_poly_separable(10, 2, 0, 1).is_err());
    }

    #[test]
    fn conflicting_contract() {
        let ds = gen_conflicting(2, 3, 1.0 / 3.0, 1).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.meta().min_error, Some(2.0 / 6.0));
        let clean = gen_conflicting(3, 4, 0.0, 1).unwrap();
        assert_eq!(clean.meta().min_error, Some(0.0));
        assert!(gen_conflicting(2, 3, 0.9, 1).is_err());
        assert!(gen_conflicting(2, 1, 0.0, 1).is_err());
        assert!(gen_conflicting(2, 4, 0.5, 1).is_ok());
    }

    #[test]
    fn round_trip_keeps_metadata() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.csv");
        let ds = gen_conflicting(3, 4, 0.25, 9).unwrap();
        save(&ds, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.meta().min_error, ds.meta().min_error);
        assert_eq!(back.meta().seed, Some(9));
        assert_eq!(back.meta().generator, "conflicting");
        assert!(back.meta().witness.is_none());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let header = "# landscape-lab v1; d=2; n=2; generator=x; t=none; seed=none\n";
        let zero_label = format!("{header}1.0,2.0,1\n3.0,4.0,0\n");
        assert!(matches!(
            Dataset::from_csv_str(&zero_label),
            Err(LabError::Format { line: 3, .. })
        ));
        let ragged = format!("{header}1.0,2.0,1\n3.0,-1\n");
        assert!(matches!(
            Dataset::from_csv_str(&ragged),
            Err(LabError::Format { line: 3, .. })
        ));
        let short = format!("{header}1.0,2.0,1\n");
        assert!(Dataset::from_csv_str(&short).is_err());
        assert!(Dataset::from_csv_str("1.0,2.0,1\n").is_err());
        let ok = format!("{header}1.0,2.0,1\n3.0,4.0,-1\n");
        assert_eq!(Dataset::from_csv_str(&ok).unwrap().len(), 2);
    }

    #[test]
    fn constructor_validation() {
        let meta = DatasetMeta::named("t");
        assert!(Dataset::new(vec![], vec![], meta.clone()).is_err());
        assert!(Dataset::new(vec![vec![1.0]], vec![0.5], meta.clone()).is_err());
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0, 1.0], meta).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn save_load_is_identity(
            rows in prop::collection::vec(
                (prop::collection::vec(-3.0f64..3.0, 3), prop::bool::ANY), 1..20),
            seed in prop::option::of(any::<u64>()),
        ) {
            let (features, labels): (Vec<_>, Vec<_>) = rows
                .into_iter()
                .map(|(x, b)| (x, if b { 1.0 } else { -1.0 }))
                .unzip();
            let meta = DatasetMeta { seed, degree: Some(2), ..DatasetMeta::named("rand") };
            let ds = Dataset::new(features, labels, meta).unwrap();
            let back = Dataset::from_csv_str(&ds.to_csv_string()).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn generators_are_deterministic(seed in any::<u64>()) {
            prop_assert_eq!(gen_circles(12, seed).unwrap(), gen_circles(12, seed).unwrap());
            prop_assert_eq!(
                gen_poly_separable(12, 2, 2, seed).unwrap(),
                gen_poly_separable(12, 2, 2, seed).unwrap()
            );
            prop_assert_eq!(
                gen_conflicting(3, 3, 0.34, seed).unwrap(),
                gen_conflicting(3, 3, 0.34, seed).unwrap()
            );
        }
    }
}
