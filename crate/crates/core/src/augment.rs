//! Special-neuron augmentations of a base network and their regularized
//! losses.
//!
//! * [`Augmentation::SkipExp`]: `f̃(x) = f(x; θ) + a·exp(wᵀx + b)` with
//!   regularizer `λa²/2`.
//! * [`Augmentation::SkipMonomial`]: `f̃(x) = f(x; θ) + a·(wᵀx + b)^p`, same
//!   regularizer.
//! * [`Augmentation::PerLayerExp`]: every hidden layer gains one exponential
//!   neuron (the last neuron of the layer, the first one reading raw `x`);
//!   the regularizer is `(λ/2) Σ_{l=2}^{L+1} ‖w̃_l‖_{2L}^{2L}` over the rows of
//!   weights leaving each exponential neuron.
//!
//! Skip layouts append the blocks `a`, `w`, `b` after the base parameters.
//! Per-layer layouts use the extended shapes `(M_{l−1}+1) × (M_l+1)` (the
//! first layer keeps `d` input rows).

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Objective, Real};
use crate::datasets::Dataset;
use crate::error::{LabError, Result};
use crate::loss::{summed_hinge, EmpiricalLossConfig};
use crate::network::{dense_forward, forward_generic, BlockKind, LayoutBuilder, NetworkSpec, ParamLayout};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Augmentation {
    #[default]
    None,
    SkipExp,
    PerLayerExp,
    SkipMonomial {
        degree: u32,
    },
}

impl Augmentation {
    pub fn name(&self) -> &'static str {
        match self {
            Augmentation::None => "none",
            Augmentation::SkipExp => "skip_exp",
            Augmentation::PerLayerExp => "per_layer_exp",
            Augmentation::SkipMonomial { .. } => "skip_monomial",
        }
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, Augmentation::SkipExp | Augmentation::SkipMonomial { .. })
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Augmentation::SkipMonomial { degree } => write!(f, "skip_monomial({degree})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Augmentation {
    type Err = LabError;

    /// `none`, `skip_exp`, `per_layer_exp`, `skip_monomial(<p>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "none" => return Ok(Augmentation::None),
            "skip_exp" => return Ok(Augmentation::SkipExp),
            "per_layer_exp" => return Ok(Augmentation::PerLayerExp),
            _ => {}
        }
        if let Some(inner) = s
            .strip_prefix("skip_monomial(")
            .and_then(|r| r.strip_suffix(')'))
        {
            let degree: u32 = inner
                .trim()
                .parse()
                .map_err(|_| LabError::invalid(format!("bad monomial degree '{inner}'")))?;
            if degree == 0 {
                return Err(LabError::invalid("monomial degree must be at least 1"));
            }
            return Ok(Augmentation::SkipMonomial { degree });
        }
        Err(LabError::invalid(format!("unknown augmentation '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecialKind {
    Exponential,
    Monomial(u32),
}

/// Parameters of one skip-connected special neuron.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipAugmentation {
    pub a: f64,
    pub w: Vec<f64>,
    pub b: f64,
    pub kind: SpecialKind,
}

impl SkipAugmentation {
    /// Special-neuron response `φ(x)`: `exp(wᵀx + b)` or `(wᵀx + b)^p`.
    pub fn response(&self, x: &[f64]) -> Result<f64> {
        special_response(self.kind, &self.w, &self.b, x)
    }
}

fn special_response<S: Real>(kind: SpecialKind, w: &[S], b: &S, x: &[f64]) -> Result<S> {
    if w.len() != x.len() {
        return Err(LabError::DimensionMismatch {
            what: "special neuron input",
            expected: w.len(),
            got: x.len(),
        });
    }
    let mut z = b.clone();
    for (wi, &xi) in w.iter().zip(x) {
        z = z + wi.clone() * xi;
    }
    match kind {
        SpecialKind::Exponential => z.guarded_exp(),
        SpecialKind::Monomial(p) => Ok(z.powi(p as i32)),
    }
}

/// `base_score + a·φ(x)`.
pub fn skip_forward(base_score: f64, aug: &SkipAugmentation, x: &[f64]) -> Result<f64> {
    Ok(base_score + aug.a * aug.response(x)?)
}

/// `Σ_i ℓ(−y_i (f(x_i; θ) + a·φ(x_i))) + λa²/2` with `θ = base_params`.
pub fn skip_regularized_loss(
    dataset: &Dataset,
    spec: &NetworkSpec,
    base_params: &[f64],
    aug: &SkipAugmentation,
    cfg: &EmpiricalLossConfig,
) -> Result<f64> {
    if cfg.lambda <= 0.0 {
        return Err(LabError::invalid("skip regularizer needs lambda > 0"));
    }
    let mut scores = Vec::with_capacity(dataset.len());
    for (i, x) in dataset.features().iter().enumerate() {
        let base = forward_generic(spec, base_params, x)?;
        let phi = aug.response(x).map_err(|e| e.at_sample(i))?;
        scores.push(base + aug.a * phi);
    }
    Ok(summed_hinge(&scores, dataset.labels(), &cfg.base_loss) + 0.5 * cfg.lambda * aug.a * aug.a)
}

/// `(λ/2) Σ_l Σ_j w̃_{l,j}^{2L}` over the exponential-exit rows `w̃_2 … w̃_{L+1}`.
pub fn per_layer_regularizer<S: Real>(exit_rows: &[&[S]], depth: usize, lambda: f64) -> S {
    let power = 2 * depth as i32;
    let mut total = S::zero();
    for row in exit_rows {
        for w in row.iter() {
            total = total + w.powi(power);
        }
    }
    total * (0.5 * lambda)
}

/// A base network together with the augmentation applied to it.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedModel {
    spec: NetworkSpec,
    mode: Augmentation,
}

impl AugmentedModel {
    pub fn new(spec: NetworkSpec, mode: Augmentation) -> Result<Self> {
        match mode {
            Augmentation::PerLayerExp if spec.depth() == 0 => {
                return Err(LabError::invalid(
                    "per-layer augmentation needs at least one hidden layer",
                ))
            }
            Augmentation::SkipMonomial { degree: 0 } => {
                return Err(LabError::invalid("monomial degree must be at least 1"))
            }
            _ => {}
        }
        Ok(AugmentedModel { spec, mode })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn mode(&self) -> Augmentation {
        self.mode
    }

    pub fn is_smooth(&self) -> bool {
        self.spec.activation().is_smooth()
    }

    fn extended_widths(&self) -> Vec<usize> {
        self.spec.widths().iter().map(|m| m + 1).collect()
    }

    pub fn layout(&self) -> ParamLayout {
        match self.mode {
            Augmentation::None => self.spec.layout(),
            Augmentation::SkipExp | Augmentation::SkipMonomial { .. } => {
                let mut b = LayoutBuilder::default();
                for block in self.spec.layout().blocks() {
                    b.push(block.kind, block.rows, block.cols);
                }
                b.push(BlockKind::SkipOutput, 1, 1);
                b.push(BlockKind::SkipWeight, 1, self.spec.input_dim());
                b.push(BlockKind::SkipBias, 1, 1);
                b.finish()
            }
            Augmentation::PerLayerExp => {
                let mut b = LayoutBuilder::default();
                let mut prev = self.spec.input_dim();
                for (l, m) in self.extended_widths().into_iter().enumerate() {
                    b.push(BlockKind::Weight(l + 1), prev, m);
                    b.push(BlockKind::Bias(l + 1), 1, m);
                    prev = m;
                }
                b.push(BlockKind::OutputWeight, 1, prev);
                b.push(BlockKind::OutputBias, 1, 1);
                b.finish()
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().len()
    }

    fn check_params(&self, n: usize) -> Result<()> {
        let expected = self.n_params();
        if n != expected {
            return Err(LabError::LayoutMismatch(format!(
                "{} model expects {expected} parameters, got {n}",
                self.mode
            )));
        }
        Ok(())
    }

    /// Flat indices of the weights leaving exponential neurons, one row per
    /// `l = 2..=L+1`. Empty for non-per-layer modes.
    pub fn exp_exit_rows(&self) -> Vec<Vec<usize>> {
        if self.mode != Augmentation::PerLayerExp {
            return Vec::new();
        }
        let layout = self.layout();
        let widths = self.spec.widths();
        let mut rows = Vec::with_capacity(widths.len());
        for l in 2..=widths.len() {
            let block = layout.expect_block(BlockKind::Weight(l));
            let exp_row = widths[l - 2];
            rows.push((0..block.cols).map(|j| block.index(exp_row, j)).collect());
        }
        let out = layout.expect_block(BlockKind::OutputWeight);
        rows.push(vec![out.index(0, widths[widths.len() - 1])]);
        rows
    }

    /// Flat indices of every parameter that is not part of the base network
    /// `θ`, split into (weights feeding special neurons, exit weights).
    pub fn special_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let layout = self.layout();
        match self.mode {
            Augmentation::None => (Vec::new(), Vec::new()),
            Augmentation::SkipExp | Augmentation::SkipMonomial { .. } => {
                let feed = layout
                    .expect_block(BlockKind::SkipWeight)
                    .range()
                    .chain(layout.expect_block(BlockKind::SkipBias).range())
                    .collect();
                let exit = layout.expect_block(BlockKind::SkipOutput).range().collect();
                (feed, exit)
            }
            Augmentation::PerLayerExp => {
                let exit: Vec<usize> = self.exp_exit_rows().into_iter().flatten().collect();
                let widths = self.spec.widths();
                let mut feed = Vec::new();
                for (l, &m) in widths.iter().enumerate() {
                    let w = layout.expect_block(BlockKind::Weight(l + 1));
                    for r in 0..w.rows {
                        let idx = w.index(r, m);
                        if !exit.contains(&idx) {
                            feed.push(idx);
                        }
                    }
                    feed.push(layout.expect_block(BlockKind::Bias(l + 1)).index(0, m));
                }
                (feed, exit)
            }
        }
    }

    /// Flat indices of the base parameters `θ`, in base-layout order.
    pub fn base_indices(&self) -> Vec<usize> {
        match self.mode {
            Augmentation::None | Augmentation::SkipExp | Augmentation::SkipMonomial { .. } => {
                (0..self.spec.param_count()).collect()
            }
            Augmentation::PerLayerExp => {
                let layout = self.layout();
                let widths = self.spec.widths();
                let mut idx = Vec::with_capacity(self.spec.param_count());
                let mut prev = self.spec.input_dim();
                for (l, &m) in widths.iter().enumerate() {
                    let w = layout.expect_block(BlockKind::Weight(l + 1));
                    for r in 0..prev {
                        for c in 0..m {
                            idx.push(w.index(r, c));
                        }
                    }
                    let b = layout.expect_block(BlockKind::Bias(l + 1));
                    idx.extend((0..m).map(|c| b.index(0, c)));
                    prev = m;
                }
                let out = layout.expect_block(BlockKind::OutputWeight);
                idx.extend((0..prev).map(|c| out.index(0, c)));
                idx.push(layout.expect_block(BlockKind::OutputBias).offset);
                idx
            }
        }
    }

    /// The base-network parameters `θ` contained in `params`.
    pub fn base_params(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params.len())?;
        Ok(self.base_indices().into_iter().map(|i| params[i]).collect())
    }

    /// Full parameter vector with `θ = base` and every special parameter zero.
    pub fn embed_base(&self, base: &[f64]) -> Result<Vec<f64>> {
        if base.len() != self.spec.param_count() {
            return Err(LabError::DimensionMismatch {
                what: "base parameters",
                expected: self.spec.param_count(),
                got: base.len(),
            });
        }
        let mut out = vec![0.0; self.n_params()];
        for (&i, &v) in self.base_indices().iter().zip(base) {
            out[i] = v;
        }
        Ok(out)
    }

    /// Skip-neuron parameters `(a, w, b)`; `None` for other modes.
    pub fn skip_parts(&self, params: &[f64]) -> Result<Option<SkipAugmentation>> {
        self.check_params(params.len())?;
        let kind = match self.mode {
            Augmentation::SkipExp => SpecialKind::Exponential,
            Augmentation::SkipMonomial { degree } => SpecialKind::Monomial(degree),
            _ => return Ok(None),
        };
        let layout = self.layout();
        Ok(Some(SkipAugmentation {
            a: params[layout.expect_block(BlockKind::SkipOutput).offset],
            w: params[layout.expect_block(BlockKind::SkipWeight).range()].to_vec(),
            b: params[layout.expect_block(BlockKind::SkipBias).offset],
            kind,
        }))
    }

    /// Augmented output `f̃(x)`.
    pub fn score<S: Real>(&self, params: &[S], x: &[f64]) -> Result<S> {
        self.check_params(params.len())?;
        if x.len() != self.spec.input_dim() {
            return Err(LabError::DimensionMismatch {
                what: "input vector",
                expected: self.spec.input_dim(),
                got: x.len(),
            });
        }
        match self.mode {
            Augmentation::None => forward_generic(&self.spec, params, x),
            Augmentation::SkipExp | Augmentation::SkipMonomial { .. } => {
                let n_base = self.spec.param_count();
                let base = forward_generic(&self.spec, &params[..n_base], x)?;
                let d = self.spec.input_dim();
                let a = &params[n_base];
                let w = &params[n_base + 1..n_base + 1 + d];
                let b = &params[n_base + 1 + d];
                let kind = match self.mode {
                    Augmentation::SkipMonomial { degree } => SpecialKind::Monomial(degree),
                    _ => SpecialKind::Exponential,
                };
                Ok(base + a.clone() * special_response(kind, w, b, x)?)
            }
            Augmentation::PerLayerExp => per_layer_forward(self, params, x),
        }
    }

    /// Output of the base network `f(x; θ)` embedded in `params`.
    pub fn base_score(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        forward_generic(&self.spec, &self.base_params(params)?, x)
    }

    pub fn regularizer<S: Real>(&self, params: &[S], lambda: f64) -> Result<S> {
        self.check_params(params.len())?;
        Ok(match self.mode {
            Augmentation::None => S::zero(),
            Augmentation::SkipExp | Augmentation::SkipMonomial { .. } => {
                let a = params[self.spec.param_count()].clone();
                a.clone() * a * (0.5 * lambda)
            }
            Augmentation::PerLayerExp => {
                let rows: Vec<Vec<S>> = self
                    .exp_exit_rows()
                    .iter()
                    .map(|r| r.iter().map(|&i| params[i].clone()).collect())
                    .collect();
                let views: Vec<&[S]> = rows.iter().map(Vec::as_slice).collect();
                per_layer_regularizer(&views, self.spec.depth(), lambda)
            }
        })
    }

    /// Generic `L̃_n`: summed hinge loss of the augmented scores plus the
    /// mode's regularizer.
    pub fn loss<S: Real>(
        &self,
        dataset: &Dataset,
        params: &[S],
        cfg: &EmpiricalLossConfig,
    ) -> Result<S> {
        self.check_params(params.len())?;
        if dataset.dim() != self.spec.input_dim() {
            return Err(LabError::DimensionMismatch {
                what: "dataset dimension",
                expected: self.spec.input_dim(),
                got: dataset.dim(),
            });
        }
        let mut scores = Vec::with_capacity(dataset.len());
        for (i, x) in dataset.features().iter().enumerate() {
            scores.push(self.score(params, x).map_err(|e| e.at_sample(i))?);
        }
        let data_term = summed_hinge(&scores, dataset.labels(), &cfg.base_loss);
        Ok(data_term + self.regularizer(params, cfg.lambda)?)
    }
}

/// Forward pass of the per-layer exponential network: each hidden layer
/// applies `(σ(z_1), …, σ(z_{M_l}), exp(z_{M_l+1}))`.
pub fn per_layer_forward<S: Real>(model: &AugmentedModel, params: &[S], x: &[f64]) -> Result<S> {
    if model.mode != Augmentation::PerLayerExp {
        return Err(LabError::LayoutMismatch(format!(
            "per-layer forward called on a {} model",
            model.mode
        )));
    }
    model.check_params(params.len())?;
    let widths = model.spec.widths();
    let act = model.spec.activation();
    let ext = model.extended_widths();
    dense_forward(model.spec.input_dim(), &ext, params, x, |l, j, z| {
        if j == widths[l - 1] {
            z.guarded_exp()
        } else {
            Ok(act.apply(z))
        }
    })
}

/// `L̃_n(θ̃)` for any mode; `Augmentation::None` ignores `λ`.
pub fn total_augmented_loss(
    dataset: &Dataset,
    spec: &NetworkSpec,
    params: &[f64],
    cfg: &EmpiricalLossConfig,
) -> Result<f64> {
    AugmentedModel::new(spec.clone(), cfg.augmentation)?.loss(dataset, params, cfg)
}

/// [`AugmentedModel::loss`] bound to a dataset, usable as an [`Objective`].
#[derive(Clone, Debug)]
pub struct AugmentedLoss<'a> {
    dataset: &'a Dataset,
    model: AugmentedModel,
    cfg: EmpiricalLossConfig,
}

impl<'a> AugmentedLoss<'a> {
    pub fn new(dataset: &'a Dataset, spec: NetworkSpec, cfg: EmpiricalLossConfig) -> Result<Self> {
        if dataset.dim() != spec.input_dim() {
            return Err(LabError::DimensionMismatch {
                what: "dataset dimension",
                expected: spec.input_dim(),
                got: dataset.dim(),
            });
        }
        let model = AugmentedModel::new(spec, cfg.augmentation)?;
        Ok(AugmentedLoss {
            dataset,
            model,
            cfg,
        })
    }

    pub fn model(&self) -> &AugmentedModel {
        &self.model
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn config(&self) -> &EmpiricalLossConfig {
        &self.cfg
    }
}

impl Objective for AugmentedLoss<'_> {
    fn n_params(&self) -> usize {
        self.model.n_params()
    }

    fn eval<S: Real>(&self, params: &[S]) -> Result<S> {
        self.model.loss(self.dataset, params, &self.cfg)
    }

    fn is_smooth(&self) -> bool {
        self.model.is_smooth()
    }
}
