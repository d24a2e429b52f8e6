//! Dense feedforward networks with a scalar output, stored as one flat
//! parameter vector with named views.
//!
//! Layer `l` holds a weight block `W_l` of shape `(M_{l−1}, M_l)` in row-major
//! order (entry `(i, j)` connects input `i` to neuron `j`) followed by its bias
//! `b_l`; the output layer is `W_{L+1}` (length `M_L`) and the scalar
//! `b_{L+1}`. Every layer is applied as `z = W_lᵀ h + b_l`.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::Real;
use crate::error::{LabError, Result};

pub const MAX_INPUT_DIM: usize = 32;
pub const MAX_PARAMS: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<S: Real>(&self, z: S) -> S {
        match *self {
            Activation::Relu => z.relu(),
            Activation::LeakyRelu(slope) => z.leaky_relu(slope),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => z.sigmoid(),
        }
    }

    /// Whether the activation is differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        matches!(self, Activation::Tanh | Activation::Sigmoid)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu(s) => write!(f, "leaky_relu({s})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Activation {
    type Err = LabError;

    /// Accepts `relu`, `tanh`, `sigmoid`, `leaky_relu` (slope 0.01) and
    /// `leaky_relu(<slope>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "relu" => return Ok(Activation::Relu),
            "tanh" => return Ok(Activation::Tanh),
            "sigmoid" => return Ok(Activation::Sigmoid),
            "leaky_relu" => return Ok(Activation::LeakyRelu(0.01)),
            _ => {}
        }
        if let Some(inner) = s
            .strip_prefix("leaky_relu(")
            .and_then(|r| r.strip_suffix(')'))
        {
            let slope: f64 = inner
                .trim()
                .parse()
                .map_err(|_| LabError::invalid(format!("bad leaky_relu slope '{inner}'")))?;
            return Ok(Activation::LeakyRelu(slope));
        }
        Err(LabError::invalid(format!("unknown activation '{s}'")))
    }
}

/// Architecture of a base network `f(x; θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    input_dim: usize,
    widths: Vec<usize>,
    activation: Activation,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if input_dim == 0 || input_dim > MAX_INPUT_DIM {
            return Err(LabError::invalid(format!(
                "input dimension must be in 1..={MAX_INPUT_DIM}, got {input_dim}"
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(LabError::invalid("hidden layer widths must be positive"));
        }
        let spec = NetworkSpec {
            input_dim,
            widths,
            activation,
        };
        let count = spec.param_count();
        if count > MAX_PARAMS {
            return Err(LabError::TooLarge(format!(
                "network has {count} parameters, limit is {MAX_PARAMS}"
            )));
        }
        Ok(spec)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    pub fn layout(&self) -> ParamLayout {
        let mut b = LayoutBuilder::default();
        let mut prev = self.input_dim;
        for (l, &m) in self.widths.iter().enumerate() {
            b.push(BlockKind::Weight(l + 1), prev, m);
            b.push(BlockKind::Bias(l + 1), 1, m);
            prev = m;
        }
        b.push(BlockKind::OutputWeight, 1, prev);
        b.push(BlockKind::OutputBias, 1, 1);
        b.finish()
    }
}

/// `Σ_l (M_{l−1}·M_l + M_l) + M_L + 1` with `M_0 = d`.
pub fn param_count(spec: &NetworkSpec) -> usize {
    let mut prev = spec.input_dim;
    let mut total = 0;
    for &m in &spec.widths {
        total += prev * m + m;
        prev = m;
    }
    total + prev + 1
}

/// Named region of the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    /// Hidden-layer weights `W_l`, `l` counted from 1.
    Weight(usize),
    Bias(usize),
    OutputWeight,
    OutputBias,
    /// Output weight `a` of a skip-connected special neuron.
    SkipOutput,
    /// Input weights `w` of the special neuron.
    SkipWeight,
    /// Bias `b` of the special neuron.
    SkipBias,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Flat index of entry `(row, col)`.
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        self.offset + row * self.cols + col
    }
}

/// Ordered, gap-free partition of a flat parameter vector into blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<Block>,
    len: usize,
}

#[derive(Default)]
pub(crate) struct LayoutBuilder {
    blocks: Vec<Block>,
    len: usize,
}

impl LayoutBuilder {
    pub(crate) fn push(&mut self, kind: BlockKind, rows: usize, cols: usize) {
        self.blocks.push(Block {
            kind,
            offset: self.len,
            rows,
            cols,
        });
        self.len += rows * cols;
    }

    pub(crate) fn finish(self) -> ParamLayout {
        ParamLayout {
            blocks: self.blocks,
            len: self.len,
        }
    }
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, kind: BlockKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    pub(crate) fn expect_block(&self, kind: BlockKind) -> &Block {
        self.block(kind)
            .unwrap_or_else(|| panic!("layout has no {kind:?} block"))
    }
}

/// Flat parameter storage together with the layout that names its regions.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = vec![0.0; layout.len()];
        ParamVector { layout, values }
    }

    pub fn from_flat(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(LabError::DimensionMismatch {
                what: "flat parameter vector",
                expected: layout.len(),
                got: values.len(),
            });
        }
        Ok(ParamVector { layout, values })
    }

    /// Reassembles a vector from per-block contents, in any order.
    pub fn from_views(layout: ParamLayout, views: &[(BlockKind, Vec<f64>)]) -> Result<Self> {
        let mut out = ParamVector::zeros(layout);
        let mut seen = vec![false; out.layout.blocks.len()];
        for (kind, data) in views {
            let (pos, block) = out
                .layout
                .blocks
                .iter()
                .enumerate()
                .find(|(_, b)| b.kind == *kind)
                .ok_or_else(|| LabError::LayoutMismatch(format!("no block {kind:?}")))?;
            if data.len() != block.len() {
                return Err(LabError::DimensionMismatch {
                    what: "parameter block",
                    expected: block.len(),
                    got: data.len(),
                });
            }
            let range = block.range();
            seen[pos] = true;
            out.values[range].copy_from_slice(data);
        }
        if let Some(pos) = seen.iter().position(|s| !s) {
            return Err(LabError::LayoutMismatch(format!(
                "missing block {:?}",
                out.layout.blocks[pos].kind
            )));
        }
        Ok(out)
    }

    /// Copies every block out, in layout order.
    pub fn split(&self) -> Vec<(BlockKind, Vec<f64>)> {
        self.layout
            .blocks
            .iter()
            .map(|b| (b.kind, self.values[b.range()].to_vec()))
            .collect()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn view(&self, kind: BlockKind) -> Option<&[f64]> {
        let b = self.layout.block(kind)?;
        Some(&self.values[b.range()])
    }

    pub fn view_mut(&mut self, kind: BlockKind) -> Option<&mut [f64]> {
        let range = self.layout.block(kind)?.range();
        Some(&mut self.values[range])
    }

    pub fn get(&self, kind: BlockKind, row: usize, col: usize) -> Option<f64> {
        let b = self.layout.block(kind)?;
        (row < b.rows && col < b.cols).then(|| self.values[b.index(row, col)])
    }
}

/// Evaluates a dense network whose flat parameters follow the layer order
/// `W_1, b_1, …, W_L, b_L, W_{L+1}, b_{L+1}`. `act(layer, neuron, z)` applies
/// the activation of a hidden neuron (`layer` counted from 1).
pub(crate) fn dense_forward<S, F>(
    input_dim: usize,
    widths: &[usize],
    params: &[S],
    x: &[f64],
    mut act: F,
) -> Result<S>
where
    S: Real,
    F: FnMut(usize, usize, S) -> Result<S>,
{
    let mut h: Vec<S> = x.iter().map(|&v| S::from_f64(v)).collect();
    let mut prev = input_dim;
    let mut offset = 0;
    for (l, &m) in widths.iter().enumerate() {
        let weights = &params[offset..offset + prev * m];
        let bias = &params[offset + prev * m..offset + prev * m + m];
        let mut next = Vec::with_capacity(m);
        for j in 0..m {
            let mut z = bias[j].clone();
            for (i, hi) in h.iter().enumerate() {
                z = z + weights[i * m + j].clone() * hi.clone();
            }
            next.push(act(l + 1, j, z)?);
        }
        offset += prev * m + m;
        prev = m;
        h = next;
    }
    let out_w = &params[offset..offset + prev];
    let mut out = params[offset + prev].clone();
    for (w, hi) in out_w.iter().zip(h) {
        out = out + w.clone() * hi;
    }
    Ok(out)
}

fn check_forward_args(spec: &NetworkSpec, n_params: usize, x: &[f64]) -> Result<()> {
    if n_params != spec.param_count() {
        return Err(LabError::DimensionMismatch {
            what: "network parameters",
            expected: spec.param_count(),
            got: n_params,
        });
    }
    if x.len() != spec.input_dim {
        return Err(LabError::DimensionMismatch {
            what: "input vector",
            expected: spec.input_dim,
            got: x.len(),
        });
    }
    Ok(())
}

/// Generic forward pass `f(x; θ)`.
pub fn forward_generic<S: Real>(spec: &NetworkSpec, params: &[S], x: &[f64]) -> Result<S> {
    check_forward_args(spec, params.len(), x)?;
    let act = spec.activation;
    dense_forward(spec.input_dim, &spec.widths, params, x, |_, _, z| {
        Ok(act.apply(z))
    })
}

pub fn forward(spec: &NetworkSpec, params: &[f64], x: &[f64]) -> Result<f64> {
    forward_generic(spec, params, x)
}

/// Row-wise [`forward`].
pub fn forward_batch(spec: &NetworkSpec, params: &[f64], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter().map(|x| forward(spec, params, x)).collect()
}
