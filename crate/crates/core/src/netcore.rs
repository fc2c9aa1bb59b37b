//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Parameters live in one flat [`ParamVector`]. For each weight layer the
//! layout is the `fan_in x fan_out` weight matrix in row-major order followed
//! by the `fan_out` biases, so a batch `X` (`n x fan_in`, row-major) maps to
//! `X W + b`.
//!
//! Losses are defined on the pre-head logits. The output head only affects
//! [`forward`]; [`LossSpec`] variants apply their own sigmoid/softmax and the
//! probability clamp before any logarithm.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Lower clamp applied to every probability before a logarithm.
pub const PROB_FLOOR: f64 = 1e-7;
/// Upper clamp applied to every probability before a logarithm.
pub const PROB_CEIL: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    Linear,
    Sigmoid,
    Softmax,
}

impl OutputHead {
    pub fn name(self) -> &'static str {
        match self {
            OutputHead::Linear => "linear",
            OutputHead::Sigmoid => "sigmoid",
            OutputHead::Softmax => "softmax",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            OutputHead::Linear => 0,
            OutputHead::Sigmoid => 1,
            OutputHead::Softmax => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(OutputHead::Linear),
            1 => Some(OutputHead::Sigmoid),
            2 => Some(OutputHead::Softmax),
            _ => None,
        }
    }
}

/// Layer sizes plus activation choices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    hidden: Activation,
    head: OutputHead,
}

/// Offsets of one weight layer inside a [`ParamVector`].
#[derive(Debug, Clone, Copy)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub bias: usize,
}

impl LayerLayout {
    pub fn end(&self) -> usize {
        self.bias + self.fan_out
    }
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden: Activation, head: OutputHead) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least an input and an output layer, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        if head == OutputHead::Sigmoid && *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Config("a sigmoid head needs exactly one output".into()));
        }
        if head == OutputHead::Softmax && *layer_sizes.last().unwrap() < 2 {
            return Err(Error::Config("a softmax head needs at least two outputs".into()));
        }
        Ok(Self {
            layer_sizes,
            hidden,
            head,
        })
    }

    /// ReLU hidden layers with the given head.
    pub fn relu(layer_sizes: &[usize], head: OutputHead) -> Result<Self> {
        Self::new(layer_sizes.to_vec(), Activation::Relu, head)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let layout = LayerLayout {
                    fan_in: w[0],
                    fan_out: w[1],
                    weights: offset,
                    bias: offset + w[0] * w[1],
                };
                offset = layout.end();
                layout
            })
            .collect()
    }
}

/// Flat network parameters tied to their [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    spec: Arc<NetworkSpec>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec: Arc<NetworkSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, spec needs {}",
                values.len(),
                spec.param_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("parameter {i} is not finite")));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: Arc<NetworkSpec>) -> Self {
        let values = vec![0.0; spec.param_count()];
        Self { spec, values }
    }

    pub fn spec(&self) -> &Arc<NetworkSpec> {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            spec: self.spec.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Row-major `rows x cols` matrix of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty batch {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "batch {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "batch entry ({}, {}) is not finite",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Standard-normal entries, the noise prior `p(z)`.
    pub fn standard_normal<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rand_distr::StandardNormal.sample(rng))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies the given rows into a new batch.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks batches with equal column counts.
    pub fn vstack(parts: &[&Batch]) -> Result<Self> {
        let cols = parts.first().map_or(0, |b| b.cols);
        if parts.iter().any(|b| b.cols != cols) {
            return Err(Error::Shape("vstack column mismatch".into()));
        }
        let rows = parts.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in parts {
            data.extend_from_slice(&b.data);
        }
        Ok(Self { rows, cols, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Zero-mean Gaussian weights with variance `2 / fan_in`, zero biases.
    He,
    /// Every parameter from `N(0, sigma^2)`.
    Prior { sigma: f64 },
}

pub fn init_params(spec: Arc<NetworkSpec>, init: Init, seed: u64) -> Result<ParamVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_with(spec, init, &mut rng)
}

pub fn init_params_with<R: rand::Rng + ?Sized>(
    spec: Arc<NetworkSpec>,
    init: Init,
    rng: &mut R,
) -> Result<ParamVector> {
    let mut values = vec![0.0; spec.param_count()];
    match init {
        Init::He => {
            for layer in spec.layers() {
                let std = (2.0 / layer.fan_in as f64).sqrt();
                for w in &mut values[layer.weights..layer.bias] {
                    let z: f64 = rand_distr::StandardNormal.sample(rng);
                    *w = std * z;
                }
            }
        }
        Init::Prior { sigma } => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!("prior init sigma must be >= 0, got {sigma}")));
            }
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("valid sigma");
                for v in &mut values {
                    *v = normal.sample(rng);
                }
            }
        }
    }
    Ok(ParamVector { spec, values })
}

/// `C = alpha * A B + beta * C` over strided row/column views.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
    c_strides: (isize, isize),
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths cover every index reachable through the strides,
    // checked above in debug builds and guaranteed by every caller's shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            c_strides.0,
            c_strides.1,
        );
    }
}

/// Intermediate values kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Post-activation outputs of every hidden layer.
    hidden: Vec<Batch>,
    /// Pre-head outputs of the last layer.
    logits: Batch,
}

impl Trace {
    pub fn logits(&self) -> &Batch {
        &self.logits
    }
}

fn check_input(spec: &NetworkSpec, x: &Batch) -> Result<()> {
    if x.cols != spec.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} columns, network input is {}",
            x.cols,
            spec.input_dim()
        )));
    }
    Ok(())
}

fn affine(params: &[f64], layer: &LayerLayout, input: &Batch) -> Batch {
    let n = input.rows;
    let bias = &params[layer.bias..layer.end()];
    let mut out = Vec::with_capacity(n * layer.fan_out);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    gemm(
        n,
        layer.fan_in,
        layer.fan_out,
        1.0,
        &input.data,
        (layer.fan_in as isize, 1),
        &params[layer.weights..layer.bias],
        (layer.fan_out as isize, 1),
        1.0,
        &mut out,
        (layer.fan_out as isize, 1),
    );
    Batch {
        rows: n,
        cols: layer.fan_out,
        data: out,
    }
}

fn ensure_finite(b: &Batch, layer: usize) -> Result<()> {
    if b.data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            layer: Some(layer),
            context: "non-finite activation".into(),
        })
    }
}

/// Forward pass keeping what backpropagation needs.
pub fn forward_trace(params: &ParamVector, x: &Batch) -> Result<Trace> {
    let spec = params.spec();
    check_input(spec, x)?;
    let layers = spec.layers();
    let mut hidden = Vec::with_capacity(layers.len() - 1);
    for (l, layer) in layers.iter().enumerate() {
        let input = if l == 0 { x } else { &hidden[l - 1] };
        let mut z = affine(&params.values, layer, input);
        ensure_finite(&z, l)?;
        if l + 1 == layers.len() {
            return Ok(Trace { hidden, logits: z });
        }
        match spec.hidden() {
            Activation::Relu => z.data.iter_mut().for_each(|v| *v = v.max(0.0)),
        }
        hidden.push(z);
    }
    unreachable!("spec has at least one layer")
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(s)` without overflow.
pub fn log_sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        -(-s).exp().ln_1p()
    } else {
        s - s.exp().ln_1p()
    }
}

fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(logits) {
        *o = (s - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn apply_head(head: OutputHead, logits: Batch) -> Batch {
    let mut out = logits;
    match head {
        OutputHead::Linear => {}
        OutputHead::Sigmoid => out
            .data
            .iter_mut()
            .for_each(|v| *v = sigmoid(*v).clamp(PROB_FLOOR, PROB_CEIL)),
        OutputHead::Softmax => {
            let cols = out.cols;
            let mut row = vec![0.0; cols];
            for chunk in out.data.chunks_mut(cols) {
                softmax_row(chunk, &mut row);
                chunk.copy_from_slice(&row);
            }
        }
    }
    out
}

/// Network outputs after the head.
pub fn forward(params: &ParamVector, x: &Batch) -> Result<Batch> {
    let trace = forward_trace(params, x)?;
    let out = apply_head(params.spec().head(), trace.logits);
    ensure_finite(&out, params.spec().depth() - 1)?;
    Ok(out)
}

/// Pre-head outputs.
pub fn logits(params: &ParamVector, x: &Batch) -> Result<Batch> {
    Ok(forward_trace(params, x)?.logits)
}

/// Scalar objectives over a batch of logits. Every log-probability term uses
/// the clamp `[PROB_FLOOR, PROB_CEIL]`; where the clamp is active the term is
/// constant and contributes no gradient.
#[derive(Debug, Clone, Copy)]
pub enum LossSpec<'a> {
    Constant(f64),
    /// `(1/n) * sum_i ||out_i - y_i||^2` on a linear head.
    SquaredError { targets: &'a Batch },
    /// `weight * sum_i ln sigmoid(s_i)` on a single-logit head.
    LogSigmoid { weight: f64 },
    /// `weight * sum_i ln(1 - sigmoid(s_i))` on a single-logit head.
    LogOneMinusSigmoid { weight: f64 },
    /// `weight * sum_i ln softmax(s_i)[labels_i]`.
    LogSoftmaxClass { labels: &'a [usize], weight: f64 },
    /// `weight * sum_i ln softmax(s_i)[0]`, the generated-sample class.
    LogSoftmaxFake { weight: f64 },
    /// `weight * sum_i ln(sum_{y >= 1} softmax(s_i)[y])`.
    LogSoftmaxReal { weight: f64 },
}

#[inline]
fn clamped_log(log_p: f64) -> (f64, bool) {
    let lo = PROB_FLOOR.ln();
    let hi = PROB_CEIL.ln();
    if log_p < lo {
        (lo, false)
    } else if log_p > hi {
        (hi, false)
    } else {
        (log_p, true)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(sum_{y >= 1} softmax(row)[y])`.
pub fn log_prob_real(row: &[f64]) -> f64 {
    log_sum_exp(&row[1..]) - log_sum_exp(row)
}

/// `ln softmax(row)[class]`.
pub fn log_prob_class(row: &[f64], class: usize) -> f64 {
    row[class] - log_sum_exp(row)
}

impl LossSpec<'_> {
    fn check(&self, logits: &Batch) -> Result<()> {
        let single = |what: &str| {
            if logits.cols != 1 {
                Err(Error::Shape(format!("{what} needs a single logit, got {}", logits.cols)))
            } else {
                Ok(())
            }
        };
        let multi = |what: &str| {
            if logits.cols < 2 {
                Err(Error::Shape(format!("{what} needs at least two logits")))
            } else {
                Ok(())
            }
        };
        match self {
            LossSpec::Constant(_) => Ok(()),
            LossSpec::SquaredError { targets } => {
                if targets.rows != logits.rows || targets.cols != logits.cols {
                    Err(Error::Shape("targets do not match outputs".into()))
                } else {
                    Ok(())
                }
            }
            LossSpec::LogSigmoid { .. } => single("log-sigmoid"),
            LossSpec::LogOneMinusSigmoid { .. } => single("log-one-minus-sigmoid"),
            LossSpec::LogSoftmaxClass { labels, .. } => {
                multi("class log-softmax")?;
                if labels.len() != logits.rows {
                    return Err(Error::Shape(format!(
                        "{} labels for {} rows",
                        labels.len(),
                        logits.rows
                    )));
                }
                if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols) {
                    return Err(Error::Data(format!(
                        "label {bad} outside 0..{}",
                        logits.cols
                    )));
                }
                Ok(())
            }
            LossSpec::LogSoftmaxFake { .. } => multi("fake-class log-softmax"),
            LossSpec::LogSoftmaxReal { .. } => multi("real-class log-softmax"),
        }
    }

    /// Loss value and its gradient with respect to the logits.
    pub fn value_and_grad(&self, logits: &Batch) -> Result<(f64, Batch)> {
        self.check(logits)?;
        let mut grad = Batch::zeros(logits.rows, logits.cols);
        let mut value = 0.0;
        match *self {
            LossSpec::Constant(c) => value = c,
            LossSpec::SquaredError { targets } => {
                let n = logits.rows as f64;
                for ((g, &o), &y) in grad.data.iter_mut().zip(&logits.data).zip(&targets.data) {
                    let r = o - y;
                    value += r * r / n;
                    *g = 2.0 * r / n;
                }
            }
            LossSpec::LogSigmoid { weight } | LossSpec::LogOneMinusSigmoid { weight } => {
                let flip = matches!(self, LossSpec::LogOneMinusSigmoid { .. });
                for (g, &s) in grad.data.iter_mut().zip(&logits.data) {
                    // ln(1 - sigmoid(s)) = ln sigmoid(-s)
                    let t = if flip { -s } else { s };
                    let (lp, active) = clamped_log(log_sigmoid(t));
                    value += weight * lp;
                    if active {
                        let d = 1.0 - sigmoid(t);
                        *g = weight * if flip { -d } else { d };
                    }
                }
            }
            LossSpec::LogSoftmaxClass { labels, weight } => {
                let k = logits.cols;
                let mut p = vec![0.0; k];
                for (i, &y) in labels.iter().enumerate() {
                    let row = logits.row(i);
                    let (lp, active) = clamped_log(log_prob_class(row, y));
                    value += weight * lp;
                    if active {
                        softmax_row(row, &mut p);
                        let g = &mut grad.data[i * k..(i + 1) * k];
                        for (j, gj) in g.iter_mut().enumerate() {
                            *gj = weight * (f64::from(u8::from(j == y)) - p[j]);
                        }
                    }
                }
            }
            LossSpec::LogSoftmaxFake { weight } => {
                let k = logits.cols;
                let mut p = vec![0.0; k];
                for i in 0..logits.rows {
                    let row = logits.row(i);
                    let (lp, active) = clamped_log(log_prob_class(row, 0));
                    value += weight * lp;
                    if active {
                        softmax_row(row, &mut p);
                        let g = &mut grad.data[i * k..(i + 1) * k];
                        for (j, gj) in g.iter_mut().enumerate() {
                            *gj = weight * (f64::from(u8::from(j == 0)) - p[j]);
                        }
                    }
                }
            }
            LossSpec::LogSoftmaxReal { weight } => {
                let k = logits.cols;
                let mut p = vec![0.0; k];
                for i in 0..logits.rows {
                    let row = logits.row(i);
                    let log_q = log_prob_real(row);
                    let (lp, active) = clamped_log(log_q);
                    value += weight * lp;
                    if active {
                        softmax_row(row, &mut p);
                        let inv_q = (-log_q).exp();
                        let g = &mut grad.data[i * k..(i + 1) * k];
                        g[0] = -weight * p[0];
                        for j in 1..k {
                            g[j] = weight * p[j] * (inv_q - 1.0);
                        }
                    }
                }
            }
        }
        if !value.is_finite() {
            return Err(Error::numeric("loss is not finite"));
        }
        Ok((value, grad))
    }
}

/// Backpropagates `grad_logits` through the network.
///
/// Parameter gradients are added into `param_grad` when given (scaled by
/// `scale`); the gradient with respect to the input is returned when
/// `want_input` is set.
pub fn backward(
    params: &ParamVector,
    x: &Batch,
    trace: &Trace,
    grad_logits: Batch,
    scale: f64,
    mut param_grad: Option<&mut [f64]>,
    want_input: bool,
) -> Option<Batch> {
    let spec = params.spec();
    let layers = spec.layers();
    let n = x.rows;
    let mut delta = grad_logits;
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = if l == 0 { x } else { &trace.hidden[l - 1] };
        if let Some(acc) = param_grad.as_deref_mut() {
            // dW += input^T delta
            gemm(
                layer.fan_in,
                n,
                layer.fan_out,
                scale,
                &input.data,
                (1, layer.fan_in as isize),
                &delta.data,
                (layer.fan_out as isize, 1),
                1.0,
                &mut acc[layer.weights..layer.bias],
                (layer.fan_out as isize, 1),
            );
            let db = &mut acc[layer.bias..layer.end()];
            for row in delta.data.chunks(layer.fan_out) {
                for (b, &d) in db.iter_mut().zip(row) {
                    *b += scale * d;
                }
            }
        }
        if l == 0 && !want_input {
            return None;
        }
        // delta_prev = delta W^T
        let mut prev = vec![0.0; n * layer.fan_in];
        gemm(
            n,
            layer.fan_out,
            layer.fan_in,
            1.0,
            &delta.data,
            (layer.fan_out as isize, 1),
            &params.values[layer.weights..layer.bias],
            (1, layer.fan_out as isize),
            0.0,
            &mut prev,
            (layer.fan_in as isize, 1),
        );
        if l == 0 {
            let mut g = Batch {
                rows: n,
                cols: layer.fan_in,
                data: prev,
            };
            if scale != 1.0 {
                g.data.iter_mut().for_each(|v| *v *= scale);
            }
            return Some(g);
        }
        // ReLU subgradient: 1 where the activation is positive, 0 otherwise (including at 0).
        for (p, &a) in prev.iter_mut().zip(&input.data) {
            if a <= 0.0 {
                *p = 0.0;
            }
        }
        delta = Batch {
            rows: n,
            cols: layer.fan_in,
            data: prev,
        };
    }
    None
}

/// Loss value and gradient with respect to the parameters.
pub fn loss_grad(params: &ParamVector, x: &Batch, loss: &LossSpec) -> Result<(f64, ParamVector)> {
    let trace = forward_trace(params, x)?;
    let (value, g_logits) = loss.value_and_grad(&trace.logits)?;
    let mut grad = ParamVector::zeros(params.spec().clone());
    backward(params, x, &trace, g_logits, 1.0, Some(&mut grad.values), false);
    if grad.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("parameter gradient is not finite"));
    }
    Ok((value, grad))
}

/// Gradient of the loss with respect to the network input.
pub fn grad_wrt_input(params: &ParamVector, x: &Batch, loss: &LossSpec) -> Result<Batch> {
    let trace = forward_trace(params, x)?;
    let (_, g_logits) = loss.value_and_grad(&trace.logits)?;
    let g = backward(params, x, &trace, g_logits, 1.0, None, true).expect("input gradient requested");
    if g.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("input gradient is not finite"));
    }
    Ok(g)
}
