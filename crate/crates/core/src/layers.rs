//! Layers, forward propagation and backpropagation.
//!
//! A [`Network`] is a stack of [`Layer`]s whose last output is fed to a softmax. The
//! classifier head is therefore just the final `Linear` layer, and a network with no layers
//! applies the softmax straight to its input.
//!
//! Weights are stored `fan_out x fan_in` and batches hold one example per row, so a layer
//! computes `pre = X W^T + b`.

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Real, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Linear,
    Relu,
    /// `h = x * 1(x > threshold)`, no learned bias.
    ZeroBiasRelu {
        threshold: f64,
    },
    /// Only used to reproduce activation histograms; never built from an architecture string.
    Sigmoid,
    /// Inverted dropout with drop probability `rate`.
    Dropout {
        rate: f64,
    },
    /// Fixed `(x - mean) / std`, fitted after pretraining a layer.
    Standardize,
}

impl LayerKind {
    pub fn is_nonlinear(self) -> bool {
        matches!(
            self,
            LayerKind::Relu | LayerKind::ZeroBiasRelu { .. } | LayerKind::Sigmoid
        )
    }

    pub fn has_params(self) -> bool {
        matches!(
            self,
            LayerKind::Linear
                | LayerKind::Relu
                | LayerKind::ZeroBiasRelu { .. }
                | LayerKind::Sigmoid
        )
    }

    /// Activation threshold where the derivative jumps, if any.
    pub fn kink(self) -> Option<f64> {
        match self {
            LayerKind::Relu => Some(0.0),
            LayerKind::ZeroBiasRelu { threshold } => Some(threshold),
            _ => None,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            LayerKind::Linear => "L",
            LayerKind::Relu => "R",
            LayerKind::ZeroBiasRelu { .. } => "Z",
            LayerKind::Sigmoid => "S",
            LayerKind::Dropout { .. } => "D",
            LayerKind::Standardize => "N",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind,
    /// `fan_out x fan_in` for parametric layers; `2 x width` (mean row, std row) for
    /// `Standardize`; empty for `Dropout`.
    pub weights: Matrix<T>,
    /// Length `fan_out` for parametric layers, always zero for `ZeroBiasRelu`.
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    /// Glorot-uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(kind: LayerKind, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        assert!(kind.has_params(), "{kind:?} carries no weights");
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Matrix::from_fn(fan_out, fan_in, |_, _| {
            T::from_f64(rng.uniform_range(-limit, limit))
        });
        Layer {
            kind,
            weights,
            bias: vec![T::zero(); fan_out],
        }
    }

    pub fn from_parts(kind: LayerKind, weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if !kind.has_params() {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} layers have no weights"
            )));
        }
        if bias.len() != weights.rows() {
            return Err(Error::shape("layer bias", weights.shape(), (bias.len(), 1)));
        }
        if matches!(kind, LayerKind::ZeroBiasRelu { .. }) && bias.iter().any(|b| !b.is_zero()) {
            return Err(Error::InvalidArgument(
                "zero-bias ReLU layers must have b = 0".into(),
            ));
        }
        Ok(Layer {
            kind,
            weights,
            bias,
        })
    }

    pub fn dropout(rate: f64) -> Self {
        assert!(
            (0.0..1.0).contains(&rate),
            "dropout rate {rate} outside [0, 1)"
        );
        Layer {
            kind: LayerKind::Dropout { rate },
            weights: Matrix::zeros(0, 0),
            bias: vec![],
        }
    }

    /// Standard deviations are floored at `1e-8`.
    pub fn standardize(mean: &[T], std: &[T]) -> Self {
        assert_eq!(mean.len(), std.len());
        let floor = T::from_f64(1e-8);
        let mut data = mean.to_vec();
        data.extend(std.iter().map(|&s| if s > floor { s } else { floor }));
        Layer {
            kind: LayerKind::Standardize,
            weights: Matrix::from_vec(2, mean.len(), data).expect("two rows"),
            bias: vec![],
        }
    }

    pub fn fan_in(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Dropout { .. } => None,
            LayerKind::Standardize => Some(self.weights.cols()),
            _ => Some(self.weights.cols()),
        }
    }

    pub fn fan_out(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Dropout { .. } => None,
            LayerKind::Standardize => Some(self.weights.cols()),
            _ => Some(self.weights.rows()),
        }
    }

    /// Trainable parameter count (zero-bias biases are not parameters).
    pub fn num_params(&self) -> usize {
        match self.kind {
            LayerKind::ZeroBiasRelu { .. } => self.weights.len(),
            k if k.has_params() => self.weights.len() + self.bias.len(),
            _ => 0,
        }
    }

    pub fn standardizer(&self) -> Option<(&[T], &[T])> {
        (self.kind == LayerKind::Standardize).then(|| (self.weights.row(0), self.weights.row(1)))
    }

    /// `X W^T + b`.
    pub fn pre_activation(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        let mut pre = input.matmul_nt(&self.weights)?;
        pre.add_row_vector(&self.bias)?;
        Ok(pre)
    }

    /// Elementwise activation; identity for `Linear`.
    pub fn activate(&self, pre: &Matrix<T>) -> Matrix<T> {
        match self.kind {
            LayerKind::Relu => pre.map(|v| if v > T::zero() { v } else { T::zero() }),
            LayerKind::ZeroBiasRelu { threshold } => {
                let t = T::from_f64(threshold);
                pre.map(|v| if v > t { v } else { T::zero() })
            }
            LayerKind::Sigmoid => pre.map(|v| T::one() / (T::one() + (-v).exp())),
            _ => pre.clone(),
        }
    }

    /// Forward one layer. Returns `(pre, post, mask)`; `pre` is only kept for nonlinear
    /// layers and `mask` only for dropout in training mode.
    #[allow(clippy::type_complexity)]
    fn apply(
        &self,
        input: &Matrix<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Option<Matrix<T>>, Matrix<T>, Option<Matrix<T>>)> {
        match self.kind {
            LayerKind::Dropout { rate } => {
                if mode == Mode::Eval || rate == 0.0 {
                    return Ok((None, input.clone(), None));
                }
                let keep = 1.0 - rate;
                let scale = T::from_f64(1.0 / keep);
                let mask = Matrix::from_fn(input.rows(), input.cols(), |_, _| {
                    if rng.bernoulli(keep) {
                        scale
                    } else {
                        T::zero()
                    }
                });
                let post = input.hadamard(&mask)?;
                Ok((None, post, Some(mask)))
            }
            LayerKind::Standardize => {
                let (mean, std) = self.standardizer().expect("standardize layer");
                if input.cols() != mean.len() {
                    return Err(Error::shape("standardize", input.shape(), (1, mean.len())));
                }
                let mut out = input.clone();
                if out.cols() > 0 {
                    for row in out.data_mut().chunks_exact_mut(mean.len()) {
                        for ((v, &m), &s) in row.iter_mut().zip(mean).zip(std) {
                            *v = (*v - m) / s;
                        }
                    }
                }
                Ok((None, out, None))
            }
            LayerKind::Linear => Ok((None, self.pre_activation(input)?, None)),
            _ => {
                let pre = self.pre_activation(input)?;
                let post = self.activate(&pre);
                Ok((Some(pre), post, None))
            }
        }
    }

    /// `d post / d pre` evaluated elementwise, for nonlinear layers.
    fn activation_grad(&self, pre: &Matrix<T>, post: &Matrix<T>) -> Matrix<T> {
        match self.kind {
            LayerKind::Relu => pre.map(|v| if v > T::zero() { T::one() } else { T::zero() }),
            LayerKind::ZeroBiasRelu { threshold } => {
                let t = T::from_f64(threshold);
                pre.map(|v| if v > t { T::one() } else { T::zero() })
            }
            LayerKind::Sigmoid => post.map(|s| s * (T::one() - s)),
            _ => Matrix::filled(pre.rows(), pre.cols(), T::one()),
        }
    }
}

/// Per-layer activations recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub mode: Mode,
    pub input: Matrix<T>,
    pub steps: Vec<TraceStep<T>>,
    /// Softmax of the last layer output.
    pub probs: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct TraceStep<T> {
    /// Pre-activation, present for nonlinear layers.
    pub pre: Option<Matrix<T>>,
    pub post: Matrix<T>,
    /// Dropout mask including the `1 / keep` scale.
    pub mask: Option<Matrix<T>>,
}

impl<T: Real> ForwardTrace<T> {
    /// Input fed to layer `k`.
    pub fn layer_input(&self, k: usize) -> &Matrix<T> {
        if k == 0 {
            &self.input
        } else {
            &self.steps[k - 1].post
        }
    }

    /// Output of the last layer, before the softmax.
    pub fn logits(&self) -> &Matrix<T> {
        self.steps.last().map_or(&self.input, |s| &s.post)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    /// Same shape as the layer weights; empty for parameter-free layers.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Real> GradientSet<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }
}

/// Gradients plus the error signal at each layer's pre-activation (`None` for layers
/// without parameters).
#[derive(Debug, Clone)]
pub struct Backprop<T> {
    pub loss: f64,
    pub grads: GradientSet<T>,
    pub deltas: Vec<Option<Matrix<T>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub input_dim: usize,
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Network<T> {
    pub fn new(input_dim: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        let net = Network { input_dim, layers };
        net.validate()?;
        Ok(net)
    }

    /// Checks that layer widths chain from `input_dim` through the stack.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(fan_in) = layer.fan_in() {
                if fan_in != width {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i} expects {fan_in} inputs but receives {width}"
                    )));
                }
                width = layer.fan_out().expect("fan_out");
            }
        }
        Ok(())
    }

    /// Width of the softmax input.
    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| l.fan_out())
            .unwrap_or(self.input_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    kind: l.kind,
                    weights: l.weights.cast(),
                    bias: l.bias.iter().map(|&b| U::from_f64(b.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Copy with every dropout layer removed.
    pub fn without_dropout(&self) -> Self {
        Network {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .filter(|l| !matches!(l.kind, LayerKind::Dropout { .. }))
                .cloned()
                .collect(),
        }
    }

    pub fn forward(
        &self,
        input: &Matrix<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Matrix<T>, ForwardTrace<T>)> {
        if input.cols() != self.input_dim {
            return Err(Error::shape(
                "forward",
                input.shape(),
                (input.rows(), self.input_dim),
            ));
        }
        let mut steps: Vec<TraceStep<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = steps.last().map_or(input, |s| &s.post);
            let (pre, post, mask) = layer.apply(x, mode, rng)?;
            if !post.all_finite() {
                return Err(Error::NonFinite {
                    layer: i,
                    stage: "forward",
                });
            }
            steps.push(TraceStep { pre, post, mask });
        }
        let logits = steps.last().map_or(input, |s| &s.post);
        let probs = softmax_rows(logits);
        let trace = ForwardTrace {
            mode,
            input: input.clone(),
            steps,
            probs: probs.clone(),
        };
        Ok((probs, trace))
    }

    /// Evaluation-mode forward pass; dropout is the identity so no RNG is consumed.
    pub fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        let mut rng = Rng::new(0);
        Ok(self.forward(input, Mode::Eval, &mut rng)?.0)
    }

    /// Mean cross-entropy and parameter gradients for the batch recorded in `trace`.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        labels: &[usize],
    ) -> Result<(f64, GradientSet<T>)> {
        let bp = self.backprop(trace, labels)?;
        Ok((bp.loss, bp.grads))
    }

    pub fn backprop(&self, trace: &ForwardTrace<T>, labels: &[usize]) -> Result<Backprop<T>> {
        if trace.steps.len() != self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "trace has {} steps but the network has {} layers",
                trace.steps.len(),
                self.layers.len()
            )));
        }
        let batch = trace.input.rows();
        if labels.len() != batch {
            return Err(Error::InvalidArgument(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        let classes = trace.probs.cols();
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let (loss, mut g) = cross_entropy(trace.logits(), labels);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                layer: self.layers.len(),
                stage: "loss",
            });
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut deltas = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let step = &trace.steps[k];
            if step.post.shape() != g.shape() {
                return Err(Error::shape("backward", step.post.shape(), g.shape()));
            }
            match layer.kind {
                LayerKind::Dropout { .. } => {
                    if let Some(mask) = &step.mask {
                        g = g.hadamard(mask)?;
                    }
                    grads.push(LayerGrad {
                        weights: Matrix::zeros(0, 0),
                        bias: vec![],
                    });
                    deltas.push(None);
                }
                LayerKind::Standardize => {
                    let (_, std) = layer.standardizer().expect("standardize layer");
                    for row in g.data_mut().chunks_exact_mut(std.len().max(1)) {
                        for (v, &s) in row.iter_mut().zip(std) {
                            *v = *v / s;
                        }
                    }
                    grads.push(LayerGrad {
                        weights: Matrix::zeros(2, std.len()),
                        bias: vec![],
                    });
                    deltas.push(None);
                }
                _ => {
                    let delta = match &step.pre {
                        Some(pre) => g.hadamard(&layer.activation_grad(pre, &step.post))?,
                        None => g,
                    };
                    let input = trace.layer_input(k);
                    let d_weights = delta.matmul_tn(input)?;
                    let d_bias = if matches!(layer.kind, LayerKind::ZeroBiasRelu { .. }) {
                        vec![T::zero(); layer.bias.len()]
                    } else {
                        delta.column_sums()
                    };
                    g = delta.matmul(&layer.weights)?;
                    if !d_weights.all_finite() || !g.all_finite() {
                        return Err(Error::NonFinite {
                            layer: k,
                            stage: "backward",
                        });
                    }
                    grads.push(LayerGrad {
                        weights: d_weights,
                        bias: d_bias,
                    });
                    deltas.push(Some(delta));
                }
            }
        }
        grads.reverse();
        deltas.reverse();
        Ok(Backprop {
            loss,
            grads: GradientSet { layers: grads },
            deltas,
        })
    }

    /// Mean cross-entropy in evaluation mode.
    pub fn loss(&self, input: &Matrix<T>, labels: &[usize]) -> Result<f64> {
        let mut rng = Rng::new(0);
        let (_, trace) = self.forward(input, Mode::Eval, &mut rng)?;
        Ok(cross_entropy(trace.logits(), labels).0)
    }
}

/// Row-wise softmax, computed in `f64`.
pub fn softmax_rows<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|&v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (o, e) in out.row_mut(i).iter_mut().zip(exps) {
            *o = T::from_f64(e / z);
        }
    }
    out
}

/// Mean cross-entropy of `softmax(logits)` and its gradient w.r.t. the logits.
pub fn cross_entropy<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> (f64, Matrix<T>) {
    let batch = logits.rows();
    let mut grad = Matrix::zeros(batch, logits.cols());
    if batch == 0 {
        return (0.0, grad);
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate().take(batch) {
        let row = logits.row(i);
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|&v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += z.ln() + max - row[y].as_f64();
        for (j, (o, e)) in grad.row_mut(i).iter_mut().zip(exps).enumerate() {
            let onehot = if j == y { 1.0 } else { 0.0 };
            *o = T::from_f64((e / z - onehot) / batch as f64);
        }
    }
    (total / batch as f64, grad)
}

/// Folds a linear layer into the nonlinear layer that consumes it:
/// `w = w_i w_l`, `b = w_i b_l + b_i`.
///
/// A zero-bias layer absorbs a nonzero `w_i b_l` only when its threshold is 0, in which
/// case the result is the equivalent biased ReLU.
pub fn absorb_linear<T: Real>(upper: &Layer<T>, linear: &Layer<T>) -> Result<Layer<T>> {
    if linear.kind != LayerKind::Linear {
        return Err(Error::InvalidArgument(format!(
            "can only absorb a Linear layer, got {:?}",
            linear.kind
        )));
    }
    if !upper.kind.has_params() {
        return Err(Error::InvalidArgument(format!(
            "cannot absorb into {:?}",
            upper.kind
        )));
    }
    let weights = upper.weights.matmul(&linear.weights)?;
    let b_l = Matrix::from_vec(linear.bias.len(), 1, linear.bias.clone())?;
    let mut bias = upper.weights.matmul(&b_l)?.into_vec();
    for (b, &bi) in bias.iter_mut().zip(&upper.bias) {
        *b = *b + bi;
    }
    let kind = match upper.kind {
        LayerKind::ZeroBiasRelu { threshold } if bias.iter().any(|b| !b.is_zero()) => {
            if threshold != 0.0 {
                return Err(Error::InvalidArgument(
                    "absorbing a biased linear layer into a thresholded zero-bias layer \
                     has no zero-bias equivalent"
                        .into(),
                ));
            }
            LayerKind::Relu
        }
        k => k,
    };
    Ok(Layer {
        kind,
        weights,
        bias,
    })
}

/// Change of the absorbed weight `w_i w_l` when the pair receives updates
/// `(dw_i, dw_l)`: `dw_i dw_l + w_i dw_l + dw_i w_l`.
pub fn equivalent_update<T: Real>(
    d_upper: &Matrix<T>,
    d_linear: &Matrix<T>,
    upper: &Matrix<T>,
    linear: &Matrix<T>,
) -> Result<Matrix<T>> {
    if d_upper.shape() != upper.shape() {
        return Err(Error::shape(
            "equivalent_update",
            d_upper.shape(),
            upper.shape(),
        ));
    }
    if d_linear.shape() != linear.shape() {
        return Err(Error::shape(
            "equivalent_update",
            d_linear.shape(),
            linear.shape(),
        ));
    }
    let mut out = d_upper.matmul(d_linear)?;
    out.add_assign(&upper.matmul(d_linear)?)?;
    out.add_assign(&d_upper.matmul(linear)?)?;
    Ok(out)
}

/// Weights plus biases of a fully connected stack with the given widths
/// (input first). `[N, L, N]` gives `2NL + L + N`; `[N, N]` gives `N^2 + N`.
pub fn count_params(widths: &[usize]) -> u64 {
    widths
        .windows(2)
        .map(|w| w[0] as u64 * w[1] as u64 + w[1] as u64)
        .sum()
}

/// Hidden unit type of an architecture token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    ZeroBias,
    Relu,
    Linear,
}

impl UnitKind {
    pub fn layer_kind(self) -> LayerKind {
        match self {
            UnitKind::ZeroBias => LayerKind::ZeroBiasRelu { threshold: 0.0 },
            UnitKind::Relu => LayerKind::Relu,
            UnitKind::Linear => LayerKind::Linear,
        }
    }

    pub fn letter(self) -> char {
        match self {
            UnitKind::ZeroBias => 'Z',
            UnitKind::Relu => 'R',
            UnitKind::Linear => 'L',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HiddenSpec {
    pub width: usize,
    pub kind: UnitKind,
}

/// Hidden layer sequence plus the softmax class count, e.g. `512Z-128L-512Z-10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub hidden: Vec<HiddenSpec>,
    pub classes: usize,
}

/// Dropout rates for supervised networks: one layer on the input and one after every
/// nonlinear hidden layer. A rate of 0 inserts nothing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DropoutRates {
    pub input: f64,
    pub hidden: f64,
}

impl Architecture {
    /// Parameter count of the hidden stack and head for `input_dim` inputs.
    pub fn num_params(&self, input_dim: usize) -> usize {
        let mut width = input_dim;
        let mut total = 0;
        for h in &self.hidden {
            total += width * h.width;
            if h.kind != UnitKind::ZeroBias {
                total += h.width;
            }
            width = h.width;
        }
        total + width * self.classes + self.classes
    }

    /// Freshly initialised network: hidden layers, dropout where requested, linear head.
    pub fn build<T: Real>(
        &self,
        input_dim: usize,
        dropout: DropoutRates,
        rng: &mut Rng,
    ) -> Network<T> {
        let mut layers = Vec::new();
        if dropout.input > 0.0 {
            layers.push(Layer::dropout(dropout.input));
        }
        let mut width = input_dim;
        for h in &self.hidden {
            let kind = h.kind.layer_kind();
            layers.push(Layer::new(kind, width, h.width, rng));
            if kind.is_nonlinear() && dropout.hidden > 0.0 {
                layers.push(Layer::dropout(dropout.hidden));
            }
            width = h.width;
        }
        layers.push(Layer::new(LayerKind::Linear, width, self.classes, rng));
        Network { input_dim, layers }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for h in &self.hidden {
            write!(f, "{}{}-", h.width, h.kind.letter())?;
        }
        write!(f, "{}", self.classes)
    }
}
