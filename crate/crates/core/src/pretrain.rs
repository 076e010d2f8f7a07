//! Greedy layer-wise pretraining with tied-weight autoencoders.
//!
//! Nonlinear layers are trained as zero-bias autoencoders: `h = (W x) * 1(W x > theta)`,
//! reconstruction `W^T h`. Linear bottlenecks are trained as linear autoencoders with
//! encoder bias `b`, decoder bias `c` and an L2 penalty `lambda ||W||_F^2` added to the
//! mean per-example reconstruction cost. After each layer its training-set output is
//! standardized and the fitted statistics are kept as a fixed `Standardize` layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Architecture, Layer, LayerKind, Network, UnitKind};
use crate::numcore::{Matrix, Real, Rng};
use crate::optim::momentum_update;

/// Optimiser settings for one autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerSchedule {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Only used by linear autoencoders.
    pub weight_decay: f64,
    /// Only used by zero-bias autoencoders.
    pub threshold: f64,
}

impl LayerSchedule {
    pub fn zae() -> Self {
        LayerSchedule {
            epochs: 10,
            lr: 1e-3,
            momentum: 0.9,
            batch_size: 100,
            weight_decay: 0.0,
            threshold: 1.0,
        }
    }

    pub fn linear() -> Self {
        LayerSchedule {
            lr: 1e-4,
            weight_decay: 1.0,
            threshold: 0.0,
            ..Self::zae()
        }
    }
}

impl Default for LayerSchedule {
    fn default() -> Self {
        Self::zae()
    }
}

/// Per-hidden-layer schedules, in architecture order.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSchedule {
    pub layers: Vec<LayerSchedule>,
}

impl PretrainSchedule {
    /// `zae` for every nonlinear layer and `linear` for every bottleneck.
    pub fn uniform(arch: &Architecture, zae: LayerSchedule, linear: LayerSchedule) -> Self {
        PretrainSchedule {
            layers: arch
                .hidden
                .iter()
                .map(|h| {
                    if h.kind == UnitKind::Linear {
                        linear
                    } else {
                        zae
                    }
                })
                .collect(),
        }
    }
}

/// Which tied autoencoder to train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AeKind {
    ZeroBias { threshold: f64 },
    Linear { weight_decay: f64 },
}

/// Encoder weights `k x d`, encoder bias `k` and decoder bias `d`. Both biases stay zero
/// for the zero-bias kind.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub decoder_bias: Vec<T>,
}

impl<T: Real> AeParams<T> {
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let layer = Layer::<T>::new(LayerKind::Linear, input, hidden, rng);
        AeParams {
            weights: layer.weights,
            bias: vec![T::zero(); hidden],
            decoder_bias: vec![T::zero(); input],
        }
    }
}

/// Mean per-example squared reconstruction error (plus the weight penalty for linear
/// autoencoders) and its gradient. The threshold indicator is treated as a constant.
pub fn ae_loss_grad<T: Real>(
    p: &AeParams<T>,
    kind: AeKind,
    x: &Matrix<T>,
) -> Result<(f64, AeParams<T>)> {
    let batch = x.rows();
    if batch == 0 {
        return Err(Error::InvalidArgument("empty autoencoder batch".into()));
    }
    let mut pre = x.matmul_nt(&p.weights)?;
    pre.add_row_vector(&p.bias)?;
    let (h, mask) = match kind {
        AeKind::ZeroBias { threshold } => {
            let t = T::from_f64(threshold);
            let mask = pre.map(|v| if v > t { T::one() } else { T::zero() });
            (pre.hadamard(&mask)?, Some(mask))
        }
        AeKind::Linear { .. } => (pre, None),
    };
    let mut residual = h.matmul(&p.weights)?;
    residual.add_row_vector(&p.decoder_bias)?;
    let residual = residual.sub(x)?;
    let sq: f64 = residual
        .data()
        .iter()
        .map(|v| v.as_f64() * v.as_f64())
        .sum();
    let wd = match kind {
        AeKind::Linear { weight_decay } => weight_decay,
        AeKind::ZeroBias { .. } => 0.0,
    };
    let penalty = wd
        * p.weights
            .data()
            .iter()
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>();
    let loss = sq / batch as f64 + penalty;

    let g_res = residual.scale(T::from_f64(2.0 / batch as f64));
    let g_h = g_res.matmul_nt(&p.weights)?;
    let g_pre = match &mask {
        Some(m) => g_h.hadamard(m)?,
        None => g_h,
    };
    let mut g_w = g_pre.matmul_tn(x)?;
    g_w.add_assign(&h.matmul_tn(&g_res)?)?;
    if wd != 0.0 {
        g_w.add_assign(&p.weights.scale(T::from_f64(2.0 * wd)))?;
    }
    let (g_b, g_c) = match kind {
        AeKind::Linear { .. } => (g_pre.column_sums(), g_res.column_sums()),
        AeKind::ZeroBias { .. } => (
            vec![T::zero(); p.bias.len()],
            vec![T::zero(); p.decoder_bias.len()],
        ),
    };
    Ok((
        loss,
        AeParams {
            weights: g_w,
            bias: g_b,
            decoder_bias: g_c,
        },
    ))
}

/// Mean per-example squared reconstruction error without any penalty.
pub fn reconstruction_mse<T: Real>(p: &AeParams<T>, kind: AeKind, x: &Matrix<T>) -> Result<f64> {
    let kind = match kind {
        AeKind::Linear { .. } => AeKind::Linear { weight_decay: 0.0 },
        k => k,
    };
    Ok(ae_loss_grad(p, kind, x)?.0)
}

/// Trained autoencoder with the mean training loss of every epoch (entry 0 is the loss
/// at initialisation).
#[derive(Debug, Clone)]
pub struct AeFit<T> {
    pub params: AeParams<T>,
    pub epoch_losses: Vec<f64>,
}

fn full_loss<T: Real>(
    p: &AeParams<T>,
    kind: AeKind,
    x: &Matrix<T>,
    batch_size: usize,
) -> Result<f64> {
    let mut total = 0.0;
    let mut start = 0;
    while start < x.rows() {
        let end = (start + batch_size).min(x.rows());
        let idx: Vec<usize> = (start..end).collect();
        let (l, _) = ae_loss_grad(p, kind, &x.select_rows(&idx))?;
        total += l * (end - start) as f64;
        start = end;
    }
    Ok(total / x.rows() as f64)
}

/// Minibatch SGD with classical momentum on a tied autoencoder.
pub fn train_autoencoder<T: Real>(
    data: &Matrix<T>,
    init: AeParams<T>,
    kind: AeKind,
    schedule: &LayerSchedule,
    rng: &mut Rng,
) -> Result<AeFit<T>> {
    if data.rows() == 0 {
        return Err(Error::InvalidArgument("no pretraining data".into()));
    }
    if init.weights.cols() != data.cols() {
        return Err(Error::shape(
            "autoencoder",
            data.shape(),
            init.weights.shape(),
        ));
    }
    if schedule.batch_size == 0 || !(schedule.lr > 0.0) || !(0.0..1.0).contains(&schedule.momentum)
    {
        return Err(Error::Config(format!(
            "invalid pretraining schedule {schedule:?}"
        )));
    }
    let mut p = init;
    let mut vw = vec![T::zero(); p.weights.len()];
    let mut vb = vec![T::zero(); p.bias.len()];
    let mut vc = vec![T::zero(); p.decoder_bias.len()];
    let mut epoch_losses = vec![full_loss(&p, kind, data, schedule.batch_size)?];
    for epoch in 0..schedule.epochs {
        let perm = rng.permutation(data.rows());
        for chunk in perm.chunks(schedule.batch_size) {
            let (loss, g) = ae_loss_grad(&p, kind, &data.select_rows(chunk))?;
            if !loss.is_finite() || !g.weights.all_finite() {
                return Err(Error::Diverged(format!(
                    "autoencoder loss became {loss} in epoch {epoch}"
                )));
            }
            let (lr, mu) = (schedule.lr, schedule.momentum);
            momentum_update(p.weights.data_mut(), g.weights.data(), &mut vw, lr, mu, 0.0);
            if let AeKind::Linear { .. } = kind {
                momentum_update(&mut p.bias, &g.bias, &mut vb, lr, mu, 0.0);
                momentum_update(&mut p.decoder_bias, &g.decoder_bias, &mut vc, lr, mu, 0.0);
            }
        }
        let loss = full_loss(&p, kind, data, schedule.batch_size)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "autoencoder loss became {loss} after epoch {epoch}"
            )));
        }
        epoch_losses.push(loss);
    }
    Ok(AeFit {
        params: p,
        epoch_losses,
    })
}

/// Zero-bias autoencoder with `hidden` units, trained at `schedule.threshold`. The
/// returned layer keeps that threshold; callers switch it off for downstream use.
pub fn zae_pretrain<T: Real>(
    data: &Matrix<T>,
    hidden: usize,
    schedule: &LayerSchedule,
    rng: &mut Rng,
) -> Result<(Layer<T>, AeFit<T>)> {
    let init = AeParams::init(data.cols(), hidden, rng);
    let kind = AeKind::ZeroBias {
        threshold: schedule.threshold,
    };
    let fit = train_autoencoder(data, init, kind, schedule, rng)?;
    let layer = Layer::from_parts(
        LayerKind::ZeroBiasRelu {
            threshold: schedule.threshold,
        },
        fit.params.weights.clone(),
        vec![T::zero(); hidden],
    )?;
    Ok((layer, fit))
}

/// Linear autoencoder with `hidden` units and penalty `schedule.weight_decay`.
pub fn linear_ae_pretrain<T: Real>(
    data: &Matrix<T>,
    hidden: usize,
    schedule: &LayerSchedule,
    rng: &mut Rng,
) -> Result<(Layer<T>, AeFit<T>)> {
    let init = AeParams::init(data.cols(), hidden, rng);
    let kind = AeKind::Linear {
        weight_decay: schedule.weight_decay,
    };
    let fit = train_autoencoder(data, init, kind, schedule, rng)?;
    let layer = Layer::from_parts(
        LayerKind::Linear,
        fit.params.weights.clone(),
        fit.params.bias.clone(),
    )?;
    Ok((layer, fit))
}

/// Per-column mean and population standard deviation, accumulated in `f64`.
pub fn column_stats<T: Real>(x: &Matrix<T>) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows().max(1) as f64;
    let mean: Vec<f64> = x.column_sums().iter().map(|s| s.as_f64() / n).collect();
    let mut var = vec![0.0; x.cols()];
    for row in x.row_iter() {
        for ((v, &m), a) in var.iter_mut().zip(&mean).zip(row) {
            let d = a.as_f64() - m;
            *v += d * d;
        }
    }
    (mean, var.into_iter().map(|v| (v / n).sqrt()).collect())
}

/// Statistics baked into the network after each pretrained layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    /// Index of the `Standardize` layer in the returned network.
    pub layer: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Standardizer {
    pub layers: Vec<LayerStats>,
}

#[derive(Debug, Clone)]
pub struct StackOutcome<T> {
    /// Hidden layers with their standardizers; no classifier head.
    pub network: Network<T>,
    pub standardizer: Standardizer,
    /// Standardized output of the top layer on the training data.
    pub features: Matrix<T>,
    /// Per hidden layer: mean training loss per epoch, starting at initialisation.
    pub losses: Vec<Vec<f64>>,
}

/// Pretrains every hidden layer bottom-up. Zero-bias layers are trained at the schedule
/// threshold and switched to threshold 0 before their outputs feed the next layer.
/// `R` layers are trained the same way as `Z` layers and then used as ReLUs with a zero
/// bias.
pub fn stack_pretrain<T: Real>(
    arch: &Architecture,
    data: &Matrix<T>,
    schedule: &PretrainSchedule,
    rng: &mut Rng,
) -> Result<StackOutcome<T>> {
    if schedule.layers.len() != arch.hidden.len() {
        return Err(Error::Config(format!(
            "{} pretraining schedules for {} hidden layers",
            schedule.layers.len(),
            arch.hidden.len()
        )));
    }
    let mut layers = Vec::new();
    let mut standardizer = Standardizer::default();
    let mut losses = Vec::new();
    let mut x = data.clone();
    for (spec, sched) in arch.hidden.iter().zip(&schedule.layers) {
        let layer = match spec.kind {
            UnitKind::Linear => {
                linear_ae_pretrain(&x, spec.width, sched, rng).map(|(l, fit)| {
                    losses.push(fit.epoch_losses);
                    l
                })?
            }
            UnitKind::ZeroBias | UnitKind::Relu => {
                let (mut l, fit) = zae_pretrain(&x, spec.width, sched, rng)?;
                losses.push(fit.epoch_losses);
                l.kind = spec.kind.layer_kind();
                l
            }
        };
        let pre = layer.pre_activation(&x)?;
        let out = layer.activate(&pre);
        let (mean, std) = column_stats(&out);
        let to_t = |v: &[f64]| v.iter().map(|&a| T::from_f64(a)).collect::<Vec<T>>();
        let norm = Layer::standardize(&to_t(&mean), &to_t(&std));
        layers.push(layer);
        let mut scratch = Rng::new(0);
        let net = Network::new(out.cols(), vec![norm.clone()])?;
        x = net
            .forward(&out, crate::layers::Mode::Eval, &mut scratch)?
            .1
            .steps[0]
            .post
            .clone();
        let (_, floored) = norm.standardizer().expect("standardize layer");
        standardizer.layers.push(LayerStats {
            layer: layers.len(),
            mean,
            std: floored.iter().map(|s| s.as_f64()).collect(),
        });
        layers.push(norm);
    }
    Ok(StackOutcome {
        network: Network::new(data.cols(), layers)?,
        standardizer,
        features: x,
        losses,
    })
}

/// Mean absolute cosine similarity between weight rows of unit pairs that fire together,
/// weighted by how often each pair is co-active on `data` (activity is `W x > threshold`).
/// Returns 0 when no pair is ever co-active.
pub fn coactive_cosine<T: Real>(
    weights: &Matrix<T>,
    data: &Matrix<T>,
    threshold: f64,
) -> Result<f64> {
    let pre = data.matmul_nt(weights)?;
    let t = T::from_f64(threshold);
    let active = pre.map(|v| if v > t { T::one() } else { T::zero() });
    let co = active.gram();
    let w = weights.cast::<f64>();
    let norms: Vec<f64> = w
        .row_iter()
        .map(|r| r.iter().map(|a| a * a).sum::<f64>().sqrt())
        .collect();
    let dots = w.matmul_nt(&w)?;
    let (mut num, mut den) = (0.0, 0.0);
    for a in 0..w.rows() {
        for b in a + 1..w.rows() {
            let c = co.get(a, b);
            if c > 0.0 && norms[a] > 0.0 && norms[b] > 0.0 {
                num += c * (dots.get(a, b) / (norms[a] * norms[b])).abs();
                den += c;
            }
        }
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}
