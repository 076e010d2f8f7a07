//! Instrumentation: activation sparsity, update density, sum-of-inputs Gaussianity,
//! ReLU spike mass, activation histograms and the finite-difference gradient check.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::layers::{equivalent_update, ForwardTrace, LayerKind, Mode, Network};
use crate::numcore::{ks_gaussian, normal_cdf, Matrix, Real, Rng};

const PROBE_CHUNK: usize = 1000;

/// Runs `f` on the evaluation-mode trace of each chunk of `probe`.
fn for_each_eval_chunk<T: Real>(
    net: &Network<T>,
    probe: &Matrix<T>,
    mut f: impl FnMut(&ForwardTrace<T>),
) -> Result<()> {
    let mut rng = Rng::new(0);
    let mut start = 0;
    while start < probe.rows() {
        let end = (start + PROBE_CHUNK).min(probe.rows());
        let idx: Vec<usize> = (start..end).collect();
        let (_, trace) = net.forward(&probe.select_rows(&idx), Mode::Eval, &mut rng)?;
        f(&trace);
        start = end;
    }
    Ok(())
}

/// Indices of hidden layers whose activations are probed: every parametric layer except
/// the final (classifier) one.
pub fn hidden_layer_indices<T: Real>(net: &Network<T>) -> Vec<usize> {
    let params: Vec<usize> = (0..net.layers.len())
        .filter(|&k| net.layers[k].kind.has_params())
        .collect();
    params[..params.len().saturating_sub(1)].to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSparsity {
    /// Index into `Network::layers`.
    pub layer: usize,
    /// 1-based position among hidden layers.
    pub depth: usize,
    pub kind: LayerKind,
    pub width: usize,
    /// Fraction of activations that are exactly zero.
    pub zero_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparsityReport {
    pub epoch: usize,
    pub layers: Vec<LayerSparsity>,
}

impl SparsityReport {
    pub fn fractions(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.zero_fraction).collect()
    }

    pub const CSV_HEADER: &'static str = "epoch,layer,depth,kind,width,zero_fraction";

    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                self.epoch,
                l.layer,
                l.depth,
                l.kind.short_name(),
                l.width,
                l.zero_fraction
            );
        }
        s
    }
}

/// Fraction of exactly-zero outputs of every hidden layer over `probe`, in evaluation
/// mode.
pub fn sparsity_probe<T: Real>(net: &Network<T>, probe: &Matrix<T>) -> Result<SparsityReport> {
    if probe.rows() == 0 {
        return Err(Error::InvalidArgument("empty probe set".into()));
    }
    let hidden = hidden_layer_indices(net);
    let mut zeros = vec![0usize; hidden.len()];
    for_each_eval_chunk(net, probe, |trace| {
        for (z, &k) in zeros.iter_mut().zip(&hidden) {
            let post = &trace.steps[k].post;
            *z += post.len() - post.count_nonzero();
        }
    })?;
    let layers = hidden
        .iter()
        .zip(zeros)
        .enumerate()
        .map(|(d, (&k, z))| {
            let width = net.layers[k].fan_out().expect("parametric layer");
            LayerSparsity {
                layer: k,
                depth: d + 1,
                kind: net.layers[k].kind,
                width,
                zero_fraction: z as f64 / (probe.rows() * width) as f64,
            }
        })
        .collect();
    Ok(SparsityReport { epoch: 0, layers })
}

/// Mean over rows of `nnz(delta_e) * nnz(x_e) / (cols(delta) * cols(x))`: the nonzero
/// fraction of the per-case outer product `delta_e x_e^T`.
pub fn per_case_density<T: Real>(delta: &Matrix<T>, input: &Matrix<T>) -> Result<f64> {
    if delta.rows() != input.rows() {
        return Err(Error::shape(
            "per_case_density",
            delta.shape(),
            input.shape(),
        ));
    }
    if delta.rows() == 0 || delta.cols() == 0 || input.cols() == 0 {
        return Ok(0.0);
    }
    let size = (delta.cols() * input.cols()) as f64;
    let total: f64 = delta
        .row_iter()
        .zip(input.row_iter())
        .map(|(d, x)| {
            let nd = d.iter().filter(|v| !v.is_zero()).count();
            let nx = x.iter().filter(|v| !v.is_zero()).count();
            (nd * nx) as f64 / size
        })
        .sum();
    Ok(total / delta.rows() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDensity {
    pub layer: usize,
    pub kind: LayerKind,
    /// Mean nonzero fraction of a single training case's `dW`.
    pub per_case: f64,
    /// Nonzero fraction of the minibatch `dW`.
    pub batch: f64,
}

/// Density of the update induced on the absorbed weight `w_upper w_linear` of a
/// (linear, nonlinear-above) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDensity {
    pub linear: usize,
    pub upper: usize,
    pub per_case_equivalent: f64,
    pub batch_equivalent: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensityReport {
    pub layers: Vec<LayerDensity>,
    pub pairs: Vec<PairDensity>,
}

impl DensityReport {
    pub const CSV_HEADER: &'static str =
        "layer,kind,per_case,batch,pair_linear,pair_equivalent_per_case,pair_equivalent_batch";

    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for l in &self.layers {
            let pair = self.pairs.iter().find(|p| p.upper == l.layer);
            let (pl, pc, pb) = match pair {
                Some(p) => (
                    p.linear.to_string(),
                    p.per_case_equivalent.to_string(),
                    p.batch_equivalent.to_string(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{pl},{pc},{pb}",
                l.layer,
                l.kind.short_name(),
                l.per_case,
                l.batch
            );
        }
        s
    }
}

/// Finds `(linear, upper)` pairs: a nonlinear parametric layer whose nearest parametric
/// predecessor is `Linear`, with only `Standardize` layers in between.
pub fn linear_pairs<T: Real>(net: &Network<T>) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for upper in 0..net.layers.len() {
        if !(net.layers[upper].kind.is_nonlinear() && net.layers[upper].kind.has_params()) {
            continue;
        }
        let mut k = upper;
        while k > 0 {
            k -= 1;
            match net.layers[k].kind {
                LayerKind::Standardize => continue,
                LayerKind::Linear => pairs.push((k, upper)),
                _ => {}
            }
            break;
        }
    }
    pairs
}

/// Nonzero fraction of `a b^T + c d^T` computed entry by entry.
fn rank2_density(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let mut nnz = 0usize;
    for (ai, ci) in a.iter().zip(c) {
        if *ai == 0.0 && *ci == 0.0 {
            continue;
        }
        nnz += b
            .iter()
            .zip(d)
            .filter(|(bj, dj)| ai * **bj + ci * **dj != 0.0)
            .count();
    }
    nnz as f64 / (a.len() * b.len()).max(1) as f64
}

/// Update densities for one training batch: each parametric layer's `dW`, and for every
/// (linear, nonlinear) pair the equivalent update on the absorbed layer. Updates are
/// `-lr * gradient`. Standardization between the pair is folded into the linear layer.
pub fn update_density_probe<T: Real>(
    net: &Network<T>,
    batch: &Matrix<T>,
    labels: &[usize],
    lr: f64,
    rng: &mut Rng,
) -> Result<DensityReport> {
    let (_, trace) = net.forward(batch, Mode::Train, rng)?;
    let bp = net.backprop(&trace, labels)?;
    let mut report = DensityReport::default();
    for (k, layer) in net.layers.iter().enumerate() {
        let Some(delta) = &bp.deltas[k] else { continue };
        let dw = &bp.grads.layers[k].weights;
        report.layers.push(LayerDensity {
            layer: k,
            kind: layer.kind,
            per_case: per_case_density(delta, trace.layer_input(k))?,
            batch: dw.count_nonzero() as f64 / dw.len().max(1) as f64,
        });
    }
    for (lin, upper) in linear_pairs(net) {
        let inv_std: Vec<f64> = match net.layers[lin + 1..upper]
            .iter()
            .find_map(|l| l.standardizer())
        {
            Some((_, std)) => std.iter().map(|s| 1.0 / s.as_f64()).collect(),
            None => vec![1.0; net.layers[lin].weights.rows()],
        };
        let w_u = net.layers[upper].weights.cast::<f64>();
        let w_l = Matrix::from_fn(w_u.cols(), net.layers[lin].weights.cols(), |i, j| {
            net.layers[lin].weights.get(i, j).as_f64() * inv_std[i]
        });
        let d_u = bp.deltas[upper].as_ref().expect("parametric").cast::<f64>();
        let d_l = bp.deltas[lin].as_ref().expect("parametric").cast::<f64>();
        let h = trace.layer_input(upper).cast::<f64>();
        let x = trace.layer_input(lin).cast::<f64>();

        // per case: dW_u = -lr du h^T, dW_l' = -lr D dl x^T, so the equivalent update is
        // (lr^2 (h . D dl) du - lr W_u D dl) x^T - lr du (W_l'^T h)^T
        let mut per_case = 0.0;
        for e in 0..batch.rows() {
            let dl: Vec<f64> = d_l
                .row(e)
                .iter()
                .zip(&inv_std)
                .map(|(v, s)| v * s)
                .collect();
            let du = d_u.row(e);
            let he = h.row(e);
            let hd: f64 = he.iter().zip(&dl).map(|(a, b)| a * b).sum();
            let wdl: Vec<f64> = w_u
                .row_iter()
                .map(|r| r.iter().zip(&dl).map(|(a, b)| a * b).sum())
                .collect();
            let a: Vec<f64> = du
                .iter()
                .zip(&wdl)
                .map(|(u, w)| lr * lr * hd * u - lr * w)
                .collect();
            let c: Vec<f64> = du.iter().map(|u| -lr * u).collect();
            let wlh: Vec<f64> = (0..w_l.cols())
                .map(|j| (0..w_l.rows()).map(|i| w_l.get(i, j) * he[i]).sum())
                .collect();
            per_case += rank2_density(&a, x.row(e), &c, &wlh);
        }
        let neg = -lr;
        let dwu = bp.grads.layers[upper].weights.cast::<f64>().scale(neg);
        let dwl = Matrix::from_fn(w_l.rows(), w_l.cols(), |i, j| {
            neg * bp.grads.layers[lin].weights.get(i, j).as_f64() * inv_std[i]
        });
        let eq = equivalent_update(&dwu, &dwl, &w_u, &w_l)?;
        report.pairs.push(PairDensity {
            linear: lin,
            upper,
            per_case_equivalent: per_case / batch.rows().max(1) as f64,
            batch_equivalent: eq.count_nonzero() as f64 / eq.len().max(1) as f64,
        });
    }
    Ok(report)
}

/// Shape of an input coordinate, standardized to mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Uniform,
    Rademacher,
    /// `Exp(1) - 1`.
    Exponential,
}

/// One input coordinate: `mean + std * shape`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputDist {
    pub shape: Shape,
    pub mean: f64,
    pub std: f64,
}

impl InputDist {
    pub fn standard(shape: Shape) -> Self {
        InputDist {
            shape,
            mean: 0.0,
            std: 1.0,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let z = match self.shape {
            Shape::Uniform => (rng.uniform() - 0.5) * 12f64.sqrt(),
            Shape::Rademacher => {
                if rng.next_u64() >> 63 == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            Shape::Exponential => -(1.0 - rng.uniform()).ln() - 1.0,
        };
        self.mean + self.std * z
    }
}

/// Draws `samples` values of `S = sum_{j < n} w_j x_j`; dims cycle through `dists`, weights
/// default to 1. Returns the samples with the exact mean and standard deviation of `S`.
pub fn weighted_sums(
    dists: &[InputDist],
    weights: Option<&[f64]>,
    n: usize,
    samples: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, f64, f64)> {
    if dists.is_empty() || n == 0 {
        return Err(Error::InvalidArgument(
            "need at least one input dimension".into(),
        ));
    }
    if let Some(w) = weights {
        if w.len() < n {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {n} inputs",
                w.len()
            )));
        }
    }
    let w = |j: usize| weights.map_or(1.0, |w| w[j]);
    let mean: f64 = (0..n).map(|j| w(j) * dists[j % dists.len()].mean).sum();
    let var: f64 = (0..n)
        .map(|j| (w(j) * dists[j % dists.len()].std).powi(2))
        .sum();
    if !(var > 0.0) {
        return Err(Error::InvalidArgument("sum has zero variance".into()));
    }
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut s = 0.0;
        for j in 0..n {
            s += w(j) * dists[j % dists.len()].sample(rng);
        }
        out.push(s);
    }
    Ok((out, mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltPoint {
    pub n: usize,
    pub ks: f64,
}

/// KS distance between the standardized weighted sum of `n` inputs and a fitted Gaussian,
/// for each `n` in `n_values`.
pub fn clt_probe(
    dists: &[InputDist],
    weights: Option<&[f64]>,
    n_values: &[usize],
    samples: usize,
    rng: &mut Rng,
) -> Result<Vec<CltPoint>> {
    n_values
        .iter()
        .map(|&n| {
            let (s, mean, std) = weighted_sums(dists, weights, n, samples, rng)?;
            let z: Vec<f64> = s.iter().map(|v| (v - mean) / std).collect();
            Ok(CltPoint {
                n,
                ks: ks_gaussian(&z)?,
            })
        })
        .collect()
}

/// Repeats [`clt_probe`] over `repeats` independent streams and returns, per `n`, the mean
/// KS distance and its seed-to-seed standard deviation.
pub fn clt_envelope(
    dists: &[InputDist],
    n_values: &[usize],
    samples: usize,
    repeats: usize,
    rng: &Rng,
) -> Result<Vec<(usize, f64, f64)>> {
    let runs: Vec<Vec<CltPoint>> = (0..repeats as u64)
        .map(|r| clt_probe(dists, None, n_values, samples, &mut rng.stream(r)))
        .collect::<Result<_>>()?;
    Ok(n_values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let ks: Vec<f64> = runs.iter().map(|run| run[i].ks).collect();
            let m = ks.iter().sum::<f64>() / ks.len() as f64;
            let sd = if ks.len() > 1 {
                (ks.iter().map(|k| (k - m).powi(2)).sum::<f64>() / (ks.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            (n, m, sd)
        })
        .collect())
}

/// True when every step of the mean sequence rises by at most `factor` times the larger
/// of the two neighbouring noise levels.
pub fn non_increasing_within(envelope: &[(usize, f64, f64)], factor: f64) -> bool {
    envelope
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + factor * w[0].2.max(w[1].2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeMass {
    pub bias: f64,
    /// Fraction of `relu(b + S)` samples that are exactly zero.
    pub empirical: f64,
    /// `Phi(-(b + mean(S)) / std(S))`.
    pub predicted: f64,
}

/// Simulates `relu(b + sum_j w_j x_j)` and compares its mass at zero with the Gaussian
/// prediction.
pub fn spike_mass_check(
    bias: f64,
    dists: &[InputDist],
    weights: Option<&[f64]>,
    n: usize,
    samples: usize,
    rng: &mut Rng,
) -> Result<SpikeMass> {
    let (s, mean, std) = weighted_sums(dists, weights, n, samples, rng)?;
    let zeros = s.iter().filter(|&&v| bias + v <= 0.0).count();
    Ok(SpikeMass {
        bias,
        empirical: zeros as f64 / samples.max(1) as f64,
        predicted: normal_cdf(-(bias + mean) / std),
    })
}

/// Histogram of a layer's activations with exact zeros counted apart from the bins, so
/// `spike + sum(counts)` is the sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub spike: usize,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.spike + self.counts.iter().sum::<usize>()
    }

    pub fn spike_fraction(&self) -> f64 {
        self.spike as f64 / self.total().max(1) as f64
    }

    pub fn from_samples(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("no samples to histogram".into()));
        }
        if bins == 0 {
            return Err(Error::InvalidArgument(
                "histogram needs at least one bin".into(),
            ));
        }
        let spike = values.iter().filter(|&&v| v == 0.0).count();
        let (lo, hi) = values
            .iter()
            .filter(|&&v| v != 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let (lo, hi) = if lo.is_finite() {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        } else {
            (-1.0, 1.0)
        };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values.iter().filter(|&&v| v != 0.0) {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Histogram {
            edges,
            counts,
            spike,
        })
    }

    pub const CSV_HEADER: &'static str = "layer,bin_lo,bin_hi,count,spike";

    pub fn csv_rows(&self, layer: usize) -> String {
        let mut s = String::new();
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(
                s,
                "{layer},{},{},{c},{}",
                self.edges[i],
                self.edges[i + 1],
                self.spike
            );
        }
        s
    }
}

/// Every output value of network layer `layer` over `probe`, in evaluation mode.
pub fn layer_activations<T: Real>(
    net: &Network<T>,
    probe: &Matrix<T>,
    layer: usize,
) -> Result<Vec<f64>> {
    if layer >= net.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range for {} layers",
            net.layers.len()
        )));
    }
    if probe.rows() == 0 {
        return Err(Error::InvalidArgument("empty probe set".into()));
    }
    let mut out = Vec::new();
    for_each_eval_chunk(net, probe, |trace| {
        out.extend(trace.steps[layer].post.data().iter().map(|v| v.as_f64()));
    })?;
    Ok(out)
}

pub fn activation_histogram<T: Real>(
    net: &Network<T>,
    probe: &Matrix<T>,
    layer: usize,
    bins: usize,
) -> Result<Histogram> {
    Histogram::from_samples(&layer_activations(net, probe, layer)?, bins)
}

/// Finite differences below this magnitude are compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed an activation kink.
    pub resampled: usize,
    /// Worst error per parameter tensor: `(layer, "W" | "b", error)`.
    pub tensors: Vec<(usize, &'static str, f64)>,
}

fn kink_pattern(net: &Network<f64>, trace: &ForwardTrace<f64>) -> Vec<bool> {
    let mut out = Vec::new();
    for (layer, step) in net.layers.iter().zip(&trace.steps) {
        if let (Some(kink), Some(pre)) = (layer.kind.kink(), &step.pre) {
            out.extend(pre.data().iter().map(|&v| v > kink));
        }
    }
    out
}

/// Central finite differences on up to `per_tensor` random coordinates of every weight and
/// bias tensor, compared with backpropagation. Dropout layers are the identity here.
/// Coordinates whose `+-eps` perturbation flips any activation indicator are resampled.
pub fn grad_check(
    net: &Network<f64>,
    x: &Matrix<f64>,
    labels: &[usize],
    eps: f64,
    per_tensor: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let mut scratch = Rng::new(0);
    let (_, trace) = net.forward(x, Mode::Eval, &mut scratch)?;
    let bp = net.backprop(&trace, labels)?;
    if !bp.loss.is_finite() {
        return Err(Error::NonFinite {
            layer: net.layers.len(),
            stage: "loss",
        });
    }
    let eval = |n: &Network<f64>| -> Result<(f64, Vec<bool>)> {
        let mut s = Rng::new(0);
        let (_, t) = n.forward(x, Mode::Eval, &mut s)?;
        let loss = crate::layers::cross_entropy(t.logits(), labels).0;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                layer: n.layers.len(),
                stage: "loss",
            });
        }
        Ok((loss, kink_pattern(n, &t)))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        resampled: 0,
        tensors: Vec::new(),
    };
    for (k, layer) in net.layers.iter().enumerate() {
        if !layer.kind.has_params() {
            continue;
        }
        let zero_bias = matches!(layer.kind, LayerKind::ZeroBiasRelu { .. });
        let tensors: &[(&'static str, usize)] = if zero_bias {
            &[("W", layer.weights.len())]
        } else {
            &[("W", layer.weights.len()), ("b", layer.bias.len())]
        };
        for &(name, len) in tensors {
            if len == 0 {
                continue;
            }
            let want = per_tensor.min(len);
            let mut order = rng.permutation(len);
            order.reverse();
            let mut worst: f64 = 0.0;
            let mut done = 0;
            while done < want {
                let Some(i) = order.pop() else { break };
                let perturbed = |delta: f64| {
                    let mut n = net.clone();
                    match name {
                        "W" => n.layers[k].weights.data_mut()[i] += delta,
                        _ => n.layers[k].bias[i] += delta,
                    }
                    n
                };
                let (lp, kp) = eval(&perturbed(eps))?;
                let (lm, km) = eval(&perturbed(-eps))?;
                if kp != km {
                    report.resampled += 1;
                    continue;
                }
                let fd = (lp - lm) / (2.0 * eps);
                let an = match name {
                    "W" => bp.grads.layers[k].weights.data()[i],
                    _ => bp.grads.layers[k].bias[i],
                };
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(GRAD_CHECK_FLOOR);
                worst = worst.max(err);
                done += 1;
            }
            report.checked += done;
            report.max_rel_error = report.max_rel_error.max(worst);
            report.tensors.push((k, name, worst));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Architecture, DropoutRates, HiddenSpec, Layer, UnitKind};
    use crate::numcore::inverse_normal_cdf;

    fn gaussian(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = Rng::new(seed);
        Matrix::from_fn(n, d, |_, _| rng.gaussian())
    }

    fn arch(spec: &[(usize, UnitKind)], classes: usize) -> Architecture {
        Architecture {
            hidden: spec
                .iter()
                .map(|&(width, kind)| HiddenSpec { width, kind })
                .collect(),
            classes,
        }
    }

    #[test]
    fn zero_bias_layer_is_half_sparse() {
        let x = gaussian(100_000, 1, 1);
        let layer = Layer::from_parts(
            LayerKind::ZeroBiasRelu { threshold: 0.0 },
            Matrix::identity(1),
            vec![0.0],
        )
        .unwrap();
        let head =
            Layer::from_parts(LayerKind::Linear, Matrix::filled(2, 1, 1.0), vec![0.0; 2]).unwrap();
        let net = Network::new(1, vec![layer, head]).unwrap();
        let r = sparsity_probe(&net, &x).unwrap();
        assert_eq!(r.layers.len(), 1);
        assert!((r.layers[0].zero_fraction - 0.5).abs() < 0.01);
    }

    #[test]
    fn biased_relu_matches_gaussian_tail() {
        let x = gaussian(100_000, 1, 2);
        let sigma = 2.0;
        let b = -sigma * inverse_normal_cdf(0.8);
        let relu =
            Layer::from_parts(LayerKind::Relu, Matrix::filled(1, 1, sigma), vec![b]).unwrap();
        let lin =
            Layer::from_parts(LayerKind::Linear, Matrix::filled(1, 1, 1.0), vec![0.1]).unwrap();
        let head =
            Layer::from_parts(LayerKind::Linear, Matrix::filled(2, 1, 1.0), vec![0.0; 2]).unwrap();
        // pre = sigma * z + b, zero when z < -b / sigma = Phi^-1(0.8)
        let net = Network::new(1, vec![relu, lin, head]).unwrap();
        let r = sparsity_probe(&net, &x).unwrap();
        assert!((r.layers[0].zero_fraction - 0.8).abs() < 0.01, "{:?}", r);
        assert_eq!(r.layers[1].zero_fraction, 0.0);
        assert!(sparsity_probe(&net, &Matrix::zeros(0, 1)).is_err());
    }

    #[test]
    fn per_case_density_counts_outer_products() {
        let delta = Matrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, 0.0, 0.0]]);
        let x = Matrix::from_rows(&[[3.0, 0.0], [1.0, 1.0]]);
        // case 0: 2 * 1 of 6, case 1: 0
        assert!((per_case_density(&delta, &x).unwrap() - (2.0 / 6.0) / 2.0).abs() < 1e-15);
        assert_eq!(
            per_case_density(&Matrix::<f64>::zeros(4, 3), &gaussian(4, 5, 3)).unwrap(),
            0.0
        );
    }

    #[test]
    fn relu_update_density_bounded_by_activity() {
        let mut rng = Rng::new(4);
        let a = arch(&[(200, UnitKind::Relu), (200, UnitKind::Relu)], 3);
        let mut net: Network<f64> = a.build(30, DropoutRates::default(), &mut rng);
        // push the second layer to ~60% sparsity
        let shift = 0.25 * inverse_normal_cdf(0.6);
        net.layers[1].bias.iter_mut().for_each(|b| *b = -shift);
        let x = gaussian(100, 30, 5);
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let s = sparsity_probe(&net, &x).unwrap();
        let d = update_density_probe(&net, &x, &labels, 1.0, &mut rng).unwrap();
        let active = 1.0 - s.layers[1].zero_fraction;
        assert!(
            d.layers[1].per_case <= active + 0.02,
            "{} vs {}",
            d.layers[1].per_case,
            active
        );
    }

    #[test]
    fn relu_lin_equivalent_update_is_dense() {
        let mut rng = Rng::new(6);
        let a = arch(&[(16, UnitKind::Linear), (64, UnitKind::Relu)], 4);
        let net: Network<f64> = a.build(20, DropoutRates::default(), &mut rng);
        let x = gaussian(50, 20, 7);
        let labels: Vec<usize> = (0..50).map(|i| i % 4).collect();
        let d = update_density_probe(&net, &x, &labels, 0.1, &mut rng).unwrap();
        assert_eq!(d.pairs.len(), 1);
        let p = &d.pairs[0];
        assert_eq!((p.linear, p.upper), (0, 1));
        assert!(p.per_case_equivalent > 0.99, "{p:?}");
        assert!(p.batch_equivalent > 0.99);
        for l in &d.layers[..2] {
            assert!(p.per_case_equivalent >= l.per_case);
        }
        assert!(d.layers[1].per_case < 0.7);
    }

    #[test]
    fn per_case_equivalent_matches_dense_construction() {
        // one case: the rank-2 shortcut must agree with equivalent_update
        let mut rng = Rng::new(8);
        let a = arch(&[(6, UnitKind::Linear), (5, UnitKind::ZeroBias)], 2);
        let mut net: Network<f64> = a.build(4, DropoutRates::default(), &mut rng);
        net.layers.insert(
            1,
            Layer::standardize(&[0.1; 6], &[0.5, 2.0, 1.0, 1.5, 0.7, 3.0]),
        );
        // make two inputs exactly zero so the pattern is non-trivial
        let x = Matrix::from_rows(&[[0.5, 0.0, -1.2, 0.0]]);
        let d = update_density_probe(&net, &x, &[1], 0.3, &mut rng).unwrap();
        let p = &d.pairs[0];
        assert_eq!(p.per_case_equivalent, p.batch_equivalent);
        // zero inputs blank their columns except on rows of active upper units
        assert!(
            p.batch_equivalent > 0.5 && p.batch_equivalent < 1.0,
            "{p:?}"
        );
    }

    #[test]
    fn rademacher_single_input_gap() {
        let pts = clt_probe(
            &[InputDist::standard(Shape::Rademacher)],
            None,
            &[1],
            100_000,
            &mut Rng::new(9),
        )
        .unwrap();
        assert!((pts[0].ks - 0.341).abs() < 0.01, "{:?}", pts);
    }

    #[test]
    fn clt_distance_shrinks() {
        let pts = clt_probe(
            &[InputDist::standard(Shape::Exponential)],
            None,
            &[1, 16, 256],
            20_000,
            &mut Rng::new(10),
        )
        .unwrap();
        assert!(pts[0].ks > pts[1].ks && pts[1].ks > pts[2].ks, "{pts:?}");
        let w: Vec<f64> = (0..8).map(|j| 1.0 + j as f64).collect();
        assert!(clt_probe(
            &[InputDist::standard(Shape::Uniform)],
            Some(&w),
            &[8],
            1000,
            &mut Rng::new(1)
        )
        .is_ok());
        assert!(clt_probe(
            &[InputDist::standard(Shape::Uniform)],
            Some(&w),
            &[9],
            1000,
            &mut Rng::new(1)
        )
        .is_err());
        let flat = InputDist {
            std: 0.0,
            ..InputDist::standard(Shape::Uniform)
        };
        assert!(clt_probe(&[flat], None, &[4], 1000, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn envelope_monotonicity() {
        let env = vec![(1, 0.3, 0.01), (4, 0.1, 0.01), (16, 0.105, 0.004)];
        assert!(non_increasing_within(&env, 2.0));
        let env = vec![(1, 0.1, 0.001), (4, 0.2, 0.001)];
        assert!(!non_increasing_within(&env, 2.0));
    }

    #[test]
    fn spike_mass_limits() {
        let d = [InputDist::standard(Shape::Uniform)];
        let m = spike_mass_check(0.0, &d, None, 64, 50_000, &mut Rng::new(11)).unwrap();
        assert!((m.empirical - 0.5).abs() < 0.01 && (m.predicted - 0.5).abs() < 1e-12);
        let m = spike_mass_check(1e6, &d, None, 64, 1000, &mut Rng::new(11)).unwrap();
        assert_eq!(m.empirical, 0.0);
        assert!(m.predicted < 1e-12);
    }

    #[test]
    fn histogram_accounts_for_every_sample() {
        let vals = [0.0, 0.0, 1.0, 2.0, 3.0, -1.0];
        let h = Histogram::from_samples(&vals, 4).unwrap();
        assert_eq!(h.spike, 2);
        assert_eq!(h.total(), 6);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        assert_eq!(h.edges.len(), 5);
        assert!(Histogram::from_samples(&[], 4).is_err());
        let h = Histogram::from_samples(&[0.0, 0.0], 3).unwrap();
        assert_eq!(h.spike_fraction(), 1.0);
    }

    #[test]
    fn linear_layer_histogram_is_gaussian_and_zae_is_half_spike() {
        let x = gaussian(20_000, 16, 12);
        let mut rng = Rng::new(13);
        let a = arch(&[(8, UnitKind::Linear), (8, UnitKind::ZeroBias)], 2);
        let net: Network<f64> = a.build(16, DropoutRates::default(), &mut rng);
        let lin = layer_activations(&net, &x, 0).unwrap();
        let col0: Vec<f64> = lin.iter().step_by(8).copied().collect();
        assert!(ks_gaussian(&col0).unwrap() < 0.02);
        let h = activation_histogram(&net, &x, 1, 20).unwrap();
        assert!(
            (h.spike_fraction() - 0.5).abs() < 0.02,
            "{}",
            h.spike_fraction()
        );
        assert!(activation_histogram(&net, &Matrix::zeros(0, 16), 1, 20).is_err());
        assert!(activation_histogram(&net, &x, 5, 20).is_err());
    }

    fn check(spec: &[(usize, UnitKind)], seed: u64) -> GradCheckReport {
        let mut rng = Rng::new(seed);
        let a = arch(spec, 3);
        let net: Network<f64> = a.build(10, DropoutRates::default(), &mut rng);
        let x = gaussian(16, 10, seed + 1);
        let labels: Vec<usize> = (0..16).map(|i| i % 3).collect();
        grad_check(&net, &x, &labels, 1e-5, 20, &mut rng).unwrap()
    }

    #[test]
    fn grad_check_linear_softmax_is_tight() {
        let r = check(&[], 1);
        assert!(r.max_rel_error < 1e-7, "{r:?}");
        assert_eq!(r.checked, 23);
    }

    #[test]
    fn grad_check_architecture_families() {
        use UnitKind::*;
        for (i, spec) in [
            vec![(24, Relu), (24, Relu)],
            vec![(24, Relu), (6, Linear), (24, Relu)],
            vec![(24, ZeroBias), (24, ZeroBias)],
            vec![(24, ZeroBias), (6, Linear), (24, ZeroBias)],
        ]
        .iter()
        .enumerate()
        {
            let r = check(spec, 10 + i as u64);
            assert!(r.max_rel_error < 1e-4, "{spec:?}: {r:?}");
            assert!(r.tensors.iter().all(|t| t.2 < 1e-4));
        }
    }

    #[test]
    fn grad_check_empty_network_is_vacuous() {
        let net = Network::<f64>::new(3, vec![]).unwrap();
        let r = grad_check(
            &net,
            &gaussian(4, 3, 1),
            &[0, 1, 2, 0],
            1e-5,
            20,
            &mut Rng::new(1),
        )
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn grad_check_detects_a_wrong_gradient() {
        // a network whose backward is right, compared against a deliberately shifted loss
        let mut rng = Rng::new(20);
        let net: Network<f64> =
            arch(&[(5, UnitKind::Relu)], 2).build(3, DropoutRates::default(), &mut rng);
        let x = gaussian(8, 3, 21);
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let good = grad_check(&net, &x, &labels, 1e-5, 20, &mut rng).unwrap();
        let bad = grad_check(&net, &x, &labels, 1e-1, 20, &mut rng).unwrap();
        assert!(bad.max_rel_error > good.max_rel_error);
    }
}
