//! SGD with heavy-ball momentum, step learning-rate decay, and nonlinear conjugate
//! gradients for fitting the softmax head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{cross_entropy, GradientSet, Layer, LayerKind, Network};
use crate::numcore::{Matrix, Real};

/// `v <- mu v - lr (g + wd p); p <- p + v` on one flat tensor.
pub fn momentum_update<T: Real>(
    p: &mut [T],
    g: &[T],
    v: &mut [T],
    lr: f64,
    momentum: f64,
    wd: f64,
) {
    debug_assert!(p.len() == g.len() && p.len() == v.len());
    let (lr, mu, wd) = (T::from_f64(lr), T::from_f64(momentum), T::from_f64(wd));
    for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = mu * *v - lr * (g + wd * *p);
        *p = *p + *v;
    }
}

/// Velocity buffers for every layer of one network.
#[derive(Debug, Clone)]
pub struct SgdState<T> {
    pub momentum: f64,
    pub lr: f64,
    /// Weight decay per layer; biases are never decayed.
    pub weight_decay: Vec<f64>,
    velocity: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> SgdState<T> {
    pub fn new(net: &Network<T>, lr: f64, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum {momentum} outside [0, 1)"
            )));
        }
        if !(lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {lr} must be > 0"
            )));
        }
        Ok(SgdState {
            momentum,
            lr,
            weight_decay: vec![0.0; net.layers.len()],
            velocity: net
                .layers
                .iter()
                .map(|l| {
                    (
                        vec![T::zero(); l.weights.len()],
                        vec![T::zero(); l.bias.len()],
                    )
                })
                .collect(),
        })
    }

    pub fn with_weight_decay(mut self, layer: usize, wd: f64) -> Self {
        self.weight_decay[layer] = wd;
        self
    }

    pub fn velocity(&self, layer: usize) -> (&[T], &[T]) {
        let (w, b) = &self.velocity[layer];
        (w, b)
    }
}

/// One momentum step over every trainable tensor of `net`.
pub fn sgd_step<T: Real>(
    net: &mut Network<T>,
    grads: &GradientSet<T>,
    state: &mut SgdState<T>,
) -> Result<()> {
    if grads.layers.len() != net.layers.len() || state.velocity.len() != net.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "gradient set for {} layers, optimizer for {}, network has {}",
            grads.layers.len(),
            state.velocity.len(),
            net.layers.len()
        )));
    }
    for (k, layer) in net.layers.iter_mut().enumerate() {
        if !layer.kind.has_params() {
            continue;
        }
        let g = &grads.layers[k];
        if g.weights.shape() != layer.weights.shape() || g.bias.len() != layer.bias.len() {
            return Err(Error::shape(
                "sgd_step",
                layer.weights.shape(),
                g.weights.shape(),
            ));
        }
        let (vw, vb) = &mut state.velocity[k];
        momentum_update(
            layer.weights.data_mut(),
            g.weights.data(),
            vw,
            state.lr,
            state.momentum,
            state.weight_decay[k],
        );
        if !matches!(layer.kind, LayerKind::ZeroBiasRelu { .. }) {
            momentum_update(&mut layer.bias, &g.bias, vb, state.lr, state.momentum, 0.0);
        }
    }
    Ok(())
}

/// Step decay: `base * gamma^(epoch / every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub gamma: f64,
    pub every: usize,
}

impl LrSchedule {
    pub fn new(base: f64, gamma: f64, every: usize) -> Result<Self> {
        if !(base > 0.0) || !(gamma > 0.0 && gamma <= 1.0) || every == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid schedule: base {base}, gamma {gamma}, every {every}"
            )));
        }
        Ok(LrSchedule { base, gamma, every })
    }

    /// Halve every 100 epochs.
    pub fn default_for(base: f64) -> Self {
        LrSchedule {
            base,
            gamma: 0.5,
            every: 100,
        }
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        self.base * self.gamma.powi((epoch / self.every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearch {
    /// Armijo backtracking.
    Backtracking { c1: f64, shrink: f64 },
    /// Secant iteration on the directional derivative; exact on quadratics.
    Exact,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch::Backtracking {
            c1: 1e-4,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub max_iters: usize,
    /// Stop once `||grad||_inf <= tol`.
    pub tol: f64,
    pub line_search: LineSearch,
    /// Compare `grad_fn` with central differences at the starting point.
    pub check_gradient: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            max_iters: 200,
            tol: 1e-6,
            line_search: LineSearch::default(),
            check_gradient: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub params: Vec<f64>,
    pub loss: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the line search gave up; `params` is then the best point seen.
    pub line_search_failed: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn axpy(p: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    p.iter().zip(d).map(|(p, d)| p + alpha * d).collect()
}

fn check_gradient_fd(loss_fn: &impl Fn(&[f64]) -> f64, g: &[f64], p: &[f64]) -> Result<()> {
    // the largest gradient entries carry the most signal
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&i, &j| g[j].abs().total_cmp(&g[i].abs()));
    for &i in idx.iter().take(5) {
        let h = 1e-6 * p[i].abs().max(1.0);
        let mut q = p.to_vec();
        q[i] = p[i] + h;
        let fp = loss_fn(&q);
        q[i] = p[i] - h;
        let fm = loss_fn(&q);
        let fd = (fp - fm) / (2.0 * h);
        let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
        if err > 1e-3 {
            return Err(Error::InvalidArgument(format!(
                "grad_fn disagrees with finite differences at coordinate {i}: {} vs {fd}",
                g[i]
            )));
        }
    }
    Ok(())
}

/// Nonlinear conjugate gradients with Polak-Ribiere+ directions.
///
/// A negative PR coefficient or a non-descent direction restarts from steepest descent.
/// Accepted steps never increase the loss.
pub fn cg_minimize(
    loss_fn: impl Fn(&[f64]) -> f64,
    grad_fn: impl Fn(&[f64]) -> Vec<f64>,
    p0: &[f64],
    opts: &CgOptions,
) -> Result<CgResult> {
    let mut p = p0.to_vec();
    let mut f = loss_fn(&p);
    let mut g = grad_fn(&p);
    if g.len() != p.len() {
        return Err(Error::InvalidArgument(format!(
            "gradient has {} entries for {} parameters",
            g.len(),
            p.len()
        )));
    }
    if !f.is_finite() {
        return Err(Error::Diverged(
            "non-finite loss at the starting point".into(),
        ));
    }
    if opts.check_gradient && !p.is_empty() {
        check_gradient_fd(&loss_fn, &g, &p)?;
    }
    let mut result = CgResult {
        params: p.clone(),
        loss: f,
        grad_inf_norm: inf_norm(&g),
        iterations: 0,
        converged: inf_norm(&g) <= opts.tol,
        line_search_failed: false,
    };
    if result.converged {
        return Ok(result);
    }

    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut prev_step: Option<(f64, f64)> = None; // (alpha, slope)
    for iter in 0..opts.max_iters {
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let alpha0 = match prev_step {
            Some((a, s)) => (a * s / slope).clamp(1e-10, 1e10),
            None => 1.0 / inf_norm(&d).max(1.0),
        };
        let step = match opts.line_search {
            LineSearch::Backtracking { c1, shrink } => {
                backtrack(&loss_fn, &p, f, &d, slope, alpha0, c1, shrink)
            }
            LineSearch::Exact => exact_search(&loss_fn, &grad_fn, &p, f, &d, slope, alpha0),
        };
        let Some((alpha, f_new)) = step else {
            result.line_search_failed = true;
            break;
        };
        p = axpy(&p, alpha, &d);
        f = f_new;
        let g_new = grad_fn(&p);
        let beta = (dot(&g_new, &g_new) - dot(&g_new, &g)) / dot(&g, &g);
        let beta = beta.max(0.0);
        d = g_new.iter().zip(&d).map(|(g, d)| -g + beta * d).collect();
        g = g_new;
        prev_step = Some((alpha, slope));

        result.params.clone_from(&p);
        result.loss = f;
        result.grad_inf_norm = inf_norm(&g);
        result.iterations = iter + 1;
        if result.grad_inf_norm <= opts.tol {
            result.converged = true;
            break;
        }
    }
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn backtrack(
    loss_fn: &impl Fn(&[f64]) -> f64,
    p: &[f64],
    f: f64,
    d: &[f64],
    slope: f64,
    alpha0: f64,
    c1: f64,
    shrink: f64,
) -> Option<(f64, f64)> {
    let armijo = |alpha: f64, f_new: f64| f_new.is_finite() && f_new <= f + c1 * alpha * slope;
    let mut alpha = alpha0;
    for attempt in 0..60 {
        let f_new = loss_fn(&axpy(p, alpha, d));
        if armijo(alpha, f_new) {
            if attempt > 0 {
                return Some((alpha, f_new));
            }
            // the first guess was accepted: grow while the loss keeps dropping
            let (mut best, mut best_f) = (alpha, f_new);
            for _ in 0..30 {
                let trial = best / shrink;
                let f_trial = loss_fn(&axpy(p, trial, d));
                if !(armijo(trial, f_trial) && f_trial < best_f) {
                    break;
                }
                best = trial;
                best_f = f_trial;
            }
            return Some((best, best_f));
        }
        alpha *= shrink;
    }
    None
}

fn exact_search(
    loss_fn: &impl Fn(&[f64]) -> f64,
    grad_fn: &impl Fn(&[f64]) -> Vec<f64>,
    p: &[f64],
    f: f64,
    d: &[f64],
    slope: f64,
    alpha0: f64,
) -> Option<(f64, f64)> {
    let phi_prime = |a: f64| dot(&grad_fn(&axpy(p, a, d)), d);
    let (mut a_prev, mut s_prev) = (0.0, slope);
    let mut a = alpha0;
    let mut s = phi_prime(a);
    for _ in 0..50 {
        if s.abs() <= 1e-14 * slope.abs() || s == s_prev {
            break;
        }
        let next = a - s * (a - a_prev) / (s - s_prev);
        if !next.is_finite() || next <= 0.0 {
            break;
        }
        a_prev = a;
        s_prev = s;
        a = next;
        s = phi_prime(a);
    }
    let f_new = loss_fn(&axpy(p, a, d));
    if f_new.is_finite() && f_new <= f {
        Some((a, f_new))
    } else {
        backtrack(loss_fn, p, f, d, slope, alpha0, 1e-4, 0.5)
    }
}

/// Softmax regression fitted with [`cg_minimize`] on fixed features.
///
/// The objective is mean cross-entropy plus `l2 * ||W||_F^2`; biases are not penalised.
pub fn fit_softmax_head<T: Real>(
    features: &Matrix<T>,
    labels: &[usize],
    classes: usize,
    l2: f64,
    init: Option<&Layer<T>>,
    opts: &CgOptions,
) -> Result<(Layer<T>, CgResult)> {
    let x = features.cast::<f64>();
    let d = x.cols();
    if labels.len() != x.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    let n_w = classes * d;
    let unpack = |p: &[f64]| -> (Matrix<f64>, Vec<f64>) {
        (
            Matrix::from_vec(classes, d, p[..n_w].to_vec()).expect("head shape"),
            p[n_w..].to_vec(),
        )
    };
    let objective = |p: &[f64]| -> (f64, Vec<f64>) {
        let (w, b) = unpack(p);
        let mut logits = x.matmul_nt(&w).expect("head shape");
        logits.add_row_vector(&b).expect("head shape");
        let (ce, dlogits) = cross_entropy(&logits, labels);
        let penalty = l2 * w.data().iter().map(|v| v * v).sum::<f64>();
        let mut gw = dlogits.matmul_tn(&x).expect("head shape");
        for (g, &wv) in gw.data_mut().iter_mut().zip(w.data()) {
            *g += 2.0 * l2 * wv;
        }
        let mut grad = gw.into_vec();
        grad.extend(dlogits.column_sums());
        (ce + penalty, grad)
    };
    let mut p0 = vec![0.0; n_w + classes];
    if let Some(layer) = init {
        if layer.weights.shape() != (classes, d) {
            return Err(Error::shape(
                "fit_softmax_head",
                layer.weights.shape(),
                (classes, d),
            ));
        }
        for (dst, src) in p0
            .iter_mut()
            .zip(layer.weights.data().iter().chain(&layer.bias))
        {
            *dst = src.as_f64();
        }
    }
    let res = cg_minimize(|p| objective(p).0, |p| objective(p).1, &p0, opts)?;
    let (w, b) = unpack(&res.params);
    let layer = Layer::from_parts(
        LayerKind::Linear,
        w.cast(),
        b.into_iter().map(T::from_f64).collect(),
    )?;
    Ok((layer, res))
}
