//! Data preparation, evaluation and the supervised training loop.

use std::time::Instant;

use super::config::{DataConfig, DataSource, ExperimentConfig};
use super::metrics::{MetricsRow, MetricsWriter, Split};
use crate::data::{
    augment_indexed, contrast_normalize, load_cifar10, load_higgs, preprocess_fit, synth_dataset,
    AugmentOps, Dataset, SynthKind, Whitener, IMAGE_DIMS,
};
use crate::error::{Error, Result};
use crate::layers::{cross_entropy, DropoutRates, Layer, LayerKind, Mode, Network};
use crate::numcore::{Matrix, Real, Rng};
use crate::optim::{sgd_step, SgdState};
use crate::probes::sparsity_probe;

/// Independent random streams of one run, all derived from the config seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Pretrain = 3,
    Shuffle = 4,
    Dropout = 5,
    Augment = 6,
    Probe = 7,
    GradCheck = 8,
}

pub fn stream(seed: u64, s: Stream) -> Rng {
    Rng::new(seed).stream(s as u64)
}

/// Preprocessed splits plus what augmentation needs to redo preprocessing per batch.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    /// Unpreprocessed training features, kept only when augmenting.
    pub raw_train: Option<Matrix<T>>,
    pub whitener: Option<Whitener>,
}

fn rows<T: Real>(d: &Dataset<T>, range: std::ops::Range<usize>) -> Dataset<T> {
    d.select(&range.collect::<Vec<_>>())
}

/// Splits one pool into the first `train_size` rows and the last `test_size` rows.
fn holdout<T: Real>(
    full: &Dataset<T>,
    train_size: Option<usize>,
    test_size: Option<usize>,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let n = full.len();
    let n_test = test_size.unwrap_or(n / 10);
    if n_test >= n {
        return Err(Error::Config(format!(
            "test_size {n_test} leaves no training rows out of {n}"
        )));
    }
    let n_train = train_size.unwrap_or(n - n_test).min(n - n_test);
    Ok((rows(full, 0..n_train), rows(full, n - n_test..n)))
}

fn truncate<T: Real>(d: Dataset<T>, size: Option<usize>) -> Dataset<T> {
    match size {
        Some(k) if k < d.len() => d.head(k),
        _ => d,
    }
}

/// Raw train and test splits as described by `cfg`.
pub fn load_splits<T: Real>(cfg: &DataConfig, rng: &mut Rng) -> Result<(Dataset<T>, Dataset<T>)> {
    match cfg.name {
        DataSource::Cifar10 => {
            let train = load_cifar10::<T, _>(&cfg.train_paths)?;
            if cfg.test_paths.is_empty() {
                holdout(&train, cfg.train_size, cfg.test_size)
            } else {
                let test = load_cifar10::<T, _>(&cfg.test_paths)?;
                Ok((
                    truncate(train, cfg.train_size),
                    truncate(test, cfg.test_size),
                ))
            }
        }
        DataSource::Higgs => {
            let limit = cfg.train_size.zip(cfg.test_size).map(|(a, b)| a + b);
            let full = load_higgs::<T>(&cfg.train_paths[0], limit)?;
            holdout(&full, cfg.train_size, cfg.test_size)
        }
        DataSource::SyntheticImages | DataSource::GaussMixture | DataSource::Subspace => {
            let (kind, dims) = match cfg.name {
                DataSource::SyntheticImages => (
                    SynthKind::Images {
                        class_signal: cfg.class_signal,
                    },
                    IMAGE_DIMS,
                ),
                DataSource::GaussMixture => (
                    SynthKind::GaussMixture {
                        separation: cfg.separation,
                    },
                    cfg.dims,
                ),
                _ => (SynthKind::Subspace { rank: cfg.rank }, cfg.dims),
            };
            let n_train = cfg.train_size.unwrap_or(5000);
            let n_test = cfg.test_size.unwrap_or(1000);
            let full = synth_dataset::<T>(kind, n_train + n_test, dims, cfg.classes, rng)?;
            Ok((
                rows(&full, 0..n_train),
                rows(&full, n_train..n_train + n_test),
            ))
        }
    }
}

/// Loads the splits and fits preprocessing on the training split only.
pub fn prepare<T: Real>(cfg: &ExperimentConfig) -> Result<Prepared<T>> {
    prepare_with(cfg, None)
}

/// Like [`prepare`], reusing `fitted` instead of fitting when whitening is enabled.
/// `fitted` must come from the same training split and settings.
pub fn prepare_with<T: Real>(
    cfg: &ExperimentConfig,
    fitted: Option<Whitener>,
) -> Result<Prepared<T>> {
    let d = &cfg.data;
    let (train, test) = load_splits::<T>(d, &mut stream(cfg.seed, Stream::Data))?;
    let keep_raw = d.augment.then(|| train.features.clone());
    if d.whiten {
        let w = match fitted {
            Some(w) if w.input_dims() == train.dims() && w.contrast_normalize == d.contrast() => w,
            Some(_) => {
                return Err(Error::Config(
                    "cached whitener does not match the data".into(),
                ))
            }
            None => preprocess_fit(&train.features, d.variance_fraction, d.contrast())?,
        };
        Ok(Prepared {
            train: train.with_features(w.apply(&train.features)?),
            test: test.with_features(w.apply(&test.features)?),
            raw_train: keep_raw,
            whitener: Some(w),
        })
    } else if d.contrast() {
        Ok(Prepared {
            train: train.with_features(contrast_normalize(&train.features)),
            test: test.with_features(contrast_normalize(&test.features)),
            raw_train: keep_raw,
            whitener: None,
        })
    } else {
        Ok(Prepared {
            train,
            test,
            raw_train: keep_raw,
            whitener: None,
        })
    }
}

impl<T: Real> Prepared<T> {
    /// Preprocessed training batch for the given rows, augmented when configured.
    /// The `u64` in `augment` offsets the per-example augmentation streams (one block per epoch).
    fn batch(
        &self,
        idx: &[usize],
        augment: Option<(&AugmentOps, &Rng, u64)>,
        contrast: bool,
    ) -> Result<Matrix<T>> {
        match (augment, &self.raw_train) {
            (Some((ops, rng, base)), Some(raw)) => {
                let streams: Vec<u64> = idx.iter().map(|&i| base + i as u64).collect();
                let aug = augment_indexed(&raw.select_rows(idx), rng, &streams, ops)?;
                match &self.whitener {
                    Some(w) => w.apply(&aug),
                    None if contrast => Ok(contrast_normalize(&aug)),
                    None => Ok(aug),
                }
            }
            _ => Ok(self.train.features.select_rows(idx)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

const EVAL_CHUNK: usize = 1000;

/// Mean cross-entropy and accuracy with dropout disabled.
pub fn evaluate<T: Real>(net: &Network<T>, data: &Dataset<T>) -> Result<Evaluation> {
    let n = data.len();
    if n == 0 {
        return Ok(Evaluation {
            loss: 0.0,
            accuracy: 0.0,
        });
    }
    let mut scratch = Rng::new(0);
    let (mut loss, mut correct) = (0.0, 0usize);
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let x = data.features.select_rows(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
        let (probs, trace) = net.forward(&x, Mode::Eval, &mut scratch)?;
        loss += cross_entropy(trace.logits(), &labels).0 * chunk.len() as f64;
        for (row, &y) in probs.row_iter().zip(&labels) {
            let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            correct += usize::from(best == y);
        }
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("evaluation loss is {loss}")));
    }
    Ok(Evaluation {
        loss,
        accuracy: correct as f64 / n as f64,
    })
}

/// Adds dropout to a network without any: on the input, and after every nonlinear hidden
/// layer (after its standardization when it has one).
pub fn insert_dropout<T: Real>(net: &Network<T>, rates: DropoutRates) -> Result<Network<T>> {
    let mut layers = Vec::with_capacity(net.layers.len() + 4);
    if rates.input > 0.0 {
        layers.push(Layer::dropout(rates.input));
    }
    let mut pending = false;
    for layer in &net.layers {
        if pending && layer.kind != LayerKind::Standardize {
            layers.push(Layer::dropout(rates.hidden));
            pending = false;
        }
        layers.push(layer.clone());
        if layer.kind.is_nonlinear() && rates.hidden > 0.0 {
            pending = true;
        }
    }
    Network::new(net.input_dim, layers)
}

/// Index of the classifier layer: the last parametric layer.
pub fn head_index<T: Real>(net: &Network<T>) -> Option<usize> {
    net.layers.iter().rposition(|l| l.kind.has_params())
}

pub fn optimizer<T: Real>(net: &Network<T>, cfg: &ExperimentConfig) -> Result<SgdState<T>> {
    let t = &cfg.train;
    let mut state = SgdState::new(net, t.lr, t.momentum)?;
    let head = head_index(net);
    for (k, layer) in net.layers.iter().enumerate() {
        if Some(k) == head {
            state = state.with_weight_decay(k, t.head_weight_decay);
        } else if layer.kind == LayerKind::Linear {
            state = state.with_weight_decay(k, t.linear_weight_decay);
        }
    }
    Ok(state)
}

/// Everything the training loop reports per epoch.
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    pub train: Evaluation,
    pub test: Evaluation,
    pub sparsity: Vec<f64>,
}

fn report<T: Real>(
    net: &Network<T>,
    data: &Prepared<T>,
    probe: &Matrix<T>,
    epoch: usize,
    lr: f64,
) -> Result<EpochReport> {
    Ok(EpochReport {
        epoch,
        lr,
        train: evaluate(net, &data.train)?,
        test: evaluate(net, &data.test)?,
        sparsity: sparsity_probe(net, probe)?.fractions(),
    })
}

pub fn write_report(metrics: &mut MetricsWriter, r: &EpochReport, seconds: f64) -> Result<()> {
    for (split, e) in [(Split::Train, r.train), (Split::Test, r.test)] {
        metrics.write(&MetricsRow {
            epoch: r.epoch,
            split,
            loss: e.loss,
            accuracy: e.accuracy,
            lr: r.lr,
            sparsity: r.sparsity.clone(),
            seconds,
        })?;
    }
    Ok(())
}

/// Minibatch SGD for `cfg.train.epochs` epochs. Metrics rows for both splits are written
/// before training (epoch 0) and after every epoch. The result depends only on the
/// network, the data and the config seed.
pub fn train_network<T: Real>(
    mut net: Network<T>,
    data: &Prepared<T>,
    cfg: &ExperimentConfig,
    metrics: &mut MetricsWriter,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<Network<T>> {
    let t = &cfg.train;
    let schedule = t.schedule()?;
    let mut state = optimizer(&net, cfg)?;
    let n = data.train.len();
    if n == 0 {
        return Err(Error::Config("empty training split".into()));
    }
    let probe = data
        .train
        .features
        .select_rows(&(0..cfg.probe.size.min(n)).collect::<Vec<_>>());
    let clock = Instant::now();
    let r = report(&net, data, &probe, 0, schedule.lr(0))?;
    write_report(metrics, &r, clock.elapsed().as_secs_f64())?;
    on_epoch(&r);

    let ops = cfg.augment_ops();
    let aug_rng = stream(cfg.seed, Stream::Augment);
    let contrast = cfg.data.contrast();
    for epoch in 1..=t.epochs {
        state.lr = schedule.lr(epoch - 1);
        let order = stream(cfg.seed, Stream::Shuffle)
            .stream(epoch as u64)
            .permutation(n);
        let mut dropout = stream(cfg.seed, Stream::Dropout).stream(epoch as u64);
        let base = (epoch as u64) * n as u64;
        for idx in order.chunks(t.batch_size) {
            let x = data.batch(idx, ops.as_ref().map(|o| (o, &aug_rng, base)), contrast)?;
            let labels: Vec<usize> = idx.iter().map(|&i| data.train.labels[i]).collect();
            let (_, trace) = net.forward(&x, Mode::Train, &mut dropout)?;
            let (loss, grads) = net.backward(&trace, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "minibatch loss is {loss} in epoch {epoch}"
                )));
            }
            sgd_step(&mut net, &grads, &mut state)?;
        }
        let r = report(&net, data, &probe, epoch, state.lr)?;
        write_report(metrics, &r, clock.elapsed().as_secs_f64())?;
        on_epoch(&r);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::metrics_header;

    fn separable_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.architecture = "32R-2".into();
        cfg.data.name = DataSource::GaussMixture;
        cfg.data.classes = 2;
        cfg.data.dims = 8;
        cfg.data.train_size = Some(400);
        cfg.data.test_size = Some(200);
        cfg.data.whiten = false;
        cfg.train.epochs = 20;
        cfg.train.batch_size = 20;
        cfg
    }

    #[test]
    fn separable_data_is_learned() {
        let cfg = separable_config();
        let arch = cfg.validate().unwrap();
        let data = prepare::<f64>(&cfg).unwrap();
        let net = arch.build(
            8,
            DropoutRates::default(),
            &mut stream(cfg.seed, Stream::Init),
        );
        let dir = tempfile::tempdir().unwrap();
        let mut m = MetricsWriter::create(&dir.path().join("m.csv"), 1).unwrap();
        let mut last = None;
        train_network(net, &data, &cfg, &mut m, |r| last = Some(r.train)).unwrap();
        assert!(last.unwrap().accuracy > 0.99, "{last:?}");
        let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), metrics_header(1));
        assert_eq!(text.lines().count(), 1 + 2 * 21);
    }

    #[test]
    fn untrained_softmax_is_at_chance() {
        let mut cfg = separable_config();
        cfg.architecture = "10".into();
        cfg.data.classes = 10;
        cfg.data.dims = 10;
        cfg.data.separation = 0.0;
        cfg.data.test_size = Some(5000);
        let data = prepare::<f64>(&cfg).unwrap();
        let mut net =
            cfg.validate()
                .unwrap()
                .build::<f64>(10, DropoutRates::default(), &mut Rng::new(1));
        net.layers[0].weights = net.layers[0].weights.scale(1e-3);
        let e = evaluate(&net, &data.test).unwrap();
        assert!((e.accuracy - 0.1).abs() < 0.02, "{e:?}");
    }

    #[test]
    fn holdout_and_truncation() {
        let full = Dataset::new(
            Matrix::<f64>::from_fn(10, 1, |i, _| i as f64),
            vec![0; 10],
            1,
        )
        .unwrap();
        let (a, b) = holdout(&full, Some(3), Some(2)).unwrap();
        assert_eq!(a.features.column(0), vec![0.0, 1.0, 2.0]);
        assert_eq!(b.features.column(0), vec![8.0, 9.0]);
        assert!(holdout(&full, None, Some(10)).is_err());
        assert_eq!(truncate(full.clone(), Some(4)).len(), 4);
        assert_eq!(truncate(full, None).len(), 10);
    }

    #[test]
    fn dropout_goes_after_standardization() {
        let mut rng = Rng::new(0);
        let net = Network::<f64>::new(
            4,
            vec![
                Layer::new(LayerKind::ZeroBiasRelu { threshold: 0.0 }, 4, 6, &mut rng),
                Layer::standardize(&[0.0; 6], &[1.0; 6]),
                Layer::new(LayerKind::Linear, 6, 2, &mut rng),
                Layer::new(LayerKind::Relu, 2, 5, &mut rng),
                Layer::new(LayerKind::Linear, 5, 3, &mut rng),
            ],
        )
        .unwrap();
        let with = insert_dropout(
            &net,
            DropoutRates {
                input: 0.2,
                hidden: 0.5,
            },
        )
        .unwrap();
        let kinds: Vec<&str> = with.layers.iter().map(|l| l.kind.short_name()).collect();
        let d = LayerKind::Dropout { rate: 0.5 }.short_name();
        assert_eq!(kinds[0], LayerKind::Dropout { rate: 0.2 }.short_name());
        assert_eq!(kinds[3], d);
        assert_eq!(kinds[6], d);
        assert_eq!(with.layers.len(), 8);
        assert_eq!(insert_dropout(&net, DropoutRates::default()).unwrap(), net);
    }

    #[test]
    fn training_is_reproducible() {
        let mut cfg = separable_config();
        cfg.train.epochs = 3;
        cfg.train.dropout_hidden = 0.5;
        let arch = cfg.validate().unwrap();
        let data = prepare::<f32>(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let run = |name: &str| {
            let net =
                arch.build::<f32>(8, cfg.train.dropout(), &mut stream(cfg.seed, Stream::Init));
            let mut m = MetricsWriter::create(&dir.path().join(name), 1).unwrap();
            train_network(net, &data, &cfg, &mut m, |_| {}).unwrap()
        };
        assert_eq!(run("a.csv"), run("b.csv"));
    }
}
