//! Desk-scale data and pretraining shared by the long-running integration tests.

#![allow(dead_code, clippy::field_reassign_with_default)]

use std::path::PathBuf;
use std::time::{Duration, Instant};

use zlin::data::{preprocess_fit, synth_dataset, write_cifar10, SynthKind, IMAGE_DIMS};
use zlin::harness::{
    load_splits, prepare_with, stream, DataSource, ExperimentConfig, Prepared, Stream,
};
use zlin::optim::{fit_softmax_head, CgOptions};
use zlin::pretrain::stack_pretrain;
use zlin::{Network, Rng};

pub const DESK_TRAIN: usize = 5000;
pub const DESK_TEST: usize = 1000;
pub const DESK_CLASS_SIGNAL: f64 = 0.05;
pub const DESK_ZLIN: &str = "512Z-128L-512Z-10";

/// Desk-scale image data: a 5000/1000 CIFAR-10 subset or its synthetic stand-in, whitened.
pub struct Desk {
    pub cfg: ExperimentConfig,
    pub data: Prepared<f32>,
    pub source: String,
    /// True when the generated stand-in is used instead of CIFAR-10.
    pub synthetic: bool,
    pub fit_time: Duration,
    _dir: tempfile::TempDir,
}

pub fn desk() -> Desk {
    let dir = tempfile::tempdir().unwrap();
    let (train_paths, test_paths, source) = match std::env::var_os("ZLIN_CIFAR_DIR") {
        Some(d) => {
            let d = PathBuf::from(d);
            (
                vec![d.join("data_batch_1.bin")],
                vec![d.join("test_batch.bin")],
                "CIFAR-10".to_string(),
            )
        }
        None => {
            let kind = SynthKind::Images {
                class_signal: DESK_CLASS_SIGNAL,
            };
            let all = synth_dataset::<f32>(
                kind,
                DESK_TRAIN + DESK_TEST,
                IMAGE_DIMS,
                10,
                &mut Rng::new(2024),
            )
            .unwrap();
            let idx: Vec<usize> = (0..DESK_TRAIN + DESK_TEST).collect();
            let (tr, te) = (
                all.select(&idx[..DESK_TRAIN]),
                all.select(&idx[DESK_TRAIN..]),
            );
            let (a, b) = (
                dir.path().join("data_batch_1.bin"),
                dir.path().join("test_batch.bin"),
            );
            write_cifar10(&a, &tr).unwrap();
            write_cifar10(&b, &te).unwrap();
            (
                vec![a],
                vec![b],
                "synthetic images in CIFAR-10 format".to_string(),
            )
        }
    };
    let mut cfg = ExperimentConfig::default();
    cfg.architecture = DESK_ZLIN.into();
    cfg.out = dir.path().join("run");
    cfg.data.name = DataSource::Cifar10;
    cfg.data.train_paths = train_paths;
    cfg.data.test_paths = test_paths;
    cfg.data.train_size = Some(DESK_TRAIN);
    cfg.data.test_size = Some(DESK_TEST);
    cfg.train.epochs = 10;
    cfg.train.lr = 0.01;
    cfg.probe.size = DESK_TRAIN;
    cfg.validate().unwrap();

    let raw = load_splits::<f32>(&cfg.data, &mut Rng::new(0)).unwrap().0;
    let start = Instant::now();
    let w = preprocess_fit(
        &raw.features,
        cfg.data.variance_fraction,
        cfg.data.contrast(),
    )
    .unwrap();
    let fit_time = start.elapsed();
    let data = prepare_with::<f32>(&cfg, Some(w)).unwrap();
    eprintln!(
        "desk data: {source}, {} train / {} test, {} whitened dims (fit {:.1}s)",
        data.train.len(),
        data.test.len(),
        data.train.dims(),
        fit_time.as_secs_f64()
    );
    Desk {
        cfg,
        data,
        synthetic: std::env::var_os("ZLIN_CIFAR_DIR").is_none(),
        source,
        fit_time,
        _dir: dir,
    }
}

/// Greedy pretraining of `arch_spec` on the desk training set followed by the conjugate
/// gradient head fit. Returns the config used (fine-tuning lr 1e-3) and the network.
pub fn pretrained(desk: &Desk, arch_spec: &str, seed: u64) -> (ExperimentConfig, Network<f32>) {
    let mut cfg = desk.cfg.clone();
    cfg.architecture = arch_spec.into();
    cfg.seed = seed;
    cfg.train.lr = 1e-3;
    let arch = cfg.validate().unwrap();
    let data = &desk.data;
    let stack = stack_pretrain(
        &arch,
        &data.train.features,
        &cfg.pretrain_schedule(&arch),
        &mut stream(seed, Stream::Pretrain),
    )
    .unwrap();
    let opts = CgOptions {
        max_iters: cfg.pretrain.head_cg_iters,
        ..CgOptions::default()
    };
    let (head, _) = fit_softmax_head(
        &stack.features,
        &data.train.labels,
        10,
        cfg.pretrain.head_l2,
        None,
        &opts,
    )
    .unwrap();
    let mut layers = stack.network.layers;
    layers.push(head);
    (cfg, Network::new(data.train.dims(), layers).unwrap())
}
