//! TOML experiment configs. Every section and key is optional; missing keys take the
//! defaults below. Command-line flags override the matching top-level keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::arch::parse_architecture;
use crate::data::AugmentOps;
use crate::error::{Error, Result};
use crate::layers::{Architecture, DropoutRates};
use crate::numcore::Precision;
use crate::optim::LrSchedule;
use crate::pretrain::{LayerSchedule, PretrainSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// CIFAR-10 binary batches.
    Cifar10,
    /// HIGGS CSV: the first `train_size` rows train, the next `test_size` rows test.
    Higgs,
    /// Generated 32x32 RGB images with class structure.
    SyntheticImages,
    GaussMixture,
    Subspace,
}

impl DataSource {
    pub fn is_image(self) -> bool {
        matches!(self, DataSource::Cifar10 | DataSource::SyntheticImages)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub name: DataSource,
    /// CIFAR-10 batch files or the HIGGS CSV. Relative paths are resolved against the
    /// directory of the config file.
    pub train_paths: Vec<PathBuf>,
    /// CIFAR-10 test batch. When empty, `test_size` examples are held out of the
    /// training files instead.
    pub test_paths: Vec<PathBuf>,
    /// Training examples to keep (all when absent).
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub whiten: bool,
    pub variance_fraction: f64,
    /// Per-example contrast normalization before whitening; defaults to on for images.
    pub contrast_normalize: Option<bool>,
    /// Flip, rotate and shift training images each epoch (image sources only).
    pub augment: bool,
    /// Class count for synthetic sources.
    pub classes: usize,
    /// Input dimension for `gauss-mixture` and `subspace`.
    pub dims: usize,
    pub separation: f64,
    pub rank: usize,
    pub class_signal: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            name: DataSource::GaussMixture,
            train_paths: vec![],
            test_paths: vec![],
            train_size: None,
            test_size: None,
            whiten: true,
            variance_fraction: 0.99,
            contrast_normalize: None,
            augment: false,
            classes: 10,
            dims: 32,
            separation: 6.0,
            rank: 8,
            class_signal: 1.0,
        }
    }
}

impl DataConfig {
    pub fn classes(&self) -> usize {
        match self.name {
            DataSource::Cifar10 => 10,
            DataSource::Higgs => 2,
            _ => self.classes,
        }
    }

    pub fn contrast(&self) -> bool {
        self.contrast_normalize.unwrap_or(self.name.is_image())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Schedule for zero-bias (and ReLU) autoencoders.
    pub zae: LayerSchedule,
    /// Schedule for linear autoencoders.
    pub linear: LayerSchedule,
    /// L2 penalty of the softmax head fitted on the pretrained features.
    pub head_l2: f64,
    pub head_cg_iters: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            zae: LayerSchedule::zae(),
            linear: LayerSchedule::linear(),
            head_l2: 1e-4,
            head_cg_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Step decay: the learning rate is multiplied by `lr_gamma` every `lr_every` epochs.
    pub lr_gamma: f64,
    pub lr_every: usize,
    pub head_weight_decay: f64,
    /// Weight decay of hidden linear layers.
    pub linear_weight_decay: f64,
    pub dropout_input: f64,
    pub dropout_hidden: f64,
    /// Start from the pretrained checkpoint instead of a random initialisation.
    pub from_pretrained: bool,
    /// Defaults to `<out>/checkpoints/pretrained.zlin`.
    pub pretrained_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 100,
            lr_gamma: 0.5,
            lr_every: 100,
            head_weight_decay: 0.0,
            linear_weight_decay: 0.0,
            dropout_input: 0.0,
            dropout_hidden: 0.0,
            from_pretrained: false,
            pretrained_path: None,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(self.lr, self.lr_gamma, self.lr_every)
    }

    pub fn dropout(&self) -> DropoutRates {
        DropoutRates {
            input: self.dropout_input,
            hidden: self.dropout_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Training examples used for sparsity, histograms and metrics sparsity columns.
    pub size: usize,
    pub bins: usize,
    /// Minibatch used for the update-density probe.
    pub density_batch: usize,
    pub clt_n: Vec<usize>,
    pub clt_samples: usize,
    pub clt_repeats: usize,
    pub spike_biases: Vec<f64>,
    pub spike_n: usize,
    pub spike_samples: usize,
    /// Checkpoint to probe; defaults to `<out>/checkpoints/final.zlin`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            size: 10000,
            bins: 50,
            density_batch: 100,
            clt_n: vec![4, 32, 256, 2048],
            clt_samples: 100_000,
            clt_repeats: 5,
            spike_biases: vec![-5.0, 0.0, 5.0],
            spike_n: 64,
            spike_samples: 100_000,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Input dimension of the checked network; inputs are standard Gaussian.
    pub input_dim: usize,
    pub batch: usize,
    /// Coordinates checked per weight or bias tensor.
    pub coords: usize,
    pub eps: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            input_dim: 64,
            batch: 16,
            coords: 20,
            eps: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Defaults to `<out>/checkpoints/final.zlin`; without it a fresh network is evaluated.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub precision: Precision,
    pub out: PathBuf,
    /// Threads for row-parallel kernels. Results do not depend on this.
    pub workers: usize,
    pub architecture: String,
    pub data: DataConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seed: 0,
            precision: Precision::F32,
            out: PathBuf::from("runs/experiment"),
            workers: 1,
            architecture: "10".into(),
            data: DataConfig::default(),
            pretrain: PretrainConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            probe: ProbeConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub precision: Option<Precision>,
    pub workers: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

impl ExperimentConfig {
    /// Parses TOML text. Relative data paths are resolved against `base`.
    pub fn from_toml(text: &str, path: &Path, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            msg: e.message().to_string(),
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.train_paths.iter_mut().for_each(resolve);
        cfg.data.test_paths.iter_mut().for_each(resolve);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, path, base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(p) = o.precision {
            self.precision = p;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        parse_architecture(&self.architecture)
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<Architecture> {
        let arch = self.architecture()?;
        let classes = self.data.classes();
        if arch.classes != classes {
            return Err(Error::Config(format!(
                "architecture {} ends in {} classes but the {:?} data has {classes}",
                self.architecture, arch.classes, self.data.name
            )));
        }
        let d = &self.data;
        if !(d.variance_fraction > 0.0 && d.variance_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "data.variance_fraction {} outside (0, 1]",
                d.variance_fraction
            )));
        }
        if matches!(d.name, DataSource::Cifar10 | DataSource::Higgs) && d.train_paths.is_empty() {
            return Err(Error::Config(format!(
                "data.train_paths is required for {:?}",
                d.name
            )));
        }
        if d.augment && !d.name.is_image() {
            return Err(Error::Config("data.augment needs an image dataset".into()));
        }
        let t = &self.train;
        for (key, rate) in [
            ("dropout_input", t.dropout_input),
            ("dropout_hidden", t.dropout_hidden),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("train.{key} {rate} outside [0, 1)")));
            }
        }
        if t.batch_size == 0
            || self.pretrain.zae.batch_size == 0
            || self.pretrain.linear.batch_size == 0
        {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(Error::Config(format!(
                "train.momentum {} outside [0, 1)",
                t.momentum
            )));
        }
        t.schedule().map_err(|e| Error::Config(e.to_string()))?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(arch)
    }

    pub fn pretrain_schedule(&self, arch: &Architecture) -> PretrainSchedule {
        PretrainSchedule::uniform(arch, self.pretrain.zae, self.pretrain.linear)
    }

    pub fn augment_ops(&self) -> Option<AugmentOps> {
        self.data.augment.then(AugmentOps::default)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.out.join("checkpoints")
    }

    pub fn pretrained_path(&self) -> PathBuf {
        self.train
            .pretrained_path
            .clone()
            .unwrap_or_else(|| self.checkpoint_dir().join("pretrained.zlin"))
    }

    pub fn final_path(&self) -> PathBuf {
        self.checkpoint_dir().join("final.zlin")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(text, Path::new("test.toml"), Path::new("/base"))
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn sections_and_relative_paths() {
        let cfg = parse(
            r#"
            architecture = "512Z-128L-512Z-10"
            precision = "f64"
            [data]
            name = "cifar10"
            train_paths = ["data_batch_1.bin", "/abs/data_batch_2.bin"]
            train_size = 5000
            [train]
            epochs = 3
            from_pretrained = true
            [pretrain.zae]
            epochs = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.precision, Precision::F64);
        assert_eq!(cfg.data.name, DataSource::Cifar10);
        assert_eq!(
            cfg.data.train_paths[0],
            PathBuf::from("/base/data_batch_1.bin")
        );
        assert_eq!(
            cfg.data.train_paths[1],
            PathBuf::from("/abs/data_batch_2.bin")
        );
        assert_eq!(cfg.pretrain.zae.epochs, 2);
        assert_eq!(cfg.pretrain.zae.threshold, 1.0);
        assert!(cfg.data.contrast());
        assert_eq!(cfg.validate().unwrap().hidden.len(), 3);
    }

    #[test]
    fn unknown_keys_report_the_line() {
        match parse("seed = 1\n[train]\nepochz = 3\n") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("epochz"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        let bad = [
            "architecture = \"64Z-3\"\n[data]\nname = \"cifar10\"\ntrain_paths = [\"x\"]",
            "architecture = \"64Q-10\"",
            "[data]\nname = \"cifar10\"",
            "[data]\naugment = true",
            "[train]\ndropout_hidden = 1.0",
            "[train]\nlr = 0.0",
            "workers = 0",
        ];
        for text in bad {
            assert!(parse(text).unwrap().validate().is_err(), "{text}");
        }
    }

    #[test]
    fn overrides_win_and_snapshot_round_trips() {
        let mut cfg = parse("seed = 1\nout = \"a\"").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            out: Some("b".into()),
            precision: Some(Precision::F64),
            workers: None,
        });
        assert_eq!(
            (cfg.seed, cfg.out.clone(), cfg.precision),
            (9, PathBuf::from("b"), Precision::F64)
        );
        let back = parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
