//! The `zlin` commands. Each writes its artifacts under the configured output directory,
//! starting with `config.resolved.toml`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::checkpoint::{load_network, save_network};
use super::config::ExperimentConfig;
use super::metrics::MetricsWriter;
use super::train::{
    evaluate, insert_dropout, prepare_with, stream, train_network, write_report, EpochReport,
    Prepared, Stream,
};
use crate::error::{Error, Result};
use crate::layers::{Architecture, DropoutRates, Network};
use crate::numcore::{Matrix, Precision, Real};
use crate::optim::{fit_softmax_head, CgOptions};
use crate::pretrain::stack_pretrain;
use crate::probes::{
    activation_histogram, clt_envelope, grad_check, hidden_layer_indices, sparsity_probe,
    spike_mass_check, update_density_probe, DensityReport, Histogram, InputDist, Shape,
    SparsityReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PrepareData,
    Pretrain,
    Train,
    Eval,
    Probe,
    Gradcheck,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::PrepareData,
        Command::Pretrain,
        Command::Train,
        Command::Eval,
        Command::Probe,
        Command::Gradcheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::PrepareData => "prepare-data",
            Command::Pretrain => "pretrain",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Probe => "probe",
            Command::Gradcheck => "gradcheck",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command {s:?}")))
    }
}

/// What a command reports back. `success` is false when the command ran but its check
/// failed (a gradient check above tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub success: bool,
    pub summary: String,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome {
            success: true,
            summary,
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Validates the config, snapshots it and runs `cmd`. Progress lines go to `log`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<Outcome> {
    let arch = cfg.validate()?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("config.resolved.toml"), &cfg.to_toml())?;
    if cmd == Command::Gradcheck {
        return gradcheck(cfg, &arch);
    }
    match cfg.precision {
        Precision::F32 => run_typed::<f32>(cmd, cfg, &arch, log),
        Precision::F64 => run_typed::<f64>(cmd, cfg, &arch, log),
    }
}

fn run_typed<T: Real>(
    cmd: Command,
    cfg: &ExperimentConfig,
    arch: &Architecture,
    log: &mut dyn FnMut(&str),
) -> Result<Outcome> {
    match cmd {
        Command::PrepareData => prepare_data::<T>(cfg),
        Command::Pretrain => pretrain::<T>(cfg, arch, log),
        Command::Train => train::<T>(cfg, arch, log),
        Command::Eval => eval::<T>(cfg, arch, log),
        Command::Probe => probe::<T>(cfg, arch, log),
        Command::Gradcheck => unreachable!("gradcheck always runs in f64"),
    }
}

const WHITENER_FILE: &str = "whitener.zlwh";
const WHITENER_KEY_FILE: &str = "whitener.key";

/// Everything the fitted whitener depends on.
fn whitener_key(cfg: &ExperimentConfig) -> String {
    let mut data = cfg.data.clone();
    data.augment = false;
    format!(
        "seed = {}\nprecision = {:?}\n{}",
        cfg.seed,
        cfg.precision,
        toml::to_string(&data).expect("data config serializes")
    )
}

/// Prepared data, reusing the whitener cached in the output directory when it was fitted
/// under the same data settings and caching a freshly fitted one.
fn prepare<T: Real>(cfg: &ExperimentConfig) -> Result<Prepared<T>> {
    let key = whitener_key(cfg);
    let (wpath, kpath) = (cfg.out.join(WHITENER_FILE), cfg.out.join(WHITENER_KEY_FILE));
    let cached = match fs::read_to_string(&kpath) {
        Ok(k) if k == key && cfg.data.whiten => {
            let bytes = fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;
            Some(crate::data::Whitener::from_bytes(&bytes)?)
        }
        _ => None,
    };
    let reused = cached.is_some();
    let data = prepare_with::<T>(cfg, cached)?;
    if let (false, Some(w)) = (reused, &data.whitener) {
        fs::write(&wpath, w.to_bytes()).map_err(|e| Error::io(&wpath, e))?;
        write_file(&kpath, &key)?;
    }
    Ok(data)
}

fn prepare_data<T: Real>(cfg: &ExperimentConfig) -> Result<Outcome> {
    let data = prepare::<T>(cfg)?;
    let mut s = String::new();
    let _ = writeln!(s, "train_examples={}", data.train.len());
    let _ = writeln!(s, "test_examples={}", data.test.len());
    let _ = writeln!(s, "input_dims={}", data.train.dims());
    let counts: Vec<String> = data
        .train
        .class_counts()
        .iter()
        .map(|c| c.to_string())
        .collect();
    let _ = writeln!(s, "train_class_counts={}", counts.join(" "));
    if let Some(w) = &data.whitener {
        let _ = writeln!(s, "raw_dims={}", w.input_dims());
        let _ = writeln!(s, "retained_components={}", w.retained);
        let _ = writeln!(s, "variance_fraction={}", w.variance_fraction);
    }
    write_file(&cfg.out.join("data_summary.txt"), &s)?;
    Ok(Outcome::ok(s.trim_end().to_string()))
}

fn pretrain<T: Real>(
    cfg: &ExperimentConfig,
    arch: &Architecture,
    log: &mut dyn FnMut(&str),
) -> Result<Outcome> {
    let data = prepare::<T>(cfg)?;
    let schedule = cfg.pretrain_schedule(arch);
    let stack = stack_pretrain(
        arch,
        &data.train.features,
        &schedule,
        &mut stream(cfg.seed, Stream::Pretrain),
    )?;
    let mut csv = String::from("layer,kind,epoch,loss\n");
    for (k, (spec, losses)) in arch.hidden.iter().zip(&stack.losses).enumerate() {
        for (e, l) in losses.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{e},{l}", k + 1, spec.kind.letter());
        }
        log(&format!(
            "layer {} ({}{}): reconstruction loss {} -> {}",
            k + 1,
            spec.width,
            spec.kind.letter(),
            losses[0],
            losses[losses.len() - 1]
        ));
    }
    write_file(&cfg.out.join("pretrain.csv"), &csv)?;

    let opts = CgOptions {
        max_iters: cfg.pretrain.head_cg_iters,
        ..CgOptions::default()
    };
    let (head, cg) = fit_softmax_head(
        &stack.features,
        &data.train.labels,
        arch.classes,
        cfg.pretrain.head_l2,
        None,
        &opts,
    )?;
    if cg.line_search_failed {
        log("warning: the head line search stopped early; keeping the best point");
    }
    let mut layers = stack.network.layers;
    layers.push(head);
    let net = Network::new(data.train.dims(), layers)?;
    create_dir(&cfg.checkpoint_dir())?;
    save_network(&net, &cfg.checkpoint_dir().join("pretrained.zlin"))?;
    let train = evaluate(&net, &data.train)?;
    let test = evaluate(&net, &data.test)?;
    Ok(Outcome::ok(format!(
        "pretrained {arch}: head fit in {} CG iterations; train accuracy {:.4}, test accuracy {:.4}",
        cg.iterations, train.accuracy, test.accuracy
    )))
}

fn epoch_line(r: &EpochReport) -> String {
    format!(
        "epoch {:>4}  lr {:.3e}  train loss {:.4} acc {:.4}  test loss {:.4} acc {:.4}",
        r.epoch, r.lr, r.train.loss, r.train.accuracy, r.test.loss, r.test.accuracy
    )
}

fn check_input<T: Real>(net: &Network<T>, dims: usize, what: &Path) -> Result<()> {
    if net.input_dim != dims {
        return Err(Error::Config(format!(
            "{} expects {} inputs but the prepared data has {dims}",
            what.display(),
            net.input_dim
        )));
    }
    Ok(())
}

fn train<T: Real>(
    cfg: &ExperimentConfig,
    arch: &Architecture,
    log: &mut dyn FnMut(&str),
) -> Result<Outcome> {
    let data = prepare::<T>(cfg)?;
    let net = if cfg.train.from_pretrained {
        let path = cfg.pretrained_path();
        if !path.exists() {
            return Err(Error::Config(format!(
                "missing pretrained checkpoint {}; run `zlin pretrain` with this config first",
                path.display()
            )));
        }
        let net = load_network::<T>(&path)?;
        check_input(&net, data.train.dims(), &path)?;
        insert_dropout(&net, cfg.train.dropout())?
    } else {
        arch.build(
            data.train.dims(),
            cfg.train.dropout(),
            &mut stream(cfg.seed, Stream::Init),
        )
    };
    let mut metrics = MetricsWriter::create(
        &cfg.out.join("metrics.csv"),
        hidden_layer_indices(&net).len(),
    )?;
    let mut last = None;
    let net = train_network(net, &data, cfg, &mut metrics, |r| {
        log(&epoch_line(r));
        last = Some((r.train, r.test));
    })?;
    create_dir(&cfg.checkpoint_dir())?;
    save_network(&net, &cfg.final_path())?;
    let (tr, te) = last.expect("epoch 0 is always reported");
    Ok(Outcome::ok(format!(
        "trained {arch} for {} epochs: train accuracy {:.4}, test accuracy {:.4}",
        cfg.train.epochs, tr.accuracy, te.accuracy
    )))
}

/// The configured checkpoint, else `fallback` when it exists, else a fresh network.
fn load_or_fresh<T: Real>(
    explicit: Option<&Path>,
    fallback: &[std::path::PathBuf],
    cfg: &ExperimentConfig,
    arch: &Architecture,
    dims: usize,
    log: &mut dyn FnMut(&str),
) -> Result<Network<T>> {
    if let Some(p) = explicit {
        let net = load_network::<T>(p)?;
        check_input(&net, dims, p)?;
        return Ok(net);
    }
    if let Some(p) = fallback.iter().find(|p| p.exists()) {
        let net = load_network::<T>(p)?;
        check_input(&net, dims, p)?;
        log(&format!("using checkpoint {}", p.display()));
        return Ok(net);
    }
    log("no checkpoint found; using a freshly initialised network");
    Ok(arch.build(
        dims,
        DropoutRates::default(),
        &mut stream(cfg.seed, Stream::Init),
    ))
}

fn eval<T: Real>(
    cfg: &ExperimentConfig,
    arch: &Architecture,
    log: &mut dyn FnMut(&str),
) -> Result<Outcome> {
    let data = prepare::<T>(cfg)?;
    let net = load_or_fresh::<T>(
        cfg.eval.checkpoint.as_deref(),
        &[cfg.final_path()],
        cfg,
        arch,
        data.train.dims(),
        log,
    )?;
    let probe = data
        .train
        .features
        .select_rows(&(0..cfg.probe.size.min(data.train.len())).collect::<Vec<_>>());
    let report = EpochReport {
        epoch: 0,
        lr: 0.0,
        train: evaluate(&net, &data.train)?,
        test: evaluate(&net, &data.test)?,
        sparsity: sparsity_probe(&net, &probe)?.fractions(),
    };
    let mut metrics = MetricsWriter::create(&cfg.out.join("eval.csv"), report.sparsity.len())?;
    write_report(&mut metrics, &report, 0.0)?;
    Ok(Outcome::ok(format!(
        "train loss {:.4} accuracy {:.4}; test loss {:.4} accuracy {:.4}",
        report.train.loss, report.train.accuracy, report.test.loss, report.test.accuracy
    )))
}

fn probe<T: Real>(
    cfg: &ExperimentConfig,
    arch: &Architecture,
    log: &mut dyn FnMut(&str),
) -> Result<Outcome> {
    let p = &cfg.probe;
    let data = prepare::<T>(cfg)?;
    let fallback = [cfg.final_path(), cfg.pretrained_path()];
    let net = load_or_fresh::<T>(
        p.checkpoint.as_deref(),
        &fallback,
        cfg,
        arch,
        data.train.dims(),
        log,
    )?;
    let dir = cfg.out.join("probes");
    create_dir(&dir)?;
    let n = data.train.len();
    let probe_set = data
        .train
        .features
        .select_rows(&(0..p.size.min(n)).collect::<Vec<_>>());
    let rng = stream(cfg.seed, Stream::Probe);

    let sparsity = sparsity_probe(&net, &probe_set)?;
    write_file(
        &dir.join("sparsity.csv"),
        &format!("{}\n{}", SparsityReport::CSV_HEADER, sparsity.csv_rows()),
    )?;

    let batch: Vec<usize> = (0..p.density_batch.min(n)).collect();
    let labels: Vec<usize> = batch.iter().map(|&i| data.train.labels[i]).collect();
    let density = update_density_probe(
        &net,
        &data.train.features.select_rows(&batch),
        &labels,
        cfg.train.lr,
        &mut rng.stream(0),
    )?;
    write_file(
        &dir.join("density.csv"),
        &format!("{}\n{}", DensityReport::CSV_HEADER, density.csv_rows()),
    )?;

    let mut hist = format!("{}\n", Histogram::CSV_HEADER);
    for layer in hidden_layer_indices(&net) {
        hist.push_str(&activation_histogram(&net, &probe_set, layer, p.bins)?.csv_rows(layer));
    }
    write_file(&dir.join("histogram.csv"), &hist)?;

    let uniform = [InputDist::standard(Shape::Uniform)];
    let envelope = clt_envelope(
        &uniform,
        &p.clt_n,
        p.clt_samples,
        p.clt_repeats.max(1),
        &rng.stream(1),
    )?;
    let mut clt = String::from("n,ks_mean,ks_sd\n");
    for (n, m, sd) in &envelope {
        let _ = writeln!(clt, "{n},{m},{sd}");
    }
    write_file(&dir.join("clt.csv"), &clt)?;

    let mut spike = String::from("bias,empirical,predicted\n");
    let mut spike_rng = rng.stream(2);
    for &b in &p.spike_biases {
        let s = spike_mass_check(
            b,
            &uniform,
            None,
            p.spike_n,
            p.spike_samples,
            &mut spike_rng,
        )?;
        let _ = writeln!(spike, "{},{},{}", s.bias, s.empirical, s.predicted);
    }
    write_file(&dir.join("spike.csv"), &spike)?;

    let fr: Vec<String> = sparsity
        .fractions()
        .iter()
        .map(|f| format!("{f:.3}"))
        .collect();
    Ok(Outcome::ok(format!(
        "wrote {}: layer sparsity [{}]",
        dir.display(),
        fr.join(", ")
    )))
}

fn gradcheck(cfg: &ExperimentConfig, arch: &Architecture) -> Result<Outcome> {
    let g = &cfg.gradcheck;
    let mut rng = stream(cfg.seed, Stream::GradCheck);
    let net: Network<f64> = arch.build(g.input_dim, DropoutRates::default(), &mut rng);
    let x = Matrix::from_fn(g.batch, g.input_dim, |_, _| rng.gaussian());
    let labels: Vec<usize> = (0..g.batch).map(|_| rng.below(arch.classes)).collect();
    let report = grad_check(&net, &x, &labels, g.eps, g.coords, &mut rng)?;
    let mut csv = String::from("layer,tensor,max_rel_error\n");
    for (layer, tensor, err) in &report.tensors {
        let _ = writeln!(csv, "{layer},{tensor},{err}");
    }
    write_file(&cfg.out.join("gradcheck.csv"), &csv)?;
    let success = report.max_rel_error < g.tolerance;
    Ok(Outcome {
        success,
        summary: format!(
            "{arch}: max relative error {:.3e} over {} coordinates ({} resampled at kinks); tolerance {:.0e}: {}",
            report.max_rel_error,
            report.checked,
            report.resampled,
            g.tolerance,
            if success { "ok" } else { "FAILED" }
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::DataSource;

    fn small(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.out = out.to_path_buf();
        cfg.architecture = "24Z-6L-24Z-3".into();
        cfg.data.name = DataSource::Subspace;
        cfg.data.classes = 3;
        cfg.data.dims = 12;
        cfg.data.rank = 6;
        cfg.data.train_size = Some(300);
        cfg.data.test_size = Some(100);
        cfg.pretrain.zae.epochs = 2;
        cfg.pretrain.linear.epochs = 2;
        cfg.pretrain.head_cg_iters = 20;
        cfg.train.epochs = 2;
        cfg.train.from_pretrained = true;
        cfg.train.dropout_hidden = 0.5;
        cfg.probe.size = 200;
        cfg.probe.clt_n = vec![4, 32];
        cfg.probe.clt_samples = 2000;
        cfg.probe.clt_repeats = 2;
        cfg.probe.spike_samples = 2000;
        cfg
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("fit".parse::<Command>().is_err());
    }

    #[test]
    fn cached_whitener_reproduces_the_fit() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        fs::create_dir_all(dir.path()).unwrap();
        let fresh = prepare::<f64>(&cfg).unwrap();
        assert!(dir.path().join(WHITENER_KEY_FILE).exists());
        let cached = prepare::<f64>(&cfg).unwrap();
        assert_eq!(fresh.train, cached.train);
        assert_eq!(fresh.test, cached.test);
        cfg.data.variance_fraction = 0.5;
        let refit = prepare::<f64>(&cfg).unwrap();
        assert!(refit.train.dims() < fresh.train.dims());
    }

    #[test]
    fn full_pipeline_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let mut log = |_: &str| {};
        let err = run(Command::Train, &cfg, &mut log).unwrap_err().to_string();
        assert!(err.contains("missing pretrained checkpoint"), "{err}");
        for cmd in [
            Command::PrepareData,
            Command::Pretrain,
            Command::Train,
            Command::Eval,
            Command::Probe,
            Command::Gradcheck,
        ] {
            assert!(run(cmd, &cfg, &mut log).unwrap().success, "{cmd:?}");
        }
        for f in [
            "config.resolved.toml",
            "whitener.zlwh",
            "data_summary.txt",
            "pretrain.csv",
            "metrics.csv",
            "eval.csv",
            "gradcheck.csv",
            "checkpoints/pretrained.zlin",
            "checkpoints/final.zlin",
            "probes/sparsity.csv",
            "probes/density.csv",
            "probes/histogram.csv",
            "probes/clt.csv",
            "probes/spike.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let snapshot = ExperimentConfig::load(&dir.path().join("config.resolved.toml")).unwrap();
        assert_eq!(snapshot, cfg);
    }
}
