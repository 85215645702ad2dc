use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tagi::gan::Denormalize;
use tagi::inference::ObservationModel;
use tagi::network::{preset_table, NormMode};
use tagi::{GanBundle, GaussianVector, LatentSpec, Model, Network, NetworkConfig, Scalar};
use tagi_harness::bench::{bench_scaling, DEFAULT_WIDTHS};
use tagi_harness::checkpoint::Checkpoint;
use tagi_harness::crosscov::run_cross_covariance;
use tagi_harness::data::{load_cifar10, load_image_dir, load_mnist, Dataset, Normalizer, Preprocessing};
use tagi_harness::joint::run_joint_conditioning;
use tagi_harness::gan_train::{column_pixel_variance, infogan_grid, save_grid_png, toy_dataset, train_gan, GanProgress, GAN_LOG_HEADER};
use tagi_harness::train::{evaluate, train, write_log, Progress, RunConfig, LOG_HEADER};
use tagi_harness::verify::{run_moment_oracles, OracleConfig};
use tagi_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "tagi", version, about = "Networks trained by analytical Gaussian inference, without backpropagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier, evaluating on the test split after every epoch.
    Train(Common),
    /// Evaluate a saved classifier on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train an adversarial network (mnist-infogan, celeba-infogan or toy2d).
    GanTrain {
        #[command(flatten)]
        common: Common,
        /// Stop each epoch after this many iterations.
        #[arg(long)]
        limit: Option<usize>,
        /// Rows of the final image grid.
        #[arg(long, default_value_t = 8)]
        rows: usize,
    },
    /// Render a latent traversal grid from saved adversarial networks.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Directory written by `gan-train --out`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        rows: usize,
    },
    /// Check every moment rule against Monte-Carlo estimates, the cross-covariances
    /// against joint sampling and the inference sweep against exact conditioning.
    VerifyMoments {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Allowed deviation in standard errors.
        #[arg(long, default_value_t = 4.0)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time inference against parameter count and fit a line.
    BenchScaling {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WIDTHS)]
        widths: Vec<usize>,
        /// Mini-batches of 16 per timing.
        #[arg(long, default_value_t = 20)]
        batches: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Preset name or path to a layer table; `key: value` lines in the file override flags.
    #[arg(long)]
    config: Option<String>,
    /// Directory holding the datasets (or the dataset itself).
    #[arg(long, default_value = "data")]
    dataset_root: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Initial observation noise standard deviation.
    #[arg(long)]
    sigma_v0: Option<f64>,
    /// Per-epoch decay factor of the observation noise.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compute in f64 instead of f32.
    #[arg(long)]
    double: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum NormArg {
    None,
    Layer,
    Batch,
}

impl From<NormArg> for NormMode {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::None => NormMode::None,
            NormArg::Layer => NormMode::Layer,
            NormArg::Batch => NormMode::Batch,
        }
    }
}

const RUN_KEYS: [&str; 10] = ["seed", "epochs", "batch", "sigma-v0", "eta", "norm", "out", "dataset", "dataset-root", "family"];

/// Flags after merging in the `key: value` lines of a config file.
#[derive(Debug, Clone)]
struct Settings {
    common: Common,
    dataset: Option<String>,
    family: Option<String>,
}

fn run_keys(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split('#').next()?.split_once(':'))
        .map(|(k, v)| (k.trim().to_ascii_lowercase().replace('_', "-"), v.trim().to_string()))
        .filter(|(k, _)| RUN_KEYS.contains(&k.as_str()))
        .collect()
}

fn parse_key<V: std::str::FromStr>(keys: &BTreeMap<String, String>, k: &str) -> Result<Option<V>> {
    keys.get(k)
        .map(|v| v.parse().map_err(|_| HarnessError::Config(format!("config key `{k}`: cannot parse `{v}`"))))
        .transpose()
}

impl Settings {
    fn merge(mut common: Common, keys: &BTreeMap<String, String>) -> Result<Self> {
        common.seed = parse_key(keys, "seed")?.or(common.seed);
        common.epochs = parse_key(keys, "epochs")?.or(common.epochs);
        common.batch = parse_key(keys, "batch")?.or(common.batch);
        common.sigma_v0 = parse_key(keys, "sigma-v0")?.or(common.sigma_v0);
        common.eta = parse_key(keys, "eta")?.or(common.eta);
        if let Some(n) = keys.get("norm") {
            common.norm = Some(NormArg::from_str(n, true).map_err(|_| HarnessError::Config(format!("config key `norm`: `{n}`")))?);
        }
        if let Some(o) = keys.get("out") {
            common.out = Some(o.into());
        }
        if let Some(r) = keys.get("dataset-root") {
            common.dataset_root = r.into();
        }
        Ok(Self { common, dataset: keys.get("dataset").cloned(), family: keys.get("family").cloned() })
    }

    fn seed(&self) -> u64 {
        self.common.seed.unwrap_or(0)
    }
}

/// Resolves `--config` into a network and the merged run settings.
fn classifier_config(common: &Common) -> Result<(NetworkConfig, Settings)> {
    let name = common.config.clone().unwrap_or_else(|| "mnist-cnn".into());
    if preset_table(&name).is_some() {
        return Ok((tagi::preset(&name)?, Settings::merge(common.clone(), &BTreeMap::new())?));
    }
    let text = read_config(&name)?;
    let keys = run_keys(&text);
    let mut cfg = NetworkConfig::parse(&text)?;
    cfg.extras.retain(|k, _| !RUN_KEYS.contains(&k.replace('_', "-").as_str()));
    Ok((cfg, Settings::merge(common.clone(), &keys)?))
}

fn read_config(name: &str) -> Result<String> {
    let path = Path::new(name);
    if !path.is_file() {
        return Err(HarnessError::Config(format!("`{name}` is neither a preset nor a readable file")));
    }
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

/// `root/name` when that directory exists, else `root`.
fn dataset_dir(root: &Path, name: &str) -> PathBuf {
    let sub = root.join(name);
    if sub.is_dir() {
        sub
    } else {
        root.to_path_buf()
    }
}

fn load_classification(s: &Settings, cfg: &NetworkConfig) -> Result<(Dataset, Dataset, Normalizer)> {
    let name = match &s.dataset {
        Some(d) => d.clone(),
        None => match cfg.input_shape()?.len() {
            784 => "mnist".into(),
            3072 => "cifar10".into(),
            _ => return Err(HarnessError::Config(format!("cannot tell the dataset of `{}`; add a `dataset:` line", cfg.name))),
        },
    };
    let root = &s.common.dataset_root;
    let (train, test) = match name.as_str() {
        "mnist" => load_mnist(&dataset_dir(root, "mnist"))?,
        "cifar10" => load_cifar10(&dataset_dir(root, "cifar10"))?,
        other => return Err(HarnessError::Config(format!("unknown classification dataset `{other}`"))),
    };
    let norm = Normalizer::fit(Preprocessing::UnitRangeMeanSubtract, &train);
    Ok((train, test, norm))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn cmd_train<T: Scalar>(common: &Common) -> Result<()> {
    let (network, s) = classifier_config(common)?;
    let mut cfg = RunConfig::new(network);
    cfg.seed = s.seed();
    cfg.epochs = s.common.epochs.unwrap_or(cfg.epochs);
    cfg.batch = s.common.batch.unwrap_or(cfg.batch);
    cfg.sigma_v0 = s.common.sigma_v0.unwrap_or(cfg.sigma_v0);
    cfg.eta = s.common.eta.unwrap_or(cfg.eta);
    cfg.norm = s.common.norm.map_or(cfg.norm, NormMode::from);
    cfg.out = s.common.out.clone();
    let (train_set, test_set, norm) = load_classification(&s, &cfg.network)?;
    let start = Instant::now();
    println!("{LOG_HEADER}");
    let outcome = train::<T>(&cfg, &train_set, &test_set, &norm, &mut |p| match p {
        Progress::Batch { epoch, done, total, running_err } => {
            eprintln!("epoch {epoch}: {done}/{total} batches, running error {running_err:.4}, {:.0} s", start.elapsed().as_secs_f64())
        }
        Progress::Epoch(log) => println!("{}", log.tsv()),
    })?;
    if let Some(dir) = &cfg.out {
        create_dir(dir)?;
        write_log(&dir.join("metrics.tsv"), &outcome.history)?;
        let ckpt = Checkpoint { config: cfg.resolved_network(), params: outcome.params, obs: outcome.obs };
        ckpt.save(&dir.join("model.ckpt"))?;
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_eval<T: Scalar>(common: &Common, checkpoint: &Path) -> Result<()> {
    let ckpt = Checkpoint::<T>::load(checkpoint)?;
    let s = match &common.config {
        Some(_) => {
            let (expected, s) = classifier_config(common)?;
            let expected = match s.common.norm {
                Some(n) if NormMode::from(n) != NormMode::None => expected.with_normalization(n.into()),
                _ => expected,
            };
            ckpt.expect_config(&expected)?;
            s
        }
        None => Settings::merge(common.clone(), &BTreeMap::new())?,
    };
    let net = Network::new(ckpt.config.clone())?;
    let (_, test_set, norm) = load_classification(&s, &ckpt.config)?;
    let r = evaluate(&net, &ckpt.params, &test_set, &norm, s.common.batch.unwrap_or(16), tagi_harness::metrics::DEFAULT_ECE_BINS)?;
    println!("n\ttest_err\tnll\tece\tauroc");
    println!("{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", r.n, r.error_rate, r.nll, r.ece, r.auroc);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Mnist,
    Celeba,
    Toy,
}

impl Family {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "mnist-infogan" => Ok(Family::Mnist),
            "celeba-infogan" => Ok(Family::Celeba),
            "toy2d" => Ok(Family::Toy),
            other => Err(HarnessError::Config(format!("unknown adversarial family `{other}` (mnist-infogan, celeba-infogan, toy2d)"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Family::Mnist => "mnist-infogan",
            Family::Celeba => "celeba-infogan",
            Family::Toy => "toy2d",
        }
    }

    fn latent(self) -> LatentSpec {
        match self {
            Family::Mnist => LatentSpec::MNIST,
            Family::Celeba => LatentSpec::CELEBA,
            Family::Toy => LatentSpec::TOY2D,
        }
    }

    fn bundle<T: Scalar>(self, seed: u64, eta: f64) -> Result<GanBundle<T>> {
        Ok(match self {
            Family::Mnist => GanBundle::mnist_infogan(seed, eta)?,
            Family::Celeba => GanBundle::celeba_infogan(seed, eta)?,
            Family::Toy => GanBundle::toy2d(seed, eta)?,
        })
    }
}

/// Family name from `--config`, either directly or from a file's `family:` line.
fn gan_settings(common: &Common) -> Result<(Family, Settings)> {
    let name = common.config.clone().unwrap_or_else(|| "mnist-infogan".into());
    if let Ok(f) = Family::parse(&name) {
        return Ok((f, Settings::merge(common.clone(), &BTreeMap::new())?));
    }
    let keys = run_keys(&read_config(&name)?);
    let s = Settings::merge(common.clone(), &keys)?;
    let family = s.family.as_deref().ok_or_else(|| HarnessError::Config(format!("{name}: missing `family:` line")))?;
    Ok((Family::parse(family)?, s))
}

const MODEL_FILES: [&str; 4] = ["gnet.ckpt", "dnet.ckpt", "pnet.ckpt", "qnet.ckpt"];

fn save_bundle<T: Scalar>(bundle: &GanBundle<T>, denorm: &Denormalize, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let models = [Some(&bundle.gnet), Some(&bundle.dnet), Some(&bundle.pnet), bundle.qnet.as_ref()];
    let obs = [bundle.obs_p, bundle.obs_p, bundle.obs_p, bundle.obs_q];
    for ((m, obs), file) in models.into_iter().zip(obs).zip(MODEL_FILES) {
        if let Some(m) = m {
            Checkpoint { config: m.net.config.clone(), params: m.params.clone(), obs }.save(&dir.join(file))?;
        }
    }
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
    let text = format!("mean\t{}\nstd\t{}\n", join(&denorm.mean), join(&denorm.std));
    std::fs::write(dir.join("denorm.tsv"), text).map_err(|e| HarnessError::io(dir.join("denorm.tsv"), e))
}

fn load_bundle<T: Scalar>(family: Family, dir: &Path) -> Result<(GanBundle<T>, Denormalize)> {
    let load = |file: &str| -> Result<(Model<T>, ObservationModel)> {
        let c = Checkpoint::<T>::load(&dir.join(file))?;
        Ok((Model { net: Network::new(c.config)?, params: c.params }, c.obs))
    };
    let (gnet, _) = load(MODEL_FILES[0])?;
    let (dnet, _) = load(MODEL_FILES[1])?;
    let (pnet, obs_p) = load(MODEL_FILES[2])?;
    let (qnet, obs_q) = if dir.join(MODEL_FILES[3]).is_file() {
        let (q, o) = load(MODEL_FILES[3])?;
        (Some(q), o)
    } else {
        (None, obs_p)
    };
    let bundle = GanBundle::new(family.latent(), gnet, dnet, pnet, qnet, obs_p, obs_q)?;
    let path = dir.join("denorm.tsv");
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut denorm = Denormalize::identity();
    for line in text.lines() {
        let bad = || HarnessError::Data(format!("{}: bad line `{line}`", path.display()));
        let (k, v) = line.split_once('\t').ok_or_else(bad)?;
        let vals = v.split(',').map(|x| x.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        match k {
            "mean" => denorm.mean = vals,
            "std" => denorm.std = vals,
            _ => return Err(bad()),
        }
    }
    Ok((bundle, denorm))
}

fn grid_columns(latent: &LatentSpec) -> usize {
    if latent.categorical > 0 {
        latent.classes
    } else {
        8
    }
}

/// Writes or reports the final samples of a bundle.
fn emit_samples<T: Scalar>(family: Family, bundle: &GanBundle<T>, denorm: &Denormalize, rows: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    if family == Family::Toy {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let codes: Vec<_> = (0..500).map(|_| tagi::sample_latent::<T, _>(&bundle.latent, &mut rng)).collect();
        let points = bundle.generate(&codes)?;
        let mut text = String::from("x\ty\n");
        for p in &points {
            text.push_str(&format!("{:.6}\t{:.6}\n", p.mean()[0].to_f64_lossy(), p.mean()[1].to_f64_lossy()));
        }
        match out {
            Some(dir) => {
                let path = dir.join("samples.tsv");
                std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{text}"),
        }
        return Ok(());
    }
    let grid = infogan_grid(bundle, rows, grid_columns(&bundle.latent), denorm, seed)?;
    let variance = column_pixel_variance(&grid);
    let flat = variance.iter().filter(|v| **v == 0.0).count();
    println!("grid\t{}x{}\tmin_class_variance\t{:.3}\tflat_classes\t{flat}", grid.rows, grid.cols, variance.iter().cloned().fold(f64::INFINITY, f64::min));
    if let Some(dir) = out {
        create_dir(dir)?;
        let path = dir.join("grid.png");
        save_grid_png(&grid, &path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_gan_train<T: Scalar>(common: &Common, limit: Option<usize>, rows: usize) -> Result<()> {
    let (family, s) = gan_settings(common)?;
    let seed = s.seed();
    let mut bundle = family.bundle::<T>(seed, s.common.eta.unwrap_or(0.975))?;
    if let Some(sv) = s.common.sigma_v0 {
        bundle.obs_p = ObservationModel::new(sv, bundle.obs_p.eta)?;
        bundle.obs_q = ObservationModel::new(sv, bundle.obs_q.eta)?;
    }
    let epochs = s.common.epochs.unwrap_or(1);
    let batch = s.common.batch.unwrap_or(16);
    let root = &s.common.dataset_root;
    let start = Instant::now();
    let mut progress = |p: GanProgress| match p {
        GanProgress::Iteration { epoch, done, total } => {
            eprintln!("epoch {epoch}: {done}/{total} iterations, {:.0} s", start.elapsed().as_secs_f64())
        }
        GanProgress::Epoch(log) => println!("{}", log.tsv()),
    };
    println!("{GAN_LOG_HEADER}");
    let (history, denorm) = match family {
        Family::Toy => {
            let data = toy_dataset::<T>(4096, seed);
            let h = train_gan(&mut bundle, data.len(), &|i| data[i].clone(), epochs, batch, seed, limit, &mut progress)?;
            (h, Denormalize::identity())
        }
        Family::Mnist | Family::Celeba => {
            let (data, mode) = if family == Family::Mnist {
                (load_mnist(&dataset_dir(root, "mnist"))?.0, Preprocessing::UnitRangeMeanSubtract)
            } else {
                (load_image_dir(&dataset_dir(root, "celeba32"), None)?, Preprocessing::Standardize)
            };
            let norm = Normalizer::fit(mode, &data);
            let fetch = |i: usize| -> GaussianVector<T> { norm.input(&data, i) };
            let h = train_gan(&mut bundle, data.len(), &fetch, epochs, batch, seed, limit, &mut progress)?;
            (h, norm.denormalize())
        }
    };
    let out = s.common.out.as_deref();
    if let Some(dir) = out {
        save_bundle(&bundle, &denorm, dir)?;
        let mut log = format!("{GAN_LOG_HEADER}\n");
        for h in &history {
            log.push_str(&h.tsv());
            log.push('\n');
        }
        let path = dir.join("gan-log.tsv");
        std::fs::write(&path, log).map_err(|e| HarnessError::io(&path, e))?;
    }
    eprintln!("{} trained in {:.0} s", family.name(), start.elapsed().as_secs_f64());
    emit_samples(family, &bundle, &denorm, rows, seed, out)
}

fn cmd_generate<T: Scalar>(common: &Common, checkpoint: &Path, rows: usize) -> Result<()> {
    let (family, s) = gan_settings(common)?;
    let (bundle, denorm) = load_bundle::<T>(family, checkpoint)?;
    emit_samples(family, &bundle, &denorm, rows, s.seed(), s.common.out.as_deref())
}

fn cmd_verify(cfg: OracleConfig) -> Result<()> {
    println!("op\tcases\tcomparisons\tworst_se\trechecked\tseconds\tstatus");
    let reports = run_moment_oracles(&cfg, &mut |r| {
        println!(
            "{}\t{}\t{}\t{:.2}\t{}\t{:.1}\t{}",
            r.op,
            r.cases,
            r.comparisons,
            r.worst,
            r.rechecked,
            r.seconds,
            if r.passed() { "pass" } else { "FAIL" }
        );
        for f in r.failures.iter().take(5) {
            eprintln!("  {f}");
        }
    });
    let mut failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.op).collect();
    let cc = run_cross_covariance(cfg.seed);
    println!(
        "cross_covariance\t{}\t{}\t{:.2}\t{}\t{:.1}\t{}",
        cc.layers,
        cc.compared + cc.zero_pairs,
        cc.worst,
        cc.rechecked,
        cc.seconds,
        if cc.passed() { "pass" } else { "FAIL" }
    );
    let start = Instant::now();
    let joint = run_joint_conditioning(200, cfg.seed)?;
    println!(
        "joint_conditioning\t{}\t{}\t{:.1e}\t-\t{:.1}\t{}",
        joint.cases,
        joint.compared,
        joint.worst,
        start.elapsed().as_secs_f64(),
        if joint.passed() { "pass" } else { "FAIL" }
    );
    for f in cc.failures.iter().chain(&joint.failures).take(5) {
        eprintln!("  {f}");
    }
    if !cc.passed() {
        failed.push("cross_covariance");
    }
    if !joint.passed() {
        failed.push("joint_conditioning");
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Check(format!("closed forms disagree with their oracles: {}", failed.join(", "))))
    }
}

fn cmd_bench(widths: &[usize], batches: usize, repeats: usize, seed: u64) -> Result<()> {
    let r = bench_scaling(widths, batches, repeats, seed)?;
    println!("width\tparameters\tseconds");
    for p in &r.points {
        println!("{}\t{}\t{:.6}", p.width, p.parameters, p.seconds);
    }
    println!("fit\tintercept {:.6e}\tslope {:.6e}\tr_squared {:.6}", r.intercept, r.slope, r.r_squared);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) if c.double => cmd_train::<f64>(&c),
        Command::Train(c) => cmd_train::<f32>(&c),
        Command::Eval { common, checkpoint } if common.double => cmd_eval::<f64>(&common, &checkpoint),
        Command::Eval { common, checkpoint } => cmd_eval::<f32>(&common, &checkpoint),
        Command::GanTrain { common, limit, rows } if common.double => cmd_gan_train::<f64>(&common, limit, rows),
        Command::GanTrain { common, limit, rows } => cmd_gan_train::<f32>(&common, limit, rows),
        Command::Generate { common, checkpoint, rows } if common.double => cmd_generate::<f64>(&common, &checkpoint, rows),
        Command::Generate { common, checkpoint, rows } => cmd_generate::<f32>(&common, &checkpoint, rows),
        Command::VerifyMoments { samples, cases, threshold, seed } => cmd_verify(OracleConfig { samples, cases, threshold, seed }),
        Command::BenchScaling { widths, batches, repeats, seed } => cmd_bench(&widths, batches, repeats, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
