use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swac_demod::harness::artifact::{load_dataset, load_model, save_dataset, save_model, stored_scalar_width};
use swac_demod::harness::experiments::{
    export_feature_scatter, run_accuracy_vs_trainsize, run_ber_sweep, run_doppler_sweep, Methods, CHANNEL_FIXED,
    CHANNEL_VARIED,
};
use swac_demod::harness::metrics::{write_accuracy_csv, write_curves_csv, BerCurve, Method};
use swac_demod::harness::pipeline::{ber_points, mle_decisions, train_demodulators, ClassifierKind};
use swac_demod::harness::selftest::run_selftest;
use swac_demod::harness::{generate_dataset, CarrierDistribution, DatasetSplit, ExperimentConfig, ModelArtifact, Precision, TrainingPolicy};
use swac_demod::{Error, PskScheme, Result, Scalar};

#[derive(Parser)]
#[command(name = "swacdm", version, about = "Doppler-robust PSK demodulation experiments")]
struct Cli {
    /// TOML experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Data set size in symbol periods.
    #[arg(long)]
    periods: Option<usize>,
    /// Comma-separated modulation orders, e.g. 2,4,8.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<usize>>,
    /// Comma-separated Eb/N0 grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ebn0: Option<Vec<f64>>,
    #[arg(long)]
    dbn_epochs: Option<usize>,
    #[arg(long)]
    nn_epochs: Option<usize>,
    #[arg(long)]
    cnn_epochs: Option<usize>,
    /// Comma-separated training-set sizes for acc-curve.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<usize>>,
    #[arg(long)]
    policy: Option<PolicyArg>,
    #[arg(long)]
    precision: Option<PrecisionArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Mixture,
    PerLevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum CarrierArg {
    Fixed,
    Varied,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Nn,
    Cnn,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a data set file for one scheme.
    Gen {
        #[arg(long)]
        scheme: usize,
        #[arg(long, value_enum, default_value = "fixed")]
        carrier: CarrierArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Train a demodulator on a data set file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        classifier: KindArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// BER of a trained model on the test split of a data set file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the correlator curve on the same frames.
        #[arg(long)]
        mle: bool,
    },
    /// BER against Eb/N0 on a fixed carrier.
    SweepBer {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<KindArg>>,
        #[command(flatten)]
        o: Overrides,
    },
    /// BER against Eb/N0 under a randomized carrier.
    SweepDoppler {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<KindArg>>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Test accuracy against training-set size.
    AccCurve {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<KindArg>>,
        #[command(flatten)]
        o: Overrides,
    },
    /// First three DBN features of every test frame.
    Features {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Built-in consistency checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(n) = o.periods {
        cfg.dataset_size_periods = n;
    }
    if let Some(list) = &o.schemes {
        cfg.schemes = list.iter().map(|&m| PskScheme::new(m)).collect::<Result<_>>()?;
    }
    if let Some(grid) = &o.ebn0 {
        cfg.ebn0_db = grid.clone();
    }
    if let Some(e) = o.dbn_epochs {
        cfg.dbn.epochs = e;
    }
    if let Some(e) = o.nn_epochs {
        cfg.dense.epochs = e;
    }
    if let Some(e) = o.cnn_epochs {
        cfg.conv.epochs = e;
    }
    if let Some(l) = &o.ladder {
        cfg.train_size_ladder = l.clone();
    }
    if let Some(p) = o.policy {
        cfg.training_policy = match p {
            PolicyArg::Mixture => TrainingPolicy::Mixture,
            PolicyArg::PerLevel => TrainingPolicy::PerLevel,
        };
    }
    if let Some(p) = o.precision {
        cfg.precision = match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    cfg.validate()
}

fn experiment_config(path: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig> {
    if o.seed.is_none() {
        return Err(Error::Config("--seed is required for experiment subcommands".into()));
    }
    let mut cfg = load_config(path)?;
    apply(&mut cfg, o)?;
    Ok(cfg)
}

fn methods(list: &Option<Vec<KindArg>>) -> Methods {
    match list {
        None => Methods::default(),
        Some(l) => Methods {
            nn: l.iter().any(|k| matches!(k, KindArg::Nn)),
            cnn: l.iter().any(|k| matches!(k, KindArg::Cnn)),
        },
    }
}

fn print_curves(curves: &[BerCurve]) {
    for c in curves {
        let pts: Vec<String> = c.points.iter().map(|p| format!("{}:{:.3e}", p.ebn0_db, p.ber)).collect();
        println!("{} {}-PSK {} [{}]", c.method, c.scheme.order(), c.channel, pts.join(" "));
    }
}

/// Calls `$f::<f32>` or `$f::<f64>` by the scalar width `$w` in bytes.
macro_rules! by_width {
    ($w:expr, $f:ident ( $($arg:expr),* )) => {
        match $w {
            4 => $f::<f32>($($arg),*),
            8 => $f::<f64>($($arg),*),
            other => Err(Error::Malformed(format!("unsupported scalar width {other}"))),
        }
    };
}

fn precision_width(p: Precision) -> u8 {
    match p {
        Precision::F32 => 4,
        Precision::F64 => 8,
    }
}

fn gen<T: Scalar>(cfg: &ExperimentConfig, scheme: PskScheme, carrier: CarrierDistribution, out: &Path) -> Result<()> {
    let d: DatasetSplit<T> = generate_dataset(cfg, scheme, carrier)?;
    save_dataset(&d, out)?;
    println!(
        "{scheme}: {} train / {} val / {} test frames -> {}",
        d.train.len(),
        d.val.len(),
        d.test.len(),
        out.display()
    );
    Ok(())
}

fn train<T: Scalar>(cfg: &ExperimentConfig, data: &Path, kind: ClassifierKind, out: &Path) -> Result<()> {
    let d: DatasetSplit<T> = load_dataset(data)?;
    let (demod, meta) = train_demodulators(cfg, &d, &d.train, &[kind])?
        .pop()
        .expect("one classifier requested");
    println!(
        "{} on {}: reconstruction error {:.5}, best validation loss {:.5} at epoch {}",
        demod.method(),
        d.scheme,
        meta.dbn_reconstruction_error,
        meta.history.best_val_loss,
        meta.history.best_epoch
    );
    save_model(&ModelArtifact::new(demod, meta), out)
}

fn channel_of<T>(d: &DatasetSplit<T>) -> &'static str {
    if d.test.carrier_hz.iter().all(|&f| f == d.mod_cfg.carrier_hz) {
        CHANNEL_FIXED
    } else {
        CHANNEL_VARIED
    }
}

fn eval<T: Scalar>(model: &Path, data: &Path, out: &Path, with_mle: bool) -> Result<()> {
    let a: ModelArtifact<T> = load_model(model)?;
    let d: DatasetSplit<T> = load_dataset(data)?;
    if d.scheme != a.demodulator.scheme {
        return Err(Error::Config(format!(
            "model demodulates {} but the data set holds {}",
            a.demodulator.scheme, d.scheme
        )));
    }
    let channel = channel_of(&d);
    let decided = a.demodulator.demodulate(d.test.batch.frames.view())?;
    let mut curves = vec![BerCurve::new(
        "eval",
        a.demodulator.method(),
        d.scheme,
        channel,
        ber_points(&d.test, &decided, d.scheme, &d.mod_cfg)?,
    )];
    if with_mle {
        let dec = mle_decisions(&d.test, d.scheme, &d.mod_cfg)?;
        let pts = ber_points(&d.test, &dec, d.scheme, &d.mod_cfg)?;
        curves.push(BerCurve::new("eval", Method::Mle, d.scheme, channel, pts));
    }
    print_curves(&curves);
    write_curves_csv(out, &curves)
}

fn features<T: Scalar>(model: &Path, data: &Path, out: &Path) -> Result<()> {
    let a: ModelArtifact<T> = load_model(model)?;
    let mut d: DatasetSplit<T> = load_dataset(data)?;
    d.norm = a.demodulator.norm;
    let rows = export_feature_scatter(&a.demodulator.dbn, &d, out)?;
    println!("{rows} rows -> {}", out.display());
    Ok(())
}

fn sweep<T: Scalar>(cfg: &ExperimentConfig, m: Methods, doppler: bool, out: &Path) -> Result<()> {
    let curves = if doppler {
        run_doppler_sweep::<T>(cfg, m)?
    } else {
        run_ber_sweep::<T>(cfg, m)?
    };
    print_curves(&curves);
    write_curves_csv(out, &curves)
}

fn acc_curve<T: Scalar>(cfg: &ExperimentConfig, m: Methods, out: &Path) -> Result<()> {
    let rows = run_accuracy_vs_trainsize::<T>(cfg, m)?;
    for r in &rows {
        println!("{} {}-PSK {:>6} frames: {:.4}", r.method, r.scheme.order(), r.train_periods, r.accuracy);
    }
    write_accuracy_csv(out, &rows)
}

fn run(cli: Cli) -> Result<bool> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Gen { scheme, carrier, out, o } => {
            let mut cfg = load_config(config)?;
            apply(&mut cfg, &o)?;
            let dist = match carrier {
                CarrierArg::Fixed => CarrierDistribution::Fixed,
                CarrierArg::Varied => cfg.doppler_carrier,
            };
            let scheme = PskScheme::new(scheme)?;
            by_width!(precision_width(cfg.precision), gen(&cfg, scheme, dist, &out))?;
        }
        Command::Train { data, classifier, out, o } => {
            let mut cfg = load_config(config)?;
            apply(&mut cfg, &o)?;
            let kind = match classifier {
                KindArg::Nn => ClassifierKind::Nn,
                KindArg::Cnn => ClassifierKind::Cnn,
            };
            by_width!(stored_scalar_width(&data)?, train(&cfg, &data, kind, &out))?;
        }
        Command::Eval { model, data, out, mle } => {
            by_width!(stored_scalar_width(&model)?, eval(&model, &data, &out, mle))?;
        }
        Command::SweepBer { out, methods: m, o } => {
            let cfg = experiment_config(config, &o)?;
            by_width!(precision_width(cfg.precision), sweep(&cfg, methods(&m), false, &out))?;
        }
        Command::SweepDoppler { out, methods: m, o } => {
            let cfg = experiment_config(config, &o)?;
            by_width!(precision_width(cfg.precision), sweep(&cfg, methods(&m), true, &out))?;
        }
        Command::AccCurve { out, methods: m, o } => {
            let cfg = experiment_config(config, &o)?;
            by_width!(precision_width(cfg.precision), acc_curve(&cfg, methods(&m), &out))?;
        }
        Command::Features { model, data, out } => {
            by_width!(stored_scalar_width(&model)?, features(&model, &data, &out))?;
        }
        Command::Selftest { seed } => {
            let checks = run_selftest(seed)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
