use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridcaps::config::RunConfig;
use gridcaps::eval::Suite;
use gridcaps::exec::ExecMode;
use gridcaps::grid::CaseName;
use gridcaps::pipeline;
use gridcaps::train::ModelKind;
use gridcaps::Error;

/// Load-altering attack localization on IEEE test grids.
#[derive(Parser, Debug)]
#[command(name = "gridcaps", version, about)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Print generator/load counts and the attack-free eigenvalues.
    Inspect,
    /// Generate and write the train/val/test datasets.
    Gen,
    /// Train a model on the written datasets.
    Train,
    /// Run an evaluation suite and write its CSV report.
    Eval,
    /// Run gradient checks and numerical oracles.
    Selfcheck,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Configuration file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for datasets, checkpoints and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// ieee14, ieee39 or ieee57.
    #[arg(long, global = true)]
    case: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of samples to generate.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Model kind(s): capsnet, mlp, cnn1d, cnn2d. Comma-separated for train/eval.
    #[arg(long, global = true, value_delimiter = ',')]
    kind: Vec<ModelKind>,
    /// clean, noise, missing_outlier or delay.
    #[arg(long, global = true)]
    suite: Option<Suite>,
    /// SNR in dB: degrades val/test on gen, replaces the noise levels on eval.
    #[arg(long, global = true, value_delimiter = ',')]
    snr: Vec<f64>,
    /// Fraction of dropped points (gen), or the range `lo,hi` (eval).
    #[arg(long, global = true, value_delimiter = ',')]
    drop_frac: Vec<f64>,
    /// Fraction of outlier points (gen), or the range `lo,hi` (eval).
    #[arg(long, global = true, value_delimiter = ',')]
    outlier_frac: Vec<f64>,
    /// Window delay in seconds: shifts val/test on gen, replaces the delay grid on eval.
    #[arg(long, global = true, value_delimiter = ',')]
    delay: Vec<f64>,
    /// Maximum training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

fn single(flag: &str, v: &[f64]) -> gridcaps::Result<Option<f64>> {
    match v {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => Err(Error::Config(format!("--{flag} takes one value for gen"))),
    }
}

fn range(flag: &str, v: &[f64]) -> gridcaps::Result<Option<(f64, f64)>> {
    match v {
        [] => Ok(None),
        [x] => Ok(Some((*x, *x))),
        [lo, hi] => Ok(Some((*lo, *hi))),
        _ => Err(Error::Config(format!("--{flag} takes a value or a `lo,hi` range"))),
    }
}

fn resolve(o: &Overrides, command: Option<Command>) -> gridcaps::Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &o.case {
        cfg.case = c.clone();
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(n) = o.n {
        cfg.n_samples = n;
    }
    if let Some(s) = o.suite {
        cfg.suite = s;
    }
    if let Some(e) = o.epochs {
        cfg.training.max_epochs = e;
    }
    if let Some(&k) = o.kind.first() {
        cfg.model = k;
        cfg.eval_models = o.kind.clone();
    }
    if command == Some(Command::Eval) {
        let ev = &mut cfg.evaluation;
        if !o.snr.is_empty() {
            ev.snr_db = o.snr.clone();
        }
        if let Some(r) = range("drop-frac", &o.drop_frac)? {
            ev.drop_frac = r;
        }
        if let Some(r) = range("outlier-frac", &o.outlier_frac)? {
            ev.outlier_frac = r;
        }
        if !o.delay.is_empty() {
            ev.delays_s = o.delay.clone();
        }
    } else {
        let d = &mut cfg.degradation;
        if let Some(v) = single("snr", &o.snr)? {
            d.snr_db = Some(v);
        }
        if let Some(v) = single("drop-frac", &o.drop_frac)? {
            d.drop_frac = Some(v);
        }
        if let Some(v) = single("outlier-frac", &o.outlier_frac)? {
            d.outlier_frac = Some(v);
        }
        if let Some(v) = single("delay", &o.delay)? {
            d.delay_s = Some(v);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> gridcaps::Result<()> {
    let Ok(v) = std::env::var("GRIDCAPS_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("GRIDCAPS_THREADS={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> gridcaps::Result<()> {
    configure_threads()?;
    let cfg = resolve(&cli.overrides, cli.command)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no command given (inspect, gen, train, eval, selfcheck)".into()));
    };
    let out = &cli.overrides.out;
    let mode = ExecMode::Parallel;
    match command {
        Command::Inspect => print!("{}", pipeline::inspect(cfg.case.parse::<CaseName>()?)?),
        Command::Gen => {
            for a in pipeline::gen(&cfg, out, mode)? {
                println!("{}  {}", a.sha256, a.path.display());
            }
        }
        Command::Train => {
            let kinds = if cli.overrides.kind.is_empty() { vec![cfg.model] } else { cli.overrides.kind.clone() };
            for kind in kinds {
                let cfg = RunConfig { model: kind, ..cfg.clone() };
                let (report, arts) = pipeline::train_model(&cfg, out, mode)?;
                println!(
                    "{kind}: best val accuracy {:.4} at epoch {} of {}",
                    report.best_val_acc,
                    report.best_epoch,
                    report.history.len()
                );
                for a in arts {
                    println!("{}  {}", a.sha256, a.path.display());
                }
            }
        }
        Command::Eval => {
            let (rows, art) = pipeline::eval(&cfg, out, mode)?;
            for r in &rows {
                println!("{:<8} {:<20} {:.4}", r.model, r.condition, r.accuracy);
            }
            println!("{}  {}", art.sha256, art.path.display());
        }
        Command::Selfcheck => {
            let checks = pipeline::selfcheck(mode);
            for c in &checks {
                println!("{} {:<20} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(Error::Numeric(format!("{failed} self-check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
