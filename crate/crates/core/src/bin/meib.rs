use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meib::harness::{
    emit_results, resolve_betas, run_eval, run_experiment, run_gen_data, run_train, summarize,
    ExperimentConfig, ExperimentKind,
};
use meib::MeibError;

#[derive(Parser)]
#[command(name = "meib", version, about = "Multi-view matrix-entropy bottleneck experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test error against the noise factor.
    NoiseSweep(Common),
    /// Test error against the number of redundant features, plus weight norms.
    DimSweep(Common),
    /// Test error against samples per class.
    SampleSweep(Common),
    /// Test error over a grid of per-view betas.
    BetaGrid(Common),
    /// Train one model and save a checkpoint.
    Train(Common),
    /// Score a saved checkpoint.
    Eval(Common),
    /// Write a synthetic dataset as CSV files.
    GenData(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed base; overrides `seed_base`.
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per sweep cell; overrides `repeats`.
    #[arg(long)]
    repeats: Option<usize>,
    /// Worker threads; overrides `threads`.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(common: &Common, expected: ExperimentKind, strict: bool) -> Result<ExperimentConfig, MeibError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    match cfg.kind {
        Some(k) if k != expected && strict => {
            return Err(MeibError::Config(format!(
                "config declares kind {} but the subcommand runs {}",
                k.as_str(),
                expected.as_str()
            )));
        }
        Some(k) if k != expected => {}
        _ => cfg.kind = Some(expected),
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed_base = seed;
    }
    if let Some(r) = common.repeats {
        cfg.repeats = r;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn sweep(common: &Common, kind: ExperimentKind) -> Result<(), MeibError> {
    let mut cfg = load(common, kind, true)?;
    cfg.validate()?;
    resolve_betas(&mut cfg)?;
    let result = run_experiment(&cfg)?;
    for f in &result.failures {
        eprintln!("warning: run failed: {f}");
    }
    let files = emit_results(&result, &cfg, &cfg.output_dir)?;
    for s in summarize(&result.rows) {
        let v2 = s.value2.map(|v| format!(",{v}")).unwrap_or_default();
        println!(
            "{} value={}{v2} n={} error={:.4}±{:.4}",
            s.method.as_str(),
            s.value1,
            s.n,
            s.error_mean,
            s.error_std
        );
    }
    println!("wrote {} files to {}", files.len(), cfg.output_dir.display());
    if !result.rows.is_empty() && result.rows.iter().all(|r| r.test_error.is_none()) {
        return Err(MeibError::NonFinite("every run in the sweep failed".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), MeibError> {
    match cli.command {
        Command::NoiseSweep(c) => sweep(&c, ExperimentKind::NoiseSweep),
        Command::DimSweep(c) => sweep(&c, ExperimentKind::DimSweep),
        Command::SampleSweep(c) => sweep(&c, ExperimentKind::SampleSweep),
        Command::BetaGrid(c) => sweep(&c, ExperimentKind::BetaGrid),
        Command::Train(c) => {
            let cfg = load(&c, ExperimentKind::SingleTrain, true)?;
            cfg.validate()?;
            let out = run_train(&cfg, &cfg.output_dir)?;
            println!(
                "test_error={} epochs={} checkpoint={}",
                out.test_error,
                out.history.epochs.len(),
                out.checkpoint.display()
            );
            Ok(())
        }
        Command::Eval(c) => {
            let cfg = load(&c, ExperimentKind::SingleTrain, true)?;
            cfg.validate()?;
            let out = run_eval(&cfg, &cfg.output_dir)?;
            println!("train_error={} test_error={}", out.train_error, out.test_error);
            Ok(())
        }
        Command::GenData(c) => {
            let cfg = load(&c, ExperimentKind::SingleTrain, false)?;
            let files = run_gen_data(&cfg, &cfg.output_dir)?;
            println!("wrote {} files to {}", files.len(), cfg.output_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
