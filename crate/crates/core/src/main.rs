use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use tamed_spde::config::{ConfigDocument, Kind, DEFAULT_DATA_MODES};
use tamed_spde::harness::{
    equilibration_study, moment_study, smoothing_study, spectrum_check, strong_rate_study, taming_check,
    weak_rate_study, InitialCondition, StudyConfig,
};
use tamed_spde::output::{self, CsvTable, Summary};
use tamed_spde::{Result, SpdeError};

#[derive(Parser)]
#[command(name = "tamed-spde", version, about = "Tamed finite element scheme for 1D SPDEs: rate and long-time studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strong error against a fine reference on shared noise paths.
    StrongRate(Common),
    /// Weak error of the configured observable.
    WeakRate(Common),
    /// Deterministic propagator error on rough data.
    Smoothing(Common),
    /// Long-horizon moment series.
    Longtime(Common),
    /// Observable means from several initial states.
    Equilibrate(Common),
    /// Taming inequalities on a grid of u values.
    TamingCheck(Common),
    /// Bounds on the discrete Laplacian spectrum.
    SpectrumCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the document's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the document's sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Command {
    fn parts(&self) -> (Kind, &Common) {
        match self {
            Command::StrongRate(c) => (Kind::StrongRate, c),
            Command::WeakRate(c) => (Kind::WeakRate, c),
            Command::Smoothing(c) => (Kind::Smoothing, c),
            Command::Longtime(c) => (Kind::Longtime, c),
            Command::Equilibrate(c) => (Kind::Equilibrate, c),
            Command::TamingCheck(c) => (Kind::TamingCheck, c),
            Command::SpectrumCheck(c) => (Kind::SpectrumCheck, c),
        }
    }
}

fn study_config(doc: &ConfigDocument, args: &Common) -> Result<StudyConfig> {
    let mut cfg = doc.study_config()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = args.samples {
        if samples == 0 {
            return Err(SpdeError::config("--samples", "need at least one sample"));
        }
        cfg.samples = samples;
    }
    cfg.workers = args.workers.unwrap_or(0);
    Ok(cfg)
}

fn execute(kind: Kind, args: &Common) -> Result<(CsvTable, Summary)> {
    let doc = ConfigDocument::load(&args.config)?;
    if doc.study.kind != kind {
        return Err(SpdeError::config(
            "study.kind",
            format!("document is a {} study, not {}", doc.study.kind.name(), kind.name()),
        ));
    }
    let cfg = study_config(&doc, args)?;
    let observable = cfg.observable;
    let phi = move |ops: &_, x: &[f64]| observable.eval(ops, x);
    match kind {
        Kind::StrongRate => {
            let r = strong_rate_study(&cfg)?;
            Ok((output::rate_table(&r)?, output::rate_summary(&r)))
        }
        Kind::WeakRate => {
            let r = weak_rate_study(&cfg, &phi)?;
            Ok((output::rate_table(&r)?, output::rate_summary(&r)))
        }
        Kind::Equilibrate => {
            let ics = doc.study.initial_conditions.clone().unwrap_or_else(|| vec![InitialCondition::Zero]);
            let r = equilibration_study(&cfg, &ics, &phi)?;
            Ok((output::equilibration_table(&r)?, output::equilibration_summary(&r)))
        }
        Kind::Longtime => {
            let r = moment_study(&cfg, doc.study.horizon_multiplier.unwrap_or(1.0))?;
            Ok((output::moment_table(&r)?, output::moment_summary(&r)))
        }
        Kind::Smoothing => {
            let r = smoothing_study(
                doc.problem.length,
                &cfg.grid,
                cfg.horizon,
                doc.p(),
                doc.study.data_modes.unwrap_or(DEFAULT_DATA_MODES),
                cfg.seed,
                doc.study.decay_time,
                doc.study.window,
            )?;
            Ok((output::smoothing_table(&r)?, output::smoothing_summary(&r)))
        }
        Kind::TamingCheck => {
            let steps: Vec<(f64, f64)> = cfg
                .grid
                .iter()
                .map(|r| (r.tau(cfg.horizon), doc.problem.length / (1u64 << r.level) as f64))
                .collect();
            let c = taming_check(
                &cfg.problem.drift,
                &cfg.problem.taming,
                &steps,
                doc.study.u_max.unwrap_or(100.0),
                doc.study.u_step.unwrap_or(0.01),
            )?;
            Ok((output::taming_table(&c)?, output::taming_summary(&c)))
        }
        Kind::SpectrumCheck => {
            let levels: Vec<u32> = cfg.grid.iter().map(|r| r.level).collect();
            let c = spectrum_check(doc.problem.length, &levels, doc.study.slack.unwrap_or(1e-9))?;
            Ok((output::spectrum_table(&c, doc.problem.length)?, output::spectrum_summary(&c)))
        }
    }
}

fn write_outputs(out: &Path, kind: Kind, table: &CsvTable, summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(out)?;
    table.write(&out.join(format!("{}.csv", kind.file_stem())))?;
    output::write_summary(summary, &out.join("summary.json"))
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).init();
    let cli = Cli::parse();
    let (kind, args) = cli.command.parts();
    let result = execute(kind, args).and_then(|(table, summary)| {
        write_outputs(&args.out, kind, &table, &summary)?;
        Ok(summary)
    });
    match result {
        Ok(summary) => {
            info!(
                "{} done: pass={:?} fitted_order={:?}",
                kind.name(),
                summary.pass,
                summary.fitted_order
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if e.is_blowup() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
