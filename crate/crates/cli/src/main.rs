use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use srheat_cli::checks::CheckName;
use srheat_cli::commands::{self, ModelSource};
use srheat_cli::output;
use srheat_cli::{exit, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "srheat", version, about = "Small-time heat kernel asymptotics for polynomial sub-Laplacians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model JSON file.
    #[arg(long, conflicts_with = "corpus")]
    model: Option<PathBuf>,
    /// Built-in model name (see `srheat corpus`).
    #[arg(long)]
    corpus: Option<String>,
    /// Run configuration JSON; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies every error-multiple and +- tolerance.
    #[arg(long)]
    tolerance_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Growth vector, weights, step and homogeneous dimension at the base point.
    Flag(Common),
    /// Nilpotent approximation at the base point.
    Nilpotentize(Common),
    /// Heat kernel estimates at the configured times.
    Simulate(Common),
    /// Run verification checks and write reports.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of: limit, expansion, kac, weyl, damping,
        /// coercivity, duhamel, homogeneity.
        #[arg(long, value_delimiter = ',')]
        check: Vec<String>,
    },
    /// List the built-in models.
    Corpus,
}

fn setup(c: &Common) -> CliResult<(srheat_cli::ModelSpec, RunConfig)> {
    let src = match (&c.model, &c.corpus) {
        (Some(p), None) => ModelSource::Path(p.clone()),
        (None, Some(n)) => ModelSource::Corpus(n.clone()),
        _ => return Err(CliError::Usage("give exactly one of --model and --corpus".into())),
    };
    let spec = commands::load_model(&src)?;
    let mut cfg = commands::load_config(c.config.as_deref())?;
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    if let Some(s) = c.tolerance_scale {
        cfg.tolerance_scale = s;
    }
    cfg.validate()?;
    Ok((spec, cfg))
}

fn thread_count(cfg: &RunConfig) -> CliResult<usize> {
    match std::env::var("SRHEAT_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("SRHEAT_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(cfg.threads.unwrap_or(0)),
    }
}

fn init_threads(cfg: &RunConfig) -> CliResult<usize> {
    let n = thread_count(cfg)?;
    // 0 lets rayon pick; a second initialization cannot happen in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Corpus => {
            print!("{}", commands::cmd_corpus_list()?);
            Ok(exit::PASS)
        }
        Command::Flag(c) => {
            let (spec, _) = setup(&c)?;
            println!("{}", commands::cmd_flag(&spec)?);
            Ok(exit::PASS)
        }
        Command::Nilpotentize(c) => {
            let (spec, _) = setup(&c)?;
            let v = commands::cmd_nilpotentize(&spec)?;
            let text = output::to_json(&v);
            match &c.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join("nilpotent.json"), &text)?;
                }
                None => print!("{text}"),
            }
            let ok = v["checks"].as_object().is_some_and(|m| m.values().all(|b| b == true));
            Ok(if ok { exit::PASS } else { exit::CHECK_FAILED })
        }
        Command::Simulate(c) => {
            let (spec, cfg) = setup(&c)?;
            let threads = init_threads(&cfg)?;
            let started = output::unix_seconds();
            let (report, table) = commands::cmd_simulate(&spec, &cfg)?;
            match &cfg.out {
                Some(dir) => commands::write_simulate(dir, &spec, &cfg, &report, &table, threads, started)?,
                None => print!("{}", output::table_csv(&table)),
            }
            Ok(exit::PASS)
        }
        Command::Verify { common, check } => {
            let (spec, cfg) = setup(&common)?;
            let threads = init_threads(&cfg)?;
            let checks: Vec<CheckName> = if check.is_empty() {
                CheckName::ALL.to_vec()
            } else {
                check.iter().map(|s| s.trim().parse()).collect::<CliResult<_>>()?
            };
            let run = commands::cmd_verify(&spec, &cfg, &checks, cfg.out.as_deref(), threads)?;
            for o in &run.outcomes {
                println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.summary);
            }
            for (n, m, _) in &run.errors {
                println!("ERROR {n}: {m}");
            }
            Ok(run.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("srheat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
