//! Command-line front end. Every command is a thin wrapper over library
//! calls; [`execute`] returns the process exit code.

use crate::analytics::{StylizedFactsReport, DEFAULT_MAX_LAG};
use crate::archive;
use crate::dsl;
use crate::kernel::{self, RunError, RunResult, ScenarioConfig};
use crate::market::reference::{cross_check, random_ops};
use crate::service::{self, Service};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_AVATAR: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "avatar-market",
    version,
    about = "Avatar-based market experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write tape.csv, snapshots.csv, config.json and report.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// `csv` also writes one CSV per report panel.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        quiet: bool,
        /// Number of consecutive seeds to run, each into `OUT/seed-N`.
        #[arg(long, default_value_t = 1)]
        sweep: u64,
        /// Parallel runs in sweep mode.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
        max_lag: usize,
    },
    /// Validate an avatar script and print its canonical form.
    Check { avatar: PathBuf },
    /// Verify an archive and regenerate its report.
    Report {
        archive: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value = "sessions")]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Compare the matching engine with the reference matcher on random streams.
    Oracle {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 10_000)]
        orders: usize,
        #[arg(long, default_value_t = 8)]
        agents: u32,
    },
}

fn run_exit_code(e: &RunError) -> i32 {
    match e {
        RunError::Config(_) => EXIT_CONFIG,
        RunError::Avatar { .. } => EXIT_AVATAR,
        RunError::Engine(_) => EXIT_ENGINE,
    }
}

fn print_leaderboard(out: &mut impl Write, result: &RunResult, report: &StylizedFactsReport) {
    let _ = writeln!(
        out,
        "seed {}  transactions {}  end time {}",
        result.seed(),
        result.tape.len(),
        result.stats.end_time
    );
    let _ = writeln!(
        out,
        "{:>4}  {:<20} {:<24} {:>6} {:>18}",
        "rank", "family", "strategy", "agents", "avg wealth"
    );
    for e in &report.leaderboard {
        let _ = writeln!(
            out,
            "{:>4}  {:<20} {:<24} {:>6} {:>18.2}",
            e.rank, e.name, e.strategy, e.n_agents, e.average_wealth
        );
    }
}

fn run_one(cfg: &ScenarioConfig, out: &Path, format: Format, max_lag: usize, quiet: bool) -> i32 {
    let result = match kernel::run(cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return run_exit_code(&e);
        }
    };
    let report = match archive::write_archive(out, &result, max_lag) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: writing archive: {e}");
            return EXIT_ENGINE;
        }
    };
    if format == Format::Csv {
        if let Err(e) = report.write_csvs(out) {
            eprintln!("error: writing panel csv files: {e}");
            return EXIT_ENGINE;
        }
    }
    if !quiet {
        print_leaderboard(&mut std::io::stdout().lock(), &result, &report);
    }
    0
}

fn cmd_run(
    scenario: &Path,
    seed: Option<u64>,
    out: &Path,
    format: Format,
    quiet: bool,
    sweep: u64,
    jobs: usize,
    max_lag: usize,
) -> i32 {
    let mut cfg = match ScenarioConfig::load(scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if sweep <= 1 {
        return run_one(&cfg, out, format, max_lag, quiet);
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ENGINE;
        }
    };
    let first = cfg.master_seed;
    let codes: Vec<i32> = pool.install(|| {
        (first..first + sweep)
            .into_par_iter()
            .map(|s| {
                let mut c = cfg.clone();
                c.master_seed = s;
                run_one(&c, &out.join(format!("seed-{s}")), format, max_lag, quiet)
            })
            .collect()
    });
    codes.into_iter().find(|&c| c != 0).unwrap_or(0)
}

fn cmd_check(path: &Path) -> i32 {
    let src = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return 1;
        }
    };
    match dsl::parse(&src) {
        Ok(p) => {
            print!("{}", dsl::print(&p.spec));
            0
        }
        Err(e) => {
            eprintln!("{}:{e}", path.display());
            1
        }
    }
}

fn cmd_report(dir: &Path, format: Format) -> i32 {
    let report = match archive::regenerate(dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let path = dir.join(archive::REPORT_FILE);
    if let Err(e) = std::fs::write(&path, report.to_json()) {
        eprintln!("error: {}: {e}", path.display());
        return 1;
    }
    if format == Format::Csv {
        if let Err(e) = report.write_csvs(dir) {
            eprintln!("error: {e}");
            return 1;
        }
    }
    println!("report regenerated: {}", path.display());
    0
}

fn cmd_serve(root: &Path, addr: SocketAddr) -> i32 {
    let svc = match Service::open(root) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match rt.block_on(service::serve(svc, addr)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_oracle(seeds: u64, orders: usize, agents: u32) -> i32 {
    let endowments = vec![(1_000_000, 1_000); agents.max(1) as usize];
    let failures: Vec<String> = (0..seeds)
        .into_par_iter()
        .filter_map(|s| {
            cross_check(&random_ops(s, orders, agents.max(1)), &endowments)
                .err()
                .map(|m| format!("seed {s}: {m}"))
        })
        .collect();
    for f in &failures {
        eprintln!("mismatch: {f}");
    }
    println!("{} of {seeds} streams agree", seeds - failures.len() as u64);
    if failures.is_empty() {
        0
    } else {
        1
    }
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            format,
            quiet,
            sweep,
            jobs,
            max_lag,
        } => cmd_run(&scenario, seed, &out, format, quiet, sweep, jobs, max_lag),
        Command::Check { avatar } => cmd_check(&avatar),
        Command::Report { archive, format } => cmd_report(&archive, format),
        Command::Serve { root, addr } => cmd_serve(&root, addr),
        Command::Oracle {
            seeds,
            orders,
            agents,
        } => cmd_oracle(seeds, orders, agents),
    }
}
