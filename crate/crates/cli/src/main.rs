use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lce_core::config::parse_config;
use lce_core::experiments::{audit_state, run};
use lce_core::{io, selftest, CnVerdict, Error};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_AUDIT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "lce-min",
    version,
    about = "Liquid-crystal-elastomer energy minimization and injectivity audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for assembly and rasterization.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Audit a field snapshot: Ciarlet-Necas check, multiplicity and volume consistency.
    Check {
        snapshot: PathBuf,
        /// Half-thickness of single-layer snapshots.
        #[arg(long, default_value_t = io::DEFAULT_HALF_THICKNESS)]
        thickness: f64,
        /// Voxels per axis (default: 4x the node count).
        #[arg(long)]
        resolution: Option<usize>,
        /// Sample points per axis for the multiplicity histogram.
        #[arg(long, default_value_t = 24)]
        samples: usize,
        /// Write `cn_report.txt` and `multiplicity.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        e if e.is_infeasible() => EXIT_INFEASIBLE,
        _ => EXIT_OTHER,
    }
}

fn fail(e: Error, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn set_threads(n: Option<usize>) -> Result<(), ExitCode> {
    if let Some(n) = n {
        if n == 0 {
            return Err(fail(
                Error::Config {
                    key: "--threads".into(),
                    message: "must be positive".into(),
                },
                EXIT_CONFIG,
            ));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return Err(ExitCode::from(EXIT_OTHER));
        }
    }
    Ok(())
}

fn cmd_run(
    config: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> ExitCode {
    let mut cfg = match parse_config(&config) {
        Ok(c) => c,
        Err(e @ Error::Io(_)) => return fail(e, EXIT_CONFIG),
        Err(e) => {
            let code = exit_code(&e);
            return fail(e, code);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.minimize.seed = s;
    }
    if let Err(code) = set_threads(threads) {
        return code;
    }
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    match run(&cfg, &out) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_AUDIT)
            }
        }
        Err(e) => {
            let code = exit_code(&e);
            fail(e, code)
        }
    }
}

fn cmd_check(
    snapshot: PathBuf,
    thickness: f64,
    resolution: Option<usize>,
    samples: usize,
    out: Option<PathBuf>,
) -> ExitCode {
    let result = io::read_csv(&snapshot, thickness)
        .and_then(|s| audit_state(&s, resolution.unwrap_or(0), samples));
    let r = match result {
        Ok(r) => r,
        Err(e) => {
            let code = exit_code(&e);
            return fail(e, code);
        }
    };
    print!("{}", r.cn.to_text());
    println!("single_cover_fraction = {}", r.single_cover_fraction);
    println!("volume_discrepancy = {}", r.volume_discrepancy);
    println!("volume_bound = {}", r.volume_bound);
    if let Some(dir) = out {
        let written = std::fs::create_dir_all(&dir)
            .and_then(|_| std::fs::write(dir.join("cn_report.txt"), r.cn.to_text()))
            .and_then(|_| std::fs::write(dir.join("multiplicity.csv"), &r.multiplicity_csv));
        if let Err(e) = written {
            return fail(e.into(), EXIT_OTHER);
        }
    }
    if r.cn.verdict == CnVerdict::Violated {
        ExitCode::from(EXIT_AUDIT)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_selftest() -> ExitCode {
    let checks = selftest::run_all();
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!(
            "{} {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!("{} passed, {} failed", checks.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_OTHER)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => cmd_run(config, out, seed, threads),
        Command::Check {
            snapshot,
            thickness,
            resolution,
            samples,
            out,
        } => cmd_check(snapshot, thickness, resolution, samples, out),
        Command::Selftest => cmd_selftest(),
    }
}
