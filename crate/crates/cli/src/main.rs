//! `rovsim`: scenario runs, closed-form analysis tables, Monte Carlo
//! success-rate estimation and rate-limit probe experiments.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rovsim_core::analysis::{
    n_attempts, overwhelming_factor, packet_volume, render_table4, render_table5, table4_csv,
    table5_csv, DEFAULT_WINDOW,
};
use rovsim_core::dns::probe_rate_limit;
use rovsim_core::pp::probe_syn_limit;
use rovsim_core::scenario::ScenarioConfig;
use rovsim_core::{Addr, SimDuration};

#[derive(Parser)]
#[command(name = "rovsim", version, about = "RPKI downgrade attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its summary as JSON.
    Run {
        config: PathBuf,
        /// override the seed in the config file
        #[arg(long)]
        seed: Option<u64>,
        /// event log destination; defaults to ROVSIM_LOG_DIR/<stem>-<seed>.jsonl
        /// when that variable is set, otherwise the log is not written
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Render the closed-form analysis as CSV.
    Analyze {
        /// both reference tables (attempts/factors and packet volumes)
        #[arg(long, conflicts_with = "params")]
        tables: bool,
        /// ad-hoc parameters as key=value: t_attack, t_sleep, n_retries,
        /// n (attempts directly), p, r_limit; durations accept h/m/s
        #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// Estimate attack success probability over independent seeded trials.
    Montecarlo {
        config: PathBuf,
        #[arg(long)]
        trials: u64,
        /// fan trials out across the available cores
        #[arg(long)]
        parallel: bool,
        /// trial i runs with seed seed_base + i (default: the config seed)
        #[arg(long)]
        seed_base: Option<u64>,
    },
    /// Measure a node's rate limit by sweeping request rates.
    Probe {
        config: PathBuf,
        /// nameserver or publication-point label from the config
        #[arg(long)]
        target: String,
        #[arg(long)]
        kind: ProbeKind,
        /// comma-separated probe rates (requests/s)
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeKind {
    Dns,
    Syn,
}

enum CliError {
    Config(String),
    Runtime(String),
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, log } => cmd_run(&config, seed, log),
        Command::Analyze { tables, params } => cmd_analyze(tables, &params),
        Command::Montecarlo {
            config,
            trials,
            parallel,
            seed_base,
        } => cmd_montecarlo(&config, trials, parallel, seed_base),
        Command::Probe {
            config,
            target,
            kind,
            rates,
        } => cmd_probe(&config, &target, kind, &rates),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut config =
        ScenarioConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn cmd_run(path: &Path, seed: Option<u64>, log: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(path, seed)?;
    let (mut world, duration) = config.build().map_err(config_err)?;
    let summary = world.run(duration);
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    let log_path = log.or_else(|| {
        std::env::var_os("ROVSIM_LOG_DIR").map(|dir| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            Path::new(&dir).join(format!("{stem}-{}.jsonl", config.seed))
        })
    });
    if let Some(p) = log_path {
        std::fs::write(&p, world.log.to_jsonl())
            .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

/// "6h", "10m", "900s" or plain seconds.
fn parse_duration(v: &str) -> Result<SimDuration, String> {
    let (num, scale) = match v.as_bytes().last() {
        Some(b'h') => (&v[..v.len() - 1], 3600.0),
        Some(b'm') => (&v[..v.len() - 1], 60.0),
        Some(b's') => (&v[..v.len() - 1], 1.0),
        _ => (v, 1.0),
    };
    let secs: f64 = num
        .parse()
        .map_err(|_| format!("{v:?} is not a duration"))?;
    if secs <= 0.0 {
        return Err(format!("{v:?}: duration must be positive"));
    }
    Ok(SimDuration::from_secs_f64(secs * scale))
}

fn cmd_analyze(tables: bool, params: &[String]) -> Result<(), CliError> {
    if tables {
        print!("{}", table4_csv(&render_table4(0.5)));
        println!();
        print!("{}", table5_csv(&render_table5(0.5, DEFAULT_WINDOW)));
        return Ok(());
    }
    if params.is_empty() {
        return Err(CliError::Config(
            "analyze: pass --tables or --params".into(),
        ));
    }
    let mut t_attack = None;
    let mut t_sleep = None;
    let mut n_retries: u32 = 1;
    let mut n_direct: Option<u64> = None;
    let mut p = 0.5;
    let mut r_limit: Option<f64> = None;
    for kv in params {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--params {kv:?}: expected key=value")))?;
        let bad = |e: String| CliError::Config(format!("--params {key}: {e}"));
        match key {
            "t_attack" => t_attack = Some(parse_duration(value).map_err(bad)?),
            "t_sleep" => t_sleep = Some(parse_duration(value).map_err(bad)?),
            "n_retries" => {
                n_retries = value.parse().map_err(|e| bad(format!("{e}")))?;
            }
            "n" => n_direct = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            "p" => p = value.parse().map_err(|e| bad(format!("{e}")))?,
            "r_limit" => r_limit = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            other => {
                return Err(CliError::Config(format!(
                    "--params: unknown key {other:?} (expected t_attack, t_sleep, n_retries, n, p, r_limit)"
                )))
            }
        }
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(CliError::Config("--params p: must be in (0,1)".into()));
    }
    let n = match (n_direct, t_attack, t_sleep) {
        (Some(n), _, _) => n,
        (None, Some(ta), Some(ts)) => n_attempts(ta, ts, n_retries),
        _ => {
            return Err(CliError::Config(
                "--params: give n, or t_attack and t_sleep".into(),
            ))
        }
    };
    if n == 0 {
        return Err(CliError::Config(
            "--params: parameters yield zero attempts".into(),
        ));
    }
    let o = overwhelming_factor(n, p);
    match r_limit {
        Some(r) => {
            let (r_attacker, total) = packet_volume(o, r, DEFAULT_WINDOW);
            println!("n_attempts,o,r_limit,r_attacker,total_packets");
            println!("{n},{:.0},{r},{r_attacker},{total}", o.round());
        }
        None => {
            println!("n_attempts,o");
            println!("{n},{:.0}", o.round());
        }
    }
    Ok(())
}

/// Wilson 95% score interval for k successes in n trials.
fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    assert!(n > 0);
    let z = 1.96f64;
    let (k, n) = (k as f64, n as f64);
    let phat = k / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = phat + z2 / (2.0 * n);
    let margin = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    (((center - margin) / denom).max(0.0), ((center + margin) / denom).min(1.0))
}

fn cmd_montecarlo(
    path: &Path,
    trials: u64,
    parallel: bool,
    seed_base: Option<u64>,
) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Config("--trials: must be at least 1".into()));
    }
    let config = load_config(path, None)?;
    // validate once up front so a bad config fails before any trial runs
    config.build().map_err(config_err)?;
    let base = seed_base.unwrap_or(config.seed);
    let trial = |i: u64| -> bool {
        let mut c = config.clone();
        c.seed = base.wrapping_add(i);
        let (mut world, duration) = c.build().expect("validated above");
        world.run(duration).downgrade_achieved
    };
    let successes: u64 = if parallel {
        (0..trials)
            .into_par_iter()
            .map(|i| trial(i) as u64)
            .sum()
    } else {
        (0..trials).map(|i| trial(i) as u64).sum()
    };
    let rate = successes as f64 / trials as f64;
    let (lo, hi) = wilson_interval(successes, trials);
    println!("trials,successes,rate,wilson95_lo,wilson95_hi");
    println!("{trials},{successes},{rate:.4},{lo:.4},{hi:.4}");
    Ok(())
}

const DEFAULT_PROBE_RATES: [f64; 18] = [
    1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 30.0, 50.0, 80.0, 120.0, 200.0, 350.0, 600.0, 1000.0,
    1500.0, 2500.0, 5000.0,
];

fn cmd_probe(path: &Path, target: &str, kind: ProbeKind, rates: &[f64]) -> Result<(), CliError> {
    let config = load_config(path, None)?;
    let (world, _) = config.build().map_err(config_err)?;
    let rates = if rates.is_empty() {
        &DEFAULT_PROBE_RATES[..]
    } else {
        rates
    };
    let client = Addr::new(203, 0, 113, 99);
    let duration = SimDuration::from_secs(6);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match kind {
        ProbeKind::Dns => {
            let ns = world.nameservers.get(target).ok_or_else(|| {
                CliError::Config(format!("--target: no nameserver labelled {target:?}"))
            })?;
            let name = ns
                .config
                .zone
                .first()
                .map(|r| r.name.clone())
                .ok_or_else(|| {
                    CliError::Config(format!("--target: nameserver {target:?} has an empty zone"))
                })?;
            let report = probe_rate_limit(&ns.config, client, &name, rates, duration, &mut rng);
            print!("{}", report.to_csv());
            eprintln!(
                "estimated slip_limit: {:?}, drop_limit: {:?}",
                report.slip_limit, report.drop_limit
            );
        }
        ProbeKind::Syn => {
            let pp = world.pps.get(target).ok_or_else(|| {
                CliError::Config(format!("--target: no publication point labelled {target:?}"))
            })?;
            let report = probe_syn_limit(&pp.config, client, rates, duration, &mut rng);
            print!("{}", report.to_csv());
            eprintln!("estimated syn limit: {:?}", report.limit);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_suffixes() {
        assert_eq!(parse_duration("6h").unwrap(), SimDuration::from_hours(6));
        assert_eq!(parse_duration("10m").unwrap(), SimDuration::from_secs(600));
        assert_eq!(parse_duration("900s").unwrap(), SimDuration::from_secs(900));
        assert_eq!(parse_duration("900").unwrap(), SimDuration::from_secs(900));
        assert!(parse_duration("abc").is_err());
        assert!(parse_duration("-5s").is_err());
    }

    // Wilson oracle: reference values computed by hand from the score
    // interval formula (z = 1.96).
    #[test]
    fn wilson_matches_reference_values() {
        let (lo, hi) = wilson_interval(200, 400);
        assert!((lo - 0.4517).abs() < 0.001, "{lo}");
        assert!((hi - 0.5483).abs() < 0.001, "{hi}");
        let (lo, hi) = wilson_interval(0, 10);
        assert!(lo == 0.0);
        assert!((hi - 0.2775).abs() < 0.001, "{hi}");
        let (lo, hi) = wilson_interval(10, 10);
        assert!((lo - 0.7225).abs() < 0.001, "{lo}");
        assert!(hi == 1.0);
    }
}
