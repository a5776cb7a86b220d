use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ibac::harness::io::{manifest_path, Manifest};
use ibac::harness::scenario::{hash_json, ScenarioSpec};
use ibac::harness::sweep::sweep;
use ibac::markov::{solve_fixed_point, MacTiming, ModelParams, SolverConfig};
use ibac::sim::{run, run_with_trace, SimConfig, TxAttempt};

#[derive(Parser)]
#[command(name = "ibac", version, about = "Bonding-level model, simulator and experiment sweeps")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Replace the seed (for `sweep`, run this single seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (`model`, `run`, `trace`) or directory (`sweep`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for `sweep`.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the analytic model and print the solution as JSON.
    Model {
        #[arg(long, default_value_t = 10)]
        n: u32,
        #[arg(long = "cw-min", default_value_t = 16)]
        cw_min: u32,
        #[arg(long, default_value_t = 6)]
        m: u32,
        #[arg(long, default_value_t = 4)]
        u: u32,
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
        /// Payload airtime, µs.
        #[arg(long, default_value_t = 77.16)]
        payload_us: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one configuration and print its metrics record as JSON.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every cell of a scenario (the default sweep without a file).
    Sweep {
        spec: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one configuration and write one CSV line per attempt.
    Trace {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<SimConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = SimConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str, manifest: Option<(Manifest, usize)>) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
            if let Some((mut m, rows)) = manifest {
                m.file = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                m.rows = rows;
                fs::write(manifest_path(p), toml::to_string(&m)?)?;
            }
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn model(n: u32, cw_min: u32, m: u32, u: u32, kappa: f64, payload_us: f64, c: &Common) -> Result<()> {
    let params = ModelParams::new(n, cw_min, m, u, kappa);
    let sol = solve_fixed_point(&params, &MacTiming::ieee80211ax(payload_us), &SolverConfig::default())?;
    let text = serde_json::to_string_pretty(&serde_json::json!({ "params": params, "solution": sol }))? + "\n";
    emit(c.out.as_deref(), &text, None)
}

fn run_one(path: &Path, c: &Common) -> Result<()> {
    let cfg = load_config(path, c.seed)?;
    let rec = run(&cfg)?;
    let text = serde_json::to_string_pretty(&rec)? + "\n";
    emit(c.out.as_deref(), &text, Some((Manifest::new(&hash_json(&cfg), &[cfg.seed]), 1)))
}

fn trace(path: &Path, c: &Common) -> Result<()> {
    let cfg = load_config(path, c.seed)?;
    let (rec, attempts) = run_with_trace(&cfg)?;
    let mut text = String::from(TxAttempt::trace_header());
    text.push('\n');
    for a in &attempts {
        text.push_str(&a.trace_line());
        text.push('\n');
    }
    emit(
        c.out.as_deref(),
        &text,
        Some((Manifest::new(&hash_json(&cfg), &[cfg.seed]), attempts.len())),
    )?;
    eprintln!(
        "{} attempts, {} delivered, {} owrp, {} simultaneous, {} out of range",
        rec.attempts, rec.delivered, rec.collisions_owrp, rec.collisions_simultaneous, rec.out_of_range
    );
    Ok(())
}

fn sweep_cmd(path: Option<&Path>, c: &Common) -> Result<bool> {
    let mut spec = match path {
        Some(p) => ScenarioSpec::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => ScenarioSpec::default(),
    };
    if let Some(s) = c.seed {
        spec.seeds = vec![s];
    }
    if let Some(o) = &c.out {
        spec.out = Some(o.clone());
    }
    let Some(dir) = spec.out.clone() else {
        bail!("no output directory: pass --out or set `out` in the spec");
    };
    let set = sweep(&spec, c.workers)?;
    let files = set.write(&dir, &spec)?;
    for s in set.aggregate().summary {
        eprintln!(
            "{:<26} cells {:>4}  plr {:6.2}  avg tput {:7.2} Mbps  wide {:.3}",
            s.policy, s.cells, s.plr_mean, s.avg_throughput_mean, s.wide_fraction_mean
        );
    }
    eprintln!("wrote {} files to {}", files.len(), dir.display());
    if !set.failures.is_empty() {
        eprintln!("{} of {} cells failed; see failures.csv", set.failures.len(), spec.cells().len());
        return Ok(false);
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Model {
            n,
            cw_min,
            m,
            u,
            kappa,
            payload_us,
            common,
        } => model(*n, *cw_min, *m, *u, *kappa, *payload_us, common).map(|_| true),
        Command::Run { config, common } => run_one(config, common).map(|_| true),
        Command::Sweep { spec, common } => sweep_cmd(spec.as_deref(), common),
        Command::Trace { config, common } => trace(config, common).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
