//! `pairphase` command line: Monte-Carlo runs, parameter sweeps and
//! closed-form variance predictions.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pairphase::estimator::WeightMode;
use pairphase::harness::{self, Model, MseRow, Scenario};
use pairphase::variance;

#[derive(Parser)]
#[command(name = "pairphase", version, about = "Residual CFO/SFO estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; omitted keys take the reference values.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output CSV; a `<out>.meta.json` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// weighted | simplified
    #[arg(long)]
    mode: Option<WeightMode>,
    /// freq | time
    #[arg(long)]
    model: Option<Model>,
}

#[derive(Subcommand)]
enum Command {
    /// MSE versus SNR for one scenario.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// MSE versus the normalized SFO.
    SweepEta {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true,
              default_value = "-1e-4,-8e-5,-6e-5,-4e-5,-2e-5,0,2e-5,4e-5,6e-5,8e-5,1e-4")]
        values: Vec<f64>,
        /// SNR in dB for the sweep.
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
    },
    /// MSE versus the normalized residual CFO.
    SweepEps {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true,
              default_value = "-0.1,-0.08,-0.06,-0.04,-0.02,0,0.02,0.04,0.06,0.08,0.1")]
        values: Vec<f64>,
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
    },
    /// MSE versus CSI error level.
    SweepKappa {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
        values: Vec<f64>,
    },
    /// MSE versus terminal speed with block-0 CSI.
    SweepMobility {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,50,100,150,200")]
        values: Vec<f64>,
    },
    /// Print closed-form variance predictions.
    Predict {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: Option<&Path>) -> Result<Scenario> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            harness::parse_scenario(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(Scenario::default()),
    }
}

fn scenario(c: &Common) -> Result<Scenario> {
    let mut s = load(c.scenario.as_deref())?;
    if let Some(t) = c.trials {
        s.trials = t;
    }
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    if let Some(m) = c.mode {
        s.mode = m;
    }
    if let Some(m) = c.model {
        s.model = m;
    }
    s.validate()?;
    Ok(s)
}

fn write(rows: &[MseRow], s: &Scenario, out: &Path) -> Result<()> {
    harness::emit_csv(rows, out).with_context(|| format!("writing {}", out.display()))?;
    let meta = serde_json::json!({
        "seed": s.seed,
        "trials": s.trials,
        "mode": s.mode.as_str(),
        "model": s.model.as_str(),
        "rows": rows.iter().map(|r| serde_json::json!({
            "snr_db": r.snr_db,
            "key": r.key.as_ref().map(|(_, v)| *v),
            "accepted": r.trials,
            "rejected": r.rejected,
        })).collect::<Vec<_>>(),
    });
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".meta.json");
    fs::write(&sidecar, serde_json::to_string_pretty(&meta)? + "\n")?;
    let rejected: usize = rows.iter().map(|r| r.rejected).sum();
    if rejected > 0 {
        eprintln!("warning: {rejected} trials rejected by the estimator");
    }
    Ok(())
}

fn predict(s: &Scenario) -> Result<()> {
    let cfg = &s.cfg;
    println!(
        "n={} n_g={} m={} q={} (equal-power unit-modulus tones)",
        cfg.n, cfg.n_g, cfg.m, cfg.q
    );
    println!("intercept/slope variance factor: {:.6}", variance::intercept_factor(cfg));
    println!("snr_db,var_eta,var_eps,var_eta_intercept,var_eps_intercept");
    for &snr_db in &s.snr_db {
        if !snr_db.is_finite() {
            continue;
        }
        let v = variance::var_a1a2a3(cfg, 10f64.powf(snr_db / 10.0))?;
        let i = variance::var_intercept(cfg, &v);
        println!(
            "{snr_db},{:.6e},{:.6e},{:.6e},{:.6e}",
            v.var_eta, v.var_eps, i.var_eta, i.var_eps
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common } => {
            let s = scenario(&common)?;
            write(&harness::run_scenario(&s)?, &s, &common.out)
        }
        Command::SweepEta { common, values, snr_db } => {
            let mut s = scenario(&common)?;
            s.snr_db = vec![snr_db];
            write(&harness::sweep_eta(&s, &values)?, &s, &common.out)
        }
        Command::SweepEps { common, values, snr_db } => {
            let mut s = scenario(&common)?;
            s.snr_db = vec![snr_db];
            write(&harness::sweep_eps(&s, &values)?, &s, &common.out)
        }
        Command::SweepKappa { common, values } => {
            let s = scenario(&common)?;
            write(&harness::sweep_kappa(&s, &values)?, &s, &common.out)
        }
        Command::SweepMobility { common, values } => {
            let s = scenario(&common)?;
            write(&harness::sweep_mobility(&s, &values)?, &s, &common.out)
        }
        Command::Predict { config } => predict(&load(config.as_deref())?),
    }
}
