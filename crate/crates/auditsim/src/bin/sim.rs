use auditsim::config::ScenarioConfig;
use auditsim::experiment::{emit_csv, run_scenario, ScenarioReport};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sim", about = "Audit-and-repair protocol simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the scenario described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario once per value of a swept config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// KEY=v1,v2,... — one scenario per value.
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the default no-adversary scenario.
    Baseline {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn apply_env_seed(cfg: &mut ScenarioConfig, cli_seeds: &[u64]) {
    if !cli_seeds.is_empty() {
        cfg.seeds = cli_seeds.to_vec();
    } else if let Ok(s) = std::env::var("SIM_SEED") {
        if let Ok(seed) = s.trim().parse() {
            cfg.seeds = vec![seed];
        }
    }
}

fn write_out(csv: &str, out: Option<&PathBuf>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { config, seed, out } => run_cmd(&config, &seed, out.as_ref()),
        Cmd::Sweep { config, vary, out } => sweep_cmd(&config, &vary, &out),
        Cmd::Baseline { out } => {
            let mut cfg = ScenarioConfig::default();
            apply_env_seed(&mut cfg, &[]);
            let rep = run_scenario(&cfg);
            write_out(&emit_csv(&[rep]), out.as_ref()).map_err(|e| e.to_string())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ScenarioConfig::parse(&text).map_err(|e| e.to_string())
}

fn run_cmd(config: &PathBuf, seeds: &[u64], out: Option<&PathBuf>) -> Result<(), String> {
    let mut cfg = load_config(config)?;
    apply_env_seed(&mut cfg, seeds);
    let rep = run_scenario(&cfg);
    write_out(&emit_csv(&[rep]), out).map_err(|e| e.to_string())
}

fn sweep_cmd(config: &PathBuf, vary: &str, out: &PathBuf) -> Result<(), String> {
    let base = load_config(config)?;
    let (key, values) = vary.split_once('=').ok_or("expected --vary KEY=v1,v2,...")?;
    let mut reports: Vec<ScenarioReport> = Vec::new();
    for value in values.split(',') {
        let mut cfg = base.clone();
        cfg.set(key.trim(), value.trim())
            .map_err(|_| format!("cannot set `{key}` to `{value}`"))?;
        cfg.validate().map_err(|e| e.to_string())?;
        cfg.scenario = format!("{}[{}={}]", base.scenario, key.trim(), value.trim());
        reports.push(run_scenario(&cfg));
    }
    write_out(&emit_csv(&reports), Some(out)).map_err(|e| e.to_string())
}
