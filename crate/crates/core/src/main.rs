use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use aqmsim::harness::presets::{scenario_preset, scenario_preset_names};
use aqmsim::harness::{emit_outputs, emit_sweep, run_experiment, run_sweep, Scenario, SweepPreset};

#[derive(Parser)]
#[command(name = "aqmsim", version, about = "Packet-level AQM simulator (RED, CHOKe, gCHOKe, CHOKeD)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write summary, aggregate, queue trace and
    /// timeseries CSVs.
    Run {
        /// Scenario file.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        scenario: Option<PathBuf>,
        /// Built-in scenario, e.g. model1-choked.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a multi-point experiment under RED, CHOKe, gCHOKe and CHOKeD.
    Sweep {
        #[arg(long)]
        preset: String,
        /// First seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of consecutive seeds per point.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List built-in scenarios and sweeps.
    ListPresets,
    /// Print a built-in scenario in the scenario file format.
    ShowPreset { name: String },
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn preset(name: &str) -> Result<Scenario> {
    match scenario_preset(name) {
        Some(sc) => Ok(sc),
        None => bail!("unknown preset `{name}` (see `aqmsim list-presets`)"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            preset: name,
            seed,
            out,
        } => {
            let mut sc = match (scenario, name) {
                (Some(path), _) => Scenario::from_path(&path)?,
                (None, Some(name)) => preset(&name)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            let report = run_experiment(&sc).with_context(|| format!("running {}", sc.name))?;
            for path in emit_outputs(&report, &out)? {
                println!("{}", path.display());
            }
            println!(
                "{}: tcp goodput {:.6} Mb/s, udp {:.6} Mb/s, fairness {:.6}",
                sc.name,
                report.tcp_goodput_bps / 1e6,
                report.udp_throughput_bps / 1e6,
                report.fairness
            );
        }
        Command::Sweep {
            preset,
            seed,
            seeds,
            out,
        } => {
            let preset: SweepPreset = preset.parse().map_err(anyhow::Error::msg)?;
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let seeds: Vec<u64> = (seed..seed + seeds).collect();
            let rows = run_sweep(preset, &seeds)?;
            for path in emit_sweep(&rows, &out)? {
                println!("{}", path.display());
            }
        }
        Command::ListPresets => {
            println!("scenarios:");
            for name in scenario_preset_names() {
                println!("  {name}");
            }
            println!("sweeps:");
            for p in SweepPreset::ALL {
                let points: Vec<String> = p.points().into_iter().map(|pt| pt.label).collect();
                println!("  {p} ({})", points.join(", "));
            }
        }
        Command::ShowPreset { name } => print!("{}", preset(&name)?.to_text()),
        Command::Validate { scenario } => {
            let sc = Scenario::from_path(&scenario)?;
            println!(
                "{}: ok ({} tcp, {} udp, {}, {} s)",
                sc.name, sc.traffic.tcp, sc.traffic.udp, sc.discipline, sc.duration_s
            );
        }
    }
    Ok(())
}
