//! `dpafd`: run diagnosis scenarios, fault sweeps and inter-network
//! exchanges from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use dpafd_core::analysis::{check_diagnosis, fault_sweep, sweep_csv};
use dpafd_core::engine::{gateway_of, inter_network_exchange, load_scenario, simulate, NetworkReport};
use dpafd_core::{parse_topology, EngineError, LocalFrame, StatusBit};

const EXIT_USAGE: u8 = 1;
const EXIT_VERDICT: u8 = 2;
const EXIT_LIVELOCK: u8 = 3;

#[derive(Parser)]
#[command(name = "dpafd", version, about = "Periodic distributed fault diagnosis simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cycle of a scenario and print one report per cycle.
    Run {
        scenario: PathBuf,
        /// Write the event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Check the diagnosis against the reachability oracle.
        #[arg(long)]
        verdict: bool,
        /// Override the scenario's seed.
        #[arg(long, env = "DPAFD_SEED")]
        seed: Option<u64>,
    },
    /// Mean message count per number of crashed nodes, as CSV.
    Sweep {
        topology: PathBuf,
        /// Fault counts, e.g. `0,2,4` or `0-9`.
        #[arg(long, value_parser = parse_counts)]
        faults: Counts,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, env = "DPAFD_SEED", default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several networks and exchange their faulty lists between gateways.
    Exchange {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
}

#[derive(Clone, Debug)]
struct Counts(Vec<usize>);

fn parse_counts(s: &str) -> Result<Counts, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = |_| format!("bad fault count {part:?}");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.parse().map_err(bad)?, b.parse().map_err(bad)?);
                if a > b {
                    return Err(format!("empty range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(bad)?),
        }
    }
    if out.is_empty() {
        return Err("no fault counts given".into());
    }
    Ok(Counts(out))
}

enum Failure {
    Usage(anyhow::Error),
    Verdict(String),
    Livelock(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<EngineError>() {
            Some(EngineError::Livelock { .. }) => Failure::Livelock(e),
            _ => Failure::Usage(e),
        }
    }
}

fn run(scenario: &Path, trace: Option<&Path>, verdict: bool, seed: Option<u64>) -> Result<(), Failure> {
    let mut s = load_scenario(scenario).with_context(|| format!("loading {}", scenario.display()))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let result = simulate(&s).map_err(anyhow::Error::from)?;
    if let Some(path) = trace {
        fs::write(path, result.trace.export())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    for r in &result.reports {
        print!("{}", r.render());
    }
    let mut problems = Vec::new();
    if let Some(r) = result.reports.iter().find(|r| !r.terminated) {
        problems.push(format!("cycle {} did not terminate", r.cycle_index));
    }
    if verdict {
        let v = check_diagnosis(&result.trace, &s).map_err(anyhow::Error::from)?;
        println!("Verdict:");
        print!("{v}");
        for p in &v.problems {
            println!("  {p}");
        }
        if !v.passed() {
            problems.push("verdict failed".into());
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verdict(problems.join("; ")))
    }
}

fn sweep(topology: &Path, faults: &[usize], trials: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(topology).with_context(|| format!("reading {}", topology.display()))?;
    let topo = parse_topology(&text).with_context(|| format!("parsing {}", topology.display()))?;
    let rows = fault_sweep(&topo, faults, trials, seed)?;
    let csv = sweep_csv(&rows);
    match out {
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn exchange(paths: &[PathBuf]) -> Result<(), Failure> {
    if paths.len() < 2 {
        return Err(Failure::Usage(anyhow::anyhow!(
            "an exchange needs at least two scenarios, got {}",
            paths.len()
        )));
    }
    let mut reports = Vec::new();
    for p in paths {
        let s = load_scenario(p).with_context(|| format!("loading {}", p.display()))?;
        let run = simulate(&s).map_err(anyhow::Error::from)?;
        let Some(gateway) = gateway_of(&s, &run.state.membership) else {
            return Err(Failure::Verdict(format!("{}: no fault-free gateway", s.network_id)));
        };
        let faulty = match run.state.known_faulty.get(&gateway) {
            Some(list) => list.clone(),
            None => {
                let last = run.reports.last().expect("at least one cycle");
                last.faulty_found
                    .iter()
                    .map(|n| LocalFrame::new(n.clone(), StatusBit::Faulty))
                    .collect()
            }
        };
        reports.push(NetworkReport {
            network_id: s.network_id.clone(),
            gateway,
            faulty,
        });
    }
    for view in inter_network_exchange(&reports) {
        print!("{}", view.render());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run {
            scenario,
            trace,
            verdict,
            seed,
        } => run(scenario, trace.as_deref(), *verdict, *seed),
        Command::Sweep {
            topology,
            faults,
            trials,
            seed,
            out,
        } => sweep(topology, &faults.0, *trials, *seed, out.as_deref()).map_err(Failure::from),
        Command::Exchange { scenarios } => exchange(scenarios),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Verdict(why)) => {
            eprintln!("error: {why}");
            ExitCode::from(EXIT_VERDICT)
        }
        Err(Failure::Livelock(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_LIVELOCK)
        }
    }
}
