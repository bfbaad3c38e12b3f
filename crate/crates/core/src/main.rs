use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use predtrig::harness::compare::compare_modes_with_gains;
use predtrig::harness::gains_io::{read_gains_file, write_gains_file};
use predtrig::harness::plot::plot_all;
use predtrig::harness::sim::summarize;
use predtrig::harness::trace::read_trace_file;
use predtrig::harness::verify::{verify_run, VerifyOptions};
use predtrig::harness::{synthesize, Scenario, ScenarioConfig};
use predtrig::netsim::{control_bandwidth, BandwidthParams, Mode};
use predtrig::{Error, Result};

const VERIFICATION_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "predtrig", version, about = "Predictive triggering co-simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file; the shipped reference scenario when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the run length; disturbances are rescaled to match.
    #[arg(long)]
    rounds: Option<u64>,
    /// Drop all disturbances.
    #[arg(long)]
    no_disturbance: bool,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::reference(),
        };
        if let Some(m) = self.mode {
            cfg = cfg.with_mode(m);
        }
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(r) = self.rounds {
            cfg = cfg.with_rounds(r);
        }
        if self.no_disturbance {
            cfg = cfg.without_disturbances();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize controller gains and write them to a file.
    Synthesize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Control messages per round that fit the round budget.
    Bandwidth {
        #[arg(long)]
        m_a: usize,
        #[arg(long, default_value_t = 20)]
        agents: usize,
        #[arg(long, default_value_t = 4)]
        w_p: usize,
        #[arg(long, default_value_t = Mode::Predictive)]
        mode: Mode,
        #[arg(long)]
        slot_us: Option<f64>,
        #[arg(long)]
        slots_per_message: Option<f64>,
        #[arg(long)]
        round_budget_us: Option<f64>,
    },
    /// Run one scenario.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Gains file from `synthesize`.
        #[arg(long)]
        gains: Option<PathBuf>,
        /// Trace CSV; falls back to the scenario's trace path.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Summary JSON; printed to stdout when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Predictive against periodic on matched seeds.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
        seeds: Vec<u64>,
        #[arg(long)]
        gains: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Stability audit of a trace, or of a fresh run when no trace is given.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        gains: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Cost, allocation and priority-histogram figures from traces.
    Plot {
        /// `label=path` or a bare path; the first trace drives the histograms.
        #[arg(long = "trace", required = true)]
        traces: Vec<String>,
        #[arg(long, short, default_value = "figures")]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        window: usize,
        /// Count grants from this round on.
        #[arg(long, default_value_t = 0)]
        from_round: u64,
        /// Group the histograms by agent class.
        #[arg(long, short)]
        config: Option<PathBuf>,
    },
    /// Recompute a summary from its trace and compare.
    Recompute {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        trace: PathBuf,
        /// Stored summary JSON to check; the recomputed one is printed when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn scenario_with(cfg: ScenarioConfig, gains: Option<&Path>) -> Result<Scenario> {
    match gains {
        Some(p) => Scenario::with_gains(cfg, read_gains_file(p)?),
        None => Scenario::new(cfg),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// `Ok(false)` when a check ran and failed.
fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Synthesize { scenario, out } => {
            let gains = synthesize(&scenario.load()?)?;
            write_gains_file(&out, &gains)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Bandwidth {
            m_a,
            agents,
            w_p,
            mode,
            slot_us,
            slots_per_message,
            round_budget_us,
        } => {
            let mut params = BandwidthParams::reference(m_a);
            params.slot_us = slot_us.unwrap_or(params.slot_us);
            params.slots_per_message = slots_per_message.unwrap_or(params.slots_per_message);
            params.round_budget_us = round_budget_us.unwrap_or(params.round_budget_us);
            let bw = control_bandwidth(&params, agents, w_p, mode)?;
            println!(
                "mode {mode} M_A {m_a} N {agents}: M_C = {} aggregate = {} bytes slot = {} us round = {} us",
                bw.m_c, bw.aggregate_bytes, bw.slot_us, bw.round_time_us
            );
        }
        Command::Run {
            scenario,
            gains,
            trace,
            summary,
        } => {
            let cfg = scenario.load()?;
            let trace = trace.or_else(|| cfg.trace_path.clone());
            let out = scenario_with(cfg, gains.as_deref())?.run()?;
            if let Some(t) = trace {
                out.write_trace(&t)?;
                eprintln!("wrote {}", t.display());
            }
            write_or_print(summary.as_deref(), &out.summary.to_json())?;
        }
        Command::Compare {
            scenario,
            seeds,
            gains,
            json,
        } => {
            let cfg = scenario.load()?;
            let g = match gains {
                Some(p) => read_gains_file(&p)?,
                None => synthesize(&cfg)?,
            };
            let report = compare_modes_with_gains(&cfg, &seeds, &g)?;
            print!("{}", report.to_text());
            if let Some(p) = json {
                std::fs::write(p, serde_json::to_string_pretty(&report).expect("report serialises"))?;
            }
        }
        Command::Verify {
            scenario,
            trace,
            gains,
            samples,
            json,
        } => {
            let cfg = scenario.load()?;
            let seed = cfg.seed;
            let sc = scenario_with(cfg, gains.as_deref())?;
            let records = match trace {
                Some(p) => read_trace_file(&p)?,
                None => sc.run()?.records,
            };
            let options = VerifyOptions {
                drift_samples: samples,
                seed,
                ..VerifyOptions::default()
            };
            let report = verify_run(&sc, &records, options)?;
            print!("{}", report.to_text());
            match json {
                Some(p) => std::fs::write(p, report.to_json())?,
                None => println!("{}", report.to_json()),
            }
            return Ok(report.passed);
        }
        Command::Plot {
            traces,
            out,
            window,
            from_round,
            config,
        } => {
            let loaded = traces
                .iter()
                .map(|t| {
                    let (label, path) = t.split_once('=').unwrap_or((t.as_str(), t.as_str()));
                    read_trace_file(Path::new(path)).map(|r| (label.to_string(), r))
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<(String, &[_])> = loaded.iter().map(|(l, r)| (l.clone(), r.as_slice())).collect();
            let groups = match config {
                Some(p) => {
                    let cfg = ScenarioConfig::load(&p)?;
                    cfg.classes
                        .keys()
                        .map(|c| {
                            let ids = (0..cfg.agents()).filter(|&i| &cfg.roster[i] == c).collect();
                            (c.clone(), ids)
                        })
                        .collect()
                }
                None => Vec::new(),
            };
            for f in plot_all(&out, &refs, window, from_round, &groups)? {
                println!("{}", f.display());
            }
        }
        Command::Recompute {
            scenario,
            trace,
            summary,
        } => {
            let cfg = scenario.load()?;
            let records = read_trace_file(&trace)?;
            let fresh = summarize(&cfg, &records)?;
            let Some(p) = summary else {
                println!("{}", fresh.to_json());
                return Ok(true);
            };
            let text = std::fs::read_to_string(&p)?;
            let stored: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
            let diffs = fresh.differences(&stored);
            if diffs.is_empty() {
                println!("recompute: all summary metrics match");
            } else {
                for d in &diffs {
                    println!("mismatch: {d}");
                }
            }
            return Ok(diffs.is_empty());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(VERIFICATION_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
