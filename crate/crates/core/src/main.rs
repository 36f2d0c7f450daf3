use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pass_core::activation::select_masks;
use pass_core::channel::draw_realization;
use pass_core::config::{load_config, ScenarioConfig};
use pass_core::harness::{emit_results, run_sweep, write_realizations_csv, OutputFormat, Scheme, SweepParam, SweepSpec};
use pass_core::rng::{substream, Purpose};
use pass_core::sca::{build_subproblem, initialize};
use pass_core::Error;

#[derive(Parser)]
#[command(name = "pass-sim", version, about = "Pinching-antenna uplink/downlink Monte Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign (optionally a sweep) and write result tables.
    Run {
        /// TOML scenario file; the built-in defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// bs_power_dbm, ul_threshold_bps_hz or ue_power_dbm.
        #[arg(long)]
        sweep: Option<SweepParam>,
        /// Comma-separated sweep values; default grid when omitted.
        #[arg(long, value_delimiter = ',', requires = "sweep")]
        values: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "s1,s1-all,s2,tdd")]
        schemes: Vec<Scheme>,
        #[arg(long, env = "PASS_SIM_OUT", default_value = "results")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, env = "PASS_SIM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Write the per-iteration SCA log of every realization.
        #[arg(long)]
        dump_traces: bool,
    },
    /// Write one channel realization and its activation masks as JSON.
    Channel {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        realization: u64,
        #[arg(long, env = "PASS_SIM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the first SCA subproblem of one realization in CBF format.
    Subproblem {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        realization: u64,
        #[arg(long, env = "PASS_SIM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default scenario as TOML.
    DefaultConfig,
}

enum Failure {
    Config(Error),
    Run(Error),
    AllInfeasible,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigParse(_) | Error::InvalidConfig { .. } => Failure::Config(e),
            e => Failure::Run(e),
        }
    }
}

fn load(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match path {
        Some(p) => load_config(p).map_err(|e| match e {
            Error::Io(io) => Failure::Config(Error::ConfigParse(format!("{}: {io}", p.display()))),
            e => Failure::from(e),
        })?,
        None => ScenarioConfig::reference(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Run(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            sweep,
            values,
            schemes,
            out,
            format,
            seed,
            realizations,
            dump_traces,
        } => {
            let mut base = load(config.as_deref(), seed)?;
            if let Some(n) = realizations {
                base.num_realizations = n;
            }
            base.validate()?;
            let spec = match sweep {
                Some(p) => SweepSpec {
                    parameter: p,
                    values: values.unwrap_or_else(|| p.default_grid()),
                    base,
                    schemes,
                },
                None => SweepSpec::single(base, schemes),
            };
            let points = run_sweep(&spec)?;

            fs::create_dir_all(&out).map_err(Error::from)?;
            let aggregates: Vec<_> = points.iter().map(|p| p.aggregate.clone()).collect();
            let (fmt, name) = match format {
                Format::Csv => (OutputFormat::Csv, "results.csv"),
                Format::Json => (OutputFormat::Json, "results.json"),
            };
            emit_results(&aggregates, out.join(name), fmt)?;
            let f = fs::File::create(out.join("realizations.csv")).map_err(Error::from)?;
            write_realizations_csv(&points, f)?;
            if dump_traces {
                let dir = out.join("traces");
                fs::create_dir_all(&dir).map_err(Error::from)?;
                for p in &points {
                    let a = &p.aggregate;
                    for o in p.outcomes.iter().filter(|o| !o.trace.is_empty()) {
                        let path = dir.join(format!("{}_{}_{}_r{}.csv", a.scheme, a.sweep_param, a.sweep_value, o.realization));
                        let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
                        for rec in &o.trace {
                            w.serialize(rec).map_err(Error::from)?;
                        }
                        w.flush().map_err(Error::from)?;
                    }
                }
            }
            for a in &aggregates {
                let mean = a.mean_sum_rate.map(|m| format!("{m:.4}")).unwrap_or_else(|| "n/a".into());
                println!(
                    "{:<8} {}={:<6} mean {mean} bps/Hz  feasible {}  skipped {}",
                    a.scheme, a.sweep_param, a.sweep_value, a.n_feasible, a.n_skipped
                );
            }
            if aggregates.iter().all(|a| a.n_feasible == 0) {
                return Err(Failure::AllInfeasible);
            }
            Ok(())
        }
        Command::Channel {
            config,
            realization,
            seed,
            out,
        } => {
            let cfg = load(config.as_deref(), seed)?;
            let ch = draw_realization(&cfg, realization)?;
            let sel = select_masks(&cfg, &ch)?;
            let value = serde_json::json!({
                "realization": realization,
                "channel": ch,
                "mask": sel.mask,
                "tx_trace": sel.tx_trace,
                "rx_trace": sel.rx_trace,
            });
            let text = serde_json::to_string_pretty(&value).map_err(Error::from)? + "\n";
            write_or_print(out.as_deref(), &text)
        }
        Command::Subproblem {
            config,
            realization,
            seed,
            out,
        } => {
            let cfg = load(config.as_deref(), seed)?;
            let ch = draw_realization(&cfg, realization)?;
            let sel = select_masks(&cfg, &ch)?;
            let mut rng = substream(cfg.rng_seed, realization, Purpose::ScaInit);
            let state = initialize(&ch, &sel.mask, &cfg, &mut rng)?;
            let sub = build_subproblem(&state, &ch, &sel.mask, &cfg)?;
            write_or_print(out.as_deref(), &sub.program.to_cbf())
        }
        Command::DefaultConfig => {
            print!("{}", ScenarioConfig::reference().to_toml_string());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::AllInfeasible) => {
            eprintln!("every realization was infeasible");
            ExitCode::from(3)
        }
    }
}
