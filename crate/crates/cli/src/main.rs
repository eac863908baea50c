//! `censor-econ`: run scenarios, score tools, sweep seeds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use censor_econ::armsrace::{grand_total, run_scenario};
use censor_econ::eval::{compare_tools, evaluate_tool, rank};
use censor_econ::report::{self, RunReport, SweepRow};
use censor_econ::scenario::{ScenarioFile, STOCK};
use censor_econ::{Error, Result};

#[derive(Parser)]
#[command(
    name = "censor-econ",
    version,
    about = "Censor cost simulator for the censorship arms race"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Scenario file (.toml or .json) or the name of a stock scenario.
    scenario: String,
    /// Set a scenario value, e.g. `traffic.n_flows=500`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--override seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the previous classifier in cycles where the tool changes.
    #[arg(long)]
    frozen_classifier: bool,
}

impl Source {
    fn load(&self) -> Result<ScenarioFile> {
        let mut o = self.overrides.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if self.frozen_classifier {
            o.push("frozen_classifier=true".into());
        }
        ScenarioFile::load(&self.scenario, &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every development cycle; writes scenario.json, cycles.csv, report.json.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Score and rank tools declared in the scenario; writes tool_scores.csv.
    Eval {
        #[command(flatten)]
        source: Source,
        /// Tool ids to score.
        #[arg(value_name = "TOOL", required = true, num_args = 1..)]
        tools: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the scenario once per seed; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a scenario without running it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// List the stock scenarios.
    Stock,
}

fn out_dir(out: &Path) -> Result<&Path> {
    std::fs::create_dir_all(out)?;
    Ok(out)
}

fn cmd_run(source: &Source, out: &Path) -> Result<()> {
    let file = source.load()?;
    let scenario = file.scenario()?;
    let cycles = run_scenario(&scenario)?;
    let tools = file.all_tools();
    let ranking = if tools.len() >= 2 {
        Some(compare_tools(&tools, &scenario, &file.demand, file.epsilon)?)
    } else {
        None
    };
    let report = RunReport::new(&file.name, file.seed, file.frozen_classifier, cycles, ranking);
    let dir = out_dir(out)?;
    report::write_atomic(
        &dir.join("scenario.json"),
        (file.resolved().to_json()? + "\n").as_bytes(),
    )?;
    report::write_atomic(&dir.join("cycles.csv"), &report::cycles_csv(&report.cycles)?)?;
    report::write_json(&dir.join("report.json"), &report)?;
    println!("scenario: {}", report.scenario);
    println!("grand total cost: {}", report.grand_total);
    println!("final fn_rate: {}", report.final_fn_rate);
    println!("final fp_rate: {}", report.final_fp_rate);
    if let Some(r) = &report.ranking {
        print!("{}", report::scores_table(r));
    }
    Ok(())
}

fn cmd_eval(source: &Source, tools: &[String], out: &Path) -> Result<()> {
    let file = source.load()?;
    let scenario = file.scenario()?;
    let tools = tools.iter().map(|id| file.tool(id)).collect::<Result<Vec<_>>>()?;
    let ranked = if tools.len() >= 2 {
        compare_tools(&tools, &scenario, &file.demand, file.epsilon)?
    } else {
        rank(vec![evaluate_tool(&tools[0], &scenario, &file.demand, file.epsilon)?])?
    };
    let dir = out_dir(out)?;
    report::write_atomic(&dir.join("tool_scores.csv"), &report::scores_csv(&ranked)?)?;
    print!("{}", report::scores_table(&ranked));
    Ok(())
}

fn cmd_sweep(source: &Source, seeds: &[u64], out: &Path) -> Result<()> {
    let base = source.load()?;
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut file = base.clone();
        file.seed = seed;
        let cycles = run_scenario(&file.scenario()?)?;
        let last = cycles.last().expect("at least one cycle");
        rows.push(SweepRow {
            seed,
            grand_total: grand_total(&cycles),
            final_fn_rate: last.confusion.fn_rate,
            final_fp_rate: last.confusion.fp_rate,
        });
        println!("seed {seed}: grand total {}", grand_total(&cycles));
    }
    let dir = out_dir(out)?;
    report::write_atomic(&dir.join("sweep.csv"), &report::sweep_csv(&rows)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { source, out } => cmd_run(&source, &out),
        Command::Eval { source, tools, out } => cmd_eval(&source, &tools, &out),
        Command::Sweep { source, seeds, out } => cmd_sweep(&source, &seeds, &out),
        Command::Validate { source } => {
            let file = source.load()?;
            println!("ok: {} ({} cycles, {} tools)", file.name, file.cycles, file.tools.len());
            Ok(())
        }
        Command::Stock => {
            for name in STOCK {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
