use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use rsp_game::equilibrium::GneSolution;
use rsp_game::experiment::{self, ExperimentConfig, Mode};
use rsp_game::network::ProblemInstance;

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Solve,
    Sweep,
    Monopoly,
    Compare,
    Verify,
    Stochastic,
}

impl From<Command> for Mode {
    fn from(c: Command) -> Self {
        match c {
            Command::Solve => Mode::Solve,
            Command::Sweep => Mode::Sweep,
            Command::Monopoly => Mode::Monopoly,
            Command::Compare => Mode::Compare,
            Command::Verify => Mode::Verify,
            Command::Stochastic => Mode::Stochastic,
        }
    }
}

/// Pricing and rebalancing equilibria of two competing ride-service fleets.
#[derive(Debug, Parser)]
#[command(name = "rsp-game", version)]
struct Cli {
    command: Command,
    /// Experiment config (JSON); defaults describe the baseline two-cluster experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated q values. Single-instance modes take exactly one.
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    /// Per-RSP fleet size of the two-cluster instance.
    #[arg(long)]
    capacity: Option<f64>,
    /// Bound on the relative deviation gain.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for randomized checks; solves ignore it.
    #[arg(long)]
    seed: Option<u64>,
    /// Solution file to check (verify mode).
    #[arg(long)]
    solution: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    config.mode = cli.command.into();
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(qs) = &cli.q {
        if config.mode != Mode::Sweep {
            match qs.as_slice() {
                [q] => config.cluster.q = *q,
                _ => bail!("{} takes a single q value, got {}", config.mode, qs.len()),
            }
        }
        config.q_values = qs.clone();
    }
    if let Some(c) = cli.capacity {
        config.cluster.capacity = c;
    }
    if let Some(tol) = cli.tol {
        config.gain_tol = tol;
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    config.validate()?;
    Ok(config)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_gne(dir: &Path, stem: &str, instance: &ProblemInstance, gne: &GneSolution) -> anyhow::Result<()> {
    write(&dir.join(format!("{stem}.json")), &gne.to_json(instance)?)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    gne.write_csv(instance, fs::File::create(&csv_path)?)?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn print_gne(gne: &GneSolution) {
    println!("profits: {:.6} {:.6}", gne.rsp[0].profit, gne.rsp[1].profit);
    println!("potential: {:.6}", gne.potential);
    if let Some(dev) = &gne.deviation {
        println!(
            "relative deviation gains: {:.3e} {:.3e} (tol {:.1e}) -> {}",
            dev.relative_gain[0],
            dev.relative_gain[1],
            dev.tol,
            if dev.is_gne {
                "equilibrium"
            } else {
                "not an equilibrium"
            }
        );
    }
}

/// Runs the selected mode; `Ok(false)` means a check failed.
fn run(cli: &Cli) -> anyhow::Result<bool> {
    let config = build_config(cli)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    match config.mode {
        Mode::Solve => {
            let (instance, gne) = experiment::run_solve(&config)?;
            write(&dir.join("instance.json"), &instance.to_json()?)?;
            write_gne(dir, "solution", &instance, &gne)?;
            print_gne(&gne);
            Ok(true)
        }
        Mode::Stochastic => {
            let (instance, gne) = experiment::run_stochastic(&config)?;
            write(&dir.join("instance.json"), &instance.to_json()?)?;
            write_gne(dir, "stochastic", &instance, &gne)?;
            print_gne(&gne);
            Ok(true)
        }
        Mode::Monopoly => {
            let (instance, mono) = experiment::run_monopoly(&config)?;
            write(&dir.join("monopoly.json"), &mono.to_json(&instance)?)?;
            let csv_path = dir.join("monopoly.csv");
            mono.write_csv(&instance, fs::File::create(&csv_path)?)?;
            println!("wrote {}", csv_path.display());
            println!("monopoly profit: {:.6}", mono.profit);
            Ok(true)
        }
        Mode::Compare => {
            let report = experiment::run_compare(&config)?;
            write(&dir.join("compare.json"), &serde_json::to_string_pretty(&report)?)?;
            println!(
                "partition condition: {} (overlap {:.3e}); verdict: {}",
                report.partition_condition_holds, report.max_overlap, report.verdict
            );
            if let Some(note) = &report.note {
                println!("note: {note}");
            }
            Ok(true)
        }
        Mode::Sweep => {
            let output = experiment::run_sweep(&config)?;
            for path in experiment::write_sweep(dir, &output)? {
                println!("wrote {}", path.display());
            }
            for p in &output.summary.points {
                let gain = p
                    .deviation
                    .as_ref()
                    .map_or(f64::NAN, |d| d.relative_gain[0].max(d.relative_gain[1]));
                println!(
                    "q={}: profits {:.4} {:.4}, monopoly {:.4}, max relative gain {gain:.3e}",
                    p.q, p.profits[0], p.profits[1], p.monopoly_profit
                );
            }
            Ok(true)
        }
        Mode::Verify => {
            let Some(path) = &cli.solution else {
                bail!("verify needs --solution <file>");
            };
            let instance = config.instance()?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let solution = GneSolution::from_json(&instance, &text)
                .with_context(|| format!("loading solution {}", path.display()))?;
            let report = experiment::run_verify(&instance, &solution, &config.settings, config.gain_tol)?;
            write(&dir.join("verify.json"), &serde_json::to_string_pretty(&report)?)?;
            println!("feasibility residual: {:.3e}", report.feasibility_residual);
            for f in &report.failures {
                println!("FAIL {f}");
            }
            println!(
                "{}",
                if report.passed {
                    "verification passed"
                } else {
                    "verification failed"
                }
            );
            Ok(report.passed)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<rsp_game::Error>() {
        Some(rsp_game::Error::Solver { .. }) => EXIT_SOLVER,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VALIDATION),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
