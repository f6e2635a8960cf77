mod spec;
mod task;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use frugalzo::{compare, run, trajectory_length, ComparisonReport, OptimizerKind, TerminalReason, ToyFn, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use spec::{default_out, CliError, CliResult, ExperimentSpec, OptimizerSpec, Overrides};
use task::Task;

#[derive(Parser)]
#[command(name = "frugalzo", version, about = "Forward-pass-only optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trajectory CSV and metadata.
    Run {
        /// TOML spec, JSON spec, or a previous run's .meta.json
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the nine toy-table cells and print lengths next to the reference values.
    Toytable {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every listed optimizer on every seed and report forward-pass savings.
    Compare {
        spec: PathBuf,
        /// Runs executed concurrently
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { spec, overrides } => cmd_run(spec.as_deref(), &overrides),
        Command::Toytable { out, seed } => cmd_toytable(out, seed),
        Command::Compare { spec, jobs, overrides } => cmd_compare(&spec, jobs, &overrides),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                CliError::Config(_) => 2,
                CliError::Runtime(_) => 1,
            })
        }
    }
}

#[derive(Serialize)]
struct RunMeta {
    spec: ExperimentSpec,
    trajectory: String,
    terminal: TerminalReason,
    steps: u64,
    terminal_loss: f64,
    forward_passes: u64,
    eval_passes: u64,
    path_length: f64,
    peak_aux_floats: usize,
    peak_rng_states: usize,
    wall_clock_secs: f64,
}

fn write_csv(traj: &Trajectory, path: &Path) -> CliResult<()> {
    traj.write_csv(BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("`out`: cannot create {}: {e}", dir.display())))
}

/// Runs one (optimizer, seed) cell and returns its trajectory and wall-clock time.
fn execute(spec: &ExperimentSpec, opt: &OptimizerSpec, seed: u64) -> CliResult<(Trajectory, f64)> {
    let cfg = spec.run_config(opt, seed)?;
    let task = Task::build(spec, seed)?;
    let start = Instant::now();
    let traj = run(&cfg, task.objective())?;
    Ok((traj, start.elapsed().as_secs_f64()))
}

fn file_stem(spec: &ExperimentSpec, label: &str, seed: u64) -> CliResult<String> {
    Ok(format!("{}_{label}_seed{seed}", spec.task_name()?))
}

fn write_run(spec: &ExperimentSpec, opt: &OptimizerSpec, seed: u64, traj: &Trajectory, secs: f64) -> CliResult<PathBuf> {
    let dir = spec.out_dir();
    let stem = file_stem(spec, &opt.label(), seed)?;
    let csv = dir.join(format!("{stem}.csv"));
    write_csv(traj, &csv)?;
    let meta = RunMeta {
        spec: spec.resolved_for(opt, seed)?,
        trajectory: format!("{stem}.csv"),
        terminal: traj.terminal,
        steps: traj.steps(),
        terminal_loss: traj.terminal_loss(),
        forward_passes: traj.forward_passes(),
        eval_passes: traj.eval_passes(),
        path_length: traj.path_length,
        peak_aux_floats: traj.peak_aux_floats,
        peak_rng_states: traj.peak_rng_states,
        wall_clock_secs: secs,
    };
    fs::write(dir.join(format!("{stem}.meta.json")), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(csv)
}

fn cmd_run(spec_path: Option<&Path>, overrides: &Overrides) -> CliResult<bool> {
    let mut spec = match spec_path {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::default(),
    };
    spec.apply(overrides);
    let seed = spec.seed.unwrap_or(0);
    let opt = spec.optimizer.clone();
    spec.run_config(&opt, seed)?;
    Task::build(&spec, seed)?;
    create_dir(&spec.out_dir())?;
    let (traj, secs) = execute(&spec, &opt, seed)?;
    let csv = write_run(&spec, &opt, seed, &traj, secs)?;
    println!(
        "{} {} seed {seed}: {} steps, {:?}, terminal loss {:.6e}, {} forward passes -> {}",
        spec.task_name()?,
        opt.label(),
        traj.steps(),
        traj.terminal,
        traj.terminal_loss(),
        traj.forward_passes(),
        csv.display()
    );
    Ok(traj.terminal != TerminalReason::Divergence)
}

struct ToyRow {
    toy: ToyFn,
    steps: u64,
    cells: [(OptimizerKind, f64, f64); 3],
}

#[allow(clippy::approx_constant)]
const TOY_TABLE: [ToyRow; 3] = [
    ToyRow {
        toy: ToyFn::F1,
        steps: 600,
        cells: [
            (OptimizerKind::FirstOrderAdam, 0.01, 3.0227),
            (OptimizerKind::Mezo, 0.01, 4.6659),
            (OptimizerKind::Adamezo, 0.01, 4.5078),
        ],
    },
    ToyRow {
        toy: ToyFn::F2,
        steps: 2500,
        cells: [
            (OptimizerKind::FirstOrderAdam, 0.01, 4.3597),
            (OptimizerKind::Mezo, 0.002, 5.5405),
            (OptimizerKind::Adamezo, 0.002, 5.3207),
        ],
    },
    ToyRow {
        toy: ToyFn::F3,
        steps: 500,
        cells: [
            (OptimizerKind::FirstOrderAdam, 0.01, 1.4142),
            (OptimizerKind::Mezo, 0.01, 1.4243),
            (OptimizerKind::Adamezo, 0.01, 1.8577),
        ],
    },
];

#[derive(Serialize)]
struct ToyCell {
    toy: ToyFn,
    optimizer: OptimizerKind,
    lr: f64,
    steps: u64,
    init: Vec<f64>,
    final_loss: f64,
    length: f64,
    reference_length: f64,
    trajectory: String,
}

fn cmd_toytable(out: Option<PathBuf>, seed: u64) -> CliResult<bool> {
    let dir = out.unwrap_or_else(default_out);
    create_dir(&dir)?;
    let mut cells = Vec::new();
    for row in &TOY_TABLE {
        for &(kind, lr, reference_length) in &row.cells {
            let spec = ExperimentSpec {
                task: Some(row.toy.to_string()),
                steps: Some(row.steps),
                patience: Some(u32::MAX),
                out: Some(dir.clone()),
                optimizer: OptimizerSpec {
                    kind: Some(kind),
                    eta: Some(lr),
                    toy_two_seed: Some(kind.is_zeroth_order()),
                    ..Default::default()
                },
                ..Default::default()
            };
            let (traj, _) = execute(&spec, &spec.optimizer, seed)?;
            let name = format!("toytable_{}_{}.csv", row.toy, kind);
            write_csv(&traj, &dir.join(&name))?;
            cells.push(ToyCell {
                toy: row.toy,
                optimizer: kind,
                lr,
                steps: row.steps,
                init: traj.rows[0].params.clone().unwrap_or_default(),
                final_loss: traj.terminal_loss(),
                length: trajectory_length(&traj)?,
                reference_length,
                trajectory: name,
            });
        }
    }
    println!(
        "{:<4} {:<17} {:>7} {:>6} {:>13} {:>13} {:>10} {:>10}",
        "toy", "optimizer", "lr", "steps", "init", "final loss", "length", "reference"
    );
    for c in &cells {
        println!(
            "{:<4} {:<17} {:>7} {:>6} {:>13} {:>13.5e} {:>10} {:>10.4}",
            c.toy.to_string(),
            c.optimizer.to_string(),
            c.lr,
            c.steps,
            format!("({}, {})", c.init[0], c.init[1]),
            c.final_loss,
            if c.length < 1e4 { format!("{:.4}", c.length) } else { format!("{:.3e}", c.length) },
            c.reference_length
        );
    }
    fs::write(dir.join("toytable.json"), serde_json::to_string_pretty(&cells)? + "\n")?;
    Ok(true)
}

#[derive(Serialize)]
struct SeedReport {
    seed: u64,
    report: ComparisonReport,
}

#[derive(Serialize)]
struct PairSummary {
    a: String,
    b: String,
    reached: usize,
    seeds: usize,
    /// Median over the seeds where `a` reached `b`'s terminal loss.
    median_savings_ratio: Option<f64>,
}

#[derive(Serialize)]
struct CompareOutput {
    labels: Vec<String>,
    seeds: Vec<u64>,
    reports: Vec<SeedReport>,
    summary: Vec<PairSummary>,
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

fn cmd_compare(spec_path: &Path, jobs: usize, overrides: &Overrides) -> CliResult<bool> {
    let mut spec = ExperimentSpec::load(spec_path)?;
    spec.apply(overrides);
    let entries = spec.entries();
    if entries.len() < 2 {
        return Err(CliError::Config(format!(
            "`optimizers`: need at least 2 entries to compare, found {}",
            entries.len()
        )));
    }
    let labels: Vec<String> = entries.iter().map(OptimizerSpec::label).collect();
    if let Some(dup) = labels.iter().enumerate().find_map(|(i, l)| labels[..i].contains(l).then_some(l)) {
        return Err(CliError::Config(format!("`optimizers`: duplicate label `{dup}`")));
    }
    if jobs == 0 {
        return Err(CliError::Config("`jobs`: must be >= 1".into()));
    }
    let seeds = spec.seed_list();
    for e in &entries {
        spec.run_config(e, seeds[0])?;
    }
    Task::build(&spec, seeds[0])?;
    create_dir(&spec.out_dir())?;

    let work: Vec<(usize, u64)> = seeds.iter().flat_map(|&s| (0..entries.len()).map(move |i| (i, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let results: Vec<(usize, u64, Trajectory)> = pool.install(|| {
        work.par_iter()
            .map(|&(i, seed)| {
                let (traj, secs) = execute(&spec, &entries[i], seed)?;
                write_run(&spec, &entries[i], seed, &traj, secs)?;
                Ok((i, seed, traj))
            })
            .collect::<CliResult<_>>()
    })?;

    let mut reports = Vec::new();
    for &seed in &seeds {
        let runs: Vec<(String, Trajectory)> = results
            .iter()
            .filter(|r| r.1 == seed)
            .map(|(i, _, t)| (labels[*i].clone(), t.clone()))
            .collect();
        reports.push(SeedReport {
            seed,
            report: compare(&runs)?,
        });
    }
    let mut summary = Vec::new();
    for a in &labels {
        for b in labels.iter().filter(|b| *b != a) {
            let ratios: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.report.pair(a, b).and_then(|p| p.savings_ratio))
                .collect();
            summary.push(PairSummary {
                a: a.clone(),
                b: b.clone(),
                reached: ratios.len(),
                seeds: seeds.len(),
                median_savings_ratio: median(ratios),
            });
        }
    }

    println!("{:<20} {:>16} {:>14} {:>16}", "optimizer", "terminal loss", "path length", "forward passes");
    for (i, label) in labels.iter().enumerate() {
        let mine: Vec<&Trajectory> = results.iter().filter(|r| r.0 == i).map(|r| &r.2).collect();
        println!(
            "{:<20} {:>16.6e} {:>14.4} {:>16}",
            label,
            median(mine.iter().map(|t| t.terminal_loss()).collect()).unwrap_or(f64::NAN),
            median(mine.iter().map(|t| t.path_length).collect()).unwrap_or(f64::NAN),
            median(mine.iter().map(|t| t.forward_passes() as f64).collect()).unwrap_or(f64::NAN),
        );
    }
    println!("medians over {} seed(s)", seeds.len());
    for p in &summary {
        match p.median_savings_ratio {
            Some(r) => println!(
                "{} vs {}: median savings {:.1}% (reached in {}/{})",
                p.a,
                p.b,
                100.0 * r,
                p.reached,
                p.seeds
            ),
            None => println!("{} vs {}: not reached", p.a, p.b),
        }
    }

    let output = CompareOutput {
        labels,
        seeds,
        reports,
        summary,
    };
    let path = spec.out_dir().join("comparison.json");
    fs::write(&path, serde_json::to_string_pretty(&output)? + "\n")?;
    println!("report -> {}", path.display());
    Ok(results.iter().all(|r| r.2.terminal != TerminalReason::Divergence))
}
