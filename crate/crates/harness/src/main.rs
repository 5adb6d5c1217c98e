use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use amset::estimate::FitOptions;
use amset::procedures::StoppingRule;
use amset_harness::data::{decisions_csv, pooled_fit, read_matrix, read_z_scores, run_on_data, ModelFile};
use amset_harness::output::{read_csv, to_csv_string};
use amset_harness::plot::{emit_svg, XAxis};
use amset_harness::scenario::parse_recovery;
use amset_harness::runner::threads_from_env;
use amset_harness::{builtin_scenarios, find_scenario, run_scenario_detailed, Method, ScenarioConfig};

#[derive(Parser)]
#[command(name = "amset", version, about = "Sequential lfdr multiple testing: simulations and data runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    Horizon,
    FirstRejection,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Sweep,
    Stage,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios.
    ListScenarios,
    /// Run a built-in scenario or a TOML scenario file and write result rows as CSV.
    Simulate {
        /// Scenario name (e.g. fixed1, real2-desk) or path to a .toml config.
        scenario: String,
        /// Use the desk-scale twin of a built-in scenario.
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a procedure to an m × T CSV of observations.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        alpha: f64,
        /// Model file with p_hat and components; fitted on the pooled data when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "horizon")]
        stopping: StopArg,
        /// Write per-coordinate decisions as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit (p̂, f̂1) to a single-column CSV of z-scores.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// data_driven, data_driven_inclusive or hard:<c>.
        #[arg(long, default_value = "data_driven")]
        method: String,
        /// Write the fitted model file (TOML).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one metric from a result CSV as an SVG line chart.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        /// fdr, mfdr, mdr or power.
        #[arg(long)]
        metric: String,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to stage when every row has a stage number, else sweep.
        #[arg(long, value_enum)]
        x_axis: Option<AxisArg>,
        /// Keep only rows of this scenario.
        #[arg(long)]
        scenario: Option<String>,
        /// Keep only rows at this sweep value.
        #[arg(long)]
        sweep_value: Option<f64>,
        /// Height of the reference line on fdr and mfdr plots.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

fn load_scenario(name: &str, desk: bool) -> Result<ScenarioConfig> {
    let path = Path::new(name);
    if name.ends_with(".toml") || path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {name}"))?;
        let mut cfg = ScenarioConfig::from_toml(&text).with_context(|| format!("parsing {name}"))?;
        if desk {
            cfg.name = format!("{}-desk", cfg.name);
        }
        return Ok(cfg);
    }
    find_scenario(name, desk).with_context(|| format!("unknown scenario {name:?}; see list-scenarios"))
}

fn simulate(scenario: &str, desk: bool, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_scenario(scenario, desk)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let start = std::time::Instant::now();
    let output = run_scenario_detailed(&cfg, threads_from_env()?)?;
    let rows = &output.rows;
    let csv = to_csv_string(rows);
    let invalid = rows.iter().filter(|r| !r.is_valid()).count();
    let mut summary = format!(
        "{}: m={} reps={} stages={} seed={}, {} rows ({} invalid) in {:.1?}",
        cfg.name,
        cfg.m,
        cfg.reps,
        cfg.stages,
        cfg.seed,
        rows.len(),
        invalid,
        start.elapsed()
    );
    if !output.fits.is_empty() {
        let ok: Vec<_> = output.fits.iter().filter_map(|f| f.outcome.as_ref().ok()).collect();
        summary.push_str(&format!(
            "\ndata-driven fits: {} of {} succeeded, {} used the hard:1 fallback, {} EM ascent violations",
            ok.len(),
            output.fits.len(),
            ok.iter().filter(|p| p.fallback_used).count(),
            ok.iter().map(|p| p.em_ascent_violations).sum::<usize>()
        ));
        for f in &output.fits {
            if let Err(reason) = &f.outcome {
                summary.push_str(&format!("\nfit at sweep point {} failed: {reason}", f.point + 1));
            }
        }
    }
    match out {
        Some(path) => {
            fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{summary}");
            println!("wrote {}", path.display());
        }
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn run(data: &Path, method: Method, alpha: f64, model: Option<PathBuf>, stopping: StopArg, out: Option<PathBuf>) -> Result<()> {
    let matrix = read_matrix(data)?;
    let model = match model {
        Some(path) => ModelFile::read(&path).with_context(|| format!("reading model {}", path.display()))?.to_model()?,
        None => {
            let fit = pooled_fit(&matrix, &FitOptions::default()).context("fitting a model to the pooled observations")?;
            println!("fitted on {} pooled observations: p_hat = {:.4}", matrix.values().len(), fit.p_hat);
            fit.two_groups()?
        }
    };
    let stopping = match stopping {
        StopArg::Horizon => StoppingRule::Horizon,
        StopArg::FirstRejection => StoppingRule::FirstRejection,
    };
    let (record, report) = run_on_data(&matrix, &model, method, alpha, stopping)?;
    print!("{report}");
    let rejected: Vec<String> = record
        .decisions
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    if let Some(path) = out {
        fs::write(&path, decisions_csv(&record)).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    } else if !rejected.is_empty() {
        println!("rejected rows: {}", rejected.join(" "));
    }
    Ok(())
}

fn estimate(data: &Path, method: &str, out: Option<PathBuf>) -> Result<()> {
    let z = read_z_scores(data)?;
    let opts = FitOptions {
        recovery: parse_recovery(method)?,
        ..FitOptions::default()
    };
    let fit = amset::estimate::fit_model(&z, &opts)?;
    let prov = &fit.provenance;
    println!("n = {}, p_hat = {:.6}", prov.sample_size, fit.p_hat);
    println!(
        "EM: {} iterations, converged = {}, ascent violations = {}",
        prov.em_iterations, prov.em_converged, prov.em_ascent_violations
    );
    if prov.fallback_used {
        println!("requested recovery found no component; fell back to hard:1");
    }
    println!("f1_hat mean = {:.4}", fit.f1_hat.mean());
    println!("{:>10}  {:>10}", "mean", "weight");
    for (m, w) in fit.f1_hat.components() {
        println!("{m:>10.4}  {w:>10.6}");
    }
    if let Some(path) = out {
        fs::write(&path, ModelFile::from_fitted(&fit).to_toml()).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn plot(
    input: &Path,
    metric: &str,
    out: &Path,
    x_axis: Option<AxisArg>,
    scenario: Option<String>,
    sweep_value: Option<f64>,
    alpha: f64,
) -> Result<()> {
    let file = fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let rows: Vec<_> = read_csv(file)?
        .into_iter()
        .filter(|r| scenario.as_ref().is_none_or(|s| &r.scenario == s))
        .filter(|r| sweep_value.is_none_or(|v| r.sweep_value.is_some_and(|x| (x - v).abs() < 1e-9)))
        .collect();
    let axis = match x_axis {
        Some(AxisArg::Sweep) => XAxis::Sweep,
        Some(AxisArg::Stage) => XAxis::Stage,
        None if !rows.is_empty() && rows.iter().all(|r| r.stage_number().is_some()) => XAxis::Stage,
        None => XAxis::Sweep,
    };
    let svg = emit_svg(&rows, metric, axis, alpha)?;
    fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn list_scenarios() {
    for e in builtin_scenarios() {
        println!(
            "{:<8} {:<62} m={} reps={} stages={} | desk m={} reps={}",
            e.name, e.description, e.full.m, e.full.reps, e.full.stages, e.desk.m, e.desk.reps
        );
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ListScenarios => {
            list_scenarios();
            Ok(())
        }
        Command::Simulate { scenario, desk, seed, out } => simulate(&scenario, desk, seed, out),
        Command::Run { data, method, alpha, model, stopping, out } => run(&data, method, alpha, model, stopping, out),
        Command::Estimate { data, method, out } => estimate(&data, &method, out),
        Command::Plot { input, metric, out, x_axis, scenario, sweep_value, alpha } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                bail!("--alpha must lie in (0, 1)");
            }
            plot(&input, &metric, &out, x_axis, scenario, sweep_value, alpha)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
