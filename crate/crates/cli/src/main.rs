use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dematel::engine::{run_pipeline, PipelineInput, PipelineOptions, StrengthBounds};
use dematel::io::{self, display4, ScatterPrecision};
use dematel::sensitivity::monte_carlo_stability;
use dematel::{CriteriaSet, NormalizationMode, PerturbationSpec};

/// DEMATEL cause/effect analysis of expert influence surveys.
#[derive(Debug, Parser)]
#[command(name = "dematel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a survey against the criteria manifest.
    Validate {
        #[arg(long)]
        criteria: PathBuf,
        #[arg(long)]
        survey: PathBuf,
    },
    /// Run the full analysis and write report.json, digraph.dot and scatter.csv.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo stability of the cause/effect split; writes stability.csv.
    Sensitivity(SensitivityArgs),
    /// Re-export the digraph of a saved report as DOT.
    Digraph {
        #[arg(long)]
        report: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-export the prominence/relation scatter data of a saved report.
    Scatter {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "table")]
        scatter_precision: ScatterPrecision,
    },
}

#[derive(Debug, Args)]
#[group(id = "input", required = true, multiple = false, args = ["survey", "drm"])]
struct InputArgs {
    /// Long-format survey CSV (expert_id,from,to,score).
    #[arg(long)]
    survey: Option<PathBuf>,
    /// Pre-aggregated direct-relation matrix CSV.
    #[arg(long)]
    drm: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    criteria: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "row-col-max")]
    norm_mode: NormalizationMode,
    /// Cut threshold to use instead of the mean of the total-relation matrix.
    #[arg(long, value_parser = nonnegative)]
    alpha_override: Option<f64>,
    /// Moderate and strong edge bounds, e.g. `1.0,1.1`; tertiles when omitted.
    #[arg(long, value_parser = strength_bounds)]
    strength_bounds: Option<StrengthBounds>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[arg(long, default_value = "table")]
    scatter_precision: ScatterPrecision,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    #[arg(long)]
    criteria: PathBuf,
    #[arg(long)]
    survey: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, value_parser = probability)]
    flip_probability: f64,
    #[arg(long, default_value_t = 1)]
    magnitude: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "row-col-max")]
    norm_mode: NormalizationMode,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

fn nonnegative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("{s:?} is not a finite nonnegative number")),
    }
}

fn probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("{s:?} is not a probability in [0, 1]")),
    }
}

fn strength_bounds(s: &str) -> Result<StrengthBounds, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected MODERATE,STRONG, got {s:?}"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    StrengthBounds::new(parse(a)?, parse(b)?).map_err(|e| e.to_string())
}

fn read(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {what} file {}", path.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_criteria(path: &Path) -> Result<CriteriaSet> {
    io::parse_criteria_manifest(&read(path, "criteria")?)
        .with_context(|| format!("in criteria file {}", path.display()))
}

fn validate(criteria: &Path, survey: &Path) -> Result<()> {
    let cs = load_criteria(criteria)?;
    let text = read(survey, "survey")?;
    match io::parse_survey_csv_all(&text, &cs) {
        Ok(panel) => {
            for r in &panel {
                let scores: Vec<u32> = (0..cs.len())
                    .flat_map(|i| (0..cs.len()).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|(i, j)| u32::from(r.score(i, j).value()))
                    .collect();
                let mean = f64::from(scores.iter().sum::<u32>()) / scores.len() as f64;
                println!(
                    "{}: {} cells, mean score {}",
                    r.expert_id(),
                    scores.len(),
                    display4(mean)
                );
            }
            println!("{} experts, {} criteria, complete", panel.len(), cs.len());
            Ok(())
        }
        Err(errors) => {
            for e in &errors {
                eprintln!("{}: {e}", survey.display());
            }
            bail!("{} problem(s) in {}", errors.len(), survey.display())
        }
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let cs = load_criteria(&args.criteria)?;
    let options = PipelineOptions {
        normalization: args.norm_mode,
        alpha_override: args.alpha_override,
        strength_bounds: args.strength_bounds,
    };
    let result = match (&args.input.survey, &args.input.drm) {
        (Some(path), _) => {
            let panel = io::parse_survey_csv(&read(path, "survey")?, &cs)
                .with_context(|| format!("in survey file {}", path.display()))?;
            run_pipeline(PipelineInput::Panel(&panel), &cs, &options)?
        }
        (None, Some(path)) => {
            let drm = io::parse_drm_csv(&read(path, "matrix")?, &cs)
                .with_context(|| format!("in matrix file {}", path.display()))?;
            run_pipeline(PipelineInput::Drm(&drm), &cs, &options)?
        }
        (None, None) => unreachable!("clap requires one input"),
    };

    fs::create_dir_all(&args.output_dir)
        .with_context(|| format!("creating {}", args.output_dir.display()))?;
    write(
        &args.output_dir,
        "report.json",
        &io::write_report_json(&result),
    )?;
    write(
        &args.output_dir,
        "digraph.dot",
        &io::write_dot(&result.edges, &result.criteria, &result.records),
    )?;
    write(
        &args.output_dir,
        "scatter.csv",
        &io::write_scatter_csv(&result.records, args.scatter_precision),
    )?;

    println!("s = {}", result.nrm.divisor());
    println!("alpha = {}", result.alpha);
    if result.cut_threshold != result.alpha {
        println!("cut threshold = {}", result.cut_threshold);
    }
    println!("code D R D+R D-R group");
    for r in &result.records {
        println!(
            "{} {} {} {} {} {}",
            r.criterion.code,
            display4(r.d),
            display4(r.r),
            display4(r.prominence),
            display4(r.relation),
            r.group
        );
    }
    println!("edges = {}", result.edges.len());
    Ok(())
}

fn sensitivity(args: &SensitivityArgs) -> Result<()> {
    let cs = load_criteria(&args.criteria)?;
    let panel = io::parse_survey_csv(&read(&args.survey, "survey")?, &cs)
        .with_context(|| format!("in survey file {}", args.survey.display()))?;
    let trials = usize::try_from(args.trials).context("trial count does not fit in memory")?;
    let spec = PerturbationSpec::new(args.flip_probability, args.magnitude, args.seed, trials)?;
    let report = monte_carlo_stability(&panel, &cs, &spec, args.norm_mode)?;
    fs::create_dir_all(&args.output_dir)
        .with_context(|| format!("creating {}", args.output_dir.display()))?;
    write(
        &args.output_dir,
        "stability.csv",
        &io::write_stability_csv(&report),
    )?;
    println!(
        "{} trials, {} degenerate",
        report.trials_run, report.degenerate_trials
    );
    for (code, p) in report.codes.iter().zip(&report.cause_probability) {
        println!("{code} {p:?}");
    }
    Ok(())
}

fn emit(output: Option<&Path>, contents: &str) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn load_report(path: &Path) -> Result<dematel::AnalysisResult> {
    io::parse_report_json(&read(path, "report")?)
        .with_context(|| format!("in report {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { criteria, survey } => validate(&criteria, &survey),
        Command::Analyze(args) => analyze(&args),
        Command::Sensitivity(args) => sensitivity(&args),
        Command::Digraph { report, output } => {
            let r = load_report(&report)?;
            emit(
                output.as_deref(),
                &io::write_dot(&r.edges, &r.criteria, &r.records),
            )
        }
        Command::Scatter {
            report,
            output,
            scatter_precision,
        } => {
            let r = load_report(&report)?;
            emit(
                output.as_deref(),
                &io::write_scatter_csv(&r.records, scatter_precision),
            )
        }
    }
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
