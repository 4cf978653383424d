//! `radhop` command-line tool: phantom cohorts, training, prediction,
//! evaluation and model size reporting.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 degenerate
//! input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use radhop::cohort::{phantom_cohort, read_cohort, read_manifest, study_dir, write_cohort};
use radhop::config::RunConfig;
use radhop::outputs::{evaluate_predictions, write_prediction, write_report};
use radhop::phantom::PhantomSpec;
use radhop::pipeline::{predict_study, train_pipeline, TrainReport};
use radhop::volume::load_study_dir;
use radhop::{Error, Model64, Result};

const CONFIG_ECHO: &str = "config.txt";
const TRAIN_REPORT: &str = "train_report.txt";

#[derive(Parser)]
#[command(name = "radhop", version, about = "Two-stage lesion detection on bi-parametric MRI")]
struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with a manifest.
    Phantom(PhantomArgs),
    /// Train both stages on a cohort and write one model file.
    Train(TrainArgs),
    /// Run a model on one study or on every study of a cohort.
    Predict(PredictArgs),
    /// Score prediction heatmaps against a cohort's lesion masks.
    Evaluate(EvaluateArgs),
    /// Print the parameter count and per-site operation count of a model.
    Params(ParamsArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// `key = value` phantom spec; defaults apply to missing keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` run config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    out_model: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["study", "cohort"]))]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// A study directory; outputs go straight into `--out`.
    #[arg(long)]
    study: Option<PathBuf>,
    /// A cohort directory; outputs go into `--out/<case>/`.
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Skip stage-2 refinement.
    #[arg(long)]
    stage1_only: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory with one prediction sub-directory per case.
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    cohort: PathBuf,
    /// Output directory for the report files.
    #[arg(long)]
    report: PathBuf,
    /// Run config supplying the detection keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    model: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::parse(&read_text(p)?).map_err(|e| e.within("config")),
        None => RunConfig::parse(""),
    }
}

fn phantom(a: &PhantomArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => PhantomSpec::parse(&read_text(p)?).map_err(|e| e.within("phantom"))?,
        None => PhantomSpec::default(),
    };
    let studies = phantom_cohort(&spec, a.count).map_err(|e| e.within("phantom"))?;
    write_cohort(&a.out, &studies).map_err(|e| e.within("volume-io"))?;
    write_text(&a.out.join("phantom_spec.txt"), &spec.to_text())?;
    println!("wrote {} studies to {}", studies.len(), a.out.display());
    Ok(())
}

fn report_text(r: &TrainReport) -> String {
    let s = &r.stage1;
    let bins: Vec<String> = s.mined_bins.iter().map(|b| b.to_string()).collect();
    [
        ("train_studies", r.train_studies.to_string()),
        ("holdout_studies", r.holdout_studies.to_string()),
        ("positives", s.positives.to_string()),
        ("step1_negatives", s.step1_negatives.to_string()),
        ("mining_pool", s.mining_pool.to_string()),
        ("step2_negatives", s.step2_negatives.to_string()),
        ("mined_bins", bins.join(",")),
        ("calibration_units", r.calibration_units.to_string()),
        ("threshold", r.calibration.threshold.to_string()),
        ("calibration_tpr", r.calibration.tpr.to_string()),
        ("calibration_fpr", r.calibration.fpr.to_string()),
        ("stage2_candidates", r.stage2_candidates.to_string()),
        ("stage2_positives", r.stage2_positives.to_string()),
        ("parameter_count", r.parameter_count.to_string()),
    ]
    .iter()
    .map(|(k, v)| format!("{k} = {v}\n"))
    .collect()
}

fn train(a: &TrainArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let studies = read_cohort(&a.cohort).map_err(|e| e.within("volume-io"))?;
    info!("loaded {} studies", studies.len());
    let (model, report) = train_pipeline::<f64>(&studies, &config)?;
    let dir = a.out_model.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.save(&a.out_model)?;
    // Reload to prove the file passes the self-check.
    let back = Model64::load(&a.out_model).map_err(|e| e.within("container"))?;
    let text = report_text(&report);
    write_text(&dir.join(CONFIG_ECHO), &config.to_text())?;
    write_text(&dir.join(TRAIN_REPORT), &text)?;
    print!("{text}");
    println!("recounted_parameters = {}", back.parameter_count());
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let model = Model64::load(&a.model).map_err(|e| e.within("container"))?;
    let jobs: Vec<(PathBuf, PathBuf)> = match (&a.study, &a.cohort) {
        (Some(study), _) => vec![(study.clone(), a.out.clone())],
        (None, Some(cohort)) => read_manifest(cohort)
            .map_err(|e| e.within("volume-io"))?
            .into_iter()
            .map(|e| (study_dir(cohort, &e.case), a.out.join(&e.case)))
            .collect(),
        (None, None) => unreachable!("clap requires an input"),
    };
    for (input, out) in &jobs {
        let study = load_study_dir(input).map_err(|e| e.within("volume-io"))?;
        let p = predict_study(&model, &study, a.stage1_only)?;
        write_prediction(out, &study, &p, model.config.stage2.label_iou).map_err(|e| e.within("volume-io"))?;
        info!("{}: {} candidates", study.patient_id, p.candidates.len());
    }
    write_text(&a.out.join(CONFIG_ECHO), &model.config.to_text())?;
    println!("wrote predictions for {} studies to {}", jobs.len(), a.out.display());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let report = evaluate_predictions(&a.pred_dir, &a.cohort, &config.detection).map_err(|e| e.within("metrics"))?;
    write_report(&a.report, &report)?;
    write_text(&a.report.join(CONFIG_ECHO), &config.to_text())?;
    println!("ap = {}\nauroc = {}\nscore = {}", report.ap, report.auroc, report.score);
    Ok(())
}

fn params(a: &ParamsArgs) -> Result<()> {
    let model = Model64::load(&a.model).map_err(|e| e.within("container"))?;
    let s1 = &model.stage1;
    for (seq, r) in ["t2", "adc", "dwi"].iter().zip(&s1.radhop) {
        println!("radhop_{seq}_parameters = {}", r.count_parameters());
    }
    println!("stage1_parameters = {}", s1.parameter_count());
    println!("stage2_parameters = {}", model.stage2.parameter_count());
    println!("total_parameters = {}", model.parameter_count());
    println!("stage1_flops_per_site = {}", s1.flops_per_site());
    println!(
        "stage2_classifier_flops_per_candidate = {}",
        model.stage2.classifier.flops_per_prediction()
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Placement { .. } => 2,
        e if e.is_degenerate() => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("radhop: error: cannot start thread pool: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Phantom(a) => phantom(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Params(a) => params(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("radhop: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
