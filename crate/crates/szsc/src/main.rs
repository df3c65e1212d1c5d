use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use szsc::archive::{load_model, save_model};
use szsc::cv::{staged_search, SearchPlan};
use szsc::error::{CliError, Result};
use szsc::io::{
    atomic_write, format_predictions, load_dataset, read_external, read_labels, read_params, read_predictions,
    save_dataset, Config, PredictionRow,
};
use szsc::plot::rcc_svg;
use szsc::synth::{synth_generate, SynthConfig};
use szsc_core::inference::{combine_external, predict_batch};
use szsc_core::{rcc, AugmentedModel, Dataset};

#[derive(Parser)]
#[command(name = "szsc", version, about = "Selective zero-shot classification with residual attributes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on the seen classes of a data directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every sample of a data directory among its unseen classes.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the value stored with the model.
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Risk-coverage curve and AURCC of a predictions file.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out_curve: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Which column ranks the samples.
        #[arg(long, value_enum, default_value_t = Score::Conf)]
        score: Score,
    },
    /// Class-wise cross-validated hyperparameter search.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine an external classifier's confidence with the residual confidence.
    Combine {
        #[arg(long)]
        pred_ext: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Written to standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a planted synthetic problem as `train/` and `test/` data directories.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// `key value` overrides of the generator defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Score {
    Conf,
    ConfD,
    ConfR,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            return fail(&CliError::Usage(first.to_string()));
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace('\n', " ");
    eprintln!("error: {}: {msg}", e.code());
    ExitCode::FAILURE
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { data, params, out } => train(&data, &params, &out),
        Command::Predict {
            model,
            data,
            lambda,
            out,
        } => {
            let model = load_model(&model)?;
            let data = load_dataset(&data)?;
            let lambda = lambda.unwrap_or(model.params.lambda);
            let rows = predict_rows(&model, &data, lambda)?;
            atomic_write(&out, format_predictions(&rows).as_bytes())
        }
        Command::Evaluate {
            pred,
            labels,
            out_curve,
            svg,
            score,
        } => evaluate(&pred, &labels, &out_curve, svg.as_deref(), score),
        Command::Cv { data, plan, out } => {
            let data = load_dataset(&data)?;
            let plan = SearchPlan::from_config(&Config::read(&plan)?)?;
            let result = staged_search(&data, &plan)?;
            atomic_write(&out, result.to_text().as_bytes())
        }
        Command::Combine {
            pred_ext,
            model,
            data,
            lambda,
            out,
        } => combine(&pred_ext, &model, &data, lambda, out.as_deref()),
        Command::Synth { out, config, seed } => {
            let mut cfg = match config {
                Some(p) => SynthConfig::from_config(&Config::read(&p)?)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let s = synth_generate(&cfg)?;
            save_dataset(&out.join("train"), &s.train())?;
            save_dataset(&out.join("test"), &s.test())
        }
    }
}

fn train(data: &Path, params: &Path, out: &Path) -> Result<()> {
    let data = load_dataset(data)?;
    let params = read_params(params)?;
    let report = AugmentedModel::train(&data, &params)?;
    let mut trace = String::from("stage,sweep,value\n");
    for (stage, values) in [
        ("lad", &report.lad_trace),
        ("residual_surrogate", &report.surrogate_trace),
        ("residual_objective", &report.objective_trace),
    ] {
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(trace, "{stage},{},{v:e}", i + 1);
        }
    }
    save_model(out, &report.model, &[("trace.csv", trace)])
}

fn predict_rows(model: &AugmentedModel, data: &Dataset, lambda: f64) -> Result<Vec<PredictionRow>> {
    let unseen = data.unseen_sorted();
    if unseen.is_empty() {
        return Err(CliError::Invalid("data directory lists no unseen classes".into()));
    }
    let reports = predict_batch(model, &data.features, &data.class_attr, &unseen, lambda)?;
    Ok(reports
        .iter()
        .enumerate()
        .map(|(i, r)| PredictionRow::from_report(i, r))
        .collect())
}

fn evaluate(pred: &Path, labels: &Path, out_curve: &Path, svg: Option<&Path>, score: Score) -> Result<()> {
    let rows = read_predictions(pred)?;
    let labels = read_labels(labels)?;
    let mut conf = Vec::with_capacity(rows.len());
    let mut correct = Vec::with_capacity(rows.len());
    for r in &rows {
        let truth = labels.get(r.sample).ok_or_else(|| {
            CliError::Invalid(format!("sample {} has no label ({} labels)", r.sample, labels.len()))
        })?;
        conf.push(match score {
            Score::Conf => r.conf,
            Score::ConfD => r.conf_d,
            Score::ConfR => r.conf_r,
        });
        correct.push(r.predicted == *truth);
    }
    let curve = rcc(&conf, &correct)?;
    let mut csv = String::from("coverage,risk\n");
    for p in &curve.points {
        let _ = writeln!(csv, "{},{}", p.coverage, p.risk);
    }
    let _ = writeln!(csv, "AURCC,{}", curve.aurcc);
    atomic_write(out_curve, csv.as_bytes())?;
    if let Some(path) = svg {
        let label = pred.file_name().map_or("predictions".into(), |n| n.to_string_lossy());
        atomic_write(path, rcc_svg(&[(&label, &curve)]).as_bytes())?;
    }
    println!("AURCC {}", curve.aurcc);
    Ok(())
}

fn combine(pred_ext: &Path, model: &Path, data: &Path, lambda: f64, out: Option<&Path>) -> Result<()> {
    let external = read_external(pred_ext)?;
    let model = load_model(model)?;
    let data = load_dataset(data)?;
    let ours = predict_rows(&model, &data, model.params.lambda)?;
    let rows = external
        .iter()
        .map(|&(sample, predicted, conf_ext)| {
            let r = ours.get(sample).ok_or_else(|| {
                CliError::Invalid(format!("external sample {sample} is not in the data directory"))
            })?;
            Ok(PredictionRow {
                sample,
                predicted,
                conf_d: conf_ext,
                conf_r: r.conf_r,
                conf: combine_external(conf_ext, r.conf_r, lambda)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let text = format_predictions(&rows);
    match out {
        Some(p) => atomic_write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
