use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use tpg_detector::detector::detect;
use tpg_detector::harness::{load_params, parse_experiment_with, run_experiment, Experiment};
use tpg_detector::{Error, Result};

#[derive(Parser)]
#[command(name = "tpg", version, about = "Trainable projected-gradient MIMO detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// Experiment JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving the CSV and params files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the seed stored in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config field, e.g. `--set train.t_max=30` or `--set snr_db=[0,10]`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a detector (`"kind": "train"`).
    Train(ExperimentArgs),
    /// Detect one instance given as `{"h": [[...], ...], "y": [...]}`.
    Detect {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        instance: PathBuf,
    },
    /// BER against SNR for several detectors (`"kind": "ber-sweep"`).
    BerSweep(ExperimentArgs),
    /// MSE per iteration (`"kind": "mse-curve"`).
    MseCurve(ExperimentArgs),
    /// Trained against grid-searched step sizes on the toy problem (`"kind": "toy"`).
    Toy(ExperimentArgs),
    /// Run any experiment file.
    Run(ExperimentArgs),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Instance {
    h: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn run_file(args: &ExperimentArgs, expected: Option<&str>) -> Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let mut exp: Experiment = parse_experiment_with(&text, &args.overrides)?;
    if let Some(kind) = expected {
        if exp.kind() != kind {
            return Err(Error::InvalidConfig {
                field: "kind".into(),
                reason: format!("expected `{kind}`, found `{}`", exp.kind()),
            });
        }
    }
    if let Some(seed) = args.seed {
        exp.set_seed(seed);
    }
    let base = args.config.parent().unwrap_or(Path::new("."));
    let outputs = run_experiment(&exp, base)?;
    fs::create_dir_all(&args.out_dir)?;
    for out in outputs {
        let path = args.out_dir.join(&out.file_name);
        fs::write(&path, out.body)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn run_detect(params: &Path, instance: &Path) -> Result<()> {
    let (p, _) = load_params(&fs::read_to_string(params)?)?;
    let inst: Instance = serde_json::from_str(&fs::read_to_string(instance)?)
        .map_err(|e| Error::MalformedFile(format!("line {} column {}: {e}", e.line(), e.column())))?;
    let rows = inst.h.len();
    let cols = inst.h.first().map_or(0, Vec::len);
    if rows == 0 || inst.h.iter().any(|r| r.len() != cols) || inst.y.len() != rows {
        return Err(Error::ShapeMismatch("h must be rectangular with one row per entry of y".into()));
    }
    let h = DMatrix::from_fn(rows, cols, |i, j| inst.h[i][j]);
    let y = DVector::from_vec(inst.y);
    let x_hat = detect(&p, &h, &y)?;
    println!("index,x_hat");
    for (k, v) in x_hat.iter().enumerate() {
        println!("{k},{v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => run_file(a, Some("train")),
        Command::Detect { params, instance } => run_detect(params, instance),
        Command::BerSweep(a) => run_file(a, Some("ber-sweep")),
        Command::MseCurve(a) => run_file(a, Some("mse-curve")),
        Command::Toy(a) => run_file(a, Some("toy")),
        Command::Run(a) => run_file(a, None),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
