//! `btsc` — train, evaluate, and inspect Bayesian time-series classifiers.
//!
//! Subcommands:
//! * `preprocess` — decimate, demean, remove line noise, bipolar re-reference.
//! * `synth`      — generate a synthetic dataset with known ground truth.
//! * `fit-eval`   — featurize, train with nested selection, cross-validate,
//!   and write report.json / tables.csv / trace.csv / curve.svg / model.json.
//! * `report`     — re-render tables and the curve from an existing report.
//!
//! All numeric parameters live in the JSON config; flags only choose files,
//! the seed override, and the thread count. Every command is deterministic
//! given its config and seed. Exit codes: 1 usage, 2 i/o, 3 data invariant,
//! 4 numerical failure. While a command is writing, a `.partial` marker file
//! exists in the output directory; it is removed on success.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use btsc_core::dsp::{
    bipolar_rereference, decimate_set, demean_set, remove_line_noise_set, write_features_csv,
    HGP_MIN_FS,
};
use btsc_core::error::{Error, Result};
use btsc_core::pipeline::run_fit_eval;
use btsc_core::report::{curve_svg, write_tables_csv, write_trace_csv, EvalReport};
use btsc_core::synth::{generate_trialset, SynthSpec};
use btsc_core::trial_io::{load_dataset, save_dataset, save_model};
use btsc_core::{PreprocessConfig, RunConfig};

#[derive(Parser)]
#[command(name = "btsc", version, about = "Bayesian time-series classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file (for `report`: the report.json to render).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a raw dataset: decimate, demean, remove line noise, re-reference.
    Preprocess(CommonArgs),
    /// Generate a synthetic dataset from a spec file.
    Synth(CommonArgs),
    /// Train, select, and evaluate on a dataset; write the full report.
    FitEval(CommonArgs),
    /// Re-render tables.csv and curve.svg from an existing report.json.
    Report(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (args, run): (&CommonArgs, fn(&CommonArgs) -> Result<()>) = match &cli.command {
        Command::Preprocess(a) => (a, cmd_preprocess),
        Command::Synth(a) => (a, cmd_synth),
        Command::FitEval(a) => (a, cmd_fit_eval),
        Command::Report(a) => (a, cmd_report),
    };
    if let Some(threads) = args.threads {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match with_partial_marker(&args.out, || run(args)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Runs `body` with a `.partial` marker present in the output directory,
/// removing it only on success.
fn with_partial_marker(out: &Path, body: impl FnOnce() -> Result<()>) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let marker = out.join(".partial");
    fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    body()?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_preprocess(args: &CommonArgs) -> Result<()> {
    let cfg = PreprocessConfig::from_file(&args.config)?;
    let input = load_dataset(&cfg.dataset)?;

    let decimated = decimate_set(&input, cfg.target_fs)?;
    let demeaned = demean_set(&decimated)?;
    let denoised = remove_line_noise_set(&demeaned, cfg.line_hz, cfg.max_harmonic_hz)?;
    let rereferenced = bipolar_rereference(&denoised, &cfg.bipolar_pairs)?;

    let manifest = save_dataset(&rereferenced, &args.out)?;

    let mut warnings = Vec::new();
    if rereferenced.fs < HGP_MIN_FS {
        warnings.push(format!(
            "output sampling rate {} Hz is below {HGP_MIN_FS} Hz; high-gamma power \
             extraction will be unavailable",
            rereferenced.fs
        ));
    }
    let provenance = serde_json::json!({
        "input": cfg.dataset,
        "output_manifest": manifest,
        "steps": [
            { "name": "decimate", "target_fs": cfg.target_fs, "input_fs": input.fs },
            { "name": "demean", "scope": "entire recording, per channel" },
            { "name": "remove_line_noise", "line_hz": cfg.line_hz,
              "max_harmonic_hz": cfg.max_harmonic_hz, "band_half_width_hz": 1.0 },
            { "name": "bipolar_rereference", "pairs": cfg.bipolar_pairs },
        ],
        "warnings": warnings,
    });
    let path = args.out.join("provenance.json");
    write_text(
        &path,
        &(serde_json::to_string_pretty(&provenance).unwrap() + "\n"),
    )?;
    println!(
        "preprocessed {} trials x {} channels at {} Hz -> {}",
        rereferenced.n_trials(),
        rereferenced.n_channels(),
        rereferenced.fs,
        args.out.display()
    );
    Ok(())
}

fn cmd_synth(args: &CommonArgs) -> Result<()> {
    let mut spec = SynthSpec::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let set = generate_trialset(&spec)?;
    let manifest = save_dataset(&set, &args.out)?;
    let provenance = serde_json::json!({
        "spec": spec,
        "output_manifest": manifest,
    });
    let path = args.out.join("provenance.json");
    write_text(
        &path,
        &(serde_json::to_string_pretty(&provenance).unwrap() + "\n"),
    )?;
    println!(
        "generated {} trials x {} channels x {} samples -> {}",
        set.n_trials(),
        set.n_channels(),
        set.n_samples(),
        args.out.display()
    );
    Ok(())
}

fn cmd_fit_eval(args: &CommonArgs) -> Result<()> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let set = load_dataset(&cfg.dataset)?;
    let output = run_fit_eval(&set, &cfg.pipeline_config())?;

    write_text(&args.out.join("report.json"), &output.report.to_json()?)?;

    let mut tables = Vec::new();
    write_tables_csv(&mut tables, &output.report)?;
    fs::write(args.out.join("tables.csv"), tables)
        .map_err(|e| Error::io(args.out.join("tables.csv"), e))?;

    let mut trace = Vec::new();
    write_trace_csv(&mut trace, &output.report.selection_trace)?;
    fs::write(args.out.join("trace.csv"), trace)
        .map_err(|e| Error::io(args.out.join("trace.csv"), e))?;

    write_text(&args.out.join("curve.svg"), &curve_svg(&output.report))?;
    save_model(&output.model, &args.out.join("model.json"))?;

    if cfg.dump_features {
        let mut features = Vec::new();
        write_features_csv(&mut features, &output.series)?;
        fs::write(args.out.join("features.csv"), features)
            .map_err(|e| Error::io(args.out.join("features.csv"), e))?;
    }

    println!(
        "accuracy {:.4} ± {:.4}, macro-F1 {:.4} ± {:.4} over {} folds",
        output.report.accuracy_mean,
        output.report.accuracy_std,
        output.report.f1_mean,
        output.report.f1_std,
        output.report.per_fold.len()
    );
    for m in &output.report.selected {
        println!(
            "selected {} [{}] at horizon {}",
            m.channel_name, m.feature_kind, m.d_minimal
        );
    }
    Ok(())
}

fn cmd_report(args: &CommonArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let report =
        EvalReport::from_json(&text).map_err(|e| Error::format(&args.config, e.to_string()))?;

    let mut tables = Vec::new();
    write_tables_csv(&mut tables, &report)?;
    fs::write(args.out.join("tables.csv"), tables)
        .map_err(|e| Error::io(args.out.join("tables.csv"), e))?;
    write_text(&args.out.join("curve.svg"), &curve_svg(&report))?;

    println!(
        "accuracy {:.4} ± {:.4}, macro-F1 {:.4} ± {:.4} over {} folds (seed {})",
        report.accuracy_mean,
        report.accuracy_std,
        report.f1_mean,
        report.f1_std,
        report.per_fold.len(),
        report.config.seed
    );
    for m in &report.selected {
        println!(
            "selected {} [{}] at horizon {}",
            m.channel_name, m.feature_kind, m.d_minimal
        );
    }
    Ok(())
}
