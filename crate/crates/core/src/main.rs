use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vvq::model::Family;
use vvq::pipeline::{
    cmd_compare_models, cmd_compare_rounds, cmd_drcurve, cmd_extract, cmd_fit, cmd_gap,
    cmd_synth_speech, cmd_synth_vmm, RoundVariation, Settings,
};
use vvq::{Error, Result};

/// PDF-optimized vector-quantization analysis of LSF speech parameters.
#[derive(Debug, Parser)]
#[command(name = "vvq", version, about)]
struct Cli {
    /// Seed for every random choice (EM initialization, splits, sampling).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// File of `key=value` settings applied before command-line options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path (file or directory, depending on the command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct RateArgs {
    /// Lowest rate of the grid, bits per vector.
    #[arg(long)]
    rate_min: Option<f64>,
    /// Highest rate of the grid, bits per vector.
    #[arg(long)]
    rate_max: Option<f64>,
    /// Grid spacing in bits.
    #[arg(long)]
    rate_step: Option<f64>,
    /// Quantizer constant: unity, sphere_bound or zador_gaussian.
    #[arg(long)]
    c_mode: Option<String>,
    /// vMF entropy formula: unit_mean or corrected.
    #[arg(long)]
    entropy_mode: Option<String>,
}

#[derive(Debug, Args, Default)]
struct EmArgs {
    /// Number of mixture components.
    #[arg(long, short = 'I')]
    components: Option<usize>,
    /// Convergence tolerance on the mean log-likelihood.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Speech-like WAV files.
    Speech,
    /// LSF corpus sampled from a reference vMF mixture.
    Vmm,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract LSF vectors from a directory of WAV files.
    Extract {
        /// Directory containing the WAV corpus.
        input: PathBuf,
    },
    /// Fit a mixture model to an LSF corpus.
    Fit {
        /// LSF text file.
        input: PathBuf,
        /// Model family.
        #[arg(long, value_parser = parse_family)]
        family: Family,
        #[command(flatten)]
        em: EmArgs,
    },
    /// Compute a distortion-rate curve for a stored model.
    Drcurve {
        /// Model JSON file.
        model: PathBuf,
        #[command(flatten)]
        rate: RateArgs,
    },
    /// Compare D-R curves of stored models, or refit families on a corpus over several rounds.
    Compare {
        /// Model JSON files (at least two) when not refitting.
        models: Vec<PathBuf>,
        /// Refit on this LSF corpus instead of loading models.
        #[arg(long, conflicts_with = "models")]
        lsf: Option<PathBuf>,
        /// Families to refit, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_family, default_value = "vmm,gmm,dmm")]
        families: Vec<Family>,
        /// Number of fit-and-curve rounds to average.
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        /// Also bootstrap-resample the training set each round.
        #[arg(long)]
        bootstrap: bool,
        #[command(flatten)]
        rate: RateArgs,
        #[command(flatten)]
        em: EmArgs,
    },
    /// Entropy gap of a vMF mixture.
    Gap {
        /// Model JSON file.
        model: PathBuf,
        /// Monte-Carlo sample count.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, value_enum, default_value = "speech")]
        kind: SynthKind,
        /// Number of WAV files (speech).
        #[arg(long, default_value_t = 4)]
        files: usize,
        /// Duration of each file in seconds (speech).
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        /// Sample rate in Hz (speech).
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
        /// Number of LSF vectors (vmm).
        #[arg(long, default_value_t = 200_000)]
        vectors: usize,
        /// LPC order (vmm).
        #[arg(long, default_value_t = 16)]
        order: usize,
    },
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn apply_rate(settings: &mut Settings, rate: &RateArgs) -> Result<()> {
    let pairs = [
        ("rate_min", rate.rate_min.map(|v| v.to_string())),
        ("rate_max", rate.rate_max.map(|v| v.to_string())),
        ("rate_step", rate.rate_step.map(|v| v.to_string())),
        ("c_mode", rate.c_mode.clone()),
        ("entropy_mode", rate.entropy_mode.clone()),
    ];
    apply_pairs(settings, pairs)
}

fn apply_em(settings: &mut Settings, em: &EmArgs) -> Result<()> {
    let pairs = [
        ("components", em.components.map(|v| v.to_string())),
        ("tol", em.tol.map(|v| v.to_string())),
        ("max_iter", em.max_iter.map(|v| v.to_string())),
    ];
    apply_pairs(settings, pairs)
}

fn apply_pairs<const N: usize>(
    settings: &mut Settings,
    pairs: [(&str, Option<String>); N],
) -> Result<()> {
    for (key, value) in pairs {
        if let Some(v) = value {
            settings.set(key, &v)?;
        }
    }
    Ok(())
}

fn require_out(out: &Option<PathBuf>, command: &str) -> Result<PathBuf> {
    out.clone()
        .ok_or_else(|| Error::Config(format!("`{command}` needs --out <path>")))
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        settings.apply_file(path)?;
    }
    let seed = cli.seed;
    match &cli.command {
        Command::Extract { input } => {
            let out = require_out(&cli.out, "extract")?;
            let summary = cmd_extract(input, &out, &settings, seed)?;
            print_json(&summary, None)
        }
        Command::Fit { input, family, em } => {
            apply_em(&mut settings, em)?;
            let out = require_out(&cli.out, "fit")?;
            let summary = cmd_fit(input, *family, &out, &settings, seed)?;
            print_json(&summary, None)
        }
        Command::Drcurve { model, rate } => {
            apply_rate(&mut settings, rate)?;
            let out = require_out(&cli.out, "drcurve")?;
            cmd_drcurve(model, &out, &settings, seed)?;
            Ok(())
        }
        Command::Compare {
            models,
            lsf,
            families,
            rounds,
            bootstrap,
            rate,
            em,
        } => {
            apply_rate(&mut settings, rate)?;
            apply_em(&mut settings, em)?;
            let out = require_out(&cli.out, "compare")?;
            let cmp = match lsf {
                Some(lsf) => {
                    let variation = if *bootstrap {
                        RoundVariation::SeedAndBootstrap
                    } else {
                        RoundVariation::Seed
                    };
                    cmd_compare_rounds(lsf, families, *rounds, variation, &out, &settings, seed)?
                }
                None => {
                    if *rounds > 1 {
                        return Err(Error::Config(
                            "--rounds needs --lsf to refit the models".into(),
                        ));
                    }
                    cmd_compare_models(models, &out, &settings, seed)?
                }
            };
            print!("{}", cmp.table());
            Ok(())
        }
        Command::Gap { model, samples } => {
            let report = cmd_gap(model, samples.unwrap_or(settings.gap_samples), seed)?;
            print_json(&report, cli.out.as_deref())
        }
        Command::Synth {
            kind,
            files,
            seconds,
            sample_rate,
            vectors,
            order,
        } => {
            let out = require_out(&cli.out, "synth")?;
            match kind {
                SynthKind::Speech => {
                    for path in cmd_synth_speech(&out, *files, *seconds, *sample_rate, seed)? {
                        println!("{}", path.display());
                    }
                }
                SynthKind::Vmm => {
                    cmd_synth_vmm(&out, *vectors, *order, seed)?;
                    println!("{}", out.display());
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
