use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use formant_da::data_io::{self, load_manifest, load_model, save_model};
use formant_da::error::{Error, Result};
use formant_da::eval::{mae_report, s_histogram};
use formant_da::features::{apply_normalizer, extract_features};
use formant_da::nn::{LossKind, TrainConfig};
use formant_da::signal::preprocess;
use formant_da::synth::{builtin_domain, generate_corpus, DomainSpec};
use formant_da::training::{train_adaptation, train_core, train_joint, Manifest};
use formant_da::Model;

#[derive(Parser)]
#[command(name = "formant-da", version, about = "Domain-adaptive formant estimation")]
struct Cli {
    /// Seed for all randomized stages
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Log per-epoch training losses and progress
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Mae,
    Mse,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> LossKind {
        match l {
            LossArg::Mae => LossKind::Mae,
            LossArg::Mse => LossKind::Mse,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic vowel corpus with a ground-truth manifest
    Synth {
        /// Built-in domain name (adult_male, child) or a JSON domain file
        #[arg(long)]
        domain: String,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the core network on one manifest
    TrainCore {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, value_enum, default_value_t = LossArg::Mae)]
        loss: LossArg,
    },
    /// Train the adaptation layer on pooled manifests with a frozen core
    TrainAdapt {
        #[arg(long)]
        core: PathBuf,
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train core and adapter jointly from scratch on pooled manifests
    TrainJoint {
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate formants for one audio span; CSV on stdout
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        start: f64,
        #[arg(long)]
        end: f64,
    },
    /// Per-domain MAE report for a model over a manifest
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Selection-gate activation histogram of a DA model over a manifest
    SHist {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_domain(arg: &str) -> Result<DomainSpec> {
    if let Some(d) = builtin_domain(arg) {
        return Ok(d);
    }
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let spec: DomainSpec = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
        return Ok(spec);
    }
    Err(Error::InvalidSpec(format!(
        "unknown domain '{arg}': not a built-in name and not a file"
    )))
}

fn load_manifests(paths: &[PathBuf]) -> Result<Vec<Manifest>> {
    paths.iter().map(|p| load_manifest(p)).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { domain, count, out } => {
            let spec = resolve_domain(&domain)?;
            let manifest = generate_corpus(&spec, count, cli.seed, &out)?;
            println!(
                "wrote {} segments and {} to {}",
                manifest.entries.len(),
                "manifest.csv",
                out.display()
            );
        }
        Command::TrainCore {
            manifest,
            out,
            epochs,
            lr,
            batch,
            loss,
        } => {
            let m = load_manifest(&manifest)?;
            let cfg = TrainConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                seed: cli.seed,
                freeze_core: false,
                loss: loss.into(),
            };
            let model = train_core(&m, &cfg)?;
            save_model(&Model::Core(model), &out)?;
            println!("wrote core model to {}", out.display());
        }
        Command::TrainAdapt {
            core,
            manifest,
            out,
        } => {
            let core_model = load_model(&core)?.core().clone();
            let manifests = load_manifests(&manifest)?;
            let cfg = TrainConfig {
                learning_rate: 1e-3,
                seed: cli.seed,
                freeze_core: true,
                ..TrainConfig::default()
            };
            let da = train_adaptation(&core_model, &manifests, &cfg)?;
            save_model(&Model::Da(da), &out)?;
            println!("wrote DA model to {}", out.display());
        }
        Command::TrainJoint { manifest, out } => {
            let manifests = load_manifests(&manifest)?;
            let cfg = TrainConfig {
                seed: cli.seed,
                ..TrainConfig::default()
            };
            let da = train_joint(&manifests, &cfg)?;
            save_model(&Model::Da(da), &out)?;
            println!("wrote DA model to {}", out.display());
        }
        Command::Estimate {
            model,
            wav,
            start,
            end,
        } => {
            let model = load_model(&model)?;
            let (samples, rate) = data_io::read_wav(&wav)?;
            let lo = (start * rate as f64).round() as usize;
            let hi = ((end * rate as f64).round() as usize).min(samples.len());
            if lo >= hi {
                return Err(Error::InvalidSpec(format!(
                    "span [{start}, {end}) s is empty for {}",
                    wav.display()
                )));
            }
            let seg = preprocess(&samples[lo..hi], rate)?;
            let features = extract_features(&seg)?;
            let c = apply_normalizer(&model.core().normalizer, &features);
            println!("source,f1_hz,f2_hz,f3_hz,f4_hz,gate_s");
            match &model {
                Model::Core(core) => {
                    let f = core.predict_khz(&c)?;
                    println!("{}", format_row("core", &f, None));
                }
                Model::Da(da) => {
                    let (f, g, s) = da.predict_khz(&c)?;
                    println!("{}", format_row("core", &f, None));
                    println!("{}", format_row("adapted", &g, Some(s)));
                }
            }
        }
        Command::Evaluate {
            model,
            manifest,
            out,
        } => {
            let model = load_model(&model)?;
            let m = load_manifest(&manifest)?;
            let report = mae_report(&model, &m)?;
            data_io::atomic_write(&out, report.to_csv().as_bytes())?;
            print!("{}", report.to_table());
            println!("wrote {}", out.display());
        }
        Command::SHist {
            model,
            manifest,
            out,
        } => {
            let da = match load_model(&model)? {
                Model::Da(da) => da,
                Model::Core(_) => {
                    return Err(Error::InvalidSpec(format!(
                        "{}: s-hist needs a DA model, got a core model",
                        model.display()
                    )))
                }
            };
            let m = load_manifest(&manifest)?;
            let hist = s_histogram(&da, &m)?;
            data_io::atomic_write(&out, hist.to_csv().as_bytes())?;
            println!(
                "{} segments, concentration {:.3}, wrote {}",
                hist.total(),
                hist.concentration(),
                out.display()
            );
        }
    }
    Ok(())
}

fn format_row(source: &str, khz: &[f64; 4], gate: Option<f64>) -> String {
    let hz: Vec<String> = khz.iter().map(|f| format!("{:.2}", f * 1000.0)).collect();
    match gate {
        Some(s) => format!("{source},{},{s:.6}", hz.join(",")),
        None => format!("{source},{},", hz.join(",")),
    }
}

fn init_thread_pool() -> Result<()> {
    if let Ok(v) = std::env::var("FORMANT_DA_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("FORMANT_DA_THREADS='{v}' is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    let result = init_thread_pool().and_then(|()| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 4 } else { 3 })
        }
    }
}
