use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gigamil::commands::{self, infer::CaseSet};
use gigamil::config::RunConfig;
use gigamil::{with_pool, CliError, Layout, ModelKey, Result};
use gigamil_core::ensemble::Modality;

const DEFAULT_CONFIG: &str = "gigamil.json";

#[derive(Parser)]
#[command(name = "gigamil", version, about = "Multimodal slide + MRI tumor classification pipeline")]
struct Cli {
    /// Run configuration (JSON). Defaults to ./gigamil.json when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed and GIGAMIL_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Wsi,
    Mri,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Wsi => Modality::Wsi,
            ModalityArg::Mri => Modality::Mri,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CasesArg {
    Eval,
    Train,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Write a configuration file with every default filled in.
    Init {
        #[arg(long, default_value = DEFAULT_CONFIG)]
        out: PathBuf,
        /// Reference-scale model sizes and schedules instead of desk scale.
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        force: bool,
    },
    /// Generate synthetic slides, volumes and the train/eval split.
    Synth {
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long)]
        eval_cases: Option<usize>,
    },
    /// Build pyramids, write tiles and manifests, compute channel statistics.
    Tile,
    /// Train slide models and the MRI model; resumes interrupted runs.
    Train {
        /// Only this modality.
        #[arg(long, value_enum)]
        modality: Option<ModalityArg>,
        /// Only the slide model at this magnification (mpp).
        #[arg(long)]
        mpp: Option<f64>,
        /// Epochs for both modalities.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, hide = true)]
        stop_after_epoch: Option<usize>,
    },
    /// Ensemble predictions for a case set.
    Infer {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Restrict the ensemble to these modalities.
        #[arg(long, value_enum, value_delimiter = ',')]
        modalities: Option<Vec<ModalityArg>>,
        #[arg(long, value_enum, default_value = "eval")]
        cases: CasesArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Balanced accuracy, kappa and micro-F1 against ground truth.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None if PathBuf::from(DEFAULT_CONFIG).exists() => RunConfig::load(&PathBuf::from(DEFAULT_CONFIG))?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    Ok(cfg)
}

fn case_failures(failures: &[(String, String)]) -> Result<()> {
    if failures.is_empty() {
        return Ok(());
    }
    for (case, msg) in failures {
        eprintln!("{case}: {msg}");
    }
    Err(CliError::Cases(failures.to_vec()))
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Init { out, reference, force } = &cli.command {
        commands::init(out, *reference, *force)?;
        println!("wrote {}", out.display());
        return Ok(());
    }
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Synth { cases, eval_cases } => {
            if let Some(n) = cases {
                cfg.dataset.cases = *n;
            }
            if let Some(n) = eval_cases {
                cfg.dataset.eval_cases = *n;
            }
        }
        Command::Train { epochs: Some(e), .. } => {
            cfg.wsi.epochs = *e;
            cfg.mri.epochs = *e;
        }
        _ => {}
    }
    cfg.validate()?;
    let jobs = cfg.jobs;
    with_pool(jobs, move || dispatch(&cli.command, &cfg))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(cfg.paths.clone());
    match command {
        Command::Init { .. } => unreachable!("handled before loading the config"),
        Command::Synth { .. } => {
            let r = commands::synth::synth(cfg)?;
            for (label, n) in gigamil_core::ClassLabel::ALL.iter().zip(r.class_counts) {
                println!("{label}\t{n}");
            }
            println!("train\t{}\neval\t{}", r.train.len(), r.eval.len());
            Ok(())
        }
        Command::Tile => {
            let r = commands::tile::tile(cfg)?;
            for (mpp, bins) in &r.summary.histogram {
                println!("foreground tiles per slide at {mpp} mpp");
                for b in bins.iter().filter(|b| b.slides > 0) {
                    println!("  [{:>4}, {:>4})  {:>3} slides  {:>5} tiles", b.lo, b.hi, b.slides, b.tiles);
                }
            }
            for (case, mpp) in &r.summary.flagged {
                eprintln!("{case}: no foreground tiles at {mpp} mpp");
            }
            println!("channel mean {:?} std {:?}", r.stats.mean, r.stats.std);
            case_failures(&r.summary.failures)
        }
        Command::Train {
            modality,
            mpp,
            stop_after_epoch,
            ..
        } => {
            let mut models = commands::train::configured_models(cfg);
            if let Some(m) = modality {
                let m: Modality = (*m).into();
                models.retain(|k| k.modality() == m);
            }
            if let Some(x) = mpp {
                if !cfg.magnifications.contains(x) {
                    return Err(CliError::Config(format!("{x} mpp is not a configured magnification")));
                }
                models.retain(|k| *k == ModelKey::Wsi(*x));
            }
            let r = commands::train::train(cfg, &models, *stop_after_epoch)?;
            for m in &r.models {
                println!(
                    "{}\tepochs {}{}\tsnapshots {} and {}{}",
                    m.key.name(),
                    m.epochs_done,
                    if m.complete { "" } else { " (incomplete)" },
                    m.snapshots.1,
                    m.snapshots.0,
                    if m.degenerate { " (run shorter than the snapshot gap)" } else { "" }
                );
            }
            if let Some(p) = r.manifest {
                println!("ensemble manifest {}", p.display());
            }
            Ok(())
        }
        Command::Infer {
            manifest,
            modalities,
            cases,
            out,
        } => {
            let mut req = commands::infer::InferRequest::defaults(cfg);
            if let Some(m) = manifest {
                req.manifest = m.clone();
            }
            if let Some(ms) = modalities {
                req.modalities = ms.iter().map(|&m| m.into()).collect();
            }
            req.cases = match cases {
                CasesArg::Eval => CaseSet::Eval,
                CasesArg::Train => CaseSet::Train,
                CasesArg::All => CaseSet::All,
            };
            if let Some(o) = out {
                req.out = o.clone();
            }
            let r = commands::infer::infer(cfg, &req)?;
            println!("{} predictions written to {}", r.rows.len(), req.out.display());
            for p in &r.pruned {
                println!("pruned {p}");
            }
            case_failures(&r.failures)
        }
        Command::Evaluate { predictions, truth, out } => {
            let p = predictions.clone().unwrap_or_else(|| layout.predictions());
            let t = truth.clone().unwrap_or_else(|| layout.eval_labels());
            let o = out.clone().unwrap_or_else(|| layout.metrics());
            let m = commands::evaluate::evaluate(&p, &t, &o)?;
            println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
            Ok(())
        }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
