use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use taskport::harness::{ablate_seqalign, ablation_csv, run_experiment, write_fixtures, ExperimentConfig};
use taskport::linalg::DEFAULT_RCOND;
use taskport::model::io::{load_calibration, load_checkpoint, save_checkpoint};
use taskport::model::Checkpoint;
use taskport::seqalign::AlignStrategy;
use taskport::transport::{depth_expand, transport_model_with, Method, TransportConfig, DEFAULT_TIKHONOV_LAMBDA};
use taskport::{Error, Exec};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Transport task vectors between models of different widths.
///
/// Logging is controlled by TASKPORT_LOG (error, info or debug).
#[derive(Debug, Parser)]
#[command(name = "taskport", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Move θ_A^ft − θ_A onto θ_B and write θ_B + α τ_B.
    Transport(TransportArgs),
    /// Run an experiment config and emit the result JSON.
    Experiment {
        /// Experiment config (JSON).
        config: PathBuf,
        /// Result path; `-` writes to stdout. Defaults to the config's
        /// output_path, else stdout.
        #[arg(long)]
        output: Option<String>,
    },
    /// Rerun an experiment under every sequence-alignment strategy and emit
    /// a CSV table.
    AblateSeqalign {
        /// Experiment config (JSON).
        config: PathBuf,
        /// CSV path; `-` writes to stdout.
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Write deterministic demo checkpoints, calibration data and configs.
    MakeFixtures {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (created if missing).
        #[arg(long, default_value = "fixtures")]
        outdir: PathBuf,
    },
    /// Print a checkpoint's header as JSON.
    Inspect { checkpoint: PathBuf },
}

#[derive(Debug, clap::Args)]
struct TransportArgs {
    /// Source base checkpoint θ_A.
    #[arg(long)]
    theta_a: PathBuf,
    /// Fine-tuned source checkpoint θ_A^ft.
    #[arg(long)]
    theta_a_ft: PathBuf,
    /// Target base checkpoint θ_B.
    #[arg(long)]
    theta_b: PathBuf,
    /// Paired calibration inputs (TPC1).
    #[arg(long)]
    calib: PathBuf,
    /// One of theseus, pinv, pinv-tikh, zero-pad, random, random-source.
    #[arg(long, default_value = "theseus", value_parser = parse_method)]
    method: Method,
    /// One of mean, interp1d, interp2d.
    #[arg(long, default_value = "interp2d", value_parser = parse_strategy)]
    seq_align: AlignStrategy,
    /// Scale of the transported update.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    /// Relative singular value cutoff for pseudo-inverses.
    #[arg(long, default_value_t = DEFAULT_RCOND)]
    rcond: f64,
    /// Tikhonov strength, relative to each Gram matrix's mean diagonal.
    #[arg(long, default_value_t = DEFAULT_TIKHONOV_LAMBDA)]
    lambda: f64,
    /// Seed of the random baselines.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Interpolate the source stack to the target's depth first.
    #[arg(long)]
    depth_expand: bool,
    /// Worker threads for per-layer transport; 1 runs sequentially.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output checkpoint path.
    #[arg(long)]
    output: PathBuf,
    /// Report path; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    report: String,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<AlignStrategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with a stable kind for the `kind: message` line.
struct Failure {
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn emit(dest: &str, text: &str) -> Result<(), Failure> {
    if dest == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes())?;
        out.flush()?;
    } else {
        std::fs::write(dest, text)?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<Checkpoint, Failure> {
    load_checkpoint(path).map_err(|e| Failure {
        kind: e.kind(),
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_transport(a: TransportArgs) -> Result<(), Failure> {
    let cfg = TransportConfig {
        strategy: a.seq_align,
        method: a.method,
        lambda: a.lambda,
        rcond: a.rcond,
        seed: a.seed,
    };
    cfg.validate()?;
    if a.jobs == 0 {
        return Err(Error::InvalidArgument("--jobs must be >= 1".into()).into());
    }
    let mut theta_a = load(&a.theta_a)?;
    let mut theta_a_ft = load(&a.theta_a_ft)?;
    let theta_b = load(&a.theta_b)?;
    let calib = load_calibration(&a.calib)?;
    if a.depth_expand && theta_a.depth() != theta_b.depth() {
        log::info!(
            "expanding source from {} to {} layers",
            theta_a.depth(),
            theta_b.depth()
        );
        theta_a = depth_expand(&theta_a, theta_b.depth())?;
        theta_a_ft = depth_expand(&theta_a_ft, theta_b.depth())?;
    }

    let run = |exec| {
        transport_model_with(
            &theta_a,
            &theta_a_ft,
            &theta_b,
            &calib.inputs_a,
            &calib.inputs_b,
            &cfg,
            a.alpha,
            exec,
        )
    };
    let (out, report) = if a.jobs > 1 {
        run_pooled(a.jobs, run)?
    } else {
        run(Exec::Sequential)?
    };
    save_checkpoint(&out, &a.output)?;

    let src: f64 = report.layers.iter().map(|l| l.tau_norm_src.powi(2)).sum::<f64>().sqrt();
    let dst: f64 = report.layers.iter().map(|l| l.tau_norm_dst.powi(2)).sum::<f64>().sqrt();
    let doc = json!({
        "method": cfg.method,
        "seq_align": cfg.strategy,
        "alpha": a.alpha,
        "depth_expanded": a.depth_expand,
        "output": a.output,
        "config": report.config,
        "layers": report.layers,
        "tau_norm_src": src,
        "tau_norm_dst": dst,
        "norm_gap": (src - dst).abs(),
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    text.push('\n');
    emit(&a.report, &text)
}

#[cfg(feature = "parallel")]
fn run_pooled<T>(jobs: usize, run: impl FnOnce(Exec) -> taskport::Result<T> + Send) -> Result<T, Failure>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| run(Exec::Parallel))?)
}

#[cfg(not(feature = "parallel"))]
fn run_pooled<T>(_jobs: usize, run: impl FnOnce(Exec) -> taskport::Result<T>) -> Result<T, Failure> {
    log::warn!("built without the parallel feature; --jobs is ignored");
    Ok(run(Exec::Sequential)?)
}

fn cmd_experiment(config: &Path, output: Option<String>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config)?;
    let result = run_experiment(&cfg)?;
    let mut text = serde_json::to_string_pretty(&result).map_err(Error::from)?;
    text.push('\n');
    let dest = output.or_else(|| cfg.output_path.clone()).unwrap_or_else(|| "-".into());
    emit(&dest, &text)
}

fn cmd_ablate(config: &Path, output: &str) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config)?;
    let rows = ablate_seqalign(&cfg)?;
    emit(output, &ablation_csv(&rows)?)
}

fn cmd_make_fixtures(seed: u64, outdir: &Path) -> Result<(), Failure> {
    for path in write_fixtures(seed, outdir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<(), Failure> {
    let ckpt = load(path)?;
    let params: usize = ckpt
        .specs()
        .iter()
        .map(|s| s.d_in * s.d_out + if s.has_bias { s.d_out } else { 0 })
        .sum();
    let doc = json!({
        "depth": ckpt.depth(),
        "parameters": params,
        "layers": ckpt.specs(),
        "meta": ckpt.meta,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    text.push('\n');
    emit("-", &text)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TASKPORT_LOG", "error")).init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("usage: {}", one_line(first));
            return ExitCode::FAILURE;
        }
    };

    let res = match cli.command {
        Command::Transport(a) => cmd_transport(a),
        Command::Experiment { config, output } => cmd_experiment(&config, output),
        Command::AblateSeqalign { config, output } => cmd_ablate(&config, &output),
        Command::MakeFixtures { seed, outdir } => cmd_make_fixtures(seed, &outdir),
        Command::Inspect { checkpoint } => cmd_inspect(&checkpoint),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}: {}", f.kind, one_line(&f.message));
            ExitCode::FAILURE
        }
    }
}
