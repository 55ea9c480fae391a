use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use medq_core::model::{DegradationSpec, DegradationType, Modality, Severity};
use medq_core::pipeline::{apply_review, build_manifest, PipelineConfig};
use medq_core::report::Format;
use medq_core::review::read_decisions;
use medq_core::{
    aggregate_report, apply_degradation, resolve_params, validate_manifest, AccuracyMode, Axis, Image, Manifest,
    SeverityTable,
};
use medq_service::runner::API_KEY_ENV;
use medq_service::server::AppState;
use medq_service::{run_benchmark, Client, Endpoint, MockMode, MockServer, RunConfig};

#[derive(Parser)]
#[command(name = "medq", version, about = "Medical image degradation benchmark toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply one degradation to an image.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "type")]
        kind: DegradationType,
        /// Severity level (L0, L1, L2). Ignored when --t is given.
        #[arg(long, default_value = "L1")]
        severity: Severity,
        /// Continuous slider position in [0, 1] instead of a level.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        modality: Modality,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Severity table (TOML); the bundled one by default.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic phantom.
    Phantom {
        #[command(subcommand)]
        kind: PhantomKind,
    },
    /// Dedup a QA pool, assign degradations and render every sample.
    BuildManifest {
        /// Directory holding pool.jsonl and the source images.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pipeline config (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a manifest against the record invariants.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Drop discarded samples using a review decision log.
    ApplyReview {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query a chat-completions endpoint for every sample.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_retries: u32,
        /// Per-request timeout in seconds.
        #[arg(long, default_value_t = 60)]
        timeout: u64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Environment variable holding the API key.
        #[arg(long, default_value = API_KEY_ENV)]
        key_env: String,
    },
    /// Aggregate results into accuracy / confidence / calibration tables.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated: model, capability_mid, category, modality, severity.
        #[arg(long, default_value = "model,severity")]
        axes: String,
        #[arg(long, default_value = "md")]
        format: Format,
        #[arg(long, value_enum, default_value_t = Mode::PerTrial)]
        accuracy: Mode,
    },
    /// Run the calibration and review server.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        table: Option<PathBuf>,
        /// Built review UI to host at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Run a local mock chat-completions endpoint.
    MockEndpoint {
        /// correct, uniform, scripted:A,A,B, timeout, auth-fail or malformed.
        #[arg(long, default_value = "uniform")]
        mode: String,
        /// Manifest to take answers from in `correct` mode.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8000)]
        port: u16,
    },
}

#[derive(Subcommand)]
enum PhantomKind {
    SheppLogan {
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerTrial,
    Majority,
}

fn table(path: Option<&Path>) -> Result<SeverityTable> {
    Ok(match path {
        Some(p) => SeverityTable::load(p)?,
        None => SeverityTable::default(),
    })
}

fn degrade(
    input: &Path,
    kind: DegradationType,
    severity: Severity,
    t: Option<f64>,
    modality: Modality,
    seed: u64,
    table: &SeverityTable,
    out: &Path,
) -> Result<()> {
    let img = Image::load(input)?;
    let params = match t {
        Some(t) => table.params_at(kind, t)?,
        None => table.level_params(kind, severity, Some(modality)),
    };
    let severity = if t.is_some() { Severity::L1 } else { severity };
    let spec = if severity == Severity::L0 {
        DegradationSpec::identity()
    } else {
        DegradationSpec::new(kind, severity, resolve_params(kind, &params, seed)?, seed)
    };
    apply_degradation(&img, modality, &spec)?.save_png(out)?;
    println!("{}", serde_json::to_string(&spec)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Degrade {
            input,
            kind,
            severity,
            t,
            modality,
            seed,
            table: tpath,
            out,
        } => degrade(&input, kind, severity, t, modality, seed, &table(tpath.as_deref())?, &out)?,
        Command::Phantom {
            kind: PhantomKind::SheppLogan { size, out },
        } => medq_core::phantom::shepp_logan(size).save_png(&out)?,
        Command::BuildManifest { pool, out, seed, config } => {
            let config = match config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            let built = build_manifest(&pool, &config, seed, &out)?;
            for w in &built.stats.skipped {
                eprintln!("skipped: {w:?}");
            }
            println!(
                "{} samples from {} pairs -> {}",
                built.manifest.len(),
                built.stats.pairs,
                built.manifest_path.display()
            );
        }
        Command::Validate { manifest } => {
            let violations = validate_manifest(&manifest)?;
            for v in &violations {
                println!("{v}");
            }
            if !violations.is_empty() {
                eprintln!("{} violation(s)", violations.len());
                return Ok(ExitCode::FAILURE);
            }
            println!("ok");
        }
        Command::ApplyReview { manifest, decisions, out } => {
            let m = Manifest::read(&manifest)?;
            let (kept, summary) = apply_review(&m, &read_decisions(&decisions)?)?;
            kept.write(&out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Evaluate {
            manifest,
            endpoint,
            model,
            trials,
            parallel,
            out,
            max_retries,
            timeout,
            temperature,
            key_env,
        } => {
            let m = Manifest::read(&manifest)?;
            let violations = m.violations();
            if !violations.is_empty() {
                bail!("manifest has {} violation(s); run `medq validate`", violations.len());
            }
            let mut ep = Endpoint::new(&model, &endpoint);
            ep.max_retries = max_retries;
            ep.timeout = Duration::from_secs(timeout);
            ep.temperature = temperature;
            ep.credential_env = key_env;
            let config = RunConfig {
                trials,
                parallel,
                image_root: manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            let summary = rt.block_on(async { run_benchmark(&m, &Client::new(ep)?, &config, &out).await })?;
            println!(
                "completed {} (skipped {} already done, {} failed trials) -> {}",
                summary.completed,
                summary.skipped,
                summary.failed_trials,
                out.display()
            );
        }
        Command::Report {
            results,
            manifest,
            axes,
            format,
            accuracy,
        } => {
            let m = Manifest::read(&manifest)?;
            let records = medq_core::eval::dedup_records(medq_core::eval::read_results(&results)?);
            let mode = match accuracy {
                Mode::PerTrial => AccuracyMode::PerTrial,
                Mode::Majority => AccuracyMode::MajorityVote,
            };
            let report = aggregate_report(&records, &m, &Axis::parse_list(&axes)?, mode)?;
            print!("{}", report.render(format)?);
        }
        Command::Serve {
            manifest,
            decisions,
            port,
            table: tpath,
            static_dir,
        } => {
            let state = Arc::new(AppState::open(&manifest, &decisions, table(tpath.as_deref())?)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(medq_service::server::serve(
                state,
                SocketAddr::from(([0, 0, 0, 0], port)),
                static_dir.as_deref(),
            ))?;
        }
        Command::MockEndpoint {
            mode,
            manifest,
            seed,
            port,
        } => {
            let mode = if mode == "correct" {
                let path = manifest.context("`correct` mode needs --manifest")?;
                MockMode::Correct(MockMode::answer_key(&Manifest::read(path)?)?)
            } else {
                MockMode::parse(&mode, seed).with_context(|| format!("unknown mock mode `{mode}`"))?
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let server = MockServer::start(mode, SocketAddr::from(([127, 0, 0, 1], port))).await?;
                println!("mock endpoint at {}", server.url());
                tokio::signal::ctrl_c().await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
