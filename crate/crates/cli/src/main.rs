//! `locoman` command line.
//!
//! Exit codes: 0 success, 1 verification failure or runtime error,
//! 2 invalid input, 3 run ended in a safety stop, 4 integration fault.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use locoman_client::{Client, ClientError};
use locoman_core::sim::{self, RunReport, ScenarioConfig, Table};
use locoman_core::verify::{self, Mutation, VerifyOptions};
use locoman_protocol::{FailureKind, RunRequest, RunResponse};
use locoman_server::{Session, SessionConfig};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "locoman", version, about = "Whole-body loco-manipulation simulator")]
struct Cli {
    /// More logging on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and write its log, report and effective config.
    Run {
        /// Scenario file, or the name of a built-in scenario.
        config: String,
        /// Override a config value, e.g. `--set controller.moca_rate=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Run on a locoman service instead of in-process.
        #[arg(long, value_name = "URL")]
        remote: Option<String>,
    },
    /// Check the numerical invariants against independent reference code and
    /// print a JSON summary.
    Verify {
        /// Restrict to these groups (repeatable).
        #[arg(long = "group")]
        groups: Vec<String>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Inject a known defect, to see the checks catch it.
        #[arg(long, hide = true, value_parser = parse_mutation)]
        mutation: Option<Mutation>,
    },
    /// Extract channels from a CSV log.
    Plotdata {
        log: PathBuf,
        /// Comma-separated channel names; `t` is always included.
        #[arg(long, value_delimiter = ',', required = true)]
        channels: Vec<String>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP/WebSocket service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Scenario for the live session, file or built-in name.
        #[arg(long, default_value = "free_space")]
        scenario: String,
    },
}

fn parse_mutation(s: &str) -> Result<Mutation, String> {
    match s {
        "flip-nullspace-torque" => Ok(Mutation::FlipNullspaceTorque),
        _ => Err("known mutations: flip-nullspace-torque".into()),
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Integration(String),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Integration(_) => 4,
            CliError::Failed(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<locoman_core::Error> for CliError {
    fn from(e: locoman_core::Error) -> Self {
        match e {
            locoman_core::Error::Config { .. } => CliError::Invalid(e.to_string()),
            locoman_core::Error::IntegrationFault { .. } => CliError::Integration(e.to_string()),
            locoman_core::Error::Io(e) => CliError::Io(e),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api { body, .. } => match body.kind {
                FailureKind::Validation => CliError::Invalid(body.error),
                FailureKind::Integration => CliError::Integration(body.error),
                FailureKind::Internal => CliError::Failed(body.error),
            },
            other => CliError::Failed(other.to_string()),
        }
    }
}

/// Where a scenario comes from: an existing file wins over a built-in name.
enum Source {
    File(PathBuf),
    Builtin(String),
}

fn resolve(arg: &str) -> Result<Source, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(Source::File(path.to_path_buf()));
    }
    let name = arg.strip_suffix(".cfg").unwrap_or(arg);
    if path.parent().is_none_or(|p| p.as_os_str().is_empty()) && sim::builtin_names().contains(&name) {
        return Ok(Source::Builtin(name.to_string()));
    }
    Err(CliError::Invalid(format!(
        "cannot read scenario `{arg}`: no such file or built-in (built-ins: {})",
        sim::builtin_names().join(", ")
    )))
}

fn load(source: &Source, overrides: &[String]) -> Result<ScenarioConfig, CliError> {
    let base = match source {
        Source::File(p) => ScenarioConfig::load(p)?,
        Source::Builtin(n) => sim::builtin_scenario(n)?,
    };
    let cfg = base.with_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn run(config: &str, overrides: &[String], out: &Path, remote: Option<&str>) -> Result<ExitCode, CliError> {
    let source = resolve(config)?;
    let resp = match remote {
        None => {
            let cfg = load(&source, overrides)?;
            let log = sim::run_scenario(&cfg)?;
            RunResponse { report: RunReport::from_log(&log), config: cfg.to_toml_string(), csv: log.to_csv_string() }
        }
        Some(url) => {
            let mut req = RunRequest { overrides: overrides.to_vec(), ..Default::default() };
            match &source {
                Source::File(p) => {
                    req.config = Some(
                        fs::read_to_string(p).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", p.display())))?,
                    )
                }
                Source::Builtin(n) => req.scenario = Some(n.clone()),
            }
            let client = Client::new(url);
            runtime()?.block_on(client.run(&req))?
        }
    };
    let mut report = resp.report;
    fs::create_dir_all(out)?;
    let name = report.scenario.clone();
    let csv = out.join(format!("{name}.csv"));
    fs::write(&csv, &resp.csv)?;
    fs::write(out.join(format!("{name}.effective.cfg")), &resp.config)?;
    report.log_path = Some(csv.display().to_string());
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(out.join(format!("{name}.report.json")), &json)?;
    println!("{json}");
    if report.safety_stop {
        eprintln!("safety stop: peak external wrench {:.2} N", report.peak_f_ext);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_verify(groups: &[String], opts: VerifyOptions) -> Result<ExitCode, CliError> {
    let results = verify::run(groups, &opts)?;
    for r in &results {
        eprintln!(
            "{:<4} {:<11} {:<40} cases {:>7}  residual {:.3e} (tol {:.1e})",
            if r.passed { "ok" } else { "FAIL" },
            r.group,
            r.check,
            r.cases,
            r.max_residual,
            r.tolerance
        );
    }
    println!("{}", serde_json::to_string_pretty(&results).expect("results serialize"));
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| format!("{}/{}", r.group, r.check)).collect();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::Failed(format!("verification failed: {}", failed.join(", "))))
    }
}

fn plotdata(log: &Path, channels: &[String], out: Option<&Path>) -> Result<ExitCode, CliError> {
    let file = fs::File::open(log).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", log.display())))?;
    let table = Table::read(io::BufReader::new(file))?.select(channels)?;
    match out {
        Some(p) => table.write_csv(fs::File::create(p)?)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            table.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(host: &str, port: u16, scenario: &str) -> Result<ExitCode, CliError> {
    let cfg = load(&resolve(scenario)?, &[])?;
    let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| CliError::Invalid(format!("bad address: {e}")))?;
    let session = Session::spawn(SessionConfig::new(cfg)).map_err(|e| CliError::Failed(e.to_string()))?;
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        io::stdout().flush()?;
        locoman_server::serve(listener, session).await.map_err(|e| CliError::Failed(e.to_string()))
    })?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_max_level(if cli.verbose { tracing::Level::DEBUG } else { tracing::Level::INFO })
        .init();
    let result = match cli.command {
        Command::Run { config, overrides, out, remote } => run(&config, &overrides, &out, remote.as_deref()),
        Command::Verify { groups, seed, mutation } => run_verify(&groups, VerifyOptions { seed, mutation }),
        Command::Plotdata { log, channels, out } => plotdata(&log, &channels, out.as_deref()),
        Command::Serve { port, host, scenario } => serve(&host, port, &scenario),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
