//! Command-line entry points: `serve`, `bench-echo`, `bench-ga`, `report`.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use farmbench_core::ga::{GaConfig, MutationScheme};
use farmbench_core::report::{self, ReportError};
use farmbench_core::{BenchReport, Format, Protocol, SearchDomain};
use farmbench_rpc::{ClientOptions, Endpoint, ServerConfig, ServerError};

use crate::harness::{self, HarnessError, RemoteOptions};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Payload lengths accepted by `bench-echo` without `--allow-any-len`.
pub const STANDARD_LENGTHS: [usize; 2] = [100, 1000];

#[derive(Debug, Parser)]
#[command(
    name = "farmbench",
    version,
    about = "Master-slave GA and echo benchmarks over the envelope and rest protocols"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a slave server (echo store and fitness evaluation) until Ctrl-C.
    Serve(ServeArgs),
    /// Time push/pop round-trips against a running server.
    BenchEcho(EchoArgs),
    /// Run the GA repeatedly with fitness evaluation farmed out to slaves.
    BenchGa(GaArgs),
    /// Re-render a JSON or CSV report file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Envelope,
    Rest,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Envelope => Protocol::Envelope,
            ProtocolArg::Rest => Protocol::Rest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Table,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => Format::Table,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MutationArg {
    EveryOffspring,
    PerOffspring,
}

impl From<MutationArg> for MutationScheme {
    fn from(m: MutationArg) -> Self {
        match m {
            MutationArg::EveryOffspring => MutationScheme::EveryOffspring,
            MutationArg::PerOffspring => MutationScheme::PerOffspring,
        }
    }
}

#[derive(Debug, Args)]
pub struct DomainArgs {
    /// Bits per axis; a genome is twice this long.
    #[arg(long, default_value_t = 32)]
    pub bits: u32,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub hi: f64,
}

impl DomainArgs {
    fn domain(&self) -> Result<SearchDomain, String> {
        SearchDomain::new(self.lo, self.hi, self.bits).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format; defaults to table on stdout and to json (or csv for
    /// a .csv path) with --out.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Write the report here instead of stdout. The file only appears once
    /// the run has succeeded.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutputArgs {
    fn resolved_format(&self) -> Format {
        match (self.format, &self.out) {
            (Some(f), _) => f.into(),
            (None, Some(p)) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => Format::Csv,
            (None, Some(_)) => Format::Json,
            (None, None) => Format::Table,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Listening port; falls back to FARMBENCH_PORT, then 8000 (envelope)
    /// or 3000 (rest).
    #[arg(long, env = "FARMBENCH_PORT")]
    pub port: Option<u16>,
    /// Interface to bind.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Close each connection after one response.
    #[arg(long)]
    pub no_keepalive: bool,
    /// Requests handled at once.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    pub concurrency: u32,
}

#[derive(Debug, Args)]
pub struct EchoArgs {
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Server base URL, e.g. http://127.0.0.1:3000
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value_t = 100)]
    pub len: usize,
    /// Accept payload lengths other than 100 and 1000.
    #[arg(long)]
    pub allow_any_len: bool,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub iterations: u32,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub trials: u32,
    /// Open a new connection for every request.
    #[arg(long)]
    pub no_keepalive: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GaArgs {
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Comma-separated slave base URLs.
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub generations: usize,
    #[arg(long, default_value_t = 50)]
    pub population: usize,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    /// Seed of the first run; run k uses seed + k.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Outstanding requests allowed per slave.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub in_flight: u32,
    #[arg(long, value_enum, default_value_t = MutationArg::EveryOffspring)]
    pub mutation: MutationArg,
    #[arg(long)]
    pub no_keepalive: bool,
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON or CSV file written by bench-echo or bench-ga.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Parses `argv`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(CliError::Usage(msg)) => {
            let _ = Cli::command().error(ErrorKind::ValueValidation, msg).print();
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("farmbench: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Serve(a) => serve(a),
        Command::BenchEcho(a) => bench_echo(a),
        Command::BenchGa(a) => bench_ga(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn runtime(multi: bool) -> Result<tokio::runtime::Runtime, CliError> {
    let mut b = if multi {
        tokio::runtime::Builder::new_multi_thread()
    } else {
        tokio::runtime::Builder::new_current_thread()
    };
    b.enable_all().build().map_err(|e| HarnessError::Runtime(e).into())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let protocol: Protocol = a.protocol.into();
    let domain = a.domain.domain().map_err(CliError::Usage)?;
    let port = a.port.unwrap_or_else(|| protocol.default_port());
    let cfg = ServerConfig {
        addr: SocketAddr::new(a.host, port),
        protocol,
        domain,
        concurrency: a.concurrency as usize,
        keep_alive: !a.no_keepalive,
    };
    let listener = farmbench_rpc::server::bind(cfg.addr)?;
    let addr = listener.local_addr().map_err(ServerError::Runtime)?;
    let rt = runtime(true)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener).map_err(ServerError::Runtime)?;
        eprintln!(
            "farmbench: {protocol} server on http://{addr} ({} bits/axis over [{}, {}])",
            domain.bits_per_axis(),
            domain.lo(),
            domain.hi()
        );
        farmbench_rpc::serve_on(listener, cfg, shutdown_signal()).await
    })?;
    eprintln!("farmbench: server stopped");
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn client_options(no_keepalive: bool) -> ClientOptions {
    ClientOptions {
        keep_alive: !no_keepalive,
        ..ClientOptions::default()
    }
}

fn bench_echo(a: EchoArgs) -> Result<(), CliError> {
    if !a.allow_any_len && !STANDARD_LENGTHS.contains(&a.len) {
        return Err(CliError::Usage(format!(
            "--len {} is not one of 100 or 1000 (pass --allow-any-len to override)",
            a.len
        )));
    }
    let protocol: Protocol = a.protocol.into();
    let endpoint = Endpoint::new(&a.target, protocol).map_err(|e| CliError::Usage(e.to_string()))?;
    let client = farmbench_rpc::RpcClient::new(endpoint, client_options(a.no_keepalive))
        .map_err(|e| CliError::Usage(format!("cannot build HTTP client: {e}")))?;
    let stats = runtime(false)?.block_on(harness::run_echo_experiment(
        &client,
        a.len,
        a.iterations as usize,
        a.trials as usize,
    ))?;
    let report = harness::echo_report(protocol, a.len, a.iterations as usize, stats);
    write_reports(&[report], &a.output)
}

fn bench_ga(a: GaArgs) -> Result<(), CliError> {
    let protocol: Protocol = a.protocol.into();
    let domain = a.domain.domain().map_err(CliError::Usage)?;
    for t in &a.targets {
        Endpoint::new(t, protocol).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = GaConfig {
        population_size: a.population,
        generations: a.generations,
        mutation: a.mutation.into(),
        seed: a.seed,
        domain,
        ..GaConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = RemoteOptions {
        client: client_options(a.no_keepalive),
        max_in_flight: a.in_flight as usize,
    };
    let (report, _) = harness::run_ga_experiment(protocol, &a.targets, &cfg, a.repeats as usize, opts)?;
    write_reports(&[report], &a.output)
}

fn report_cmd(a: ReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.input).map_err(|source| CliError::Io {
        path: a.input.clone(),
        source,
    })?;
    let reports = report::parse_reports(&text)?;
    let out = OutputArgs {
        format: Some(a.format),
        out: a.out,
    };
    write_reports(&reports, &out)
}

fn write_reports(reports: &[BenchReport], out: &OutputArgs) -> Result<(), CliError> {
    let rendered = report::render(reports, out.resolved_format())?;
    match &out.out {
        Some(path) => write_atomically(path, rendered.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(rendered.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

/// Writes into a temporary file beside `path` and renames it into place,
/// so a failed run never leaves a partial file.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
