//! Command-line front ends for the `vdp` and `lifeserver` binaries.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};

use crate::callosum::ChannelMode;
use crate::gateway::current_code;
use crate::node::{self, NodeConfig, NodeError, Role, HttpFetcher, PROVISION_REQUEST_FILE};
use crate::vdp::{self, ResolutionLimits, VdpError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Subcommand)]
pub enum VdpCommand {
    /// Validate a VDP document and print its canonical form.
    Parse { file: PathBuf },
    /// Resolve all linked documents and print the self-contained result.
    Resolve {
        file: PathBuf,
        #[arg(long, default_value_t = 16)]
        max_depth: usize,
        #[arg(long, default_value_t = 64)]
        max_docs: usize,
    },
    /// Split VALUE atomic units and print `address<TAB>amount<TAB>path` lines.
    Compute {
        file: PathBuf,
        #[arg(long)]
        value: u64,
        #[arg(long, default_value_t = 16)]
        max_depth: usize,
        #[arg(long, default_value_t = 64)]
        max_docs: usize,
    },
}

#[derive(Debug, Parser)]
#[command(name = "vdp", version, about = "Value Distribution Policy tool")]
struct VdpCli {
    #[command(subcommand)]
    command: VdpCommand,
}

#[derive(Debug, Parser)]
#[command(name = "lifeserver", version, about = "Two-node personal data server")]
struct LifeserverCli {
    /// Log filter, e.g. `info` or `lifeserver=debug` (overrides RUST_LOG).
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one node, or both nodes in one process (pass two --config).
    Run {
        #[arg(long = "config", required = true, num_args = 1)]
        configs: Vec<PathBuf>,
    },
    /// Obtain the private node's key over the duplex channel.
    Provision {
        #[arg(long)]
        config: PathBuf,
        /// Seconds to wait (defaults to channel.handshake_timeout_ms).
        #[arg(long)]
        timeout: Option<f64>,
    },
    /// Switch the channel to diode mode (or back with --unlock).
    Lock {
        #[arg(long = "config", required = true, num_args = 1)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        unlock: bool,
    },
    /// Print the current pairing code.
    PairingCode {
        #[arg(long)]
        config: PathBuf,
    },
    /// VDP document tools.
    Vdp {
        #[command(subcommand)]
        command: VdpCommand,
    },
}

/// Parse arguments; help/version print and exit 0, errors exit 1.
fn parse_or_exit<P: Parser>(args: Vec<OsString>) -> Result<P, i32> {
    P::try_parse_from(args).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            EXIT_USAGE
        } else {
            EXIT_OK
        }
    })
}

pub fn vdp_main(args: Vec<OsString>) -> i32 {
    match parse_or_exit::<VdpCli>(args) {
        Ok(cli) => run_vdp(cli.command, &mut std::io::stdout().lock()),
        Err(code) => code,
    }
}

pub fn lifeserver_main(args: Vec<OsString>) -> i32 {
    let cli = match parse_or_exit::<LifeserverCli>(args) {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    init_logging(cli.log.as_deref());
    let result = match cli.command {
        Command::Vdp { command } => return run_vdp(command, &mut std::io::stdout().lock()),
        Command::Run { configs } => load_all(&configs).and_then(node::run),
        Command::Provision { config, timeout } => {
            load(&config).and_then(|c| provision(&c, timeout.map(Duration::from_secs_f64)))
        }
        Command::Lock { configs, unlock } => load_all(&configs).and_then(|cs| lock(&cs, unlock)),
        Command::PairingCode { config } => load(&config).and_then(|c| pairing_code(&c)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("lifeserver: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(filter: Option<&str>) {
    let env = env_logger::Env::default().default_filter_or("info");
    let mut builder = env_logger::Builder::from_env(env);
    if let Some(f) = filter {
        builder.parse_filters(f);
    }
    let _ = builder.try_init();
}

fn load(path: &Path) -> Result<NodeConfig, NodeError> {
    NodeConfig::load(path).map_err(|source| NodeError::ConfigFile {
        path: path.display().to_string(),
        source,
    })
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<NodeConfig>, NodeError> {
    if paths.len() > 2 {
        return Err(NodeError::Usage("at most two --config files".into()));
    }
    paths.iter().map(|p| load(p)).collect()
}

fn provision(config: &NodeConfig, timeout: Option<Duration>) -> Result<(), NodeError> {
    let dir = &config.data_dir;
    if config.role == Role::Private {
        fs::create_dir_all(dir).map_err(|e| NodeError::io(dir, e))?;
        let keypair = node::load_or_create_keypair(dir)?;
        println!("key_id {}", keypair.key_id());
        return Ok(());
    }
    if node::effective_mode(dir, config.channel.mode) == ChannelMode::Diode {
        return Err(NodeError::Locked);
    }
    let timeout = timeout.unwrap_or(config.channel.handshake_timeout);
    let request = dir.join(PROVISION_REQUEST_FILE);
    fs::write(&request, b"").map_err(|e| NodeError::io(&request, e))?;
    let deadline = Instant::now() + timeout;
    while request.exists() {
        if Instant::now() >= deadline {
            let _ = fs::remove_file(&request);
            return Err(NodeError::ChannelHandshakeTimeout(timeout));
        }
        thread::sleep(Duration::from_millis(50));
    }
    match node::read_announced_key(dir) {
        Some(key) => {
            println!("key_id {}", key.key_id());
            println!("provisioned; run `lifeserver lock` to switch the channel to diode mode");
            Ok(())
        }
        None => Err(NodeError::ChannelHandshakeTimeout(timeout)),
    }
}

fn lock(configs: &[NodeConfig], unlock: bool) -> Result<(), NodeError> {
    let mode = if unlock { ChannelMode::Duplex } else { ChannelMode::Diode };
    for c in configs {
        if !unlock && c.role == Role::Public && node::read_announced_key(&c.data_dir).is_none() {
            eprintln!("warning: no private-node key announced yet; sealed ingestion will queue");
        }
        node::write_mode(&c.data_dir, mode)?;
        println!("{} node: channel mode {}", c.role, mode.as_str());
    }
    Ok(())
}

fn pairing_code(config: &NodeConfig) -> Result<(), NodeError> {
    if config.role != Role::Public {
        return Err(NodeError::WrongRole(config.role));
    }
    let configured = config.pairing_code.as_deref().unwrap_or_default();
    println!("{}", current_code(&config.data_dir, configured));
    Ok(())
}

fn file_url(path: &Path) -> Result<String, String> {
    let abs = fs::canonicalize(path).map_err(|e| format!("{}: {e}", path.display()))?;
    url::Url::from_file_path(&abs)
        .map(|u| u.to_string())
        .map_err(|_| format!("{}: not a local path", abs.display()))
}

fn resolve_file(file: &Path, limits: ResolutionLimits) -> Result<vdp::VdpDocument, (i32, String)> {
    let url = file_url(file).map_err(|e| (EXIT_CONFIG, e))?;
    let fetcher = HttpFetcher::default();
    vdp::resolve_url(&url, &fetcher, limits)
        .map(|r| r.document)
        .map_err(|e| (vdp_exit_code(&e), e.to_string()))
}

fn vdp_exit_code(e: &VdpError) -> i32 {
    match e {
        VdpError::Syntax { .. }
        | VdpError::UnsupportedVersion(_)
        | VdpError::DuplicateSiblingId { .. }
        | VdpError::EmptySplit { .. }
        | VdpError::InvalidShares { .. }
        | VdpError::UnknownKeyword { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub fn run_vdp(command: VdpCommand, out: &mut dyn Write) -> i32 {
    let result: Result<(), (i32, String)> = (|| match command {
        VdpCommand::Parse { file } => {
            let bytes = fs::read(&file).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", file.display())))?;
            let doc = vdp::parse_vdp(&bytes).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            let _ = writeln!(out, "{}", String::from_utf8_lossy(&vdp::serialize_vdp(&doc)));
            Ok(())
        }
        VdpCommand::Resolve {
            file,
            max_depth,
            max_docs,
        } => {
            let doc = resolve_file(&file, ResolutionLimits::new(max_depth, max_docs))?;
            let _ = writeln!(out, "{}", String::from_utf8_lossy(&vdp::serialize_vdp(&doc)));
            Ok(())
        }
        VdpCommand::Compute {
            file,
            value,
            max_depth,
            max_docs,
        } => {
            let doc = resolve_file(&file, ResolutionLimits::new(max_depth, max_docs))?;
            let instructions = vdp::distribute(&doc, value).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
            for i in instructions {
                let _ = writeln!(out, "{}\t{}\t{}", i.address, i.amount, i.path_string());
            }
            Ok(())
        }
    })();
    match result {
        Ok(()) => EXIT_OK,
        Err((code, message)) => {
            eprintln!("vdp: {message}");
            code
        }
    }
}
