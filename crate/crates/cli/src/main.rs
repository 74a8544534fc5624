use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qkd_core::config::{parse_config, Scenario};
use qkd_core::decoy::analyze_tally;
use qkd_core::link::{run_alice, run_bob, Role, SessionConfig, SessionOutcome, TcpTransport};
use qkd_core::report;
use qkd_core::sim::{self, duty_report, PipelineMetrics, RunBudget};
use sha2::{Digest, Sha256};

mod exit;

#[derive(Parser)]
#[command(name = "qkdsim", version, about = "Decoy-state BB84 system model and post-processing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the time-cost simulation once and emit the metrics time series as CSV.
    Simulate(SimulateArgs),
    /// Run the simulation for each signal intensity and emit one CSV row per point.
    Sweep(SweepArgs),
    /// Decoy-state analysis of an aggregated tally CSV.
    Analyze(AnalyzeArgs),
    /// One Alice or Bob session of the classical protocol over TCP.
    Netrun(NetrunArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut sc = match &self.config {
            Some(path) => parse_config(path).with_context(|| format!("loading {}", path.display()))?,
            None => Scenario::default(),
        };
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        Ok(sc)
    }
}

#[derive(Args)]
#[group(multiple = false)]
struct BudgetArgs {
    /// Number of frames to transmit.
    #[arg(long)]
    frames: Option<usize>,
    /// Operation time to simulate, in seconds.
    #[arg(long, value_name = "SECONDS")]
    duration: Option<f64>,
}

impl BudgetArgs {
    fn budget(&self, sc: &Scenario) -> RunBudget {
        match (self.frames, self.duration) {
            (_, Some(s)) => RunBudget::DurationMs(s * 1000.0),
            (Some(n), None) => RunBudget::Frames(n),
            (None, None) => RunBudget::Frames(sc.sim.frames),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Metrics CSV destination; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the decoy tally CSV here.
    #[arg(long, value_name = "FILE")]
    tally_out: Option<PathBuf>,
    /// Fail with exit code 4 when more blocks than this fail to decode.
    #[arg(long, value_name = "N")]
    max_failed_blocks: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Signal intensities, comma separated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    mu_list: Vec<f64>,
    /// Worker threads; rows are emitted in input order regardless.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Sweep CSV destination; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Tally CSV with header class,sent,detected,errors.
    #[arg(long, value_name = "FILE")]
    tally: PathBuf,
    /// Scenario supplying intensities and key-rate parameters.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Analysis CSV destination; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Alice,
    Bob,
}

#[derive(Args)]
struct NetrunArgs {
    #[arg(long, value_enum)]
    role: RoleArg,
    /// Wait for the peer on this address.
    #[arg(long, value_name = "HOST:PORT", conflicts_with = "connect", required_unless_present = "connect")]
    listen: Option<SocketAddr>,
    /// Connect to the peer at this address.
    #[arg(long, value_name = "HOST:PORT")]
    connect: Option<SocketAddr>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Frames Alice transmits; ignored for Bob.
    #[arg(long)]
    frames: Option<usize>,
    /// Key file; defaults to `<role>.key`.
    #[arg(long, value_name = "FILE")]
    key_out: Option<PathBuf>,
    /// Seconds to keep retrying an outgoing connection.
    #[arg(long, default_value_t = 10.0)]
    connect_timeout: f64,
    /// Fail with exit code 4 when more blocks than this are rejected.
    #[arg(long, value_name = "N")]
    max_failed_blocks: Option<u64>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn scenario_digest(sc: &Scenario) -> String {
    let hash = Sha256::digest(format!("{sc:?}").as_bytes());
    hash[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn check_budget(failed: u64, total: u64, max: Option<u64>) -> Result<()> {
    match max {
        Some(max) if failed > max => {
            Err(qkd_core::Error::DecodeBudget { failed: failed as usize, total: total as usize }.into())
        }
        _ => Ok(()),
    }
}

fn run_report(sc: &Scenario, m: &PipelineMetrics, wall: Duration) -> String {
    let mut lines = vec![
        format!("scenario_digest = {}", scenario_digest(sc)),
        format!("preset = {}", sc.preset.name()),
        format!("seed = {}", sc.seed),
        format!("frames = {}", m.frames_sent),
        format!("total_time_ms = {}", m.total_time_ms),
        format!("duty = {:.5}", duty_report(m)),
        format!("raw_kbps = {:.3}", m.raw_kbps()),
        format!("sifted_kbps = {:.3}", m.sifted_kbps()),
        format!("corrected_kbps = {:.3}", m.corrected_kbps()),
        format!("secret_kbps = {:.3}", m.secret_kbps()),
        format!("qber = {}", m.qber().map_or("n/a".into(), |q| format!("{q:.5}"))),
        format!("blocks = {} ({} failed)", m.blocks_attempted, m.blocks_failed),
        format!("compensations = {}", m.compensation_events),
        format!("leakage_bits = {}", m.leakage_bits),
        format!("secret_bits = {}", m.secret_bits),
    ];
    if let Some(a) = &m.analysis {
        let e = &a.estimates;
        lines.push(format!("y1_l = {:.6e}", e.y1_l));
        lines.push(format!("e1_u = {:.6}", e.e1_u));
        lines.push(format!("q1_l = {:.6e}", e.q1_l));
        lines.push(format!("secret_per_pulse = {:.6e}", a.rate));
    }
    lines.push(format!("wall_ms = {}", wall.as_millis()));
    lines.join("\n")
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let sc = args.scenario.load()?;
    let t = Instant::now();
    let m = sim::run(&sc, args.budget.budget(&sc), sc.seed)?;
    check_budget(m.blocks_failed, m.blocks_attempted, args.max_failed_blocks)?;
    let mut out = output(args.out.as_deref())?;
    report::write_metrics_csv(&mut out, &m.samples)?;
    out.flush()?;
    if let Some(p) = &args.tally_out {
        report::write_tally_csv(output(Some(p))?, &m.tally)?;
    }
    eprintln!("{}", run_report(&sc, &m, t.elapsed()));
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let sc = args.scenario.load()?;
    let points = sim::sweep_with_workers(&sc, &args.mu_list, args.budget.budget(&sc), sc.seed, args.jobs)?;
    let mut out = output(args.out.as_deref())?;
    report::write_sweep_csv(&mut out, &points)?;
    out.flush()?;
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let sc = ScenarioArgs { config: args.config.clone(), seed: None }.load()?;
    let file = File::open(&args.tally).with_context(|| format!("opening {}", args.tally.display()))?;
    let tally = report::read_tally_csv(io::BufReader::new(file))?;
    let analysis = analyze_tally(&tally, &sc.pulses, &sc.pa.key_rate, sc.pa.vacuum)?;
    let mut out = output(args.out.as_deref())?;
    report::write_analysis_csv(&mut out, &analysis)?;
    out.flush()?;
    Ok(())
}

fn connect(addr: SocketAddr, timeout: Duration) -> io::Result<TcpStream> {
    let start = Instant::now();
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if start.elapsed() >= timeout => return Err(e),
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    }
}

fn key_file(outcome: &SessionOutcome) -> String {
    let bytes = qkd_core::bits::pack_bits(&outcome.key);
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    format!("bits {}\ndigest {:016x}\nkey {hex}\n", outcome.key.len(), outcome.key_digest)
}

fn netrun(args: &NetrunArgs) -> Result<()> {
    let sc = args.scenario.load()?;
    let cfg = Arc::new(SessionConfig::from_scenario(&sc)?);
    let stream = match (args.listen, args.connect) {
        (Some(addr), _) => TcpListener::bind(addr)?.accept()?.0,
        (None, Some(addr)) => connect(addr, Duration::from_secs_f64(args.connect_timeout.max(0.0)))?,
        (None, None) => unreachable!("clap requires one address"),
    };
    let mut transport = TcpTransport::new(stream)?;
    let outcome = match args.role {
        RoleArg::Alice => run_alice(&mut transport, &sc, cfg, args.frames.unwrap_or(sc.sim.frames))?,
        RoleArg::Bob => run_bob(&mut transport, &sc, cfg)?,
    };
    let c = outcome.counters;
    check_budget(c.blocks - c.blocks_accepted, c.blocks, args.max_failed_blocks)?;
    let name = match outcome.role {
        Role::Alice => "alice",
        Role::Bob => "bob",
    };
    let path = args.key_out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.key")));
    std::fs::write(&path, key_file(&outcome)).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "role={name} frames={} blocks={}/{} qber={} disclosed_bits={} key_bits={} digest={:016x}",
        c.frames,
        c.blocks_accepted,
        c.blocks,
        outcome.qber().map_or("n/a".into(), |q| format!("{q:.5}")),
        c.disclosed_bits,
        outcome.key.len(),
        outcome.key_digest
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    let (result, networked) = match &cli.command {
        Command::Simulate(a) => (simulate(a), false),
        Command::Sweep(a) => (sweep(a), false),
        Command::Analyze(a) => (analyze(a), false),
        Command::Netrun(a) => (netrun(a), true),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e, networked))
        }
    }
}
