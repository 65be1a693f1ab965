//! The `qscf` command line.

use std::fs;
use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::net::{run_alice, run_bob, serve_physics_on, FrameStream, PartySummary};
use crate::photon_source::{SourceKind, SourceSpec};
use crate::protocol_engine::{ScenarioConfig, SimulatedIoTable, Simulator};
use crate::qubit_states::expected_io_table;
use crate::randomness::{open_bit_source, BitSource, BitSourceSpec};
use crate::security_analysis::{
    alice_cheat_prob, bob_cheat_prob, honest_abort_prob, quantum_gain, sig4, solve_fair_a, sweep_gain, SecurityReport,
};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PROTOCOL: u8 = 3;
pub const EXIT_ENTROPY: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "qscf", version, about = "Strong quantum coin flipping: bounds, simulation and a networked harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Wcp,
    Sps,
}

impl From<SourceArg> for SourceKind {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Wcp => SourceKind::Wcp,
            SourceArg::Sps => SourceKind::Sps,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file.
    #[arg(long)]
    pub config: PathBuf,
    /// Seed for every stream that is not file-backed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pre-stored random bytes for the protocol choices.
    #[arg(long)]
    pub random_file: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Worker threads. Results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic cheating bounds, honest abort rate and quantum gain.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Replace the configured source kind, keeping mu.
        #[arg(long, value_enum)]
        source: Option<SourceArg>,
    },
    /// Monte Carlo session with honest parties.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        flips: Option<u64>,
        /// Also write the simulated input/output table as CSV.
        #[arg(long)]
        iotable: Option<PathBuf>,
        /// Run a cheating Bob aiming for this bit instead.
        #[arg(long)]
        cheat_target: Option<u8>,
    },
    /// Gain map over the configured K and mu grids.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        source: Option<SourceArg>,
        /// Hold a fixed instead of solving for fairness in every cell.
        #[arg(long)]
        fixed_a: Option<f64>,
    },
    /// Expected input/output table, or a simulated one with --flips.
    Iotable {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        flips: Option<u64>,
    },
    /// State parameter at which both cheating bounds coincide.
    Fairness {
        #[command(flatten)]
        common: Common,
    },
    /// Alice's side of a networked session.
    Alice {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        connect: String,
        #[arg(long)]
        flips: Option<u64>,
        /// Per-flip outcome log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Bob's side of a networked session.
    Bob {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        connect: String,
        #[arg(long)]
        cheat: bool,
        /// Bit a cheating Bob tries to force.
        #[arg(long, requires = "cheat")]
        target: Option<u8>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Trusted channel process; serves one Alice/Bob session.
    Physics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        listen: String,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Analyze { common, .. }
            | Command::Simulate { common, .. }
            | Command::Sweep { common, .. }
            | Command::Iotable { common, .. }
            | Command::Fairness { common }
            | Command::Alice { common, .. }
            | Command::Bob { common, .. }
            | Command::Physics { common, .. } => common,
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qscf: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Infeasible(_) | Error::EmptyStats(_) => EXIT_CONFIG,
        Error::Protocol(_) => EXIT_PROTOCOL,
        Error::EntropyExhausted { .. } => EXIT_ENTROPY,
        Error::Io(_) => 1,
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if common.jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    Ok(cfg)
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Four significant digits as a JSON number.
fn num(x: f64) -> Value {
    sig4(x).parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::from).unwrap_or(Value::Null)
}

fn pct(x: f64) -> Value {
    if x.is_finite() {
        Value::from(format!("{:.1}%", 100.0 * x))
    } else {
        Value::Null
    }
}

fn render(common: &Common, fields: &[(&str, Value)]) -> String {
    match common.format {
        Format::Json => {
            let map: Map<String, Value> = fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
            let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("json");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from("key,value\n");
            for (k, v) in fields {
                let v = match v {
                    Value::String(x) => x.clone(),
                    Value::Object(_) | Value::Array(_) => continue,
                    other => other.to_string(),
                };
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        }
    }
}

fn scenario_fields(sc: &ScenarioConfig) -> Value {
    json!({
        "hash": sc.scenario_hash(),
        "source": sc.source.kind.to_string(),
        "mu": sc.source.mu,
        "g2": if sc.source.kind == SourceKind::Sps { Value::from(sc.source.g2) } else { Value::Null },
        "loss_db": sc.link.loss_db,
        "qber": sc.link.qber,
        "pulses_per_flip": sc.pulses_per_flip,
        "state_a": sc.a.value(),
    })
}

fn report_fields(r: &SecurityReport) -> Vec<(&'static str, Value)> {
    vec![
        ("a", num(r.a)),
        ("p_alice", num(r.p_alice)),
        ("p_bob", num(r.p_bob)),
        ("p_honest_abort", num(r.p_honest_abort)),
        ("p_classical", num(r.p_classical)),
        ("gain_pp", num(r.gain_pp)),
        ("gain_relative_pct", num(r.gain_relative_pct)),
        ("p_click", num(r.p_click)),
        ("p_multi", num(r.p_multi)),
        ("rate_hz", num(r.rate_hz)),
        ("p_alice_pct", pct(r.p_alice)),
        ("p_bob_pct", pct(r.p_bob)),
        ("p_honest_abort_pct", pct(r.p_honest_abort)),
        ("p_classical_pct", pct(r.p_classical)),
        ("gain_pct", Value::from(format!("{:.1}%", r.gain_pp))),
    ]
}

/// Removes the split random files when dropped.
struct SplitDir(Option<PathBuf>);

impl Drop for SplitDir {
    fn drop(&mut self) {
        if let Some(dir) = &self.0 {
            let _ = fs::remove_dir_all(dir);
        }
    }
}

fn with_random_file(cfg: &mut RunConfig, common: &Common) -> Result<SplitDir> {
    // A single file feeds both parties: first half Alice, second half Bob.
    let Some(path) = &common.random_file else { return Ok(SplitDir(None)) };
    let bytes = fs::read(path)?;
    if bytes.len() < 2 {
        return Err(Error::Config(format!("random file {} too short to split", path.display())));
    }
    let dir = std::env::temp_dir().join(format!("qscf-split-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    let guard = SplitDir(Some(dir.clone()));
    let (a, b) = bytes.split_at(bytes.len() / 2);
    let (pa, pb) = (dir.join("alice.bin"), dir.join("bob.bin"));
    fs::write(&pa, a)?;
    fs::write(&pb, b)?;
    cfg.scenario.rng.alice = BitSourceSpec::File(pa);
    cfg.scenario.rng.bob = BitSourceSpec::File(pb);
    Ok(guard)
}

fn party_bits(cfg: &RunConfig, common: &Common, alice: bool) -> Result<BitSource> {
    match &common.random_file {
        Some(p) => BitSource::from_file(p),
        None => open_bit_source(if alice { &cfg.scenario.rng.alice } else { &cfg.scenario.rng.bob }),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let common = cli.command.common();
    let mut cfg = load(common)?;
    match &cli.command {
        Command::Analyze { source, .. } => {
            if let Some(kind) = source {
                let mu = cfg.scenario.source.mu;
                cfg.scenario.source = match SourceKind::from(*kind) {
                    SourceKind::Wcp => SourceSpec::wcp(mu)?,
                    SourceKind::Sps => SourceSpec::sps(mu, cfg.scenario.source.g2.min(0.999))?,
                };
            }
            let r = quantum_gain(&cfg.scenario)?;
            let mut fields = vec![("scenario", scenario_fields(&cfg.scenario))];
            fields.extend(report_fields(&r));
            emit(common, &render(common, &fields))
        }
        Command::Simulate { flips, iotable, cheat_target, .. } => {
            let _split = with_random_file(&mut cfg, common)?;
            let n = flips.or(cfg.n_flips).unwrap_or(50_000);
            let sim = Simulator::new(&cfg.scenario)?;
            if let Some(target) = cheat_target {
                let c = sim.cheat_session(&cfg.scenario.rng, *target, n, common.jobs)?;
                let analytic = bob_cheat_prob(cfg.scenario.a.value(), sim.channel().stats(), sim.pulses())?;
                let fields = vec![
                    ("scenario", scenario_fields(&cfg.scenario)),
                    ("seed", Value::from(cfg.seed)),
                    ("desired_bit", Value::from(c.desired_bit)),
                    ("n_flips", Value::from(c.n_flips)),
                    ("n_detected", Value::from(c.n_detected)),
                    ("n_multiphoton", Value::from(c.n_multiphoton)),
                    ("n_success", Value::from(c.n_success)),
                    ("success_prob", num(c.success_prob)),
                    ("sigma", num(c.sigma)),
                    ("p_bob_analytic", num(analytic)),
                    ("within_4sigma", Value::from((c.success_prob - analytic).abs() <= 4.0 * c.sigma.max(1e-12))),
                ];
                return emit(common, &render(common, &fields));
            }
            let outcomes = sim.honest_outcomes(&cfg.scenario.rng, n, common.jobs)?;
            let s =
                crate::protocol_engine::SessionStats::from_outcomes(&outcomes, sim.pulses(), cfg.scenario.clock_hz)?;
            let h = honest_abort_prob(cfg.scenario.link.qber, sim.channel().click_prob(), sim.pulses());
            let h_mc = s.honest_abort_freq();
            let sigma = s.sigma(h);
            let fields = vec![
                ("scenario", scenario_fields(&cfg.scenario)),
                ("seed", Value::from(cfg.seed)),
                ("n_flips", Value::from(s.n_flips)),
                ("n_success", Value::from(s.n_success)),
                ("n_abort_nodetect", Value::from(s.n_abort_nodetect)),
                ("n_abort_mismatch", Value::from(s.n_abort_mismatch)),
                ("p0_hat", num(s.p0_hat)),
                ("p1_hat", num(s.p1_hat)),
                ("p0_pct", pct(s.p0_hat)),
                ("p1_pct", pct(s.p1_hat)),
                ("honest_abort_mc", num(h_mc)),
                ("honest_abort_mc_pct", pct(h_mc)),
                ("honest_abort_analytic", num(h)),
                ("sigma", num(sigma)),
                ("within_4sigma", Value::from((h_mc - h).abs() <= 4.0 * sigma)),
                ("duration_model_s", num(s.duration_model_s)),
                ("rate_hz", num(s.rate_hz)),
                ("alice_bits", Value::from(s.alice_bits)),
                ("bob_bits", Value::from(s.bob_bits)),
            ];
            if let Some(path) = iotable {
                fs::write(path, SimulatedIoTable::from_outcomes(&outcomes).table.to_csv())?;
            }
            emit(common, &render(common, &fields))
        }
        Command::Sweep { source, fixed_a, .. } => {
            let kind = source.map(SourceKind::from).unwrap_or(cfg.scenario.source.kind);
            let mut spec = cfg.sweep_spec(kind);
            if kind == SourceKind::Sps && cfg.scenario.source.kind == SourceKind::Wcp {
                return Err(Error::Config("SPS sweep needs g2; use an sps config".into()));
            }
            if let Some(a) = fixed_a {
                alice_cheat_prob(*a).map_err(|e| Error::Config(e.to_string()))?;
                spec.fixed_a = Some(*a);
            }
            let map = sweep_gain(&spec, common.jobs)?;
            match common.format {
                Format::Csv => emit(common, &map.to_csv()),
                Format::Json => {
                    let mut s = serde_json::to_string_pretty(&map).expect("json");
                    s.push('\n');
                    emit(common, &s)
                }
            }
        }
        Command::Iotable { flips, .. } => {
            let _split = with_random_file(&mut cfg, common)?;
            let table = match flips {
                None => expected_io_table(cfg.scenario.a, cfg.scenario.link.qber)?,
                Some(n) => {
                    let sim = Simulator::new(&cfg.scenario)?;
                    let t =
                        SimulatedIoTable::from_outcomes(&sim.honest_outcomes(&cfg.scenario.rng, *n, common.jobs)?);
                    for (i, short) in t.insufficient.iter().enumerate() {
                        if *short {
                            eprintln!("qscf: row {i} has only {} detections", t.row_totals[i]);
                        }
                    }
                    t.table
                }
            };
            match common.format {
                Format::Csv => emit(common, &table.to_csv()),
                Format::Json => emit(common, &format!("{}\n", serde_json::to_string_pretty(&table).expect("json"))),
            }
        }
        Command::Fairness { .. } => {
            let stats = cfg.scenario.statistics()?;
            let k = cfg.scenario.pulses_per_flip;
            let a = solve_fair_a(&stats, k)?.value();
            let pa = alice_cheat_prob(a)?;
            let pb = bob_cheat_prob(a, &stats, k)?;
            let fields = vec![
                ("scenario", scenario_fields(&cfg.scenario)),
                ("a_star", Value::from(a)),
                ("p_alice", num(pa)),
                ("p_bob", num(pb)),
                ("residual", Value::from(pa - pb)),
            ];
            emit(common, &render(common, &fields))
        }
        Command::Alice { connect, flips, log, .. } => {
            let mut bits = party_bits(&cfg, common, true)?;
            let mut stream = FrameStream::tcp(TcpStream::connect(connect)?)?;
            let n = flips.or(cfg.n_flips).unwrap_or(1000);
            let s = run_alice(&mut stream, &cfg.scenario, &mut bits, n)?;
            party_output(common, &s, log.as_ref())
        }
        Command::Bob { connect, cheat, target, log, .. } => {
            let cheat_target = if *cheat { Some(target.unwrap_or(1)) } else { None };
            if matches!(cheat_target, Some(t) if t > 1) {
                return Err(Error::Config("--target must be 0 or 1".into()));
            }
            let mut bits = party_bits(&cfg, common, false)?;
            let mut stream = FrameStream::tcp(TcpStream::connect(connect)?)?;
            let s = run_bob(&mut stream, &cfg.scenario, &mut bits, cheat_target)?;
            party_output(common, &s, log.as_ref())
        }
        Command::Physics { listen, .. } => {
            let listener = TcpListener::bind(listen)?;
            eprintln!("qscf physics listening on {}", listener.local_addr()?);
            let summary = match serve_physics_on(&listener, &cfg.scenario, cfg.scenario.rng.physics_seed) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("qscf physics: rejected session: {e}");
                    return Err(e);
                }
            };
            let mut s = serde_json::to_string_pretty(&summary).expect("json");
            s.push('\n');
            emit(common, &s)?;
            match summary.error {
                Some(e) => Err(Error::Protocol(e)),
                None => Ok(()),
            }
        }
    }
}

fn party_output(common: &Common, s: &PartySummary, log: Option<&PathBuf>) -> Result<()> {
    if let Some(path) = log {
        fs::write(path, s.transcript_lines())?;
    }
    let mut v = serde_json::to_value(s).expect("json");
    if let (Some(target), Value::Object(m)) = (s.cheat_target, &mut v) {
        m.insert("bias_toward_target".into(), num(s.bias_toward(target)));
    }
    let mut text = serde_json::to_string_pretty(&v).expect("json");
    text.push('\n');
    emit(common, &text)
}
