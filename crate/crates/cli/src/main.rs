use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use silflight::companion::{run_rtt_benchmark, BenchConfig, BenchMode, TransportKind};
use silflight::control_allocation::{
    load_custom, LoadedMixer, MixerConfig, MixerSlot, PredefinedMixer, NUM_INPUTS, NUM_OUTPUTS,
};
use silflight::firmware::{Firmware, FirmwareConfig, ParamStore, ParamView};
use silflight::sim::{bundled, ScenarioConfig, Simulation, BUNDLED};

mod plot;

/// Exit status for a run that finished but broke a simulation invariant.
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "silflight", version, about = "Software-in-the-loop flight stack workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run closed-loop scenarios.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Serial link benchmarks.
    #[command(subcommand)]
    Benchmark(BenchCommand),
    /// Inspect mixers.
    #[command(subcommand)]
    Mixer(MixerCommand),
    /// Read and write parameter files.
    #[command(subcommand)]
    Param(ParamCommand),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run a scenario file or a bundled scenario by name.
    Run(SimRunArgs),
    /// List the bundled scenarios.
    List,
}

#[derive(Args)]
struct SimRunArgs {
    /// Path to a scenario TOML file, or the name of a bundled scenario.
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write gnuplot data and script (and a PNG if gnuplot is installed).
    #[arg(long)]
    plot: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Round-trip time of offboard commands echoed by the firmware.
    Rtt(RttArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Socket,
}

#[derive(Args)]
struct RttArgs {
    /// Send rate in Hz.
    #[arg(long, default_value_t = 400.0, conflicts_with = "max_rate")]
    rate: f64,
    /// Send the next command as soon as the previous echo returns.
    #[arg(long)]
    max_rate: bool,
    /// Seconds to run.
    #[arg(long, default_value_t = 5.0)]
    duration: f64,
    #[arg(long, value_enum, default_value = "inproc")]
    transport: TransportArg,
    /// Delay added to each direction of the in-process link, in milliseconds.
    #[arg(long, default_value_t = 0.0)]
    inject_delay: f64,
}

#[derive(Subcommand)]
enum MixerCommand {
    /// Print M, M†, rank, Moore-Penrose residuals and channel headers.
    Check {
        /// Predefined mixer name, or a parameter file holding a custom mixer.
        mixer: String,
        /// Which custom slot to read from a parameter file.
        #[arg(long, value_enum, default_value = "primary")]
        slot: SlotArg,
    },
    /// List the predefined mixers.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum SlotArg {
    Primary,
    Secondary,
}

#[derive(Subcommand)]
enum ParamCommand {
    /// Print one parameter (file values over defaults).
    Get { file: PathBuf, name: String },
    /// Set one parameter in a file, creating the file if needed.
    Set { file: PathBuf, name: String, value: String },
    /// Print every parameter, defaults included.
    Dump { file: Option<PathBuf> },
    /// Check that a file parses and that the mixers it selects load.
    Load { file: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sim(SimCommand::Run(args)) => sim_run(&args),
        Command::Sim(SimCommand::List) => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Benchmark(BenchCommand::Rtt(args)) => benchmark_rtt(&args),
        Command::Mixer(MixerCommand::Check { mixer, slot }) => mixer_check(&mixer, slot),
        Command::Mixer(MixerCommand::List) => {
            for m in PredefinedMixer::ALL {
                println!("{m}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Param(cmd) => param(cmd),
    }
}

fn scenario_text(arg: &str) -> Result<(String, String)> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((path.display().to_string(), text));
    }
    match bundled(arg) {
        Some(text) => Ok((format!("bundled:{arg}"), text.to_string())),
        None => bail!("no scenario file or bundled scenario named '{arg}'"),
    }
}

fn sim_run(args: &SimRunArgs) -> Result<ExitCode> {
    let (source, text) = scenario_text(&args.scenario)?;
    let mut cfg = ScenarioConfig::from_toml(&text).with_context(|| format!("loading {source}"))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let res = Simulation::new(cfg)?.run();

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let stem = args.out.join(&res.name);
    let csv = res.csv();
    let csv_path = stem.with_extension("csv");
    fs::write(&csv_path, &csv)?;
    fs::write(stem.with_extension("events.log"), res.events_text())?;
    let mut summary = res.summary();
    let _ = writeln!(summary, "csv sha256: {}", hex::encode(Sha256::digest(csv.as_bytes())));
    let violations = res.violations();
    for v in &violations {
        let _ = writeln!(summary, "violation: {v}");
    }
    fs::write(stem.with_extension("summary.txt"), &summary)?;
    print!("{summary}");
    println!("wrote {}", csv_path.display());

    if args.plot {
        let written = plot::write(&res, &stem)?;
        for p in &written.files {
            println!("wrote {}", p.display());
        }
        if let Some(note) = written.note {
            println!("{note}");
        }
    }

    if violations.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("invariant violated: {}", violations.join("; "));
        Ok(ExitCode::from(EXIT_VIOLATION))
    }
}

fn benchmark_rtt(args: &RttArgs) -> Result<ExitCode> {
    if !(args.duration.is_finite() && args.duration > 0.0) {
        bail!("--duration must be positive");
    }
    if !(args.inject_delay.is_finite() && args.inject_delay >= 0.0) {
        bail!("--inject-delay must be non-negative");
    }
    let mode = if args.max_rate {
        BenchMode::MaxRate
    } else {
        if !(args.rate.is_finite() && args.rate > 0.0) {
            bail!("--rate must be positive");
        }
        BenchMode::Rate(args.rate)
    };
    let transport = match args.transport {
        TransportArg::Inproc => TransportKind::Inproc,
        TransportArg::Socket => TransportKind::Socket,
    };
    let cfg = BenchConfig {
        transport,
        mode,
        duration: Duration::from_secs_f64(args.duration),
        inject_delay: Duration::from_secs_f64(args.inject_delay * 1e-3),
    };
    let report = run_rtt_benchmark(&cfg)?;
    let rate = match mode {
        BenchMode::Rate(hz) => format!("{hz} Hz"),
        BenchMode::MaxRate => "max rate".to_string(),
    };
    println!(
        "transport {:?}, {rate}, {} s, injected {} ms each way",
        transport, args.duration, args.inject_delay
    );
    print!("{}", report.table());
    println!(
        "sent {}, echoed {}, samples {}, payload integrity {:.1}%, {:.0} payload bytes/s",
        report.sent,
        report.received,
        report.stats.count,
        report.payload_integrity() * 100.0,
        report.payload_bytes_per_s
    );
    Ok(ExitCode::SUCCESS)
}

fn fmt_matrix(rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) -> String {
    let mut out = String::new();
    for r in 0..rows {
        for c in 0..cols {
            let _ = write!(out, "{:>10.4}", at(r, c));
        }
        out.push('\n');
    }
    out
}

fn resolve_mixer(arg: &str, slot: SlotArg) -> Result<(MixerConfig, Vec<String>)> {
    if let Ok(m) = arg.parse::<PredefinedMixer>() {
        return Ok((m.config(), Vec::new()));
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!("'{arg}' is neither a predefined mixer ({}) nor a file", predefined_names());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut store = ParamStore::new();
    store.load_text(&text).with_context(|| format!("{}", path.display()))?;
    let slot = match slot {
        SlotArg::Primary => MixerSlot::Primary,
        SlotArg::Secondary => MixerSlot::Secondary,
    };
    let (cfg, warnings) = load_custom(&store as &dyn ParamView, slot)?;
    let notes = warnings.iter().map(|w| format!("{}: {}", w.param, w.message)).collect();
    Ok((cfg, notes))
}

fn predefined_names() -> String {
    PredefinedMixer::ALL.map(|m| m.name()).join(", ")
}

fn mixer_check(arg: &str, slot: SlotArg) -> Result<ExitCode> {
    let (cfg, notes) = resolve_mixer(arg, slot)?;
    let mixer = LoadedMixer::load(cfg)?;
    let mut out = String::new();
    let _ = writeln!(out, "mixer {} ({:?} form)", mixer.name(), mixer.config.form);
    let _ = writeln!(out, "M (rows inputs u0-u5, columns channels 0-9):");
    out.push_str(&fmt_matrix(NUM_INPUTS, NUM_OUTPUTS, |r, c| mixer.forward[(r, c)]));
    let _ = writeln!(out, "M† (rows channels 0-9, columns inputs u0-u5):");
    out.push_str(&fmt_matrix(NUM_OUTPUTS, NUM_INPUTS, |r, c| mixer.inverse[(r, c)]));
    let active_rows = (0..NUM_INPUTS).filter(|&r| mixer.forward.row(r).iter().any(|v| *v != 0.0)).count();
    let _ = writeln!(out, "rank {} ({} nonzero input rows)", mixer.rank, active_rows);
    let r = mixer.residuals();
    let _ = writeln!(
        out,
        "residuals: |MXM-M| {:.2e}  |XMX-X| {:.2e}  |(MX)'-MX| {:.2e}  |(XM)'-XM| {:.2e}",
        r[0], r[1], r[2], r[3]
    );
    let _ = writeln!(out, "channels:");
    for (c, ch) in mixer.channels().iter().enumerate() {
        let _ = writeln!(out, "  {c}: {:?} @ {} Hz", ch.kind, ch.rate);
    }
    for n in &notes {
        let _ = writeln!(out, "note: {n}");
    }
    if mixer.rank == 0 || mixer.rank < active_rows {
        let _ = writeln!(out, "warning: rank deficient (rank {} < {} controlled inputs)", mixer.rank, active_rows.max(1));
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn load_store(file: &Path, must_exist: bool) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    if file.exists() {
        let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        store.load_text(&text).with_context(|| format!("{}", file.display()))?;
    } else if must_exist {
        bail!("{} does not exist", file.display());
    }
    Ok(store)
}

fn explicit_dump(store: &ParamStore) -> String {
    let mut out = String::new();
    for name in store.names().filter(|n| store.is_explicit(n)) {
        let _ = writeln!(out, "{name} {}", store.get(name).expect("listed name"));
    }
    out
}

fn param(cmd: ParamCommand) -> Result<ExitCode> {
    match cmd {
        ParamCommand::Get { file, name } => {
            let store = load_store(&file, true)?;
            println!("{}", store.get(&name)?);
        }
        ParamCommand::Set { file, name, value } => {
            let mut store = load_store(&file, false)?;
            store.set_from_str(&name, &value)?;
            fs::write(&file, explicit_dump(&store)).with_context(|| format!("writing {}", file.display()))?;
            println!("{name} {}", store.get(&name)?);
        }
        ParamCommand::Dump { file } => {
            let store = match file {
                Some(f) => load_store(&f, true)?,
                None => ParamStore::new(),
            };
            print!("{}", store.dump());
        }
        ParamCommand::Load { file } => {
            let store = load_store(&file, true)?;
            let set = store.names().filter(|n| store.is_explicit(n)).count();
            let fw = Firmware::new(store, FirmwareConfig::default())?;
            println!(
                "{}: {set} parameters set; primary mixer {}, secondary mixer {}",
                file.display(),
                fw.primary_mixer().name(),
                fw.secondary_mixer().name()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
