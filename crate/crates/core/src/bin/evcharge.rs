//! Command-line front end: simulate, evaluate, bench, gen-data, inspect-station.
//!
//! Exit codes: 0 success, 2 usage error, 3 configuration or data error,
//! 1 anything else (for example an unwritable output path).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evcharge::config::{ConfigError, RunConfig};
use evcharge::exogenous::{generate_synthetic_defaults, CarRegion, PriceRegion, Traffic, UserScenario};
use evcharge::harness::{self, Format, HarnessError, PolicyKind};
use evcharge::topology::Layout;
use evcharge::ChargingEnv;

#[derive(Parser, Debug)]
#[command(name = "evcharge", version, about = "EV charging station simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (JSON, or TOML with a .toml extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory with prices.csv, arrivals.csv, cars.csv, users.json, aux.csv.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Station tree JSON file; overrides the preset.
    #[arg(long, global = true)]
    station: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    scenario: Option<ScenarioArg>,
    #[arg(long, global = true, value_enum)]
    traffic: Option<TrafficArg>,
    #[arg(long, global = true, value_enum)]
    car_region: Option<CarRegionArg>,
    #[arg(long, global = true, value_enum)]
    price_region: Option<PriceRegionArg>,
    #[arg(long, global = true, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long, global = true)]
    ac_ports: Option<usize>,
    #[arg(long, global = true)]
    dc_ports: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run episodes of one environment and write the per-step trajectory.
    Simulate {
        #[arg(long, default_value = "max-charge", value_parser = parse_policy)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
    },
    /// Evaluate a baseline over paired seeds and write a metrics report.
    Evaluate {
        #[arg(long, default_value = "max-charge", value_parser = parse_policy)]
        policy: PolicyKind,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        batch: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
    },
    /// Time random-action stepping.
    Bench {
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        batch: u64,
        #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
    },
    /// Write the synthetic datasets as CSV/JSON files into a directory.
    GenData {
        /// Target directory (created if missing).
        dir: PathBuf,
    },
    /// Print the station tree.
    InspectStation,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioArg {
    Highway,
    Residential,
    Work,
    Shopping,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TrafficArg {
    Low,
    Medium,
    High,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CarRegionArg {
    Europe,
    Us,
    World,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PriceRegionArg {
    Nl,
    Fr,
    De,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutArg {
    SingleType,
    MultiType,
    NestedSplitters,
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Harness(HarnessError),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 3,
            Self::Harness(HarnessError::InvalidArgument(_)) => 2,
            Self::Harness(HarnessError::Env(_)) => 3,
            Self::Harness(_) | Self::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Harness(e) => write!(f, "{e}"),
            Self::Io(e) => f.write_str(e),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        Self::Harness(e)
    }
}

impl Common {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data_dir {
            cfg.data.dir = Some(d.clone());
        }
        if let Some(s) = &self.station {
            cfg.station.file = Some(s.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let syn = &mut cfg.data.synthetic;
        if let Some(s) = self.scenario {
            syn.scenario = match s {
                ScenarioArg::Highway => UserScenario::Highway,
                ScenarioArg::Residential => UserScenario::Residential,
                ScenarioArg::Work => UserScenario::Work,
                ScenarioArg::Shopping => UserScenario::Shopping,
            };
        }
        if let Some(t) = self.traffic {
            syn.traffic = match t {
                TrafficArg::Low => Traffic::Low,
                TrafficArg::Medium => Traffic::Medium,
                TrafficArg::High => Traffic::High,
            };
        }
        if let Some(c) = self.car_region {
            syn.cars = match c {
                CarRegionArg::Europe => CarRegion::Europe,
                CarRegionArg::Us => CarRegion::Us,
                CarRegionArg::World => CarRegion::World,
            };
        }
        if let Some(p) = self.price_region {
            syn.prices = match p {
                PriceRegionArg::Nl => PriceRegion::Nl,
                PriceRegionArg::Fr => PriceRegion::Fr,
                PriceRegionArg::De => PriceRegion::De,
            };
        }
        if let Some(l) = self.layout {
            cfg.station.layout = match l {
                LayoutArg::SingleType => Layout::SingleType,
                LayoutArg::MultiType => Layout::MultiType,
                LayoutArg::NestedSplitters => Layout::NestedSplitters,
            };
        }
        if let Some(n) = self.ac_ports {
            cfg.station.ac_ports = n;
        }
        if let Some(n) = self.dc_ports {
            cfg.station.dc_ports = n;
        }
        Ok(cfg)
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(p) => harness::write_output(p, text).map_err(CliError::from),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn workers(w: Option<u64>, cfg: &RunConfig) -> Option<usize> {
    w.map(|w| w as usize).or(cfg.workers)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let common = &cli.common;
    let cfg = common.run_config()?;
    match &cli.command {
        Command::Simulate { policy, episodes } => {
            let env = cfg.build_env()?;
            let rows = harness::simulate(&env, policy.policy(), cfg.seed, *episodes)?;
            common.emit(&harness::trajectory_to_string(&rows, common.format.unwrap_or(Format::Csv)))
        }
        Command::Evaluate { policy, episodes, batch, workers: w } => {
            let env = cfg.build_env()?;
            let episodes = episodes.map_or(cfg.episodes, |e| e as usize);
            let batch = batch.map_or(cfg.batch, |b| b as usize);
            let report = harness::evaluate(&env, policy.policy(), episodes, cfg.seed, batch, workers(*w, &cfg))?;
            if common.out.is_some() {
                eprintln!(
                    "{}: {} episodes, daily profit {:.3} +/- {:.3} EUR",
                    report.policy, report.episodes, report.mean_daily_profit_eur, report.std_daily_profit_eur
                );
            }
            common.emit(&harness::report_to_string(&report, common.format.unwrap_or(Format::Json)))
        }
        Command::Bench { batch, steps, workers: w } => {
            let env = cfg.build_env()?;
            let r = harness::bench(&env, *batch as usize, *steps, workers(*w, &cfg), cfg.seed)?;
            let text = match common.format {
                Some(Format::Json) => harness::to_stable_json(&r),
                _ => format!(
                    "envs: {}\nworkers: {}\nsteps: {}\nwall time: {:.3} s\nthroughput: {:.0} steps/s\nhardware: {}\n",
                    r.batch,
                    r.workers.map_or("all".to_string(), |w| w.to_string()),
                    r.total_steps,
                    r.wall_seconds,
                    r.steps_per_second,
                    r.hardware
                ),
            };
            common.emit(&text)
        }
        Command::GenData { dir } => gen_data(&cfg, dir),
        Command::InspectStation => inspect(&cfg.build_env()?, common),
    }
}

fn gen_data(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let data = generate_synthetic_defaults(&cfg.data.synthetic, cfg.data.seed, cfg.env.dt_min, cfg.env.episode_steps);
    data.write_dir(dir).map_err(|e| CliError::Io(e.to_string()))?;
    eprintln!("wrote synthetic datasets to {}", dir.display());
    Ok(())
}

fn inspect(env: &ChargingEnv, common: &Common) -> Result<(), CliError> {
    let tree = env.station();
    if let Some(Format::Json) = common.format {
        return common.emit(&format!("{}\n", tree.to_json_string()));
    }
    let mut s = format!("ports: {}\nnodes: {}\ndepth: {}\n", tree.num_ports(), tree.num_nodes(), tree.depth());
    s.push_str("node      capacity_a  eta    ports\n");
    for (id, cap, eta, leaves) in tree.node_summaries() {
        s.push_str(&format!("{id:<9} {cap:>10.1}  {eta:<5}  {}..{}\n", leaves.start, leaves.end));
    }
    s.push_str("port  id   kind  voltage_v  i_max_a  i_max_dis_a  eta_c  eta_d\n");
    for (p, e) in tree.evses().iter().enumerate() {
        s.push_str(&format!(
            "{p:<5} {:<4} {:<5} {:>9.1}  {:>7.1}  {:>11.1}  {:<5}  {:<5}\n",
            e.id,
            format!("{:?}", e.kind).to_uppercase(),
            e.voltage_v,
            e.i_max_charge_a,
            e.i_max_discharge_a,
            e.eta_charge,
            e.eta_discharge
        ));
    }
    s.push_str(&format!("parking order: {:?}\n", tree.parking_order()));
    match tree.battery() {
        Some(b) => s.push_str(&format!(
            "battery: {} kWh, {} kW, {} V (enabled: {})\n",
            b.capacity_kwh,
            b.r_max_kw,
            b.voltage_v,
            env.config().battery_enabled
        )),
        None => s.push_str("battery: none\n"),
    }
    common.emit(&s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
