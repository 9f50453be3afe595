use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use delayform::commands::{self, AnalyzeOptions, SimulateOptions, StabilityOptions, SurfaceOptions};
use delayform::core::quasipoly::{DelayPair, Gains};
use delayform::core::simulator::Model;
use delayform::Error;

#[derive(Parser)]
#[command(name = "delayform", version, about = "Delay-plane stability charts, abscissa surfaces and formation simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, spanning-tree check and factor inventory of a topology.
    Analyze {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value = "1,0.5", value_parser = parse_gains)]
        gains: Gains,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Crossing curves and the unstable-root count over [0, tau_max]^2.
    Stability {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value = "1,0.5", value_parser = parse_gains)]
        gains: Gains,
        #[arg(long, default_value_t = 8.0)]
        tau_max: f64,
        #[arg(long, default_value_t = 400)]
        resolution: usize,
        /// Delay pair `tau1,tau2` to classify exactly; repeatable.
        #[arg(long, value_parser = parse_delays)]
        query: Vec<DelayPair>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run a scenario and report the settle time.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModelArg::Unicycle)]
        model: ModelArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Rightmost-root real part over a delay window.
    Surface {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value = "1,0.5", value_parser = parse_gains)]
        gains: Gains,
        #[arg(long, default_value_t = 8.0)]
        tau_max: f64,
        /// `tau1_lo,tau1_hi,tau2_lo,tau2_hi`; defaults to [0, tau_max]^2.
        #[arg(long, value_parser = parse_window)]
        window: Option<[f64; 4]>,
        #[arg(long, default_value_t = 60)]
        resolution: usize,
        /// Comma-separated contour levels.
        #[arg(long, default_value = "0", value_delimiter = ',', allow_hyphen_values = true)]
        levels: Vec<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Linear,
    Unicycle,
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"))).collect()
}

fn parse_n<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v = parse_list(s)?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_gains(s: &str) -> Result<Gains, String> {
    let [p, d] = parse_n::<2>(s)?;
    Gains::new(p, d).map_err(|e| e.to_string())
}

fn parse_delays(s: &str) -> Result<DelayPair, String> {
    let [t1, t2] = parse_n::<2>(s)?;
    DelayPair::new(t1, t2).map_err(|e| e.to_string())
}

fn parse_window(s: &str) -> Result<[f64; 4], String> {
    parse_n::<4>(s)
}

fn print<T: serde::Serialize>(report: &T) {
    println!("{}", serde_json::to_string_pretty(report).expect("serialisable report"));
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Analyze { topology, gains, out_dir } => {
            let report = commands::analyze(&AnalyzeOptions { topology, gains, out_dir })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print(&report);
        }
        Command::Stability { topology, gains, tau_max, resolution, query, out_dir } => {
            let report = commands::stability(&StabilityOptions { topology, gains, tau_max, resolution, queries: query, out_dir })?;
            eprintln!("stable fraction {:.4} (area {:.4})", report.stable_fraction, report.stable_area);
            print(&report);
        }
        Command::Simulate { scenario, topology, model, seed, out_dir } => {
            let model = match model {
                ModelArg::Linear => Model::Linear,
                ModelArg::Unicycle => Model::Unicycle,
            };
            let report = commands::simulate(&SimulateOptions { scenario, topology, model, seed, out_dir })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print(&report);
            if let Some(time) = report.diverged_at {
                return Err(Error::Diverged { time });
            }
        }
        Command::Surface { topology, gains, tau_max, window, resolution, levels, out_dir } => {
            let window = window.unwrap_or([0.0, tau_max, 0.0, tau_max]);
            let report = commands::surface(&SurfaceOptions { topology, gains, window, resolution, levels, out_dir })?;
            let [t1, t2, s] = report.argmin;
            eprintln!("smallest abscissa {s:.6} at tau1={t1:.4}, tau2={t2:.4}");
            print(&report);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage errors are input errors; help and version are not.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
