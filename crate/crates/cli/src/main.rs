use clap::{Parser, Subcommand};
use mimo_harq_cli::config::{ExperimentKind, SEED_ENV};
use mimo_harq_cli::figures::{figure_specs, FIGURES};
use mimo_harq_cli::{load_spec, run_experiment, write_outputs, ConfigError, ExperimentSpec, OutputError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 1;
const EXIT_ALL_FAILED: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "mimo-harq", version, about = "Rate correlation, coverage, delay and throughput experiments")]
struct Cli {
    /// Worker threads for trials and grid points; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML config or rerun a manifest.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Fill the wall_time_s column (makes the CSV run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Check a config and print it with every default filled in.
    Validate { config: PathBuf },
    /// List experiment kinds and figure presets.
    ListExperiments,
    /// Run the desk-scale preset of one figure (1 to 9).
    ReproduceFigure {
        figure: u32,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        timing: bool,
        /// Print the preset configs instead of running them.
        #[arg(long)]
        print_config: bool,
    },
}

enum Failure {
    Config(ConfigError),
    AllFailed(String),
    Output(OutputError),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, msg) = match self {
            Failure::Config(ConfigError::Io { path, source }) => {
                (EXIT_IO, format!("cannot read {}: {source}", path.display()))
            }
            Failure::Config(e) => (EXIT_CONFIG, e.to_string()),
            Failure::AllFailed(name) => (EXIT_ALL_FAILED, format!("{name}: every point failed")),
            Failure::Output(e) => (EXIT_IO, e.to_string()),
        };
        eprintln!("error: {msg}");
        ExitCode::from(code)
    }
}

fn run_one(spec: &ExperimentSpec, out: &Path, timing: bool) -> Result<(), Failure> {
    let rows = run_experiment(spec, timing);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let files = write_outputs(spec, &rows, out).map_err(Failure::Output)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    if failed > 0 {
        eprintln!("{}: {failed} of {} rows failed, see the error column", spec.name, rows.len());
    }
    if !rows.is_empty() && failed == rows.len() {
        return Err(Failure::AllFailed(spec.name.clone()));
    }
    Ok(())
}

fn list() {
    println!("experiment kinds:");
    for k in ExperimentKind::ALL {
        let sweep = k.default_sweep();
        let backends: Vec<&str> = k.supported_backends().iter().map(|b| b.name()).collect();
        println!(
            "  {:<20} figure {}  {}\n  {:<20} default sweep {} = {:?}; backends: {}",
            k.name(),
            k.figure(),
            k.describe(),
            "",
            sweep.variable,
            sweep.values,
            backends.join(", ")
        );
    }
    println!("figure presets (reproduce-figure N):");
    for n in FIGURES {
        let names: Vec<String> = figure_specs(n).unwrap().into_iter().map(|s| s.name).collect();
        println!("  {n}: {}", names.join(", "));
    }
    println!("seed: sim.seed in the config, else ${SEED_ENV}, else the built-in default");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match cli.command {
        Command::Run { config, out, timing } => load_spec(&config)
            .map_err(Failure::Config)
            .and_then(|spec| run_one(&spec, &out, timing)),
        Command::Validate { config } => load_spec(&config).map_err(Failure::Config).map(|spec| {
            print!("{}", toml::to_string(&spec).expect("resolved spec serializes"));
        }),
        Command::ListExperiments => {
            list();
            Ok(())
        }
        Command::ReproduceFigure {
            figure,
            out,
            timing,
            print_config,
        } => match figure_specs(figure) {
            None => Err(Failure::Config(ConfigError::Invalid(vec![format!(
                "figure: {figure} is not in 1..=9"
            )]))),
            Some(specs) if print_config => {
                for s in &specs {
                    println!("# {}\n{}", s.name, toml::to_string(s).expect("preset serializes"));
                }
                Ok(())
            }
            Some(specs) => specs.iter().try_for_each(|s| run_one(s, &out, timing)),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
