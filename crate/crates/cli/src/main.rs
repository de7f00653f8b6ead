use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mixmom::config::{run, RunConfig, PRESETS};
use mixmom::entropy::{qm1_tabulate, TableSettings};
use mixmom::output::{check_realizability, write_cut, TableFile};
use mixmom::solver::{cut, CutKind};

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "MIXMOM_THREADS";

#[derive(Parser)]
#[command(name = "mixmom", version, about = "Moment-closure transport solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file.
    Run {
        config: PathBuf,
        /// `key=value` with a dotted key, e.g. `domain.nx=50`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a benchmark preset, or print its configuration.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the configuration instead of running it.
        #[arg(long)]
        print: bool,
    },
    /// Build the QM1 lookup table.
    Tabulate {
        #[arg(long, default_value_t = TableSettings::default().resolution)]
        resolution: usize,
        #[arg(long, default_value = "qm1_table.txt")]
        out: PathBuf,
    },
    /// Audit the realizability of every cell of a field file.
    Check {
        field: PathBuf,
        /// Number of lowest-margin cells to list.
        #[arg(long, default_value_t = 10)]
        worst: usize,
    },
    /// Extract horizontal and diagonal cuts from a field file.
    Cuts {
        field: PathBuf,
        /// Output directory; defaults to the directory of the field file.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn apply_overrides(mut c: RunConfig, overrides: &[String]) -> Result<RunConfig> {
    for o in overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override '{o}' is not KEY=VALUE"))?;
        c = c.with_override(k.trim(), v.trim())?;
    }
    Ok(c)
}

fn execute(c: &RunConfig) -> Result<()> {
    let out = run(c)?;
    let s = &out.summary;
    println!(
        "{}: mass {:.12e} -> {:.12e}, min u00 {:.3e}, limiter activations {}, symmetry error {:.4}, {:.2} s",
        c.output.dir.display(),
        s.mass_initial,
        s.mass_final,
        s.min_u00,
        s.limiter_activations,
        s.symmetry_error,
        s.wall_seconds
    );
    Ok(())
}

fn read_field(path: &Path) -> Result<TableFile> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    TableFile::parse(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_VAR}={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { config, overrides } => {
            let c = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            execute(&apply_overrides(c, &overrides)?)?;
        }
        Command::Preset { name, overrides, print } => {
            let c = apply_overrides(RunConfig::preset(&name)?, &overrides)?;
            if print {
                print!("{}", c.to_toml()?);
            } else {
                execute(&c)?;
            }
        }
        Command::Tabulate { resolution, out } => {
            let t = qm1_tabulate(TableSettings { resolution, ..TableSettings::default() })?;
            t.write(BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?))?;
            println!("wrote {} ({}x{} nodes, {} invalid)", out.display(), resolution, resolution, t.invalid_count());
        }
        Command::Check { field, worst } => {
            let state = read_field(&field)?.to_state()?;
            let report = check_realizability(&state, worst);
            report.write(std::io::stdout().lock())?;
            if report.violations > 0 || report.below_floor > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Cuts { field, out_dir } => {
            let state = read_field(&field)?.to_state()?;
            let dir = match out_dir {
                Some(d) => d,
                None => field.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let stem = field.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
            for k in [CutKind::Horizontal, CutKind::Diagonal] {
                let p = dir.join(format!("{stem}_cut_{}.txt", k.name()));
                write_cut(BufWriter::new(File::create(&p)?), state.kind, state.time, k.name(), &cut(&state, k))?;
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
