use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sdot_cli::commands;
use sdot_core::wasserstein::{exact_reference, ReferenceProblem};
use sdot_core::{ErrorCategory, Result, SdotError};

/// Semi-discrete optimal transport by the boundary method.
#[derive(Parser)]
#[command(name = "sdot", version)]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and write its summary.
    Solve {
        /// Config file, or the name of a bundled config.
        #[arg(long)]
        config: String,
        /// Output directory; the summary goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve, then raster the reconstructed partition to a P6 pixmap.
    Partition {
        #[arg(long)]
        config: String,
        #[arg(long)]
        image: PathBuf,
        /// Cells per axis.
        #[arg(long, default_value_t = 512)]
        resolution: usize,
        /// Darken cells where the source density vanishes.
        #[arg(long)]
        shade_zero: bool,
    },
    /// Time a problem over a range of final widths and fit power laws.
    Bench {
        /// Bundled config name or config path.
        #[arg(long, alias = "config")]
        problem: String,
        /// Final width exponents, e.g. `9..12`.
        #[arg(long, default_value = "9..12")]
        widths: String,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Directory for `bench.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reference computations for spot checks.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exact transport cost of a reference problem.
    Reference { problem: Reference },
    /// Domain cost integral for one target: closed form against quadrature.
    Integral {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        target: usize,
        #[arg(long, default_value_t = 10)]
        depth: u32,
    },
    /// Exact optimum of a small dense instance given as JSON.
    Transport {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    Nwse,
    Grid4x4,
}

fn exec(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { config, out } => {
            let cfg = commands::resolve_config(&config)?;
            let (summary, result) = commands::solve(&cfg)?;
            match out {
                Some(dir) => commands::write_solve_outputs(&dir, &cfg, &summary, &result)?,
                None => println!("{}", summary.to_json()),
            }
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Partition {
            config,
            image,
            resolution,
            shade_zero,
        } => {
            let cfg = commands::resolve_config(&config)?;
            let rc = cfg.to_run_config()?;
            let (pixmap, raster) = commands::partition(&cfg, resolution, shade_zero)?;
            pixmap.write(&image)?;
            let masses = raster.region_masses(&rc.density, rc.side, rc.n());
            for (i, m) in masses.iter().enumerate() {
                println!("region {i}: mass {m:.6} (target {:.6})", rc.weights[i]);
            }
        }
        Command::Bench {
            problem,
            widths,
            repeats,
            out,
        } => {
            let cfg = commands::resolve_config(&problem)?;
            let report = commands::bench(&cfg, &commands::parse_widths(&widths)?, repeats)?;
            let csv = commands::bench_csv(&report);
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("bench.csv"), &csv)?;
                }
                None => print!("{csv}"),
            }
            for (what, fit) in [
                ("time", report.time_fit),
                ("peak boxes", report.storage_fit),
            ] {
                match fit {
                    Some(f) => println!(
                        "{what} ~ {:.4e} W^{:.3} (R^2 = {:.4})",
                        f.prefactor, f.exponent, f.r_squared
                    ),
                    None => println!("{what}: not enough widths to fit"),
                }
            }
        }
        Command::Oracle { which } => match which {
            OracleCommand::Reference { problem } => {
                let p = match problem {
                    Reference::Nwse => ReferenceProblem::Nwse,
                    Reference::Grid4x4 => ReferenceProblem::Grid4x4,
                };
                println!("{}", exact_reference(p));
            }
            OracleCommand::Integral {
                config,
                target,
                depth,
            } => {
                if depth > 12 {
                    return Err(SdotError::InvalidInput("depth must be at most 12".into()));
                }
                let cfg = commands::resolve_config(&config)?;
                let (closed, riemann) = commands::oracle_integral(&cfg, target, depth)?;
                match closed {
                    Some(c) => println!(
                        "closed form {c}\nriemann     {riemann}\nrel diff    {:e}",
                        (c - riemann).abs() / c.abs()
                    ),
                    None => println!("closed form unavailable\nriemann     {riemann}"),
                }
            }
            OracleCommand::Transport { file } => {
                let plan = commands::oracle_transport(&std::fs::read_to_string(file)?)?;
                println!(
                    "{}",
                    serde_json::json!({ "cost": plan.cost, "plan": plan.plan })
                );
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
    {
        eprintln!("warning: thread pool: {e}");
    }
    match exec(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, category) = match e.category() {
                ErrorCategory::Config => (2, "config"),
                ErrorCategory::Numerical => (3, "numerical"),
                ErrorCategory::Io => (4, "io"),
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": category, "message": e.to_string() })
            );
            ExitCode::from(code)
        }
    }
}
