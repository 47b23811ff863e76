use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use feedmix::cli::{self, Method, OutFormat};

#[derive(Parser)]
#[command(name = "feedmix", version, about = "Feedstock-import mix optimization")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Check whether the scenario admits any feasible mix
    Check { file: PathBuf },
    /// Solve the scenario and print the optimal mix
    Solve {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        method: Method,
        #[arg(long, value_enum, default_value = "table")]
        format: OutFormat,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grid resolution override for the oracle method
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// Print productive potentials and the interchangeability verdict
    Potentials { file: PathBuf },
    /// Re-solve while sweeping one parameter, emitting CSV
    Sweep {
        file: PathBuf,
        /// Parameter selector: Q, gamma, r, or field[index] with field one of
        /// lambda, c, C, mu, W
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let code = match args.command {
        Commands::Check { file } => cli::cmd_check(&file),
        Commands::Solve {
            file,
            method,
            format,
            seed,
            grid_points,
        } => cli::cmd_solve(&file, method, format, seed, grid_points),
        Commands::Potentials { file } => cli::cmd_potentials(&file),
        Commands::Sweep {
            file,
            param,
            from,
            to,
            steps,
            out,
        } => cli::cmd_sweep(&file, &param, from, to, steps, out.as_deref()),
    };
    ExitCode::from(code as u8)
}
