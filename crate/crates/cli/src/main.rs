use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conjpair_cli::commands::{
    cmd_check_cr, cmd_convergence, cmd_dtn, cmd_mesh, cmd_solve, cmd_verify,
};
use conjpair_cli::config::CheckCrSection;
use conjpair_cli::{init_threads, CliError, Outcome, RunConfig};

#[derive(Parser)]
#[command(
    name = "conjpair",
    version,
    about = "Conjugate harmonic pairs on tetrahedral meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mesh level override.
    #[arg(long)]
    level: Option<usize>,
    /// Seed override for the default starting vector.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mesh and write it with its statistics.
    Mesh(Common),
    /// Run the alternating pair solve.
    Solve(Common),
    /// Residual report for fields stored in a VTK file.
    Verify(Common),
    /// Dirichlet-to-Neumann maps and the pairwise experiment.
    Dtn(Common),
    /// Refinement study written as CSV.
    Convergence(Common),
    /// Relaxed Cauchy-Riemann residual of a 3×3 matrix.
    CheckCr(Common),
}

fn load(c: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(l) = c.level {
        cfg.level = l;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = match (&c.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => cfg.resolve(o),
        (None, None) => PathBuf::from("out"),
    };
    Ok((cfg, out))
}

type Handler = fn(&RunConfig, &std::path::Path) -> Result<Outcome, CliError>;

fn run(cli: Cli) -> Result<Outcome, CliError> {
    init_threads()?;
    let (common, f): (&Common, Handler) = match &cli.command {
        Command::Mesh(c) => (c, cmd_mesh),
        Command::Solve(c) => (c, cmd_solve),
        Command::Verify(c) => (c, cmd_verify),
        Command::Dtn(c) => (c, cmd_dtn),
        Command::Convergence(c) => (c, cmd_convergence),
        Command::CheckCr(c) => (c, |cfg, out| {
            let s: &CheckCrSection = cfg
                .check_cr
                .as_ref()
                .ok_or_else(|| CliError::Config("check-cr needs a `check_cr` table".into()))?;
            cmd_check_cr(s, out)
        }),
    };
    let (cfg, out) = load(common)?;
    f(&cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
