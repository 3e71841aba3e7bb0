//! `thinrod`: command-line driver.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.

mod commands;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thinrod_core::Error;

#[derive(Parser, Debug)]
#[command(name = "thinrod", version, about = "Thin elastic rods: cell problems, limit rod models and 3D minimization")]
struct Cli {
    /// Worker threads for element loops.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stored-energy checks.
    #[command(subcommand)]
    Material(MaterialCmd),
    /// Cross-section meshes.
    #[command(subcommand)]
    Section(SectionCmd),
    /// Cross-section cell problem.
    #[command(subcommand)]
    Cell(CellCmd),
    /// One-dimensional limit model.
    #[command(subcommand)]
    Rod(RodCmd),
    /// Finite-thickness minimization.
    #[command(subcommand)]
    Beam3d(BeamCmd),
    /// Thickness ladders.
    #[command(subcommand)]
    Converge(ConvergeCmd),
    /// Reports of finished ladders.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand, Debug)]
enum MaterialCmd {
    /// Relaxed Young's modulus and sampled hypothesis checks.
    Check(MaterialArgs),
}

#[derive(Subcommand, Debug)]
enum SectionCmd {
    /// Normalize a section and report its moments and mesh quality.
    Info(SectionArgs),
}

#[derive(Subcommand, Debug)]
enum CellCmd {
    /// Solve the cell problem and write `reduced_stiffness.json`.
    Solve(CellArgs),
}

#[derive(Subcommand, Debug)]
enum RodCmd {
    /// Solve the clamped-free rod equilibrium.
    Solve(RodArgs),
}

#[derive(Subcommand, Debug)]
enum BeamCmd {
    /// Minimize the rescaled 3D energy.
    Minimize(BeamArgs),
}

#[derive(Subcommand, Debug)]
enum ConvergeCmd {
    /// Run an h-ladder against the rod solution.
    Run(LadderArgs),
}

#[derive(Subcommand, Debug)]
enum ReportCmd {
    /// Re-render plots, rates and the CSV from a `report.json`.
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to `output_dir` of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed recorded in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct MaterialFlags {
    /// `neo-hookean` or `stvk-logdet`
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SectionFlags {
    /// `disc`, `square` or `file`
    #[arg(long)]
    pub generator: Option<String>,
    /// Rings of the disc mesh.
    #[arg(long)]
    pub rings: Option<usize>,
    /// Cells per side of the square mesh.
    #[arg(long)]
    pub n: Option<usize>,
    /// Section mesh JSON (`{"vertices": [...], "triangles": [...]}`).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MaterialArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub material: MaterialFlags,
    /// Random deformation gradients per hypothesis.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SectionArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub section: SectionFlags,
}

#[derive(Args, Debug)]
pub struct CellArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub material: MaterialFlags,
    #[command(flatten)]
    pub section: SectionFlags,
}

#[derive(Args, Debug)]
pub struct RodArgs {
    #[command(flatten)]
    pub common: Common,
    /// `reduced_stiffness.json` from `cell solve`.
    #[arg(long)]
    pub stiffness: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Load preset: `const:c`, `linear:a,b`, `sin:amp,k` or `zero`.
    #[arg(long)]
    pub f2: Option<String>,
    #[arg(long)]
    pub f3: Option<String>,
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BeamArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct LadderArgs {
    /// Ladder configuration (same schema as `--config`).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// A `report.json` written by `converge run`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start worker threads: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Material(MaterialCmd::Check(a)) => commands::material_check(a),
        Command::Section(SectionCmd::Info(a)) => commands::section_info(a),
        Command::Cell(CellCmd::Solve(a)) => commands::cell_solve(a),
        Command::Rod(RodCmd::Solve(a)) => commands::rod_solve(a),
        Command::Beam3d(BeamCmd::Minimize(a)) => commands::beam_minimize(a),
        Command::Converge(ConvergeCmd::Run(a)) => commands::converge_run(a),
        Command::Report(ReportCmd::Plot(a)) => commands::report_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.is_numerical() { "numerical failure" } else { "invalid input" };
            eprintln!("error ({kind}): {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
