//! `windform` command-line driver.
//!
//! Exit codes: 0 success, 2 invalid input, 3 simulation instability,
//! 4 optimization failure, 5 gradient check failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "windform", version, about = "Coupled wind/object simulation and wind force reconstruction")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Use the serial particle-order transfers everywhere.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Where to write the run manifest (default: manifest.json in the
    /// output directory, or next to the output file).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward simulation in wind or under a stored force field.
    Simulate(SimulateArgs),
    /// Recover per-frame wind forces from marker trajectories.
    Reconstruct(ReconstructArgs),
    /// Apply a stored force field to an object, possibly of another material.
    Retarget(RetargetArgs),
    /// Compare two force fields by direction.
    Eval(EvalArgs),
    /// Compare adjoint gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Fill the interior of a surface point cloud.
    Densify(DensifyArgs),
}

#[derive(Args, Debug)]
pub struct ObjectArgs {
    /// Scene JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Particles as a DWPT snapshot or x,y,z CSV (default: a block at the
    /// domain center).
    #[arg(long)]
    pub particles: Option<PathBuf>,
    /// Particle spacing for CSV points, m (default: half a grid cell).
    #[arg(long)]
    pub spacing: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub object: ObjectArgs,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Apply this force field instead of lattice wind.
    #[arg(long)]
    pub force_field: Option<PathBuf>,
    /// No wind at all: gravity and elasticity only.
    #[arg(long, conflicts_with = "force_field")]
    pub no_wind: bool,
    /// Write the lattice state of every frame.
    #[arg(long)]
    pub dump_fields: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Gd,
    Lbfgs,
    Adam,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuideKind {
    /// Run a lattice wind field alongside the object.
    Lattice,
    None,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub object: ObjectArgs,
    /// Marker CSV with frame,particle,x,y,z rows.
    #[arg(long)]
    pub observations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_phys: f64,
    /// Use unit force directions in the physics loss.
    #[arg(long)]
    pub normalized_phys: bool,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    #[arg(long, value_enum, default_value_t = OptimizerKind::Lbfgs)]
    pub optimizer: OptimizerKind,
    /// Adam learning rate, N.
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = GuideKind::Lattice)]
    pub guide: GuideKind,
}

#[derive(Args, Debug)]
pub struct RetargetArgs {
    #[command(flatten)]
    pub object: ObjectArgs,
    #[arg(long)]
    pub force_field: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Replace the Young's modulus of every material, Pa.
    #[arg(long)]
    pub youngs_modulus: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub reconstruction: PathBuf,
    /// Also write the metrics as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub object: ObjectArgs,
    /// Substeps in the checked window (default: all substeps of a frame).
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Failure threshold on the largest relative component error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct DensifyArgs {
    /// Surface points as x,y,z CSV or DWPT.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; `.dwpt` writes particles, anything else CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Voxels along the longest side of the bounding box.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Sample offset as a fraction of the voxel size, in [0, 0.5).
    #[arg(long, default_value_t = windform::volume::DEFAULT_JITTER)]
    pub jitter: f64,
    /// Density used for DWPT particle masses, kg/m^3.
    #[arg(long, default_value_t = 1000.0)]
    pub density: f64,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Exit>() {
        return e.code;
    }
    match err.downcast_ref::<windform::Error>() {
        Some(
            windform::Error::Instability { .. }
            | windform::Error::Inversion { .. }
            | windform::Error::SingularDeformation(_)
            | windform::Error::ParticleOutOfDomain { .. },
        ) => 3,
        Some(windform::Error::Optimization { .. }) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let name = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Reconstruct(_) => "reconstruct",
        Command::Retarget(_) => "retarget",
        Command::Eval(_) => "eval",
        Command::Gradcheck(_) => "gradcheck",
        Command::Densify(_) => "densify",
    };
    let c = &cli.common;
    let mut manifest = RunManifest::new(name, c.seed, c.deterministic, c.threads);
    let default_manifest = match &cli.command {
        Command::Simulate(a) => a.out.join("manifest.json"),
        Command::Reconstruct(a) => a.out.join("manifest.json"),
        Command::Retarget(a) => a.out.join("manifest.json"),
        Command::Eval(a) => a.out.as_ref().map_or_else(|| PathBuf::from("eval.manifest.json"), |o| o.with_extension("manifest.json")),
        Command::Gradcheck(_) => PathBuf::from("gradcheck.manifest.json"),
        Command::Densify(a) => a.output.with_extension("manifest.json"),
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, c, &mut manifest),
        Command::Reconstruct(a) => commands::reconstruct(a, c, &mut manifest),
        Command::Retarget(a) => commands::retarget(a, c, &mut manifest),
        Command::Eval(a) => commands::eval(a, &mut manifest),
        Command::Gradcheck(a) => commands::gradcheck(a, c, &mut manifest),
        Command::Densify(a) => commands::densify(a, c, &mut manifest),
    };
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(e)
        }
    };
    manifest.exit_code = i32::from(code);
    manifest.error = result.err().map(|e| format!("{e:#}"));
    let path = c.manifest.clone().unwrap_or(default_manifest);
    if let Err(e) = manifest.write(&path) {
        eprintln!("error: could not write manifest {}: {e}", path.display());
        if code == 0 {
            return ExitCode::from(2);
        }
    }
    ExitCode::from(code)
}
