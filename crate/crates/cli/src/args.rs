use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use toroidal_core::optim::{Method, OptimizerConfig};
use toroidal_core::TorusShape;

#[derive(Debug, Parser)]
#[command(name = "toroidal", version, about = "Area-preserving torus parameterization of genus-one meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map a genus-one mesh onto the torus and report distortion.
    Parameterize(ParameterizeArgs),
    /// Register one mesh onto another through their torus maps.
    Register(RegisterArgs),
    /// Distortion report of an existing map.
    Metrics(MetricsArgs),
    /// Write the mesh with texture coordinates taken from a torus map.
    Texture(TextureArgs),
    /// Write a synthetic torus mesh with its grid loops.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Pgm,
    Pcg,
    Rgd,
    Rcg,
    All,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Pgm => vec![Method::Pgm],
            MethodArg::Pcg => vec![Method::Pcg],
            MethodArg::Rgd => vec![Method::Rgd],
            MethodArg::Rcg => vec![Method::Rcg],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ShapeArgs {
    /// Major radius of the target torus.
    #[arg(long = "R", default_value_t = 2.0)]
    #[serde(rename = "R")]
    pub major: f64,
    /// Minor radius of the target torus.
    #[arg(long = "r", default_value_t = 1.0)]
    #[serde(rename = "r")]
    pub minor: f64,
}

impl ShapeArgs {
    pub fn shape(&self) -> toroidal_core::Result<TorusShape> {
        TorusShape::new(self.major, self.minor)
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct OptimArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Pcg)]
    pub method: MethodArg,
    /// Iteration budget per optimizer run [default: 100; 1000 for register].
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_max: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub c1: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    /// Seed for synthetic jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl OptimArgs {
    pub fn config(&self, method: Method, default_iters: usize) -> OptimizerConfig {
        OptimizerConfig {
            method,
            max_iters: self.max_iters.unwrap_or(default_iters),
            grad_tol: self.grad_tol,
            c1: self.c1,
            alpha_max: self.alpha_max,
            seed: self.seed,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SourceArgs {
    /// Input OBJ mesh.
    #[arg(long, required_unless_present = "generate_torus", conflicts_with = "generate_torus")]
    pub mesh: Option<PathBuf>,
    /// Use a synthetic NT x NP torus-of-revolution grid instead of a file.
    #[arg(long, num_args = 2, value_names = ["NT", "NP"])]
    pub generate_torus: Option<Vec<usize>>,
    /// Uniform random displacement of generated vertices, as a fraction of r.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
}

#[derive(Debug, Args)]
pub struct ParameterizeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Loop JSON `{"gamma1": [...], "gamma2": [...]}`; tree-cotree loops if absent.
    #[arg(long)]
    pub loops: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Unfold folded triangles after optimization.
    #[arg(long)]
    pub correct_bijectivity: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Target OBJ mesh; with --generate-torus, defaults to a jittered copy of the source.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub loops: Option<PathBuf>,
    #[arg(long)]
    pub target_loops: Option<PathBuf>,
    /// Landmark JSON `{"pairs": [[p, q], ...], "lambda": 0.2}`.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    /// Jitter of the generated target copy, as a fraction of r.
    #[arg(long, default_value_t = 0.05)]
    pub target_jitter: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// OBJ whose vertex rows are the torus map.
    #[arg(long)]
    pub map: PathBuf,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Also write report.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TextureArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub map: PathBuf,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, num_args = 2, value_names = ["U", "V"], default_values_t = [0.0, 0.0])]
    pub translate: Vec<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, num_args = 2, value_names = ["NT", "NP"], required = true)]
    pub generate_torus: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}
