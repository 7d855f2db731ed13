use chinv::cpoly::{parse_coeffs, parse_complex};
use chinv::{Complex64, ComplexPoly, Window};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "chinv", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("CARGO_PKG_NAME"), ")"))]
#[command(about = "Invariant sets of first-order linear differential operators Q d/dz + P")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decide existence and compactness of invariant sets.
    Classify(ClassifyArgs),
    /// Track trails from one or more start points.
    Trail(TrailArgs),
    /// Rasterize the minimal invariant set.
    MinimalSet(MinimalSetArgs),
    /// Check the ray criterion on a mask.
    Certify(CertifyArgs),
    /// Separatrices of -R leaving the roots of P.
    Separatrix(SeparatrixArgs),
    /// Zero contour of Im R'.
    Inflection(InflectionArgs),
    /// Inverse-iteration sample of the Julia set at a fixed t.
    Julia(JuliaArgs),
    /// Chaos-game sample over random t.
    Chaos(ChaosArgs),
    /// Compare a mask with a closed-form oracle set.
    OracleCompare(OracleArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct OpArgs {
    /// Coefficients of P, ascending degree, e.g. "-1,1" for z - 1.
    #[arg(long, allow_hyphen_values = true, value_parser = poly)]
    pub p: ComplexPoly,
    /// Coefficients of Q, ascending degree.
    #[arg(long, allow_hyphen_values = true, value_parser = poly)]
    pub q: ComplexPoly,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// re0,re1,im0,im1 (default: chosen from the roots of PQ).
    #[arg(long, allow_hyphen_values = true, value_parser = window)]
    pub window: Option<Window>,
    /// N or NxM cells.
    #[arg(long, default_value = "200", value_parser = resolution)]
    pub res: (usize, usize),
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub op: OpArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct TrailArgs {
    #[command(flatten)]
    pub op: OpArgs,
    /// Start points, comma separated.
    #[arg(long, required = true, allow_hyphen_values = true, value_delimiter = ',', value_parser = complex)]
    pub u: Vec<Complex64>,
    /// Largest t; "inf" follows every branch to its end.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub t_max: f64,
    /// Base steps along each branch.
    #[arg(long, default_value_t = 512)]
    pub samples: usize,
    /// CSV of all samples.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Jacobi,
    GaussSeidel,
}

#[derive(Args, Debug)]
pub struct MinimalSetArgs {
    #[command(flatten)]
    pub op: OpArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Order::Jacobi)]
    pub order: Order,
    /// Do not pre-seed with separatrices.
    #[arg(long)]
    pub no_seed_curves: bool,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// Mask as PGM (a JSON sidecar is written next to it).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub op: OpArgs,
    /// Mask to check (PGM with sidecar).
    #[arg(long)]
    pub mask: PathBuf,
    /// Dilate the mask by this many cells first.
    #[arg(long, default_value_t = 0)]
    pub dilate: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct SeparatrixArgs {
    #[command(flatten)]
    pub op: OpArgs,
    /// Integration window (default: chosen from the roots of PQ).
    #[arg(long, allow_hyphen_values = true, value_parser = window)]
    pub window: Option<Window>,
    /// Only this root of P (default: all of them).
    #[arg(long, allow_hyphen_values = true, value_parser = complex)]
    pub pole: Option<Complex64>,
    /// Arclength cap per separatrix (default: 20 window diagonals).
    #[arg(long)]
    pub cap: Option<f64>,
    /// SVG or CSV, by extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct InflectionArgs {
    #[command(flatten)]
    pub op: OpArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// SVG or CSV, by extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Number of points kept.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = chinv::julia::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Point cloud as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Log-scaled hit-count raster as PGM, over --window/--res.
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Report the fraction of points inside this mask.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Dilation of --mask in cells.
    #[arg(long, default_value_t = 2)]
    pub dilation: usize,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct JuliaArgs {
    #[command(flatten)]
    pub op: OpArgs,
    #[arg(long)]
    pub t: f64,
    /// Starting point (default: a root of Q).
    #[arg(long, allow_hyphen_values = true, value_parser = complex)]
    pub u0: Option<Complex64>,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ChaosArgs {
    #[command(flatten)]
    pub op: OpArgs,
    #[arg(long, default_value_t = 0.0)]
    pub t_min: f64,
    /// Draw t uniformly from [t_min, t_max] instead of the heavy-tailed default.
    #[arg(long)]
    pub t_max: Option<f64>,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleName {
    Cochleoid,
    Interval,
    Disk,
    Halfplane,
    Cone,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub name: OracleName,
    #[arg(long)]
    pub mask: PathBuf,
    /// Coefficients of P (default for cochleoid: z - 1).
    #[arg(long, allow_hyphen_values = true, value_parser = poly)]
    pub p: Option<ComplexPoly>,
    /// Coefficients of Q (default for cochleoid: z^2).
    #[arg(long, allow_hyphen_values = true, value_parser = poly)]
    pub q: Option<ComplexPoly>,
    /// Disk center or cone apex.
    #[arg(long, allow_hyphen_values = true, value_parser = complex)]
    pub center: Option<Complex64>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Half-plane offset along its outward normal.
    #[arg(long, allow_hyphen_values = true)]
    pub ell: Option<f64>,
    /// Outward normal angle of the half-plane, or the cone axis.
    #[arg(long, allow_hyphen_values = true)]
    pub angle: Option<f64>,
    #[arg(long)]
    pub half_angle: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

fn poly(s: &str) -> Result<ComplexPoly, String> {
    parse_coeffs(s).map_err(|e| e.to_string())
}

fn complex(s: &str) -> Result<Complex64, String> {
    parse_complex(s).map_err(|e| e.to_string())
}

fn window(s: &str) -> Result<Window, String> {
    Window::parse(s).map_err(|e| e.to_string())
}

pub fn resolution(s: &str) -> Result<(usize, usize), String> {
    let parse = |x: &str| match x.trim().parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("bad resolution `{s}`: expected N or NxM with N, M > 0")),
        Ok(n) => Ok(n),
    };
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|n| (n, n)),
    }
}
