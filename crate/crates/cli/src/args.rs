use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "monodromy", version, about = "Monodromy numbers of integrable systems with a circle action")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monodromy number along a loop, by variation and/or residues.
    Monodromy(MonodromyArgs),
    /// Rotation numbers and orbit integrals at single values or along a loop.
    Rotation(RotationArgs),
    /// Classify a grid of values and sample the rotation number.
    Scan(ScanArgs),
    /// Local monodromy of the focus-focus normal form inside a ball.
    Local(LocalArgs),
    /// Noncompact monodromy of the focus-focus normal form over an m ladder.
    Scattering(ScatteringArgs),
    /// Checks of a rotation form: X_J normalization, closedness, transversality.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    PaperChampagne,
    PaperPendulum,
    PaperHydrogen,
    PaperFf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Standard,
    #[value(alias = "theta-s")]
    Scattering,
    #[value(name = "du")]
    ChartU,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// champagne, pendulum, hydrogen or focus-focus.
    #[arg(long)]
    pub system: Option<String>,
    /// System parameter, e.g. `a=1` for hydrogen. Repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// JSON config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write a CSV series here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub quad_tol: Option<f64>,
    #[arg(long)]
    pub max_time: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LoopArgs {
    /// Loop center `h,j`.
    #[arg(long, allow_hyphen_values = true)]
    pub center: Option<String>,
    /// Circle radius.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Ellipse semi-axes `semi_h,semi_j`.
    #[arg(long)]
    pub ellipse: Option<String>,
    /// Polygon vertices `h,j;h,j;...`, counterclockwise.
    #[arg(long, allow_hyphen_values = true)]
    pub polygon: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct MonodromyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub path: LoopArgs,
    /// variation, residues or both.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
    /// Skip the randomized form checks in the diagnostics block.
    #[arg(long)]
    pub no_form_checks: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RotationArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub path: LoopArgs,
    /// Single value `h,j`. Repeatable; without it the loop is sampled.
    #[arg(long = "at", allow_hyphen_values = true)]
    pub at: Vec<String>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: Common,
    /// `h_min,h_max,j_min,j_max`.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bbox: Option<String>,
    /// `NjxNh` (columns along j, rows along h).
    #[arg(long)]
    pub grid: Option<String>,
    /// Do not sample the rotation number.
    #[arg(long)]
    pub no_theta: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LocalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub path: LoopArgs,
    /// Ball parameter r of `|x|^2 < 2r`.
    #[arg(long)]
    pub ball: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Also run the `du` negative control.
    #[arg(long)]
    pub control: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScatteringArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub path: LoopArgs,
    /// Ladder of truncation levels, e.g. `2,4,8,16`.
    #[arg(long = "m")]
    pub m: Option<String>,
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Radius of the probe circle where `Theta_m` is compared with `arg(j + ih)`.
    #[arg(long)]
    pub probe_radius: Option<f64>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub convergence_tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}
