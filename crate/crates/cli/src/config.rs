use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmflab_core::chaos::{GridSpec, Height};
use rmflab_core::multfn::CustomTable;
use rmflab_core::{Model, MultiplicativeSpec, RmfError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "rmflab", version, about = "Random multiplicative function experiments")]
pub struct Cli {
    /// Worker threads; falls back to RMFLAB_WORKERS, then the core count.
    #[arg(long, global = true, env = "RMFLAB_WORKERS")]
    pub workers: Option<usize>,

    /// Parent directory for timestamped run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out_dir: PathBuf,

    /// Write directly into this directory instead of a timestamped one.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Batch of normalized sums S_x with optional S_eps, U_x, T_eps and V.
    Simulate(SimulateArgs),
    /// Batch of chaos grids and their random variances V.
    Variance(VarianceArgs),
    /// S_x against the Gaussian mixture and a variance-matched Gaussian.
    Compare(SimArgs),
    /// E|S_x|^{2q} against the mixture moment over a q grid.
    Moments(MomentsArgs),
    /// Critical-line sums for unit or Moebius weights.
    Critical(CriticalArgs),
    /// Table of rho_theta.
    Rho(RhoArgs),
    /// Table of C_eps.
    Ceps(CepsArgs),
    /// Sieved means against the Wirsing prediction.
    Wirsing(WirsingArgs),
    /// Smooth-number sums against the rho_theta prediction.
    Smooth(SmoothArgs),
    /// Identity oracle suites.
    Verify(VerifyArgs),
    /// Re-run the configuration stored in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Variance(_) => "variance",
            Command::Compare(_) => "compare",
            Command::Moments(_) => "moments",
            Command::Critical(_) => "critical",
            Command::Rho(_) => "rho",
            Command::Ceps(_) => "ceps",
            Command::Wirsing(_) => "wirsing",
            Command::Smooth(_) => "smooth",
            Command::Verify(_) => "verify",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Steinhaus,
    Rademacher,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Steinhaus => Model::Steinhaus,
            ModelArg::Rademacher => Model::Rademacher,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Unit,
    DivisorZ,
    ThetaBigomega,
    ResidueIndicator,
    TwoSquaresTOmega,
    Moebius,
    CustomTable,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FamilyArgs {
    #[arg(long, value_enum, default_value = "theta-bigomega")]
    pub family: FamilyArg,
    /// Parameter of theta-bigomega.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Parameter of divisor-z.
    #[arg(long)]
    pub z: Option<f64>,
    /// Parameter of two-squares-t-omega.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub modulus: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub residues: Vec<u64>,
    /// Custom table file.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Contents of the custom table, filled in on load so replays need no file.
    #[arg(skip)]
    pub table_text: Option<String>,
    /// Zero the weight on non-squarefree integers.
    #[arg(long)]
    pub squarefree: bool,
}

fn need<T>(v: Option<T>, flag: &str, family: &str) -> Result<T, RmfError> {
    v.ok_or_else(|| RmfError::InvalidArgument(format!("--{flag} is required for --family {family}")))
}

impl FamilyArgs {
    /// Reads the custom table file into `table_text`.
    pub fn load(&mut self) -> Result<(), RmfError> {
        if self.family == FamilyArg::CustomTable && self.table_text.is_none() {
            let path = need(self.table.as_ref(), "table", "custom-table")?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| RmfError::InvalidArgument(format!("{}: {e}", path.display())))?;
            self.table_text = Some(text);
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<MultiplicativeSpec, RmfError> {
        let spec = match self.family {
            FamilyArg::Unit => MultiplicativeSpec::unit(),
            FamilyArg::DivisorZ => MultiplicativeSpec::divisor_z(need(self.z, "z", "divisor-z")?)?,
            FamilyArg::ThetaBigomega => {
                MultiplicativeSpec::theta_bigomega(need(self.theta, "theta", "theta-bigomega")?)?
            }
            FamilyArg::ResidueIndicator => MultiplicativeSpec::residue_indicator(
                need(self.modulus, "modulus", "residue-indicator")?,
                &self.residues,
            )?,
            FamilyArg::TwoSquaresTOmega => {
                MultiplicativeSpec::two_squares_t_omega(need(self.t, "t", "two-squares-t-omega")?)?
            }
            FamilyArg::Moebius => MultiplicativeSpec::moebius(),
            FamilyArg::CustomTable => {
                let text = need(self.table_text.as_deref(), "table", "custom-table")?;
                MultiplicativeSpec::custom(CustomTable::parse(text)?)
            }
        };
        Ok(if self.squarefree { spec.restricted_to_squarefree() } else { spec })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Half-width of the chaos grid.
    #[arg(long, default_value_t = 50.0)]
    pub s_max: f64,
    /// Chaos grid step.
    #[arg(long, default_value_t = 1.0 / 64.0)]
    pub ds: f64,
}

impl GridArgs {
    pub fn grid(&self) -> Result<GridSpec, RmfError> {
        let g = GridSpec { s_max: self.s_max, ds: self.ds };
        g.points()?;
        Ok(g)
    }
}

/// Options shared by every sampling command.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimArgs {
    #[arg(long, value_enum, default_value = "steinhaus")]
    pub model: ModelArg,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 10_000)]
    pub x: usize,
    /// Number of realizations.
    #[arg(long = "n", default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Also compute S_eps and T_eps at this epsilon.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Also compute U_x.
    #[arg(long)]
    pub u: bool,
    /// Also compute V from the same draw.
    #[arg(long)]
    pub with_v: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VarianceArgs {
    #[arg(long, value_enum, default_value = "steinhaus")]
    pub model: ModelArg,
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Euler product cutoff.
    #[arg(long, default_value_t = 10_000)]
    pub y: usize,
    #[arg(long = "n", default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Height t; the default is the critical line sigma = 1/2.
    #[arg(long)]
    pub height: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
}

impl VarianceArgs {
    pub fn height(&self) -> Height {
        self.height.map_or(Height::Infinite, Height::Finite)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 0.75, 1.0])]
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CriticalArgs {
    #[arg(long, value_enum, default_value = "steinhaus")]
    pub model: ModelArg,
    /// unit or moebius.
    #[arg(long, value_enum, default_value = "unit")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 10_000)]
    pub x: usize,
    #[arg(long = "n", default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RhoArgs {
    #[arg(long)]
    pub theta: f64,
    #[arg(long, default_value_t = 10.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 1.0 / 512.0)]
    pub step: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CepsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.49])]
    pub theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.1, 0.05, 0.02, 0.01])]
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct WirsingArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e4, 1e5, 1e6])]
    pub x: Vec<f64>,
    /// Drop the L_g correction from the prediction.
    #[arg(long)]
    pub no_correction: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SmoothArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 1e6)]
    pub x: f64,
    /// u = log x / log y.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2.0])]
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Param,
    Ux,
    Cross,
    Orthogonality,
    All,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Bound on m for the parametrization suite.
    #[arg(long, default_value_t = 10_000)]
    pub mmax: u64,
    /// Bound on x for the E[U_x^2] suite.
    #[arg(long, default_value_t = 100)]
    pub xmax: usize,
    /// Monte Carlo draws for the randomized suites.
    #[arg(long = "n", default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
