use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod run;

#[derive(Parser, Debug)]
#[command(name = "cexlab", version, about = "Dyadic weight counterexample laboratory")]
pub struct Cli {
    /// Root seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker cap. Computation is sequential; accepted for interface stability.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Write the report JSON here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Write sweep rows as CSV.
    #[arg(long, global = true, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Large-step weights and test functions.
    Build(BuildArgs),
    #[command(subcommand)]
    Transform(Transform),
    #[command(subcommand)]
    Pipeline(Pipeline),
    /// Characteristics, smoothness and norms of a tree.
    Measure(MeasureArgs),
    #[command(subcommand)]
    Verify(Verify),
    /// Run a pipeline over a (p, M) grid.
    Sweep(SweepArgs),
    /// Re-check a saved report; exit status follows its verdict.
    Report {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct QuadArgs {
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long = "M", default_value_t = 4.0)]
    pub m: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Mult)]
    pub variant: VariantArg,
    /// Read a 4-component tree JSON instead of building one.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Mult,
    Shift,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub quad: QuadArgs,
    /// Write the tree JSON here.
    #[arg(long, value_name = "PATH")]
    pub tree_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Transform {
    /// Stopping-time rearrangement of order d.
    SmallStep {
        #[command(flatten)]
        quad: QuadArgs,
        #[arg(long, default_value_t = 4)]
        d: u32,
        #[arg(long = "walk", value_enum, default_value_t = WalkArg::Generic)]
        walk: WalkArg,
        /// Depth cap as a multiple of d², plus 16.
        #[arg(long)]
        cap_mult: Option<u32>,
        /// Absolute depth cap; overrides --cap-mult.
        #[arg(long)]
        cap: Option<u32>,
        #[arg(long, value_name = "PATH")]
        tree_out: Option<PathBuf>,
    },
    /// K-step remodeling with a frequency schedule.
    Remodel {
        #[command(flatten)]
        quad: QuadArgs,
        #[arg(long, default_value_t = 2)]
        steps: u32,
        /// JSON map `{"g:idx": N, "default": N}`.
        #[arg(long, value_name = "PATH")]
        schedule: Option<PathBuf>,
        #[arg(long = "default-N")]
        default_n: Option<u32>,
        #[arg(long, default_value_t = 30)]
        chase_bits: u32,
        #[arg(long)]
        cap: Option<u32>,
        #[arg(long, value_name = "PATH")]
        tree_out: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum WalkArg {
    Generic,
    Triangle,
}

#[derive(Subcommand, Debug)]
pub enum Pipeline {
    /// Remodeled small-step weight paired against the Hilbert transform.
    Hilbert {
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long = "M", default_value_t = 4.0)]
        m: f64,
        #[arg(long, default_value_t = 2)]
        d: u32,
        #[arg(long, default_value_t = 2)]
        steps: u32,
        #[arg(long, default_value_t = 14)]
        budget: u32,
        #[arg(long)]
        cap: Option<u32>,
        #[arg(long, default_value_t = 6)]
        chase_bits: u32,
    },
    /// Glued normalised copies with growing M.
    Sarason {
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 4)]
        kmax: u32,
        #[arg(long, default_value_t = 4.0)]
        m_step: f64,
    },
    /// Weight with exactly two values and characteristic near Q.
    TwoValued {
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long = "Q", default_value_t = 4.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long)]
        d: Option<u32>,
        #[arg(long = "N", default_value_t = 3)]
        n: u32,
        #[arg(long, default_value_t = 2)]
        steps: u32,
    },
}

#[derive(Args, Debug)]
pub struct MeasureArgs {
    #[command(flatten)]
    pub quad: QuadArgs,
    /// Component indices of (w, σ) for the joint characteristic.
    #[arg(long, num_args = 2, default_values_t = [0usize, 1])]
    pub pair: Vec<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Verify {
    /// Random walks, hyperbola lemmas, power-weight pair, transfer lemma.
    Appendix {
        #[arg(long, value_enum)]
        section: Section,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Closed forms, antisymmetry and the sign lemmas of the pairing.
    HilbertLemma,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Section {
    Walks,
    Hyperbola,
    Twoweight,
    Nazarov,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub pipeline: SweepPipeline,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub p: Vec<f64>,
    #[arg(long = "M", value_delimiter = ',', default_value = "4,8")]
    pub m: Vec<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepPipeline {
    Hilbert,
    LargeMult,
    LargeShift,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CEXLAB_LOG", "error")).init();
    let cli = Cli::parse();
    match run::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
