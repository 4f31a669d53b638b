use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "rpcmvs", version, about = "RPC geometry, plane-sweep matching and DSM reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project a ground point into the image.
    Project(ProjectArgs),
    /// Localize an image point at a given height.
    Localize(LocalizeArgs),
    /// Fit inverse polynomials and write the augmented model.
    FitInverse(FitInverseArgs),
    /// Resample a source image onto reference pixels through a height plane.
    Warp(WarpArgs),
    /// Fit pinhole cameras over centered patches and report their errors.
    FitPinhole(FitPinholeArgs),
    /// Multi-stage plane sweep for one reference view.
    Sweep(SweepArgs),
    /// Block-wise DSM reconstruction.
    Pipeline(PipelineArgs),
    /// Compare a DSM against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene bundle.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub rpc: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub lat: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub lon: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub hei: f64,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub rpc: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub samp: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub line: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub hei: f64,
    /// Use the fitted inverse polynomials instead of iterating.
    #[arg(long)]
    pub fitted: bool,
    /// Convergence tolerance, pixels.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FitInverseArgs {
    #[arg(long)]
    pub rpc: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Samples per axis of the fitting grid.
    #[arg(long, default_value_t = 20)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub src_image: PathBuf,
    #[arg(long)]
    pub src_rpc: PathBuf,
    #[arg(long)]
    pub ref_rpc: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub hei: f64,
    /// Reference pixel rectangle `x0,y0,width,height`; defaults to the
    /// source image extent.
    #[arg(long)]
    pub rect: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitPinholeArgs {
    #[arg(long)]
    pub rpc: PathBuf,
    /// Patch sizes, e.g. `768,4608,9216` or `512x256,1024`.
    #[arg(long)]
    pub sizes: String,
    /// Patch center `x,y`; defaults to the image center with
    /// `--image-size`, else to the image offset of the model.
    #[arg(long, conflicts_with = "image_size")]
    pub center: Option<String>,
    /// Image size `width,height`, used to center the patches.
    #[arg(long)]
    pub image_size: Option<String>,
    /// Height range `min,max`; defaults to the model range.
    #[arg(long, allow_hyphen_values = true)]
    pub heights: Option<String>,
    /// Control points per axis.
    #[arg(long, default_value_t = 10)]
    pub grid: usize,
    /// Skip the nonlinear refinement.
    #[arg(long)]
    pub linear: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Matching parameters shared by `sweep` and `pipeline`.
#[derive(Debug, Args)]
pub struct SweepOverrides {
    /// JSON configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Planes per stage, e.g. `64,32,8`.
    #[arg(long)]
    pub planes: Option<String>,
    /// Plane interval per stage in meters, `span` for the full range, e.g.
    /// `span,5,2.5`.
    #[arg(long)]
    pub intervals: Option<String>,
    /// Downsampling factor per stage, e.g. `16,4,1`.
    #[arg(long)]
    pub factors: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub ref_image: PathBuf,
    #[arg(long)]
    pub ref_rpc: PathBuf,
    /// Source image; repeat for several sources.
    #[arg(long = "src-image", required = true)]
    pub src_images: Vec<PathBuf>,
    /// Source model, in the order of `--src-image`.
    #[arg(long = "src-rpc", required = true)]
    pub src_rpcs: Vec<PathBuf>,
    /// Height range `min,max`; defaults to the intersection of the model ranges.
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    /// Output PFM; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every intermediate stage as `<out>.stage<k>.pfm`.
    #[arg(long)]
    pub all_stages: bool,
    #[command(flatten)]
    pub sweep: SweepOverrides,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Scene bundle directory with `manifest.json`.
    #[arg(long, conflicts_with_all = ["images", "rpcs"])]
    pub scene: Option<PathBuf>,
    /// Input image; repeat per view.
    #[arg(long = "image")]
    pub images: Vec<PathBuf>,
    /// Input model, in the order of `--image`.
    #[arg(long = "rpc")]
    pub rpcs: Vec<PathBuf>,
    /// Area of interest `lat_min,lat_max,lon_min,lon_max`; required without
    /// `--scene`.
    #[arg(long, allow_hyphen_values = true)]
    pub aoi: Option<String>,
    /// Ground-truth DSM for evaluation and output grid; defaults to the
    /// bundle's truth with `--scene`.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Coarse DEM bounding the per-block height range.
    #[arg(long)]
    pub dem: Option<PathBuf>,
    /// Margin added around the DEM range, meters.
    #[arg(long, default_value_t = 50.0)]
    pub dem_margin: f64,
    #[arg(long)]
    pub block_size: Option<f64>,
    /// Round-trip reprojection threshold, pixels.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// DSM cell size, meters.
    #[arg(long)]
    pub cell: Option<f64>,
    /// Output DSM (ESRI ASCII grid).
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics JSON, written when ground truth is available.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub sweep: SweepOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dsm: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Metrics JSON; printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON scene parameters; flags below override them.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Image side, pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Terrain relief, meters.
    #[arg(long)]
    pub relief: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}
