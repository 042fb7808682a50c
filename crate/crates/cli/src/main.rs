mod commands;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::runlog::RunLog;

#[derive(Parser, Debug)]
#[command(
    name = "trimodal",
    version,
    about = "Point cloud, mesh and image association and transfer"
)]
struct Cli {
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, env = "FUSION_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Link points to mesh faces.
    Pcma(PcmaArgs),
    /// Link pixels to mesh faces by ray casting.
    Imgma(ImgmaArgs),
    /// Link points to pixels.
    Pcimga(PcimgaArgs),
    /// Move labels or features between modalities.
    Transfer(TransferArgs),
    /// Forward-backward label consistency and association rates.
    Check(CheckArgs),
    /// Write a synthetic scene.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Settings {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Threshold schedule overriding the configured levels.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// ±5, ±10, ±15 cm
    H3d,
    /// ±30, ±60, ±120 cm
    V3d,
}

#[derive(Args, Debug)]
pub struct PcmaArgs {
    /// Mesh manifest.
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub cloud: PathBuf,
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub out_cloud: PathBuf,
    #[arg(long)]
    pub out_assoc: PathBuf,
    /// Write the output cloud as ASCII PLY.
    #[arg(long)]
    pub ascii: bool,
}

#[derive(Args, Debug)]
pub struct ImgmaArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[command(flatten)]
    pub settings: Settings,
    /// Receives `image_<id>.spxc` per camera and `visibility.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Implicit,
    Explicit,
}

#[derive(Args, Debug)]
pub struct PcimgaArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub cloud: PathBuf,
    /// Face association written by `pcma`.
    #[arg(long)]
    pub assoc: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    /// Directory written by `imgma`.
    #[arg(long)]
    pub pixels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionArg {
    MeshToPc,
    PcToMesh,
    MeshToImg,
    ImgToMesh,
    PcToImg,
    ImgToPc,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindArg {
    Label,
    Feature,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionArg {
    MinDepth,
    Aggregate,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
    #[arg(long, value_enum, default_value = "label")]
    pub kind: KindArg,
    /// Required between point cloud and images.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// `src[:dst]`; repeat for several feature columns.
    #[arg(long = "attr", required = true)]
    pub attrs: Vec<String>,
    #[arg(long, value_enum, default_value = "min-depth")]
    pub reduction: ReductionArg,
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub assoc: Option<PathBuf>,
    #[arg(long)]
    pub pixels: Option<PathBuf>,
    /// Directory written by `pcimga --mode explicit`.
    #[arg(long)]
    pub links: Option<PathBuf>,
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    #[arg(long)]
    pub out_cloud: Option<PathBuf>,
    #[arg(long)]
    pub out_mesh: Option<PathBuf>,
    #[arg(long)]
    pub out_pixels: Option<PathBuf>,
    /// Directory for PPM label previews; needs `--cameras`.
    #[arg(long)]
    pub preview: Option<PathBuf>,
    /// Label colors for the previews.
    #[arg(long)]
    pub scheme: Option<PathBuf>,
    /// JSON transfer report; printed to stdout as well.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Point cloud with ground-truth labels.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    #[command(flatten)]
    pub settings: Settings,
    /// Reuse an existing association instead of running pcma.
    #[arg(long)]
    pub assoc: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub gt_column: String,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateArg {
    Plane,
    Cube,
    Roof,
    Town,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub template: TemplateArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Footprint edge length, meters.
    #[arg(long, default_value_t = 20.0)]
    pub extent: f64,
    /// Points per square meter.
    #[arg(long, default_value_t = 4.0)]
    pub density: f64,
    #[arg(long, default_value_t = 4)]
    pub subdivisions: u32,
    /// Normal noise sigma, meters.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Rigid shift `x,y,z` applied to the cloud, meters.
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,0")]
    pub shift: [f64; 3],
    /// Nadir cameras per side.
    #[arg(long, default_value_t = 2)]
    pub cameras: u32,
    #[arg(long, default_value_t = 160)]
    pub image_width: u32,
    #[arg(long, default_value_t = 120)]
    pub image_height: u32,
    /// Focal length, pixels.
    #[arg(long, default_value_t = 150.0)]
    pub focal: f64,
    /// Camera height above ground, meters.
    #[arg(long, default_value_t = 30.0)]
    pub camera_height: f64,
    /// Schedule used for the dead-zone annotations of the roof template.
    #[arg(long, value_enum, default_value = "h3d")]
    pub preset: Preset,
    #[arg(long)]
    pub ascii: bool,
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("'{c}': {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|_| "expected x,y,z".to_string())
}

/// `threads` from the config file when neither the flag nor the
/// environment sets it. Unreadable configs are reported by the command.
fn config_threads(c: &Command) -> Option<usize> {
    let s = match c {
        Command::Pcma(a) => &a.settings,
        Command::Imgma(a) => &a.settings,
        Command::Check(a) => &a.settings,
        _ => return None,
    };
    trimodal_core::io::load_config(s.config.as_deref())
        .ok()?
        .threads
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| config_threads(&cli.command))
        .unwrap_or(0);
    let (name, run): (
        &'static str,
        Box<dyn FnOnce(&mut RunLog) -> commands::Outcome + Send>,
    ) = match cli.command {
        Command::Pcma(a) => ("pcma", Box::new(move |log| commands::pcma(a, log))),
        Command::Imgma(a) => ("imgma", Box::new(move |log| commands::imgma(a, log))),
        Command::Pcimga(a) => ("pcimga", Box::new(move |log| commands::pcimga(a, log))),
        Command::Transfer(a) => ("transfer", Box::new(move |log| commands::transfer(a, log))),
        Command::Check(a) => ("check", Box::new(move |log| commands::check(a, log))),
        Command::Synth(a) => ("synth", Box::new(move |log| commands::synth(a, log))),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    let mut log = RunLog::new(name, pool.current_num_threads());
    let result = pool.install(|| run(&mut log));
    let code = match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            log.error = Some(e.to_string());
            e.exit_code()
        }
    };
    log.exit_code = code;
    log.emit();
    ExitCode::from(code as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn flags_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn shifts_parse() {
        assert_eq!(parse_vec3("0, 0,0.31"), Ok([0.0, 0.0, 0.31]));
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_vec3("a,b,c").is_err());
    }
}
