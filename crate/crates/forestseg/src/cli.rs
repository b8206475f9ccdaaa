use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_assignment, Config, Preset};
use crate::error::{AppError, Result};
use crate::evaluate::{self, EvalOptions, LabeledMask};
use crate::io::{self, SourceFormat};
use crate::pipeline::{self, IntensityScale};
use crate::synth::{self, Resample, SceneSpec};

#[derive(Debug, Parser)]
#[command(name = "forestseg", version, about = "Tree instance segmentation for forest point clouds")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a point cloud into tree instances.
    Segment {
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Intensity range of the input.
        #[arg(long, value_enum, default_value = "16bit")]
        intensity_scale: ScaleArg,
    },
    /// Compare predicted instance labels with reference labels.
    Evaluate {
        /// Predicted labels: a file, or a directory paired with --reference by file name.
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Directory for metrics.csv (the table always goes to stdout).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "instance_id")]
        reference_field: String,
        #[arg(long, default_value = "instance_id")]
        predicted_field: String,
        /// Reference id meaning "not a tree".
        #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
        reference_non_tree: i64,
        /// Points that count as labeled: reference, all, or attribute:NAME.
        #[arg(long, default_value = "reference")]
        labeled_mask: String,
    },
    /// Generate a synthetic plot with ground-truth labels.
    Synth {
        /// Output point file (.las or text).
        #[arg(long)]
        output: PathBuf,
        /// Scene description (JSON); otherwise a grid forest is generated.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        trees: usize,
        /// Plot width and depth in metres.
        #[arg(long, num_args = 2, value_names = ["W", "D"], default_values_t = [20.0, 20.0])]
        extent: Vec<f64>,
        /// Sampling regime: dense terrestrial or thinned UAV-borne.
        #[arg(long, value_enum, default_value = "tls")]
        regime: PresetArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the scene description next to the output.
        #[arg(long)]
        write_spec: bool,
    },
    /// Export the terrain model as an ASCII grid.
    Dtm {
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. --set stems.eps_2d=0.03 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Random seed for circle fitting.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Tls,
    Uls,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Tls => Preset::Tls,
            PresetArg::Uls => Preset::Uls,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    #[value(name = "16bit")]
    Sixteen,
    #[value(name = "8bit")]
    Eight,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Config> {
        let text = self
            .config
            .as_ref()
            .map(|p| {
                fs::read_to_string(p).map_err(|source| AppError::Read {
                    path: p.clone(),
                    source,
                })
            })
            .transpose()?;
        let sets = self.set.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>>>()?;
        Config::resolve(self.preset.map(Into::into), text.as_deref(), &sets, self.seed)
    }
}

fn write_synth(path: &Path, cloud: &forestseg_core::PointCloud) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        pipeline::create_dir(dir)?;
    }
    io::write_points(path, cloud, &SourceFormat::for_path(path, cloud))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Segment {
            input,
            output,
            config,
            intensity_scale,
        } => {
            let config = config.resolve()?;
            let scale = match intensity_scale {
                ScaleArg::Sixteen => IntensityScale::Native,
                ScaleArg::Eight => IntensityScale::EightBit,
            };
            let s = pipeline::run_segmentation(&input, &config, &output, scale)?;
            println!(
                "{} stems, {} trees -> {}",
                s.stems,
                s.trees,
                s.labeled_cloud.display()
            );
        }
        Command::Evaluate {
            predicted,
            reference,
            output,
            reference_field,
            predicted_field,
            reference_non_tree,
            labeled_mask,
        } => {
            let opts = EvalOptions {
                reference_field,
                predicted_field,
                reference_non_tree,
                labeled_mask: labeled_mask.parse::<LabeledMask>()?,
                ..EvalOptions::default()
            };
            let eval = evaluate::evaluate_paths(&predicted, &reference, &opts)?;
            print!("{}", evaluate::report_table(&eval));
            if let Some(dir) = output {
                pipeline::create_dir(&dir)?;
                pipeline::write_file(&dir.join("metrics.csv"), evaluate::report_csv(&eval)?)?;
            }
        }
        Command::Synth {
            output,
            spec,
            trees,
            extent,
            regime,
            seed,
            write_spec,
        } => {
            let spec = match spec {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|source| AppError::Read { path: p.clone(), source })?;
                    serde_json::from_str::<SceneSpec>(&text)
                        .map_err(|e| AppError::validation(format!("{}: {e}", p.display())))?
                }
                None => SceneSpec::forest(trees, [extent[0], extent[1]], seed),
            };
            let mut cloud = synth::generate(&spec, seed)?;
            if let PresetArg::Uls = regime {
                cloud = synth::resample(&cloud, Resample::ULS, seed)?;
            }
            write_synth(&output, &cloud)?;
            if write_spec {
                let json = serde_json::to_string_pretty(&spec).map_err(|e| AppError::Internal(e.to_string()))?;
                pipeline::write_file(&output.with_extension("json"), json + "\n")?;
            }
            println!("{} points, {} trees -> {}", cloud.len(), spec.trees.len(), output.display());
        }
        Command::Dtm { input, output, config } => {
            let config = config.resolve()?;
            let path = pipeline::run_dtm_export(&input, &config, &output)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

/// Runs the tool and returns its exit code: 0 on success, 1 for invalid
/// input or arguments, 2 for internal failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
