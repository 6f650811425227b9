use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bundlelab::bundle;
use bundlelab::manifold::PointCloud;
use bundlelab::metrics::{train_probe, LatentSet};
use bundlelab::runner::{
    compare_objectives, emit_report, parse_config, run_experiment, DatasetConfig, ExperimentConfig,
};
use bundlelab::tensor_net::save_network;
use bundlelab::topo::{pairwise_distances, rips_persistence, scale_within_budget, MAX_POINTS};
use bundlelab::{Error, Result};
use clap::{Parser, Subcommand};

/// Fiber-bundle datasets, small encoders and topological diagnostics.
#[derive(Parser)]
#[command(name = "bundlelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the bundle dataset of a config into a VLHB file.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one config and write its report directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also save the trained encoder here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write the final latents as CSV here.
        #[arg(long)]
        latents: Option<PathBuf>,
    },
    /// Run every config matched by a glob over the given seeds.
    Compare {
        /// Glob pattern, e.g. `configs/*.json`.
        #[arg(long)]
        config: String,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seed: Vec<u64>,
        /// Comparison CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Persistence diagram of a point-cloud CSV.
    Topo {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        subsample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Filtration cutoff as a fraction of the cloud diameter.
        #[arg(long, default_value_t = 0.5)]
        scale_fraction: f64,
        #[arg(long, default_value_t = 1_500_000)]
        max_simplices: usize,
    },
    /// Linear-probe accuracy of a latents CSV with a `semantic_id` column.
    Probe {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = bundlelab::metrics::PROBE_EPOCHS)]
        epochs: usize,
        #[arg(long, default_value_t = bundlelab::metrics::PROBE_LR)]
        lr: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&read_text(path)?)
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    PointCloud::read_csv(std::io::BufReader::new(file))
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { config, seed, out } => {
            let config = load_config(&config)?;
            let DatasetConfig::Bundle(block) = &config.dataset else {
                return Err(Error::Domain("generate needs a bundle dataset block".into()));
            };
            let spec = block.spec()?;
            let data = bundle::sample_dataset(&spec, block.count, seed.unwrap_or(block.seed))?;
            bundle::io::save(&data, &out)?;
            println!("wrote {} observations to {}", data.len(), out.display());
        }
        Command::Train {
            config,
            seed,
            out,
            checkpoint,
            latents,
        } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.training.seed = seed;
            }
            let dir = out
                .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
                .ok_or_else(|| Error::Domain("no output directory: pass --out or set output_dir".into()))?;
            let report = run_experiment(&config)?;
            for path in emit_report(&report, &dir)? {
                println!("{}", path.display());
            }
            if let Some(path) = checkpoint {
                save_network(&report.encoder, &path)?;
            }
            if let Some(path) = latents {
                let mut buf = Vec::new();
                report.final_latents().cloud().write_csv(&mut buf)?;
                write_file(&path, &buf)?;
            }
            let s = report.summary();
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            eprintln!(
                "{} seed {}: probe {} orbit ratio {} semantic ratio {} convexity {} betti {:?} in {:.1}s",
                s.objective,
                s.seed,
                show(s.probe_accuracy),
                show(s.orbit_ratio),
                show(s.semantic_ratio),
                show(s.convexity_rate),
                report.betti,
                report.wall_seconds
            );
        }
        Command::Compare { config, seed, out } => {
            let paths: Vec<PathBuf> = glob::glob(&config)
                .map_err(|e| Error::Domain(format!("bad glob `{config}`: {e}")))?
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::io(e.path().to_path_buf(), e.into()))?;
            if paths.is_empty() {
                return Err(Error::Domain(format!("no config matches `{config}`")));
            }
            let configs = paths.iter().map(|p| load_config(p)).collect::<Result<Vec<_>>>()?;
            let table = compare_objectives(&configs, &seed)?;
            write_file(&out, table.to_csv_string().as_bytes())?;
            let order: Vec<String> = table.ordering.iter().map(ToString::to_string).collect();
            println!("{}", order.join(" >= "));
        }
        Command::Topo {
            input,
            out,
            subsample,
            seed,
            scale_fraction,
            max_simplices,
        } => {
            if subsample == 0 || subsample > MAX_POINTS {
                return Err(Error::Domain(format!("--subsample must lie in [1, {MAX_POINTS}]")));
            }
            if !(scale_fraction > 0.0 && scale_fraction <= 1.0) {
                return Err(Error::Domain("--scale-fraction must lie in (0, 1]".into()));
            }
            let cloud = read_cloud(&input)?.subsample(subsample, seed);
            let dmat = pairwise_distances(&cloud)?;
            let diameter = dmat.max_distance();
            if diameter <= 0.0 {
                return Err(Error::Degenerate("all points coincide".into()));
            }
            let scale = scale_within_budget(&dmat, scale_fraction * diameter, max_simplices);
            let diagram = rips_persistence(&dmat, scale)?;
            write_file(&out, diagram.to_csv_string().as_bytes())?;
        }
        Command::Probe { input, seed, epochs, lr } => {
            let cloud = read_cloud(&input)?;
            let Some(semantic) = cloud.semantic_ids().map(<[usize]>::to_vec) else {
                return Err(Error::Format(format!("{} has no semantic_id column", input.display())));
            };
            // Orbit tags do not affect the probe; reuse the classes if absent.
            let cloud = match cloud.orbit_ids() {
                Some(_) => cloud,
                None => cloud.with_orbit_ids(semantic)?,
            };
            let result = train_probe(&LatentSet::new(cloud)?, epochs, lr, seed)?;
            println!("{:.6}", result.accuracy);
        }
    }
    Ok(())
}
