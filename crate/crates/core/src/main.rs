use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use levelseg::grid::Channel;
use levelseg::pipeline::{collect_inputs, run, PipelineConfig, Threshold};
use levelseg::{Error, Result};

/// Segments grayscale images into nested regions bounded by level-set
/// curves and writes one SVG and one JSON sidecar per image.
#[derive(Debug, Parser)]
#[command(name = "levelseg", version)]
struct Cli {
    /// Image files or directories of images.
    inputs: Vec<PathBuf>,

    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Color channel used as intensity.
    #[arg(long, value_enum)]
    channel: Option<Channel>,

    /// Intensities at or below this value are set to zero.
    #[arg(long)]
    background_threshold: Option<f64>,

    /// Level-1 persistence threshold, absolute or a percentage of the range.
    #[arg(long)]
    tau1: Option<Threshold>,

    /// Level-2 persistence threshold, absolute or a percentage of the range.
    #[arg(long)]
    tau2: Option<Threshold>,

    /// Segments with smaller area in square pixels are dropped.
    #[arg(long)]
    min_area: Option<f64>,

    /// Maximum distance between a curve and its polyline, in pixels.
    #[arg(long)]
    chord_tol: Option<f64>,

    /// Stroke width of segment outlines, in pixels.
    #[arg(long)]
    stroke_width: Option<f64>,

    /// Hierarchy levels to emit, comma separated.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u8>>,

    /// Output directory for SVG and JSON files.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    workers: Option<usize>,

    /// Path of the JSON run report.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl Cli {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                toml::from_str(&text).map_err(|e| {
                    Error::InvalidConfig(format!("{}: {}", path.display(), e.message()))
                })?
            }
            None => PipelineConfig::default(),
        };
        if let Some(c) = self.channel {
            cfg.ingest.channel = c;
        }
        if let Some(t) = self.background_threshold {
            cfg.ingest.background_threshold = t;
        }
        if let Some(t) = self.tau1 {
            cfg.tau1 = t;
        }
        if let Some(t) = self.tau2 {
            cfg.tau2 = t;
        }
        if let Some(a) = self.min_area {
            cfg.min_area = a;
        }
        if let Some(t) = self.chord_tol {
            cfg.chord_tol = t;
        }
        if let Some(w) = self.stroke_width {
            cfg.stroke_width = w;
        }
        if let Some(l) = &self.levels {
            cfg.levels = l.clone();
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.config().and_then(|cfg| {
        let inputs = collect_inputs(&cli.inputs)?;
        run(&cfg, &inputs)
    });
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("levelseg: {e}");
            return ExitCode::from(1);
        }
    };
    for img in &report.images {
        println!(
            "{}: {} nodes, {} pairs, {} level-1 and {} level-2 segments, {} filtered, {:.1} ms",
            img.input.display(),
            img.node_count,
            img.pair_count,
            img.level1_segments,
            img.level2_segments,
            img.filtered_out,
            img.wall_time_ms
        );
    }
    for f in &report.failures {
        eprintln!("levelseg: {}: {}", f.input.display(), f.reason);
    }
    if let Some(path) = &cli.report {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = std::fs::write(path, text + "\n") {
            eprintln!("levelseg: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
