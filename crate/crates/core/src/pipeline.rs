//! Batch orchestration: image files in, SVG and JSON sidecars out.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::BilinearField;
use crate::grid::{load_image, IngestConfig, ScalarGrid};
use crate::lens::{
    build_lens, compute_persistence, extract_segments, filter_small, LensParams, Persistence,
    Segment,
};
use crate::tree::{build_contour_tree, ContourTree};
use crate::vectorize::{emit_svg, Point, SvgPath, SvgStyle, DEFAULT_CHORD_TOL};

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "pgm", "ppm", "pbm", "pnm"];

/// A persistence threshold, either absolute or a fraction of the value
/// range of the grid the tree is built on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    Fraction(f64),
}

impl Threshold {
    pub fn resolve(self, range: f64) -> f64 {
        match self {
            Threshold::Absolute(t) => t,
            Threshold::Fraction(f) => f * range,
        }
    }

    fn is_valid(self) -> bool {
        match self {
            Threshold::Absolute(t) => t.is_finite() && t > 0.0,
            Threshold::Fraction(f) => f.is_finite() && f > 0.0,
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidConfig(format!("invalid threshold {s:?}"));
        match s.strip_suffix('%') {
            Some(p) => p
                .trim()
                .parse::<f64>()
                .map(|p| Threshold::Fraction(p / 100.0))
                .map_err(|_| bad()),
            None => s.parse::<f64>().map(Threshold::Absolute).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Absolute(t) => write!(f, "{t}"),
            Threshold::Fraction(p) => write!(f, "{}%", p * 100.0),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(t) => Ok(Threshold::Absolute(t)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ingest: IngestConfig,
    pub tau1: Threshold,
    pub tau2: Threshold,
    pub min_area: f64,
    pub chord_tol: f64,
    pub stroke_width: f64,
    pub out_dir: PathBuf,
    pub levels: Vec<u8>,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ingest: IngestConfig::default(),
            tau1: Threshold::Fraction(0.20),
            tau2: Threshold::Fraction(0.08),
            min_area: 10.0,
            chord_tol: DEFAULT_CHORD_TOL,
            stroke_width: SvgStyle::default().stroke_width,
            out_dir: PathBuf::from("out"),
            levels: vec![1, 2],
            workers: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        if !self.tau1.is_valid() || !self.tau2.is_valid() {
            return Err(Error::InvalidConfig(format!(
                "thresholds must be positive, got tau1 = {}, tau2 = {}",
                self.tau1, self.tau2
            )));
        }
        let ordered = match (self.tau1, self.tau2) {
            (Threshold::Absolute(a), Threshold::Absolute(b))
            | (Threshold::Fraction(a), Threshold::Fraction(b)) => b < a,
            _ => true,
        };
        if !ordered {
            return Err(Error::InvalidConfig(format!(
                "tau2 must be below tau1, got tau1 = {}, tau2 = {}",
                self.tau1, self.tau2
            )));
        }
        if self.min_area.is_nan() || self.min_area < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "min_area must be non-negative, got {}",
                self.min_area
            )));
        }
        if !(self.chord_tol > 0.0 && self.chord_tol.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "chord_tol must be positive, got {}",
                self.chord_tol
            )));
        }
        if !(self.stroke_width >= 0.0 && self.stroke_width.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stroke width must be non-negative, got {}",
                self.stroke_width
            )));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !matches!(l, 1 | 2)) {
            return Err(Error::InvalidConfig(format!(
                "levels must be a non-empty subset of {{1, 2}}, got {:?}",
                self.levels
            )));
        }
        Ok(())
    }

    fn emit_levels(&self) -> Vec<u8> {
        let mut levels = self.levels.clone();
        levels.sort_unstable();
        levels.dedup();
        levels
    }
}

/// Everything computed for one grid, before serialization.
#[derive(Debug, Clone)]
pub struct Segmentation {
    /// The grid the tree is built on, padded when the input lacks a
    /// minimum frame.
    pub grid: ScalarGrid,
    /// Grid coordinates of the input's vertex (0, 0).
    pub origin: Point,
    pub tree: ContourTree,
    pub persistence: Persistence,
    pub lens: LensParams,
    /// Segments surviving the area filter.
    pub segments: Vec<Segment>,
    pub filtered_out: usize,
}

impl Segmentation {
    pub fn count(&self, level: u8) -> usize {
        self.segments.iter().filter(|s| s.level == level).count()
    }
}

/// Runs tree construction, simplification, extraction and filtering on a
/// grid. `origin` is the offset already applied by ingest padding.
pub fn segment_grid(
    grid: ScalarGrid,
    origin: Point,
    config: &PipelineConfig,
) -> Result<Segmentation> {
    let (grid, origin) = if grid.has_min_frame() {
        (grid, origin)
    } else {
        let pad = grid.min_value() - 1.0;
        (grid.padded(pad), (origin.0 + 1.0, origin.1 + 1.0))
    };
    let range = grid.value_range();
    let lens = LensParams {
        tau1: config.tau1.resolve(range),
        tau2: config.tau2.resolve(range),
        min_area: config.min_area,
    };
    lens.validate()?;
    let tree = build_contour_tree(&grid)?;
    let persistence = compute_persistence(&tree)?;
    let regions = build_lens(&tree, &persistence, &lens)?;
    let field = BilinearField::new(&grid);
    let segments = extract_segments(&tree, &regions, &field, config.chord_tol)?;
    let total = segments.len();
    let segments = filter_small(segments, lens.min_area);
    let filtered_out = total - segments.len();
    Ok(Segmentation {
        grid,
        origin,
        tree,
        persistence,
        lens,
        segments,
        filtered_out,
    })
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    width: usize,
    height: usize,
    grid_offset: Point,
    node_count: usize,
    arc_count: usize,
    pair_count: usize,
    tau1: f64,
    tau2: f64,
    segments: Vec<SidecarSegment<'a>>,
}

#[derive(Debug, Serialize)]
struct SidecarSegment<'a> {
    id: usize,
    level: u8,
    parent: Option<usize>,
    area: f64,
    value_interval: (f64, f64),
    contour_count: usize,
    contours: Vec<SidecarContour<'a>>,
}

#[derive(Debug, Serialize)]
struct SidecarContour<'a> {
    level: f64,
    pieces: &'a [crate::vectorize::CurvePiece],
}

/// Serialized outputs of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub svg: String,
    pub json: String,
}

/// Renders the SVG document and JSON sidecar of a segmentation, keeping
/// only the requested levels.
pub fn render(seg: &Segmentation, config: &PipelineConfig) -> Result<Rendered> {
    let levels = config.emit_levels();
    let pad = seg.origin;
    let width = seg.grid.width() - 2 * pad.0 as usize;
    let height = seg.grid.height() - 2 * pad.1 as usize;
    let emitted: Vec<&Segment> = seg
        .segments
        .iter()
        .filter(|s| levels.contains(&s.level))
        .collect();
    let polylines: Vec<Vec<Vec<Point>>> = emitted.iter().map(|s| s.polylines()).collect();
    let paths: Vec<SvgPath> = emitted
        .iter()
        .zip(&polylines)
        .map(|(s, p)| SvgPath {
            id: s.id,
            level: s.level,
            contours: p,
        })
        .collect();
    let style = SvgStyle {
        stroke_width: config.stroke_width,
    };
    let svg = emit_svg(width, height, &levels, &paths, seg.origin, &style);
    let sidecar = Sidecar {
        width,
        height,
        grid_offset: seg.origin,
        node_count: seg.tree.node_count(),
        arc_count: seg.tree.arc_count(),
        pair_count: seg.persistence.pairs.len(),
        tau1: seg.lens.tau1,
        tau2: seg.lens.tau2,
        segments: emitted
            .iter()
            .map(|s| SidecarSegment {
                id: s.id,
                level: s.level,
                parent: s.parent,
                area: s.area,
                value_interval: s.value_interval,
                contour_count: s.contours.len(),
                contours: s
                    .contours
                    .iter()
                    .map(|c| SidecarContour {
                        level: c.level,
                        pieces: &c.pieces,
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize sidecar: {e}")))?;
    json.push('\n');
    Ok(Rendered { svg, json })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub input: PathBuf,
    pub svg: PathBuf,
    pub json: PathBuf,
    pub node_count: usize,
    pub pair_count: usize,
    pub level1_segments: usize,
    pub level2_segments: usize,
    pub filtered_out: usize,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub input: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub images: Vec<ImageReport>,
    pub failures: Vec<Failure>,
}

impl RunReport {
    /// 0 when every image succeeded, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Processes every input into `config.out_dir`. Per-image failures are
/// recorded in the report; only configuration problems abort the run.
pub fn run(config: &PipelineConfig, inputs: &[PathBuf]) -> Result<RunReport> {
    config.validate()?;
    if inputs.is_empty() {
        return Ok(RunReport::default());
    }
    std::fs::create_dir_all(&config.out_dir).map_err(|source| Error::Write {
        path: config.out_dir.clone(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<ImageReport>> =
        pool.install(|| inputs.par_iter().map(|p| process(config, p)).collect());
    let mut report = RunReport::default();
    for (input, outcome) in inputs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => report.images.push(r),
            Err(e) => report.failures.push(Failure {
                input: input.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(report)
}

fn process(config: &PipelineConfig, input: &Path) -> Result<ImageReport> {
    let start = Instant::now();
    let grid = load_image(input, &config.ingest)?;
    let origin = if config.ingest.pad_border {
        (1.0, 1.0)
    } else {
        (0.0, 0.0)
    };
    let seg = segment_grid(grid, origin, config)?;
    let rendered = render(&seg, config)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_owned());
    let svg = config.out_dir.join(format!("{stem}.svg"));
    let json = config.out_dir.join(format!("{stem}.json"));
    write(&svg, &rendered.svg)?;
    write(&json, &rendered.json)?;
    let levels = config.emit_levels();
    let count = |l: u8| if levels.contains(&l) { seg.count(l) } else { 0 };
    Ok(ImageReport {
        input: input.to_path_buf(),
        svg,
        json,
        node_count: seg.tree.node_count(),
        pair_count: seg.persistence.pairs.len(),
        level1_segments: count(1),
        level2_segments: count(2),
        filtered_out: seg.filtered_out,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Expands directories into their image files, sorted by name; files are
/// passed through unchanged.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.is_file()
                        && f.extension().is_some_and(|x| {
                            IMAGE_EXTENSIONS.contains(&x.to_string_lossy().to_lowercase().as_str())
                        })
                })
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}
