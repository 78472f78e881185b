use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, DetectorConfig, PipelineConfig};
use crate::detection::{
    blur_regions, DetectionRecord, Detector, DetectorError, ExternalDetector, GroundTruthBox, LatencyDetector,
    OracleDetector,
};
use crate::geometry::unproject;
use crate::image::{DepthPanorama, RgbImage};
use crate::io::{self, read_depth, read_rgb, read_truth, write_detections, write_json, write_mask, write_rgb, IoError};
use crate::mask::{build_band, ego_mask, overlay, reproject_planes, ProcessingMask};
use crate::plane::{classify_plane, extract_top_planes, Orientation, Plane};
use crate::scene::{fixture, render};
use crate::tiler::{merge_detections, tile, to_global, Patch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Unproject,
    Ransac,
    Mask,
    Tile,
    Detect,
    Merge,
    Blur,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Load => "load",
            Self::Unproject => "unproject",
            Self::Ransac => "ransac",
            Self::Mask => "mask",
            Self::Tile => "tile",
            Self::Detect => "detect",
            Self::Merge => "merge",
            Self::Blur => "blur",
            Self::Write => "write",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("[{stage}] {message}")]
    Stage { stage: Stage, message: String },
    #[error("[detect] patch {patch}: {source}")]
    Detector {
        patch: usize,
        #[source]
        source: DetectorError,
    },
}

impl PipelineError {
    fn stage(stage: Stage, err: impl fmt::Display) -> Self {
        Self::Stage {
            stage,
            message: err.to_string(),
        }
    }

    /// Process exit code: 2 config, 3 stage failure, 4 detector protocol
    /// failure (bad reply, timeout or early exit).
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Stage { .. } => 3,
            Self::Detector { source, .. } => match source {
                DetectorError::Protocol { .. } | DetectorError::Timeout { .. } | DetectorError::Exited { .. } => 4,
                DetectorError::Spawn(_) | DetectorError::Io(_) => 3,
            },
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSeconds {
    pub load: f64,
    pub unproject: f64,
    pub ransac: f64,
    pub mask: f64,
    pub tile: f64,
    pub detect: f64,
    pub merge: f64,
    pub blur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSummary {
    pub orientation: Orientation,
    pub inlier_count: usize,
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub width: usize,
    pub height: usize,
    pub coverage_fraction: f64,
    pub patch_count: usize,
    pub detection_count_pre_merge: usize,
    pub detection_count_post_merge: usize,
    pub workers: usize,
    pub stage_seconds: StageSeconds,
    pub planes: Vec<PlaneSummary>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub planes: Vec<Plane>,
    pub mask: ProcessingMask,
    pub patches: Vec<Patch>,
    pub detections: Vec<DetectionRecord>,
    pub blurred: RgbImage,
    pub metrics: RunMetrics,
}

pub struct LoadedInput {
    pub panorama: DepthPanorama,
    pub truth: Option<Vec<GroundTruthBox>>,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot = start.elapsed().as_secs_f64();
    out
}

pub fn load_input(config: &PipelineConfig) -> Result<LoadedInput, PipelineError> {
    let input = &config.input;
    if let Some(name) = &input.fixture {
        let mut spec = fixture(name).ok_or_else(|| PipelineError::Config(format!("unknown fixture {name:?}")))?;
        if let Some(r) = &input.render {
            spec.render.width = r.width.unwrap_or(spec.render.width);
            spec.render.height = r.height.unwrap_or(spec.render.height);
            spec.render.depth_noise_sigma = r.depth_noise_sigma.unwrap_or(spec.render.depth_noise_sigma);
            spec.render.noise_seed = r.noise_seed.unwrap_or(spec.render.noise_seed);
        }
        let scene = render(&spec).map_err(|e| PipelineError::Config(format!("input.render: {e}")))?;
        let truth = scene.gt_objects.iter().map(|o| o.as_box()).collect();
        return Ok(LoadedInput {
            panorama: scene.panorama,
            truth: Some(truth),
        });
    }
    let (rgb_path, depth_path) = match (&input.rgb, &input.depth) {
        (Some(r), Some(d)) => (r, d),
        _ => return Err(PipelineError::Config("input: rgb and depth are required".into())),
    };
    let load = |e: IoError| PipelineError::stage(Stage::Load, e);
    let rgb = read_rgb(rgb_path).map_err(load)?;
    let depth = read_depth(depth_path).map_err(load)?;
    let panorama = DepthPanorama::from_parts(rgb, depth.width, depth.height, depth.values)
        .map_err(|e| PipelineError::stage(Stage::Load, format!("{}: {e}", depth_path.display())))?;
    let truth = match &input.truth {
        Some(path) => Some(read_truth(path).map_err(load)?.oracle_boxes()),
        None => None,
    };
    Ok(LoadedInput { panorama, truth })
}

pub fn make_detector(
    config: &PipelineConfig,
    truth: Option<Vec<GroundTruthBox>>,
    pano_width: usize,
) -> Result<Box<dyn Detector>, PipelineError> {
    match &config.detector {
        DetectorConfig::Oracle { latency_ms } => {
            let truth = truth
                .ok_or_else(|| PipelineError::Config("detector: the oracle detector needs ground truth".into()))?;
            let oracle = OracleDetector::new(truth, pano_width);
            Ok(if *latency_ms > 0 {
                Box::new(LatencyDetector::new(oracle, Duration::from_millis(*latency_ms)))
            } else {
                Box::new(oracle)
            })
        }
        DetectorConfig::External(ext) => ExternalDetector::new(ext.clone())
            .map(|d| Box::new(d) as Box<dyn Detector>)
            .map_err(|e| PipelineError::Detector { patch: 0, source: e }),
    }
}

/// Runs `detector` over `patches` on up to `workers` threads. Results keep
/// patch order; on failure the error of the lowest-indexed failing patch is
/// returned.
fn detect_all(
    detector: &dyn Detector,
    patches: &[Patch],
    workers: usize,
) -> Result<Vec<Vec<DetectionRecord>>, PipelineError> {
    type Slot = Mutex<Option<Result<Vec<DetectionRecord>, DetectorError>>>;
    let slots: Vec<Slot> = patches.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let work = || loop {
        if failed.load(Ordering::Relaxed) {
            break;
        }
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(patch) = patches.get(i) else {
            break;
        };
        let result = detector.detect(patch);
        if result.is_err() {
            failed.store(true, Ordering::Relaxed);
        }
        *slots[i].lock().expect("slot lock") = Some(result);
    };
    if workers <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    let mut out = Vec::with_capacity(patches.len());
    let mut missing = false;
    for (i, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().expect("slot lock") {
            Some(Ok(dets)) => out.push(dets),
            Some(Err(source)) => {
                return Err(PipelineError::Detector {
                    patch: patches[i].index,
                    source,
                })
            }
            None => missing = true,
        }
    }
    // Unreachable unless a failure cut the run short, which returned above.
    assert!(!missing, "patch left unprocessed without an error");
    Ok(out)
}

/// Every stage after loading, in memory.
pub fn process(
    panorama: &DepthPanorama,
    detector: &dyn Detector,
    config: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    config.validate_processing()?;
    let mut times = StageSeconds::default();
    let (width, height) = (panorama.width(), panorama.height());
    let factor = config.downsample_factor;

    let cloud = timed(&mut times.unproject, || unproject(panorama, factor));

    let planes = timed(&mut times.ransac, || {
        extract_top_planes(cloud.positions(), &config.ransac)
    })
    .map_err(|e| PipelineError::stage(Stage::Ransac, e))?;
    let planes: Vec<Plane> = planes
        .into_iter()
        .map(|mut p| {
            p.orientation = classify_plane(&p, &config.ransac);
            p
        })
        .collect();

    let mask = timed(&mut times.mask, || {
        let horizontal: Vec<Plane> = planes
            .iter()
            .filter(|p| p.orientation == Orientation::Horizontal)
            .cloned()
            .collect();
        let region = reproject_planes(&horizontal, &cloud, factor, width, height);
        let ego = ego_mask(&config.mask, width, height)?;
        Ok::<_, crate::mask::MaskError>(build_band(&region, &ego, &config.mask))
    })
    .map_err(|e| PipelineError::stage(Stage::Mask, e))?;

    let patches = timed(&mut times.tile, || tile(&mask.bitmap, panorama.rgb(), &config.tiler))
        .map_err(|e| PipelineError::stage(Stage::Tile, e))?;

    let limit = detector.max_parallelism().unwrap_or(usize::MAX);
    let workers = config.workers.min(limit).min(patches.len()).max(1);
    let per_patch = timed(&mut times.detect, || detect_all(detector, &patches, workers))?;

    let (pre_merge, detections) = timed(&mut times.merge, || {
        let global: Vec<DetectionRecord> = patches
            .iter()
            .zip(&per_patch)
            .flat_map(|(patch, dets)| {
                dets.iter().flat_map(move |d| {
                    to_global(patch, &d.bbox, width)
                        .into_iter()
                        .map(move |bbox| DetectionRecord { bbox, ..*d })
                })
            })
            .collect();
        let merged = merge_detections(&global, config.tiler.merge_iou, width);
        (global.len(), merged)
    });

    let blurred = timed(&mut times.blur, || {
        blur_regions(panorama.rgb(), &detections, &config.blur)
    });

    let metrics = RunMetrics {
        width,
        height,
        coverage_fraction: mask.coverage,
        patch_count: patches.len(),
        detection_count_pre_merge: pre_merge,
        detection_count_post_merge: detections.len(),
        workers,
        stage_seconds: times,
        planes: planes
            .iter()
            .map(|p| PlaneSummary {
                orientation: p.orientation,
                inlier_count: p.inliers.len(),
                normal: [p.normal.x, p.normal.y, p.normal.z],
                offset: p.offset,
            })
            .collect(),
    };
    Ok(RunOutput {
        planes,
        mask,
        patches,
        detections,
        blurred,
        metrics,
    })
}

impl PipelineConfig {
    /// The checks `process` needs; input and output settings are ignored.
    fn validate_processing(&self) -> Result<(), PipelineError> {
        if self.downsample_factor == 0 {
            return Err(PipelineError::Config("downsample_factor: must be at least 1".into()));
        }
        self.ransac
            .validate()
            .map_err(|e| PipelineError::Config(format!("ransac: {e}")))?;
        self.mask
            .validate()
            .map_err(|e| PipelineError::Config(format!("mask: {e}")))?;
        self.tiler
            .validate()
            .map_err(|e| PipelineError::Config(format!("tiler: {e}")))?;
        self.blur
            .validate()
            .map_err(|e| PipelineError::Config(format!("blur: {e}")))?;
        Ok(())
    }
}

/// Output files created so far; removed unless the run completes.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)
            .map_err(|e| PipelineError::stage(Stage::Write, format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            done: false,
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<(), IoError>) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        let existed = path.exists();
        let result = f(&path).map_err(|e| PipelineError::stage(Stage::Write, e));
        if !existed || result.is_ok() {
            self.written.push(path);
        }
        result
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for path in self.written.iter().rev() {
            let _ = if path.is_dir() {
                std::fs::remove_dir_all(path)
            } else {
                std::fs::remove_file(path)
            };
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

/// Loads the input, processes it and writes `detections.json`,
/// `metrics.json` and the enabled optional outputs (`mask.pgm`,
/// `blurred.ppm`, `overlay.ppm`, `patches/`) into the output directory.
/// Files written by a failed run are removed.
pub fn run(config: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let input = load_input(config)?;
    let load_seconds = start.elapsed().as_secs_f64();
    let detector = make_detector(config, input.truth, input.panorama.width())?;
    let mut output = process(&input.panorama, detector.as_ref(), config)?;
    output.metrics.stage_seconds.load = load_seconds;
    drop(detector);

    let toggles = &config.outputs;
    let mut out = Outputs::new(&toggles.dir)?;
    out.write("detections.json", |p| write_detections(&output.detections, p))?;
    if toggles.mask {
        out.write("mask.pgm", |p| write_mask(&output.mask.bitmap, p))?;
    }
    if toggles.blurred {
        out.write("blurred.ppm", |p| write_rgb(&output.blurred, p))?;
    }
    if toggles.overlay {
        out.write("overlay.ppm", |p| {
            write_rgb(&overlay(input.panorama.rgb(), &output.mask), p)
        })?;
    }
    if toggles.patches {
        out.write("patches", |dir| {
            std::fs::create_dir_all(dir).map_err(|e| IoError::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
            output
                .patches
                .iter()
                .try_for_each(|patch| io::write_rgb(&patch.pixels, dir.join(patch.file_name())))
        })?;
    }
    out.write("metrics.json", |p| write_json(&output.metrics, p))?;
    out.done = true;
    Ok(output)
}
