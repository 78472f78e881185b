use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{BlurParams, ExternalDetectorConfig};
use crate::mask::{EgoSpec, MaskParams};
use crate::plane::RansacParams;
use crate::scene::FIXTURE_NAMES;
use crate::tiler::TilerParams;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Resolution and noise applied to a fixture before rendering.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderOverride {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub depth_noise_sigma: Option<f64>,
    pub noise_seed: Option<u64>,
}

/// Either an `rgb` + `depth` pair (with optional `truth` for the oracle) or a
/// catalog `fixture`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub rgb: Option<PathBuf>,
    pub depth: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub fixture: Option<String>,
    pub render: Option<RenderOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorConfig {
    /// Ground-truth boxes; needs a fixture or `input.truth`. `latency_ms`
    /// adds a per-patch delay.
    Oracle {
        #[serde(default)]
        latency_ms: u64,
    },
    External(ExternalDetectorConfig),
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::Oracle { latency_ms: 0 }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub overlay: bool,
    #[serde(default)]
    pub patches: bool,
    #[serde(default = "yes")]
    pub blurred: bool,
    #[serde(default = "yes")]
    pub mask: bool,
}

impl OutputConfig {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            overlay: true,
            patches: false,
            blurred: true,
            mask: true,
        }
    }
}

fn default_downsample() -> usize {
    10
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default = "default_downsample")]
    pub downsample_factor: usize,
    #[serde(default)]
    pub ransac: RansacParams,
    #[serde(default)]
    pub mask: MaskParams,
    #[serde(default)]
    pub tiler: TilerParams,
    #[serde(default)]
    pub detector: DetectorConfig,
    /// Concurrent detector calls, further capped by the detector's own limit.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub blur: BlurParams,
    pub outputs: OutputConfig,
}

impl PipelineConfig {
    /// Defaults for everything but the input and output directory.
    pub fn for_fixture(name: &str, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: InputConfig {
                fixture: Some(name.to_string()),
                ..Default::default()
            },
            downsample_factor: default_downsample(),
            ransac: RansacParams::default(),
            mask: MaskParams::default(),
            tiler: TilerParams::default(),
            detector: DetectorConfig::default(),
            workers: default_workers(),
            blur: BlurParams::default(),
            outputs: OutputConfig::new(out_dir),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let input = &self.input;
        let files = input.rgb.is_some() || input.depth.is_some();
        match (&input.fixture, files) {
            (Some(_), true) => {
                return Err(ConfigError::new(
                    "input",
                    "give either rgb/depth files or a fixture, not both",
                ))
            }
            (None, false) => return Err(ConfigError::new("input", "no input: give rgb and depth, or a fixture")),
            (None, true) if input.rgb.is_none() || input.depth.is_none() => {
                return Err(ConfigError::new("input", "rgb and depth must be given together"))
            }
            (Some(name), false) if !FIXTURE_NAMES.contains(&name.as_str()) => {
                return Err(ConfigError::new(
                    "input.fixture",
                    format!("unknown fixture {name:?}; known: {}", FIXTURE_NAMES.join(", ")),
                ))
            }
            _ => {}
        }
        if input.fixture.is_none() && input.render.is_some() {
            return Err(ConfigError::new("input.render", "only applies to fixtures"));
        }
        if input.fixture.is_some() && input.truth.is_some() {
            return Err(ConfigError::new("input.truth", "fixtures carry their own ground truth"));
        }
        if self.downsample_factor == 0 {
            return Err(ConfigError::new("downsample_factor", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(ConfigError::new("workers", "must be at least 1"));
        }
        self.ransac
            .validate()
            .map_err(|e| ConfigError::new("ransac", e.to_string()))?;
        self.mask.validate().map_err(|e| ConfigError::new("mask", e))?;
        self.tiler
            .validate()
            .map_err(|e| ConfigError::new("tiler", e.to_string()))?;
        self.blur.validate().map_err(|e| ConfigError::new("blur", e))?;
        if let DetectorConfig::External(ext) = &self.detector {
            ext.validate().map_err(|e| ConfigError::new("detector", e))?;
        }
        if let DetectorConfig::Oracle { .. } = self.detector {
            if input.fixture.is_none() && input.truth.is_none() {
                return Err(ConfigError::new(
                    "detector",
                    "the oracle detector needs ground truth: use a fixture or set input.truth",
                ));
            }
        }
        Ok(())
    }

    /// Interprets relative file paths as relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.input.rgb, &mut self.input.depth, &mut self.input.truth]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let EgoSpec::File { mask_path } = &mut self.mask.ego {
            fix(mask_path);
        }
        fix(&mut self.outputs.dir);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> PipelineConfig {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn both_sources_is_a_config_error() {
        let c = parse(r#"{"input":{"fixture":"flat_empty","rgb":"a.ppm","depth":"a.pfm"},"outputs":{"dir":"o"}}"#);
        assert_eq!(c.validate().unwrap_err().field, "input");
    }

    #[test]
    fn missing_depth_or_source() {
        let c = parse(r#"{"input":{"rgb":"a.ppm","truth":"t.json"},"outputs":{"dir":"o"}}"#);
        assert_eq!(c.validate().unwrap_err().field, "input");
        let c = parse(r#"{"input":{},"outputs":{"dir":"o"}}"#);
        assert_eq!(c.validate().unwrap_err().field, "input");
    }

    #[test]
    fn oracle_without_truth_is_rejected() {
        let c = parse(r#"{"input":{"rgb":"a.ppm","depth":"a.pfm"},"outputs":{"dir":"o"}}"#);
        assert_eq!(c.validate().unwrap_err().field, "detector");
    }

    #[test]
    fn external_detector_parses() {
        let c = parse(
            r#"{"input":{"rgb":"a.ppm","depth":"a.pfm"},"outputs":{"dir":"o"},
                "detector":{"kind":"external","command":["./det"],"max_parallelism":2}}"#,
        );
        c.validate().unwrap();
        match c.detector {
            DetectorConfig::External(e) => {
                assert_eq!(e.max_parallelism, 2);
                assert_eq!(e.timeout_s, 30.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_detector_kind_fails_to_parse() {
        let r: Result<PipelineConfig, _> = serde_json::from_str(
            r#"{"input":{"fixture":"flat_empty"},"outputs":{"dir":"o"},"detector":{"kind":"cnn"}}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn defaults_follow_the_reference_parameters() {
        let c = PipelineConfig::for_fixture("street_canyon", "o");
        c.validate().unwrap();
        assert_eq!(c.downsample_factor, 10);
        assert_eq!(c.ransac.distance_threshold_m, 0.5);
        assert_eq!(c.ransac.top_k, 10);
        assert_eq!(c.mask.buffer_px, 350);
        assert_eq!((c.tiler.patch_w, c.tiler.patch_h), (1200, 600));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut c = parse(r#"{"input":{"rgb":"a.ppm","depth":"/abs/a.pfm","truth":"t.json"},"outputs":{"dir":"o"}}"#);
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(c.input.rgb.unwrap(), Path::new("/cfg/a.ppm"));
        assert_eq!(c.input.depth.unwrap(), Path::new("/abs/a.pfm"));
        assert_eq!(c.outputs.dir, Path::new("/cfg/o"));
    }
}
