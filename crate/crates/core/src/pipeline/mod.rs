//! End-to-end run: load, unproject, extract planes, build the mask, tile,
//! detect, merge, blur, write.

mod baseline;
mod config;
mod run;

pub use baseline::{compare_baseline, static_band_mask, BaselineError, BaselineReport, STATIC_BAND_FRACTION};
pub use config::{ConfigError, DetectorConfig, InputConfig, OutputConfig, PipelineConfig, RenderOverride};
pub use run::{
    load_input, make_detector, process, run, LoadedInput, PipelineError, PlaneSummary, RunMetrics, RunOutput, Stage,
    StageSeconds,
};
