use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{read_bytes, write_bytes, IoError};
use crate::detection::DetectionRecord;
use crate::pipeline::PipelineConfig;
use crate::scene::{SceneSpec, SceneTruth};

fn schema_error(path: &Path, field: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Schema {
        path: path.to_path_buf(),
        field: field.into(),
        message: message.into(),
    }
}

/// Deserializes `text`, reporting schema violations with the dotted path of
/// the offending field. `path` only labels the error.
pub fn from_json_str<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let message = e.inner().to_string();
        schema_error(path, field, message)
    })?;
    Ok(value)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, IoError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| schema_error(path, ".", e.to_string()))?;
    from_json_str(text, path)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_bytes(path.as_ref(), text.as_bytes())
}

/// Reads and validates a scene; validation failures name the field, e.g.
/// `objects[1]`.
pub fn read_scene(path: impl AsRef<Path>) -> Result<SceneSpec, IoError> {
    let path = path.as_ref();
    let spec: SceneSpec = read_json(path)?;
    spec.validate().map_err(|e| schema_error(path, e.field, e.message))?;
    Ok(spec)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<PipelineConfig, IoError> {
    let path = path.as_ref();
    let config: PipelineConfig = read_json(path)?;
    config.validate().map_err(|e| schema_error(path, e.field, e.message))?;
    Ok(config)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>, IoError> {
    read_json(path)
}

pub fn write_detections(detections: &[DetectionRecord], path: impl AsRef<Path>) -> Result<(), IoError> {
    write_json(detections, path)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<SceneTruth, IoError> {
    read_json(path)
}
