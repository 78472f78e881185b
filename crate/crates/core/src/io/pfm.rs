use std::path::Path;

use super::pnm::HeaderReader;
use super::{read_bytes, write_bytes, FormatError, IoError};

/// Single-channel float raster in meters, row-major top-to-bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl DepthMap {
    /// Bitwise comparison, so NaN payloads and signed zeros count.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Decodes a grayscale little-endian PFM. Rows are stored bottom-to-top on
/// disk and returned top-to-bottom.
pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap, FormatError> {
    let mut header = HeaderReader::new(bytes);
    let magic = header.magic()?;
    match &magic {
        b"Pf" => {}
        b"PF" => {
            return Err(FormatError::malformed(
                0,
                "color PFM (`PF`) is not a depth map, expected `Pf`",
            ))
        }
        _ => {
            return Err(FormatError::malformed(
                0,
                format!("bad magic `{}`, expected `Pf`", String::from_utf8_lossy(&magic)),
            ))
        }
    }
    let width = header.dimension("width")?;
    let height = header.dimension("height")?;
    let at = header.offset();
    let tok = header.token("scale")?;
    let scale: f32 = tok
        .parse()
        .map_err(|_| FormatError::malformed(at, format!("invalid scale `{tok}`")))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(FormatError::malformed(at, format!("invalid scale `{tok}`")));
    }
    if scale > 0.0 {
        return Err(FormatError::UnsupportedEndianness { scale });
    }
    let payload = header.end_of_header()?;
    let offset = header.offset();
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::malformed(offset, "dimensions overflow"))?;
    if payload.len() < expected {
        return Err(FormatError::Truncated {
            offset,
            expected,
            actual: payload.len(),
        });
    }
    let mut values = vec![0f32; width * height];
    for (disk_row, chunk) in payload[..expected].chunks_exact(width * 4).enumerate() {
        let row = height - 1 - disk_row;
        for (u, b) in chunk.chunks_exact(4).enumerate() {
            values[row * width + u] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    Ok(DepthMap { width, height, values })
}

pub fn encode_pfm(map: &DepthMap) -> Vec<u8> {
    assert_eq!(map.values.len(), map.width * map.height, "depth buffer size");
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    out.reserve(map.values.len() * 4);
    for row in map.values.chunks_exact(map.width).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap, IoError> {
    let path = path.as_ref();
    decode_pfm(&read_bytes(path)?).map_err(|e| IoError::format(path, e))
}

pub fn write_depth(map: &DepthMap, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_bytes(path.as_ref(), &encode_pfm(map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_by_one(header: &str, value: f32) -> Vec<u8> {
        let mut bytes = header.as_bytes().to_vec();
        bytes.extend_from_slice(&value.to_le_bytes());
        bytes
    }

    #[test]
    fn decodes_single_value() {
        let map = decode_pfm(&one_by_one("Pf\n1 1\n-1.0\n", 2.5)).unwrap();
        assert_eq!(map.values, vec![2.5]);
    }

    #[test]
    fn infinity_survives_round_trip() {
        let map = DepthMap {
            width: 2,
            height: 1,
            values: vec![1.0, f32::INFINITY],
        };
        let back = decode_pfm(&encode_pfm(&map)).unwrap();
        assert_eq!(back.values[0], 1.0);
        assert!(back.values[1].is_infinite() && back.values[1] > 0.0);
    }

    #[test]
    fn rows_are_stored_bottom_up() {
        let map = DepthMap {
            width: 1,
            height: 2,
            values: vec![1.0, 2.0],
        };
        let bytes = encode_pfm(&map);
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(&payload[..4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_color_and_big_endian() {
        let err = decode_pfm(&one_by_one("PF\n1 1\n-1.0\n", 1.0)).unwrap_err();
        assert!(matches!(err, FormatError::Malformed { offset: 0, .. }));
        let err = decode_pfm(&one_by_one("Pf\n1 1\n1.0\n", 1.0)).unwrap_err();
        assert_eq!(err, FormatError::UnsupportedEndianness { scale: 1.0 });
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(w in 1usize..7, h in 1usize..7, raw in proptest::collection::vec(any::<u32>(), 49)) {
            let values: Vec<f32> = raw[..w * h].iter().map(|&b| f32::from_bits(b)).collect();
            let map = DepthMap { width: w, height: h, values };
            let bytes = encode_pfm(&map);
            let back = decode_pfm(&bytes).unwrap();
            prop_assert!(back.bit_eq(&map));
            prop_assert_eq!(encode_pfm(&back), bytes);
        }

        #[test]
        fn truncations_always_error(w in 1usize..6, h in 1usize..6, cut_frac in 0.0f64..1.0) {
            let map = DepthMap { width: w, height: h, values: vec![1.5; w * h] };
            let bytes = encode_pfm(&map);
            let cut = ((bytes.len() as f64 * cut_frac) as usize).min(bytes.len() - 1);
            prop_assert!(decode_pfm(&bytes[..cut]).is_err());
        }
    }
}
