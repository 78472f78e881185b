use std::path::Path;

use super::{read_bytes, write_bytes, FormatError, IoError};
use crate::image::{Bitmap, RgbImage};

/// Cursor over a Netpbm-style text header.
pub(super) struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    pub(super) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(super) fn offset(&self) -> usize {
        self.pos
    }

    pub(super) fn magic(&mut self) -> Result<[u8; 2], FormatError> {
        if self.bytes.len() < 2 {
            return Err(FormatError::malformed(0, "missing magic number"));
        }
        self.pos = 2;
        Ok([self.bytes[0], self.bytes[1]])
    }

    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next whitespace-delimited token. Requires leading whitespace.
    pub(super) fn token(&mut self, what: &str) -> Result<&'a str, FormatError> {
        let before = self.pos;
        self.skip_whitespace_and_comments();
        if self.pos == before {
            return Err(FormatError::malformed(
                self.pos,
                format!("expected whitespace before {what}"),
            ));
        }
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FormatError::malformed(start, format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| FormatError::malformed(start, format!("non-ASCII {what}")))
    }

    pub(super) fn dimension(&mut self, what: &str) -> Result<usize, FormatError> {
        let at = self.pos;
        let tok = self.token(what)?;
        match tok.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(FormatError::malformed(at, format!("invalid {what} `{tok}`"))),
        }
    }

    /// Consumes the single whitespace byte separating header and raster.
    pub(super) fn end_of_header(&mut self) -> Result<&'a [u8], FormatError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(&self.bytes[self.pos..])
            }
            _ => Err(FormatError::malformed(
                self.pos,
                "expected a single whitespace byte after the header",
            )),
        }
    }
}

fn decode_8bit<'a>(bytes: &'a [u8], magic: &[u8; 2], channels: usize) -> Result<(usize, usize, &'a [u8]), FormatError> {
    let mut header = HeaderReader::new(bytes);
    let found = header.magic()?;
    if &found != magic {
        return Err(FormatError::malformed(
            0,
            format!(
                "bad magic `{}`, expected `{}`",
                String::from_utf8_lossy(&found),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let width = header.dimension("width")?;
    let height = header.dimension("height")?;
    let maxval = header.token("maxval")?;
    let at = header.offset() - maxval.len();
    if maxval != "255" {
        return Err(FormatError::malformed(
            at,
            format!("unsupported maxval `{maxval}`, only 255 is accepted"),
        ));
    }
    let payload = header.end_of_header()?;
    let offset = header.offset();
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| FormatError::malformed(offset, "dimensions overflow"))?;
    if payload.len() < expected {
        return Err(FormatError::Truncated {
            offset,
            expected,
            actual: payload.len(),
        });
    }
    Ok((width, height, &payload[..expected]))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, FormatError> {
    let (width, height, payload) = decode_8bit(bytes, b"P6", 3)?;
    Ok(RgbImage::from_raw(width, height, payload.to_vec()).expect("payload length checked"))
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.as_raw());
    out
}

/// Decodes a P5 mask; any non-zero sample is a set bit.
pub fn decode_pgm(bytes: &[u8]) -> Result<Bitmap, FormatError> {
    let (width, height, payload) = decode_8bit(bytes, b"P5", 1)?;
    let bits = payload.iter().map(|&b| b != 0).collect();
    Ok(Bitmap::from_bits(width, height, bits).expect("payload length checked"))
}

/// Encodes a mask as P5 with 0 for clear and 255 for set bits.
pub fn encode_pgm(mask: &Bitmap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage, IoError> {
    let path = path.as_ref();
    decode_ppm(&read_bytes(path)?).map_err(|e| IoError::format(path, e))
}

pub fn write_rgb(image: &RgbImage, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_bytes(path.as_ref(), &encode_ppm(image))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Bitmap, IoError> {
    let path = path.as_ref();
    decode_pgm(&read_bytes(path)?).map_err(|e| IoError::format(path, e))
}

pub fn write_mask(mask: &Bitmap, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_bytes(path.as_ref(), &encode_pgm(mask))
}
