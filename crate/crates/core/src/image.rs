//! In-memory raster types shared by every stage.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("buffer holds {actual} entries, expected {expected} for {width}x{height}")]
    BufferLength {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("panorama must be 2:1 equirectangular, got {width}x{height}")]
    AspectRatio { width: usize, height: usize },
    #[error("depth at pixel ({u}, {v}) is {value}; finite depths must be positive")]
    NonPositiveDepth { u: usize, v: usize, value: f32 },
    #[error("rgb is {rgb_w}x{rgb_h} but depth is {depth_w}x{depth_h}")]
    DimensionMismatch {
        rgb_w: usize,
        rgb_h: usize,
        depth_w: usize,
        depth_h: usize,
    },
}

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::BufferLength {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [u8; 3] {
        let i = (v * self.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = (v * self.width + u) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RgbImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// One boolean per pixel, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if bits.len() != width * height {
            return Err(ImageError::BufferLength {
                width,
                height,
                expected: width * height,
                actual: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[v * self.width + u] = value;
    }

    /// Sets `rows` of column `u`, clipped to the image.
    pub fn fill_column(&mut self, u: usize, rows: std::ops::Range<usize>, value: bool) {
        let end = rows.end.min(self.height);
        for v in rows.start..end {
            self.bits[v * self.width + u] = value;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Inclusive range of rows holding at least one set bit.
    pub fn row_bounds(&self) -> Option<(usize, usize)> {
        let mut rows = (0..self.height).filter(|&v| self.row(v).iter().any(|&b| b));
        let first = rows.next()?;
        let last = rows.next_back().unwrap_or(first);
        Some((first, last))
    }

    pub fn row(&self, v: usize) -> &[bool] {
        &self.bits[v * self.width..(v + 1) * self.width]
    }
}

impl std::fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bitmap")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ones", &self.count_ones())
            .finish()
    }
}

/// Equirectangular RGB plus per-pixel metric depth.
///
/// Non-finite depth marks a pixel with no LiDAR return (sky, out of range).
#[derive(Clone, PartialEq)]
pub struct DepthPanorama {
    rgb: RgbImage,
    depth: Vec<f32>,
}

impl DepthPanorama {
    /// Builds a panorama, enforcing the 2:1 aspect, matching buffer sizes and
    /// strictly positive finite depths.
    pub fn new(rgb: RgbImage, depth: Vec<f32>) -> Result<Self, ImageError> {
        let (width, height) = (rgb.width(), rgb.height());
        if width != 2 * height {
            return Err(ImageError::AspectRatio { width, height });
        }
        Self::with_any_aspect(rgb, depth)
    }

    /// Same checks as [`DepthPanorama::new`] minus the aspect ratio. Used for
    /// downsampled grids, whose ceil-rounded sides can be one pixel off 2:1.
    pub(crate) fn with_any_aspect(rgb: RgbImage, depth: Vec<f32>) -> Result<Self, ImageError> {
        let (width, height) = (rgb.width(), rgb.height());
        if depth.len() != width * height {
            return Err(ImageError::BufferLength {
                width,
                height,
                expected: width * height,
                actual: depth.len(),
            });
        }
        if let Some(i) = depth.iter().position(|d| d.is_finite() && *d <= 0.0) {
            return Err(ImageError::NonPositiveDepth {
                u: i % width,
                v: i / width,
                value: depth[i],
            });
        }
        Ok(Self { rgb, depth })
    }

    pub fn from_parts(
        rgb: RgbImage,
        depth_width: usize,
        depth_height: usize,
        depth: Vec<f32>,
    ) -> Result<Self, ImageError> {
        if rgb.width() != depth_width || rgb.height() != depth_height {
            return Err(ImageError::DimensionMismatch {
                rgb_w: rgb.width(),
                rgb_h: rgb.height(),
                depth_w: depth_width,
                depth_h: depth_height,
            });
        }
        Self::new(rgb, depth)
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    pub fn rgb(&self) -> &RgbImage {
        &self.rgb
    }

    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    #[inline]
    pub fn depth_at(&self, u: usize, v: usize) -> f32 {
        self.depth[v * self.width() + u]
    }

    pub fn into_parts(self) -> (RgbImage, Vec<f32>) {
        (self.rgb, self.depth)
    }
}

impl std::fmt::Debug for DepthPanorama {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DepthPanorama")
            .field("width", &self.width())
            .field("height", &self.height())
            .finish_non_exhaustive()
    }
}
