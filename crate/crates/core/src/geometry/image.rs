//! Dense image and depth grids, and bilinear sampling.
//!
//! Pixel `(i, j)` sits at continuous coordinate `(i, j)`; there is no
//! half-pixel offset.

use crate::error::{Error, Result};
use crate::geometry::PixelPoint;

/// ITU-R 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major image with 1 or 3 channels, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ImageSize {
                width,
                height,
                reason: "image is empty".into(),
            });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::precondition(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::precondition(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::precondition(format!(
                "image value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image filled with a constant value per channel.
    pub fn filled(width: usize, height: usize, value: &[f64]) -> Result<Self> {
        let data = (0..width * height)
            .flat_map(|_| value.iter().copied())
            .collect();
        Self::new(width, height, value.len(), data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Single-channel luminance; a grayscale image is returned unchanged.
    pub fn luminance(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| (LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]).clamp(0.0, 1.0))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// `1 − v` per value.
    pub fn inverted(&self) -> Image {
        Image {
            data: self.data.iter().map(|v| 1.0 - v).collect(),
            ..self.clone()
        }
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
    }
}

/// Depth grid; entries excluded by `mask` are holes and carry no meaning.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl DepthMap {
    /// Dense map; every value must be finite and positive.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::build(width, height, data, None)
    }

    /// Map with a validity mask (`true` = valid).
    pub fn with_mask(width: usize, height: usize, data: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::precondition("mask size does not match depth map"));
        }
        Self::build(width, height, data, Some(mask))
    }

    fn build(width: usize, height: usize, data: Vec<f64>, mask: Option<Vec<bool>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ImageSize {
                width,
                height,
                reason: "depth map is empty".into(),
            });
        }
        if data.len() != width * height {
            return Err(Error::precondition(format!(
                "depth data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        for (i, &d) in data.iter().enumerate() {
            let valid = mask.as_ref().is_none_or(|m| m[i]);
            if valid && !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidDepth(d));
            }
        }
        Ok(Self {
            width,
            height,
            data,
            mask,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid_index(&self, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[i])
    }

    pub fn valid_count(&self) -> usize {
        (0..self.data.len()).filter(|&i| self.is_valid_index(i)).count()
    }

    /// Multiplies every depth by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<DepthMap> {
        Self::build(
            self.width,
            self.height,
            self.data.iter().map(|d| d * s).collect(),
            self.mask.clone(),
        )
    }
}

/// Result of bilinear sampling; channels beyond the image's count are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSample {
    pub values: [f64; 3],
    pub valid: bool,
}

/// Bilinear value and its spatial derivatives, evaluated on a fixed cell.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct SampleWithGrad {
    pub values: [f64; 3],
    pub dx: [f64; 3],
    pub dy: [f64; 3],
}

/// Top-left corner of the interpolation cell holding `p`.
///
/// The cell is clamped so that points on the last row/column use the cell
/// to their upper-left, which keeps both corners in bounds.
#[inline]
pub(crate) fn bilinear_cell(img: &Image, p: &PixelPoint) -> (usize, usize) {
    let x0 = (p.x.floor().max(0.0) as usize).min(img.width.saturating_sub(2));
    let y0 = (p.y.floor().max(0.0) as usize).min(img.height.saturating_sub(2));
    (x0, y0)
}

/// Bilinear patch of `cell` evaluated at `p`; extrapolates linearly when `p`
/// lies outside the cell.
#[inline]
pub(crate) fn bilinear_in_cell(img: &Image, cell: (usize, usize), p: &PixelPoint) -> SampleWithGrad {
    let (x0, y0) = cell;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let ax = p.x - x0 as f64;
    let ay = p.y - y0 as f64;
    let mut out = SampleWithGrad::default();
    for c in 0..img.channels {
        let i00 = img.get(x0, y0, c);
        let i10 = img.get(x1, y0, c);
        let i01 = img.get(x0, y1, c);
        let i11 = img.get(x1, y1, c);
        // Weighted form keeps lattice points exact.
        let top = (1.0 - ax) * i00 + ax * i10;
        let bottom = (1.0 - ax) * i01 + ax * i11;
        out.values[c] = (1.0 - ay) * top + ay * bottom;
        out.dx[c] = (1.0 - ay) * (i10 - i00) + ay * (i11 - i01);
        out.dy[c] = bottom - top;
    }
    out
}

/// Four-neighbor bilinear interpolation. Points outside
/// `[0, W−1] × [0, H−1]` are invalid and read as zero.
pub fn bilinear_sample(img: &Image, p: &PixelPoint) -> ChannelSample {
    if !(p.x.is_finite() && p.y.is_finite()) || !img.contains(p) {
        return ChannelSample {
            values: [0.0; 3],
            valid: false,
        };
    }
    let s = bilinear_in_cell(img, bilinear_cell(img, p), p);
    ChannelSample {
        values: s.values,
        valid: true,
    }
}
