//! Pixel containers, colour conversions, filtering and geometric resampling.
//!
//! [`RasterImage`] is the interleaved `[0, 1]` container every stage consumes.
//! Real-valued intermediate maps (contrast, line responses) live in [`Plane`],
//! which has no range restriction.

mod codec;
mod filter;
mod geometry;

pub use codec::{decode_image, encode_pgm, encode_ppm};
pub use filter::{gaussian5, gaussian_blur, gaussian_taps, BINOMIAL5};
pub use geometry::{
    flip_h, flip_plane_h, flip_plane_v, flip_v, resize_bilinear, resize_nearest, resize_plane,
    rotate, rotate_plane, Interpolation,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("corrupt image data: {0}")]
    CorruptData(String),
    #[error("expected {expected} channel(s), found {found}")]
    WrongChannelCount { expected: usize, found: usize },
    #[error("invalid dimensions {width}x{height}x{channels} for {len} samples")]
    InvalidDimensions {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("sample {value} at index {index} lies outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
}

/// H×W×C raster with channel-interleaved samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, RasterError> {
        if !(channels == 1 || channels == 3) || width * height * channels != data.len() {
            return Err(RasterError::InvalidDimensions {
                width,
                height,
                channels,
                len: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(RasterError::ValueOutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image, clamping every sample into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert!(channels == 1 || channels == 3);
        assert_eq!(width * height * channels, data.len());
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::from_clamped(width, height, channels, vec![0.0; width * height * channels])
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(width * height * channels, data.len());
        Self {
            width,
            height,
            channels,
            data,
        }
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Extracts channel `c` as a plane.
    pub fn channel(&self, c: usize) -> Plane {
        assert!(c < self.channels);
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Plane::new(self.width, self.height, data)
    }

    /// Interleaves `planes` into an image; samples are clamped into `[0, 1]`.
    pub fn from_planes(planes: &[Plane]) -> Self {
        let (w, h) = (planes[0].width(), planes[0].height());
        assert!(planes.iter().all(|p| p.width() == w && p.height() == h));
        let c = planes.len();
        let mut data = vec![0.0; w * h * c];
        for (ci, p) in planes.iter().enumerate() {
            for (i, &v) in p.data().iter().enumerate() {
                data[i * c + ci] = v;
            }
        }
        Self::from_clamped(w, h, c, data)
    }
}

/// Single-channel real-valued map, row-major, unbounded range.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(width * height, data.len(), "plane size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Wraps the plane as a 1-channel raster, clamping into `[0, 1]`.
    pub fn to_raster(&self) -> RasterImage {
        RasterImage::from_clamped(self.width, self.height, 1, self.data.clone())
    }
}

/// CIELAB image, one `[L, a, b]` triple per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Self {
        assert_eq!(width * height, data.len(), "lab image size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> Plane {
        Plane::new(
            self.width,
            self.height,
            self.data.iter().map(|p| p[c]).collect(),
        )
    }
}

fn require_rgb(img: &RasterImage) -> Result<(), RasterError> {
    if img.channels != 3 {
        return Err(RasterError::WrongChannelCount {
            expected: 3,
            found: img.channels,
        });
    }
    Ok(())
}

/// Rec.601 luma.
pub fn to_gray(img: &RasterImage) -> Result<RasterImage, RasterError> {
    require_rgb(img)?;
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
        .collect();
    Ok(RasterImage::from_raw(img.width, img.height, 1, data))
}

// sRGB primaries under D65, reference white (0.95047, 1.0, 1.08883).
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB triple in `[0, 1]` to CIELAB (D65).
pub fn srgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let mut xyz = [0.0; 3];
    for (row, out) in SRGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / D65_WHITE[0]);
    let fy = lab_f(xyz[1] / D65_WHITE[1]);
    let fz = lab_f(xyz[2] / D65_WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn rgb_to_lab(img: &RasterImage) -> Result<LabImage, RasterError> {
    require_rgb(img)?;
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| srgb_pixel_to_lab([p[0], p[1], p[2]]))
        .collect();
    Ok(LabImage::new(img.width, img.height, data))
}
