//! Tiny-structure saliency (vessels) with a multi-scale line detector.
//!
//! For every pixel and scale `s ∈ {1, 3, 5, 7}` the detector takes the best
//! line average over twelve orientations minus the `s×s` window average, then
//! averages over scales. Orientations are measured counter-clockwise as
//! displayed (image `y` grows downwards). The enhanced response mixes back the
//! inverted gray level, and a z-score over the field of view followed by
//! `≥ 0.56` yields the mask.

use crate::mask::{BinaryMask, FovMask};
use crate::raster::{to_gray, Plane, RasterImage};
pub use crate::salient_large::SalientError;
use crate::salient_large::check_shape;

pub const SCALES: [usize; 4] = [1, 3, 5, 7];
pub const ANGLES_DEG: [f64; 12] = [
    0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0, 105.0, 120.0, 135.0, 150.0, 165.0,
];
pub const TS_THRESHOLD: f64 = 0.56;
const SIGMA_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Raw,
    Enhanced,
    Standardized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineResponseMap {
    plane: Plane,
    stage: Stage,
}

impl LineResponseMap {
    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn data(&self) -> &[f64] {
        self.plane.data()
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    /// Affine remap of `[min, max]` to `[0, 1]` for export.
    pub fn to_display(&self) -> RasterImage {
        let (lo, hi) = (self.plane.min(), self.plane.max());
        let span = hi - lo;
        let data = self
            .data()
            .iter()
            .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        RasterImage::from_clamped(self.width(), self.height(), 1, data)
    }

    fn expect(&self, stage: Stage) -> Result<(), SalientError> {
        if self.stage != stage {
            return Err(SalientError::StageMismatch {
                expected: stage,
                found: self.stage,
            });
        }
        Ok(())
    }
}

/// Deduplicated integer offsets of the `s`-pixel line through the origin at
/// `angle_deg`.
pub fn line_offsets(s: usize, angle_deg: f64) -> Vec<(isize, isize)> {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let half = (s as isize - 1) / 2;
    let mut out: Vec<(isize, isize)> = Vec::with_capacity(s);
    for t in -half..=half {
        let tf = t as f64;
        let off = ((tf * cos).round() as isize, -(tf * sin).round() as isize);
        if !out.contains(&off) {
            out.push(off);
        }
    }
    out
}

/// Summed-area table for O(1) clipped window means.
struct Integral {
    w: usize,
    h: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(p: &Plane) -> Self {
        let (w, h) = (p.width(), p.height());
        let mut sums = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += p.get(x, y);
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, h, sums }
    }

    fn window_mean(&self, x: usize, y: usize, half: usize) -> f64 {
        let x0 = x.saturating_sub(half);
        let y0 = y.saturating_sub(half);
        let x1 = (x + half + 1).min(self.w);
        let y1 = (y + half + 1).min(self.h);
        let s = |xx: usize, yy: usize| self.sums[yy * (self.w + 1) + xx];
        let total = s(x1, y1) - s(x0, y1) - s(x1, y0) + s(x0, y0);
        total / ((x1 - x0) * (y1 - y0)) as f64
    }
}

fn line_mean(p: &Plane, x: usize, y: usize, offsets: &[(isize, isize)]) -> f64 {
    let (w, h) = (p.width() as isize, p.height() as isize);
    let (mut sum, mut n) = (0.0, 0usize);
    for &(dx, dy) in offsets {
        let (xx, yy) = (x as isize + dx, y as isize + dy);
        if xx >= 0 && yy >= 0 && xx < w && yy < h {
            sum += p.get(xx as usize, yy as usize);
            n += 1;
        }
    }
    sum / n as f64
}

/// Per-orientation `Avg(L) − Avg(Ω)` at one pixel and scale.
pub fn oriented_responses(inv_gray: &Plane, x: usize, y: usize, s: usize) -> [f64; 12] {
    let integral = Integral::new(inv_gray);
    let win = integral.window_mean(x, y, s / 2);
    ANGLES_DEG.map(|a| line_mean(inv_gray, x, y, &line_offsets(s, a)) - win)
}

fn require_gray(img: &RasterImage) -> Result<Plane, SalientError> {
    if img.channels() != 1 {
        return Err(crate::raster::RasterError::WrongChannelCount {
            expected: 1,
            found: img.channels(),
        }
        .into());
    }
    Ok(img.channel(0))
}

pub fn line_response(inv_gray: &RasterImage, fov: &FovMask) -> Result<LineResponseMap, SalientError> {
    let p = require_gray(inv_gray)?;
    let (w, h) = (p.width(), p.height());
    check_shape(w, h, fov)?;
    let integral = Integral::new(&p);
    let bank: Vec<(usize, Vec<Vec<(isize, isize)>>)> = SCALES
        .iter()
        .filter(|&&s| s > 1)
        .map(|&s| (s, ANGLES_DEG.iter().map(|&a| line_offsets(s, a)).collect()))
        .collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            if !fov.get(x, y) {
                continue;
            }
            let mut total = 0.0;
            for (s, lines) in &bank {
                let win = integral.window_mean(x, y, s / 2);
                let best = lines
                    .iter()
                    .map(|l| line_mean(&p, x, y, l))
                    .fold(f64::NEG_INFINITY, f64::max);
                total += best - win;
            }
            out[y * w + x] = total / SCALES.len() as f64;
        }
    }
    Ok(LineResponseMap {
        plane: Plane::new(w, h, out),
        stage: Stage::Raw,
    })
}

/// `(|S| · R + inv_gray) / (|S| + 1)`.
pub fn enhance(raw: &LineResponseMap, inv_gray: &RasterImage) -> Result<LineResponseMap, SalientError> {
    raw.expect(Stage::Raw)?;
    let p = require_gray(inv_gray)?;
    if p.width() != raw.width() || p.height() != raw.height() {
        return Err(SalientError::DimensionMismatch(
            raw.width(),
            raw.height(),
            p.width(),
            p.height(),
        ));
    }
    let k = SCALES.len() as f64;
    let data = raw
        .data()
        .iter()
        .zip(p.data())
        .map(|(r, g)| (k * r + g) / (k + 1.0))
        .collect();
    Ok(LineResponseMap {
        plane: Plane::new(p.width(), p.height(), data),
        stage: Stage::Enhanced,
    })
}

pub fn zscore(enhanced: &LineResponseMap, fov: &FovMask) -> Result<LineResponseMap, SalientError> {
    enhanced.expect(Stage::Enhanced)?;
    let (w, h) = (enhanced.width(), enhanced.height());
    check_shape(w, h, fov)?;
    let inside = || {
        enhanced
            .data()
            .iter()
            .zip(fov.data())
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
    };
    let n = fov.count() as f64;
    let mean = inside().sum::<f64>() / n;
    let sigma = (inside().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let data = if sigma < SIGMA_EPS {
        vec![0.0; w * h]
    } else {
        let floor = inside().fold(f64::INFINITY, f64::min);
        let floor = (floor - mean) / sigma;
        enhanced
            .data()
            .iter()
            .zip(fov.data())
            .map(|(v, &m)| if m { (v - mean) / sigma } else { floor })
            .collect()
    };
    Ok(LineResponseMap {
        plane: Plane::new(w, h, data),
        stage: Stage::Standardized,
    })
}

pub fn threshold_ts(std: &LineResponseMap, fov: &FovMask) -> Result<BinaryMask, SalientError> {
    std.expect(Stage::Standardized)?;
    if !fov.same_shape(std.width(), std.height()) {
        return Err(SalientError::DimensionMismatch(
            std.width(),
            std.height(),
            fov.width(),
            fov.height(),
        ));
    }
    Ok(BinaryMask::new(
        std.width(),
        std.height(),
        std.data()
            .iter()
            .zip(fov.data())
            .map(|(&v, &m)| m && v >= TS_THRESHOLD)
            .collect(),
    ))
}

pub fn invert_gray(rgb: &RasterImage) -> Result<RasterImage, SalientError> {
    let g = to_gray(rgb)?;
    Ok(RasterImage::from_clamped(
        g.width(),
        g.height(),
        1,
        g.data().iter().map(|v| 1.0 - v).collect(),
    ))
}

/// Returns `(R''_line, M_TS)`.
pub fn detect_tiny(
    rgb: &RasterImage,
    fov: &FovMask,
) -> Result<(LineResponseMap, BinaryMask), SalientError> {
    let inv = invert_gray(rgb)?;
    let raw = line_response(&inv, fov)?;
    let std = zscore(&enhance(&raw, &inv)?, fov)?;
    let mask = threshold_ts(&std, fov)?;
    Ok((std, mask))
}
