//! Synthetic fundus photographs with known disc and vessel ground truth.
//!
//! All three grades share the same anatomy model: an orange fundus inside a
//! circular aperture, a bright optic disc off-centre, and a branching vessel
//! tree grown as jittered random walks from the disc rim.
//!
//! * Good: even illumination.
//! * Usable: slight defocus and a soft haze veil creeping in from one side.
//! * Reject: heavy defocus, a bright flare washing over the disc region and a
//!   dark occluding blob on the far side.
//!
//! Illumination defects are localized rather than linear ramps. Vessel
//! detection standardizes over the field of view, and a linear ramp spreads
//! the whole fundus across the threshold instead of hiding vessels.

use super::QualityLabel;
use crate::mask::{BinaryMask, FovMask};
use crate::raster::{gaussian_blur, Plane, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;

pub const SYNTH_SIZE: usize = 224;

const FOV_RADIUS: f64 = 0.45;
const BASE_RGB: [f64; 3] = [0.78, 0.36, 0.16];
const DISC_RGB: [f64; 3] = [1.0, 0.9, 0.6];
const DISC_RADIUS: f64 = 0.18;
const TRUNKS: usize = 6;
const BRANCH_PROB: f64 = 0.08;
const VESSEL_DARKENING: f64 = 0.2;
const NOISE_SIGMA: f64 = 0.01;

/// Degradation strengths for the two degraded grades.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    /// Gaussian defocus σ in pixels.
    pub usable_blur: f64,
    /// Haze veil `amplitude · ((t + 1) / 2)^power` along a random direction,
    /// `t ∈ [−1, 1]` across the aperture.
    pub usable_haze: (f64, i32),
    /// Defocus σ drawn uniformly from this range.
    pub reject_blur: (f64, f64),
    /// Flare over the disc: `(amplitude, radius / FoV radius)`.
    pub reject_glare: (f64, f64),
    /// Dark occluder radius relative to the FoV radius, placed on the far
    /// side of the disc.
    pub blob_radius: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            usable_blur: 1.5,
            usable_haze: (0.2, 6),
            reject_blur: (4.0, 6.0),
            reject_glare: (0.8, 0.42),
            blob_radius: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscCircle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    pub disc: DiscCircle,
    pub vessels: BinaryMask,
    pub fov: FovMask,
}

struct Segment {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    width: f64,
}

struct TreeGrower<'a> {
    rng: &'a mut ChaCha8Rng,
    jitter: Normal<f64>,
    fov: (f64, f64, f64),
    segments: Vec<Segment>,
}

impl TreeGrower<'_> {
    fn grow(&mut self, mut x: f64, mut y: f64, mut ang: f64, mut width: f64, length: f64, depth: u32) {
        let (cx, cy, r) = self.fov;
        for _ in 0..(length / 2.0) as usize {
            ang += self.jitter.sample(self.rng);
            let (nx, ny) = (x + 2.0 * ang.cos(), y + 2.0 * ang.sin());
            self.segments.push(Segment { x0: x, y0: y, x1: nx, y1: ny, width });
            (x, y) = (nx, ny);
            if (x - cx).powi(2) + (y - cy).powi(2) > (r - 3.0).powi(2) {
                return;
            }
            if depth < 3 && self.rng.random::<f64>() < BRANCH_PROB && width > 0.8 {
                let side = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let turn = self.rng.random_range(0.4..0.9);
                self.grow(x, y, ang + side * turn, width * 0.75, length * 0.6, depth + 1);
                width *= 0.85;
            }
        }
    }
}

/// Anti-aliased coverage `clip(w/2 + 0.5 − d, 0, 1)` of every segment, max-combined.
fn rasterize(segments: &[Segment], n: usize) -> Vec<f64> {
    let mut cov = vec![0.0f64; n * n];
    for s in segments {
        let reach = s.width / 2.0 + 1.0;
        let xlo = (s.x0.min(s.x1) - reach).floor().max(0.0) as usize;
        let ylo = (s.y0.min(s.y1) - reach).floor().max(0.0) as usize;
        let xhi = ((s.x0.max(s.x1) + reach).ceil().max(0.0) as usize).min(n - 1);
        let yhi = ((s.y0.max(s.y1) + reach).ceil().max(0.0) as usize).min(n - 1);
        let (vx, vy) = (s.x1 - s.x0, s.y1 - s.y0);
        let len2 = vx * vx + vy * vy;
        for y in ylo..=yhi {
            for x in xlo..=xhi {
                let (px, py) = (x as f64 - s.x0, y as f64 - s.y0);
                let t = ((px * vx + py * vy) / len2).clamp(0.0, 1.0);
                let d = (px - t * vx).hypot(py - t * vy);
                let c = (s.width / 2.0 + 0.5 - d).clamp(0.0, 1.0);
                let o = &mut cov[y * n + x];
                *o = o.max(c);
            }
        }
    }
    cov
}

fn blur_rgb(planes: &mut [Vec<f64>; 3], n: usize, sigma: f64) {
    for p in planes.iter_mut() {
        *p = gaussian_blur(&Plane::new(n, n, std::mem::take(p)), sigma).into_data();
    }
}

fn for_each_pixel(planes: &mut [Vec<f64>; 3], n: usize, mut f: impl FnMut(f64, f64, &mut [f64; 3])) {
    for i in 0..n * n {
        let mut px = [planes[0][i], planes[1][i], planes[2][i]];
        f((i % n) as f64, (i / n) as f64, &mut px);
        for (p, v) in planes.iter_mut().zip(px) {
            p[i] = v;
        }
    }
}

/// Renders one synthetic photograph of the given grade. The anatomy depends
/// only on `rng_seed`, so the three grades of one seed share disc and vessels.
pub fn generate_synthetic(class: QualityLabel, rng_seed: u64) -> (RasterImage, SyntheticTruth) {
    generate_synthetic_with(&SynthParams::default(), class, rng_seed)
}

pub fn generate_synthetic_with(
    params: &SynthParams,
    class: QualityLabel,
    rng_seed: u64,
) -> (RasterImage, SyntheticTruth) {
    let n = SYNTH_SIZE;
    let nf = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let cx = nf / 2.0 + rng.random_range(-3.0..3.0);
    let cy = nf / 2.0 + rng.random_range(-3.0..3.0);
    let r = nf * FOV_RADIUS;
    let fov = FovMask::from_fn(n, n, |x, y| {
        (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
    });

    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let dr = r * DISC_RADIUS;
    let dcx = cx + side * r * 0.4 + rng.random_range(-5.0..5.0);
    let dcy = cy + rng.random_range(-8.0..8.0);

    let mut planes: [Vec<f64>; 3] = std::array::from_fn(|c| vec![BASE_RGB[c]; n * n]);
    for i in 0..n * n {
        let (x, y) = ((i % n) as f64, (i / n) as f64);
        let d = ((dr - (x - dcx).hypot(y - dcy)) / 2.0 + 0.5).clamp(0.0, 1.0);
        for c in 0..3 {
            planes[c][i] = planes[c][i] * (1.0 - d) + DISC_RGB[c] * d;
        }
    }

    let mut grower = TreeGrower {
        rng: &mut rng,
        jitter: Normal::new(0.0, 0.12).unwrap(),
        fov: (cx, cy, r),
        segments: Vec::new(),
    };
    let base = grower.rng.random_range(0.0..TAU);
    let trunk_jitter = Normal::new(0.0, 0.2).unwrap();
    for k in 0..TRUNKS {
        let a = base + k as f64 * TAU / TRUNKS as f64 + trunk_jitter.sample(grower.rng);
        let width = grower.rng.random_range(1.6..2.2);
        grower.grow(dcx + dr * a.cos(), dcy + dr * a.sin(), a, width, r * 1.4, 0);
    }
    let segments = grower.segments;
    let cov = rasterize(&segments, n);
    let vessels = BinaryMask::new(n, n, cov.iter().map(|&c| c >= 0.5).collect());

    let noise = Normal::new(0.0, NOISE_SIGMA).unwrap();
    for i in 0..n * n {
        for p in planes.iter_mut() {
            p[i] *= 1.0 - VESSEL_DARKENING * cov[i];
        }
    }
    for i in 0..n * n {
        for p in planes.iter_mut() {
            p[i] += noise.sample(&mut rng);
        }
    }

    match class {
        QualityLabel::Good => {}
        QualityLabel::Usable => {
            blur_rgb(&mut planes, n, params.usable_blur);
            let (amp, pow) = params.usable_haze;
            let (sin, cos) = rng.random_range(0.0..TAU).sin_cos();
            for_each_pixel(&mut planes, n, |x, y, px| {
                let t = ((x - cx) * cos + (y - cy) * sin) / r;
                let h = amp * ((t + 1.0) / 2.0).clamp(0.0, 1.0).powi(pow);
                px.iter_mut().for_each(|v| *v = *v * (1.0 - h) + h);
            });
        }
        QualityLabel::Reject => {
            let sigma = rng.random_range(params.reject_blur.0..params.reject_blur.1);
            blur_rgb(&mut planes, n, sigma);
            let (amp, radius) = params.reject_glare;
            let gx = dcx + rng.random_range(-0.1..0.1) * r;
            let gy = dcy + rng.random_range(-0.1..0.1) * r;
            for_each_pixel(&mut planes, n, |x, y, px| {
                let g = amp * ((radius * r - (x - gx).hypot(y - gy)) / 6.0 + 0.5).clamp(0.0, 1.0);
                px.iter_mut().for_each(|v| *v = *v * (1.0 - g) + g);
            });
            let ang = (cy - dcy).atan2(cx - dcx) + rng.random_range(-1.0..1.0);
            let rr = rng.random_range(0.2..0.6) * r;
            let (bx, by, br) = (cx + rr * ang.cos(), cy + rr * ang.sin(), r * params.blob_radius);
            for_each_pixel(&mut planes, n, |x, y, px| {
                let b = ((br - (x - bx).hypot(y - by)) / 4.0 + 0.5).clamp(0.0, 1.0);
                px.iter_mut().for_each(|v| *v *= 1.0 - b);
            });
        }
    }

    let mut data = Vec::with_capacity(3 * n * n);
    for i in 0..n * n {
        for p in &planes {
            data.push(if fov.data()[i] { p[i] } else { 0.0 });
        }
    }
    let img = RasterImage::from_clamped(n, n, 3, data);
    (
        img,
        SyntheticTruth {
            disc: DiscCircle {
                cx: dcx,
                cy: dcy,
                r: dr,
            },
            vessels,
            fov,
        },
    )
}
