//! Field-of-view detection and the crop / pad / rescale front end.
//!
//! The circular aperture of a fundus camera is found with a gradient-guided
//! circle Hough transform over Sobel edge pixels. Each edge pixel votes along
//! short arcs centred on its gradient direction (both signs), for every radius
//! in `[0.30, 0.50] * min(W, H)` stepped by 2 px.

use crate::mask::FovMask;
use crate::raster::{resize_bilinear, resize_nearest, to_gray, RasterError, RasterImage};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FovError {
    #[error("no field-of-view circle found")]
    NoFovFound,
    #[error("image too small for field-of-view detection: {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FovCircle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// What to do when no circle is found.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FovPolicy {
    #[default]
    Error,
    /// Treat the whole frame as field of view.
    FullFrame,
}

pub const MIN_DETECT_SIDE: usize = 64;
const EDGE_FRACTION: f64 = 0.1;
const RADIUS_RANGE: (f64, f64) = (0.30, 0.50);
const RADIUS_STEP: usize = 2;
const MIN_SUPPORT: f64 = 0.25;
const ARC_HALF_WIDTH: f64 = 0.26; // ~15 degrees
/// Larger inputs are downsampled before voting to bound accumulator size.
const MAX_DETECT_SIDE: usize = 512;
const ANGLE_TABLE: usize = 4096;

fn sobel(gray: &RasterImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (gray.width(), gray.height());
    let px = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        gray.data()[yc * w + xc]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2.0 * px(x - 1, y)
                - px(x - 1, y + 1);
            gy[i] = px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2.0 * px(x, y - 1)
                - px(x + 1, y - 1);
        }
    }
    (gx, gy)
}

fn hough(gray: &RasterImage) -> Result<FovCircle, FovError> {
    let (w, h) = (gray.width(), gray.height());
    let (gx, gy) = sobel(gray);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let peak_mag = mag.iter().copied().fold(0.0, f64::max);
    if peak_mag <= 0.0 {
        return Err(FovError::NoFovFound);
    }
    let edge_threshold = EDGE_FRACTION * peak_mag;

    let side = w.min(h) as f64;
    let r_min = (RADIUS_RANGE.0 * side).ceil() as usize;
    let r_max = (RADIUS_RANGE.1 * side).floor() as usize;
    let radii: Vec<usize> = (r_min..=r_max).step_by(RADIUS_STEP).collect();

    let table: Vec<(f64, f64)> = (0..ANGLE_TABLE)
        .map(|i| (i as f64 * std::f64::consts::TAU / ANGLE_TABLE as f64).sin_cos())
        .collect();
    let to_index = |a: f64| -> usize {
        let t = a.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
        ((t * ANGLE_TABLE as f64) as usize) % ANGLE_TABLE
    };

    let plane = w * h;
    let mut acc = vec![0u16; radii.len() * plane];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if mag[i] < edge_threshold || mag[i] == 0.0 {
                continue;
            }
            let phi = gy[i].atan2(gx[i]);
            for (ri, &r) in radii.iter().enumerate() {
                let rf = r as f64;
                let steps = (ARC_HALF_WIDTH * rf).ceil() as isize;
                let slice = &mut acc[ri * plane..(ri + 1) * plane];
                for base in [phi, phi + std::f64::consts::PI] {
                    let mut last = usize::MAX;
                    for k in -steps..=steps {
                        let (s, c) = table[to_index(base + k as f64 / rf)];
                        let cx = (x as f64 + rf * c).round();
                        let cy = (y as f64 + rf * s).round();
                        if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                            continue;
                        }
                        let cell = cy as usize * w + cx as usize;
                        if cell != last {
                            slice[cell] = slice[cell].saturating_add(1);
                            last = cell;
                        }
                    }
                }
            }
        }
    }

    let (best, &votes) = acc
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty accumulator");
    let (br, bcell) = (best / plane, best % plane);
    let (bx, by) = (bcell % w, bcell / w);
    let r_best = radii[br] as f64;
    if (votes as f64) < MIN_SUPPORT * std::f64::consts::TAU * r_best {
        return Err(FovError::NoFovFound);
    }

    // Vote-weighted centroid of the near-peak cells around the maximum.
    let cutoff = (0.95 * votes as f64).ceil() as u16;
    let (mut sw, mut sx, mut sy, mut sr) = (0.0, 0.0, 0.0, 0.0);
    let ri_lo = br.saturating_sub(2);
    let ri_hi = (br + 2).min(radii.len() - 1);
    for ri in ri_lo..=ri_hi {
        for yy in by.saturating_sub(3)..=(by + 3).min(h - 1) {
            for xx in bx.saturating_sub(3)..=(bx + 3).min(w - 1) {
                let v = acc[ri * plane + yy * w + xx];
                if v >= cutoff {
                    let wt = v as f64;
                    sw += wt;
                    sx += wt * xx as f64;
                    sy += wt * yy as f64;
                    sr += wt * radii[ri] as f64;
                }
            }
        }
    }
    Ok(FovCircle {
        cx: sx / sw,
        cy: sy / sw,
        r: sr / sw,
    })
}

/// Locates the circular field of view in a single-channel image.
pub fn detect_fov(gray: &RasterImage) -> Result<FovCircle, FovError> {
    if gray.channels() != 1 {
        return Err(RasterError::WrongChannelCount {
            expected: 1,
            found: gray.channels(),
        }
        .into());
    }
    let (w, h) = (gray.width(), gray.height());
    if w.min(h) < MIN_DETECT_SIDE {
        return Err(FovError::TooSmall {
            width: w,
            height: h,
        });
    }
    let side = w.min(h);
    if side <= MAX_DETECT_SIDE {
        return hough(gray);
    }
    let scale = side as f64 / MAX_DETECT_SIDE as f64;
    let sw = ((w as f64 / scale).round() as usize).max(1);
    let sh = ((h as f64 / scale).round() as usize).max(1);
    let small = resize_bilinear(gray, sw, sh);
    let c = hough(&small)?;
    let (kx, ky) = (w as f64 / sw as f64, h as f64 / sh as f64);
    Ok(FovCircle {
        cx: (c.cx + 0.5) * kx - 0.5,
        cy: (c.cy + 0.5) * ky - 0.5,
        r: c.r * 0.5 * (kx + ky),
    })
}

/// Square crop window of side `2 * ceil(r)` centred on the circle.
struct SquareWindow {
    x0: i64,
    y0: i64,
    side: usize,
}

impl SquareWindow {
    fn around(c: &FovCircle) -> Self {
        let half = c.r.ceil() as i64;
        Self {
            x0: c.cx.round() as i64 - half,
            y0: c.cy.round() as i64 - half,
            side: 2 * half as usize,
        }
    }
}

/// Crops to the circle's bounding square and zero-fills the parts of the
/// square that fall outside the source image.
pub fn crop_pad_square(img: &RasterImage, c: &FovCircle) -> RasterImage {
    let win = SquareWindow::around(c);
    crop_window(img, &win)
}

fn crop_window(img: &RasterImage, win: &SquareWindow) -> RasterImage {
    let ch = img.channels();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut data = vec![0.0; win.side * win.side * ch];
    for v in 0..win.side {
        let sy = win.y0 + v as i64;
        if sy < 0 || sy >= h {
            continue;
        }
        for u in 0..win.side {
            let sx = win.x0 + u as i64;
            if sx < 0 || sx >= w {
                continue;
            }
            let src = ((sy * w + sx) as usize) * ch;
            let dst = (v * win.side + u) * ch;
            data[dst..dst + ch].copy_from_slice(&img.data()[src..src + ch]);
        }
    }
    RasterImage::from_raw(win.side, win.side, ch, data)
}

/// Field-of-view mask in crop coordinates: inside the circle and inside the
/// source frame.
fn window_mask(img_w: usize, img_h: usize, c: &FovCircle, win: &SquareWindow) -> RasterImage {
    let (ccx, ccy) = (c.cx - win.x0 as f64, c.cy - win.y0 as f64);
    let r2 = c.r * c.r;
    let mut data = vec![0.0; win.side * win.side];
    for v in 0..win.side {
        let sy = win.y0 + v as i64;
        for u in 0..win.side {
            let sx = win.x0 + u as i64;
            let in_frame = sx >= 0 && sy >= 0 && sx < img_w as i64 && sy < img_h as i64;
            let d2 = (u as f64 - ccx).powi(2) + (v as f64 - ccy).powi(2);
            if in_frame && d2 <= r2 {
                data[v * win.side + u] = 1.0;
            }
        }
    }
    RasterImage::from_raw(win.side, win.side, 1, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub image: RasterImage,
    pub fov: FovMask,
    /// `None` when the full-frame fallback was used.
    pub circle: Option<FovCircle>,
}

fn finish(cropped: RasterImage, mask: RasterImage, target: usize) -> (RasterImage, FovMask) {
    let image = resize_bilinear(&cropped, target, target);
    let mask = resize_nearest(&mask, target, target);
    let fov = FovMask::new(
        target,
        target,
        mask.data().iter().map(|&v| v >= 0.5).collect(),
    );
    let mut data = image.into_data();
    for (i, inside) in fov.data().iter().enumerate() {
        if !inside {
            data[i * 3..i * 3 + 3].fill(0.0);
        }
    }
    (RasterImage::from_raw(target, target, 3, data), fov)
}

/// Detect the field of view, crop and zero-pad to a square, rescale to
/// `target`×`target` and blank everything outside the field of view.
pub fn preprocess(img: &RasterImage, target: usize) -> Result<Preprocessed, FovError> {
    preprocess_with_policy(img, target, FovPolicy::Error)
}

pub fn preprocess_with_policy(
    img: &RasterImage,
    target: usize,
    policy: FovPolicy,
) -> Result<Preprocessed, FovError> {
    assert!(target >= 1);
    let gray = to_gray(img)?;
    match detect_fov(&gray) {
        Ok(circle) => {
            let win = SquareWindow::around(&circle);
            let cropped = crop_window(img, &win);
            let mask = window_mask(img.width(), img.height(), &circle, &win);
            let (image, fov) = finish(cropped, mask, target);
            Ok(Preprocessed {
                image,
                fov,
                circle: Some(circle),
            })
        }
        Err(FovError::NoFovFound | FovError::TooSmall { .. })
            if policy == FovPolicy::FullFrame =>
        {
            Ok(preprocess_full_frame(img, target))
        }
        Err(e) => Err(e),
    }
}

/// Pads the whole frame symmetrically to a square; every source pixel counts
/// as field of view.
pub fn preprocess_full_frame(img: &RasterImage, target: usize) -> Preprocessed {
    let (w, h) = (img.width(), img.height());
    let side = w.max(h);
    let win = SquareWindow {
        x0: -(((side - w) / 2) as i64),
        y0: -(((side - h) / 2) as i64),
        side,
    };
    let cropped = crop_window(img, &win);
    let ones = RasterImage::from_raw(w, h, 1, vec![1.0; w * h]);
    let mask = crop_window(&ones, &win);
    let (image, fov) = finish(cropped, mask, target);
    Preprocessed {
        image,
        fov,
        circle: None,
    }
}
