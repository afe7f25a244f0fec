use super::{Plane, RasterImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Interleaved sample buffer view shared by the raster and plane wrappers.
struct Samples<'a> {
    w: usize,
    h: usize,
    c: usize,
    data: &'a [f64],
}

impl Samples<'_> {
    #[inline]
    fn at(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    /// Bilinear sample with coordinates clamped to the frame.
    #[inline]
    fn bilinear(&self, sx: f64, sy: f64, out: &mut [f64]) {
        let sx = sx.clamp(0.0, (self.w - 1) as f64);
        let sy = sy.clamp(0.0, (self.h - 1) as f64);
        let x0 = sx.floor() as usize;
        let y0 = sy.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = sx - x0 as f64;
        let fy = sy - y0 as f64;
        for (ch, o) in out.iter_mut().enumerate() {
            let top = self.at(x0, y0, ch) * (1.0 - fx) + self.at(x1, y0, ch) * fx;
            let bottom = self.at(x0, y1, ch) * (1.0 - fx) + self.at(x1, y1, ch) * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
    }
}

fn resize_raw(s: &Samples, w: usize, h: usize, interp: Interpolation) -> Vec<f64> {
    let sx_scale = s.w as f64 / w as f64;
    let sy_scale = s.h as f64 / h as f64;
    let mut out = vec![0.0; w * h * s.c];
    for y in 0..h {
        let sy = (y as f64 + 0.5) * sy_scale - 0.5;
        for x in 0..w {
            let sx = (x as f64 + 0.5) * sx_scale - 0.5;
            let o = &mut out[(y * w + x) * s.c..(y * w + x + 1) * s.c];
            match interp {
                Interpolation::Bilinear => s.bilinear(sx, sy, o),
                Interpolation::Nearest => {
                    let nx = (sx.round().max(0.0) as usize).min(s.w - 1);
                    let ny = (sy.round().max(0.0) as usize).min(s.h - 1);
                    for (ch, v) in o.iter_mut().enumerate() {
                        *v = s.at(nx, ny, ch);
                    }
                }
            }
        }
    }
    out
}

fn view(img: &RasterImage) -> Samples<'_> {
    Samples {
        w: img.width(),
        h: img.height(),
        c: img.channels(),
        data: img.data(),
    }
}

/// Bilinear resize with half-pixel centre alignment:
/// `src = (dst + 0.5) * scale - 0.5`, clamped to the frame.
pub fn resize_bilinear(img: &RasterImage, w: usize, h: usize) -> RasterImage {
    assert!(w >= 1 && h >= 1, "target size must be positive");
    if w == img.width() && h == img.height() {
        return img.clone();
    }
    let data = resize_raw(&view(img), w, h, Interpolation::Bilinear);
    RasterImage::from_raw(w, h, img.channels(), data)
}

/// Nearest-neighbour resize using the same centre alignment as
/// [`resize_bilinear`]; preserves the value set.
pub fn resize_nearest(img: &RasterImage, w: usize, h: usize) -> RasterImage {
    assert!(w >= 1 && h >= 1, "target size must be positive");
    if w == img.width() && h == img.height() {
        return img.clone();
    }
    let data = resize_raw(&view(img), w, h, Interpolation::Nearest);
    RasterImage::from_raw(w, h, img.channels(), data)
}

pub fn flip_h(img: &RasterImage) -> RasterImage {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in (0..w).rev() {
            out.extend_from_slice(&img.data()[(y * w + x) * c..(y * w + x + 1) * c]);
        }
    }
    RasterImage::from_raw(w, h, c, out)
}

pub fn flip_v(img: &RasterImage) -> RasterImage {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = Vec::with_capacity(img.data().len());
    for y in (0..h).rev() {
        out.extend_from_slice(&img.data()[y * w * c..(y + 1) * w * c]);
    }
    RasterImage::from_raw(w, h, c, out)
}

fn rotate_raw(s: &Samples, angle_deg: f64, interp: Interpolation) -> Vec<f64> {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let cx = (s.w as f64 - 1.0) / 2.0;
    let cy = (s.h as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; s.w * s.h * s.c];
    for y in 0..s.h {
        let dy = y as f64 - cy;
        for x in 0..s.w {
            let dx = x as f64 - cx;
            // Inverse map of a counter-clockwise (as displayed) rotation.
            let sx = cx + dx * cos - dy * sin;
            let sy = cy + dx * sin + dy * cos;
            if sx < -0.5 || sy < -0.5 || sx >= s.w as f64 - 0.5 || sy >= s.h as f64 - 0.5 {
                continue;
            }
            let o = &mut out[(y * s.w + x) * s.c..(y * s.w + x + 1) * s.c];
            match interp {
                Interpolation::Bilinear => s.bilinear(sx, sy, o),
                Interpolation::Nearest => {
                    let nx = (sx.round().max(0.0) as usize).min(s.w - 1);
                    let ny = (sy.round().max(0.0) as usize).min(s.h - 1);
                    for (ch, v) in o.iter_mut().enumerate() {
                        *v = s.at(nx, ny, ch);
                    }
                }
            }
        }
    }
    out
}

/// Rotates about the image centre by `angle_deg` (counter-clockwise as
/// displayed); samples falling outside the frame become 0.
pub fn rotate(img: &RasterImage, angle_deg: f64, interp: Interpolation) -> RasterImage {
    assert!(angle_deg.is_finite(), "rotation angle must be finite");
    if angle_deg.rem_euclid(360.0) == 0.0 {
        return img.clone();
    }
    let data = rotate_raw(&view(img), angle_deg, interp);
    RasterImage::from_raw(img.width(), img.height(), img.channels(), data)
}

fn plane_view(p: &Plane) -> Samples<'_> {
    Samples {
        w: p.width(),
        h: p.height(),
        c: 1,
        data: p.data(),
    }
}

pub fn resize_plane(p: &Plane, w: usize, h: usize, interp: Interpolation) -> Plane {
    if w == p.width() && h == p.height() {
        return p.clone();
    }
    Plane::new(w, h, resize_raw(&plane_view(p), w, h, interp))
}

pub fn rotate_plane(p: &Plane, angle_deg: f64, interp: Interpolation) -> Plane {
    if angle_deg.rem_euclid(360.0) == 0.0 {
        return p.clone();
    }
    Plane::new(
        p.width(),
        p.height(),
        rotate_raw(&plane_view(p), angle_deg, interp),
    )
}

pub fn flip_plane_h(p: &Plane) -> Plane {
    let w = p.width();
    let data = p
        .data()
        .chunks_exact(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    Plane::new(w, p.height(), data)
}

pub fn flip_plane_v(p: &Plane) -> Plane {
    let w = p.width();
    let data = p
        .data()
        .chunks_exact(w)
        .rev()
        .flat_map(|row| row.iter().copied())
        .collect();
    Plane::new(w, p.height(), data)
}
