use crate::raster::{Plane, RasterImage};

/// Boolean per-pixel mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

/// Pixels inside the circular field of view.
pub type FovMask = BinaryMask;

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(width * height, data.len(), "mask size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
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

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, w: usize, h: usize) -> bool {
        self.width == w && self.height == h
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_shape(other.width, other.height)
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn to_plane(&self) -> Plane {
        Plane::new(
            self.width,
            self.height,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// Values {0, 1} as a 1-channel raster (PGM export maps these to {0, 255}).
    pub fn to_raster(&self) -> RasterImage {
        self.to_plane().to_raster()
    }

    /// Thresholds a plane at 0.5.
    pub fn from_plane(p: &Plane) -> Self {
        Self::new(
            p.width(),
            p.height(),
            p.data().iter().map(|&v| v >= 0.5).collect(),
        )
    }
}
