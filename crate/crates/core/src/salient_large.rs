//! Large-structure saliency (optic disc, large exudates).
//!
//! A bank of difference-of-Gaussians band-passes with ever wider outer scale
//! telescopes into "global mean minus small blur", so the contrast map is
//! `‖μ_Lab − blur5(Lab)(x, y)‖₂` with the mean taken over field-of-view pixels.
//!
//! Before blurring, pixels outside the field of view are replaced by that mean.
//! Otherwise the black surround leaks into the 5×5 kernel and paints a bright
//! ring along the aperture edge.

use crate::mask::{BinaryMask, FovMask};
use crate::raster::{gaussian5, rgb_to_lab, LabImage, Plane, RasterError, RasterImage};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SalientError {
    #[error("field-of-view mask is empty")]
    EmptyFov,
    #[error("negative value {value} at index {index}")]
    NegativeInput { index: usize, value: f64 },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("line response stage mismatch: expected {expected:?}, found {found:?}")]
    StageMismatch {
        expected: crate::salient_tiny::Stage,
        found: crate::salient_tiny::Stage,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Real map in `[0, 1]` whose maximum is 1 unless it is identically 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap(Plane);

impl SaliencyMap {
    pub fn plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn to_raster(&self) -> RasterImage {
        self.0.to_raster()
    }
}

pub(crate) fn check_shape(w: usize, h: usize, fov: &FovMask) -> Result<(), SalientError> {
    if !fov.same_shape(w, h) {
        return Err(SalientError::DimensionMismatch(w, h, fov.width(), fov.height()));
    }
    if fov.count() == 0 {
        return Err(SalientError::EmptyFov);
    }
    Ok(())
}

/// Mean Lab vector over the field of view.
fn fov_mean(lab: &LabImage, fov: &FovMask) -> [f64; 3] {
    let mut sum = [0.0; 3];
    for (p, _) in lab.data().iter().zip(fov.data()).filter(|(_, &m)| m) {
        for c in 0..3 {
            sum[c] += p[c];
        }
    }
    let n = fov.count() as f64;
    sum.map(|s| s / n)
}

pub fn contrast_map(lab: &LabImage, fov: &FovMask) -> Result<Plane, SalientError> {
    let (w, h) = (lab.width(), lab.height());
    check_shape(w, h, fov)?;
    let mean = fov_mean(lab, fov);
    let blurred: Vec<Plane> = (0..3)
        .map(|c| {
            let data = lab
                .data()
                .iter()
                .zip(fov.data())
                .map(|(p, &m)| if m { p[c] } else { mean[c] })
                .collect();
            gaussian5(&Plane::new(w, h, data))
        })
        .collect();
    let data = (0..w * h)
        .map(|i| {
            if !fov.data()[i] {
                return 0.0;
            }
            let d: [f64; 3] = std::array::from_fn(|c| mean[c] - blurred[c].data()[i]);
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .collect();
    Ok(Plane::new(w, h, data))
}

pub fn normalize_max(m: &Plane) -> Result<SaliencyMap, SalientError> {
    if let Some((index, &value)) = m.data().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(SalientError::NegativeInput { index, value });
    }
    let max = m.max();
    let data = if max > 0.0 {
        m.data().iter().map(|v| v / max).collect()
    } else {
        vec![0.0; m.data().len()]
    };
    Ok(SaliencyMap(Plane::new(m.width(), m.height(), data)))
}

/// Adaptive threshold `τ = min(2 · mean(p over FoV), 1)`.
///
/// When every FoV value is the same the mask is empty, so a saturated
/// constant map (`c = 1`, `τ` clamped to 1) does not select the whole FoV.
pub fn threshold_ls(p: &SaliencyMap, fov: &FovMask) -> Result<BinaryMask, SalientError> {
    check_shape(p.width(), p.height(), fov)?;
    let vals = p
        .data()
        .iter()
        .zip(fov.data())
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v);
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    if lo == hi {
        return Ok(BinaryMask::filled(p.width(), p.height(), false));
    }
    let tau = (2.0 * sum / fov.count() as f64).min(1.0);
    Ok(BinaryMask::new(
        p.width(),
        p.height(),
        p.data()
            .iter()
            .zip(fov.data())
            .map(|(&v, &m)| m && v >= tau)
            .collect(),
    ))
}

/// Returns `(P_LS, M_LS)`.
pub fn detect_large(
    rgb: &RasterImage,
    fov: &FovMask,
) -> Result<(SaliencyMap, BinaryMask), SalientError> {
    let lab = rgb_to_lab(rgb)?;
    let p = normalize_max(&contrast_map(&lab, fov)?)?;
    let m = threshold_ls(&p, fov)?;
    Ok((p, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full(w: usize, h: usize) -> FovMask {
        FovMask::filled(w, h, true)
    }

    /// Direct evaluation: mean by summation, blur by explicit 5×5 weights
    /// with clamped indices.
    fn oracle(lab: &LabImage, fov: &FovMask) -> Vec<f64> {
        let (w, h) = (lab.width() as isize, lab.height() as isize);
        let n = fov.count() as f64;
        let mut mean = [0.0f64; 3];
        for c in 0..3 {
            mean[c] = (0..lab.data().len())
                .filter(|&i| fov.data()[i])
                .map(|i| lab.data()[i][c])
                .sum::<f64>()
                / n;
        }
        let k = [1.0, 4.0, 6.0, 4.0, 1.0];
        let mut out = vec![0.0; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if !fov.data()[i] {
                    continue;
                }
                let mut acc = 0.0;
                for c in 0..3 {
                    let mut b = 0.0;
                    for dy in -2..=2isize {
                        for dx in -2..=2isize {
                            let xx = (x + dx).clamp(0, w - 1);
                            let yy = (y + dy).clamp(0, h - 1);
                            let j = (yy * w + xx) as usize;
                            let v = if fov.data()[j] { lab.data()[j][c] } else { mean[c] };
                            b += k[(dx + 2) as usize] * k[(dy + 2) as usize] / 256.0 * v;
                        }
                    }
                    acc += (mean[c] - b).powi(2);
                }
                out[i] = acc.sqrt();
            }
        }
        out
    }

    fn random_lab(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LabImage {
        LabImage::new(
            w,
            h,
            (0..w * h)
                .map(|_| {
                    [
                        rng.random_range(0.0..100.0),
                        rng.random_range(-80.0..80.0),
                        rng.random_range(-80.0..80.0),
                    ]
                })
                .collect(),
        )
    }

    #[test]
    fn contrast_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let lab = random_lab(&mut rng, 16, 16);
            let fov = if trial % 2 == 0 {
                full(16, 16)
            } else {
                FovMask::from_fn(16, 16, |x, y| (x as f64 - 7.5).hypot(y as f64 - 7.5) < 7.0)
            };
            let got = contrast_map(&lab, &fov).unwrap();
            for (a, b) in got.data().iter().zip(oracle(&lab, &fov)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_image_gives_zero_map() {
        let lab = LabImage::new(6, 6, vec![[50.0, 10.0, -5.0]; 36]);
        let m = contrast_map(&lab, &full(6, 6)).unwrap();
        assert!(m.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn bright_square_peaks_inside_and_is_masked() {
        let (w, h) = (24, 24);
        let rgb = RasterImage::from_clamped(
            w,
            h,
            3,
            (0..w * h)
                .flat_map(|i| {
                    let (x, y) = (i % w, i / w);
                    let v = if (10..14).contains(&x) && (10..14).contains(&y) { 0.95 } else { 0.1 };
                    [v, v, v]
                })
                .collect(),
        );
        let fov = full(w, h);
        let (p, m) = detect_large(&rgb, &fov).unwrap();
        let (imax, _) = p
            .data()
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let (mx, my) = (imax % w, imax / w);
        assert!((9..15).contains(&mx) && (9..15).contains(&my));
        let inside = (10..14)
            .flat_map(|y| (10..14).map(move |x| (x, y)))
            .filter(|&(x, y)| m.get(x, y))
            .count();
        assert!(inside as f64 >= 0.8 * 16.0, "{inside}");
    }

    #[test]
    fn normalize_examples() {
        let p = normalize_max(&Plane::new(2, 1, vec![0.2, 0.4])).unwrap();
        assert_eq!(p.data(), &[0.5, 1.0]);
        let z = normalize_max(&Plane::filled(3, 3, 0.0)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            normalize_max(&Plane::new(2, 1, vec![0.1, -0.1])),
            Err(SalientError::NegativeInput { index: 1, .. })
        ));
    }

    #[test]
    fn threshold_examples() {
        let c = normalize_max(&Plane::filled(4, 4, 0.3)).unwrap();
        assert_eq!(threshold_ls(&c, &full(4, 4)).unwrap().count(), 0);
        let mut d = vec![0.0; 16];
        d[5] = 1.0;
        let p = normalize_max(&Plane::new(4, 4, d)).unwrap();
        let m = threshold_ls(&p, &full(4, 4)).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(1, 1));
    }

    #[test]
    fn empty_fov_is_an_error() {
        let lab = LabImage::new(2, 2, vec![[0.0; 3]; 4]);
        assert_eq!(
            contrast_map(&lab, &FovMask::filled(2, 2, false)),
            Err(SalientError::EmptyFov)
        );
    }

    #[test]
    fn blank_image_gives_empty_mask() {
        let (p, m) = detect_large(&RasterImage::zeros(8, 8, 3), &full(8, 8)).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));
        assert_eq!(m.count(), 0);
    }

    proptest! {
        #[test]
        fn saliency_range_and_subset(seed in any::<u64>(), r in 2.0f64..8.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rgb = RasterImage::from_clamped(12, 12, 3, (0..432).map(|_| rng.random::<f64>()).collect());
            let fov = FovMask::from_fn(12, 12, |x, y| (x as f64 - 5.5).hypot(y as f64 - 5.5) <= r);
            let (p, m) = detect_large(&rgb, &fov).unwrap();
            prop_assert!(p.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let mx = p.plane().max();
            prop_assert!(mx == 0.0 || mx == 1.0);
            prop_assert!(m.is_subset_of(&fov));
        }

        #[test]
        fn constant_lab_offset_is_invisible(seed in any::<u64>(), off in -30.0f64..30.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lab = random_lab(&mut rng, 10, 10);
            let shifted = LabImage::new(10, 10, lab.data().iter().map(|p| p.map(|v| v + off)).collect());
            let fov = full(10, 10);
            let a = contrast_map(&lab, &fov).unwrap();
            let b = contrast_map(&shifted, &fov).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let pa = normalize_max(&a).unwrap();
            let pb = normalize_max(&b).unwrap();
            for (x, y) in pa.data().iter().zip(pb.data()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
