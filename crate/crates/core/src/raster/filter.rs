use super::Plane;

/// Binomial approximation of a 5-tap Gaussian.
pub const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable 5×5 Gaussian (binomial taps), horizontal then vertical, with
/// edge replication at the frame border.
pub fn gaussian5(map: &Plane) -> Plane {
    let (w, h) = (map.width(), map.height());
    let src = map.data();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &tap) in BINOMIAL5.iter().enumerate() {
                acc += tap * row[clamp_index(x as isize + k as isize - 2, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &tap) in BINOMIAL5.iter().enumerate() {
            let sy = clamp_index(y as isize + k as isize - 2, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            for (o, &s) in out[y * w..(y + 1) * w].iter_mut().zip(src_row) {
                *o += tap * s;
            }
        }
    }
    Plane::new(w, h, out)
}

/// Half-sample symmetric index: `-1 -> 0`, `n -> n - 1`.
#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Sampled Gaussian taps truncated at `4σ`, normalized to sum 1.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0 && sigma.is_finite());
    let radius = (4.0 * sigma + 0.5) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur of arbitrary `sigma` with mirrored borders.
pub fn gaussian_blur(map: &Plane, sigma: f64) -> Plane {
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let (w, h) = (map.width(), map.height());
    let src = map.data();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, &t)| t * row[reflect_index(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &t) in taps.iter().enumerate() {
            let sy = reflect_index(y as isize + k as isize - r, h);
            for (o, &s) in out[y * w..(y + 1) * w].iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *o += t * s;
            }
        }
    }
    Plane::new(w, h, out)
}
