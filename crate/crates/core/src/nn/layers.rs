//! Forward and backward passes of the primitive layers.

use super::{NnError, Tensor4};

pub const NUM_CLASSES: usize = 3;
const LOG_FLOOR: f64 = 1e-12;

/// Ranges of output rows/cols for which `i + d` stays inside `0..n`.
#[inline]
fn valid(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)) as usize;
    (lo, hi.max(lo))
}

/// `out += k ⋆ inp` for one 3×3 kernel with zero padding.
fn correlate_acc(out: &mut [f64], inp: &[f64], h: usize, w: usize, k: &[f64]) {
    for ky in 0..3 {
        let dy = ky as isize - 1;
        let (y0, y1) = valid(h, dy);
        for kx in 0..3 {
            let dx = kx as isize - 1;
            let (x0, x1) = valid(w, dx);
            let kv = k[ky * 3 + kx];
            for y in y0..y1 {
                let sy = (y as isize + dy) as usize;
                let src = &inp[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                for (o, &s) in out[y * w + x0..y * w + x1].iter_mut().zip(src) {
                    *o += kv * s;
                }
            }
        }
    }
}

/// 3×3 cross-correlation, stride 1, zero padding 1. `kernels` is
/// `out × in × 3 × 3`.
pub fn conv3x3_forward(x: &Tensor4, kernels: &[f64], bias: &[f64]) -> Result<Tensor4, NnError> {
    let oc = bias.len();
    if kernels.len() != oc * x.c * 9 {
        return Err(NnError::ShapeMismatch(format!(
            "kernel of {} values for {oc} outputs × {} inputs",
            kernels.len(),
            x.c
        )));
    }
    let mut y = Tensor4::zeros(x.n, oc, x.h, x.w);
    for n in 0..x.n {
        for o in 0..oc {
            let out = y.plane_mut(n, o);
            out.fill(bias[o]);
            for i in 0..x.c {
                let k = &kernels[(o * x.c + i) * 9..(o * x.c + i + 1) * 9];
                correlate_acc(out, x.plane(n, i), x.h, x.w, k);
            }
        }
    }
    Ok(y)
}

pub struct ConvGrads {
    pub dx: Tensor4,
    pub dk: Vec<f64>,
    pub db: Vec<f64>,
}

pub fn conv3x3_backward(x: &Tensor4, kernels: &[f64], dy: &Tensor4) -> Result<ConvGrads, NnError> {
    let oc = dy.c;
    if kernels.len() != oc * x.c * 9 || dy.n != x.n || dy.h != x.h || dy.w != x.w {
        return Err(NnError::ShapeMismatch("conv backward shapes".into()));
    }
    let (h, w) = (x.h, x.w);
    let mut dx = Tensor4::zeros(x.n, x.c, h, w);
    let mut dk = vec![0.0; kernels.len()];
    let mut db = vec![0.0; oc];
    for n in 0..x.n {
        for o in 0..oc {
            let g = dy.plane(n, o);
            db[o] += g.iter().sum::<f64>();
            for i in 0..x.c {
                let kidx = (o * x.c + i) * 9;
                let inp = x.plane(n, i);
                for ky in 0..3 {
                    let ddy = ky as isize - 1;
                    let (y0, y1) = valid(h, ddy);
                    for kx in 0..3 {
                        let ddx = kx as isize - 1;
                        let (x0, x1) = valid(w, ddx);
                        let mut acc = 0.0;
                        for yy in y0..y1 {
                            let sy = (yy as isize + ddy) as usize;
                            let s0 = sy * w + (x0 as isize + ddx) as usize;
                            let src = &inp[s0..s0 + (x1 - x0)];
                            let gr = &g[yy * w + x0..yy * w + x1];
                            acc += gr.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        }
                        dk[kidx + ky * 3 + kx] += acc;
                    }
                }
                // dx_i += k_oi flipped ⋆ dy, written as scatter of the forward taps.
                let dxp = dx.plane_mut(n, i);
                for ky in 0..3 {
                    let ddy = ky as isize - 1;
                    let (y0, y1) = valid(h, ddy);
                    for kx in 0..3 {
                        let ddx = kx as isize - 1;
                        let (x0, x1) = valid(w, ddx);
                        let kv = kernels[kidx + ky * 3 + kx];
                        for yy in y0..y1 {
                            let sy = (yy as isize + ddy) as usize;
                            let s0 = sy * w + (x0 as isize + ddx) as usize;
                            let gr = &g[yy * w + x0..yy * w + x1];
                            for (d, &gv) in dxp[s0..s0 + (x1 - x0)].iter_mut().zip(gr) {
                                *d += kv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads { dx, dk, db })
}

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(x: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut dx = dy.clone();
    for (d, &v) in dx.data.iter_mut().zip(&x.data) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// 2×2 stride-2 max pooling. Returns the pooled tensor and, per output, the
/// flat input index of the first (row-major) maximum.
pub fn maxpool2x2_forward(x: &Tensor4) -> Result<(Tensor4, Vec<usize>), NnError> {
    if !x.h.is_multiple_of(2) || !x.w.is_multiple_of(2) {
        return Err(NnError::OddDimension(x.h, x.w));
    }
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut y = Tensor4::zeros(x.n, x.c, oh, ow);
    let mut arg = Vec::with_capacity(y.data.len());
    for n in 0..x.n {
        for c in 0..x.c {
            let base = (n * x.c + c) * x.h * x.w;
            let p = x.plane(n, c);
            for oy in 0..oh {
                for ox in 0..ow {
                    let cands = [
                        (2 * oy) * x.w + 2 * ox,
                        (2 * oy) * x.w + 2 * ox + 1,
                        (2 * oy + 1) * x.w + 2 * ox,
                        (2 * oy + 1) * x.w + 2 * ox + 1,
                    ];
                    let mut best = cands[0];
                    for &i in &cands[1..] {
                        if p[i] > p[best] {
                            best = i;
                        }
                    }
                    y.data[((n * x.c + c) * oh + oy) * ow + ox] = p[best];
                    arg.push(base + best);
                }
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool2x2_backward(input_shape: [usize; 4], argmax: &[usize], dy: &Tensor4) -> Tensor4 {
    let [n, c, h, w] = input_shape;
    let mut dx = Tensor4::zeros(n, c, h, w);
    for (&i, &g) in argmax.iter().zip(&dy.data) {
        dx.data[i] += g;
    }
    dx
}

/// Per-channel spatial mean, `n × c` row-major.
pub fn gap_forward(x: &Tensor4) -> Vec<f64> {
    let area = x.plane_len() as f64;
    (0..x.n)
        .flat_map(|n| (0..x.c).map(move |c| (n, c)))
        .map(|(n, c)| x.plane(n, c).iter().sum::<f64>() / area)
        .collect()
}

pub fn gap_backward(input_shape: [usize; 4], df: &[f64]) -> Tensor4 {
    let [n, c, h, w] = input_shape;
    let area = (h * w) as f64;
    let mut dx = Tensor4::zeros(n, c, h, w);
    for (k, &g) in df.iter().enumerate() {
        dx.plane_mut(k / c, k % c).fill(g / area);
    }
    dx
}

/// Fully connected classifier `w · f + b` with `w` stored `3 × feature_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl HeadParams {
    pub fn feature_dim(&self) -> usize {
        self.w.len() / NUM_CLASSES
    }
}

pub fn head_logits(f: &[f64], p: &HeadParams) -> Result<[f64; NUM_CLASSES], NnError> {
    let d = p.feature_dim();
    if f.len() != d || p.b.len() != NUM_CLASSES {
        return Err(NnError::ShapeMismatch(format!(
            "feature length {} vs head dim {d}",
            f.len()
        )));
    }
    Ok(std::array::from_fn(|k| {
        p.b[k] + p.w[k * d..(k + 1) * d].iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
    }))
}

pub fn softmax(z: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

pub fn head_forward(f: &[f64], p: &HeadParams) -> Result<[f64; NUM_CLASSES], NnError> {
    Ok(softmax(&head_logits(f, p)?))
}

/// `(−log ŷ_label, ŷ − onehot(label))`.
pub fn cross_entropy(probs: &[f64; NUM_CLASSES], label: usize) -> (f64, [f64; NUM_CLASSES]) {
    let loss = -probs[label].max(LOG_FLOOR).ln();
    let mut g = *probs;
    g[label] -= 1.0;
    (loss, g)
}

pub struct HeadGrads {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub df: Vec<f64>,
}

pub fn head_backward(f: &[f64], p: &HeadParams, dlogits: &[f64; NUM_CLASSES]) -> HeadGrads {
    let d = p.feature_dim();
    let mut dw = vec![0.0; p.w.len()];
    let mut df = vec![0.0; d];
    for k in 0..NUM_CLASSES {
        for j in 0..d {
            dw[k * d + j] = dlogits[k] * f[j];
            df[j] += dlogits[k] * p.w[k * d + j];
        }
    }
    HeadGrads {
        dw,
        db: dlogits.to_vec(),
        df,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-4;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
    }

    fn random_tensor(rng: &mut ChaCha8Rng, s: [usize; 4]) -> Tensor4 {
        let len = s.iter().product();
        Tensor4::new(s[0], s[1], s[2], s[3], (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Scalar probe `L = Σ r ⊙ y` with fixed random weights `r`.
    fn probe(y: &Tensor4, r: &[f64]) -> f64 {
        y.data.iter().zip(r).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv_identity_and_averaging() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, [2, 3, 5, 4]);
        let mut k = vec![0.0; 3 * 3 * 9];
        for c in 0..3 {
            k[(c * 3 + c) * 9 + 4] = 1.0;
        }
        assert_eq!(conv3x3_forward(&x, &k, &[0.0; 3]).unwrap(), x);

        let c = Tensor4::new(1, 1, 6, 6, vec![0.7; 36]).unwrap();
        let y = conv3x3_forward(&c, &[1.0 / 9.0; 9], &[0.0]).unwrap();
        for yy in 1..5 {
            for xx in 1..5 {
                assert!((y.data[yy * 6 + xx] - 0.7).abs() < 1e-12);
            }
        }
        assert!(conv3x3_forward(&c, &[0.0; 8], &[0.0]).is_err());
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, [2, 3, 6, 6]);
        let oc = 4;
        let k: Vec<f64> = (0..oc * 3 * 9).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b: Vec<f64> = (0..oc).map(|_| rng.random_range(-0.1..0.1)).collect();
        let y = conv3x3_forward(&x, &k, &b).unwrap();
        let r: Vec<f64> = (0..y.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dy = Tensor4::new(y.n, y.c, y.h, y.w, r.clone()).unwrap();
        let g = conv3x3_backward(&x, &k, &dy).unwrap();
        let f = |x: &Tensor4, k: &[f64], b: &[f64]| probe(&conv3x3_forward(x, k, b).unwrap(), &r);
        for i in 0..x.data.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data[i] += EPS;
            xm.data[i] -= EPS;
            let num = (f(&xp, &k, &b) - f(&xm, &k, &b)) / (2.0 * EPS);
            assert!(rel_err(g.dx.data[i], num) < 1e-4, "dx[{i}]");
        }
        for i in 0..k.len() {
            let (mut kp, mut km) = (k.clone(), k.clone());
            kp[i] += EPS;
            km[i] -= EPS;
            let num = (f(&x, &kp, &b) - f(&x, &km, &b)) / (2.0 * EPS);
            assert!(rel_err(g.dk[i], num) < 1e-4, "dk[{i}]");
        }
        for i in 0..b.len() {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += EPS;
            bm[i] -= EPS;
            let num = (f(&x, &k, &bp) - f(&x, &k, &bm)) / (2.0 * EPS);
            assert!(rel_err(g.db[i], num) < 1e-4, "db[{i}]");
        }
    }

    #[test]
    fn relu_values_and_gradient() {
        let x = Tensor4::new(1, 1, 1, 2, vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data, vec![0.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = random_tensor(&mut rng, [2, 2, 3, 3]);
        // Keep inputs away from the kink.
        x.data.iter_mut().for_each(|v| {
            if v.abs() < 0.01 {
                *v = 0.05
            }
        });
        let r: Vec<f64> = (0..x.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dy = Tensor4::new(2, 2, 3, 3, r.clone()).unwrap();
        let dx = relu_backward(&x, &dy);
        for i in 0..x.data.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data[i] += EPS;
            xm.data[i] -= EPS;
            let num = (probe(&relu_forward(&xp), &r) - probe(&relu_forward(&xm), &r)) / (2.0 * EPS);
            assert!(rel_err(dx.data[i], num) < 1e-4);
        }
    }

    #[test]
    fn maxpool_routing() {
        let x = Tensor4::new(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.data, vec![4.0]);
        let dx = maxpool2x2_backward(x.shape(), &arg, &Tensor4::new(1, 1, 1, 1, vec![1.0]).unwrap());
        assert_eq!(dx.data, vec![0.0, 0.0, 0.0, 1.0]);

        let tie = Tensor4::new(1, 1, 2, 2, vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let (_, arg) = maxpool2x2_forward(&tie).unwrap();
        assert_eq!(arg, vec![0]);
        assert!(matches!(
            maxpool2x2_forward(&Tensor4::zeros(1, 1, 3, 2)),
            Err(NnError::OddDimension(3, 2))
        ));
    }

    #[test]
    fn maxpool_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Distinct values spaced well beyond EPS keep the argmax stable.
        let mut vals: Vec<f64> = (0..2 * 2 * 4 * 4).map(|i| i as f64 * 0.01).collect();
        for i in (1..vals.len()).rev() {
            vals.swap(i, rng.random_range(0..=i));
        }
        let x = Tensor4::new(2, 2, 4, 4, vals).unwrap();
        let (y, arg) = maxpool2x2_forward(&x).unwrap();
        let r: Vec<f64> = (0..y.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dx = maxpool2x2_backward(x.shape(), &arg, &Tensor4::new(2, 2, 2, 2, r.clone()).unwrap());
        for i in 0..x.data.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data[i] += EPS;
            xm.data[i] -= EPS;
            let f = |t: &Tensor4| probe(&maxpool2x2_forward(t).unwrap().0, &r);
            let num = (f(&xp) - f(&xm)) / (2.0 * EPS);
            assert!((dx.data[i] - num).abs() < 1e-8 || rel_err(dx.data[i], num) < 1e-4);
        }
    }

    #[test]
    fn gap_values_and_gradient() {
        let x = Tensor4::new(1, 2, 2, 2, vec![0.0, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0]).unwrap();
        assert_eq!(gap_forward(&x), vec![1.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, [2, 3, 3, 4]);
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dx = gap_backward(x.shape(), &r);
        let f = |t: &Tensor4| gap_forward(t).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..x.data.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data[i] += EPS;
            xm.data[i] -= EPS;
            let num = (f(&xp) - f(&xm)) / (2.0 * EPS);
            assert!(rel_err(dx.data[i], num) < 1e-4);
        }
    }

    #[test]
    fn softmax_examples() {
        let p = HeadParams { w: vec![0.0; 12], b: vec![0.0; 3] };
        let y = head_forward(&[1.0, 2.0, 3.0, 4.0], &p).unwrap();
        assert!(y.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let s = softmax(&[1000.0, 0.0, 0.0]);
        assert!(s.iter().all(|v| v.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(head_forward(&[1.0; 3], &p).is_err());
        let (l, _) = cross_entropy(&[0.0, 1.0, 0.0], 1);
        assert_eq!(l, 0.0);
        let (l, _) = cross_entropy(&[1.0 / 3.0; 3], 2);
        assert!((l - 3f64.ln()).abs() < 1e-12);
        let (l, _) = cross_entropy(&[1.0, 0.0, 0.0], 2);
        assert!((l - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn head_and_cross_entropy_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = 5;
        let f: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = HeadParams {
            w: (0..3 * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        for label in 0..3 {
            let loss = |f: &[f64], p: &HeadParams| cross_entropy(&head_forward(f, p).unwrap(), label).0;
            let (_, dz) = cross_entropy(&head_forward(&f, &p).unwrap(), label);
            let g = head_backward(&f, &p, &dz);
            for j in 0..d {
                let (mut fp, mut fm) = (f.clone(), f.clone());
                fp[j] += EPS;
                fm[j] -= EPS;
                let num = (loss(&fp, &p) - loss(&fm, &p)) / (2.0 * EPS);
                assert!(rel_err(g.df[j], num) < 1e-4);
            }
            for j in 0..p.w.len() {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.w[j] += EPS;
                pm.w[j] -= EPS;
                let num = (loss(&f, &pp) - loss(&f, &pm)) / (2.0 * EPS);
                assert!(rel_err(g.dw[j], num) < 1e-4);
            }
            for j in 0..3 {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.b[j] += EPS;
                pm.b[j] -= EPS;
                let num = (loss(&f, &pp) - loss(&f, &pm)) / (2.0 * EPS);
                assert!(rel_err(g.db[j], num) < 1e-4);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn softmax_is_shift_invariant(z in proptest::array::uniform3(-50.0f64..50.0), k in -100.0f64..100.0) {
            let a = softmax(&z);
            let b = softmax(&z.map(|v| v + k));
            proptest::prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for i in 0..3 {
                proptest::prop_assert!(a[i] > 0.0);
                proptest::prop_assert!((a[i] - b[i]).abs() < 1e-9);
            }
        }
    }
}
