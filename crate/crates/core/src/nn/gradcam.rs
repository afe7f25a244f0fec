use super::model::Model;
use super::NnError;
use crate::dataset::{ChannelStack, QualityLabel};
use crate::raster::{resize_plane, Interpolation, Plane};
use crate::salient_large::{normalize_max, SaliencyMap};

/// Grad-CAM of `target` over each branch's last convolution, upsampled to
/// the input size and max-normalised. Dual models yield `[LS, TS]` maps.
pub fn grad_cam(model: &Model, stack: &ChannelStack, target: QualityLabel) -> Result<Vec<SaliencyMap>, NnError> {
    let inputs = model.batch_inputs(&[stack])?;
    let per_branch = model.last_activation_grads(&inputs, target.index())?;
    per_branch
        .into_iter()
        .map(|(a, da)| {
            let area = a.plane_len() as f64;
            let mut cam = vec![0.0; a.plane_len()];
            for c in 0..a.c {
                let weight = da.plane(0, c).iter().sum::<f64>() / area;
                for (m, &v) in cam.iter_mut().zip(a.plane(0, c)) {
                    *m += weight * v;
                }
            }
            cam.iter_mut().for_each(|v| *v = v.max(0.0));
            let up = resize_plane(
                &Plane::new(a.w, a.h, cam),
                stack.width(),
                stack.height(),
                Interpolation::Bilinear,
            );
            normalize_max(&up).map_err(|e| NnError::ShapeMismatch(e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::StackOrder;
    use crate::nn::{init_params, Architecture, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(side: usize, seed: u64) -> ChannelStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = side * side;
        let mut d: Vec<f32> = (0..3 * n).map(|_| rng.random_range(0.0..1.0)).collect();
        d.extend((0..2 * n).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }));
        ChannelStack::new(side, side, StackOrder::RgbLsTs, d).unwrap()
    }

    #[test]
    fn maps_are_normalised_and_input_sized() {
        for arch in [Architecture::Single, Architecture::Dual] {
            let mut m = init_params(arch, &ModelConfig::default(), 4);
            m.head.w.iter_mut().enumerate().for_each(|(i, w)| *w = ((i * 7 % 11) as f64 - 5.0) / 5.0);
            let s = random_stack(32, 1);
            for target in QualityLabel::ALL {
                let maps = grad_cam(&m, &s, target).unwrap();
                assert_eq!(maps.len(), arch.branches());
                for map in &maps {
                    assert_eq!((map.width(), map.height()), (32, 32));
                    assert!(map.data().iter().all(|v| (0.0..=1.0).contains(v)));
                    let mx = map.plane().max();
                    assert!(mx == 0.0 || mx == 1.0);
                }
            }
        }
    }

    #[test]
    fn single_channel_collapses_to_activation() {
        let mut m = init_params(Architecture::Single, &ModelConfig { widths: vec![1] }, 2);
        m.head.w = vec![0.7, -0.2, 0.1];
        m.branches[0].blocks[0].bias = vec![0.05];
        let s = random_stack(8, 3);
        let map = grad_cam(&m, &s, QualityLabel::Good).unwrap().remove(0);
        let inputs = m.batch_inputs(&[&s]).unwrap();
        let (a, _) = m.last_activation_grads(&inputs, 0).unwrap().remove(0);
        // 2×2 pooling then GAP: every activation with positive weight; the map
        // is the activation itself at 8×8 (no resampling needed).
        let amax = a.data.iter().copied().fold(0.0, f64::max);
        assert!(amax > 0.0);
        for (m, v) in map.data().iter().zip(&a.data) {
            assert!((m - v / amax).abs() < 1e-12);
        }
    }
}
