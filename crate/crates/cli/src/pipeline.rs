//! Image → stack pipeline and the synthetic corpus layout shared by the
//! subcommands.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use salstruct_core::dataset::{
    generate_synthetic, resize_stack, stack_channels, ChannelStack, QualityLabel, SampleRecord, Split,
    StackOrder, SyntheticTruth,
};
use salstruct_core::fov::{preprocess_with_policy, FovCircle, FovError, FovPolicy};
use salstruct_core::raster::RasterImage;
use salstruct_core::salient_large::{detect_large, SalientError};
use salstruct_core::salient_tiny::detect_tiny;
use thiserror::Error;

/// Detectors always run on the full-resolution crop; stacks are rescaled
/// afterwards so mask statistics do not depend on the training resolution.
pub const DETECT_SIZE: usize = 224;
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Fov(#[from] FovError),
    #[error(transparent)]
    Salient(#[from] SalientError),
    #[error(transparent)]
    Dataset(#[from] salstruct_core::dataset::DatasetError),
}

pub struct Prepared {
    /// Five-channel `rgb_ls_ts` stack at the requested resolution.
    pub stack: ChannelStack,
    pub circle: Option<FovCircle>,
    pub ls_pixels: usize,
    pub ts_pixels: usize,
}

pub fn prepare(img: &RasterImage, resolution: usize, policy: FovPolicy) -> Result<Prepared, PipelineError> {
    let pre = preprocess_with_policy(img, DETECT_SIZE, policy)?;
    let (_, ls) = detect_large(&pre.image, &pre.fov)?;
    let (_, ts) = detect_tiny(&pre.image, &pre.fov)?;
    let full = stack_channels(&pre.image, Some(&ls), Some(&ts), StackOrder::RgbLsTs)?;
    let stack = if resolution == DETECT_SIZE {
        full
    } else {
        resize_stack(&full, resolution, resolution)
    };
    Ok(Prepared {
        stack,
        circle: pre.circle,
        ls_pixels: ls.count(),
        ts_pixels: ts.count(),
    })
}

/// SplitMix64 finaliser over `(seed, class, index)`.
pub fn sample_seed(seed: u64, class: QualityLabel, index: usize) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((class.index() as u64) << 32 | index as u64);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Anatomy seed shared by the three grades of one index, so corpus grades
/// come in matched triples.
pub fn anatomy_seed(seed: u64, index: usize) -> u64 {
    sample_seed(seed, QualityLabel::Good, index)
}

pub fn synth_name(class: QualityLabel, index: usize) -> String {
    format!("{}_{index:04}.ppm", class.name().to_lowercase())
}

pub struct SynthItem {
    pub record: SampleRecord,
    pub seed: u64,
    pub image: RasterImage,
    pub truth: SyntheticTruth,
}

/// Manifest order is class-major; the test split is a seeded 20% of each class.
pub fn synth_corpus(n_per_class: usize, seed: u64) -> Vec<SynthItem> {
    let n_test = (n_per_class as f64 * TEST_FRACTION).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(3 * n_per_class);
    for class in QualityLabel::ALL {
        let mut idx: Vec<usize> = (0..n_per_class).collect();
        idx.shuffle(&mut rng);
        let mut is_test = vec![false; n_per_class];
        idx[..n_test].iter().for_each(|&i| is_test[i] = true);
        for i in 0..n_per_class {
            let s = anatomy_seed(seed, i);
            let (image, truth) = generate_synthetic(class, s);
            out.push(SynthItem {
                record: SampleRecord {
                    image_path: synth_name(class, i),
                    label: class,
                    split: if is_test[i] { Split::Test } else { Split::Train },
                },
                seed: s,
                image,
                truth,
            });
        }
    }
    out
}

pub fn stack_path(dir: &Path, image_path: &str, order: StackOrder) -> PathBuf {
    let stem = Path::new(image_path)
        .file_stem()
        .map_or_else(|| image_path.to_string(), |s| s.to_string_lossy().into_owned());
    dir.join(format!("{stem}.{}.rstk", order.tag()))
}
