use super::DatasetError;
use crate::mask::BinaryMask;
use crate::raster::{
    flip_plane_h, flip_plane_v, resize_plane, rotate_plane, Interpolation, Plane, RasterImage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub const ROTATION_RANGE_DEG: f64 = 30.0;
const MAGIC: &[u8; 4] = b"RSTK";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 1 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StackOrder {
    RgbLs = 0,
    RgbTs = 1,
    RgbLsTs = 2,
}

impl StackOrder {
    pub const ALL: [StackOrder; 3] = [StackOrder::RgbLs, StackOrder::RgbTs, StackOrder::RgbLsTs];

    pub fn channels(self) -> usize {
        match self {
            StackOrder::RgbLsTs => 5,
            _ => 4,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            StackOrder::RgbLs => "rgb_ls",
            StackOrder::RgbTs => "rgb_ts",
            StackOrder::RgbLsTs => "rgb_ls_ts",
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    fn ls_channel(self) -> Option<usize> {
        match self {
            StackOrder::RgbTs => None,
            _ => Some(3),
        }
    }

    fn ts_channel(self) -> Option<usize> {
        match self {
            StackOrder::RgbLs => None,
            StackOrder::RgbTs => Some(3),
            StackOrder::RgbLsTs => Some(4),
        }
    }
}

/// Channel-planar image plus prior masks, stored as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    width: usize,
    height: usize,
    order: StackOrder,
    data: Vec<f32>,
}

impl ChannelStack {
    pub fn new(
        width: usize,
        height: usize,
        order: StackOrder,
        data: Vec<f32>,
    ) -> Result<Self, DatasetError> {
        let plane = width * height;
        if data.len() != plane * order.channels() || plane == 0 {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} samples for {width}x{height}x{}",
                data.len(),
                order.channels()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DatasetError::CorruptStack(format!("sample {v} outside [0, 1]")));
        }
        for c in 3..order.channels() {
            if data[c * plane..(c + 1) * plane]
                .iter()
                .any(|&v| v != 0.0 && v != 1.0)
            {
                return Err(DatasetError::CorruptStack(format!(
                    "mask channel {c} is not binary"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            order,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn order(&self) -> StackOrder {
        self.order
    }

    pub fn channels(&self) -> usize {
        self.order.channels()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Re-slices a five-channel stack into one of the four-channel orders.
    pub fn select(&self, order: StackOrder) -> Result<ChannelStack, DatasetError> {
        if order == self.order {
            return Ok(self.clone());
        }
        let mut idx = vec![0, 1, 2];
        if order.ls_channel().is_some() {
            idx.push(self.order.ls_channel().ok_or(DatasetError::MissingMask(order))?);
        }
        if order.ts_channel().is_some() {
            idx.push(self.order.ts_channel().ok_or(DatasetError::MissingMask(order))?);
        }
        let data = idx.iter().flat_map(|&c| self.channel(c).iter().copied()).collect();
        Ok(ChannelStack {
            width: self.width,
            height: self.height,
            order,
            data,
        })
    }

    pub fn rgb(&self) -> RasterImage {
        let n = self.width * self.height;
        let mut data = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..3 {
                data.push(self.data[c * n + i] as f64);
            }
        }
        RasterImage::from_clamped(self.width, self.height, 3, data)
    }
}

/// Planar `[R, G, B, (M_LS), (M_TS)]`.
pub fn stack_channels(
    img: &RasterImage,
    ls: Option<&BinaryMask>,
    ts: Option<&BinaryMask>,
    order: StackOrder,
) -> Result<ChannelStack, DatasetError> {
    if img.channels() != 3 {
        return Err(DatasetError::DimensionMismatch(format!(
            "expected an RGB image, found {} channel(s)",
            img.channels()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut masks = Vec::new();
    if order.ls_channel().is_some() {
        masks.push(ls.ok_or(DatasetError::MissingMask(order))?);
    }
    if order.ts_channel().is_some() {
        masks.push(ts.ok_or(DatasetError::MissingMask(order))?);
    }
    if let Some(m) = masks.iter().find(|m| !m.same_shape(w, h)) {
        return Err(DatasetError::DimensionMismatch(format!(
            "mask {}x{} vs image {w}x{h}",
            m.width(),
            m.height()
        )));
    }
    let mut data = Vec::with_capacity(w * h * order.channels());
    for c in 0..3 {
        data.extend(img.data().iter().skip(c).step_by(3).map(|&v| v as f32));
    }
    for m in masks {
        data.extend(m.data().iter().map(|&b| if b { 1.0f32 } else { 0.0 }));
    }
    ChannelStack::new(w, h, order, data)
}

/// Seeded flips and rotation applied identically to every channel; colour
/// channels resample bilinearly, mask channels by nearest neighbour.
pub fn augment(stack: &ChannelStack, rng_seed: u64, rotation_range: f64) -> ChannelStack {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let hflip = rng.random_bool(0.5);
    let vflip = rng.random_bool(0.5);
    let angle = if rotation_range > 0.0 {
        rng.random_range(-rotation_range..=rotation_range)
    } else {
        0.0
    };
    let (w, h) = (stack.width, stack.height);
    let mut data = Vec::with_capacity(stack.data.len());
    for c in 0..stack.channels() {
        let interp = if c < 3 {
            Interpolation::Bilinear
        } else {
            Interpolation::Nearest
        };
        let mut p = Plane::new(w, h, stack.channel(c).iter().map(|&v| v as f64).collect());
        if hflip {
            p = flip_plane_h(&p);
        }
        if vflip {
            p = flip_plane_v(&p);
        }
        p = rotate_plane(&p, angle, interp);
        data.extend(p.data().iter().map(|&v| v.clamp(0.0, 1.0) as f32));
    }
    ChannelStack {
        width: w,
        height: h,
        order: stack.order,
        data,
    }
}

/// Rescales every channel: colour bilinearly, masks by nearest neighbour.
pub fn resize_stack(stack: &ChannelStack, width: usize, height: usize) -> ChannelStack {
    let (w, h) = (stack.width, stack.height);
    let mut data = Vec::with_capacity(width * height * stack.channels());
    for c in 0..stack.channels() {
        let interp = if c < 3 {
            Interpolation::Bilinear
        } else {
            Interpolation::Nearest
        };
        let p = Plane::new(w, h, stack.channel(c).iter().map(|&v| v as f64).collect());
        let r = resize_plane(&p, width, height, interp);
        data.extend(r.data().iter().map(|&v| v.clamp(0.0, 1.0) as f32));
    }
    ChannelStack {
        width,
        height,
        order: stack.order,
        data,
    }
}

pub fn stack_to_bytes(stack: &ChannelStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * stack.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(stack.width as u32).to_le_bytes());
    out.extend_from_slice(&(stack.height as u32).to_le_bytes());
    out.push(stack.channels() as u8);
    out.push(stack.order as u8);
    for v in &stack.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn stack_from_bytes(bytes: &[u8]) -> Result<ChannelStack, DatasetError> {
    let corrupt = |m: &str| DatasetError::CorruptStack(m.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(DatasetError::CorruptStack(format!("unsupported version {version}")));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (w, h) = (u32_at(6), u32_at(10));
    let channels = bytes[14] as usize;
    let order = StackOrder::from_code(bytes[15]).ok_or_else(|| corrupt("bad order code"))?;
    if channels != order.channels() {
        return Err(corrupt("channel count disagrees with order"));
    }
    let n = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * n {
        return Err(DatasetError::CorruptStack(format!(
            "expected {} data bytes, found {}",
            4 * n,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ChannelStack::new(w, h, order, data)
}

pub fn save_stack(stack: &ChannelStack, path: &Path) -> Result<(), DatasetError> {
    std::fs::write(path, stack_to_bytes(stack))?;
    Ok(())
}

pub fn load_stack(path: &Path) -> Result<ChannelStack, DatasetError> {
    stack_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(w: usize, h: usize, seed: u64) -> (RasterImage, BinaryMask, BinaryMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = RasterImage::from_clamped(w, h, 3, (0..w * h * 3).map(|_| rng.random()).collect());
        let ls = BinaryMask::from_fn(w, h, |x, y| (x + y) % 3 == 0);
        let ts = BinaryMask::from_fn(w, h, |x, _| x % 2 == 0);
        (img, ls, ts)
    }

    #[test]
    fn stacking_layout() {
        let (img, ls, ts) = sample(224, 224, 1);
        let s = stack_channels(&img, Some(&ls), None, StackOrder::RgbLs).unwrap();
        assert_eq!(s.channels(), 4);
        assert_eq!(s.channel(3), ls.to_plane().data().iter().map(|&v| v as f32).collect::<Vec<_>>());
        for c in 0..3 {
            let want: Vec<f32> = img.channel(c).data().iter().map(|&v| v as f32).collect();
            assert_eq!(s.channel(c), want.as_slice());
        }
        let full = stack_channels(&img, Some(&ls), Some(&ts), StackOrder::RgbLsTs).unwrap();
        assert_eq!(full.select(StackOrder::RgbLs).unwrap(), s);
        assert_eq!(
            full.select(StackOrder::RgbTs).unwrap(),
            stack_channels(&img, None, Some(&ts), StackOrder::RgbTs).unwrap()
        );
        assert!(matches!(s.select(StackOrder::RgbTs), Err(DatasetError::MissingMask(_))));
    }

    #[test]
    fn missing_and_mismatched_masks() {
        let (img, ls, _) = sample(8, 8, 2);
        assert!(matches!(
            stack_channels(&img, Some(&ls), None, StackOrder::RgbLsTs),
            Err(DatasetError::MissingMask(StackOrder::RgbLsTs))
        ));
        let small = BinaryMask::filled(4, 4, true);
        assert!(matches!(
            stack_channels(&img, Some(&small), None, StackOrder::RgbLs),
            Err(DatasetError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn corrupt_files() {
        let (img, ls, ts) = sample(5, 3, 3);
        let s = stack_channels(&img, Some(&ls), Some(&ts), StackOrder::RgbLsTs).unwrap();
        let bytes = stack_to_bytes(&s);
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 75);
        assert!(matches!(stack_from_bytes(&bytes[..bytes.len() - 1]), Err(DatasetError::CorruptStack(_))));
        assert!(matches!(stack_from_bytes(&bytes[..10]), Err(DatasetError::CorruptStack(_))));
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XSTK");
        assert!(matches!(stack_from_bytes(&bad), Err(DatasetError::CorruptStack(_))));
    }

    #[test]
    fn file_round_trip() {
        let (img, _, ts) = sample(6, 4, 4);
        let s = stack_channels(&img, None, Some(&ts), StackOrder::RgbTs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.rstk");
        save_stack(&s, &path).unwrap();
        assert_eq!(load_stack(&path).unwrap(), s);
    }

    #[test]
    fn zero_range_without_flips_is_identity() {
        let (img, ls, ts) = sample(9, 9, 5);
        let s = stack_channels(&img, Some(&ls), Some(&ts), StackOrder::RgbLsTs).unwrap();
        let seed = (0..1000u64)
            .find(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                !rng.random_bool(0.5) && !rng.random_bool(0.5)
            })
            .unwrap();
        assert_eq!(augment(&s, seed, 0.0), s);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(w in 1usize..9, h in 1usize..9, seed in any::<u64>(), code in 0u8..3) {
            let (img, ls, ts) = sample(w, h, seed);
            let order = StackOrder::from_code(code).unwrap();
            let s = stack_channels(&img, Some(&ls), Some(&ts), order).unwrap();
            prop_assert_eq!(stack_from_bytes(&stack_to_bytes(&s)).unwrap(), s);
        }

        #[test]
        fn augment_is_seeded_and_keeps_masks_binary(seed in any::<u64>()) {
            let (img, ls, ts) = sample(12, 12, seed ^ 0x55);
            let s = stack_channels(&img, Some(&ls), Some(&ts), StackOrder::RgbLsTs).unwrap();
            let a = augment(&s, seed, ROTATION_RANGE_DEG);
            prop_assert_eq!(stack_to_bytes(&a), stack_to_bytes(&augment(&s, seed, ROTATION_RANGE_DEG)));
            for c in 3..5 {
                prop_assert!(a.channel(c).iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }
}
