//! `SIQA` checkpoint files.
//!
//! Layout (little-endian): magic, `u16` version, `u8` architecture
//! (0 single, 1 dual), `u8` block count, `u16` widths, `u8` input channels,
//! `u16` feature dim, every parameter as `f32` in [`Model::params`] order,
//! `u16` epoch, 32-byte rng seed.

use std::path::Path;

use super::layers::{HeadParams, NUM_CLASSES};
use super::model::{Architecture, BackboneParams, ConvBlock, Model, ModelConfig};
use super::NnError;

const MAGIC: &[u8; 4] = b"SIQA";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub epoch: u16,
    pub rng_state: [u8; 32],
}

pub fn checkpoint_to_bytes(ck: &ModelCheckpoint) -> Vec<u8> {
    let m = &ck.model;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match m.arch {
        Architecture::Single => 0,
        Architecture::Dual => 1,
    });
    out.push(m.config.widths.len() as u8);
    for &w in &m.config.widths {
        out.extend_from_slice(&(w as u16).to_le_bytes());
    }
    out.push(m.arch.input_channels() as u8);
    out.extend_from_slice(&(m.feature_dim() as u16).to_le_bytes());
    for p in m.params() {
        for &v in p {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(&ck.epoch.to_le_bytes());
    out.extend_from_slice(&ck.rng_state);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| NnError::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, NnError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, NnError> {
        let b = self.take(4 * n)?;
        let v: Vec<f64> = b
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(NnError::CorruptCheckpoint("non-finite parameter".into()));
        }
        Ok(v)
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ModelCheckpoint, NnError> {
    let corrupt = |s: String| NnError::CorruptCheckpoint(s);
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let arch = match r.u8()? {
        0 => Architecture::Single,
        1 => Architecture::Dual,
        t => return Err(corrupt(format!("architecture tag {t}"))),
    };
    let nblocks = r.u8()? as usize;
    let widths = (0..nblocks)
        .map(|_| r.u16().map(usize::from))
        .collect::<Result<Vec<_>, _>>()?;
    if widths.is_empty() || widths.contains(&0) {
        return Err(corrupt(format!("widths {widths:?}")));
    }
    let in_c = r.u8()? as usize;
    if in_c != arch.input_channels() {
        return Err(corrupt(format!("{in_c} input channels for {}", arch.tag())));
    }
    let fdim = r.u16()? as usize;
    if fdim != widths[nblocks - 1] * arch.branches() {
        return Err(corrupt(format!("feature dim {fdim}")));
    }
    let mut branches = Vec::new();
    for _ in 0..arch.branches() {
        let mut c = in_c;
        let mut blocks = Vec::new();
        for &w in &widths {
            let kernels = r.f32s(w * c * 9)?;
            let bias = r.f32s(w)?;
            blocks.push(ConvBlock {
                in_channels: c,
                out_channels: w,
                kernels,
                bias,
            });
            c = w;
        }
        branches.push(BackboneParams { blocks });
    }
    let head = HeadParams {
        w: r.f32s(NUM_CLASSES * fdim)?,
        b: r.f32s(NUM_CLASSES)?,
    };
    let epoch = r.u16()?;
    let rng_state: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ModelCheckpoint {
        model: Model {
            arch,
            config: ModelConfig { widths },
            branches,
            head,
        },
        epoch,
        rng_state,
    })
}

pub fn save_checkpoint(ck: &ModelCheckpoint, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, checkpoint_to_bytes(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint, NnError> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
