//! Manifests, channel stacks, augmentation and the synthetic fundus corpus.

mod stack;
mod synth;

pub use stack::{
    augment, load_stack, resize_stack, save_stack, stack_channels, stack_from_bytes, stack_to_bytes,
    ChannelStack, StackOrder, ROTATION_RANGE_DEG,
};
pub use synth::{
    generate_synthetic, generate_synthetic_with, DiscCircle, SynthParams, SyntheticTruth, SYNTH_SIZE,
};

use std::collections::HashSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed manifest row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("duplicate image path in manifest: {0}")]
    DuplicatePath(String),
    #[error("stack order {0:?} needs a mask that was not supplied")]
    MissingMask(StackOrder),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("corrupt stack: {0}")]
    CorruptStack(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QualityLabel {
    Good = 0,
    Usable = 1,
    Reject = 2,
}

impl QualityLabel {
    pub const ALL: [QualityLabel; 3] = [QualityLabel::Good, QualityLabel::Usable, QualityLabel::Reject];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            QualityLabel::Good => "Good",
            QualityLabel::Usable => "Usable",
            QualityLabel::Reject => "Reject",
        }
    }
}

impl fmt::Display for QualityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub image_path: String,
    pub label: QualityLabel,
    pub split: Split,
}

/// Parses a manifest CSV with header `image,quality,split`.
pub fn load_manifest(csv_bytes: &[u8]) -> Result<Vec<SampleRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(csv_bytes);
    let malformed = |row: usize, reason: String| DatasetError::MalformedRow { row, reason };
    let header = reader.headers().map_err(|e| malformed(0, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["image", "quality", "split"] {
        return Err(malformed(0, format!("unexpected header {header:?}")));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| malformed(row, e.to_string()))?;
        if rec.len() != 3 {
            return Err(malformed(row, format!("expected 3 fields, found {}", rec.len())));
        }
        let path = rec[0].to_string();
        if path.is_empty() {
            return Err(malformed(row, "empty image path".into()));
        }
        let label = rec[1]
            .parse::<usize>()
            .ok()
            .and_then(QualityLabel::from_index)
            .ok_or_else(|| malformed(row, format!("bad quality {:?}", &rec[1])))?;
        let split = match &rec[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(malformed(row, format!("bad split {other:?}"))),
        };
        if !seen.insert(path.clone()) {
            return Err(DatasetError::DuplicatePath(path));
        }
        out.push(SampleRecord {
            image_path: path,
            label,
            split,
        });
    }
    Ok(out)
}

/// Serializes records in the same format [`load_manifest`] reads.
pub fn write_manifest(records: &[SampleRecord]) -> String {
    let mut s = String::from("image,quality,split\n");
    for r in records {
        s.push_str(&format!("{},{},{}\n", r.image_path, r.label.index(), r.split.as_str()));
    }
    s
}
