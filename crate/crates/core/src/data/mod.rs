//! Volumes, masks, datasets and their on-disk formats.

mod io;
mod synth;

pub use io::{
    load_dataset, read_mask, read_volume, save_dataset, write_mask, write_volume, Manifest,
    ManifestEntry, HEADER_LEN, MANIFEST_NAME, MASK_MAGIC, VOLUME_MAGIC, volume_bytes,
};
pub use synth::{generate, sample, GenConfig};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: bad magic {found:?}")]
    BadMagic { path: String, found: [u8; 4] },
    #[error("{path}: truncated file ({got} bytes, need {expected})")]
    Truncated {
        path: String,
        expected: usize,
        got: usize,
    },
    #[error("{path}: payload of {got} bytes does not match header shape (need {expected})")]
    PayloadMismatch {
        path: String,
        expected: usize,
        got: usize,
    },
    #[error("{path}: reserved header field is non-zero")]
    BadHeader { path: String },
    #[error("invalid shape {0:?}: {1}")]
    InvalidShape([usize; 3], String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u8, classes: u8 },
    #[error("non-finite intensity at voxel {0}")]
    NonFinite(usize),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// `depth × H × W` grid of intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub id: String,
    shape: [usize; 3],
    data: Vec<f64>,
}

impl Volume {
    pub fn new(id: impl Into<String>, shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        if data.len() != shape.iter().product::<usize>() {
            return Err(DataError::InvalidShape(
                shape,
                format!("payload has {} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(i));
        }
        Ok(Self {
            id: id.into(),
            shape,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn depth(&self) -> usize {
        self.shape[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// As a single-channel `1×D×H×W` tensor.
    pub fn to_tensor(&self) -> crate::tensor::Tensor {
        let [d, h, w] = self.shape;
        crate::tensor::Tensor::new(vec![1, d, h, w], self.data.clone()).expect("checked shape")
    }
}

/// Voxel-wise class labels with the same layout as a [`Volume`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub id: String,
    shape: [usize; 3],
    labels: Vec<u8>,
}

impl Mask {
    pub fn new(id: impl Into<String>, shape: [usize; 3], labels: Vec<u8>) -> Result<Self> {
        check_shape(shape)?;
        if labels.len() != shape.iter().product::<usize>() {
            return Err(DataError::InvalidShape(
                shape,
                format!("payload has {} labels", labels.len()),
            ));
        }
        Ok(Self {
            id: id.into(),
            shape,
            labels,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn check_classes(&self, classes: u8) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(&label) => Err(DataError::LabelOutOfRange { label, classes }),
            None => Ok(()),
        }
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l > 0).count() as f64 / self.labels.len() as f64
    }
}

fn check_shape(shape: [usize; 3]) -> Result<()> {
    if shape.iter().any(|&s| s == 0) {
        return Err(DataError::InvalidShape(shape, "zero extent".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Labeled,
    Unlabeled,
    Test,
}

/// One volume with its mask. Unlabeled training entries still carry their
/// mask for evaluation; training code must not read it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub volume: Volume,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train_labeled: Vec<Sample>,
    pub train_unlabeled: Vec<Sample>,
    pub test: Vec<Sample>,
    pub classes: u8,
    pub seed: u64,
    pub shape: [usize; 3],
    pub difficulty: f64,
    pub manifest_path: Option<PathBuf>,
}

impl Dataset {
    pub fn train_len(&self) -> usize {
        self.train_labeled.len() + self.train_unlabeled.len()
    }

    pub fn unlabeled_volumes(&self) -> Vec<&Volume> {
        self.train_unlabeled.iter().map(|s| &s.volume).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (Split, &Sample)> {
        self.train_labeled
            .iter()
            .map(|s| (Split::Labeled, s))
            .chain(self.train_unlabeled.iter().map(|s| (Split::Unlabeled, s)))
            .chain(self.test.iter().map(|s| (Split::Test, s)))
    }

    /// Ids must be unique across splits.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (_, s) in self.entries() {
            if s.volume.id != s.mask.id {
                return Err(DataError::Manifest(format!(
                    "volume {} paired with mask {}",
                    s.volume.id, s.mask.id
                )));
            }
            if !seen.insert(s.volume.id.as_str()) {
                return Err(DataError::Manifest(format!("duplicate id {}", s.volume.id)));
            }
            if s.volume.shape() != s.mask.shape() {
                return Err(DataError::Manifest(format!("shape mismatch for {}", s.volume.id)));
            }
            s.mask.check_classes(self.classes)?;
        }
        Ok(())
    }
}
