//! Binary volume/mask files and the dataset manifest.
//!
//! Both binary formats share a 24-byte header:
//!
//! ```text
//! offset  size  field
//! 0       4     magic ("VOL1" or "MSK1")
//! 4       4     depth   (u32 LE)
//! 8       4     H       (u32 LE)
//! 12      4     W       (u32 LE)
//! 16      8     reserved, zero
//! 24      ...   payload: f64 LE per voxel (VOL1) or u8 per voxel (MSK1)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Mask, Result, Sample, Split, Volume};

pub const VOLUME_MAGIC: &[u8; 4] = b"VOL1";
pub const MASK_MAGIC: &[u8; 4] = b"MSK1";
pub const HEADER_LEN: usize = 24;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn header(magic: &[u8; 4], shape: [usize; 3]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(magic);
    for s in shape {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    buf.extend_from_slice(&[0u8; 8]);
    buf
}

/// Validates the header and returns `(shape, payload)`.
fn parse<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    elem: usize,
    path: &Path,
) -> Result<([usize; 3], &'a [u8])> {
    let p = || path.display().to_string();
    if bytes.len() < 4 {
        return Err(DataError::Truncated {
            path: p(),
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &found != magic {
        return Err(DataError::BadMagic { path: p(), found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            path: p(),
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let shape = [u32_at(4), u32_at(8), u32_at(12)];
    if bytes[16..24].iter().any(|&b| b != 0) {
        return Err(DataError::BadHeader { path: p() });
    }
    if shape.iter().any(|&s| s == 0) {
        return Err(DataError::InvalidShape(shape, "zero extent in header".into()));
    }
    let expected = shape
        .iter()
        .try_fold(elem, |acc, &s| acc.checked_mul(s))
        .ok_or_else(|| DataError::InvalidShape(shape, "size overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(DataError::Truncated {
            path: p(),
            expected: HEADER_LEN + expected,
            got: bytes.len(),
        });
    }
    if payload.len() > expected {
        return Err(DataError::PayloadMismatch {
            path: p(),
            expected,
            got: payload.len(),
        });
    }
    Ok((shape, payload))
}

pub fn volume_bytes(v: &Volume) -> Vec<u8> {
    let mut buf = header(VOLUME_MAGIC, v.shape());
    buf.reserve(v.data().len() * 8);
    for x in v.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

pub fn write_volume(path: &Path, v: &Volume) -> Result<()> {
    fs::write(path, volume_bytes(v)).map_err(io_err(path))
}

pub fn read_volume(path: &Path, id: &str) -> Result<Volume> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (shape, payload) = parse(&bytes, VOLUME_MAGIC, 8, path)?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Volume::new(id, shape, data)
}

pub fn write_mask(path: &Path, m: &Mask) -> Result<()> {
    let mut buf = header(MASK_MAGIC, m.shape());
    buf.extend_from_slice(m.labels());
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_mask(path: &Path, id: &str) -> Result<Mask> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (shape, payload) = parse(&bytes, MASK_MAGIC, 1, path)?;
    Mask::new(id, shape, payload.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    /// Paths are relative to the manifest's directory.
    pub volume: String,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub classes: u8,
    pub shape: [usize; 3],
    pub difficulty: f64,
    pub train: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    pub volumes: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.toml";

/// Writes `volumes/`, `masks/` and `manifest.toml` under `dir`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    ds.validate()?;
    for sub in ["volumes", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let mut volumes = Vec::new();
    for (split, s) in ds.entries() {
        let vrel = format!("volumes/{}.vol", s.volume.id);
        let mrel = format!("masks/{}.msk", s.mask.id);
        write_volume(&dir.join(&vrel), &s.volume)?;
        write_mask(&dir.join(&mrel), &s.mask)?;
        volumes.push(ManifestEntry {
            id: s.volume.id.clone(),
            split,
            volume: vrel,
            mask: mrel,
        });
    }
    let manifest = Manifest {
        seed: ds.seed,
        classes: ds.classes,
        shape: ds.shape,
        difficulty: ds.difficulty,
        train: ds.train_len(),
        labeled: ds.train_labeled.len(),
        unlabeled: ds.train_unlabeled.len(),
        test: ds.test.len(),
        volumes,
    };
    let text = toml::to_string(&manifest).map_err(|e| DataError::Manifest(e.to_string()))?;
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

/// Loads a dataset from a manifest file or from a directory containing one.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut ds = Dataset {
        train_labeled: Vec::new(),
        train_unlabeled: Vec::new(),
        test: Vec::new(),
        classes: m.classes,
        seed: m.seed,
        shape: m.shape,
        difficulty: m.difficulty,
        manifest_path: Some(path.clone()),
    };
    for e in &m.volumes {
        let volume = read_volume(&root.join(&e.volume), &e.id)?;
        let mask = read_mask(&root.join(&e.mask), &e.id)?;
        let sample = Sample { volume, mask };
        match e.split {
            Split::Labeled => ds.train_labeled.push(sample),
            Split::Unlabeled => ds.train_unlabeled.push(sample),
            Split::Test => ds.test.push(sample),
        }
    }
    let counts = (ds.train_labeled.len(), ds.train_unlabeled.len(), ds.test.len());
    if counts != (m.labeled, m.unlabeled, m.test) || m.labeled + m.unlabeled != m.train {
        return Err(DataError::Manifest(format!(
            "split counts {counts:?} disagree with header (train {}, labeled {}, unlabeled {}, test {})",
            m.train, m.labeled, m.unlabeled, m.test
        )));
    }
    ds.validate()?;
    Ok(ds)
}
