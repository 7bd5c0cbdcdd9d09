//! Parameter checkpoints.
//!
//! ```text
//! "GBDLCKPT" | version u16 LE | tensor*
//! tensor = name_len u32 | name utf-8 | rank u32 | dims u32* | values f64 LE*
//! ```
//!
//! Architecture metadata is stored as ordinary tensors under `meta.*`.

use std::fs;
use std::path::Path;

use rand::SeedableRng;

use super::{LrlModel, ModelConfig, ModelError, Params, Result, SegNet};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GBDLCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

const KIND_LRL: f64 = 1.0;
const KIND_SEG: f64 = 2.0;

pub fn write_checkpoint(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut buf = CHECKPOINT_MAGIC.to_vec();
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<usize> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?) as usize)
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> std::result::Result<Vec<(String, Tensor)>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err("bad magic".into());
    }
    let version = r
        .take(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or("truncated header")?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let trunc = || format!("truncated tensor record {}", out.len());
        let len = r.u32().ok_or_else(trunc)?;
        let name = std::str::from_utf8(r.take(len).ok_or_else(trunc)?)
            .map_err(|_| "tensor name is not utf-8".to_string())?
            .to_string();
        let rank = r.u32().ok_or_else(trunc)?;
        if rank > 8 {
            return Err(format!("{name}: rank {rank} too large"));
        }
        let dims = (0..rank)
            .map(|_| r.u32())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(trunc)?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| format!("{name}: implausible shape {dims:?}"))?;
        let raw = r.take(n * 8).ok_or_else(trunc)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(dims, data).map_err(|e| format!("{name}: {e}"))?;
        out.push((name, t));
    }
    Ok(out)
}

fn tensors_of(kind: f64, config: &ModelConfig, params: &Params) -> Vec<(String, Tensor)> {
    let mut v = vec![
        ("meta.kind".to_string(), Tensor::from_vec(vec![kind])),
        ("meta.config".to_string(), config.to_meta()),
    ];
    v.extend(params.iter().map(|(n, t)| (n.to_string(), t.clone())));
    v
}

pub trait Checkpointable {
    fn checkpoint_tensors(&self) -> Vec<(String, Tensor)>;
}

impl Checkpointable for LrlModel {
    fn checkpoint_tensors(&self) -> Vec<(String, Tensor)> {
        tensors_of(KIND_LRL, &self.config, &self.params)
    }
}

impl Checkpointable for SegNet {
    fn checkpoint_tensors(&self) -> Vec<(String, Tensor)> {
        tensors_of(KIND_SEG, &self.config, &self.params)
    }
}

pub fn save_checkpoint(path: &Path, model: &impl Checkpointable) -> Result<()> {
    fs::write(path, write_checkpoint(&model.checkpoint_tensors())).map_err(|source| {
        ModelError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

fn load_parts(path: &Path, kind: f64) -> Result<(ModelConfig, Vec<(String, Tensor)>)> {
    let p = path.display().to_string();
    if !path.is_file() {
        return Err(ModelError::CheckpointNotFound(p));
    }
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: p.clone(),
        source,
    })?;
    let corrupt = |detail: String| ModelError::Checkpoint {
        path: p.clone(),
        detail,
    };
    let mut tensors = read_checkpoint(&bytes).map_err(corrupt)?;
    if tensors.len() < 2 || tensors[0].0 != "meta.kind" || tensors[1].0 != "meta.config" {
        return Err(corrupt("missing metadata".into()));
    }
    let found = tensors[0].1.data().first().copied().unwrap_or(0.0);
    if found != kind {
        let name = |k| if k == KIND_LRL { "LRL model" } else { "segmentation net" };
        return Err(corrupt(format!("expected a {}, found kind {found}", name(kind))));
    }
    let config = ModelConfig::from_meta(&tensors[1].1).ok_or_else(|| corrupt("bad config".into()))?;
    config.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok((config, tensors.split_off(2)))
}

fn fill(params: &mut Params, tensors: Vec<(String, Tensor)>, path: &Path) -> Result<()> {
    let corrupt = |detail: String| ModelError::Checkpoint {
        path: path.display().to_string(),
        detail,
    };
    if tensors.len() != params.len() {
        return Err(corrupt(format!(
            "{} parameter tensors, architecture needs {}",
            tensors.len(),
            params.len()
        )));
    }
    let names = params.names().to_vec();
    for ((name, t), (want, slot)) in tensors.into_iter().zip(names.iter().zip(params.values_mut())) {
        if &name != want || t.shape() != slot.shape() {
            return Err(corrupt(format!("tensor {name} {:?} does not match {want}", t.shape())));
        }
        *slot = t;
    }
    Ok(())
}

// Parameters are overwritten right after construction, so the init stream is irrelevant.
fn scratch_rng() -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(0)
}

pub fn load_lrl(path: &Path) -> Result<LrlModel> {
    let (config, tensors) = load_parts(path, KIND_LRL)?;
    let mut m = LrlModel::new(config, &mut scratch_rng())?;
    fill(&mut m.params, tensors, path)?;
    Ok(m)
}

pub fn load_segnet(path: &Path) -> Result<SegNet> {
    let (config, tensors) = load_parts(path, KIND_SEG)?;
    let mut m = SegNet::new(config, &mut scratch_rng())?;
    fill(&mut m.params, tensors, path)?;
    Ok(m)
}
