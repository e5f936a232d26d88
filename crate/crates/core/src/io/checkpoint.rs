use std::path::Path;

use copyalign_tensor::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes, Reader};
use crate::error::{Error, Result};
use crate::network::{Network, NetworkConfig};
use crate::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VSCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub network: NetworkConfig,
    /// Schedule the parameters were trained with; `None` for untrained weights.
    pub train: Option<TrainConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub meta: CheckpointMeta,
    pub network: Network,
}

/// Layout (little-endian): magic, version u16, seed u64, metadata length u32,
/// metadata JSON, tensor count u32, then per tensor: name length u32, name,
/// rank u32, dims u32 each, f32 data.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let meta = serde_json::to_vec(&ckpt.meta).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&ckpt.seed.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(ckpt.network.params.len() as u32).to_le_bytes());
    for p in ckpt.network.params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_bytes(path)?;
    let mut r = Reader::new(&bytes, path);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let seed = r.u64()?;
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta =
        serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::format(path, format!("metadata: {e}")))?;
    let count = r.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::format(path, format!("tensor name: {e}")))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let data = r.f32s(shape.iter().product())?;
        params.add(name, Tensor::new(&shape, data)?).map_err(|e| Error::format(path, e.to_string()))?;
    }
    r.finish()?;
    let network = Network::from_params(meta.network, params).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(Checkpoint { seed, meta, network })
}
