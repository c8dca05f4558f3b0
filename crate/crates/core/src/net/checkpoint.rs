//! Parameter checkpoints: a JSON manifest next to a raw little-endian f64
//! payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{ParameterStore, Partition};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::features::StdVector;

const FORMAT: &str = "jointspeech-checkpoint";
const VERSION: u32 = 1;

/// A trained model: its configuration, weights and the head's std vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub store: ParameterStore,
    pub std_vector: StdVector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    name: String,
    partition: Partition,
    shape: [usize; 2],
    /// Offset into the payload, in f64 elements.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    arrays: Vec<ArrayEntry>,
    std_vector: ArrayEntry,
    payload_sha256: String,
}

/// Manifest and payload paths for a checkpoint stem: `<stem>.json`, `<stem>.bin`.
pub fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".json"), with(".bin"))
}

pub fn save_checkpoint(stem: &Path, ckpt: &Checkpoint) -> Result<()> {
    ckpt.config.validate()?;
    if !ckpt.store.same_layout(&ParameterStore::zeros(&ckpt.config)) {
        return Err(Error::invalid_input("parameter shapes do not match the model config"));
    }
    if ckpt.std_vector.len() != ckpt.config.bins {
        return Err(Error::invalid_input(format!(
            "std vector has {} entries for {} bins",
            ckpt.std_vector.len(),
            ckpt.config.bins
        )));
    }
    let mut payload = Vec::with_capacity(8 * (ckpt.store.num_parameters() + ckpt.std_vector.len()));
    let mut offset = 0;
    let mut arrays = Vec::new();
    for p in ckpt.store.arrays() {
        arrays.push(ArrayEntry {
            name: p.name,
            partition: p.partition,
            shape: p.array.shape(),
            offset,
        });
        offset += p.array.len();
        p.array
            .as_slice()
            .iter()
            .for_each(|v| payload.extend_from_slice(&v.to_le_bytes()));
    }
    let std_entry = ArrayEntry {
        name: "std_vector".into(),
        partition: Partition::Enh,
        shape: [1, ckpt.std_vector.len()],
        offset,
    };
    ckpt.std_vector
        .as_slice()
        .iter()
        .for_each(|v| payload.extend_from_slice(&v.to_le_bytes()));

    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        config: ckpt.config.clone(),
        arrays,
        std_vector: std_entry,
        payload_sha256: hex::encode(Sha256::digest(&payload)),
    };
    let (json_path, bin_path) = checkpoint_paths(stem);
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    fs::write(&bin_path, &payload).map_err(|e| Error::io(&bin_path, e))?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<Checkpoint> {
    let (json_path, bin_path) = checkpoint_paths(stem);
    let id = json_path.display().to_string();
    let bad = |m: String| Error::format(id.clone(), m);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(format!("bad manifest: {e}")))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(bad(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    manifest.config.validate()?;
    let payload = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if hex::encode(Sha256::digest(&payload)) != manifest.payload_sha256 {
        return Err(bad("payload checksum mismatch".into()));
    }
    if payload.len() % 8 != 0 {
        return Err(bad(format!("payload length {} is not a multiple of 8", payload.len())));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let slice = |e: &ArrayEntry| -> Result<&[f64]> {
        let len = e.shape[0] * e.shape[1];
        values
            .get(e.offset..e.offset + len)
            .ok_or_else(|| bad(format!("array {} runs past the payload", e.name)))
    };

    let mut store = ParameterStore::zeros(&manifest.config);
    let expected: Vec<(String, Partition, [usize; 2])> = store
        .arrays()
        .into_iter()
        .map(|p| (p.name, p.partition, p.array.shape()))
        .collect();
    if expected.len() != manifest.arrays.len() {
        return Err(bad(format!(
            "config needs {} arrays, manifest lists {}",
            expected.len(),
            manifest.arrays.len()
        )));
    }
    for ((name, part, shape), entry) in expected.iter().zip(&manifest.arrays) {
        if *name != entry.name || *part != entry.partition || *shape != entry.shape {
            return Err(bad(format!(
                "array {} {:?} {:?} does not match config slot {} {:?} {:?}",
                entry.name, entry.partition, entry.shape, name, part, shape
            )));
        }
    }
    for ((_, dst), entry) in store.arrays_mut().into_iter().zip(&manifest.arrays) {
        dst.as_mut_slice().copy_from_slice(slice(entry)?);
    }
    if manifest.std_vector.shape != [1, manifest.config.bins] {
        return Err(bad(format!("std vector shape {:?}", manifest.std_vector.shape)));
    }
    let std_vector = StdVector::new(slice(&manifest.std_vector)?.to_vec())?;
    if !store.is_finite() {
        return Err(bad("non-finite parameter".into()));
    }
    Ok(Checkpoint {
        config: manifest.config,
        store,
        std_vector,
    })
}
