//! Binary checkpoints for matrix product states.
//!
//! Layout: a 6-byte magic `QSBM\x01\n`, a little-endian u64 with the length
//! of the JSON manifest, the manifest itself, then the tensor payload as
//! row-major (re, im) f64 pairs in little-endian order, site by site. The
//! manifest records every shape needed to rebuild the state plus a free-form
//! string map for run metadata, so a resumed scan can verify it is loading
//! the checkpoint it expects. Loads validate the magic, the schema version,
//! the shape bookkeeping, and the exact payload length; anything off returns
//! a checkpoint error rather than a partially built state.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::state::MatrixProductState;
use super::{MpsError, MpsResult};
use crate::C64;

const MAGIC: &[u8; 6] = b"QSBM\x01\n";
const SCHEMA_VERSION: u32 = 1;
const MAX_MANIFEST_BYTES: u64 = 16 << 20;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    n_sites: usize,
    center: usize,
    local_dims: Vec<usize>,
    /// Interior bond dimensions (n_sites − 1 entries).
    bond_dims: Vec<usize>,
    bond_discard: Vec<f64>,
    cumulative_discard: f64,
    meta: BTreeMap<String, String>,
}

/// Write a state and a metadata map to `path`, overwriting any existing
/// file.
pub fn save_mps<P: AsRef<Path>>(
    path: P,
    mps: &MatrixProductState,
    meta: &BTreeMap<String, String>,
) -> MpsResult<()> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        n_sites: mps.n_sites(),
        center: mps.center(),
        local_dims: mps.local_dims(),
        bond_dims: mps.bond_dims(),
        bond_discard: mps.bond_discards().to_vec(),
        cumulative_discard: mps.cumulative_discard(),
        meta: meta.clone(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)
        .map_err(|e| MpsError::Checkpoint(format!("manifest serialization failed: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    let mut buf = [0u8; 16];
    for site in 0..mps.n_sites() {
        let t = mps.tensor(site);
        let std = t.as_standard_layout();
        for z in std.iter() {
            buf[..8].copy_from_slice(&z.re.to_le_bytes());
            buf[8..].copy_from_slice(&z.im.to_le_bytes());
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a state and its metadata map back from `path`.
pub fn load_mps<P: AsRef<Path>>(
    path: P,
) -> MpsResult<(MatrixProductState, BTreeMap<String, String>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MpsError::Checkpoint("bad magic; not a state checkpoint".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes);
    if manifest_len == 0 || manifest_len > MAX_MANIFEST_BYTES {
        return Err(MpsError::Checkpoint(format!(
            "implausible manifest length {manifest_len}"
        )));
    }
    let mut manifest_bytes = vec![0u8; manifest_len as usize];
    r.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| MpsError::Checkpoint(format!("manifest parse failed: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(MpsError::Checkpoint(format!(
            "unsupported schema version {}",
            manifest.schema_version
        )));
    }
    let n = manifest.n_sites;
    if n == 0
        || manifest.local_dims.len() != n
        || manifest.bond_dims.len() + 1 != n
        || manifest.bond_discard.len() + 1 != n
    {
        return Err(MpsError::Checkpoint("manifest shape bookkeeping is inconsistent".into()));
    }
    let mut bonds = Vec::with_capacity(n + 1);
    bonds.push(1usize);
    bonds.extend_from_slice(&manifest.bond_dims);
    bonds.push(1);
    let mut tensors = Vec::with_capacity(n);
    let mut buf = [0u8; 16];
    for site in 0..n {
        let (l, d, rt) = (bonds[site], manifest.local_dims[site], bonds[site + 1]);
        let count = l
            .checked_mul(d)
            .and_then(|x| x.checked_mul(rt))
            .filter(|&x| x <= (1 << 28))
            .ok_or_else(|| MpsError::Checkpoint("tensor shape overflows the size guard".into()))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf).map_err(|e| {
                MpsError::Checkpoint(format!("payload truncated at site {site}: {e}"))
            })?;
            let re = f64::from_le_bytes(buf[..8].try_into().expect("slice len 8"));
            let im = f64::from_le_bytes(buf[8..].try_into().expect("slice len 8"));
            data.push(C64::new(re, im));
        }
        let t = Array3::from_shape_vec((l, d, rt), data)
            .map_err(|e| MpsError::Checkpoint(format!("tensor reshape failed: {e}")))?;
        tensors.push(t);
    }
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => {}
        _ => return Err(MpsError::Checkpoint("trailing bytes after payload".into())),
    }
    let state = MatrixProductState::from_raw_parts(
        tensors,
        manifest.center,
        manifest.bond_discard,
        manifest.cumulative_discard,
    )?;
    Ok((state, manifest.meta))
}
