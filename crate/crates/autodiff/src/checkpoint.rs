//! Checkpoints: a JSON manifest listing tensor names, shapes, and byte
//! offsets, next to a flat little-endian f64 blob. Writing the same tensors
//! and metadata always produces identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset of this tensor's data within the blob.
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    blob: String,
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Write `manifest_path` (JSON) and a sibling `.bin` blob.
pub fn save(manifest_path: &Path, tensors: &[(&str, &Tensor)], meta: serde_json::Value) -> Result<()> {
    let blob_file = blob_path(manifest_path);
    let blob_name = blob_file
        .file_name()
        .ok_or_else(|| Error::Checkpoint(format!("bad checkpoint path {manifest_path:?}")))?
        .to_string_lossy()
        .into_owned();

    let mut entries = Vec::with_capacity(tensors.len());
    let mut blob = Vec::new();
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: (*name).to_owned(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        blob: blob_name,
        tensors: entries,
        meta,
    };

    let mut f = fs::File::create(manifest_path)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    fs::write(blob_file, blob)?;
    Ok(())
}

/// Read a checkpoint back; validates that offsets and the blob length agree
/// with the declared shapes.
pub fn load(manifest_path: &Path) -> Result<(Vec<(String, Tensor)>, serde_json::Value)> {
    let manifest: Manifest = serde_json::from_reader(fs::File::open(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let blob = fs::read(dir.join(&manifest.blob))?;

    let expected: u64 = manifest
        .tensors
        .iter()
        .map(|e| 8 * e.shape.iter().product::<usize>() as u64)
        .sum();
    if blob.len() as u64 != expected {
        return Err(Error::Checkpoint(format!(
            "blob is {} bytes but manifest declares {expected}",
            blob.len()
        )));
    }

    let mut out = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start
            .checked_add(numel * 8)
            .filter(|&e| e <= blob.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("tensor {} overruns the blob", entry.name))
            })?;
        let data = blob[start..end]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        out.push((entry.name, Tensor::new(entry.shape, data)?));
    }
    Ok((out, manifest.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_values_and_meta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let a = Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE]).unwrap();
        let b = Tensor::new(vec![3], vec![0.0, 1e300, -1e-300]).unwrap();
        let meta = serde_json::json!({"hidden": 128, "seed": 7});
        save(&path, &[("enc.w", &a), ("enc.b", &b)], meta.clone()).unwrap();

        let (tensors, got_meta) = load(&path).unwrap();
        assert_eq!(got_meta, meta);
        assert_eq!(tensors[0].0, "enc.w");
        assert_eq!(tensors[0].1, a);
        assert_eq!(tensors[1].1, b);
    }

    #[test]
    fn save_is_byte_identical_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        let t = Tensor::new(vec![4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let meta = serde_json::json!({"epoch": 3});
        save(&p1, &[("w", &t)], meta.clone()).unwrap();
        save(&p2, &[("w", &t)], meta).unwrap();
        assert_eq!(
            fs::read(dir.path().join("a.bin")).unwrap(),
            fs::read(dir.path().join("b.bin")).unwrap()
        );
        // Manifests differ only in the blob file name they point to.
        let m1 = fs::read_to_string(&p1).unwrap().replace("a.bin", "X");
        let m2 = fs::read_to_string(&p2).unwrap().replace("b.bin", "X");
        assert_eq!(m1, m2);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let t = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        save(&path, &[("w", &t)], serde_json::json!({})).unwrap();
        let blob = dir.path().join("model.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
    }
}
