//! Frame-feature files: magic "PCF1", little-endian u32 frame count, u32
//! feature dimension, then `frames * dim` f32 values row-major.

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::corpus::VideoManifest;
use crate::error::{CoreError, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"PCF1";

pub fn write_features(path: &Path, matrix: &Tensor<f32>) -> Result<()> {
    if matrix.rank() != 2 {
        return Err(CoreError::invalid(format!(
            "feature matrix must be rank 2, got {:?}",
            matrix.shape()
        )));
    }
    let (frames, dim) = (matrix.shape()[0], matrix.shape()[1]);
    let mut bytes = Vec::with_capacity(12 + matrix.len() * 4);
    bytes.extend_from_slice(&FEATURE_MAGIC);
    bytes.extend_from_slice(&(frames as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in matrix.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a feature file, checking only its internal consistency.
pub fn read_features(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |message: String| CoreError::BadFile {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 12 || bytes[..4] != FEATURE_MAGIC {
        return Err(bad("missing PCF1 magic".into()));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + frames * dim * 4;
    if bytes.len() != expected {
        return Err(bad(format!(
            "header declares {frames}x{dim} ({expected} bytes) but file has {} bytes",
            bytes.len()
        )));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::matrix(frames, dim, data)
}

/// Read the feature file behind a manifest and require the declared shape.
pub fn load_features(manifest: &VideoManifest) -> Result<Tensor<f32>> {
    let m = read_features(&manifest.feature_file)?;
    let header = (m.shape()[0] as u32, m.shape()[1] as u32);
    let declared = (manifest.num_frames as u32, manifest.feature_dim as u32);
    if header != declared {
        return Err(CoreError::FeatureShapeMismatch {
            path: manifest.feature_file.clone(),
            header,
            manifest: declared,
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_shape_parsed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pcf");
        let m = Tensor::matrix(10, 4, (0..40).map(|i| i as f32).collect()).unwrap();
        write_features(&p, &m).unwrap();
        let r = read_features(&p).unwrap();
        assert_eq!(r.shape(), &[10, 4]);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pcf");
        let m = Tensor::matrix(10, 4, vec![0.5; 40]).unwrap();
        write_features(&p, &m).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4); // 39 floats left
        std::fs::write(&p, bytes).unwrap();
        assert!(read_features(&p).is_err());
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..6 * 7).map(|_| rng.random_range(-4.0..4.0)).collect();
        let m = Tensor::matrix(6, 7, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pcf");
        write_features(&p, &m).unwrap();
        let r = read_features(&p).unwrap();
        assert_eq!(m, r);
    }

    #[test]
    fn manifest_shape_mismatch_reports_both_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pcf");
        let m = Tensor::matrix(10, 4, vec![0.0; 40]).unwrap();
        write_features(&p, &m).unwrap();
        let manifest = VideoManifest {
            feature_file: p,
            num_frames: 12,
            feature_dim: 4,
            segments: vec![],
        };
        let err = load_features(&manifest).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("10") && msg.contains("12"), "{msg}");
    }
}
