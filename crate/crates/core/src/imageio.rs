//! Raw image tensors and the synthetic image source.
//!
//! File layout, little-endian:
//!
//! ```text
//! magic  4 bytes  "SPTI"
//! C, H, W         3 × u32
//! pixels          C·H·W × f64, channel-major then row-major
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::Tensor;
use crate::training::{quadrant_image, NUM_QUADRANTS};

const MAGIC: &[u8; 4] = b"SPTI";
pub const HEADER_LEN: usize = 16;
pub const EXTENSION: &str = "spti";

pub fn encode_image(image: &Tensor) -> Result<Vec<u8>> {
    let [c, h, w] = image.shape() else {
        return Err(Error::Contract(format!(
            "expected a C×H×W image, got shape {:?}",
            image.shape()
        )));
    };
    let mut out = Vec::with_capacity(HEADER_LEN + image.numel() * 8);
    out.extend_from_slice(MAGIC);
    for dim in [*c, *h, *w] {
        let dim = u32::try_from(dim)
            .map_err(|_| Error::Contract(format!("dimension {dim} too large")))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for v in image.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<Tensor> {
    let bad = |detail: String| Error::Format {
        what: "image",
        detail,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let dim = |i: usize| {
        u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize
    };
    let shape = [dim(0), dim(1), dim(2)];
    let n: usize = shape.iter().product();
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != n * 8 {
        return Err(bad(format!(
            "shape {shape:?} needs {} payload bytes, found {}",
            n * 8,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Tensor::new(shape, data)?)
}

pub fn write_image(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_image(image)?).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Image files (`*.spti`) in `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// `n` seeded quadrant images shaped for `config`.
pub fn synthetic_images(config: &ModelConfig, n: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            quadrant_image(
                &mut rng,
                config.in_chans,
                config.image_size,
                crate::training::DEFAULT_NOISE,
                crate::training::DEFAULT_BOOST,
                i % NUM_QUADRANTS,
            )
            .image
        })
        .collect()
}
