//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! the 1024 red, 1024 green and 1024 blue pixel bytes.

use std::fs;
use std::path::Path;

use crate::data::{Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGE_BYTES: usize = 3 * 32 * 32;
pub const RECORD_BYTES: usize = 1 + IMAGE_BYTES;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

pub fn parse_records(bytes: &[u8], path: &Path) -> Result<Vec<LabeledImage>> {
    let whole = bytes.len() / RECORD_BYTES * RECORD_BYTES;
    if whole != bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "truncated record at offset {whole} ({} of {RECORD_BYTES} bytes)",
                bytes.len() - whole
            ),
        });
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0];
            if label > 9 {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("label byte {label} > 9 at offset {}", i * RECORD_BYTES),
                });
            }
            let pixels = rec[1..].iter().map(|&b| f32::from(b) / 255.0).collect();
            Ok(LabeledImage {
                pixels: Tensor::new(vec![3, 32, 32], pixels)?,
                label,
            })
        })
        .collect()
}

/// Read one binary batch file, preserving record order.
pub fn load_cifar10(path: impl AsRef<Path>) -> Result<Vec<LabeledImage>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_records(&bytes, path)
}

/// Load the five training batches and the test batch from a directory.
pub fn load_cifar10_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut train = Vec::new();
    for name in TRAIN_FILES {
        train.extend(load_cifar10(dir.join(name))?);
    }
    let test = load_cifar10(dir.join(TEST_FILE))?;
    Ok(Dataset { train, test })
}

/// Encode images back into the binary record format.
pub fn encode_records(images: &[LabeledImage]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(images.len() * RECORD_BYTES);
    for (i, img) in images.iter().enumerate() {
        if img.pixels.shape() != [3, 32, 32] || img.label > 9 {
            return Err(Error::invalid(format!(
                "image {i} is not a 3x32x32 image with label 0..9"
            )));
        }
        out.push(img.label);
        out.extend(
            img.pixels
                .as_slice()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    Ok(out)
}

pub fn write_cifar10(path: impl AsRef<Path>, images: &[LabeledImage]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_records(images)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
