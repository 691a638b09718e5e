//! MNIST IDX files: big-endian header, unsigned-byte payload.

use std::path::Path;

use convland_core::Dataset;
use nalgebra::DMatrix;

use crate::error::{HarnessError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw image file contents: `count` images of `rows x cols` bytes, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Reader<'a> {
    path: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> HarnessError {
        HarnessError::Format {
            path: self.path.to_string(),
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| self.err("truncated header"))?;
        self.pos += 4;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let m = self.u32()?;
        if m != expected {
            self.pos -= 4;
            return Err(self.err(format!("magic {m:#010x}, expected {expected:#010x}")));
        }
        Ok(())
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let have = self.bytes.len() - self.pos;
        if have < len {
            return Err(self.err(format!("truncated payload: {have} bytes, need {len}")));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }
}

pub fn parse_images(path: &str, bytes: &[u8]) -> Result<IdxImages> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = r.payload(count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_labels(path: &str, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(LABELS_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.payload(count)?.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

/// Images scaled to `[0, 1]`, one-hot targets over 10 classes.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = parse_images(&images_path.display().to_string(), &read(images_path)?)?;
    let labels = parse_labels(&labels_path.display().to_string(), &read(labels_path)?)?;
    to_dataset(&images, &labels, &labels_path.display().to_string())
}

pub fn to_dataset(images: &IdxImages, labels: &[u8], labels_path: &str) -> Result<Dataset> {
    if labels.len() != images.count {
        return Err(HarnessError::Format {
            path: labels_path.to_string(),
            offset: 4,
            msg: format!("{} labels for {} images", labels.len(), images.count),
        });
    }
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(HarnessError::Format {
            path: labels_path.to_string(),
            offset: 8 + pos,
            msg: format!("label {} outside 0..=9", labels[pos]),
        });
    }
    let d = images.rows * images.cols;
    let x = DMatrix::from_fn(images.count, d, |i, j| images.pixels[i * d + j] as f64 / 255.0);
    let labels = labels.iter().map(|&l| l as usize).collect();
    Ok(Dataset::one_hot(x, labels, 10)?)
}
