//! PLG1: per-patch, per-class logits for a set of images.
//!
//! Layout (all integers `u32` little-endian):
//!
//! ```text
//! "PLG1" n_images K H W H_T W_T S_H S_W reserved(=0)      40 bytes
//! per image:
//!   image_id grid_rows grid_cols label+1 (0 = no label)   16 bytes
//!   grid_rows * grid_cols * K  f32 little-endian, row-major, class fastest
//! ```
//!
//! One patch geometry per file. Grid dimensions must agree with
//! [`GridSpec::dims`] for the header geometry.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::GridSpec;

pub const MAGIC: [u8; 4] = *b"PLG1";
pub const HEADER_LEN: usize = 40;
pub const IMAGE_HEADER_LEN: usize = 16;

/// Logits for every grid patch of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageLogits {
    pub image_id: u32,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub label: Option<u32>,
    /// `[grid_rows][grid_cols][K]`, flattened.
    pub logits: Vec<f32>,
}

impl ImageLogits {
    pub fn n_patches(&self) -> usize {
        self.grid_rows as usize * self.grid_cols as usize
    }

    pub fn n_classes(&self) -> usize {
        self.logits.len().checked_div(self.n_patches()).unwrap_or(0)
    }

    /// Logit vector of grid cell `(gy, gx)`.
    pub fn patch(&self, gy: u32, gx: u32, n_classes: usize) -> &[f32] {
        let start = (gy as usize * self.grid_cols as usize + gx as usize) * n_classes;
        &self.logits[start..start + n_classes]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogitSet {
    pub n_classes: u32,
    pub geometry: GridSpec,
    pub images: Vec<ImageLogits>,
}

impl LogitSet {
    pub fn new(n_classes: u32, geometry: GridSpec, images: Vec<ImageLogits>) -> Result<Self> {
        let set = LogitSet { n_classes, geometry, images };
        set.validate()?;
        Ok(set)
    }

    pub fn find(&self, image_id: u32) -> Option<&ImageLogits> {
        self.images.iter().find(|im| im.image_id == image_id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::Malformed("n_classes must be positive".into()));
        }
        self.geometry.validate()?;
        let (rows, cols) = self.geometry.dims();
        let k = self.n_classes as usize;
        let mut seen = HashSet::with_capacity(self.images.len());
        for im in &self.images {
            if !seen.insert(im.image_id) {
                return Err(Error::DuplicateImageId(im.image_id));
            }
            if (im.grid_rows, im.grid_cols) != (rows, cols) {
                return Err(Error::GeometryMismatch(format!(
                    "image {} declares a {}x{} grid, geometry implies {}x{}",
                    im.image_id, im.grid_rows, im.grid_cols, rows, cols
                )));
            }
            if im.logits.len() != im.n_patches() * k {
                return Err(Error::GeometryMismatch(format!(
                    "image {} carries {} logits, expected {}",
                    im.image_id,
                    im.logits.len(),
                    im.n_patches() * k
                )));
            }
            if let Some(label) = im.label {
                if label >= self.n_classes {
                    return Err(Error::ClassOutOfRange { class: label as usize, n_classes: k });
                }
            }
            if let Some(i) = im.logits.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("image {} logit #{}", im.image_id, i)));
            }
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .images
                .iter()
                .map(|im| IMAGE_HEADER_LEN + 4 * im.logits.len())
                .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut buf = Vec::with_capacity(self.encoded_len());
        let g = &self.geometry;
        buf.extend_from_slice(&MAGIC);
        let n_images = u32::try_from(self.images.len())
            .map_err(|_| Error::Malformed("too many images for a u32 count".into()))?;
        for v in [
            n_images,
            self.n_classes,
            g.height,
            g.width,
            g.patch_height,
            g.patch_width,
            g.stride_h,
            g.stride_w,
            0,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for im in &self.images {
            let label = im.label.map_or(0, |l| l + 1);
            for v in [im.image_id, im.grid_rows, im.grid_cols, label] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for x in &im.logits {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::BadMagic { expected: MAGIC, found: magic.to_vec() });
        }
        let n_images = r.u32("image count")?;
        let n_classes = r.u32("class count")?;
        let mut dims = [0u32; 6];
        for d in dims.iter_mut() {
            *d = r.u32("geometry")?;
        }
        if r.u32("reserved")? != 0 {
            return Err(Error::Malformed("reserved header field is not zero".into()));
        }
        let geometry = GridSpec {
            height: dims[0],
            width: dims[1],
            patch_height: dims[2],
            patch_width: dims[3],
            stride_h: dims[4],
            stride_w: dims[5],
        };
        geometry
            .validate()
            .map_err(|e| Error::GeometryMismatch(format!("header geometry invalid: {e}")))?;
        if n_classes == 0 {
            return Err(Error::Malformed("class count is zero".into()));
        }
        let (rows, cols) = geometry.dims();
        let k = n_classes as usize;
        let mut images = Vec::with_capacity((n_images as usize).min((bytes.len() - HEADER_LEN) / IMAGE_HEADER_LEN));
        for i in 0..n_images {
            let image_id = r.u32("image header")?;
            let grid_rows = r.u32("image header")?;
            let grid_cols = r.u32("image header")?;
            let label_raw = r.u32("image header")?;
            if (grid_rows, grid_cols) != (rows, cols) {
                return Err(Error::GeometryMismatch(format!(
                    "image #{i} (id {image_id}) declares a {grid_rows}x{grid_cols} grid, geometry implies {rows}x{cols}"
                )));
            }
            let count = (grid_rows as usize)
                .checked_mul(grid_cols as usize)
                .and_then(|n| n.checked_mul(k))
                .ok_or_else(|| Error::Malformed("logit count overflows".into()))?;
            let raw = r.take(count.saturating_mul(4), "logits")?;
            images.push((image_id, grid_rows, grid_cols, label_raw, raw));
        }
        if r.pos != bytes.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after last image",
                bytes.len() - r.pos
            )));
        }
        // decode only once the whole layout is known to be intact
        let images = images
            .into_iter()
            .map(|(image_id, grid_rows, grid_cols, label_raw, raw)| ImageLogits {
                image_id,
                grid_rows,
                grid_cols,
                label: label_raw.checked_sub(1),
                logits: raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
            })
            .collect();
        LogitSet::new(n_classes, geometry, images)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, only {} remain",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Write `set` to `writer`, returning the number of bytes written.
pub fn write_logits<W: Write>(set: &LogitSet, mut writer: W) -> Result<usize> {
    let bytes = set.to_bytes()?;
    writer.write_all(&bytes)?;
    writer.flush()?;
    Ok(bytes.len())
}

pub fn write_logits_file(set: &LogitSet, path: &Path) -> Result<usize> {
    let bytes = set.to_bytes()?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

pub fn read_logits(bytes: &[u8]) -> Result<LogitSet> {
    LogitSet::from_bytes(bytes)
}

pub fn read_logits_file(path: &Path) -> Result<LogitSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LogitSet::from_bytes(&bytes)
}
