//! Physical patch enumeration over an image.
//!
//! Unlike the analytic effective-patch count used by the bound, the
//! enumerated grid floors the stride division: a partial final step is
//! dropped, and no padding is applied.

use crate::error::{Error, Result};

/// Row-major, channel-last 8-bit image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(height: u32, width: u32, channels: u32, data: Vec<u8>) -> Result<Self> {
        let expected = height as usize * width as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::Malformed(format!(
                "{}x{}x{} image needs {} samples, got {}",
                height,
                width,
                channels,
                expected,
                data.len()
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn zeros(height: u32, width: u32, channels: u32) -> Self {
        let n = height as usize * width as usize * channels as usize;
        Image { height, width, channels, data: vec![0; n] }
    }

    #[inline]
    pub fn index(&self, row: u32, col: u32, channel: u32) -> usize {
        (row as usize * self.width as usize + col as usize) * self.channels as usize
            + channel as usize
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32, channel: u32) -> u8 {
        self.data[self.index(row, col, channel)]
    }
}

/// Top-left corner of a patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub row: u32,
    pub col: u32,
}

/// Patch geometry shared by enumeration, interchange files, and heat maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub height: u32,
    pub width: u32,
    pub patch_height: u32,
    pub patch_width: u32,
    pub stride_h: u32,
    pub stride_w: u32,
}

impl GridSpec {
    pub fn new(height: u32, width: u32, patch_height: u32, patch_width: u32, stride_h: u32, stride_w: u32) -> Result<Self> {
        let spec = GridSpec { height, width, patch_height, patch_width, stride_h, stride_w };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidParams("image dimensions must be positive".into()));
        }
        if self.patch_height == 0 || self.patch_width == 0 {
            return Err(Error::InvalidParams("patch dimensions must be positive".into()));
        }
        if self.stride_h == 0 || self.stride_w == 0 {
            return Err(Error::InvalidParams("strides must be positive".into()));
        }
        if self.patch_height > self.height || self.patch_width > self.width {
            return Err(Error::PatchExceedsImage {
                patch_h: self.patch_height,
                patch_w: self.patch_width,
                height: self.height,
                width: self.width,
            });
        }
        Ok(())
    }

    /// Grid rows and columns, `floor((H - H_T) / S_H) + 1` by `floor((W - W_T) / S_W) + 1`.
    pub fn dims(&self) -> (u32, u32) {
        (
            (self.height - self.patch_height) / self.stride_h + 1,
            (self.width - self.patch_width) / self.stride_w + 1,
        )
    }

    pub fn count(&self) -> usize {
        let (r, c) = self.dims();
        r as usize * c as usize
    }

    /// Top-left corner of grid cell `(gy, gx)`.
    #[inline]
    pub fn position(&self, gy: u32, gx: u32) -> Position {
        Position { row: gy * self.stride_h, col: gx * self.stride_w }
    }
}

/// Enumerated patch positions, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub spec: GridSpec,
    pub rows: u32,
    pub cols: u32,
    pub positions: Vec<Position>,
}

pub fn enumerate_grid(
    height: u32,
    width: u32,
    patch_height: u32,
    patch_width: u32,
    stride_h: u32,
    stride_w: u32,
) -> Result<PatchGrid> {
    let spec = GridSpec::new(height, width, patch_height, patch_width, stride_h, stride_w)?;
    Ok(grid_for(spec))
}

pub fn grid_for(spec: GridSpec) -> PatchGrid {
    let (rows, cols) = spec.dims();
    let positions = (0..rows)
        .flat_map(|gy| (0..cols).map(move |gx| spec.position(gy, gx)))
        .collect();
    PatchGrid { spec, rows, cols, positions }
}

/// Pixel a patch is anchored to in a heat map: offset `floor((H_T - 1) / 2)`
/// down and `floor((W_T - 1) / 2)` right of the top-left corner.
pub fn center_pixel(position: Position, patch_height: u32, patch_width: u32) -> (u32, u32) {
    (
        position.row + patch_height.saturating_sub(1) / 2,
        position.col + patch_width.saturating_sub(1) / 2,
    )
}

pub fn extract_patch(image: &Image, position: Position, patch_height: u32, patch_width: u32) -> Result<Image> {
    let mut out = Vec::with_capacity(patch_height as usize * patch_width as usize * image.channels as usize);
    extract_patch_into(image, position, patch_height, patch_width, &mut out)?;
    Ok(Image { height: patch_height, width: patch_width, channels: image.channels, data: out })
}

/// Append the patch's samples (row-major, channel-last) to `out`.
pub fn extract_patch_into(
    image: &Image,
    position: Position,
    patch_height: u32,
    patch_width: u32,
    out: &mut Vec<u8>,
) -> Result<()> {
    let in_bounds = patch_height >= 1
        && patch_width >= 1
        && position.row as u64 + patch_height as u64 <= image.height as u64
        && position.col as u64 + patch_width as u64 <= image.width as u64;
    if !in_bounds {
        return Err(Error::OutOfBounds {
            row: position.row,
            col: position.col,
            patch_h: patch_height,
            patch_w: patch_width,
            height: image.height,
            width: image.width,
        });
    }
    let run = patch_width as usize * image.channels as usize;
    for r in position.row..position.row + patch_height {
        let start = image.index(r, position.col, 0);
        out.extend_from_slice(&image.data[start..start + run]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_count(h: u32, w: u32, ph: u32, pw: u32, sh: u32, sw: u32) -> usize {
        let mut n = 0;
        let mut r = 0;
        while r + ph <= h {
            let mut c = 0;
            while c + pw <= w {
                n += 1;
                c += sw;
            }
            r += sh;
        }
        n
    }

    #[test]
    fn grid_examples() {
        assert_eq!(enumerate_grid(32, 32, 8, 8, 1, 1).unwrap().positions.len(), 625);
        assert_eq!(enumerate_grid(32, 32, 8, 8, 4, 4).unwrap().positions.len(), 49);
        for s in 1..5 {
            let g = enumerate_grid(8, 8, 8, 8, s, s).unwrap();
            assert_eq!(g.positions, vec![Position { row: 0, col: 0 }]);
        }
        assert_eq!(brute_count(32, 32, 8, 8, 4, 4), 49);
    }

    #[test]
    fn grid_positions_in_bounds_and_ordered() {
        let g = enumerate_grid(17, 23, 5, 4, 3, 2).unwrap();
        assert_eq!(g.positions.len(), brute_count(17, 23, 5, 4, 3, 2));
        for p in &g.positions {
            assert!(p.row + 5 <= 17 && p.col + 4 <= 23);
        }
        assert!(g.positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_rejects_oversized_patch() {
        assert!(matches!(enumerate_grid(8, 8, 9, 1, 1, 1), Err(Error::PatchExceedsImage { .. })));
        assert!(enumerate_grid(8, 8, 2, 2, 0, 1).is_err());
    }

    #[test]
    fn center_examples() {
        assert_eq!(center_pixel(Position { row: 0, col: 0 }, 1, 1), (0, 0));
        assert_eq!(center_pixel(Position { row: 0, col: 0 }, 8, 8), (3, 3));
        assert_eq!(center_pixel(Position { row: 10, col: 20 }, 3, 3), (11, 21));
    }

    fn ramp() -> Image {
        Image::new(3, 3, 1, (0..9).collect()).unwrap()
    }

    #[test]
    fn extract_examples() {
        let img = ramp();
        assert_eq!(extract_patch(&img, Position { row: 0, col: 0 }, 3, 3).unwrap(), img);
        assert_eq!(extract_patch(&img, Position { row: 2, col: 1 }, 1, 1).unwrap().data, vec![7]);
        assert_eq!(extract_patch(&img, Position { row: 0, col: 0 }, 2, 2).unwrap().data, vec![0, 1, 3, 4]);
        assert!(matches!(
            extract_patch(&img, Position { row: 2, col: 2 }, 2, 1),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn extract_multichannel() {
        let img = Image::new(2, 2, 2, (0..8).collect()).unwrap();
        let p = extract_patch(&img, Position { row: 1, col: 0 }, 1, 2).unwrap();
        assert_eq!(p.data, vec![4, 5, 6, 7]);
        assert_eq!(p.channels, 2);
    }

    #[test]
    fn stride_one_patches_cover_each_pixel_by_count() {
        // Every pixel is visited once per stride-1 patch covering it.
        let (h, w, ph, pw) = (6u32, 5u32, 3u32, 2u32);
        let img = Image::new(h, w, 1, (0..(h * w) as u8).collect()).unwrap();
        let grid = enumerate_grid(h, w, ph, pw, 1, 1).unwrap();
        let mut visits = vec![0usize; (h * w) as usize];
        for pos in &grid.positions {
            for v in extract_patch(&img, *pos, ph, pw).unwrap().data {
                visits[v as usize] += 1;
            }
        }
        for r in 0..h {
            for c in 0..w {
                let rows = (r.saturating_sub(ph - 1)..=r.min(h - ph)).count();
                let cols = (c.saturating_sub(pw - 1)..=c.min(w - pw)).count();
                assert_eq!(visits[(r * w + c) as usize], rows * cols);
            }
        }
    }
}
