//! Patch-logit averaging, average patch-wise accuracy, and class heat maps.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{center_pixel, GridSpec};
use crate::logits::{ImageLogits, LogitSet};

/// Correctly rounded sum of `values` (Shewchuk's exact partials).
///
/// The result is the f64 nearest to the exact real sum, so it does not
/// depend on the order of the inputs. Inputs must be finite and the exact
/// sum must fit in an f64.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for v in values {
        let mut x = v;
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // round-half-even across the remaining partials
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Smallest index attaining the maximum.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Image-level prediction from averaged patch logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub image_id: u32,
    pub mean_logits: Vec<f64>,
    pub predicted: usize,
}

/// Mean logit per class over every grid patch, then argmax with the lowest
/// index winning ties.
pub fn average_predict(image: &ImageLogits, n_classes: usize) -> Result<Prediction> {
    let n = image.n_patches();
    if n == 0 || n_classes == 0 {
        return Err(Error::EmptyGrid(image.image_id));
    }
    if image.logits.len() != n * n_classes {
        return Err(Error::GeometryMismatch(format!(
            "image {} has {} logits for {} patches of {} classes",
            image.image_id,
            image.logits.len(),
            n,
            n_classes
        )));
    }
    let mean_logits: Vec<f64> = (0..n_classes)
        .map(|k| {
            let column = image.logits[k..].iter().step_by(n_classes).map(|&v| v as f64);
            exact_sum(column) / n as f64
        })
        .collect();
    let predicted = argmax(&mean_logits).expect("n_classes > 0");
    Ok(Prediction { image_id: image.image_id, mean_logits, predicted })
}

pub fn predict_all(set: &LogitSet) -> Result<Vec<Prediction>> {
    set.images
        .iter()
        .map(|im| average_predict(im, set.n_classes as usize))
        .collect()
}

/// Percentage of images whose averaged prediction matches the label.
pub fn patchwise_accuracy(set: &LogitSet) -> Result<f64> {
    if set.images.is_empty() {
        return Err(Error::Empty("logit set has no images".into()));
    }
    let mut correct = 0usize;
    for im in &set.images {
        let label = im.label.ok_or(Error::MissingLabel(im.image_id))?;
        if average_predict(im, set.n_classes as usize)?.predicted == label as usize {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / set.images.len() as f64)
}

/// `image_id,label,predicted,correct`; unlabeled images leave `label` and
/// `correct` empty.
pub fn predictions_csv(set: &LogitSet) -> Result<String> {
    let mut out = String::from("image_id,label,predicted,correct\n");
    for (im, pred) in set.images.iter().zip(predict_all(set)?) {
        match im.label {
            Some(l) => writeln!(
                out,
                "{},{},{},{}",
                im.image_id,
                l,
                pred.predicted,
                u8::from(l as usize == pred.predicted)
            ),
            None => writeln!(out, "{},,{},", im.image_id, pred.predicted),
        }
        .expect("writing to a String");
    }
    Ok(out)
}

/// One class's logits laid out over the image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatMap {
    pub class: usize,
    pub height: u32,
    pub width: u32,
    /// Row-major, one cell per pixel.
    pub values: Vec<f64>,
    pub geometry: GridSpec,
}

impl HeatMap {
    pub fn get(&self, row: u32, col: u32) -> f64 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    /// Whether a patch center lands on this pixel.
    pub fn covered(&self, row: u32, col: u32) -> bool {
        let g = &self.geometry;
        let (rows, cols) = g.dims();
        let (oy, ox) = ((g.patch_height - 1) / 2, (g.patch_width - 1) / 2);
        let on_axis = |p: u32, off: u32, stride: u32, n: u32| {
            p >= off && (p - off).is_multiple_of(stride) && (p - off) / stride < n
        };
        on_axis(row, oy, g.stride_h, rows) && on_axis(col, ox, g.stride_w, cols)
    }
}

/// Write each patch's class-`class` logit at the patch's center pixel; every
/// other cell stays zero.
pub fn build_heatmap(
    geometry: &GridSpec,
    n_classes: usize,
    image: &ImageLogits,
    class: usize,
) -> Result<HeatMap> {
    if class >= n_classes {
        return Err(Error::ClassOutOfRange { class, n_classes });
    }
    let (rows, cols) = geometry.dims();
    if (image.grid_rows, image.grid_cols) != (rows, cols) || image.logits.len() != image.n_patches() * n_classes {
        return Err(Error::GeometryMismatch(format!(
            "image {} grid {}x{} does not match geometry {}x{}",
            image.image_id, image.grid_rows, image.grid_cols, rows, cols
        )));
    }
    let (h, w) = (geometry.height, geometry.width);
    let mut values = vec![0.0; h as usize * w as usize];
    for gy in 0..rows {
        for gx in 0..cols {
            let pos = geometry.position(gy, gx);
            let (r, c) = center_pixel(pos, geometry.patch_height, geometry.patch_width);
            values[r as usize * w as usize + c as usize] = image.patch(gy, gx, n_classes)[class] as f64;
        }
    }
    Ok(HeatMap { class, height: h, width: w, values, geometry: *geometry })
}

impl LogitSet {
    pub fn heatmap(&self, image_id: u32, class: usize) -> Result<HeatMap> {
        let image = self
            .find(image_id)
            .ok_or_else(|| Error::Malformed(format!("no image with id {image_id}")))?;
        build_heatmap(&self.geometry, self.n_classes as usize, image, class)
    }
}

/// Affine min-max mapping of the map onto 0..=255, halves rounded away from
/// zero; a constant map becomes mid-gray 128.
pub fn normalize_to_gray(map: &HeatMap) -> Vec<u8> {
    let (min, max) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(max > min) {
        return vec![128; map.values.len()];
    }
    let scale = 255.0 / (max - min);
    map.values
        .iter()
        .map(|&v| ((v - min) * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Binary PGM (P5, maxval 255).
pub fn encode_pgm(width: u32, height: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn render_heatmap<W: Write>(map: &HeatMap, mut writer: W) -> Result<()> {
    writer.write_all(&encode_pgm(map.width, map.height, &normalize_to_gray(map)))?;
    Ok(())
}

pub fn render_heatmap_file(map: &HeatMap, path: &Path) -> Result<()> {
    let bytes = encode_pgm(map.width, map.height, &normalize_to_gray(map));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
