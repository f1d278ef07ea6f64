//! Desk-scale patch training: a linear softmax classifier trained on random
//! patches that inherit their parent image's label, evaluated by averaging
//! logits over every stride-1 patch.
//!
//! Images come from a synthetic task where class `c` paints a rectangle
//! covering a fraction `rho` of the image with i.i.d. pixels of mean
//! `255 (c + 1) / (K + 1)` (sd 25, clipped); the rest is uniform noise
//! shared by all classes. Background patches therefore carry noisy labels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::aggregate::{argmax, patchwise_accuracy};
use crate::error::{Error, Result};
use crate::geometry::{extract_patch_into, grid_for, GridSpec, Image, Position};
use crate::logits::{ImageLogits, LogitSet};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub n_classes: u32,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    /// Fraction of the image area carrying the class texture, in (0, 1].
    pub rho: f64,
    /// Mean pixel value of each class's texture.
    pub class_means: Vec<f64>,
    /// Standard deviation of texture pixels; 0 gives constant textures.
    pub texture_sd: f64,
    pub seed: u64,
}

impl SyntheticTask {
    pub fn new(n_classes: u32, height: u32, width: u32, channels: u32, rho: f64, seed: u64) -> Self {
        let class_means = (0..n_classes)
            .map(|c| 255.0 * (c + 1) as f64 / (n_classes + 1) as f64)
            .collect();
        SyntheticTask { n_classes, height, width, channels, rho, class_means, texture_sd: 25.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidParams("synthetic task needs at least two classes".into()));
        }
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::InvalidParams("image dimensions must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidParams(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if self.class_means.len() != self.n_classes as usize {
            return Err(Error::InvalidParams("one texture mean per class required".into()));
        }
        if !(self.texture_sd >= 0.0 && self.texture_sd.is_finite()) {
            return Err(Error::InvalidParams("texture sd must be non-negative".into()));
        }
        let mut means = self.class_means.clone();
        means.sort_by(f64::total_cmp);
        if means.windows(2).any(|w| w[1] - w[0] < 20.0) {
            return Err(Error::InvalidParams("class texture means must differ by at least 20".into()));
        }
        Ok(())
    }

    /// Target area of the class-textured rectangle, in pixels.
    fn target_area(&self) -> f64 {
        self.rho * self.height as f64 * self.width as f64
    }
}

/// Axis-aligned class-textured rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub row: u32,
    pub col: u32,
    pub height: u32,
    pub width: u32,
}

impl Region {
    pub fn contains(&self, row: u32, col: u32) -> bool {
        row >= self.row && row < self.row + self.height && col >= self.col && col < self.col + self.width
    }

    pub fn area(&self) -> u32 {
        self.height * self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: u32,
    pub region: Region,
}

fn sample_region(task: &SyntheticTask, rng: &mut ChaCha8Rng) -> Region {
    let (h, w) = (task.height, task.width);
    let area = task.target_area();
    let min_h = ((area / w as f64).ceil() as u32).clamp(1, h);
    let max_h = (area.ceil() as u32).clamp(min_h, h);
    let rh = rng.random_range(min_h..=max_h);
    let rw = ((area / rh as f64).round() as u32).clamp(1, w);
    let row = rng.random_range(0..=h - rh);
    let col = rng.random_range(0..=w - rw);
    Region { row, col, height: rh, width: rw }
}

fn generate_image(task: &SyntheticTask, rng: &mut ChaCha8Rng) -> LabeledImage {
    let label = rng.random_range(0..task.n_classes);
    let region = sample_region(task, rng);
    let texture = Normal::new(task.class_means[label as usize], task.texture_sd).expect("finite sd");
    let mut image = Image::zeros(task.height, task.width, task.channels);
    for r in 0..task.height {
        for c in 0..task.width {
            let inside = region.contains(r, c);
            for ch in 0..task.channels {
                let v = if inside {
                    texture.sample(rng).round().clamp(0.0, 255.0) as u8
                } else {
                    rng.random::<u8>()
                };
                let idx = image.index(r, c, ch);
                image.data[idx] = v;
            }
        }
    }
    LabeledImage { image, label, region }
}

/// Train and test sets drawn from disjoint generator streams.
pub fn generate_dataset(task: &SyntheticTask, n_train: usize, n_test: usize) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    task.validate()?;
    let draw = |stream: u64, n: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
        rng.set_stream(stream);
        (0..n).map(|_| generate_image(task, &mut rng)).collect::<Vec<_>>()
    };
    Ok((draw(TRAIN_STREAM, n_train), draw(TEST_STREAM, n_test)))
}

/// Linear softmax classifier on flattened patches scaled to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ToyPatchModel {
    pub n_classes: u32,
    pub patch_height: u32,
    pub patch_width: u32,
    pub channels: u32,
    /// `n_classes x patch_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ToyPatchModel {
    pub fn zeros(n_classes: u32, patch_height: u32, patch_width: u32, channels: u32) -> Self {
        let d = (patch_height * patch_width * channels) as usize;
        ToyPatchModel {
            n_classes,
            patch_height,
            patch_width,
            channels,
            weights: vec![0.0; n_classes as usize * d],
            bias: vec![0.0; n_classes as usize],
        }
    }

    pub fn patch_dim(&self) -> usize {
        (self.patch_height * self.patch_width * self.channels) as usize
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// Logits for a patch of raw 8-bit samples.
    pub fn logits_into(&self, patch: &[u8], out: &mut [f64]) {
        let d = self.patch_dim();
        debug_assert_eq!(patch.len(), d);
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.weights[k * d..(k + 1) * d];
            let dot: f64 = row.iter().zip(patch).map(|(w, &x)| w * x as f64).sum();
            *o = self.bias[k] + dot / 255.0;
        }
    }

    pub fn logits(&self, patch: &[u8]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes as usize];
        self.logits_into(patch, &mut out);
        out
    }

    pub fn predict(&self, patch: &[u8]) -> usize {
        argmax(&self.logits(patch)).expect("at least one class")
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        if image.channels != self.channels {
            return Err(Error::InvalidParams(format!(
                "model expects {} channels, image has {}",
                self.channels, image.channels
            )));
        }
        if self.patch_height > image.height || self.patch_width > image.width {
            return Err(Error::PatchExceedsImage {
                patch_h: self.patch_height,
                patch_w: self.patch_width,
                height: image.height,
                width: image.width,
            });
        }
        Ok(())
    }

    pub const MAGIC: [u8; 4] = *b"TOY1";

    /// `"TOY1" K H_T W_T` (u32 LE) then weights row-major and bias as f64 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.weights.len() + self.bias.len()));
        out.extend_from_slice(&Self::MAGIC);
        for v in [self.n_classes, self.patch_height, self.patch_width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.weights.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Truncated(format!("checkpoint header needs 16 bytes, got {}", bytes.len())));
        }
        if bytes[..4] != Self::MAGIC {
            return Err(Error::BadMagic { expected: Self::MAGIC, found: bytes[..4].to_vec() });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let (k, ph, pw) = (word(1), word(2), word(3));
        if k == 0 || ph == 0 || pw == 0 {
            return Err(Error::Malformed("checkpoint dimensions must be positive".into()));
        }
        let payload = &bytes[16..];
        if !payload.len().is_multiple_of(8) {
            return Err(Error::Truncated("checkpoint payload is not a whole number of f64s".into()));
        }
        let n = payload.len() / 8;
        let per_class = n / k as usize;
        let area = (ph * pw) as usize;
        if !n.is_multiple_of(k as usize) || per_class < 1 || !(per_class - 1).is_multiple_of(area) || per_class - 1 == 0 {
            return Err(Error::Malformed(format!(
                "{n} parameters do not fit {k} classes of {ph}x{pw} patches"
            )));
        }
        let channels = ((per_class - 1) / area) as u32;
        let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let split = n - k as usize;
        let model = ToyPatchModel {
            n_classes: k,
            patch_height: ph,
            patch_width: pw,
            channels,
            weights: values[..split].to_vec(),
            bias: values[split..].to_vec(),
        };
        if !model.is_finite() {
            return Err(Error::NonFinite("checkpoint parameter".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub patch_height: u32,
    pub patch_width: u32,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn square(patch: u32, seed: u64) -> Self {
        TrainConfig { patch_height: patch, patch_width: patch, learning_rate: 0.05, steps: 20_000, batch_size: 64, seed }
    }
}

/// Softmax cross-entropy of `logits` against `label`, writing the softmax
/// into `probs`.
fn cross_entropy(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = (l - max).exp();
        z += *p;
    }
    for p in probs.iter_mut() {
        *p /= z;
    }
    z.ln() + max - logits[label]
}

/// Stepwise SGD over random patches with parent-image labels.
pub struct Trainer<'a> {
    config: TrainConfig,
    data: &'a [LabeledImage],
    model: ToyPatchModel,
    rng: ChaCha8Rng,
    step: usize,
    patch: Vec<u8>,
    grad_w: Vec<f64>,
    grad_b: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, n_classes: u32, data: &'a [LabeledImage]) -> Result<Self> {
        let first = data.first().ok_or_else(|| Error::Empty("training set".into()))?;
        if config.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be positive".into()));
        }
        if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::InvalidParams("learning rate must be non-negative and finite".into()));
        }
        let (h, w, c) = (first.image.height, first.image.width, first.image.channels);
        if config.patch_height == 0 || config.patch_width == 0 || config.patch_height > h || config.patch_width > w {
            return Err(Error::PatchExceedsImage { patch_h: config.patch_height, patch_w: config.patch_width, height: h, width: w });
        }
        if let Some(bad) = data.iter().find(|d| (d.image.height, d.image.width, d.image.channels) != (h, w, c)) {
            return Err(Error::InvalidParams(format!(
                "mixed image shapes: {}x{}x{} and {}x{}x{}",
                h, w, c, bad.image.height, bad.image.width, bad.image.channels
            )));
        }
        if let Some(bad) = data.iter().find(|d| d.label >= n_classes) {
            return Err(Error::ClassOutOfRange { class: bad.label as usize, n_classes: n_classes as usize });
        }
        let model = ToyPatchModel::zeros(n_classes, config.patch_height, config.patch_width, c);
        let k = n_classes as usize;
        Ok(Trainer {
            config,
            data,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            step: 0,
            patch: Vec::with_capacity(model.patch_dim()),
            grad_w: vec![0.0; model.weights.len()],
            grad_b: vec![0.0; k],
            logits: vec![0.0; k],
            probs: vec![0.0; k],
            model,
        })
    }

    pub fn model(&self) -> &ToyPatchModel {
        &self.model
    }

    pub fn into_model(self) -> ToyPatchModel {
        self.model
    }

    /// One SGD step on a fresh mini-batch; returns the batch's mean loss.
    pub fn step(&mut self) -> Result<f64> {
        let (ph, pw) = (self.config.patch_height, self.config.patch_width);
        let d = self.model.patch_dim();
        self.grad_w.iter_mut().for_each(|g| *g = 0.0);
        self.grad_b.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..self.config.batch_size {
            let item = &self.data[self.rng.random_range(0..self.data.len())];
            let pos = Position {
                row: self.rng.random_range(0..=item.image.height - ph),
                col: self.rng.random_range(0..=item.image.width - pw),
            };
            self.patch.clear();
            extract_patch_into(&item.image, pos, ph, pw, &mut self.patch)?;
            self.model.logits_into(&self.patch, &mut self.logits);
            loss += cross_entropy(&self.logits, item.label as usize, &mut self.probs);
            for (k, &p) in self.probs.iter().enumerate() {
                let delta = p - if k == item.label as usize { 1.0 } else { 0.0 };
                self.grad_b[k] += delta;
                let row = &mut self.grad_w[k * d..(k + 1) * d];
                for (g, &x) in row.iter_mut().zip(&self.patch) {
                    *g += delta * x as f64 / 255.0;
                }
            }
        }
        let b = self.config.batch_size as f64;
        loss /= b;
        self.step += 1;
        if !loss.is_finite() {
            return Err(Error::Diverged { step: self.step, loss });
        }
        let lr = self.config.learning_rate / b;
        for (w, g) in self.model.weights.iter_mut().zip(&self.grad_w) {
            *w -= lr * g;
        }
        for (w, g) in self.model.bias.iter_mut().zip(&self.grad_b) {
            *w -= lr * g;
        }
        if !self.model.is_finite() {
            return Err(Error::Diverged { step: self.step, loss });
        }
        Ok(loss)
    }
}

pub struct TrainOutcome {
    pub model: ToyPatchModel,
    /// Mean mini-batch loss after each step, 1-based.
    pub losses: Vec<f64>,
}

pub fn train(config: TrainConfig, n_classes: u32, data: &[LabeledImage]) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, n_classes, data)?;
    let mut losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        losses.push(trainer.step()?);
    }
    Ok(TrainOutcome { model: trainer.into_model(), losses })
}

pub fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, crate::fmt::sig(*l, 9)).expect("writing to a String");
    }
    out
}

/// A fixed set of labelled patches, for held-out loss and patch accuracy.
pub struct PatchBatch {
    pub patches: Vec<Vec<u8>>,
    pub labels: Vec<u32>,
}

pub fn sample_patches(data: &[LabeledImage], patch_height: u32, patch_width: u32, count: usize, seed: u64) -> Result<PatchBatch> {
    if data.is_empty() {
        return Err(Error::Empty("image set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let item = &data[rng.random_range(0..data.len())];
        if patch_height > item.image.height || patch_width > item.image.width {
            return Err(Error::PatchExceedsImage { patch_h: patch_height, patch_w: patch_width, height: item.image.height, width: item.image.width });
        }
        let pos = Position {
            row: rng.random_range(0..=item.image.height - patch_height),
            col: rng.random_range(0..=item.image.width - patch_width),
        };
        let mut p = Vec::new();
        extract_patch_into(&item.image, pos, patch_height, patch_width, &mut p)?;
        patches.push(p);
        labels.push(item.label);
    }
    Ok(PatchBatch { patches, labels })
}

impl PatchBatch {
    pub fn mean_loss(&self, model: &ToyPatchModel) -> f64 {
        let mut probs = vec![0.0; model.n_classes as usize];
        let total: f64 = self
            .patches
            .iter()
            .zip(&self.labels)
            .map(|(p, &l)| cross_entropy(&model.logits(p), l as usize, &mut probs))
            .sum();
        total / self.patches.len() as f64
    }

    /// Percentage of patches whose prediction equals the parent label.
    pub fn accuracy(&self, model: &ToyPatchModel) -> f64 {
        let hits = self.patches.iter().zip(&self.labels).filter(|(p, &l)| model.predict(p) == l as usize).count();
        100.0 * hits as f64 / self.patches.len() as f64
    }
}

/// Logits of every grid patch of every image, as a PLG1 set. Image ids are
/// the indices into `images`.
pub fn export_logits(model: &ToyPatchModel, images: &[LabeledImage], stride_h: u32, stride_w: u32) -> Result<LogitSet> {
    let first = images.first().ok_or_else(|| Error::Empty("image set".into()))?;
    let geometry = GridSpec::new(first.image.height, first.image.width, model.patch_height, model.patch_width, stride_h, stride_w)?;
    let grid = grid_for(geometry);
    let k = model.n_classes as usize;
    let mut patch = Vec::with_capacity(model.patch_dim());
    let mut scratch = vec![0.0; k];
    let mut out = Vec::with_capacity(images.len());
    for (id, item) in images.iter().enumerate() {
        model.check_image(&item.image)?;
        if (item.image.height, item.image.width) != (geometry.height, geometry.width) {
            return Err(Error::GeometryMismatch(format!("image {id} has a different size from image 0")));
        }
        let mut logits = Vec::with_capacity(grid.positions.len() * k);
        for &pos in &grid.positions {
            patch.clear();
            extract_patch_into(&item.image, pos, model.patch_height, model.patch_width, &mut patch)?;
            model.logits_into(&patch, &mut scratch);
            logits.extend(scratch.iter().map(|&v| v as f32));
        }
        out.push(ImageLogits {
            image_id: id as u32,
            grid_rows: grid.rows,
            grid_cols: grid.cols,
            label: Some(item.label),
            logits,
        });
    }
    LogitSet::new(model.n_classes, geometry, out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Percent correct from averaged stride-1 patch logits.
    pub patch_avg_accuracy: f64,
    /// Percent correct from one random patch per image.
    pub single_patch_accuracy: f64,
}

pub fn evaluate(model: &ToyPatchModel, test: &[LabeledImage], seed: u64) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let patch_avg_accuracy = patchwise_accuracy(&export_logits(model, test, 1, 1)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patch = Vec::with_capacity(model.patch_dim());
    let mut hits = 0usize;
    for item in test {
        let pos = Position {
            row: rng.random_range(0..=item.image.height - model.patch_height),
            col: rng.random_range(0..=item.image.width - model.patch_width),
        };
        patch.clear();
        extract_patch_into(&item.image, pos, model.patch_height, model.patch_width, &mut patch)?;
        if model.predict(&patch) == item.label as usize {
            hits += 1;
        }
    }
    Ok(Evaluation {
        patch_avg_accuracy,
        single_patch_accuracy: 100.0 * hits as f64 / test.len() as f64,
    })
}

/// Mean heat-map value over patch-center cells inside and outside `region`.
pub fn region_contrast(map: &crate::aggregate::HeatMap, region: &Region) -> (f64, f64) {
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for r in 0..map.height {
        for c in 0..map.width {
            if !map.covered(r, c) {
                continue;
            }
            if region.contains(r, c) {
                inside += map.get(r, c);
                n_in += 1;
            } else {
                outside += map.get(r, c);
                n_out += 1;
            }
        }
    }
    (inside / n_in.max(1) as f64, outside / n_out.max(1) as f64)
}
