//! A priori generalization bound for classifiers trained on image patches.
//!
//! The bound combines three modelled effects of training on `H_T x W_T`
//! patches instead of whole images:
//!
//! * a mesh-norm (covering) term `c6 * (1 / (N * T_eff))^(alpha / D_T)` where
//!   `D_T = H_T * W_T * C` is the patch dimension,
//! * a roughness factor `m1(theta^(1 / D_T))` with `theta = H_T W_T / (H W)`,
//! * a label-noise term `c4 * m2(K) * m3(theta)`,
//!
//! and the image-level total divides their combination by `sqrt(T_eff)`:
//!
//! ```text
//! total = (mesh * roughness + noise) / sqrt(T_eff)
//! ```
//!
//! `T_eff` is evaluated analytically (no flooring), so it is real-valued
//! whenever the stride does not divide the free extent evenly.

use crate::error::{Error, Result};

/// Form of the roughness model `m1`, monotonically decreasing on (0, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RoughnessModel {
    /// `m1(theta) = 1 / theta`
    #[default]
    Reciprocal,
}

/// Form of the class-count model `m2`, monotonically increasing in K.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ClassCountModel {
    /// `m2(K) = sqrt(K)`
    #[default]
    SquareRoot,
}

/// Form of the label-noise model `m3`, decreasing on (0, 1] with `m3(1) = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelNoiseModel {
    /// `m3(theta) = -ln(theta)`
    #[default]
    NegativeLog,
}

/// The three model functions plugged into the bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NoiseModelChoice {
    pub m1: RoughnessModel,
    pub m2: ClassCountModel,
    pub m3: LabelNoiseModel,
}

impl NoiseModelChoice {
    pub fn m1(&self, theta: f64) -> f64 {
        match self.m1 {
            RoughnessModel::Reciprocal => 1.0 / theta,
        }
    }

    pub fn m2(&self, k: f64) -> f64 {
        match self.m2 {
            ClassCountModel::SquareRoot => k.sqrt(),
        }
    }

    pub fn m3(&self, theta: f64) -> f64 {
        match self.m3 {
            LabelNoiseModel::NegativeLog => -theta.ln(),
        }
    }
}

/// Data set and patch configuration for one evaluation of the bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub n_train: u64,
    pub n_classes: u32,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub patch_height: u32,
    pub patch_width: u32,
    pub stride_h: u32,
    pub stride_w: u32,
    /// Divisor of the patch dimension in the mesh exponent.
    pub alpha: f64,
    /// Label-noise coefficient.
    pub c4: f64,
    /// Mesh coefficient (absorbs the norm-dependent constants).
    pub c6: f64,
}

pub const DEFAULT_ALPHA: f64 = 3.0;
pub const DEFAULT_C4: f64 = 0.5;
pub const DEFAULT_C6: f64 = 1.0;
pub const DEFAULT_STRIDE: u32 = 4;

impl BoundParams {
    /// Full-image configuration with the default constants and stride 4.
    pub fn full_image(n_train: u64, n_classes: u32, height: u32, width: u32, channels: u32) -> Self {
        BoundParams {
            n_train,
            n_classes,
            height,
            width,
            channels,
            patch_height: height,
            patch_width: width,
            stride_h: DEFAULT_STRIDE,
            stride_w: DEFAULT_STRIDE,
            alpha: DEFAULT_ALPHA,
            c4: DEFAULT_C4,
            c6: DEFAULT_C6,
        }
    }

    pub fn with_patch(mut self, patch_height: u32, patch_width: u32) -> Self {
        self.patch_height = patch_height;
        self.patch_width = patch_width;
        self
    }

    pub fn with_square_patch(self, size: u32) -> Self {
        self.with_patch(size, size)
    }

    pub fn with_stride(mut self, stride: u32) -> Self {
        self.stride_h = stride;
        self.stride_w = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if self.n_train == 0 {
            return fail("n_train must be positive".into());
        }
        if self.n_classes == 0 {
            return fail("n_classes must be positive".into());
        }
        if self.height == 0 || self.width == 0 {
            return fail("image height and width must be positive".into());
        }
        if self.channels == 0 {
            return fail("channels must be positive".into());
        }
        if self.patch_height == 0 || self.patch_width == 0 {
            return fail("patch height and width must be positive".into());
        }
        if self.patch_height > self.height || self.patch_width > self.width {
            return fail(format!(
                "patch exceeds image: {}x{} patch on {}x{} image",
                self.patch_height, self.patch_width, self.height, self.width
            ));
        }
        if self.stride_h == 0 || self.stride_w == 0 {
            return fail("strides must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if !(self.c4 >= 0.0 && self.c4.is_finite()) {
            return fail(format!("c4 must be non-negative and finite, got {}", self.c4));
        }
        if !(self.c6 >= 0.0 && self.c6.is_finite()) {
            return fail(format!("c6 must be non-negative and finite, got {}", self.c6));
        }
        Ok(())
    }

    /// Patch dimension `H_T * W_T * C`.
    pub fn patch_dim(&self) -> f64 {
        self.patch_height as f64 * self.patch_width as f64 * self.channels as f64
    }

    fn is_full_size(&self) -> bool {
        self.patch_height == self.height && self.patch_width == self.width
    }

    /// `ln(H W / (H_T W_T))`, zero exactly at full size.
    fn log_inverse_area_ratio(&self) -> f64 {
        let image = self.height as f64 * self.width as f64;
        let patch = self.patch_height as f64 * self.patch_width as f64;
        ((image - patch) / patch).ln_1p()
    }
}

/// Evaluated terms of the image-level bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundBreakdown {
    pub t_eff: f64,
    pub d_t: f64,
    pub mesh_term: f64,
    pub roughness: f64,
    pub noise_term: f64,
    pub total: f64,
}

/// Effective number of distinct patches per image,
/// `((H - H_T) / S_H + 1) * ((W - W_T) / S_W + 1)`.
pub fn effective_patches(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(effective_patches_unchecked(params))
}

fn effective_patches_unchecked(p: &BoundParams) -> f64 {
    let rows = (p.height - p.patch_height) as f64 / p.stride_h as f64 + 1.0;
    let cols = (p.width - p.patch_width) as f64 / p.stride_w as f64 + 1.0;
    rows * cols
}

pub fn mesh_norm_bound(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(mesh_unchecked(params, effective_patches_unchecked(params)))
}

fn mesh_unchecked(p: &BoundParams, t_eff: f64) -> f64 {
    let samples = p.n_train as f64 * t_eff;
    p.c6 * (-(p.alpha / p.patch_dim()) * samples.ln()).exp()
}

pub fn roughness_factor(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(roughness_unchecked(params, &NoiseModelChoice::default()))
}

fn roughness_unchecked(p: &BoundParams, models: &NoiseModelChoice) -> f64 {
    if p.is_full_size() {
        return 1.0;
    }
    match models.m1 {
        // 1 / theta^(1/D) = exp(ln(HW / H_T W_T) / D), avoiding the round trip through theta
        RoughnessModel::Reciprocal => (p.log_inverse_area_ratio() / p.patch_dim()).exp(),
    }
}

pub fn label_noise_bound(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(noise_unchecked(params, &NoiseModelChoice::default()))
}

fn noise_unchecked(p: &BoundParams, models: &NoiseModelChoice) -> f64 {
    if p.is_full_size() {
        return 0.0;
    }
    let m3 = match models.m3 {
        LabelNoiseModel::NegativeLog => p.log_inverse_area_ratio(),
    };
    p.c4 * models.m2(p.n_classes as f64) * m3
}

/// Evaluate every term of the bound with the default model functions.
pub fn image_bound(params: &BoundParams) -> Result<BoundBreakdown> {
    image_bound_with(params, &NoiseModelChoice::default())
}

pub fn image_bound_with(params: &BoundParams, models: &NoiseModelChoice) -> Result<BoundBreakdown> {
    params.validate()?;
    let t_eff = effective_patches_unchecked(params);
    let mesh_term = mesh_unchecked(params, t_eff);
    let roughness = roughness_unchecked(params, models);
    let noise_term = noise_unchecked(params, models);
    let total = (mesh_term * roughness + noise_term) / t_eff.sqrt();
    Ok(BoundBreakdown {
        t_eff,
        d_t: params.patch_dim(),
        mesh_term,
        roughness,
        noise_term,
        total,
    })
}

/// One point of the running-minimum curve over square patch sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopePoint {
    pub patch_size: u32,
    /// Bound at exactly this patch size.
    pub raw: f64,
    /// Minimum of the bound over all square sizes in `[min_patch, patch_size]`.
    pub envelope: f64,
}

/// Running minimum of the bound over square patch sizes `min_patch..=max_patch`.
///
/// The patch size stored in `params_at_full` is ignored; everything else
/// (data set, stride, constants) is held fixed.
pub fn bound_envelope(
    params_at_full: &BoundParams,
    max_patch: u32,
    min_patch: u32,
) -> Result<Vec<EnvelopePoint>> {
    let p = params_at_full;
    if min_patch == 0 {
        return Err(Error::InvalidParams("min_patch must be at least 1".into()));
    }
    if max_patch > p.height.min(p.width) {
        return Err(Error::InvalidParams(format!(
            "patch exceeds image: max_patch {} on {}x{} image",
            max_patch, p.height, p.width
        )));
    }
    if min_patch > max_patch {
        return Err(Error::EmptyRange { min: min_patch, max: max_patch });
    }
    let mut out = Vec::with_capacity((max_patch - min_patch + 1) as usize);
    let mut best = f64::INFINITY;
    for size in min_patch..=max_patch {
        let raw = image_bound(&p.with_square_patch(size))?.total;
        best = best.min(raw);
        out.push(EnvelopePoint { patch_size: size, raw, envelope: best });
    }
    Ok(out)
}

pub const DEFAULT_MIN_PATCH: u32 = 3;
