//! Parameter sweeps of the bound and comparison against published
//! patch-trained accuracies.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::bound::{bound_envelope, image_bound, BoundBreakdown, BoundParams, EnvelopePoint, DEFAULT_MIN_PATCH};
use crate::error::{Error, Result};
use crate::fmt::sig;

/// Data sets with known (N, K, H, W, C).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Cifar10,
    Cifar100,
    Stl10,
    Imagenet1k,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Cifar10, Preset::Cifar100, Preset::Stl10, Preset::Imagenet1k];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Cifar10 => "cifar10",
            Preset::Cifar100 => "cifar100",
            Preset::Stl10 => "stl10",
            Preset::Imagenet1k => "imagenet1k",
        }
    }

    /// Full-image parameters with the default constants and stride 4.
    pub fn params(&self) -> BoundParams {
        match self {
            Preset::Cifar10 => BoundParams::full_image(50_000, 10, 32, 32, 3),
            Preset::Cifar100 => BoundParams::full_image(50_000, 100, 32, 32, 3),
            Preset::Stl10 => BoundParams::full_image(5_000, 10, 96, 96, 3),
            Preset::Imagenet1k => BoundParams::full_image(1_200_000, 1000, 224, 224, 3),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::UnknownDataset(s.to_string()))
    }
}

/// Parameter varied across a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Values are square patch sizes; `patch_grid` is ignored.
    PatchSize,
    NClasses,
    /// Sets both strides.
    Stride,
    NTrain,
    /// Square images: sets `H = W`.
    Resolution,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('-', "_").as_str() {
            "patch_size" | "patch" => SweepAxis::PatchSize,
            "n_classes" | "k" | "classes" => SweepAxis::NClasses,
            "stride" | "s" => SweepAxis::Stride,
            "n_train" | "n" => SweepAxis::NTrain,
            "resolution" | "res" => SweepAxis::Resolution,
            other => return Err(Error::InvalidParams(format!("unknown sweep axis {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: BoundParams,
    pub vary: SweepAxis,
    /// Strictly increasing.
    pub values: Vec<f64>,
    pub patch_grid: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub varied_value: f64,
    pub patch_size: u32,
    pub bound: BoundBreakdown,
}

fn as_count(value: f64, what: &str) -> std::result::Result<u64, String> {
    if value.fract() != 0.0 || !(value >= 1.0) || value > u64::MAX as f64 {
        return Err(format!("{what} must be a positive integer, got {value}"));
    }
    Ok(value as u64)
}

fn as_u32(value: f64, what: &str) -> std::result::Result<u32, String> {
    let v = as_count(value, what)?;
    u32::try_from(v).map_err(|_| format!("{what} {value} exceeds u32"))
}

fn substitute(base: &BoundParams, axis: SweepAxis, value: f64, patch: u32) -> std::result::Result<BoundParams, String> {
    let mut p = base.with_square_patch(patch);
    match axis {
        SweepAxis::PatchSize => {}
        SweepAxis::NClasses => p.n_classes = as_u32(value, "n_classes")?,
        SweepAxis::Stride => p = p.with_stride(as_u32(value, "stride")?),
        SweepAxis::NTrain => p.n_train = as_count(value, "n_train")?,
        SweepAxis::Resolution => {
            let r = as_u32(value, "resolution")?;
            p.height = r;
            p.width = r;
        }
    }
    Ok(p)
}

/// Evaluate the bound on every (value, patch size) pair, value-major.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(Error::Empty("sweep values".into()));
    }
    if let Some(w) = spec.values.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParams(format!(
            "sweep values must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    if spec.vary != SweepAxis::PatchSize && spec.patch_grid.is_empty() {
        return Err(Error::Empty("patch grid".into()));
    }
    let mut rows = Vec::new();
    for &value in &spec.values {
        let patches = match spec.vary {
            SweepAxis::PatchSize => {
                let size = as_u32(value, "patch_size").map_err(|reason| Error::InvalidSweepRow {
                    row: rows.len(),
                    value,
                    reason,
                })?;
                vec![size]
            }
            _ => spec.patch_grid.clone(),
        };
        for patch in patches {
            let row = rows.len();
            let params = substitute(&spec.base, spec.vary, value, patch)
                .map_err(|reason| Error::InvalidSweepRow { row, value, reason })?;
            let bound = image_bound(&params).map_err(|e| Error::InvalidSweepRow {
                row,
                value,
                reason: format!("patch {patch}: {e}"),
            })?;
            rows.push(SweepRow { varied_value: value, patch_size: patch, bound });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "varied_value,patch_size,t_eff,mesh_term,roughness,noise_term,total";

pub fn sweep_csv(rows: &[SweepRow], digits: usize) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let b = &r.bound;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            sig(r.varied_value, digits),
            r.patch_size,
            sig(b.t_eff, digits),
            sig(b.mesh_term, digits),
            sig(b.roughness, digits),
            sig(b.noise_term, digits),
            sig(b.total, digits)
        )
        .expect("writing to a String");
    }
    out
}

/// One published patch-trained result.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalRecord {
    pub dataset: &'static str,
    pub n_train: u64,
    pub n_classes: u32,
    pub height: u32,
    pub width: u32,
    pub patch_size: u32,
    /// Percent; not reported for every record.
    pub train_accuracy: Option<f64>,
    /// Percent.
    pub test_accuracy: f64,
}

const FIXTURE_ROWS: [(&str, u32, Option<f64>, f64); 19] = [
    ("cifar10", 32, Some(100.0), 93.5),
    ("cifar10", 24, Some(100.0), 94.6),
    ("cifar10", 16, Some(100.0), 93.3),
    ("cifar10", 8, Some(98.6), 84.2),
    ("cifar10", 4, Some(84.8), 66.7),
    ("cifar100", 32, Some(99.9), 66.8),
    ("cifar100", 24, Some(99.9), 75.0),
    ("cifar100", 16, Some(99.9), 70.5),
    ("cifar100", 8, Some(99.6), 56.7),
    ("cifar100", 4, Some(69.4), 40.2),
    ("stl10", 96, Some(100.0), 70.3),
    ("stl10", 64, Some(100.0), 81.7),
    ("stl10", 48, Some(100.0), 83.0),
    ("stl10", 32, Some(98.2), 79.2),
    ("stl10", 16, Some(78.8), 67.6),
    ("stl10", 8, Some(58.6), 52.5),
    ("stl10", 4, Some(62.5), 46.3),
    ("imagenet1k", 96, None, 72.4),
    ("imagenet1k", 224, None, 78.4),
];

/// Published average patch-wise accuracies (ResNet18 on CIFAR/STL,
/// ResNet50 top-1 on ImageNet-1k).
pub fn builtin_fixtures() -> Vec<EmpiricalRecord> {
    FIXTURE_ROWS
        .iter()
        .map(|&(dataset, patch_size, train_accuracy, test_accuracy)| {
            let p = dataset.parse::<Preset>().expect("fixture names are presets").params();
            EmpiricalRecord {
                dataset,
                n_train: p.n_train,
                n_classes: p.n_classes,
                height: p.height,
                width: p.width,
                patch_size,
                train_accuracy,
                test_accuracy,
            }
        })
        .collect()
}

pub fn fixtures_for(dataset: &str) -> Result<Vec<EmpiricalRecord>> {
    let preset: Preset = dataset.parse()?;
    Ok(builtin_fixtures().into_iter().filter(|r| r.dataset == preset.name()).collect())
}

pub fn fixtures_csv(records: &[EmpiricalRecord]) -> String {
    let mut out = String::from("dataset,n_train,n_classes,height,width,patch_size,train_accuracy,test_accuracy\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.dataset,
            r.n_train,
            r.n_classes,
            r.height,
            r.width,
            r.patch_size,
            r.train_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            r.test_accuracy
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompareRow {
    pub patch_size: u32,
    pub empirical_error: f64,
    pub predicted_envelope: f64,
}

/// Pair each record's test error with the envelope at its patch size,
/// sorted by patch size.
pub fn compare_report(
    records: &[EmpiricalRecord],
    params_at_full: &BoundParams,
    envelope: &[EnvelopePoint],
) -> Result<Vec<CompareRow>> {
    if records.is_empty() {
        return Err(Error::Empty("no empirical records to compare".into()));
    }
    if envelope.is_empty() {
        return Err(Error::Empty("bound envelope is empty".into()));
    }
    let p = params_at_full;
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        if (r.n_train, r.n_classes, r.height, r.width) != (p.n_train, p.n_classes, p.height, p.width) {
            return Err(Error::InvalidParams(format!(
                "record for {} (N={}, K={}, {}x{}) does not match bound parameters (N={}, K={}, {}x{})",
                r.dataset, r.n_train, r.n_classes, r.height, r.width, p.n_train, p.n_classes, p.height, p.width
            )));
        }
        let point = envelope.iter().find(|e| e.patch_size == r.patch_size).ok_or_else(|| {
            Error::InvalidParams(format!("envelope does not cover patch size {}", r.patch_size))
        })?;
        rows.push(CompareRow {
            patch_size: r.patch_size,
            empirical_error: 1.0 - r.test_accuracy / 100.0,
            predicted_envelope: point.envelope,
        });
    }
    rows.sort_by_key(|r| r.patch_size);
    Ok(rows)
}

/// Comparison for a named data set, using its preset with the given stride.
pub fn compare_dataset(dataset: &str, stride: u32) -> Result<Vec<CompareRow>> {
    let preset: Preset = dataset.parse()?;
    let params = preset.params().with_stride(stride);
    let envelope = bound_envelope(&params, params.height.min(params.width), DEFAULT_MIN_PATCH)?;
    compare_report(&fixtures_for(dataset)?, &params, &envelope)
}

pub const COMPARE_HEADER: &str = "patch_size,empirical_error,predicted_envelope";

pub fn compare_csv(rows: &[CompareRow], digits: usize) -> String {
    let mut out = String::from(COMPARE_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{}", r.patch_size, sig(r.empirical_error, digits), sig(r.predicted_envelope, digits))
            .expect("writing to a String");
    }
    out
}

pub const ENVELOPE_HEADER: &str = "patch_size,raw,envelope";

pub fn envelope_csv(points: &[EnvelopePoint], digits: usize) -> String {
    let mut out = String::from(ENVELOPE_HEADER);
    out.push('\n');
    for p in points {
        writeln!(out, "{},{},{}", p.patch_size, sig(p.raw, digits), sig(p.envelope, digits)).expect("writing to a String");
    }
    out
}
