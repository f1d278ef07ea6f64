//! Generalization bounds for image classifiers trained on patches, and the
//! patch machinery around them: grid enumeration, a binary logit
//! interchange format, logit averaging, class heat maps, Monte-Carlo
//! mesh-norm experiments and a small desk-scale patch trainer.

pub mod aggregate;
pub mod bound;
pub mod cli;
pub mod error;
pub mod fmt;
pub mod geometry;
pub mod logits;
pub mod mesh;
pub mod sweep;
pub mod toy;

pub use aggregate::{average_predict, build_heatmap, patchwise_accuracy, render_heatmap, HeatMap, Prediction};
pub use bound::{
    bound_envelope, effective_patches, image_bound, label_noise_bound, mesh_norm_bound, roughness_factor,
    BoundBreakdown, BoundParams, EnvelopePoint, NoiseModelChoice,
};
pub use error::{Error, Result};
pub use geometry::{center_pixel, enumerate_grid, extract_patch, GridSpec, Image, PatchGrid, Position};
pub use logits::{read_logits, write_logits, ImageLogits, LogitSet};
pub use mesh::{estimate_mesh_norm, fit_scaling_exponent, MeshExperiment, Norm, ScalingFit};
pub use sweep::{builtin_fixtures, compare_report, run_sweep, EmpiricalRecord, Preset, SweepAxis, SweepSpec};
pub use toy::{evaluate, export_logits, generate_dataset, train, SyntheticTask, ToyPatchModel, TrainConfig};
