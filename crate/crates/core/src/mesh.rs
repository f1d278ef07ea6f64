//! Monte-Carlo estimates of the mesh norm (distance from a query to its
//! nearest sample) for uniform samples in the unit cube, and a log-log fit
//! of its decay with the sample count.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). Trial `t` at sample-count
//! index `i` uses the generator seeded with the master seed on stream
//! `(t << 32) | (attempt << 16) | i`, so serial and parallel runs agree.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fmt::sig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Norm {
    #[default]
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl Norm {
    /// Monotone surrogate of the distance, cheaper to compare.
    #[inline]
    fn accumulate(&self, acc: f64, d: f64) -> f64 {
        match self {
            Norm::Euclidean => acc + d * d,
            Norm::Manhattan => acc + d.abs(),
            Norm::Chebyshev => acc.max(d.abs()),
        }
    }

    #[inline]
    fn finish(&self, acc: f64) -> f64 {
        match self {
            Norm::Euclidean => acc.sqrt(),
            Norm::Manhattan | Norm::Chebyshev => acc,
        }
    }
}

/// Mean over `queries` of the distance to the nearest point in `samples`.
/// Points are stored flat, `dim` coordinates each.
pub fn mean_nearest_distance(samples: &[f64], queries: &[f64], dim: usize, norm: Norm) -> f64 {
    assert!(dim > 0 && !samples.is_empty() && samples.len().is_multiple_of(dim) && queries.len().is_multiple_of(dim));
    let n_queries = queries.len() / dim;
    if n_queries == 0 {
        return 0.0;
    }
    let total: f64 = queries
        .chunks_exact(dim)
        .map(|q| {
            let mut best = f64::INFINITY;
            for s in samples.chunks_exact(dim) {
                let mut acc = 0.0;
                for (a, b) in q.iter().zip(s) {
                    acc = norm.accumulate(acc, a - b);
                    if acc >= best {
                        break;
                    }
                }
                if acc < best {
                    best = acc;
                }
            }
            norm.finish(best)
        })
        .sum();
    total / n_queries as f64
}

fn uniform_points(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<f64> {
    (0..count * dim).map(|_| rng.random::<f64>()).collect()
}

fn estimate_with(rng: &mut ChaCha8Rng, dim: usize, n: usize, queries: usize, norm: Norm) -> f64 {
    let samples = uniform_points(rng, n, dim);
    let qs = uniform_points(rng, queries, dim);
    mean_nearest_distance(&samples, &qs, dim, norm)
}

/// Draw `n` samples and `queries` query points uniformly in `[0,1]^dim` and
/// return the mean Euclidean nearest-sample distance.
pub fn estimate_mesh_norm(dim: usize, n: usize, queries: usize, seed: u64) -> Result<f64> {
    if dim == 0 || n == 0 || queries == 0 {
        return Err(Error::InvalidParams("dimension, sample count and query count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(estimate_with(&mut rng, dim, n, queries, Norm::Euclidean))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshExperiment {
    pub dim: usize,
    /// Strictly increasing, at least two.
    pub sample_counts: Vec<usize>,
    pub queries: usize,
    pub trials: usize,
    pub seed: u64,
    pub norm: Norm,
}

impl MeshExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        if self.sample_counts.len() < 2 {
            return Err(Error::InvalidParams("need at least two sample counts".into()));
        }
        if self.sample_counts[0] == 0 || self.sample_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams("sample counts must be positive and strictly increasing".into()));
        }
        if self.trials == 0 || self.queries == 0 {
            return Err(Error::InvalidParams("trials and queries must be positive".into()));
        }
        Ok(())
    }

    fn rng(&self, trial: usize, count_index: usize, attempt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((trial as u64) << 32) | (attempt << 16) | count_index as u64);
        rng
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    pub mean_mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub dim: usize,
    /// Slope of ln(mean mu) against ln N; about -1/D for uniform samples.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub trials: Vec<TrialRecord>,
    /// Per sample count, the mean over trials.
    pub means: Vec<(usize, f64)>,
    /// Draws repeated because every query coincided with a sample.
    pub redraws: usize,
}

/// Least-squares `y = slope * x + intercept`, returning the RMS residual too.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

const MAX_REDRAWS: u64 = 1 << 15;

pub fn fit_scaling_exponent(exp: &MeshExperiment) -> Result<ScalingFit> {
    exp.validate()?;
    let mut trials = Vec::with_capacity(exp.trials * exp.sample_counts.len());
    let mut redraws = 0;
    for trial in 0..exp.trials {
        for (i, &n) in exp.sample_counts.iter().enumerate() {
            let mut attempt = 0;
            let mean_mu = loop {
                let mu = estimate_with(&mut exp.rng(trial, i, attempt), exp.dim, n, exp.queries, exp.norm);
                if mu > 0.0 {
                    break mu;
                }
                attempt += 1;
                redraws += 1;
                if attempt >= MAX_REDRAWS {
                    return Err(Error::Malformed(format!("mesh norm stayed zero for N={n} after {attempt} draws")));
                }
            };
            trials.push(TrialRecord { n, trial, mean_mu });
        }
    }
    let means: Vec<(usize, f64)> = exp
        .sample_counts
        .iter()
        .map(|&n| {
            let v: Vec<f64> = trials.iter().filter(|t| t.n == n).map(|t| t.mean_mu).collect();
            (n, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let xs: Vec<f64> = means.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|(_, m)| m.ln()).collect();
    let (slope, intercept, residual) = fit_line(&xs, &ys);
    Ok(ScalingFit { dim: exp.dim, slope, intercept, residual, trials, means, redraws })
}

pub const TRIALS_HEADER: &str = "D,N,trial,mean_mu";
pub const FIT_HEADER: &str = "D,slope,intercept,residual";

pub fn trials_csv(fits: &[ScalingFit], digits: usize) -> String {
    let mut out = String::from(TRIALS_HEADER);
    out.push('\n');
    for f in fits {
        for t in &f.trials {
            writeln!(out, "{},{},{},{}", f.dim, t.n, t.trial, sig(t.mean_mu, digits)).expect("writing to a String");
        }
    }
    out
}

pub fn fit_csv(fits: &[ScalingFit], digits: usize) -> String {
    let mut out = String::from(FIT_HEADER);
    out.push('\n');
    for f in fits {
        writeln!(out, "{},{},{},{}", f.dim, sig(f.slope, digits), sig(f.intercept, digits), sig(f.residual, digits))
            .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_point_has_zero_distance() {
        assert_eq!(mean_nearest_distance(&[0.5], &[0.5], 1, Norm::Euclidean), 0.0);
    }

    #[test]
    fn singleton_sample() {
        let s = [0.2, 0.3, 0.4];
        let q = [0.5, 0.7, 0.4, 0.2, 0.3, 0.9];
        let d1 = ((0.3f64).powi(2) + (0.4f64).powi(2)).sqrt();
        let d2 = 0.5;
        let got = mean_nearest_distance(&s, &q, 3, Norm::Euclidean);
        assert!((got - (d1 + d2) / 2.0).abs() < 1e-15);
        assert!((mean_nearest_distance(&s, &q[..3], 3, Norm::Chebyshev) - 0.4).abs() < 1e-15);
        assert!((mean_nearest_distance(&s, &q[..3], 3, Norm::Manhattan) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn picks_nearest() {
        let s = [0.0, 0.0, 1.0, 1.0, 0.5, 0.4];
        assert!((mean_nearest_distance(&s, &[0.5, 0.5], 2, Norm::Euclidean) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = estimate_mesh_norm(3, 200, 20, 11).unwrap();
        let b = estimate_mesh_norm(3, 200, 20, 11).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, estimate_mesh_norm(3, 200, 20, 12).unwrap());
    }

    #[test]
    fn unit_square_magnitude() {
        // about 0.5 / sqrt(N) for the unit square
        let mu = estimate_mesh_norm(2, 10_000, 100, 3).unwrap();
        assert!((0.004..0.008).contains(&mu), "{mu}");
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.5 * x + 2.0).collect();
        let (s, i, r) = fit_line(&xs, &ys);
        assert!((s + 0.5).abs() < 1e-15 && (i - 2.0).abs() < 1e-15 && r < 1e-15);
    }

    #[test]
    fn one_dimensional_slope() {
        let fit = fit_scaling_exponent(&MeshExperiment {
            dim: 1,
            sample_counts: vec![100, 1000, 10_000],
            queries: 50,
            trials: 10,
            seed: 5,
            norm: Norm::Euclidean,
        })
        .unwrap();
        assert!((fit.slope + 1.0).abs() < 0.1, "{}", fit.slope);
        assert_eq!(fit.trials.len(), 30);
    }

    #[test]
    fn rejects_bad_experiments() {
        let base = MeshExperiment { dim: 2, sample_counts: vec![10, 100], queries: 5, trials: 1, seed: 0, norm: Norm::Euclidean };
        assert!(fit_scaling_exponent(&MeshExperiment { sample_counts: vec![10], ..base.clone() }).is_err());
        assert!(fit_scaling_exponent(&MeshExperiment { sample_counts: vec![100, 10], ..base.clone() }).is_err());
        assert!(fit_scaling_exponent(&MeshExperiment { trials: 0, ..base.clone() }).is_err());
        assert!(fit_scaling_exponent(&base).is_ok());
    }
}
