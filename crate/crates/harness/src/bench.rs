//! Wall-time of inference against parameter count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagi::inference::{infer_minibatch, ObservationModel};
use tagi::{GaussianVector, NetworkConfig, Real};

use crate::error::Result;

pub const DEFAULT_WIDTHS: [usize; 4] = [64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub width: usize,
    pub parameters: usize,
    /// Best of the repetitions, seconds for the whole run of mini-batches.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

/// Least-squares line `y = a + b·x` and its coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (intercept, slope, r2)
}

/// Three fully-connected hidden layers of `width` ReLU units on a 784-wide input.
pub fn mlp_config(width: usize) -> NetworkConfig {
    let table = format!(
        "name: mlp-{width}\nhead: regression 10\ninput 784 - - - -\nfc {width} - - - relu\nfc {width} - - - relu\nfc {width} - - - relu\noutput 10 - - - -\n"
    );
    NetworkConfig::parse(&table).expect("well-formed table")
}

/// Times `batches` mini-batches of 16 through forward pass and inference sweep.
pub fn bench_scaling(widths: &[usize], batches: usize, repeats: usize, seed: u64) -> Result<ScalingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<(Vec<GaussianVector<Real>>, Vec<Vec<Real>>)> = (0..batches)
        .map(|_| {
            let x = (0..16).map(|_| GaussianVector::deterministic((0..784).map(|_| rng.random_range(-0.5..0.5)).collect())).collect();
            let y = (0..16).map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            (x, y)
        })
        .collect();
    let obs = ObservationModel::new(1.0, 1.0)?;
    let mut points = Vec::with_capacity(widths.len());
    for &width in widths {
        let (net, params) = tagi::build::<Real>(mlp_config(width), seed)?;
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let mut p = params.clone();
            let start = Instant::now();
            for (x, y) in &data {
                infer_minibatch(&net, &mut p, x, y, &obs)?;
            }
            best = best.min(start.elapsed().as_secs_f64());
        }
        points.push(ScalingPoint { width, parameters: params.num_parameters(), seconds: best });
    }
    let x: Vec<f64> = points.iter().map(|p| p.parameters as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let (intercept, slope, r_squared) = linear_fit(&x, &y);
    Ok(ScalingReport { points, intercept, slope, r_squared })
}
