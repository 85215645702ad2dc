//! Adversarial training runs: MNIST and CelebA infoGANs and the 2-D toy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tagi::gan::{Denormalize, ImageGrid};
use tagi::{generate_grid, GanBundle, GaussianVector, LatentCode, LatentSpec, Scalar};

use crate::data::{moons_distance, two_moons};
use crate::error::{HarnessError, Result};

/// Averages over one epoch of alternating steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanEpochLog {
    pub epoch: usize,
    pub iterations: usize,
    /// Real/fake accuracy of the discriminator before its updates.
    pub d_accuracy: f64,
    /// Fraction of fakes scored as real before the generator updates.
    pub g_fooled: f64,
    pub clamp_count: usize,
    pub sigma_p: f64,
    pub sigma_q: f64,
}

pub const GAN_LOG_HEADER: &str = "epoch\titerations\td_accuracy\tg_fooled\tclamp_count\tsigma_p\tsigma_q";

impl GanEpochLog {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}\t{:.9}\t{:.9}",
            self.epoch, self.iterations, self.d_accuracy, self.g_fooled, self.clamp_count, self.sigma_p, self.sigma_q
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GanProgress {
    Iteration { epoch: usize, done: usize, total: usize },
    Epoch(GanEpochLog),
}

/// Runs `epochs` passes over `n` real samples fetched by index, `batch` at a time.
/// `limit` caps the iterations per epoch.
pub fn train_gan<T: Scalar>(
    bundle: &mut GanBundle<T>,
    n: usize,
    fetch: &dyn Fn(usize) -> GaussianVector<T>,
    epochs: usize,
    batch: usize,
    seed: u64,
    limit: Option<usize>,
    progress: &mut dyn FnMut(GanProgress),
) -> Result<Vec<GanEpochLog>> {
    if batch == 0 {
        return Err(HarnessError::Config("batch size must be positive".into()));
    }
    if n == 0 {
        return Err(HarnessError::Data("no real samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        // batch normalisation in the trunk needs at least two reals per step
        let chunks: Vec<&[usize]> = order.chunks(batch).filter(|c| c.len() >= 2.min(batch)).collect();
        let total = limit.map_or(chunks.len(), |l| l.min(chunks.len()));
        let (mut d_acc, mut fooled, mut clamps) = (0.0, 0.0, 0);
        for (it, chunk) in chunks.iter().take(total).enumerate() {
            let real: Vec<GaussianVector<T>> = chunk.iter().map(|&i| fetch(i)).collect();
            let (d, g) = bundle.train_iteration(&real, &mut rng)?;
            d_acc += d.accuracy;
            fooled += g.accuracy;
            clamps += d.clamped + g.clamped;
            if (it + 1) % 50 == 0 || it + 1 == total {
                progress(GanProgress::Iteration { epoch, done: it + 1, total });
            }
        }
        bundle.end_epoch();
        let t = total.max(1) as f64;
        let log = GanEpochLog {
            epoch,
            iterations: total,
            d_accuracy: d_acc / t,
            g_fooled: fooled / t,
            clamp_count: clamps,
            sigma_p: bundle.obs_p.sigma_v,
            sigma_q: bundle.obs_q.sigma_v,
        };
        progress(GanProgress::Epoch(log));
        history.push(log);
    }
    Ok(history)
}

/// Codes for a `rows × cols` grid: column `c` fixes the first categorical code
/// to `c`; down a column the first continuous code sweeps `[-1, 1]` (or, without
/// continuous codes, the noise changes). Noise is shared along each row.
pub fn grid_codes<T: Scalar>(spec: &LatentSpec, rows: usize, cols: usize, seed: u64) -> Vec<LatentCode<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: LatentCode<T> = tagi::sample_latent(spec, &mut rng);
    let row_noise: Vec<LatentCode<T>> = (0..rows).map(|_| tagi::sample_latent(spec, &mut rng)).collect();
    let mut codes = Vec::with_capacity(rows * cols);
    for (r, varied) in row_noise.iter().enumerate() {
        for c in 0..cols {
            let mut code = base.clone();
            if spec.categorical > 0 {
                code.categories[0] = c % spec.classes;
            }
            if spec.continuous > 0 {
                let t = if rows > 1 { -1.0 + 2.0 * r as f64 / (rows - 1) as f64 } else { 0.0 };
                code.continuous[0] = T::lit(t);
            } else {
                code.noise = varied.noise.clone();
            }
            codes.push(code);
        }
    }
    codes
}

/// Image grid of generator means, one column per category.
pub fn infogan_grid<T: Scalar>(bundle: &GanBundle<T>, rows: usize, cols: usize, denorm: &Denormalize, seed: u64) -> Result<ImageGrid> {
    let codes = grid_codes(&bundle.latent, rows, cols, seed);
    Ok(generate_grid(bundle, &codes, cols, denorm)?)
}

/// Variance of all pixel values in each grid column.
pub fn column_pixel_variance(grid: &ImageGrid) -> Vec<f64> {
    (0..grid.cols)
        .map(|c| {
            let px: Vec<f64> = grid.images.iter().skip(c).step_by(grid.cols).flatten().map(|p| *p as f64).collect();
            let n = px.len() as f64;
            let m = px.iter().sum::<f64>() / n;
            px.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / n
        })
        .collect()
}

/// Writes the tiled grid as an 8-bit PNG.
pub fn save_grid_png(grid: &ImageGrid, path: &std::path::Path) -> Result<()> {
    let (w, h) = ((grid.cols * grid.width) as u32, (grid.rows * grid.height) as u32);
    let color = match grid.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(HarnessError::Config(format!("cannot write {c}-channel images"))),
    };
    image::save_buffer(path, &grid.tile(), w, h, color)
        .map_err(|e| HarnessError::io(path, std::io::Error::other(e.to_string())))
}

/// Two-moons points scaled to roughly zero mean and unit spread.
pub fn toy_point<T: Scalar>(p: [f64; 2]) -> GaussianVector<T> {
    GaussianVector::deterministic(vec![T::lit((p[0] - 0.5) / 0.85), T::lit((p[1] - 0.25) / 0.5)])
}

fn toy_unscale(x: &[f64]) -> [f64; 2] {
    [x[0] * 0.85 + 0.5, x[1] * 0.5 + 0.25]
}

/// Mean distance of generated points to the noise-free moons.
pub fn toy_quality<T: Scalar>(bundle: &GanBundle<T>, probes: &[LatentCode<T>]) -> Result<f64> {
    let out = bundle.generate(probes)?;
    let d: f64 = out
        .iter()
        .map(|g| moons_distance(toy_unscale(&[g.mean()[0].to_f64_lossy(), g.mean()[1].to_f64_lossy()])))
        .sum();
    Ok(d / out.len() as f64)
}

/// Two-moons training set of `n` points.
pub fn toy_dataset<T: Scalar>(n: usize, seed: u64) -> Vec<GaussianVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    two_moons(n, 0.05, &mut rng).into_iter().map(|(p, _)| toy_point(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout_follows_the_codes() {
        let codes: Vec<LatentCode<f64>> = grid_codes(&LatentSpec::MNIST, 5, 10, 1);
        assert_eq!(codes.len(), 50);
        assert_eq!(codes[17].categories[0], 7);
        assert_eq!(codes[3].continuous[0], -1.0);
        assert_eq!(codes[43].continuous[0], 1.0);
        assert_eq!(codes[0].noise, codes[49].noise);
        let celeb: Vec<LatentCode<f64>> = grid_codes(&LatentSpec::CELEBA, 3, 2, 1);
        assert_eq!(celeb[0].noise, celeb[1].noise);
        assert_ne!(celeb[0].noise, celeb[2].noise);
    }

    #[test]
    fn column_variance_detects_flat_columns() {
        let grid = ImageGrid { cols: 2, rows: 2, channels: 1, width: 1, height: 2, images: vec![vec![5, 5], vec![0, 255], vec![5, 5], vec![3, 3]] };
        let v = column_pixel_variance(&grid);
        assert_eq!(v[0], 0.0);
        assert!(v[1] > 0.0);
    }

    #[test]
    fn toy_training_improves_the_fit() {
        let data = toy_dataset::<f64>(2000, 3);
        let mut bundle = GanBundle::<f64>::toy2d(5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probes: Vec<LatentCode<f64>> = (0..300).map(|_| tagi::sample_latent(&LatentSpec::TOY2D, &mut rng)).collect();
        let before = toy_quality(&bundle, &probes).unwrap();
        let logs = train_gan(&mut bundle, data.len(), &|i| data[i].clone(), 1, 16, 1, Some(100), &mut |_| {}).unwrap();
        assert_eq!(logs[0].iterations, 100);
        assert!(toy_quality(&bundle, &probes).unwrap() < before);
    }
}
