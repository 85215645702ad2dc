//! Dataset readers and input preprocessing.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use tagi::{GaussianVector, Scalar, Shape};

use crate::error::{HarnessError, Result};

/// Raw 8-bit images with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub shape: Shape,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.shape.len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// The first `n` records.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            name: self.name.clone(),
            shape: self.shape,
            pixels: self.pixels[..n * self.shape.len()].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| HarnessError::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| HarnessError::Data(format!("{}: truncated header", path.display())))
}

/// Parses an IDX file holding unsigned bytes: returns the dimensions and payload.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic >> 8 != 0x08 {
        return Err(HarnessError::Data(format!("{}: bad IDX magic {magic:#010x}", path.display())));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank).map(|i| be_u32(bytes, 4 + 4 * i, path).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * rank;
    let expect = header + dims.iter().product::<usize>();
    if bytes.len() != expect {
        return Err(HarnessError::Data(format!(
            "{}: header implies {expect} bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok((dims, bytes[header..].to_vec()))
}

fn find(root: &Path, names: &[&str]) -> Result<PathBuf> {
    names
        .iter()
        .map(|n| root.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| HarnessError::Data(format!("none of {names:?} found under {}", root.display())))
}

fn load_idx_split(root: &Path, prefix: &str) -> Result<Dataset> {
    let img_path = find(root, &[&format!("{prefix}-images-idx3-ubyte"), &format!("{prefix}-images.idx3-ubyte")])?;
    let lbl_path = find(root, &[&format!("{prefix}-labels-idx1-ubyte"), &format!("{prefix}-labels.idx1-ubyte")])?;
    let (idims, pixels) = parse_idx(&read(&img_path)?, &img_path)?;
    let (ldims, labels) = parse_idx(&read(&lbl_path)?, &lbl_path)?;
    if idims.len() != 3 || ldims.len() != 1 || idims[0] != ldims[0] {
        return Err(HarnessError::Data(format!("{prefix}: image and label files disagree ({idims:?} vs {ldims:?})")));
    }
    if let Some(bad) = labels.iter().find(|l| **l > 9) {
        return Err(HarnessError::Data(format!("{prefix}: label {bad} out of range")));
    }
    Ok(Dataset {
        name: format!("mnist-{prefix}"),
        shape: Shape::new(1, idims[2], idims[1]),
        pixels,
        labels,
        num_classes: 10,
    })
}

/// MNIST train (60000) and test (10000) sets from the four IDX files.
pub fn load_mnist(root: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_idx_split(root, "train")?;
    let test = load_idx_split(root, "t10k")?;
    for (d, n) in [(&train, 60000), (&test, 10000)] {
        if d.len() != n || d.shape != Shape::new(1, 28, 28) {
            return Err(HarnessError::Data(format!("{}: expected {n} images of 28x28, found {}", d.name, d.len())));
        }
    }
    Ok((train, test))
}

pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

/// Parses CIFAR-10 binary records: one label byte then 3072 channel-major pixels.
pub fn parse_cifar(bytes: &[u8], name: &str) -> Result<Dataset> {
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(HarnessError::Data(format!(
            "{name}: {} bytes is not a whole number of {CIFAR_RECORD}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        if rec[0] > 9 {
            return Err(HarnessError::Data(format!("{name}: label {} out of range", rec[0])));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok(Dataset { name: name.into(), shape: Shape::new(3, 32, 32), pixels, labels, num_classes: 10 })
}

/// Inverse of [`parse_cifar`].
pub fn serialize_cifar(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(d.len() * CIFAR_RECORD);
    for i in 0..d.len() {
        out.push(d.labels[i]);
        out.extend_from_slice(d.image(i));
    }
    out
}

/// CIFAR-10 train (five batches, 50000) and test (10000) sets.
pub fn load_cifar10(root: &Path) -> Result<(Dataset, Dataset)> {
    let dir = if root.join("cifar-10-batches-bin").is_dir() { root.join("cifar-10-batches-bin") } else { root.to_path_buf() };
    let mut train_bytes = Vec::new();
    for b in 1..=5 {
        train_bytes.extend(read(&find(&dir, &[&format!("data_batch_{b}.bin")])?)?);
    }
    let train = parse_cifar(&train_bytes, "cifar10-train")?;
    let test = parse_cifar(&read(&find(&dir, &["test_batch.bin"])?)?, "cifar10-test")?;
    if train.len() != 50000 || test.len() != 10000 {
        return Err(HarnessError::Data(format!("cifar10: expected 50000/10000 records, found {}/{}", train.len(), test.len())));
    }
    Ok((train, test))
}

/// A directory of pre-resized 32×32 RGB images (any format the `image` crate reads).
pub fn load_image_dir(root: &Path, limit: Option<usize>) -> Result<Dataset> {
    let mut paths: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| HarnessError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if let Some(n) = limit {
        paths.truncate(n);
    }
    let mut pixels = Vec::with_capacity(paths.len() * 3072);
    for p in &paths {
        let img = image::open(p).map_err(|e| HarnessError::Data(format!("{}: {e}", p.display())))?.to_rgb8();
        if img.dimensions() != (32, 32) {
            return Err(HarnessError::Data(format!("{}: expected 32x32, found {:?}", p.display(), img.dimensions())));
        }
        for c in 0..3 {
            pixels.extend(img.pixels().map(|px| px.0[c]));
        }
    }
    if paths.is_empty() {
        return Err(HarnessError::Data(format!("no images under {}", root.display())));
    }
    Ok(Dataset { name: "celeba32".into(), shape: Shape::new(3, 32, 32), labels: vec![0; paths.len()], pixels, num_classes: 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocessing {
    /// Scale to `[0, 1]`, then subtract the training-set mean.
    UnitRangeMeanSubtract,
    /// Subtract the training-set mean and divide by its standard deviation.
    Standardize,
}

/// Per-channel statistics fitted on a training set and applied to every split.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mode: Preprocessing,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(mode: Preprocessing, d: &Dataset) -> Self {
        let ch = d.shape.depth;
        let plane = d.shape.plane();
        let mut sum = vec![0.0f64; ch];
        let mut sq = vec![0.0f64; ch];
        for i in 0..d.len() {
            for (c, px) in d.image(i).chunks_exact(plane).enumerate() {
                for &p in px {
                    let v = p as f64 / 255.0;
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
        }
        let n = (d.len() * plane).max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = match mode {
            Preprocessing::UnitRangeMeanSubtract => vec![1.0; ch],
            Preprocessing::Standardize => {
                sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(1e-12)).collect()
            }
        };
        Self { mode, mean, std }
    }

    pub fn apply<T: Scalar>(&self, img: &[u8], shape: Shape) -> Vec<T> {
        let plane = shape.plane();
        img.iter()
            .enumerate()
            .map(|(i, p)| {
                let c = i / plane;
                T::lit((*p as f64 / 255.0 - self.mean[c]) / self.std[c])
            })
            .collect()
    }

    pub fn input<T: Scalar>(&self, d: &Dataset, i: usize) -> GaussianVector<T> {
        GaussianVector::deterministic(self.apply(d.image(i), d.shape))
    }

    /// Per-channel mean and std that turn network-scale values back into `[0, 1]` intensities.
    pub fn denormalize(&self) -> tagi::gan::Denormalize {
        tagi::gan::Denormalize { mean: self.mean.clone(), std: self.std.clone() }
    }
}

/// Two interleaved half circles with Gaussian jitter, label = moon index.
pub fn two_moons<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Vec<([f64; 2], u8)> {
    let jitter = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    (0..n)
        .map(|i| {
            let t = rng.random_range(0.0..std::f64::consts::PI);
            let moon = (i % 2) as u8;
            let (x, y) = if moon == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
            ([x + jitter.sample(rng), y + jitter.sample(rng)], moon)
        })
        .collect()
}

/// Distance from a point to the noise-free two-moons curves.
pub fn moons_distance(p: [f64; 2]) -> f64 {
    let upper = {
        let (dx, dy) = (p[0], p[1]);
        let r = (dx * dx + dy * dy).sqrt();
        if dy >= 0.0 {
            (r - 1.0).abs()
        } else {
            ((dx - 1.0).hypot(dy)).min((dx + 1.0).hypot(dy))
        }
    };
    let lower = {
        let (dx, dy) = (p[0] - 1.0, p[1] - 0.5);
        let r = (dx * dx + dy * dy).sqrt();
        if dy <= 0.0 {
            (r - 1.0).abs()
        } else {
            ((dx - 1.0).hypot(dy)).min((dx + 1.0).hypot(dy))
        }
    };
    upper.min(lower)
}
