//! Adversarial training with closed-form inference.
//!
//! The discriminator is a shared trunk (`dnet`) with a real/fake head (`pnet`)
//! and, for infoGAN, a latent-code head (`qnet`). A discriminator step observes
//! real/fake labels (and, on fakes, the sampled codes) and updates the trunk and
//! heads. A generator step observes "real" on generated images and sweeps the
//! innovations back through the frozen discriminator into the generator, whose
//! parameters are the only ones updated.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TagiError};
use crate::gaussian::GaussianVector;
use crate::inference::{decay_noise, output_innovation, Innovation, ObservationModel, ParamAccumulator, ParameterStore};
use crate::network::{build, preset, Network, NetworkConfig};
use crate::scalar::Scalar;

/// Layout of the generator input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentSpec {
    pub noise: usize,
    pub categorical: usize,
    pub classes: usize,
    pub continuous: usize,
    /// Generator input width; units beyond the codes are held at 1.
    pub input_width: usize,
}

impl LatentSpec {
    pub const MNIST: LatentSpec = LatentSpec { noise: 62, categorical: 1, classes: 10, continuous: 2, input_width: 75 };
    pub const CELEBA: LatentSpec = LatentSpec { noise: 128, categorical: 10, classes: 10, continuous: 0, input_width: 238 };
    /// Two-dimensional toy data: four noise inputs, a binary code and one continuous code.
    pub const TOY2D: LatentSpec = LatentSpec { noise: 4, categorical: 1, classes: 2, continuous: 1, input_width: 7 };

    /// Plain GAN: noise only.
    pub const fn noise_only(noise: usize) -> Self {
        LatentSpec { noise, categorical: 0, classes: 0, continuous: 0, input_width: noise }
    }

    /// Width of the latent-code head: one-hot groups then continuous codes.
    pub const fn code_width(&self) -> usize {
        self.categorical * self.classes + self.continuous
    }

    pub const fn used_width(&self) -> usize {
        self.noise + self.code_width()
    }

    pub fn validate(&self) -> Result<()> {
        if self.used_width() > self.input_width {
            return Err(TagiError::config(format!(
                "latent codes need {} inputs, generator takes {}",
                self.used_width(),
                self.input_width
            )));
        }
        if self.categorical > 0 && self.classes == 0 {
            return Err(TagiError::config("categorical codes need at least one class"));
        }
        Ok(())
    }
}

/// One draw of generator inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode<T> {
    pub noise: Vec<T>,
    pub categories: Vec<usize>,
    pub continuous: Vec<T>,
}

impl<T: Scalar> LatentCode<T> {
    /// Deterministic generator input: noise, one-hot categories, continuous codes, padding.
    pub fn generator_input(&self, spec: &LatentSpec) -> GaussianVector<T> {
        let mut x = Vec::with_capacity(spec.input_width);
        x.extend_from_slice(&self.noise);
        x.extend(self.code_target(spec));
        x.resize(spec.input_width, T::one());
        GaussianVector::deterministic(x)
    }

    /// Observation for the latent-code head.
    pub fn code_target(&self, spec: &LatentSpec) -> Vec<T> {
        let mut y = vec![T::zero(); spec.categorical * spec.classes];
        for (g, &c) in self.categories.iter().enumerate() {
            y[g * spec.classes + c] = T::one();
        }
        y.extend_from_slice(&self.continuous);
        y
    }
}

/// Noise `N(0, 1)`, categories uniform, continuous codes `Uniform(-1, 1)`.
pub fn sample_latent<T: Scalar, R: Rng + ?Sized>(spec: &LatentSpec, rng: &mut R) -> LatentCode<T> {
    let noise = (0..spec.noise).map(|_| T::lit(StandardNormal.sample(rng))).collect();
    let categories = (0..spec.categorical).map(|_| rng.random_range(0..spec.classes)).collect();
    let continuous = (0..spec.continuous).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    LatentCode { noise, categories, continuous }
}

/// A network together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub net: Network,
    pub params: ParameterStore<T>,
}

impl<T: Scalar> Model<T> {
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        let (net, params) = build(config, seed)?;
        Ok(Self { net, params })
    }
}

/// Generator, discriminator trunk and heads with their observation noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GanBundle<T> {
    pub latent: LatentSpec,
    pub gnet: Model<T>,
    pub dnet: Model<T>,
    pub pnet: Model<T>,
    pub qnet: Option<Model<T>>,
    pub obs_p: ObservationModel,
    pub obs_q: ObservationModel,
}

/// Outcome of one adversarial step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// Fraction of samples the real/fake head classified correctly before the update.
    pub accuracy: f64,
    pub clamped: usize,
}

impl<T: Scalar> GanBundle<T> {
    pub fn new(
        latent: LatentSpec,
        gnet: Model<T>,
        dnet: Model<T>,
        pnet: Model<T>,
        qnet: Option<Model<T>>,
        obs_p: ObservationModel,
        obs_q: ObservationModel,
    ) -> Result<Self> {
        latent.validate()?;
        if gnet.net.input_shape().len() != latent.input_width {
            return Err(TagiError::config("generator input does not match the latent layout"));
        }
        if gnet.net.output_shape() != dnet.net.input_shape() {
            return Err(TagiError::config(format!(
                "generator emits {}, discriminator reads {}",
                gnet.net.output_shape(),
                dnet.net.input_shape()
            )));
        }
        let trunk = dnet.net.output_len();
        if pnet.net.input_shape().len() != trunk || pnet.net.output_len() != 1 {
            return Err(TagiError::config("real/fake head must read the trunk and emit one unit"));
        }
        if let Some(q) = &qnet {
            if q.net.input_shape().len() != trunk || q.net.output_len() != latent.code_width() {
                return Err(TagiError::config("latent-code head does not match the trunk and the code layout"));
            }
        } else if latent.code_width() > 0 {
            return Err(TagiError::config("latent codes without a latent-code head"));
        }
        Ok(Self { latent, gnet, dnet, pnet, qnet, obs_p, obs_q })
    }

    /// The infoGAN of the MNIST experiment, `σ_V⁰ = 3` on both heads.
    pub fn mnist_infogan(seed: u64, eta: f64) -> Result<Self> {
        Self::from_presets("mnist-infogan", LatentSpec::MNIST, seed, 3.0, 3.0, eta)
    }

    /// The infoGAN of the CelebA experiment, `σ_V⁰ = 3` (real/fake) and `8` (codes).
    pub fn celeba_infogan(seed: u64, eta: f64) -> Result<Self> {
        Self::from_presets("celeba-infogan", LatentSpec::CELEBA, seed, 3.0, 8.0, eta)
    }

    /// A small infoGAN for points in the plane, `σ_V⁰ = 3` on both heads.
    pub fn toy2d(seed: u64, eta: f64) -> Result<Self> {
        Self::from_presets("toy2d", LatentSpec::TOY2D, seed, 3.0, 3.0, eta)
    }

    fn from_presets(family: &str, latent: LatentSpec, seed: u64, sp: f64, sq: f64, eta: f64) -> Result<Self> {
        let part = |name: &str, k: u64| Model::build(preset(&format!("{family}-{name}"))?, seed.wrapping_add(k));
        Self::new(
            latent,
            part("gnet", 0)?,
            part("dnet", 1)?,
            part("pnet", 2)?,
            Some(part("qnet", 3)?),
            ObservationModel::new(sp, eta)?,
            ObservationModel::new(sq, eta)?,
        )
    }

    /// Decays both observation noises at an epoch boundary.
    pub fn end_epoch(&mut self) {
        self.obs_p = decay_noise(self.obs_p);
        self.obs_q = decay_noise(self.obs_q);
    }

    fn sample_codes<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<LatentCode<T>> {
        (0..n).map(|_| sample_latent(&self.latent, rng)).collect()
    }

    /// Generator output moments for a set of codes.
    pub fn generate(&self, codes: &[LatentCode<T>]) -> Result<Vec<GaussianVector<T>>> {
        let inputs: Vec<_> = codes.iter().map(|c| c.generator_input(&self.latent)).collect();
        let trace = self.gnet.net.forward(&self.gnet.params, &inputs)?;
        Ok((0..codes.len()).map(|i| trace.output_activation(i).clone()).collect())
    }

    /// Updates the discriminator trunk and heads on `real` plus as many fakes.
    /// The generator is read, never written.
    pub fn discriminator_step<R: Rng + ?Sized>(&mut self, real: &[GaussianVector<T>], rng: &mut R) -> Result<StepReport> {
        if real.is_empty() {
            return Err(TagiError::precondition("empty batch of real images"));
        }
        let n = real.len();
        let codes = self.sample_codes(n, rng);
        let fakes = self.generate(&codes)?;
        let mut images = real.to_vec();
        images.extend(fakes);

        let (d, p) = (&self.dnet, &self.pnet);
        let mut d_trace = d.net.forward(&d.params, &images)?;
        let features: Vec<_> = (0..2 * n).map(|i| d_trace.output_activation(i).clone()).collect();
        let mut p_trace = p.net.forward(&p.params, &features)?;
        let mut q_trace = match &self.qnet {
            Some(q) => Some(q.net.forward(&q.params, &features[n..])?),
            None => None,
        };

        let mut acc_d = ParamAccumulator::for_store(&d.params);
        let mut acc_p = ParamAccumulator::for_store(&p.params);
        let mut acc_q = self.qnet.as_ref().map(|q| ParamAccumulator::for_store(&q.params));
        let mut correct = 0;
        for i in 0..2 * n {
            let is_real = i < n;
            let target = if is_real { T::one() } else { T::zero() };
            let score = p_trace.output(i).mean()[0];
            if (score > T::lit(0.5)) == is_real {
                correct += 1;
            }
            let innov = output_innovation(p_trace.output(i), &[target], self.obs_p.sigma_v)?;
            let mut feat = p
                .net
                .backward(&p.params, &mut p_trace, i, innov, Some(&mut acc_p), true)?
                .expect("input innovation requested");
            if let (false, Some(q), Some(qt), Some(aq)) = (is_real, &self.qnet, q_trace.as_mut(), acc_q.as_mut()) {
                let j = i - n;
                let y = codes[j].code_target(&self.latent);
                let innov = output_innovation(qt.output(j), &y, self.obs_q.sigma_v)?;
                let fq = q.net.backward(&q.params, qt, j, innov, Some(aq), true)?.expect("input innovation requested");
                feat.add_assign(&fq);
            }
            d.net.backward_from_activation(&d.params, &mut d_trace, i, feat, Some(&mut acc_d), false)?;
        }
        let mut clamped = 0;
        clamped += apply(&mut self.dnet.params, &acc_d)?;
        clamped += apply(&mut self.pnet.params, &acc_p)?;
        if let (Some(q), Some(aq)) = (self.qnet.as_mut(), acc_q.as_ref()) {
            clamped += apply(&mut q.params, aq)?;
        }
        Ok(StepReport { accuracy: correct as f64 / (2 * n) as f64, clamped })
    }

    /// Updates the generator so that `batch` fresh fakes look real and carry their
    /// codes. Discriminator states are smoothed on the way but its parameters
    /// are left untouched.
    pub fn generator_step<R: Rng + ?Sized>(&mut self, batch: usize, rng: &mut R) -> Result<StepReport> {
        if batch == 0 {
            return Err(TagiError::precondition("empty generator batch"));
        }
        let codes = self.sample_codes(batch, rng);
        let inputs: Vec<_> = codes.iter().map(|c| c.generator_input(&self.latent)).collect();
        let (g, d, p) = (&self.gnet, &self.dnet, &self.pnet);
        let mut g_trace = g.net.forward(&g.params, &inputs)?;
        let fakes: Vec<_> = (0..batch).map(|i| g_trace.output_activation(i).clone()).collect();
        let mut d_trace = d.net.forward(&d.params, &fakes)?;
        let features: Vec<_> = (0..batch).map(|i| d_trace.output_activation(i).clone()).collect();
        let mut p_trace = p.net.forward(&p.params, &features)?;
        let mut q_trace = match &self.qnet {
            Some(q) => Some(q.net.forward(&q.params, &features)?),
            None => None,
        };

        let mut acc_g = ParamAccumulator::for_store(&g.params);
        let mut fooled = 0;
        for i in 0..batch {
            if p_trace.output(i).mean()[0] > T::lit(0.5) {
                fooled += 1;
            }
            let innov = output_innovation(p_trace.output(i), &[T::one()], self.obs_p.sigma_v)?;
            let mut feat = p.net.backward(&p.params, &mut p_trace, i, innov, None, true)?.expect("input innovation requested");
            if let (Some(q), Some(qt)) = (&self.qnet, q_trace.as_mut()) {
                let y = codes[i].code_target(&self.latent);
                let innov = output_innovation(qt.output(i), &y, self.obs_q.sigma_v)?;
                feat.add_assign(&q.net.backward(&q.params, qt, i, innov, None, true)?.expect("input innovation requested"));
            }
            let image: Innovation<T> = d
                .net
                .backward_from_activation(&d.params, &mut d_trace, i, feat, None, true)?
                .expect("input innovation requested");
            g.net.backward_from_activation(&g.params, &mut g_trace, i, image, Some(&mut acc_g), false)?;
        }
        let clamped = apply(&mut self.gnet.params, &acc_g)?;
        Ok(StepReport { accuracy: fooled as f64 / batch as f64, clamped })
    }

    /// One discriminator step followed by one generator step of the same size.
    pub fn train_iteration<R: Rng + ?Sized>(
        &mut self,
        real: &[GaussianVector<T>],
        rng: &mut R,
    ) -> Result<(StepReport, StepReport)> {
        let d = self.discriminator_step(real, rng)?;
        let g = self.generator_step(real.len(), rng)?;
        Ok((d, g))
    }
}

fn apply<T: Scalar>(params: &mut ParameterStore<T>, acc: &ParamAccumulator<T>) -> Result<usize> {
    let report = params.apply(acc);
    if !params.all_finite() {
        return Err(TagiError::NonFinite("parameter moments after an adversarial update".into()));
    }
    Ok(report.clamped)
}

/// Maps network outputs back to pixel intensities: `clamp(x·std + mean, 0, 1)·255`,
/// with one `(mean, std)` per channel; a single entry applies to all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Denormalize {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Denormalize {
    pub fn identity() -> Self {
        Self { mean: vec![0.0], std: vec![1.0] }
    }

    fn channel(&self, c: usize) -> (f64, f64) {
        let pick = |v: &[f64]| v.get(c).or(v.last()).copied();
        (pick(&self.mean).unwrap_or(0.0), pick(&self.std).unwrap_or(1.0))
    }
}

/// Generated images laid out row-major, `cols` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub cols: usize,
    pub rows: usize,
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    /// One entry per image, channel-major pixels in `0..=255`.
    pub images: Vec<Vec<u8>>,
}

impl ImageGrid {
    /// Tiles the grid into one interleaved image of `rows·height × cols·width` pixels.
    pub fn tile(&self) -> Vec<u8> {
        let (w, h, c) = (self.width, self.height, self.channels);
        let full_w = self.cols * w;
        let mut out = vec![0u8; self.rows * h * full_w * c];
        for (n, img) in self.images.iter().enumerate() {
            let (gr, gc) = (n / self.cols, n % self.cols);
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let px = ((gr * h + y) * full_w + gc * w + x) * c + ch;
                        out[px] = img[(ch * h + y) * w + x];
                    }
                }
            }
        }
        out
    }
}

/// Deterministic generator means for `codes`, one image per code, `cols` per row.
pub fn generate_grid<T: Scalar>(
    bundle: &GanBundle<T>,
    codes: &[LatentCode<T>],
    cols: usize,
    denorm: &Denormalize,
) -> Result<ImageGrid> {
    if cols == 0 || codes.is_empty() {
        return Err(TagiError::precondition("a grid needs at least one code and one column"));
    }
    let shape = bundle.gnet.net.output_shape();
    let mut images = Vec::with_capacity(codes.len());
    // one code at a time: batch normalisation in the generator would couple the cells
    for code in codes {
        let out = bundle.generate(std::slice::from_ref(code))?;
        let plane = shape.width * shape.height;
        let mut img = Vec::with_capacity(out[0].len());
        for (i, m) in out[0].mean().iter().enumerate() {
            let (mean, std) = denorm.channel(i / plane);
            let v = m.to_f64_lossy() * std + mean;
            if !v.is_finite() {
                return Err(TagiError::NonFinite(format!("generated pixel {i} is {v}")));
            }
            img.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        images.push(img);
    }
    Ok(ImageGrid {
        cols,
        rows: codes.len().div_ceil(cols),
        channels: shape.depth,
        width: shape.width,
        height: shape.height,
        images,
    })
}
