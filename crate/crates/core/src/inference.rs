//! Backward inference: Gaussian conditioning at the output, layer-wise smoothing
//! toward the input, and in-place parameter updates.

use crate::error::{Result, TagiError};
use crate::gaussian::GaussianVector;
use crate::layers::{CrossCov, LayerCache};
use crate::network::Network;
use crate::scalar::Scalar;

/// Floor applied to any posterior variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Homoscedastic observation noise on the output layer and its per-epoch decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationModel {
    pub sigma_v: f64,
    pub eta: f64,
    pub epoch: usize,
}

impl ObservationModel {
    pub fn new(sigma_v: f64, eta: f64) -> Result<Self> {
        if !(sigma_v > 0.0 && sigma_v.is_finite()) {
            return Err(TagiError::config(format!("observation noise must be positive, got {sigma_v}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(TagiError::config(format!("noise decay factor must lie in (0, 1], got {eta}")));
        }
        Ok(Self { sigma_v, eta, epoch: 0 })
    }

    /// Noise after `epochs` decays from `sigma_v0`.
    pub fn closed_form(sigma_v0: f64, eta: f64, epochs: usize) -> f64 {
        sigma_v0 * eta.powi(epochs as i32)
    }
}

/// One epoch-boundary step of `σ_V ← η·σ_V`.
pub fn decay_noise(obs: ObservationModel) -> ObservationModel {
    ObservationModel { sigma_v: obs.eta * obs.sigma_v, eta: obs.eta, epoch: obs.epoch + 1 }
}

/// Posterior-minus-prior moments of a layer's hidden units, scaled by the prior
/// variance: `mean = Δμ/σ²`, `var = Δσ²/σ⁴`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Innovation<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> Innovation<T> {
    pub fn zeros(n: usize) -> Self {
        Self { mean: vec![T::zero(); n], var: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Elementwise sum; two heads observing the same trunk contribute additively.
    pub fn add_assign(&mut self, other: &Innovation<T>) {
        for (a, b) in self.mean.iter_mut().zip(&other.mean) {
            *a = *a + *b;
        }
        for (a, b) in self.var.iter_mut().zip(&other.var) {
            *a = *a + *b;
        }
    }

    /// Recovers the innovation that carries `prior` to `posterior`.
    pub fn between(prior: &GaussianVector<T>, posterior: &GaussianVector<T>) -> Result<Self> {
        if prior.len() != posterior.len() {
            return Err(TagiError::precondition("prior and posterior lengths differ"));
        }
        let mut out = Self::zeros(prior.len());
        for i in 0..prior.len() {
            let v = prior.var()[i];
            if v > T::zero() {
                out.mean[i] = (posterior.mean()[i] - prior.mean()[i]) / v;
                out.var[i] = (posterior.var()[i] - v) / (v * v);
            }
        }
        Ok(out)
    }

    /// Applies the innovation to the prior it was computed against.
    pub fn posterior(&self, prior: &GaussianVector<T>) -> GaussianVector<T> {
        let floor = T::lit(VARIANCE_FLOOR);
        let mean = prior.mean().iter().zip(prior.var()).zip(&self.mean).map(|((m, v), d)| *m + *v * *d).collect();
        let var = prior
            .var()
            .iter()
            .zip(&self.var)
            .map(|(v, d)| (*v + *v * *v * *d).max(if *v > T::zero() { floor } else { T::zero() }))
            .collect();
        GaussianVector::from_parts_unchecked(mean, var)
    }
}

/// Moment changes of a set of parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Deltas<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Conditions output units `Z` on `y = Z + V`, `V ~ N(0, σ_V²)`, unit by unit.
pub fn output_update<T: Scalar>(
    z_out: &GaussianVector<T>,
    y: &[T],
    obs: &ObservationModel,
) -> Result<GaussianVector<T>> {
    let innov = output_innovation(z_out, y, obs.sigma_v)?;
    Ok(innov.posterior(z_out))
}

/// Innovation at the output: `δμ = (y - μ)/(σ² + σ_V²)`, `δS = -1/(σ² + σ_V²)`.
pub fn output_innovation<T: Scalar>(z_out: &GaussianVector<T>, y: &[T], sigma_v: f64) -> Result<Innovation<T>> {
    if y.len() != z_out.len() {
        return Err(TagiError::precondition(format!("{} observations for {} output units", y.len(), z_out.len())));
    }
    if !(sigma_v > 0.0) {
        return Err(TagiError::precondition("observation noise must be positive"));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(TagiError::Data(format!("non-finite observation {bad}")));
    }
    let noise = T::lit(sigma_v * sigma_v);
    let mut innov = Innovation::zeros(y.len());
    for i in 0..y.len() {
        let s = z_out.var()[i] + noise;
        innov.mean[i] = (y[i] - z_out.mean()[i]) / s;
        innov.var[i] = -T::one() / s;
    }
    Ok(innov)
}

/// Result of smoothing one layer given the posterior of the next.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedLayer<T> {
    pub states: GaussianVector<T>,
    pub weights: Deltas<T>,
    pub biases: Deltas<T>,
}

/// Smoothing step for layer `j` from explicit cross-covariances:
/// every variable `θ` with covariance `c` to unit `u` of `Z⁺` moves by
/// `Σᵤ c/σ²ᵤ · Δμᵤ` in mean and `Σᵤ (c/σ²ᵤ)² · Δσ²ᵤ` in variance, where the
/// gains use the prior moments of `Z⁺` from the forward pass.
pub fn smooth_layer<T: Scalar>(
    cache_j: &mut LayerCache<T>,
    zplus_prior: &GaussianVector<T>,
    zplus_posterior: &GaussianVector<T>,
    crosscov: &CrossCov<T>,
) -> Result<SmoothedLayer<T>> {
    cache_j.consume()?;
    if zplus_prior.len() != zplus_posterior.len() {
        return Err(TagiError::precondition("prior and posterior of the next layer differ in length"));
    }
    if crosscov.dz_dzplus.len() != cache_j.z_prior.len() {
        return Err(TagiError::precondition("cross-covariance rows do not match the cached layer"));
    }
    let gain_terms = |row: &[(usize, T)]| -> Result<(T, T)> {
        let mut dm = T::zero();
        let mut ds = T::zero();
        for &(u, c) in row {
            let v = *zplus_prior.var().get(u).ok_or_else(|| TagiError::precondition("cross-covariance names a missing unit"))?;
            if v <= T::zero() {
                continue;
            }
            let g = c / v;
            dm = dm + g * (zplus_posterior.mean()[u] - zplus_prior.mean()[u]);
            ds = ds + g * g * (zplus_posterior.var()[u] - v);
        }
        Ok((dm, ds))
    };
    let floor = T::lit(VARIANCE_FLOOR);
    let mut mean = Vec::with_capacity(cache_j.z_prior.len());
    let mut var = Vec::with_capacity(cache_j.z_prior.len());
    for (i, row) in crosscov.dz_dzplus.iter().enumerate() {
        let (dm, ds) = gain_terms(row)?;
        let prior = cache_j.z_prior.get(i);
        mean.push(prior.mean + dm);
        let v = prior.var + ds;
        var.push(if prior.var > T::zero() { v.max(floor) } else { v.max(T::zero()) });
    }
    let deltas = |rows: &[Vec<(usize, T)>]| -> Result<Deltas<T>> {
        let mut d = Deltas { mean: Vec::with_capacity(rows.len()), var: Vec::with_capacity(rows.len()) };
        for row in rows {
            let (dm, ds) = gain_terms(row)?;
            d.mean.push(dm);
            d.var.push(ds);
        }
        Ok(d)
    };
    Ok(SmoothedLayer {
        states: GaussianVector::from_parts_unchecked(mean, var),
        weights: deltas(&crosscov.dw_dzplus)?,
        biases: deltas(&crosscov.db_dzplus)?,
    })
}

/// Weight and bias moments of one layer; empty for layers without parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams<T> {
    pub weights: GaussianVector<T>,
    pub biases: GaussianVector<T>,
}

/// Gaussian moments of every parameter of a network, indexed by layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore<T> {
    pub layers: Vec<LayerParams<T>>,
}

/// Variance clamps applied during one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClampReport {
    pub clamped: usize,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.all_finite() && l.biases.all_finite())
    }

    /// Little-endian dump of every mean and variance, layer by layer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_parameters() * 2 * T::BYTES);
        for l in &self.layers {
            for v in [l.weights.mean(), l.weights.var(), l.biases.mean(), l.biases.var()] {
                for x in v {
                    x.write_le(&mut out);
                }
            }
        }
        out
    }

    /// Applies accumulated sums: `μ += σ²·Σm`, `σ² += σ⁴·ΣS`, flooring variances.
    pub fn apply(&mut self, acc: &ParamAccumulator<T>) -> ClampReport {
        let floor = T::lit(VARIANCE_FLOOR);
        let mut report = ClampReport::default();
        let mut update = |g: &mut GaussianVector<T>, sm: &[T], ss: &[T]| {
            let (mean, var) = g.parts_mut();
            for i in 0..mean.len() {
                let v = var[i];
                mean[i] = mean[i] + v * sm[i];
                let nv = v + v * v * ss[i];
                var[i] = if nv < floor || nv.is_nan() {
                    report.clamped += 1;
                    floor
                } else {
                    nv
                };
            }
        };
        for (p, a) in self.layers.iter_mut().zip(&acc.layers) {
            update(&mut p.weights, &a.w_m, &a.w_s);
            update(&mut p.biases, &a.b_m, &a.b_s);
        }
        report
    }

    /// Converts between scalar precisions.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams { weights: l.weights.cast(), biases: l.biases.cast() })
                .collect(),
        }
    }
}

/// Per-layer sums of innovation statistics over a mini-batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerSums<T> {
    pub w_m: Vec<T>,
    pub w_s: Vec<T>,
    pub b_m: Vec<T>,
    pub b_s: Vec<T>,
}

/// Accumulates parameter updates computed against one snapshot of the store so
/// they can be applied together.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamAccumulator<T> {
    pub layers: Vec<LayerSums<T>>,
}

impl<T: Scalar> ParamAccumulator<T> {
    pub fn for_store(store: &ParameterStore<T>) -> Self {
        Self {
            layers: store
                .layers
                .iter()
                .map(|l| LayerSums {
                    w_m: vec![T::zero(); l.weights.len()],
                    w_s: vec![T::zero(); l.weights.len()],
                    b_m: vec![T::zero(); l.biases.len()],
                    b_s: vec![T::zero(); l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn merge(&mut self, other: &ParamAccumulator<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in [(&mut a.w_m, &b.w_m), (&mut a.w_s, &b.w_s), (&mut a.b_m, &b.b_m), (&mut a.b_s, &b.b_s)] {
                for (p, q) in x.iter_mut().zip(y) {
                    *p = *p + *q;
                }
            }
        }
    }

    /// Parameter mean changes these sums produce on `store`.
    pub fn mean_deltas(&self, store: &ParameterStore<T>) -> Vec<Deltas<T>> {
        self.layers
            .iter()
            .zip(&store.layers)
            .map(|(a, p)| Deltas {
                mean: p.weights.var().iter().zip(&a.w_m).map(|(v, s)| *v * *s).collect(),
                var: p.weights.var().iter().zip(&a.w_s).map(|(v, s)| *v * *v * *s).collect(),
            })
            .collect()
    }
}

/// Summary of one mini-batch update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchReport<T> {
    pub clamped: usize,
    /// Mean absolute change of the weight means.
    pub mean_abs_delta: f64,
    /// Prior output moments of every observation, before the update.
    pub outputs: Vec<GaussianVector<T>>,
}

/// Forward pass, output conditioning and backward sweep for every element of a
/// mini-batch, followed by one application of the summed parameter updates.
pub fn infer_minibatch<T: Scalar>(
    net: &Network,
    params: &mut ParameterStore<T>,
    inputs: &[GaussianVector<T>],
    observations: &[Vec<T>],
    obs: &ObservationModel,
) -> Result<BatchReport<T>> {
    if inputs.len() != observations.len() {
        return Err(TagiError::precondition("one observation vector per input is required"));
    }
    let mut trace = net.forward(params, inputs)?;
    let mut acc = ParamAccumulator::for_store(params);
    for (i, y) in observations.iter().enumerate() {
        let innov = output_innovation(trace.output(i), y, obs.sigma_v)?;
        net.backward(params, &mut trace, i, innov, Some(&mut acc), false)?;
    }
    let outputs = (0..inputs.len()).map(|i| trace.output(i).clone()).collect();
    let mut report = finish_batch(params, &acc)?;
    report.outputs = outputs;
    Ok(report)
}

fn finish_batch<T: Scalar>(params: &mut ParameterStore<T>, acc: &ParamAccumulator<T>) -> Result<BatchReport<T>> {
    let deltas = acc.mean_deltas(params);
    let (sum, n) = deltas
        .iter()
        .flat_map(|d| d.mean.iter())
        .fold((0.0, 0usize), |(s, n), d| (s + d.to_f64_lossy().abs(), n + 1));
    let report = params.apply(acc);
    if !params.all_finite() {
        return Err(TagiError::NonFinite("parameter moments after update".into()));
    }
    Ok(BatchReport {
        clamped: report.clamped,
        mean_abs_delta: if n > 0 { sum / n as f64 } else { 0.0 },
        outputs: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_examples() {
        let obs = ObservationModel::new(1.0, 1.0).unwrap();
        assert_eq!(decay_noise(obs).sigma_v, 1.0);
        let mut obs = ObservationModel::new(1.0, 0.975).unwrap();
        obs = decay_noise(obs);
        assert_eq!(obs.sigma_v, 0.975);
        assert_eq!(obs.epoch, 1);
        for _ in 1..50 {
            obs = decay_noise(obs);
        }
        assert!((obs.sigma_v - 0.975f64.powi(50)).abs() < 1e-12);
        assert!((obs.sigma_v - 0.281_988_102_340_916_9).abs() < 1e-12);
    }

    #[test]
    fn observation_model_rejects_bad_values() {
        assert!(ObservationModel::new(0.0, 0.9).is_err());
        assert!(ObservationModel::new(1.0, 0.0).is_err());
        assert!(ObservationModel::new(1.0, 1.5).is_err());
    }

    #[test]
    fn conditioning_examples() {
        let z = GaussianVector::new(vec![0.0f64], vec![1.0]).unwrap();
        let post = output_update(&z, &[2.0], &ObservationModel::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(post.mean(), &[1.0]);
        assert_eq!(post.var(), &[0.5]);

        let vague = output_update(&z, &[2.0], &ObservationModel::new(1e12, 1.0).unwrap()).unwrap();
        assert!((vague.mean()[0]).abs() < 1e-20 && (vague.var()[0] - 1.0).abs() < 1e-20);

        let exact = output_update(&z, &[2.0], &ObservationModel::new(1e-9, 1.0).unwrap()).unwrap();
        assert!((exact.mean()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_observation_is_a_data_error() {
        let z = GaussianVector::new(vec![0.0f64], vec![1.0]).unwrap();
        assert!(matches!(output_innovation(&z, &[f64::NAN], 1.0), Err(TagiError::Data(_))));
        assert!(matches!(output_innovation(&z, &[0.0, 1.0], 1.0), Err(TagiError::Precondition(_))));
    }

    #[test]
    fn innovation_roundtrip() {
        let prior = GaussianVector::new(vec![1.0f64, -2.0], vec![0.5, 2.0]).unwrap();
        let post = GaussianVector::new(vec![1.2, -1.0], vec![0.4, 1.0]).unwrap();
        let innov = Innovation::between(&prior, &post).unwrap();
        let back = innov.posterior(&prior);
        for (a, b) in back.mean().iter().zip(post.mean()) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in back.var().iter().zip(post.var()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn output_variance_never_grows() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let m: f64 = rng.random_range(-5.0..5.0);
            let v: f64 = rng.random_range(0.0..10.0);
            let z = GaussianVector::new(vec![m], vec![v]).unwrap();
            let obs = ObservationModel::new(rng.random_range(0.01..5.0), 1.0).unwrap();
            let post = output_update(&z, &[rng.random_range(-5.0..5.0)], &obs).unwrap();
            assert!(post.var()[0] <= v);
        }
    }
}
