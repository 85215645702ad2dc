//! Layer stacks, parameter initialisation and the batched forward/backward sweep.

mod config;
mod head;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use config::{
    preset, preset_table, NetworkConfig, NormMode, OutputHead, RowKind, TableRow, PRESET_NAMES,
};
pub use head::{classify, encode_target, Prediction, PseudoObservation};

use crate::error::{Result, TagiError};
use crate::gaussian::{mixture_reduce_slices, ActivationKind, GaussianVector, MixtureStats};
use crate::inference::{Innovation, LayerParams, ParamAccumulator, ParameterStore, VARIANCE_FLOOR};
use crate::layers::backward::{dense_backward, gather_backward, norm_backward, pool_backward, GradSink};
use crate::layers::forward::{affine_dense, affine_gather, batch_stats, normalize_into, pool_gather, squares, AffineParams};
use crate::layers::{Layer, LayerCache, LayerKind, NormStats, Shape};
use crate::scalar::Scalar;

/// A validated stack of layers. Parameters live in a separate [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    layers: Vec<Layer>,
}

/// Per-observation forward record of a mini-batch.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    inputs: Vec<GaussianVector<T>>,
    caches: Vec<Vec<LayerCache<T>>>,
    w_mu2: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn batch_size(&self) -> usize {
        self.inputs.len()
    }

    pub fn input(&self, sample: usize) -> &GaussianVector<T> {
        &self.inputs[sample]
    }

    /// Prior moments of the output layer's hidden units.
    pub fn output(&self, sample: usize) -> &GaussianVector<T> {
        &self.caches[sample].last().expect("network has layers").z_prior
    }

    /// Prior moments of the output layer after its activation.
    pub fn output_activation(&self, sample: usize) -> &GaussianVector<T> {
        &self.caches[sample].last().expect("network has layers").a
    }

    /// Jacobian of the output activation, to map activation innovations onto the output.
    pub fn output_jacobian(&self, sample: usize) -> &[T] {
        &self.caches[sample].last().expect("network has layers").jacobian
    }

    pub fn caches(&self, sample: usize) -> &[LayerCache<T>] {
        &self.caches[sample]
    }

    pub fn caches_mut(&mut self, sample: usize) -> &mut [LayerCache<T>] {
        &mut self.caches[sample]
    }
}

fn affine<'a, T: Scalar>(p: &'a LayerParams<T>, w_mu2: &'a [T]) -> AffineParams<'a, T> {
    AffineParams {
        w_mu: p.weights.mean(),
        w_var: p.weights.var(),
        w_mu2,
        b_mu: p.biases.mean(),
        b_var: p.biases.var(),
    }
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let layers = config.layer_specs()?.into_iter().map(Layer::new).collect::<Result<Vec<_>>>()?;
        Ok(Self { config, layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.layers[0].spec.in_shape
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("network has layers").spec.out_shape.len()
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().expect("network has layers").spec.out_shape
    }

    pub fn uses_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.spec.kind == LayerKind::BatchNorm)
    }

    /// He initialisation: weight means `N(0, g·2/fan_in)`, weight variances
    /// `g·2/fan_in`, bias means 0 and bias variances `g·2/fan_in`.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParameterStore<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = self.config.init_gain;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let s = &l.spec;
                if !s.kind.has_parameters() {
                    return LayerParams::default();
                }
                let v = gain * 2.0 / s.fan_in() as f64;
                let normal = Normal::new(0.0, v.sqrt()).expect("finite scale");
                let w_mu: Vec<T> = (0..s.num_weights()).map(|_| T::lit(normal.sample(&mut rng))).collect();
                let nb = s.num_biases();
                LayerParams {
                    weights: GaussianVector::from_parts_unchecked(w_mu, vec![T::lit(v); s.num_weights()]),
                    biases: GaussianVector::from_parts_unchecked(vec![T::zero(); nb], vec![T::lit(v); nb]),
                }
            })
            .collect();
        ParameterStore { layers }
    }

    /// Checks that a parameter store matches this network layer for layer.
    pub fn check_params<T: Scalar>(&self, params: &ParameterStore<T>) -> Result<()> {
        if params.layers.len() != self.layers.len() {
            return Err(TagiError::config(format!(
                "parameter store has {} layers, network has {}",
                params.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (l, p)) in self.layers.iter().zip(&params.layers).enumerate() {
            let want = if l.spec.kind.has_parameters() { (l.spec.num_weights(), l.spec.num_biases()) } else { (0, 0) };
            if (p.weights.len(), p.biases.len()) != want {
                return Err(TagiError::config(format!("layer {i}: parameter counts do not match {}", l.spec.kind)));
            }
        }
        Ok(())
    }

    /// Propagates moments through every layer for a whole mini-batch.
    ///
    /// Batch normalisation pools statistics over the batch, so it needs at least
    /// two observations.
    pub fn forward<T: Scalar>(&self, params: &ParameterStore<T>, inputs: &[GaussianVector<T>]) -> Result<Trace<T>> {
        self.check_params(params)?;
        if inputs.is_empty() {
            return Err(TagiError::precondition("empty mini-batch"));
        }
        let n_in = self.input_shape().len();
        for x in inputs {
            if x.len() != n_in {
                return Err(TagiError::precondition(format!("input has {} units, network expects {n_in}", x.len())));
            }
            if !x.all_finite() {
                return Err(TagiError::Data("non-finite input".into()));
            }
        }
        let w_mu2: Vec<Vec<T>> = params.layers.iter().map(|p| squares(p.weights.mean())).collect();
        let batch = inputs.len();
        let mut caches: Vec<Vec<LayerCache<T>>> = (0..batch).map(|_| Vec::with_capacity(self.layers.len())).collect();
        let identity_norm = self.config.identity_norm;
        for (l, layer) in self.layers.iter().enumerate() {
            let spec = &layer.spec;
            let n_out = spec.out_shape.len();
            let batch_norm = if spec.kind == LayerKind::BatchNorm && !identity_norm {
                let refs: Vec<&GaussianVector<T>> =
                    if l == 0 { inputs.iter().collect() } else { caches.iter().map(|c| &c[l - 1].a).collect() };
                Some(NormStats::Batch(Arc::new(batch_stats(&refs)?)))
            } else {
                None
            };
            for s in 0..batch {
                let input = if l == 0 { &inputs[s] } else { &caches[s][l - 1].a };
                let mut z = GaussianVector::zeros(n_out);
                let cache = {
                    let (om, ov) = z.parts_mut();
                    match spec.kind {
                        LayerKind::FullyConnected => {
                            affine_dense(&affine(&params.layers[l], &w_mu2[l]), input.mean(), input.var(), om, ov);
                            None
                        }
                        LayerKind::Conv2d | LayerKind::TransposedConv2d => {
                            affine_gather(layer.map(), &affine(&params.layers[l], &w_mu2[l]), input.mean(), input.var(), om, ov);
                            None
                        }
                        LayerKind::AvgPool => {
                            pool_gather(layer.map(), spec.in_shape.depth, spec.in_shape.plane(), input.mean(), input.var(), om, ov);
                            None
                        }
                        LayerKind::LayerNorm | LayerKind::BatchNorm => {
                            let stats = if identity_norm {
                                NormStats::Layer(MixtureStats::identity())
                            } else if let Some(b) = &batch_norm {
                                b.clone()
                            } else {
                                NormStats::Layer(mixture_reduce_slices(input.mean(), input.var())?)
                            };
                            normalize_into(&stats, input.mean(), input.var(), om, ov);
                            Some(stats)
                        }
                    }
                };
                let mut c = if spec.activation == ActivationKind::Identity {
                    let jac = vec![T::one(); n_out];
                    LayerCache::new(z.clone(), z, jac, None)
                } else {
                    LayerCache::from_hidden(z, spec.activation)
                };
                c.norm_stats = cache;
                caches[s].push(c);
            }
        }
        for c in &caches {
            let last = c.last().expect("network has layers");
            if !last.z_prior.all_finite() || !last.a.all_finite() {
                return Err(TagiError::NonFinite("output moments".into()));
            }
        }
        Ok(Trace { inputs: inputs.to_vec(), caches, w_mu2 })
    }

    /// Output hidden-state moments for a batch, without keeping the trace.
    pub fn predict<T: Scalar>(&self, params: &ParameterStore<T>, inputs: &[GaussianVector<T>]) -> Result<Vec<GaussianVector<T>>> {
        let trace = self.forward(params, inputs)?;
        Ok(trace.caches.into_iter().map(|mut c| c.pop().expect("network has layers").z_prior).collect())
    }

    /// Backward sweep for one observation, starting from an innovation on the
    /// output hidden units.
    ///
    /// Parameter sums are added to `acc` when given. With `want_input` the
    /// innovation on the network input is returned as well, which lets another
    /// network feeding this one continue the sweep.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParameterStore<T>,
        trace: &mut Trace<T>,
        sample: usize,
        innov: Innovation<T>,
        mut acc: Option<&mut ParamAccumulator<T>>,
        want_input: bool,
    ) -> Result<Option<Innovation<T>>> {
        if sample >= trace.caches.len() {
            return Err(TagiError::precondition(format!("sample {sample} not in the trace")));
        }
        if innov.len() != self.output_len() {
            return Err(TagiError::precondition(format!(
                "innovation has {} units, output layer has {}",
                innov.len(),
                self.output_len()
            )));
        }
        if let Some(a) = acc.as_deref() {
            if a.layers.len() != self.layers.len() {
                return Err(TagiError::precondition("accumulator does not match the network"));
            }
        }
        let Trace { inputs, caches, w_mu2 } = trace;
        let caches = &mut caches[sample];
        let (mut dm, mut ds) = (innov.mean, innov.var);
        for l in (0..self.layers.len()).rev() {
            let spec = &self.layers[l].spec;
            let (before, rest) = caches.split_at_mut(l);
            let cache = &mut rest[0];
            cache.consume()?;
            let input = if l == 0 { &inputs[sample] } else { &before[l - 1].a };
            let need_input = l > 0 || want_input;
            let n_in = spec.in_shape.len();
            let mut im = vec![T::zero(); if need_input { n_in } else { 0 }];
            let mut is = vec![T::zero(); if need_input { n_in } else { 0 }];
            let target = if need_input { Some((&mut im[..], &mut is[..])) } else { None };
            match spec.kind {
                LayerKind::FullyConnected | LayerKind::Conv2d | LayerKind::TransposedConv2d => {
                    let p = affine(&params.layers[l], &w_mu2[l]);
                    let sink = acc.as_deref_mut().map(|a| {
                        let s = &mut a.layers[l];
                        GradSink { w_m: &mut s.w_m, w_s: &mut s.w_s, b_m: &mut s.b_m, b_s: &mut s.b_s }
                    });
                    if spec.kind == LayerKind::FullyConnected {
                        dense_backward(&p, input.mean(), &dm, &ds, sink, target);
                    } else {
                        gather_backward(self.layers[l].map(), &p, input.mean(), input.var(), &dm, &ds, sink, target);
                    }
                }
                LayerKind::AvgPool => {
                    if let Some((im, is)) = target {
                        pool_backward(self.layers[l].map(), spec.in_shape.depth, spec.in_shape.plane(), &dm, &ds, im, is);
                    }
                }
                LayerKind::LayerNorm | LayerKind::BatchNorm => {
                    if let Some((im, is)) = target {
                        let stats = cache.norm_stats.as_ref().expect("normalization layer records statistics");
                        norm_backward(stats, &dm, &ds, im, is);
                    }
                }
            }
            if !need_input {
                return Ok(None);
            }
            if l == 0 {
                return Ok(Some(Innovation { mean: im, var: is }));
            }
            // activation innovations onto the previous layer's hidden units
            let prev = &before[l - 1];
            let floor = T::lit(VARIANCE_FLOOR);
            for i in 0..n_in {
                let j = prev.jacobian[i];
                im[i] = im[i] * j;
                is[i] = is[i] * j * j;
                // hidden-state posterior variances share the parameter floor
                let v = prev.z_prior.var()[i];
                if v > T::zero() && v + v * v * is[i] < floor {
                    is[i] = (floor - v) / (v * v);
                }
            }
            dm = im;
            ds = is;
        }
        unreachable!("loop returns at the first layer")
    }

    /// Like [`Network::backward`], starting from an innovation on the output
    /// activations instead of the hidden units.
    pub fn backward_from_activation<T: Scalar>(
        &self,
        params: &ParameterStore<T>,
        trace: &mut Trace<T>,
        sample: usize,
        mut innov: Innovation<T>,
        acc: Option<&mut ParamAccumulator<T>>,
        want_input: bool,
    ) -> Result<Option<Innovation<T>>> {
        let jac = trace.output_jacobian(sample);
        if jac.len() != innov.len() {
            return Err(TagiError::precondition("innovation does not match the output activations"));
        }
        for i in 0..jac.len() {
            innov.mean[i] = innov.mean[i] * jac[i];
            innov.var[i] = innov.var[i] * jac[i] * jac[i];
        }
        self.backward(params, trace, sample, innov, acc, want_input)
    }
}

/// Builds a network and He-initialised parameters from a seed.
pub fn build<T: Scalar>(config: NetworkConfig, seed: u64) -> Result<(Network, ParameterStore<T>)> {
    let net = Network::new(config)?;
    let params = net.init_params(seed);
    Ok((net, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(head: &str, rows: &str) -> NetworkConfig {
        NetworkConfig::parse(&format!("head: {head}\n{rows}")).unwrap()
    }

    #[test]
    fn he_init_statistics() {
        let (net, params) = build::<f64>(preset("mnist-cnn").unwrap(), 7).unwrap();
        let fc = &params.layers[4];
        let fan = net.layers()[4].spec.fan_in() as f64;
        assert_eq!(fan, 1024.0);
        let n = fc.weights.len() as f64;
        let mean = fc.weights.mean().iter().sum::<f64>() / n;
        let var = fc.weights.mean().iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 * (2.0 / fan / n).sqrt());
        assert!((var / (2.0 / fan) - 1.0).abs() < 0.02);
        assert!(fc.weights.var().iter().all(|v| (*v - 2.0 / fan).abs() < 1e-15));
        assert!(fc.biases.mean().iter().all(|b| *b == 0.0));
        assert!(params.layers[1].weights.is_empty());
    }

    #[test]
    fn init_is_reproducible() {
        let a = build::<f32>(preset("mnist-cnn").unwrap(), 3).unwrap().1;
        let b = build::<f32>(preset("mnist-cnn").unwrap(), 3).unwrap().1;
        let c = build::<f32>(preset("mnist-cnn").unwrap(), 4).unwrap().1;
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn forward_shapes_and_finiteness() {
        let (net, params) = build::<f32>(preset("mnist-cnn").unwrap(), 1).unwrap();
        let x = GaussianVector::deterministic((0..784).map(|i| (i % 7) as f32 / 7.0 - 0.4).collect());
        let trace = net.forward(&params, &[x.clone(), x]).unwrap();
        assert_eq!(trace.output(0).len(), 10);
        assert!(trace.output(1).var().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn backward_twice_is_a_sequencing_error() {
        let net = Network::new(tiny("regression 1", "input 2 - - - -\nfc 3 - - - relu\noutput 1 - - - -\n")).unwrap();
        let params = net.init_params::<f64>(0);
        let mut trace = net.forward(&params, &[GaussianVector::deterministic(vec![1.0, -1.0])]).unwrap();
        let innov = Innovation { mean: vec![0.1], var: vec![-0.2] };
        net.backward(&params, &mut trace, 0, innov.clone(), None, false).unwrap();
        assert!(matches!(net.backward(&params, &mut trace, 0, innov, None, false), Err(TagiError::Sequencing(_))));
    }

    #[test]
    fn batch_norm_needs_two_observations() {
        let net = Network::new(preset("mnist-infogan-dnet").unwrap()).unwrap();
        let params = net.init_params::<f32>(0);
        let x = GaussianVector::deterministic(vec![0.1f32; 784]);
        assert!(matches!(net.forward(&params, &[x]), Err(TagiError::Config(_))));
    }

    #[test]
    fn mismatched_store_rejected() {
        let a = Network::new(preset("mnist-infogan-pnet").unwrap()).unwrap();
        let b = Network::new(preset("mnist-infogan-qnet").unwrap()).unwrap();
        let p = b.init_params::<f32>(0);
        assert!(a.forward(&p, &[GaussianVector::zeros(512)]).is_err());
    }
}
