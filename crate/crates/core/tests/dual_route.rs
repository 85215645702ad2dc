//! The fused backward sweep against explicit cross-covariance smoothing.
//!
//! `smooth_layer` with `cross_cov_normalized` spells out every covariance
//! between a layer's variables and the next layer's hidden units; the network's
//! backward pass folds the same algebra into transposed maps. Both must give
//! the same parameter posteriors, also through convolutions, transposed
//! convolutions and layer normalisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagi::inference::{infer_minibatch, output_update, smooth_layer, Deltas, ObservationModel, VARIANCE_FLOOR};
use tagi::layers::{cross_cov_normalized, LayerCache, LayerKind};
use tagi::network::NetworkConfig;
use tagi::{GaussianVector, Network, ParameterStore};

fn smooth_params(
    net: &Network,
    params: &ParameterStore<f64>,
    x: &GaussianVector<f64>,
    y: &[f64],
    obs: &ObservationModel,
) -> Vec<(Deltas<f64>, Deltas<f64>)> {
    let trace = net.forward(params, std::slice::from_ref(x)).unwrap();
    let layers = net.layers();
    let caches: Vec<LayerCache<f64>> = trace.caches(0).to_vec();
    // parametric layers, each paired with the cache of the variables feeding it;
    // a normalisation layer in between lends its statistics to that cache
    let mut chain: Vec<(usize, LayerCache<f64>)> = Vec::new();
    let mut feeding = LayerCache::new(x.clone(), x.clone(), vec![1.0; x.len()], None);
    for (l, layer) in layers.iter().enumerate() {
        match layer.spec.kind {
            LayerKind::LayerNorm | LayerKind::BatchNorm => feeding.norm_stats = caches[l].norm_stats.clone(),
            k if k.has_parameters() => {
                chain.push((l, feeding.clone()));
                feeding = caches[l].clone();
            }
            k => panic!("{k} not supported by the explicit route"),
        }
    }
    let mut deltas = vec![(Deltas::default(), Deltas::default()); layers.len()];
    let last = layers.len() - 1;
    let mut post = output_update(&caches[last].z_prior, y, obs).unwrap();
    for (l, cache) in chain.iter_mut().rev() {
        let p = &params.layers[*l];
        let cc = cross_cov_normalized(cache, &p.weights, &p.biases, &layers[*l]).unwrap();
        let sm = smooth_layer(cache, &caches[*l].z_prior, &post, &cc).unwrap();
        deltas[*l] = (sm.weights, sm.biases);
        post = sm.states;
    }
    deltas
}

fn check(table: &str, cases: usize, seed: u64) {
    let net = Network::new(NetworkConfig::parse(table).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let params = net.init_params::<f64>(rng.random());
        let n = net.input_shape().len();
        let x = GaussianVector::deterministic((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y: Vec<f64> = (0..net.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let obs = ObservationModel::new(rng.random_range(0.3..2.0), 1.0).unwrap();
        let mut fast = params.clone();
        infer_minibatch(&net, &mut fast, std::slice::from_ref(&x), std::slice::from_ref(&y), &obs).unwrap();
        let slow = smooth_params(&net, &params, &x, &y, &obs);
        for (l, (dw, db)) in slow.iter().enumerate() {
            let pairs = [(&params.layers[l].weights, &fast.layers[l].weights, dw), (&params.layers[l].biases, &fast.layers[l].biases, db)];
            for (prior, post, d) in pairs {
                for i in 0..prior.len() {
                    let (m, v) = (prior.mean()[i] + d.mean[i], (prior.var()[i] + d.var[i]).max(VARIANCE_FLOOR));
                    assert!((post.mean()[i] - m).abs() < 1e-10 * (1.0 + m.abs()), "case {case} layer {l} mean {i}: {} vs {m}", post.mean()[i]);
                    assert!((post.var()[i] - v).abs() < 1e-10 * (1.0 + v.abs()), "case {case} layer {l} var {i}: {} vs {v}", post.var()[i]);
                }
            }
        }
    }
}

#[test]
fn dense_multi_output() {
    check("head: regression 3\ninput 4 - - - -\nfc 5 - - - relu\nfc 4 - - - tanh\noutput 3 - - - -\n", 20, 1);
}

#[test]
fn convolutions() {
    check(
        "head: regression 2\ninput 2x6x6 - - - -\nconv 3x6x6 3x3 1 1 relu\nconv 4x2x2 3x3 0 2 lrelu\noutput 2 - - - -\n",
        10,
        2,
    );
}

#[test]
fn transposed_convolutions() {
    check(
        "head: generator\ninput 8 - - - -\nfc 12 - - - relu\ntconv 3x4x4 3x3 1 2 relu\noutput 1x8x8 3x3 1 2 -\n",
        10,
        3,
    );
}

#[test]
fn layer_normalised() {
    check(
        "head: regression 2\ninput 2x5x5 - - - -\nconv 3x5x5 3x3 1 1 relu layer\nfc 6 - - - relu layer\noutput 2 - - - -\n",
        10,
        4,
    );
}
