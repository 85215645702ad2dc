//! The layer-wise sweep against brute-force conditioning of the full joint Gaussian.
//!
//! For a dense net with a deterministic input and a single output unit, the
//! hidden units of each layer are a-priori independent and the chain is Markov,
//! so the recursive sweep must reproduce the marginal posteriors of exact
//! joint conditioning. The joint is assembled independently here: parameters
//! are independent, hidden-unit variances follow the forward moment rule and
//! covariances follow `cov(X, Σ w·a + b) = Σ μ_w·cov(X, a) + μ_a·cov(X, w) + cov(X, b)`
//! with `cov(X, a) = J·cov(X, z)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagi::inference::{infer_minibatch, output_update, smooth_layer, Deltas, ObservationModel};
use tagi::layers::{cross_cov_normalized, LayerCache};
use tagi::network::NetworkConfig;
use tagi::{GaussianVector, Network, ParameterStore};

use crate::error::Result;

/// Variable indices of one dense layer in the joint.
struct Block {
    w: Vec<usize>,
    b: Vec<usize>,
    z: Vec<usize>,
}

/// Means and covariance of every parameter and hidden unit of a dense net.
pub struct Joint {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    blocks: Vec<Block>,
}

impl Joint {
    fn push(&mut self, mean: f64) -> usize {
        let n = self.mean.len();
        self.mean.push(mean);
        for row in &mut self.cov {
            row.push(0.0);
        }
        self.cov.push(vec![0.0; n + 1]);
        n
    }

    pub fn build(net: &Network, params: &ParameterStore<f64>, x: &[f64]) -> Joint {
        let mut j = Joint { mean: vec![], cov: vec![], blocks: vec![] };
        // previous-layer activations: mean, jacobian and the z index they derive from
        let mut prev: Vec<(f64, f64, Option<usize>)> = x.iter().map(|v| (*v, 0.0, None)).collect();
        for (l, layer) in net.layers().iter().enumerate() {
            let p = &params.layers[l];
            let (n_in, n_out) = (layer.spec.in_shape.len(), layer.spec.out_shape.len());
            let w: Vec<usize> = (0..n_in * n_out).map(|k| j.push(p.weights.mean()[k])).collect();
            for (k, &i) in w.iter().enumerate() {
                j.cov[i][i] = p.weights.var()[k];
            }
            let b: Vec<usize> = (0..n_out).map(|u| j.push(p.biases.mean()[u])).collect();
            for (u, &i) in b.iter().enumerate() {
                j.cov[i][i] = p.biases.var()[u];
            }
            let mut z = Vec::new();
            for u in 0..n_out {
                let mut mu = p.biases.mean()[u];
                let mut var = p.biases.var()[u];
                for i in 0..n_in {
                    let (ma, ja, zi) = prev[i];
                    let va = zi.map_or(0.0, |zi| ja * ja * j.cov[zi][zi]);
                    let (mw, vw) = (p.weights.mean()[u * n_in + i], p.weights.var()[u * n_in + i]);
                    mu += mw * ma;
                    var += vw * (va + ma * ma) + mw * mw * va;
                }
                let zi = j.push(mu);
                // covariance with every earlier variable
                for other in 0..zi {
                    let mut c = j.cov[other][b[u]];
                    for i in 0..n_in {
                        let (ma, ja, src) = prev[i];
                        let cov_a = src.map_or(0.0, |s| ja * j.cov[other][s]);
                        c += p.weights.mean()[u * n_in + i] * cov_a + ma * j.cov[other][w[u * n_in + i]];
                    }
                    j.cov[other][zi] = c;
                    j.cov[zi][other] = c;
                }
                j.cov[zi][zi] = var;
                z.push(zi);
            }
            let act = layer.spec.activation;
            prev = z
                .iter()
                .map(|&zi| {
                    let (a, d) = act.eval(j.mean[zi]);
                    (a, d, Some(zi))
                })
                .collect();
            j.blocks.push(Block { w, b, z });
        }
        j
    }

    /// Marginal posteriors given `y = z_out + v`, `v ~ N(0, σ_V²)`.
    fn condition(&self, out: usize, y: f64, sigma_v: f64) -> (Vec<f64>, Vec<f64>) {
        let s = self.cov[out][out] + sigma_v * sigma_v;
        let r = y - self.mean[out];
        let mean = (0..self.mean.len()).map(|i| self.mean[i] + self.cov[i][out] * r / s).collect();
        let var = (0..self.mean.len()).map(|i| self.cov[i][i] - self.cov[i][out] * self.cov[i][out] / s).collect();
        (mean, var)
    }
}

/// Allowed gap between the sweep and the joint, relative to `1 + |joint|`.
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointReport {
    pub nets: usize,
    pub cases: usize,
    /// Posterior moments compared (means and variances, both routes).
    pub compared: usize,
    /// Size of the largest joint.
    pub max_variables: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl JointReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn close(&mut self, a: f64, b: f64, what: impl FnOnce() -> String) {
        let gap = (a - b).abs() / (1.0 + b.abs());
        self.compared += 1;
        self.worst = self.worst.max(gap);
        if gap.is_nan() || gap > TOLERANCE {
            self.failures.push(format!("{}: sweep {a} vs joint {b}", what()));
        }
    }
}

fn random_params(net: &Network, rng: &mut ChaCha8Rng) -> ParameterStore<f64> {
    let mut p = net.init_params::<f64>(rng.random());
    for l in &mut p.layers {
        let nw = l.weights.len();
        let nb = l.biases.len();
        l.weights = GaussianVector::new(
            (0..nw).map(|_| rng.random_range(-1.5..1.5)).collect(),
            (0..nw).map(|_| rng.random_range(0.05..1.0)).collect(),
        )
        .expect("positive variances");
        l.biases = GaussianVector::new(
            (0..nb).map(|_| rng.random_range(-0.5..0.5)).collect(),
            (0..nb).map(|_| rng.random_range(0.05..0.5)).collect(),
        )
        .expect("positive variances");
    }
    p
}

/// Explicit cross-covariance smoothing, returning per-layer hidden-state
/// posteriors (index `l` is the output of layer `l`) and parameter deltas.
fn smooth_route(
    net: &Network,
    params: &ParameterStore<f64>,
    x: &GaussianVector<f64>,
    y: f64,
    obs: &ObservationModel,
) -> Result<(Vec<GaussianVector<f64>>, Vec<(Deltas<f64>, Deltas<f64>)>)> {
    let trace = net.forward(params, std::slice::from_ref(x))?;
    let mut caches: Vec<LayerCache<f64>> = trace.caches(0).to_vec();
    let mut input_cache = LayerCache::new(x.clone(), x.clone(), vec![1.0; x.len()], None);
    let n = net.layers().len();
    let mut states = vec![GaussianVector::zeros(0); n];
    let mut deltas = vec![(Deltas::default(), Deltas::default()); n];
    states[n - 1] = output_update(&caches[n - 1].z_prior, &[y], obs)?;
    for l in (0..n).rev() {
        let prior = caches[l].z_prior.clone();
        let post = states[l].clone();
        let prev = if l == 0 { &mut input_cache } else { &mut caches[l - 1] };
        let p = &params.layers[l];
        let cc = cross_cov_normalized(prev, &p.weights, &p.biases, &net.layers()[l])?;
        let sm = smooth_layer(prev, &prior, &post, &cc)?;
        deltas[l] = (sm.weights, sm.biases);
        if l > 0 {
            states[l - 1] = sm.states;
        }
    }
    Ok((states, deltas))
}

/// Compares both inference routes with the joint on `cases` random draws of one net.
pub fn check_net(table: &str, cases: usize, seed: u64, report: &mut JointReport) -> Result<()> {
    let net = Network::new(NetworkConfig::parse(table)?)?;
    report.nets += 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_in = net.input_shape().len();
    for case in 0..cases {
        let params = random_params(&net, &mut rng);
        let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = rng.random_range(-3.0..3.0);
        let obs = ObservationModel::new(rng.random_range(0.2..2.0), 1.0)?;
        report.cases += 1;

        let joint = Joint::build(&net, &params, &x);
        report.max_variables = report.max_variables.max(joint.mean.len());
        let out = joint.blocks.last().expect("at least the output layer").z[0];
        let (pm, pv) = joint.condition(out, y, obs.sigma_v);

        // fast path: parameters updated in place
        let mut fast = params.clone();
        let xg = GaussianVector::deterministic(x.clone());
        infer_minibatch(&net, &mut fast, std::slice::from_ref(&xg), &[vec![y]], &obs)?;
        // explicit smoothing route
        let (states, deltas) = smooth_route(&net, &params, &xg, y, &obs)?;

        for (l, block) in joint.blocks.iter().enumerate() {
            let tag = |k: &str, i: usize| format!("case {case} layer {l} {k}[{i}]");
            for (k, &v) in block.w.iter().enumerate() {
                report.close(fast.layers[l].weights.mean()[k], pm[v], || tag("w mean fast", k));
                report.close(fast.layers[l].weights.var()[k], pv[v], || tag("w var fast", k));
                report.close(params.layers[l].weights.mean()[k] + deltas[l].0.mean[k], pm[v], || tag("w mean smooth", k));
                report.close(params.layers[l].weights.var()[k] + deltas[l].0.var[k], pv[v], || tag("w var smooth", k));
            }
            for (k, &v) in block.b.iter().enumerate() {
                report.close(fast.layers[l].biases.mean()[k], pm[v], || tag("b mean fast", k));
                report.close(fast.layers[l].biases.var()[k], pv[v], || tag("b var fast", k));
                report.close(params.layers[l].biases.mean()[k] + deltas[l].1.mean[k], pm[v], || tag("b mean smooth", k));
                report.close(params.layers[l].biases.var()[k] + deltas[l].1.var[k], pv[v], || tag("b var smooth", k));
            }
            for (k, &v) in block.z.iter().enumerate() {
                report.close(states[l].mean()[k], pm[v], || tag("z mean", k));
                report.close(states[l].var()[k], pv[v], || tag("z var", k));
            }
        }
    }
    Ok(())
}

/// Dense nets of at most twelve random variables.
pub const JOINT_NETS: [&str; 6] = [
    "head: regression 1\ninput 2 - - - -\nfc 2 - - - tanh\noutput 1 - - - -\n",
    "head: regression 1\ninput 2 - - - -\nfc 2 - - - relu\noutput 1 - - - -\n",
    "head: regression 1\ninput 1 - - - -\nfc 2 - - - lrelu\noutput 1 - - - -\n",
    "head: regression 1\ninput 1 - - - -\nfc 1 - - - tanh\nfc 1 - - - sigmoid\noutput 1 - - - -\n",
    "head: regression 1\ninput 2 - - - -\nfc 1 - - - relu\noutput 1 - - - -\n",
    "head: regression 1\ninput 3 - - - -\noutput 1 - - - -\n",
];

/// Every net of [`JOINT_NETS`] on `cases` random draws each.
pub fn run_joint_conditioning(cases: usize, seed: u64) -> Result<JointReport> {
    let mut report = JointReport::default();
    for (k, table) in JOINT_NETS.iter().enumerate() {
        check_net(table, cases, seed.wrapping_add(k as u64), &mut report)?;
    }
    Ok(report)
}
