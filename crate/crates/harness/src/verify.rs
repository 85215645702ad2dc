//! Monte-Carlo oracles for every moment rule of the library.
//!
//! Each case draws random parameters, computes the closed-form moments with the
//! library, then samples the underlying random variables and evaluates the
//! same map with plain arithmetic written here. A case passes when every output
//! mean and variance lies within `threshold` standard errors of its estimate,
//! on the first sample or on an independent second one.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tagi::layers::{avg_pool_forward, batch_norm_forward, conv_forward, fc_forward, layer_norm_forward, transposed_conv_forward, LayerSpec, Shape};
use tagi::{gaussian_product_moments, linear_combination_moments, linearize_activation, mixture_reduce, ActivationKind, GaussianScalar, GaussianVector};

/// Settings of one oracle run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub samples: usize,
    pub cases: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { samples: 1_000_000, cases: 100, threshold: 4.0, seed: 0 }
    }
}

/// Outcome for one operation over all its cases.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub op: &'static str,
    pub cases: usize,
    pub comparisons: usize,
    /// Largest deviation seen on a first sample, in standard errors.
    pub worst: f64,
    /// Cases that exceeded the threshold and were sampled again.
    pub rechecked: usize,
    pub failures: Vec<String>,
    pub seconds: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Streaming moments of `x - center`.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    s1: f64,
    s2: f64,
    s4: f64,
}

impl Acc {
    fn push(&mut self, d: f64) {
        let d2 = d * d;
        self.s1 += d;
        self.s2 += d2;
        self.s4 += d2 * d2;
    }
}

/// Deviation of the sampled moments from `(mean, var)` in standard errors.
fn z_scores(acc: &Acc, n: f64, mean: f64, var: f64) -> (f64, f64) {
    let m1 = acc.s1 / n;
    let m2 = acc.s2 / n;
    let sample_var = m2 - m1 * m1;
    let se_mean = (sample_var.max(0.0) / n).sqrt();
    let se_var = ((acc.s4 / n - m2 * m2).max(0.0) / n).sqrt();
    let z = |diff: f64, se: f64, scale: f64| {
        if se > 0.0 {
            diff.abs() / se
        } else if diff.abs() <= 1e-12 * (1.0 + scale.abs()) {
            0.0
        } else {
            f64::INFINITY
        }
    };
    (z(m1, se_mean, mean), z(sample_var - var, se_var, var))
}

struct Case<'a> {
    label: String,
    /// Closed-form `(mean, var)` per output.
    moments: Vec<(f64, f64)>,
    draw: Box<dyn FnMut(&mut ChaCha8Rng, &mut [f64]) + 'a>,
}

fn sample_case(case: &mut Case<'_>, samples: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let k = case.moments.len();
    let mut accs = vec![Acc::default(); k];
    let mut out = vec![0.0; k];
    for _ in 0..samples {
        (case.draw)(rng, &mut out);
        for ((a, x), (m, _)) in accs.iter_mut().zip(&out).zip(&case.moments) {
            a.push(x - m);
        }
    }
    accs.iter().zip(&case.moments).map(|(acc, &(m, v))| z_scores(acc, samples as f64, m, v)).collect()
}

/// A case exceeding the threshold is sampled once more, independently, and
/// fails only if the same output exceeds it again.
fn run_op<'a>(
    op: &'static str,
    cfg: &OracleConfig,
    rng: &mut ChaCha8Rng,
    mut make: impl FnMut(&mut ChaCha8Rng, usize) -> Case<'a>,
) -> OracleReport {
    let start = Instant::now();
    let mut report =
        OracleReport { op, cases: cfg.cases, comparisons: 0, worst: 0.0, rechecked: 0, failures: Vec::new(), seconds: 0.0 };
    for c in 0..cfg.cases {
        let mut case = make(rng, c);
        let z = sample_case(&mut case, cfg.samples, rng);
        report.comparisons += 2 * z.len();
        report.worst = z.iter().fold(report.worst, |w, (zm, zv)| w.max(*zm).max(*zv));
        let over = |z: &(f64, f64)| z.0.is_nan() || z.1.is_nan() || z.0 > cfg.threshold || z.1 > cfg.threshold;
        if !z.iter().any(over) {
            continue;
        }
        report.rechecked += 1;
        let again = sample_case(&mut case, cfg.samples, rng);
        for (u, (first, second)) in z.iter().zip(&again).enumerate() {
            if over(first) && over(second) {
                let (m, v) = case.moments[u];
                report.failures.push(format!(
                    "{}: output {u}: closed form ({m}, {v}), mean off by {:.2} then {:.2} SE, variance by {:.2} then {:.2} SE",
                    case.label, first.0, second.0, first.1, second.1
                ));
            }
        }
    }
    report.seconds = start.elapsed().as_secs_f64();
    report
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_vec(rng: &mut ChaCha8Rng, g: &GaussianVector<f64>, sd: &[f64], out: &mut [f64]) {
    for i in 0..g.len() {
        out[i] = g.mean()[i] + sd[i] * normal(rng);
    }
}

fn random_gaussians(rng: &mut ChaCha8Rng, n: usize, mean: f64, var: f64) -> GaussianVector<f64> {
    GaussianVector::new(
        (0..n).map(|_| rng.random_range(-mean..=mean)).collect(),
        (0..n).map(|_| rng.random_range(0.0..=var)).collect(),
    )
    .expect("valid moments")
}

fn sds(g: &GaussianVector<f64>) -> Vec<f64> {
    g.var().iter().map(|v| v.sqrt()).collect()
}

/// Reference activation values, written independently of the library.
fn reference_activation(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Identity => x,
        ActivationKind::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        ActivationKind::LeakyRelu { slope } => {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        }
        ActivationKind::Tanh => {
            let e = (-2.0 * x.abs()).exp();
            x.signum() * (1.0 - e) / (1.0 + e)
        }
        ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
    }
}

fn product_case(rng: &mut ChaCha8Rng, c: usize) -> Case<'static> {
    let x: GaussianScalar<f64> = GaussianScalar::new(rng.random_range(-3.0..3.0), rng.random_range(0.0..4.0));
    let y: GaussianScalar<f64> = GaussianScalar::new(rng.random_range(-3.0..3.0), rng.random_range(0.0..4.0));
    let p = gaussian_product_moments(x, y).expect("finite");
    let (sx, sy) = (x.var.sqrt(), y.var.sqrt());
    Case {
        label: format!("case {c} x={x:?} y={y:?}"),
        moments: vec![(p.mean, p.var)],
        draw: Box::new(move |r, out| out[0] = (x.mean + sx * normal(r)) * (y.mean + sy * normal(r))),
    }
}

fn linear_case(rng: &mut ChaCha8Rng, c: usize) -> Case<'static> {
    let n = rng.random_range(1..=8);
    let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let units = random_gaussians(rng, n, 3.0, 2.0);
    let bias: GaussianScalar<f64> = GaussianScalar::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0));
    let g = linear_combination_moments(&coeffs, &units, bias).expect("matching lengths");
    let sd = sds(&units);
    let sb = bias.var.sqrt();
    Case {
        label: format!("case {c} n={n}"),
        moments: vec![(g.mean, g.var)],
        draw: Box::new(move |r, out| {
            let mut s = bias.mean + sb * normal(r);
            for i in 0..n {
                s += coeffs[i] * (units.mean()[i] + sd[i] * normal(r));
            }
            out[0] = s;
        }),
    }
}

fn activation_case(kind: ActivationKind) -> impl FnMut(&mut ChaCha8Rng, usize) -> Case<'static> {
    move |rng, c| {
        let n = 3;
        let mut z = random_gaussians(rng, n, 3.0, 2.0);
        // keep clear of the kink of the piecewise-linear activations
        let m: Vec<f64> = z.mean().iter().map(|&m| if m.abs() < 0.05 { m + 0.1 } else { m }).collect();
        z = GaussianVector::new(m, z.var().to_vec()).expect("valid");
        let lin = linearize_activation(&z, kind);
        let h = 1e-6;
        // local linear model with a finite-difference slope
        let slope: Vec<f64> = z
            .mean()
            .iter()
            .map(|&m| (reference_activation(kind, m + h) - reference_activation(kind, m - h)) / (2.0 * h))
            .collect();
        let at: Vec<f64> = z.mean().iter().map(|&m| reference_activation(kind, m)).collect();
        let sd = sds(&z);
        let moments = lin.out_mean.iter().zip(&lin.out_var).map(|(&a, &b)| (a, b)).collect();
        Case {
            label: format!("case {c} {kind:?} z={:?}", z.mean()),
            moments,
            draw: Box::new(move |r, out| {
                for i in 0..n {
                    out[i] = at[i] + slope[i] * sd[i] * normal(r);
                }
            }),
        }
    }
}

fn mixture_case(rng: &mut ChaCha8Rng, c: usize) -> Case<'static> {
    let k = rng.random_range(1..=8);
    let units = random_gaussians(rng, k, 3.0, 2.0);
    let s = mixture_reduce(&units).expect("non-empty");
    let sd = sds(&units);
    Case {
        label: format!("case {c} k={k}"),
        moments: vec![(s.mu, s.sigma * s.sigma)],
        draw: Box::new(move |r, out| {
            let i = r.random_range(0..k);
            out[0] = units.mean()[i] + sd[i] * normal(r);
        }),
    }
}

/// Draws of activations, weights and biases for an affine layer.
struct AffineDraw {
    a: GaussianVector<f64>,
    w: GaussianVector<f64>,
    b: GaussianVector<f64>,
    sa: Vec<f64>,
    sw: Vec<f64>,
    sb: Vec<f64>,
    xa: Vec<f64>,
    xw: Vec<f64>,
    xb: Vec<f64>,
}

impl AffineDraw {
    fn new(rng: &mut ChaCha8Rng, n_a: usize, n_w: usize, n_b: usize) -> Self {
        let a = random_gaussians(rng, n_a, 2.0, 1.0);
        let w = random_gaussians(rng, n_w, 1.0, 0.5);
        let b = random_gaussians(rng, n_b, 1.0, 0.5);
        let (sa, sw, sb) = (sds(&a), sds(&w), sds(&b));
        Self { xa: vec![0.0; n_a], xw: vec![0.0; n_w], xb: vec![0.0; n_b], a, w, b, sa, sw, sb }
    }

    fn sample(&mut self, r: &mut ChaCha8Rng) {
        draw_vec(r, &self.a, &self.sa, &mut self.xa);
        draw_vec(r, &self.w, &self.sw, &mut self.xw);
        draw_vec(r, &self.b, &self.sb, &mut self.xb);
    }
}

fn moments_of(g: &GaussianVector<f64>) -> Vec<(f64, f64)> {
    g.mean().iter().zip(g.var()).map(|(&m, &v)| (m, v)).collect()
}

fn fc_case(rng: &mut ChaCha8Rng, c: usize) -> Case<'static> {
    let (n_in, n_out) = (rng.random_range(1..=5), rng.random_range(1..=3));
    let mut d = AffineDraw::new(rng, n_in, n_in * n_out, n_out);
    let z = fc_forward(&d.a, &d.w, &d.b).expect("conforming shapes");
    Case {
        label: format!("case {c} {n_in}->{n_out}"),
        moments: moments_of(&z),
        draw: Box::new(move |r, out| {
            d.sample(r);
            for u in 0..n_out {
                out[u] = d.xb[u] + (0..n_in).map(|i| d.xw[u * n_in + i] * d.xa[i]).sum::<f64>();
            }
        }),
    }
}

fn idx(s: &Shape, c: usize, y: usize, x: usize) -> usize {
    (c * s.height + y) * s.width + x
}

fn window_case(rng: &mut ChaCha8Rng, c: usize, transposed: bool) -> Case<'static> {
    let spec = loop {
        let (ci, size) = (rng.random_range(1..=2), rng.random_range(2..=4));
        let (k, p, s) = (rng.random_range(1..=3), rng.random_range(0..=1), rng.random_range(1..=2));
        let co = rng.random_range(1..=2);
        let in_shape = Shape::new(ci, size, size);
        let spec = if transposed {
            let out = (size - 1) * s + k;
            if out <= 2 * p {
                continue;
            }
            LayerSpec::transposed_conv(in_shape, Shape::new(co, out - 2 * p, out - 2 * p), k, p, s, ActivationKind::Identity)
        } else {
            LayerSpec::conv(in_shape, co, k, p, s, ActivationKind::Identity)
        };
        if let Ok(spec) = spec {
            break spec;
        }
    };
    let (si, so, k) = (spec.in_shape, spec.out_shape, spec.kernel);
    let mut d = AffineDraw::new(rng, si.len(), spec.num_weights(), spec.num_biases());
    let z = if transposed { transposed_conv_forward(&d.a, &d.w, &d.b, &spec) } else { conv_forward(&d.a, &d.w, &d.b, &spec) }
        .expect("valid spec");
    let (stride, pad) = (spec.stride as isize, spec.padding as isize);
    Case {
        label: format!("case {c} {:?} {si}->{so} k{k} p{pad} s{stride}", spec.kind),
        moments: moments_of(&z),
        draw: Box::new(move |r, out| {
            d.sample(r);
            for co in 0..so.depth {
                for y in 0..so.height {
                    for x in 0..so.width {
                        out[idx(&so, co, y, x)] = d.xb[co];
                    }
                }
            }
            for co in 0..so.depth {
                for ci in 0..si.depth {
                    for ky in 0..k {
                        for kx in 0..k {
                            let w = d.xw[((co * si.depth + ci) * k + ky) * k + kx];
                            if transposed {
                                // scatter each input over the output
                                for iy in 0..si.height {
                                    for ix in 0..si.width {
                                        let oy = iy as isize * stride + ky as isize - pad;
                                        let ox = ix as isize * stride + kx as isize - pad;
                                        if oy >= 0 && ox >= 0 && (oy as usize) < so.height && (ox as usize) < so.width {
                                            out[idx(&so, co, oy as usize, ox as usize)] += w * d.xa[idx(&si, ci, iy, ix)];
                                        }
                                    }
                                }
                            } else {
                                for oy in 0..so.height {
                                    for ox in 0..so.width {
                                        let iy = oy as isize * stride + ky as isize - pad;
                                        let ix = ox as isize * stride + kx as isize - pad;
                                        if iy >= 0 && ix >= 0 && (iy as usize) < si.height && (ix as usize) < si.width {
                                            out[idx(&so, co, oy, ox)] += w * d.xa[idx(&si, ci, iy as usize, ix as usize)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }),
    }
}

fn pool_case(rng: &mut ChaCha8Rng, c: usize) -> Case<'static> {
    let spec = loop {
        let size = rng.random_range(2..=6);
        let (k, p, s) = (rng.random_range(1..=3), rng.random_range(0..=1), rng.random_range(1..=2));
        if let Ok(spec) = LayerSpec::avg_pool(Shape::new(rng.random_range(1..=2), size, size), k, p, s) {
            break spec;
        }
    };
    let (si, so, k) = (spec.in_shape, spec.out_shape, spec.kernel);
    let a = random_gaussians(rng, si.len(), 2.0, 1.0);
    let z = avg_pool_forward(&a, &spec).expect("valid spec");
    let sa = sds(&a);
    let mut xa = vec![0.0; si.len()];
    let (stride, pad) = (spec.stride as isize, spec.padding as isize);
    let area = (k * k) as f64;
    Case {
        label: format!("case {c} pool {si}->{so} k{k} p{pad} s{stride}"),
        moments: moments_of(&z),
        draw: Box::new(move |r, out| {
            draw_vec(r, &a, &sa, &mut xa);
            for ch in 0..so.depth {
                for oy in 0..so.height {
                    for ox in 0..so.width {
                        let mut s = 0.0;
                        for ky in 0..k as isize {
                            for kx in 0..k as isize {
                                let (iy, ix) = (oy as isize * stride + ky - pad, ox as isize * stride + kx - pad);
                                if iy >= 0 && ix >= 0 && (iy as usize) < si.height && (ix as usize) < si.width {
                                    s += xa[idx(&si, ch, iy as usize, ix as usize)];
                                }
                            }
                        }
                        // padded taps count as zeros in the average
                        out[idx(&so, ch, oy, ox)] = s / area;
                    }
                }
            }
        }),
    }
}

/// Reference mixture statistics `(μ, σ)` of equally weighted components.
fn reference_stats(mean: &[f64], var: &[f64]) -> (f64, f64) {
    let n = mean.len() as f64;
    let mu = mean.iter().sum::<f64>() / n;
    let second = mean.iter().zip(var).map(|(m, v)| v + (m - mu) * (m - mu)).sum::<f64>() / n;
    (mu, second.sqrt())
}

fn layer_norm_case(rng: &mut ChaCha8Rng, c: usize) -> Case<'static> {
    let n = rng.random_range(2..=16);
    let a = random_gaussians(rng, n, 3.0, 2.0);
    let (z, _) = layer_norm_forward(&a).expect("non-empty");
    let (mu, sigma) = reference_stats(a.mean(), a.var());
    let sa = sds(&a);
    Case {
        label: format!("case {c} layer norm n={n}"),
        moments: moments_of(&z),
        draw: Box::new(move |r, out| {
            for i in 0..n {
                out[i] = (a.mean()[i] + sa[i] * normal(r) - mu) / sigma;
            }
        }),
    }
}

fn batch_norm_case(rng: &mut ChaCha8Rng, c: usize) -> Case<'static> {
    let (b, n) = (rng.random_range(2..=6), rng.random_range(1..=4));
    let batch: Vec<_> = (0..b).map(|_| random_gaussians(rng, n, 3.0, 2.0)).collect();
    let (z, _) = batch_norm_forward(&batch).expect("batch of two or more");
    let stats: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let m: Vec<f64> = batch.iter().map(|g| g.mean()[i]).collect();
            let v: Vec<f64> = batch.iter().map(|g| g.var()[i]).collect();
            reference_stats(&m, &v)
        })
        .collect();
    let moments = z.iter().flat_map(moments_of).collect();
    let sd: Vec<Vec<f64>> = batch.iter().map(sds).collect();
    Case {
        label: format!("case {c} batch norm B={b} n={n}"),
        moments,
        draw: Box::new(move |r, out| {
            for (o, g) in batch.iter().enumerate() {
                for i in 0..n {
                    let (mu, sigma) = stats[i];
                    out[o * n + i] = (g.mean()[i] + sd[o][i] * normal(r) - mu) / sigma;
                }
            }
        }),
    }
}

pub const ORACLE_OPS: [&str; 14] = [
    "gaussian_product_moments",
    "linear_combination_moments",
    "linearize_activation/identity",
    "linearize_activation/relu",
    "linearize_activation/leaky_relu",
    "linearize_activation/tanh",
    "linearize_activation/sigmoid",
    "mixture_reduce",
    "fc_forward",
    "conv_forward",
    "transposed_conv_forward",
    "avg_pool_forward",
    "layer_norm_forward",
    "batch_norm_forward",
];

/// Runs every oracle, reporting each operation as soon as it finishes.
pub fn run_moment_oracles(cfg: &OracleConfig, progress: &mut dyn FnMut(&OracleReport)) -> Vec<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::with_capacity(ORACLE_OPS.len());
    let mut record = |r: OracleReport| {
        progress(&r);
        reports.push(r);
    };
    let acts = [
        ActivationKind::Identity,
        ActivationKind::Relu,
        ActivationKind::LeakyRelu { slope: 0.2 },
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
    ];
    record(run_op(ORACLE_OPS[0], cfg, &mut rng, product_case));
    record(run_op(ORACLE_OPS[1], cfg, &mut rng, linear_case));
    for (k, act) in acts.into_iter().enumerate() {
        record(run_op(ORACLE_OPS[2 + k], cfg, &mut rng, activation_case(act)));
    }
    record(run_op(ORACLE_OPS[7], cfg, &mut rng, mixture_case));
    record(run_op(ORACLE_OPS[8], cfg, &mut rng, fc_case));
    record(run_op(ORACLE_OPS[9], cfg, &mut rng, |r, c| window_case(r, c, false)));
    record(run_op(ORACLE_OPS[10], cfg, &mut rng, |r, c| window_case(r, c, true)));
    record(run_op(ORACLE_OPS[11], cfg, &mut rng, pool_case));
    record(run_op(ORACLE_OPS[12], cfg, &mut rng, layer_norm_case));
    record(run_op(ORACLE_OPS[13], cfg, &mut rng, batch_norm_case));
    reports
}
