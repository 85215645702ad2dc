//! Adversarial steps on toy data: who gets updated, numerical health, and
//! whether generated samples drift toward the data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tagi::{sample_latent, GanBundle, GaussianVector, LatentCode, LatentSpec, ParameterStore, Scalar};

const TARGET_MEAN: [f64; 2] = [1.5, -1.0];
const TARGET_SD: [f64; 2] = [0.5, 0.2];

fn real_batch<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<GaussianVector<T>> {
    let e = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| GaussianVector::deterministic((0..2).map(|k| T::lit(TARGET_MEAN[k] + TARGET_SD[k] * e.sample(rng))).collect()))
        .collect()
}

fn bytes<T: Scalar>(p: &ParameterStore<T>) -> Vec<u8> {
    p.to_bytes()
}

struct Frozen {
    g: Vec<u8>,
    d: Vec<u8>,
    p: Vec<u8>,
    q: Vec<u8>,
}

fn snapshot<T: Scalar>(b: &GanBundle<T>) -> Frozen {
    Frozen {
        g: bytes(&b.gnet.params),
        d: bytes(&b.dnet.params),
        p: bytes(&b.pnet.params),
        q: b.qnet.as_ref().map(|q| bytes(&q.params)).unwrap_or_default(),
    }
}

fn check_freezes<T: Scalar>(mut bundle: GanBundle<T>, real: Vec<GaussianVector<T>>, rng: &mut ChaCha8Rng) {
    let before = snapshot(&bundle);
    bundle.generator_step(real.len(), rng).unwrap();
    let after = snapshot(&bundle);
    assert_eq!(after.d, before.d, "generator step touched the trunk");
    assert_eq!(after.p, before.p, "generator step touched the real/fake head");
    assert_eq!(after.q, before.q, "generator step touched the code head");
    assert_ne!(after.g, before.g, "generator step left the generator unchanged");

    bundle.discriminator_step(&real, rng).unwrap();
    let last = snapshot(&bundle);
    assert_eq!(last.g, after.g, "discriminator step touched the generator");
    assert_ne!(last.d, after.d);
    assert_ne!(last.p, after.p);
    assert_ne!(last.q, after.q);
}

#[test]
fn steps_freeze_the_other_side_toy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let real = real_batch::<f64>(8, &mut rng);
        check_freezes(GanBundle::<f64>::toy2d(seed, 1.0).unwrap(), real, &mut rng);
    }
}

#[test]
fn steps_freeze_the_other_side_mnist_preset() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e = Normal::new(0.0, 0.3).unwrap();
    let real: Vec<GaussianVector<f32>> =
        (0..2).map(|_| GaussianVector::deterministic((0..784).map(|_| e.sample(&mut rng) as f32).collect())).collect();
    check_freezes(GanBundle::<f32>::mnist_infogan(3, 0.975).unwrap(), real, &mut rng);
}

#[test]
fn thousand_iterations_stay_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bundle = GanBundle::<f32>::toy2d(7, 1.0).unwrap();
    let probe: Vec<LatentCode<f32>> = (0..64).map(|_| sample_latent(&LatentSpec::TOY2D, &mut rng)).collect();
    for it in 0..1000 {
        let real = real_batch::<f32>(16, &mut rng);
        bundle.train_iteration(&real, &mut rng).unwrap_or_else(|e| panic!("iteration {it}: {e}"));
        if it % 100 == 99 {
            for m in [&bundle.gnet, &bundle.dnet, &bundle.pnet, bundle.qnet.as_ref().unwrap()] {
                assert!(m.params.all_finite(), "iteration {it}");
            }
            for x in bundle.generate(&probe).unwrap() {
                assert!(x.all_finite(), "iteration {it}");
            }
        }
    }
}

/// Gap between sample moments and the data's: summed over both axes,
/// `|mean - target| + |sd - target|`.
fn moment_gap(bundle: &GanBundle<f64>, codes: &[LatentCode<f64>]) -> f64 {
    let out = bundle.generate(codes).unwrap();
    let n = out.len() as f64;
    (0..2)
        .map(|k| {
            let m = out.iter().map(|x| x.mean()[k]).sum::<f64>() / n;
            let sd = (out.iter().map(|x| (x.mean()[k] - m).powi(2)).sum::<f64>() / n).sqrt();
            (m - TARGET_MEAN[k]).abs() + (sd - TARGET_SD[k]).abs()
        })
        .sum()
}

#[test]
fn generated_moments_approach_the_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probe: Vec<LatentCode<f64>> = (0..500).map(|_| sample_latent(&LatentSpec::TOY2D, &mut rng)).collect();
    let mut bundle = GanBundle::<f64>::toy2d(11, 1.0).unwrap();
    let start = moment_gap(&bundle, &probe);
    for _ in 0..500 {
        let real = real_batch::<f64>(16, &mut rng);
        bundle.train_iteration(&real, &mut rng).unwrap();
    }
    let end = moment_gap(&bundle, &probe);
    assert!(end < 0.5 * start, "moment gap {start} -> {end}");
}
