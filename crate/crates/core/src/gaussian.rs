//! Scalar and vector Gaussian moment arithmetic.
//!
//! Every random quantity in a network (hidden unit, activation, weight, bias) is
//! summarised by a mean and a variance. Units inside a vector are treated as
//! mutually independent, so a vector carries only the diagonal of its covariance.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, TagiError};
use crate::scalar::Scalar;

/// A single Gaussian `N(mean, var)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianScalar<T> {
    pub mean: T,
    pub var: T,
}

impl<T: Scalar> GaussianScalar<T> {
    pub fn new(mean: T, var: T) -> Self {
        Self { mean, var }
    }

    pub fn deterministic(mean: T) -> Self {
        Self { mean, var: T::zero() }
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.var.is_finite()
    }
}

/// Means and diagonal variances of a set of independent Gaussian units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianVector<T> {
    mean: Vec<T>,
    var: Vec<T>,
}

impl<T: Scalar> GaussianVector<T> {
    /// Builds a vector from parallel mean and variance buffers.
    pub fn new(mean: Vec<T>, var: Vec<T>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(TagiError::precondition(format!(
                "mean has {} entries but variance has {}",
                mean.len(),
                var.len()
            )));
        }
        if let Some(i) = var.iter().position(|v| !(*v >= T::zero())) {
            return Err(TagiError::precondition(format!(
                "variance[{i}] = {} is negative or NaN",
                var[i]
            )));
        }
        Ok(Self { mean, var })
    }

    /// Zero-variance vector, e.g. an observed input image.
    pub fn deterministic(mean: Vec<T>) -> Self {
        let var = vec![T::zero(); mean.len()];
        Self { mean, var }
    }

    pub fn zeros(len: usize) -> Self {
        Self { mean: vec![T::zero(); len], var: vec![T::zero(); len] }
    }

    pub fn from_scalars(items: &[GaussianScalar<T>]) -> Result<Self> {
        Self::new(items.iter().map(|g| g.mean).collect(), items.iter().map(|g| g.var).collect())
    }

    /// Skips validation; used on hot paths where the invariant holds by construction.
    pub(crate) fn from_parts_unchecked(mean: Vec<T>, var: Vec<T>) -> Self {
        debug_assert_eq!(mean.len(), var.len());
        Self { mean, var }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn var(&self) -> &[T] {
        &self.var
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.mean, &mut self.var)
    }

    pub fn get(&self, i: usize) -> GaussianScalar<T> {
        GaussianScalar { mean: self.mean[i], var: self.var[i] }
    }

    pub fn iter(&self) -> impl Iterator<Item = GaussianScalar<T>> + '_ {
        self.mean.iter().zip(&self.var).map(|(&mean, &var)| GaussianScalar { mean, var })
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<T>) {
        (self.mean, self.var)
    }

    pub fn all_finite(&self) -> bool {
        self.mean.iter().chain(&self.var).all(|v| v.is_finite())
    }

    /// Converts between scalar precisions.
    pub fn cast<U: Scalar>(&self) -> GaussianVector<U> {
        GaussianVector {
            mean: self.mean.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            var: self.var.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// Moment-matched single Gaussian of an equally weighted mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureStats<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> MixtureStats<T> {
    /// Normalisation that leaves its input untouched.
    pub fn identity() -> Self {
        Self { mu: T::zero(), sigma: T::one() }
    }

    /// Standard deviation used as a divisor; a zero sigma is replaced by `eps`.
    pub fn divisor(&self, eps: T) -> T {
        if self.sigma > T::zero() {
            self.sigma
        } else {
            eps
        }
    }
}

/// Activation function applied unit-wise after an affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ActivationKind {
    #[default]
    Identity,
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Sigmoid,
}

impl ActivationKind {
    /// Leaky rate used by the discriminator tables.
    pub const LEAKY_SLOPE: f64 = 0.2;

    pub fn leaky() -> Self {
        ActivationKind::LeakyRelu { slope: Self::LEAKY_SLOPE }
    }

    /// Value and derivative at `x`.
    #[inline]
    pub fn eval<T: Scalar>(self, x: T) -> (T, T) {
        match self {
            ActivationKind::Identity => (x, T::one()),
            ActivationKind::Relu => {
                if x > T::zero() {
                    (x, T::one())
                } else {
                    (T::zero(), T::zero())
                }
            }
            ActivationKind::LeakyRelu { slope } => {
                if x > T::zero() {
                    (x, T::one())
                } else {
                    let s = T::lit(slope);
                    (s * x, s)
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                (t, T::one() - t * t)
            }
            ActivationKind::Sigmoid => {
                let s = T::one() / (T::one() + (-x).exp());
                (s, s * (T::one() - s))
            }
        }
    }

    pub fn is_identity(self) -> bool {
        matches!(self, ActivationKind::Identity)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Identity => f.write_str("-"),
            ActivationKind::Relu => f.write_str("relu"),
            ActivationKind::LeakyRelu { slope } if *slope == Self::LEAKY_SLOPE => f.write_str("lrelu"),
            ActivationKind::LeakyRelu { slope } => write!(f, "lrelu:{slope}"),
            ActivationKind::Tanh => f.write_str("tanh"),
            ActivationKind::Sigmoid => f.write_str("sigmoid"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = TagiError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "-" | "" | "none" | "identity" | "linear" => Ok(ActivationKind::Identity),
            "relu" => Ok(ActivationKind::Relu),
            "lrelu" | "leakyrelu" | "leaky_relu" => Ok(ActivationKind::leaky()),
            "tanh" => Ok(ActivationKind::Tanh),
            "sigmoid" | "logistic" => Ok(ActivationKind::Sigmoid),
            other => {
                if let Some(rate) = other.strip_prefix("lrelu:") {
                    let slope: f64 = rate
                        .parse()
                        .map_err(|_| TagiError::config(format!("bad leaky slope `{rate}`")))?;
                    return Ok(ActivationKind::LeakyRelu { slope });
                }
                Err(TagiError::config(format!("unknown activation `{s}`")))
            }
        }
    }
}

/// Output of linearising an activation at the input means.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationLinearization<T> {
    pub out_mean: Vec<T>,
    pub out_var: Vec<T>,
    pub jacobian: Vec<T>,
}

impl<T: Scalar> ActivationLinearization<T> {
    pub fn output(&self) -> GaussianVector<T> {
        GaussianVector::from_parts_unchecked(self.out_mean.clone(), self.out_var.clone())
    }
}

fn check_finite<T: Scalar>(g: &GaussianScalar<T>, what: &str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(TagiError::NonFinite(format!("{what} = ({}, {})", g.mean, g.var)))
    }
}

/// Moments of the product of two independent Gaussians.
///
/// The variance is the exact second central moment
/// `σx²σy² + σx²μy² + μx²σy²`; the product itself is not Gaussian, only its first
/// two moments are carried forward.
pub fn gaussian_product_moments<T: Scalar>(
    x: GaussianScalar<T>,
    y: GaussianScalar<T>,
) -> Result<GaussianScalar<T>> {
    check_finite(&x, "x")?;
    check_finite(&y, "y")?;
    Ok(GaussianScalar {
        mean: x.mean * y.mean,
        var: x.var * y.var + (x.var * (y.mean * y.mean) + (x.mean * x.mean) * y.var),
    })
}

/// Linearises `kind` around each input mean.
pub fn linearize_activation<T: Scalar>(
    z: &GaussianVector<T>,
    kind: ActivationKind,
) -> ActivationLinearization<T> {
    let n = z.len();
    let mut out = ActivationLinearization {
        out_mean: Vec::with_capacity(n),
        out_var: Vec::with_capacity(n),
        jacobian: Vec::with_capacity(n),
    };
    for (&m, &v) in z.mean().iter().zip(z.var()) {
        let (a, j) = kind.eval(m);
        out.out_mean.push(a);
        out.jacobian.push(j);
        out.out_var.push(j * j * v);
    }
    out
}

/// Collapses equally weighted Gaussian components into one matching the first
/// two moments of the mixture.
pub fn mixture_reduce<T: Scalar>(units: &GaussianVector<T>) -> Result<MixtureStats<T>> {
    mixture_reduce_slices(units.mean(), units.var())
}

pub(crate) fn mixture_reduce_slices<T: Scalar>(mean: &[T], var: &[T]) -> Result<MixtureStats<T>> {
    if mean.is_empty() {
        return Err(TagiError::precondition("mixture reduction of an empty set"));
    }
    // accumulate in f64: layers can hold tens of thousands of units
    let n = mean.len() as f64;
    let mu = mean.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let within: f64 = var.iter().map(|v| v.to_f64_lossy()).sum();
    let between: f64 = mean.iter().map(|v| (v.to_f64_lossy() - mu).powi(2)).sum();
    let sigma = ((within + between) / n).max(0.0).sqrt();
    Ok(MixtureStats { mu: T::lit(mu), sigma: T::lit(sigma) })
}

/// Moments of `Σ cᵢ Xᵢ + B` for fixed coefficients and independent `Xᵢ`, `B`.
pub fn linear_combination_moments<T: Scalar>(
    coeffs: &[T],
    units: &GaussianVector<T>,
    bias: GaussianScalar<T>,
) -> Result<GaussianScalar<T>> {
    if coeffs.len() != units.len() {
        return Err(TagiError::precondition(format!(
            "{} coefficients for {} units",
            coeffs.len(),
            units.len()
        )));
    }
    let mut mean = bias.mean;
    let mut var = bias.var;
    for ((&c, &m), &v) in coeffs.iter().zip(units.mean()).zip(units.var()) {
        mean = mean + c * m;
        var = var + c * c * v;
    }
    Ok(GaussianScalar { mean, var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(mean: f64, var: f64) -> GaussianScalar<f64> {
        GaussianScalar::new(mean, var)
    }

    #[test]
    fn product_of_standard_normals() {
        let p = gaussian_product_moments(g(0.0, 1.0), g(0.0, 1.0)).unwrap();
        assert_eq!(p, g(0.0, 1.0));
    }

    #[test]
    fn product_of_constants() {
        let p = gaussian_product_moments(g(2.0, 0.0), g(3.0, 0.0)).unwrap();
        assert_eq!(p, g(6.0, 0.0));
    }

    #[test]
    fn product_rejects_non_finite() {
        assert!(matches!(
            gaussian_product_moments(g(f64::NAN, 1.0), g(0.0, 1.0)),
            Err(TagiError::NonFinite(_))
        ));
        assert!(gaussian_product_moments(g(0.0, f64::INFINITY), g(0.0, 1.0)).is_err());
    }

    #[test]
    fn relu_regions() {
        let z = GaussianVector::new(vec![-1.0, 3.0], vec![4.0, 2.0]).unwrap();
        let lin = linearize_activation(&z, ActivationKind::Relu);
        assert_eq!(lin.out_mean, vec![0.0, 3.0]);
        assert_eq!(lin.out_var, vec![0.0, 2.0]);
        assert_eq!(lin.jacobian, vec![0.0, 1.0]);
    }

    #[test]
    fn tanh_at_one_half() {
        // tanh(0.5) = 0.46211715726000974, 1 - tanh² = 0.7864477329659274
        let z = GaussianVector::new(vec![0.5f64], vec![0.1]).unwrap();
        let lin = linearize_activation(&z, ActivationKind::Tanh);
        assert!((lin.out_mean[0] - 0.462_117_157_260_009_7).abs() < 1e-12);
        assert!((lin.jacobian[0] - 0.786_447_732_965_927_4).abs() < 1e-12);
        assert!((lin.out_var[0] - 0.061_850_003_668_724_67).abs() < 1e-12);
    }

    #[test]
    fn leaky_and_sigmoid() {
        let z = GaussianVector::new(vec![-2.0f64, 0.0], vec![1.0, 1.0]).unwrap();
        let lin = linearize_activation(&z, ActivationKind::leaky());
        assert!((lin.out_mean[0] + 0.4).abs() < 1e-15);
        assert!((lin.out_var[0] - 0.04).abs() < 1e-15);
        let sig = linearize_activation(&z, ActivationKind::Sigmoid);
        assert!((sig.out_mean[1] - 0.5).abs() < 1e-15);
        assert!((sig.jacobian[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn activation_parsing() {
        assert_eq!("ReLU".parse::<ActivationKind>().unwrap(), ActivationKind::Relu);
        assert_eq!("lReLU".parse::<ActivationKind>().unwrap(), ActivationKind::leaky());
        assert_eq!("-".parse::<ActivationKind>().unwrap(), ActivationKind::Identity);
        assert!(matches!("softplus".parse::<ActivationKind>(), Err(TagiError::Config(_))));
    }

    #[test]
    fn mixture_examples() {
        let same = GaussianVector::new(vec![0.0; 5], vec![1.0; 5]).unwrap();
        assert_eq!(mixture_reduce(&same).unwrap(), MixtureStats { mu: 0.0, sigma: 1.0 });
        let spread = GaussianVector::new(vec![0.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(mixture_reduce(&spread).unwrap(), MixtureStats { mu: 1.0, sigma: 1.0 });
        let empty = GaussianVector::<f64>::zeros(0);
        assert!(matches!(mixture_reduce(&empty), Err(TagiError::Precondition(_))));
    }

    #[test]
    fn degenerate_mixture_has_zero_sigma() {
        let flat = GaussianVector::new(vec![1.5; 4], vec![0.0; 4]).unwrap();
        let m = mixture_reduce(&flat).unwrap();
        assert_eq!(m.sigma, 0.0);
        assert_eq!(m.divisor(1e-6), 1e-6);
    }

    #[test]
    fn linear_combination_examples() {
        let one = GaussianVector::new(vec![5.0], vec![2.0]).unwrap();
        assert_eq!(linear_combination_moments(&[1.0], &one, g(0.0, 0.0)).unwrap(), g(5.0, 2.0));
        let two = GaussianVector::new(vec![2.0, 4.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            linear_combination_moments(&[0.5, 0.5], &two, g(0.0, 0.0)).unwrap(),
            g(3.0, 0.5)
        );
        assert!(linear_combination_moments(&[1.0], &two, g(0.0, 0.0)).is_err());
    }

    #[test]
    fn vector_invariants() {
        assert!(GaussianVector::new(vec![0.0f32; 2], vec![0.0; 3]).is_err());
        assert!(GaussianVector::new(vec![0.0f32], vec![-1e-3]).is_err());
    }

    proptest! {
        #[test]
        fn product_is_symmetric_and_nonnegative(
            mx in -50.0f64..50.0, vx in 0.0f64..20.0, my in -50.0f64..50.0, vy in 0.0f64..20.0
        ) {
            let a = gaussian_product_moments(g(mx, vx), g(my, vy)).unwrap();
            let b = gaussian_product_moments(g(my, vy), g(mx, vx)).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.var >= 0.0);
        }

        #[test]
        fn identity_activation_is_noop(
            means in proptest::collection::vec(-10.0f32..10.0, 1..16),
            var in 0.0f32..5.0,
        ) {
            let z = GaussianVector::new(means.clone(), vec![var; means.len()]).unwrap();
            let lin = linearize_activation(&z, ActivationKind::Identity);
            prop_assert_eq!(&lin.out_mean, &means);
            prop_assert!(lin.out_var.iter().all(|v| *v == var));
            prop_assert!(lin.jacobian.iter().all(|j| *j == 1.0));
        }

        #[test]
        fn activation_variances_nonnegative(
            m in -20.0f64..20.0, v in 0.0f64..10.0, which in 0usize..5
        ) {
            let kind = [ActivationKind::Identity, ActivationKind::Relu, ActivationKind::leaky(),
                        ActivationKind::Tanh, ActivationKind::Sigmoid][which];
            let z = GaussianVector::new(vec![m], vec![v]).unwrap();
            let lin = linearize_activation(&z, kind);
            prop_assert!(lin.out_var[0] >= 0.0);
            prop_assert!((lin.out_var[0] - lin.jacobian[0].powi(2) * v).abs() <= 1e-12 * (1.0 + v));
        }

        #[test]
        fn mixture_of_copies_is_the_component(m in -30.0f64..30.0, v in 0.0f64..9.0, n in 1usize..40) {
            let units = GaussianVector::new(vec![m; n], vec![v; n]).unwrap();
            let s = mixture_reduce(&units).unwrap();
            prop_assert!((s.mu - m).abs() < 1e-9 * (1.0 + m.abs()));
            prop_assert!((s.sigma - v.sqrt()).abs() < 1e-9);
        }

        #[test]
        fn linear_combination_variance_nonnegative(
            coeffs in proptest::collection::vec(-5.0f64..5.0, 1..10),
            bv in 0.0f64..3.0,
        ) {
            let n = coeffs.len();
            let units = GaussianVector::new(vec![1.0; n], vec![0.5; n]).unwrap();
            let out = linear_combination_moments(&coeffs, &units, g(0.0, bv)).unwrap();
            prop_assert!(out.var >= 0.0);
        }
    }
}
