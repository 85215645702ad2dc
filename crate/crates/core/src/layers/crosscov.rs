use super::index_map::NO_SOURCE;
use super::{Layer, LayerCache, LayerKind, NORM_EPS};
use crate::error::{Result, TagiError};
use crate::gaussian::{GaussianVector, MixtureStats};
use crate::scalar::Scalar;

/// Covariances between the random variables of layer `j` and the hidden units
/// `Z⁺` of layer `j + 1` they feed.
///
/// Each entry list holds `(index into Z⁺, covariance)` pairs and only names the
/// units a variable is connected to. A shared convolution weight lists every
/// position it feeds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrossCov<T> {
    pub dz_dzplus: Vec<Vec<(usize, T)>>,
    pub dw_dzplus: Vec<Vec<(usize, T)>>,
    pub db_dzplus: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> CrossCov<T> {
    /// Dense `(|Z|, |Z⁺|)` view of the hidden-state block, for inspection.
    pub fn dense_dz(&self, zplus_len: usize) -> Vec<Vec<T>> {
        self.dz_dzplus
            .iter()
            .map(|row| {
                let mut d = vec![T::zero(); zplus_len];
                for &(u, c) in row {
                    d[u] = d[u] + c;
                }
                d
            })
            .collect()
    }
}

/// Cross-covariances for `Z⁺ = W·Ã + B` where `Ã = (A - μ_A)/σ_A` normalises the
/// activations `A = σ(Z)` of layer `j`.
///
/// With `Z`, `W`, `B` independent and the normalisation statistics held fixed:
///
/// * `cov(Zᵢ, Z⁺ᵤ) = σ²_Zᵢ · Jᵢ · μ_Wᵤᵢ / σ_A`
/// * `cov(Wᵤᵢ, Z⁺ᵤ) = σ²_Wᵤᵢ · (μ_Aᵢ - μ_A) / σ_A`
/// * `cov(Bᵤ, Z⁺ᵤ) = σ²_Bᵤ`
///
/// A cache without normalisation statistics uses `μ_A = 0`, `σ_A = 1`, which
/// gives the plain un-normalised covariances.
pub fn cross_cov_normalized<T: Scalar>(
    cache: &LayerCache<T>,
    w: &GaussianVector<T>,
    b: &GaussianVector<T>,
    next: &Layer,
) -> Result<CrossCov<T>> {
    if cache.is_consumed() {
        return Err(TagiError::Sequencing("cross-covariance requested from a consumed cache".into()));
    }
    let spec = &next.spec;
    if !spec.kind.has_parameters() {
        return Err(TagiError::config(format!("{} layer has no parameters", spec.kind)));
    }
    let n_in = spec.in_shape.len();
    if cache.z_prior.len() != n_in || cache.a.len() != n_in || cache.jacobian.len() != n_in {
        return Err(TagiError::config(format!("cache holds {} units, layer expects {n_in}", cache.z_prior.len())));
    }
    if w.len() != spec.num_weights() || b.len() != spec.num_biases() {
        return Err(TagiError::config("parameter count does not match the layer"));
    }
    let eps = T::lit(NORM_EPS);
    let stat = |i: usize| -> (T, T) {
        let s = cache.norm_stats.as_ref().map_or(MixtureStats::identity(), |n| n.for_unit(i));
        (s.mu, s.divisor(eps))
    };
    let z_var = cache.z_prior.var();
    let a_mu = cache.a.mean();
    let jac = &cache.jacobian;

    let mut out = CrossCov {
        dz_dzplus: vec![Vec::new(); n_in],
        dw_dzplus: vec![Vec::new(); w.len()],
        db_dzplus: vec![Vec::new(); b.len()],
    };
    let mut connect = |i: usize, widx: usize, u: usize| {
        let (mu, sigma) = stat(i);
        out.dz_dzplus[i].push((u, z_var[i] * jac[i] * w.mean()[widx] / sigma));
        out.dw_dzplus[widx].push((u, w.var()[widx] * (a_mu[i] - mu) / sigma));
    };
    match spec.kind {
        LayerKind::FullyConnected => {
            let n_out = spec.out_shape.len();
            for u in 0..n_out {
                for i in 0..n_in {
                    connect(i, u * n_in + i, u);
                }
            }
            for u in 0..n_out {
                out.db_dzplus[u].push((u, b.var()[u]));
            }
        }
        LayerKind::Conv2d | LayerKind::TransposedConv2d => {
            let map = next.map();
            let channels = spec.out_shape.depth;
            for c in 0..channels {
                for pos in 0..map.positions {
                    let u = c * map.positions + pos;
                    for (k, &s) in map.row(pos).iter().enumerate() {
                        if s != NO_SOURCE {
                            connect(s as usize, c * map.fan + k, u);
                        }
                    }
                    out.db_dzplus[c].push((u, b.var()[c]));
                }
            }
        }
        _ => unreachable!("checked above"),
    }
    Ok(out)
}
