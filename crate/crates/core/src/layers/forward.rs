use std::sync::Arc;

use super::index_map::{GatherMap, NO_SOURCE};
use super::{LayerKind, LayerSpec, NormStats, NORM_EPS};
use crate::error::{Result, TagiError};
use crate::gaussian::{mixture_reduce_slices, GaussianVector, MixtureStats};
use crate::scalar::{dot, Scalar};

/// Squared weight means, computed once per mini-batch.
pub(crate) fn squares<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|x| *x * *x).collect()
}

/// Borrowed weight and bias moments of one parametric layer.
pub(crate) struct AffineParams<'a, T> {
    pub w_mu: &'a [T],
    pub w_var: &'a [T],
    pub w_mu2: &'a [T],
    pub b_mu: &'a [T],
    pub b_var: &'a [T],
}

/// Dense layer: output `u` sums every input against weight row `u`.
pub(crate) fn affine_dense<T: Scalar>(
    p: &AffineParams<'_, T>,
    in_mu: &[T],
    in_var: &[T],
    out_mu: &mut [T],
    out_var: &mut [T],
) {
    let fan = in_mu.len();
    let in_s: Vec<T> = in_mu.iter().zip(in_var).map(|(m, v)| *v + *m * *m).collect();
    let deterministic = in_var.iter().all(|v| *v == T::zero());
    for u in 0..out_mu.len() {
        let row = u * fan..(u + 1) * fan;
        out_mu[u] = dot(&p.w_mu[row.clone()], in_mu) + p.b_mu[u];
        let mut v = dot(&p.w_var[row.clone()], &in_s) + p.b_var[u];
        if !deterministic {
            v = v + dot(&p.w_mu2[row], in_var);
        }
        out_var[u] = v;
    }
}

/// Fills the `fan`-long columns of position `pos`; padded taps read as exact zeros.
#[inline]
pub(crate) fn gather_column<T: Scalar>(
    row: &[u32],
    in_mu: &[T],
    in_var: &[T],
    col_mu: &mut [T],
    col_var: &mut [T],
) {
    for (k, &s) in row.iter().enumerate() {
        if s == NO_SOURCE {
            col_mu[k] = T::zero();
            col_var[k] = T::zero();
        } else {
            col_mu[k] = in_mu[s as usize];
            col_var[k] = in_var[s as usize];
        }
    }
}

/// Convolution or transposed convolution through a gather map with weights
/// shared across positions.
pub(crate) fn affine_gather<T: Scalar>(
    map: &GatherMap,
    p: &AffineParams<'_, T>,
    in_mu: &[T],
    in_var: &[T],
    out_mu: &mut [T],
    out_var: &mut [T],
) {
    let fan = map.fan;
    let positions = map.positions;
    let channels = p.b_mu.len();
    let deterministic = in_var.iter().all(|v| *v == T::zero());
    let mut col_mu = vec![T::zero(); fan];
    let mut col_var = vec![T::zero(); fan];
    let mut col_s = vec![T::zero(); fan];
    for pos in 0..positions {
        gather_column(map.row(pos), in_mu, in_var, &mut col_mu, &mut col_var);
        for k in 0..fan {
            col_s[k] = col_var[k] + col_mu[k] * col_mu[k];
        }
        for c in 0..channels {
            let w = c * fan..(c + 1) * fan;
            let o = c * positions + pos;
            out_mu[o] = dot(&p.w_mu[w.clone()], &col_mu) + p.b_mu[c];
            let mut v = dot(&p.w_var[w.clone()], &col_s) + p.b_var[c];
            if !deterministic {
                v = v + dot(&p.w_mu2[w], &col_var);
            }
            out_var[o] = v;
        }
    }
}

/// Average pooling: mean of the window means, `1/K²` times the summed variances.
pub(crate) fn pool_gather<T: Scalar>(
    map: &GatherMap,
    channels: usize,
    in_plane: usize,
    in_mu: &[T],
    in_var: &[T],
    out_mu: &mut [T],
    out_var: &mut [T],
) {
    let inv_k = T::one() / T::lit(map.fan as f64);
    let inv_k2 = inv_k * inv_k;
    for c in 0..channels {
        let base = c * in_plane;
        for pos in 0..map.positions {
            let mut m = T::zero();
            let mut v = T::zero();
            for &s in map.row(pos) {
                if s != NO_SOURCE {
                    m = m + in_mu[base + s as usize];
                    v = v + in_var[base + s as usize];
                }
            }
            out_mu[c * map.positions + pos] = m * inv_k;
            out_var[c * map.positions + pos] = v * inv_k2;
        }
    }
}

/// `(A - μ)/σ` with the statistics treated as constants.
pub(crate) fn normalize_into<T: Scalar>(
    stats: &NormStats<T>,
    in_mu: &[T],
    in_var: &[T],
    out_mu: &mut [T],
    out_var: &mut [T],
) {
    let eps = T::lit(NORM_EPS);
    for i in 0..in_mu.len() {
        let s = stats.for_unit(i);
        let d = s.divisor(eps);
        out_mu[i] = (in_mu[i] - s.mu) / d;
        out_var[i] = in_var[i] / (d * d);
    }
}

fn expect_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(TagiError::config(format!("{what}: expected {want} entries, got {got}")));
    }
    Ok(())
}

fn expect_kind(spec: &LayerSpec, kind: LayerKind) -> Result<()> {
    if spec.kind != kind {
        return Err(TagiError::config(format!("expected a {kind} layer, got {}", spec.kind)));
    }
    spec.validate()
}

/// Fully-connected moments. The output width is the bias length and `w` is
/// row-major `(outputs, inputs)`.
pub fn fc_forward<T: Scalar>(
    a_in: &GaussianVector<T>,
    w: &GaussianVector<T>,
    b: &GaussianVector<T>,
) -> Result<GaussianVector<T>> {
    if a_in.is_empty() || b.is_empty() {
        return Err(TagiError::config("fully-connected layer with no inputs or outputs"));
    }
    expect_len("fully-connected weights", w.len(), a_in.len() * b.len())?;
    let w_mu2 = squares(w.mean());
    let params = AffineParams { w_mu: w.mean(), w_var: w.var(), w_mu2: &w_mu2, b_mu: b.mean(), b_var: b.var() };
    let mut out = GaussianVector::zeros(b.len());
    let (om, ov) = out.parts_mut();
    affine_dense(&params, a_in.mean(), a_in.var(), om, ov);
    Ok(out)
}

fn windowed<T: Scalar>(
    a_in: &GaussianVector<T>,
    w: &GaussianVector<T>,
    b: &GaussianVector<T>,
    spec: &LayerSpec,
) -> Result<GaussianVector<T>> {
    expect_len("layer input", a_in.len(), spec.in_shape.len())?;
    expect_len("weights", w.len(), spec.num_weights())?;
    expect_len("biases", b.len(), spec.num_biases())?;
    let map = GatherMap::for_spec(spec).expect("windowed layer");
    let w_mu2 = squares(w.mean());
    let params = AffineParams { w_mu: w.mean(), w_var: w.var(), w_mu2: &w_mu2, b_mu: b.mean(), b_var: b.var() };
    let mut out = GaussianVector::zeros(spec.out_shape.len());
    let (om, ov) = out.parts_mut();
    affine_gather(&map, &params, a_in.mean(), a_in.var(), om, ov);
    Ok(out)
}

/// Convolution moments; weights are `(out_channels, in_channels, K, K)`.
pub fn conv_forward<T: Scalar>(
    a_in: &GaussianVector<T>,
    w: &GaussianVector<T>,
    b: &GaussianVector<T>,
    spec: &LayerSpec,
) -> Result<GaussianVector<T>> {
    expect_kind(spec, LayerKind::Conv2d)?;
    windowed(a_in, w, b, spec)
}

/// Transposed-convolution moments; same weight layout as [`conv_forward`].
pub fn transposed_conv_forward<T: Scalar>(
    a_in: &GaussianVector<T>,
    w: &GaussianVector<T>,
    b: &GaussianVector<T>,
    spec: &LayerSpec,
) -> Result<GaussianVector<T>> {
    expect_kind(spec, LayerKind::TransposedConv2d)?;
    windowed(a_in, w, b, spec)
}

pub fn avg_pool_forward<T: Scalar>(a_in: &GaussianVector<T>, spec: &LayerSpec) -> Result<GaussianVector<T>> {
    expect_kind(spec, LayerKind::AvgPool)?;
    expect_len("pool input", a_in.len(), spec.in_shape.len())?;
    let map = GatherMap::for_spec(spec).expect("pool map");
    let mut out = GaussianVector::zeros(spec.out_shape.len());
    let (om, ov) = out.parts_mut();
    pool_gather(&map, spec.in_shape.depth, spec.in_shape.plane(), a_in.mean(), a_in.var(), om, ov);
    Ok(out)
}

/// Normalises a layer by the moment-matched mixture of all its units.
pub fn layer_norm_forward<T: Scalar>(a: &GaussianVector<T>) -> Result<(GaussianVector<T>, MixtureStats<T>)> {
    let stats = mixture_reduce_slices(a.mean(), a.var())?;
    let mut out = GaussianVector::zeros(a.len());
    let (om, ov) = out.parts_mut();
    normalize_into(&NormStats::Layer(stats), a.mean(), a.var(), om, ov);
    Ok((out, stats))
}

/// Per-unit statistics across a batch of observations of the same layer.
pub(crate) fn batch_stats<T: Scalar>(batch: &[&GaussianVector<T>]) -> Result<Vec<MixtureStats<T>>> {
    if batch.len() < 2 {
        return Err(TagiError::config(format!("batch normalization needs at least 2 observations, got {}", batch.len())));
    }
    let n = batch[0].len();
    if batch.iter().any(|a| a.len() != n) {
        return Err(TagiError::config("batch elements differ in length"));
    }
    let mut means = vec![T::zero(); batch.len()];
    let mut vars = vec![T::zero(); batch.len()];
    (0..n)
        .map(|i| {
            for (j, a) in batch.iter().enumerate() {
                means[j] = a.mean()[i];
                vars[j] = a.var()[i];
            }
            mixture_reduce_slices(&means, &vars)
        })
        .collect()
}

/// Normalises every unit by the mixture of its values over the batch.
pub fn batch_norm_forward<T: Scalar>(
    batch: &[GaussianVector<T>],
) -> Result<(Vec<GaussianVector<T>>, Vec<MixtureStats<T>>)> {
    let refs: Vec<&GaussianVector<T>> = batch.iter().collect();
    let stats = Arc::new(batch_stats(&refs)?);
    let norm = NormStats::Batch(stats.clone());
    let out = batch
        .iter()
        .map(|a| {
            let mut o = GaussianVector::zeros(a.len());
            let (om, ov) = o.parts_mut();
            normalize_into(&norm, a.mean(), a.var(), om, ov);
            o
        })
        .collect();
    Ok((out, Arc::try_unwrap(stats).unwrap_or_else(|a| (*a).clone())))
}
