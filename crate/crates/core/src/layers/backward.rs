//! Innovation propagation through one layer.
//!
//! Innovations are posterior-minus-prior moments scaled by the prior variance:
//! `δμ = Δμ / σ²` and `δS = Δσ² / σ⁴`. In that form the update of any variable
//! `θ` with cross-covariance `c` to a unit of the next layer is `Δμ_θ = c·δμ`,
//! `Δσ²_θ = c²·δS`, and the sweep reduces to transposed linear maps.

use super::forward::{gather_column, AffineParams};
use super::index_map::{GatherMap, NO_SOURCE};
use super::{NormStats, NORM_EPS};
use crate::scalar::{axpy, Scalar};

/// Raw shared-weight sums of one layer; the store multiplies them by the prior
/// parameter variances when the update is applied.
pub(crate) struct GradSink<'a, T> {
    pub w_m: &'a mut [T],
    pub w_s: &'a mut [T],
    pub b_m: &'a mut [T],
    pub b_s: &'a mut [T],
}

pub(crate) fn dense_backward<T: Scalar>(
    p: &AffineParams<'_, T>,
    in_mu: &[T],
    dm: &[T],
    ds: &[T],
    sink: Option<GradSink<'_, T>>,
    input: Option<(&mut [T], &mut [T])>,
) {
    let fan = in_mu.len();
    if let Some(s) = sink {
        let in_mu2: Vec<T> = in_mu.iter().map(|m| *m * *m).collect();
        for u in 0..dm.len() {
            let row = u * fan..(u + 1) * fan;
            axpy(dm[u], in_mu, &mut s.w_m[row.clone()]);
            axpy(ds[u], &in_mu2, &mut s.w_s[row]);
            s.b_m[u] = s.b_m[u] + dm[u];
            s.b_s[u] = s.b_s[u] + ds[u];
        }
    }
    if let Some((im, is)) = input {
        for u in 0..dm.len() {
            let row = u * fan..(u + 1) * fan;
            axpy(dm[u], &p.w_mu[row.clone()], im);
            axpy(ds[u], &p.w_mu2[row], is);
        }
    }
}

pub(crate) fn gather_backward<T: Scalar>(
    map: &GatherMap,
    p: &AffineParams<'_, T>,
    in_mu: &[T],
    in_var: &[T],
    dm: &[T],
    ds: &[T],
    mut sink: Option<GradSink<'_, T>>,
    mut input: Option<(&mut [T], &mut [T])>,
) {
    let fan = map.fan;
    let positions = map.positions;
    let channels = p.b_mu.len();
    let mut col_mu = vec![T::zero(); fan];
    let mut col_var = vec![T::zero(); fan];
    let mut col_mu2 = vec![T::zero(); fan];
    let mut acc_m = vec![T::zero(); fan];
    let mut acc_s = vec![T::zero(); fan];
    for pos in 0..positions {
        let row = map.row(pos);
        if let Some(s) = sink.as_mut() {
            gather_column(row, in_mu, in_var, &mut col_mu, &mut col_var);
            for k in 0..fan {
                col_mu2[k] = col_mu[k] * col_mu[k];
            }
            for c in 0..channels {
                let o = c * positions + pos;
                let w = c * fan..(c + 1) * fan;
                axpy(dm[o], &col_mu, &mut s.w_m[w.clone()]);
                axpy(ds[o], &col_mu2, &mut s.w_s[w]);
                s.b_m[c] = s.b_m[c] + dm[o];
                s.b_s[c] = s.b_s[c] + ds[o];
            }
        }
        if let Some((im, is)) = input.as_mut() {
            acc_m.iter_mut().for_each(|v| *v = T::zero());
            acc_s.iter_mut().for_each(|v| *v = T::zero());
            for c in 0..channels {
                let o = c * positions + pos;
                let w = c * fan..(c + 1) * fan;
                axpy(dm[o], &p.w_mu[w.clone()], &mut acc_m);
                axpy(ds[o], &p.w_mu2[w], &mut acc_s);
            }
            for (k, &s) in row.iter().enumerate() {
                if s != NO_SOURCE {
                    im[s as usize] = im[s as usize] + acc_m[k];
                    is[s as usize] = is[s as usize] + acc_s[k];
                }
            }
        }
    }
}

pub(crate) fn pool_backward<T: Scalar>(
    map: &GatherMap,
    channels: usize,
    in_plane: usize,
    dm: &[T],
    ds: &[T],
    im: &mut [T],
    is: &mut [T],
) {
    let inv_k = T::one() / T::lit(map.fan as f64);
    let inv_k2 = inv_k * inv_k;
    for c in 0..channels {
        let base = c * in_plane;
        for pos in 0..map.positions {
            let o = c * map.positions + pos;
            let (m, s) = (dm[o] * inv_k, ds[o] * inv_k2);
            for &src in map.row(pos) {
                if src != NO_SOURCE {
                    let i = base + src as usize;
                    im[i] = im[i] + m;
                    is[i] = is[i] + s;
                }
            }
        }
    }
}

pub(crate) fn norm_backward<T: Scalar>(stats: &NormStats<T>, dm: &[T], ds: &[T], im: &mut [T], is: &mut [T]) {
    let eps = T::lit(NORM_EPS);
    for i in 0..dm.len() {
        let d = stats.for_unit(i).divisor(eps);
        im[i] = im[i] + dm[i] / d;
        is[i] = is[i] + ds[i] / (d * d);
    }
}
