use super::{LayerKind, LayerSpec, Shape};

/// Marks a kernel tap that falls outside the input (padding, or a stride gap in a
/// transposed convolution).
pub const NO_SOURCE: u32 = u32::MAX;

/// Gather connectivity of a sliding-window layer.
///
/// For every output position `p` and kernel slot `k < fan`, `src[p * fan + k]` is
/// the input unit read by that tap, or [`NO_SOURCE`]. Convolutions index the full
/// input tensor and share one map across output channels: the weight for output
/// channel `c` and slot `k` lives at `c * fan + k`. Pooling maps hold spatial
/// offsets only and are shifted by the channel base at use.
///
/// The same table drives the forward moments, the scatter of innovations back to
/// the input, and the aggregation of shared-weight statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatherMap {
    pub positions: usize,
    pub fan: usize,
    pub src: Vec<u32>,
}

impl GatherMap {
    pub fn row(&self, p: usize) -> &[u32] {
        &self.src[p * self.fan..(p + 1) * self.fan]
    }

    /// Number of taps with a real source.
    pub fn connections(&self) -> usize {
        self.src.iter().filter(|&&s| s != NO_SOURCE).count()
    }

    pub fn for_spec(spec: &LayerSpec) -> Option<GatherMap> {
        match spec.kind {
            LayerKind::Conv2d => Some(conv(spec.in_shape, spec.out_shape, spec.kernel, spec.padding, spec.stride)),
            LayerKind::TransposedConv2d => {
                Some(transposed_conv(spec.in_shape, spec.out_shape, spec.kernel, spec.padding, spec.stride))
            }
            LayerKind::AvgPool => Some(pool(spec.in_shape, spec.out_shape, spec.kernel, spec.padding, spec.stride)),
            _ => None,
        }
    }
}

fn in_range(v: isize, n: usize) -> bool {
    v >= 0 && (v as usize) < n
}

pub fn conv(input: Shape, output: Shape, k: usize, pad: usize, stride: usize) -> GatherMap {
    let fan = input.depth * k * k;
    let positions = output.width * output.height;
    let mut src = Vec::with_capacity(positions * fan);
    for oy in 0..output.height {
        for ox in 0..output.width {
            for ci in 0..input.depth {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if in_range(iy, input.height) && in_range(ix, input.width) {
                            src.push(input.index(ci, iy as usize, ix as usize) as u32);
                        } else {
                            src.push(NO_SOURCE);
                        }
                    }
                }
            }
        }
    }
    GatherMap { positions, fan, src }
}

/// Transposed convolution written as a gather: output `(oy, ox)` reads input
/// `(iy, ix)` through tap `(ky, kx)` when `oy = iy·S − P + ky` (same for x).
pub fn transposed_conv(input: Shape, output: Shape, k: usize, pad: usize, stride: usize) -> GatherMap {
    let fan = input.depth * k * k;
    let positions = output.width * output.height;
    let mut src = Vec::with_capacity(positions * fan);
    let source = |o: usize, kk: usize, n: usize| -> Option<usize> {
        let num = o as isize + pad as isize - kk as isize;
        if num < 0 || num % stride as isize != 0 {
            return None;
        }
        let i = (num / stride as isize) as usize;
        (i < n).then_some(i)
    };
    for oy in 0..output.height {
        for ox in 0..output.width {
            for ci in 0..input.depth {
                for ky in 0..k {
                    for kx in 0..k {
                        match (source(oy, ky, input.height), source(ox, kx, input.width)) {
                            (Some(iy), Some(ix)) => src.push(input.index(ci, iy, ix) as u32),
                            _ => src.push(NO_SOURCE),
                        }
                    }
                }
            }
        }
    }
    GatherMap { positions, fan, src }
}

/// Spatial-only pooling map; padded taps count toward the `1/K` divisor.
pub fn pool(input: Shape, output: Shape, k: usize, pad: usize, stride: usize) -> GatherMap {
    let fan = k * k;
    let positions = output.width * output.height;
    let mut src = Vec::with_capacity(positions * fan);
    for oy in 0..output.height {
        for ox in 0..output.width {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if in_range(iy, input.height) && in_range(ix, input.width) {
                        src.push((iy as usize * input.width + ix as usize) as u32);
                    } else {
                        src.push(NO_SOURCE);
                    }
                }
            }
        }
    }
    GatherMap { positions, fan, src }
}
