//! Forward moment propagation and the connectivity each layer exposes to the
//! backward inference sweep.

pub(crate) mod backward;
mod crosscov;
pub(crate) mod forward;
pub mod index_map;

use std::fmt;
use std::sync::Arc;

pub use crosscov::{cross_cov_normalized, CrossCov};
pub use forward::{
    avg_pool_forward, batch_norm_forward, conv_forward, fc_forward, layer_norm_forward,
    transposed_conv_forward,
};
pub use index_map::GatherMap;

use crate::error::{Result, TagiError};
use crate::gaussian::{ActivationKind, GaussianVector, MixtureStats};
use crate::scalar::Scalar;

/// Divisor substituted for a zero mixture standard deviation.
pub const NORM_EPS: f64 = 1e-6;

/// Tensor shape: `depth` channels of `height` rows by `width` columns, stored
/// channel-major then row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub depth: usize,
    pub width: usize,
    pub height: usize,
}

impl Shape {
    pub const fn new(depth: usize, width: usize, height: usize) -> Self {
        Self { depth, width, height }
    }

    pub const fn flat(n: usize) -> Self {
        Self { depth: n, width: 1, height: 1 }
    }

    pub const fn len(&self) -> usize {
        self.depth * self.width * self.height
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub const fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.depth, self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    FullyConnected,
    Conv2d,
    TransposedConv2d,
    AvgPool,
    LayerNorm,
    BatchNorm,
}

impl LayerKind {
    pub fn has_parameters(self) -> bool {
        matches!(self, LayerKind::FullyConnected | LayerKind::Conv2d | LayerKind::TransposedConv2d)
    }

    pub fn is_normalization(self) -> bool {
        matches!(self, LayerKind::LayerNorm | LayerKind::BatchNorm)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::FullyConnected => "fc",
            LayerKind::Conv2d => "conv",
            LayerKind::TransposedConv2d => "tconv",
            LayerKind::AvgPool => "pool",
            LayerKind::LayerNorm => "layernorm",
            LayerKind::BatchNorm => "batchnorm",
        })
    }
}

/// One resolved layer: what it computes, the shapes it maps between and its
/// window geometry. The final layer of a table carries `is_output`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub kernel: usize,
    pub padding: usize,
    pub stride: usize,
    /// Extra rows/columns appended by a transposed convolution so its output
    /// matches the table (`out = (in - 1)·S - 2P + K + output_padding`).
    pub output_padding: usize,
    pub activation: ActivationKind,
    pub is_output: bool,
}

impl LayerSpec {
    pub fn fully_connected(inputs: usize, outputs: usize, activation: ActivationKind) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            in_shape: Shape::flat(inputs),
            out_shape: Shape::flat(outputs),
            kernel: 0,
            padding: 0,
            stride: 1,
            output_padding: 0,
            activation,
            is_output: false,
        }
    }

    pub fn conv(
        in_shape: Shape,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
        activation: ActivationKind,
    ) -> Result<Self> {
        let w = window_out(in_shape.width, kernel, padding, stride)?;
        let h = window_out(in_shape.height, kernel, padding, stride)?;
        let spec = Self {
            kind: LayerKind::Conv2d,
            in_shape,
            out_shape: Shape::new(out_channels, w, h),
            kernel,
            padding,
            stride,
            output_padding: 0,
            activation,
            is_output: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Transposed convolution whose output size is given explicitly; the output
    /// padding is derived from it.
    pub fn transposed_conv(
        in_shape: Shape,
        out_shape: Shape,
        kernel: usize,
        padding: usize,
        stride: usize,
        activation: ActivationKind,
    ) -> Result<Self> {
        let output_padding = transposed_output_padding(in_shape.width, out_shape.width, kernel, padding, stride)?;
        let spec = Self {
            kind: LayerKind::TransposedConv2d,
            in_shape,
            out_shape,
            kernel,
            padding,
            stride,
            output_padding,
            activation,
            is_output: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn avg_pool(in_shape: Shape, kernel: usize, padding: usize, stride: usize) -> Result<Self> {
        let w = window_out(in_shape.width, kernel, padding, stride)?;
        let h = window_out(in_shape.height, kernel, padding, stride)?;
        Ok(Self {
            kind: LayerKind::AvgPool,
            in_shape,
            out_shape: Shape::new(in_shape.depth, w, h),
            kernel,
            padding,
            stride,
            output_padding: 0,
            activation: ActivationKind::Identity,
            is_output: false,
        })
    }

    pub fn normalization(kind: LayerKind, shape: Shape) -> Self {
        assert!(kind.is_normalization());
        Self {
            kind,
            in_shape: shape,
            out_shape: shape,
            kernel: 0,
            padding: 0,
            stride: 1,
            output_padding: 0,
            activation: ActivationKind::Identity,
            is_output: false,
        }
    }

    /// Checks the shape arithmetic of the layer.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TagiError::config(format!("{} layer {} -> {}: {msg}", self.kind, self.in_shape, self.out_shape)));
        if self.in_shape.is_empty() || self.out_shape.is_empty() {
            return bad("empty shape".into());
        }
        if self.stride == 0 {
            return bad("stride must be positive".into());
        }
        match self.kind {
            LayerKind::FullyConnected => Ok(()),
            LayerKind::Conv2d | LayerKind::AvgPool => {
                if self.kernel == 0 {
                    return bad("kernel must be positive".into());
                }
                let w = window_out(self.in_shape.width, self.kernel, self.padding, self.stride)?;
                let h = window_out(self.in_shape.height, self.kernel, self.padding, self.stride)?;
                if (w, h) != (self.out_shape.width, self.out_shape.height) {
                    return bad(format!(
                        "kernel {k} padding {p} stride {s} gives {w}x{h}",
                        k = self.kernel,
                        p = self.padding,
                        s = self.stride
                    ));
                }
                if self.kind == LayerKind::AvgPool && self.in_shape.depth != self.out_shape.depth {
                    return bad("pooling cannot change depth".into());
                }
                Ok(())
            }
            LayerKind::TransposedConv2d => {
                if self.kernel == 0 {
                    return bad("kernel must be positive".into());
                }
                for (i, o) in [(self.in_shape.width, self.out_shape.width), (self.in_shape.height, self.out_shape.height)] {
                    let op = transposed_output_padding(i, o, self.kernel, self.padding, self.stride)?;
                    if op != self.output_padding {
                        return bad(format!("output padding {op} != {}", self.output_padding));
                    }
                }
                Ok(())
            }
            LayerKind::LayerNorm | LayerKind::BatchNorm => {
                if self.in_shape != self.out_shape {
                    return bad("normalization must preserve shape".into());
                }
                Ok(())
            }
        }
    }

    /// Number of inputs feeding one output unit.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.in_shape.len(),
            LayerKind::Conv2d => self.in_shape.depth * self.kernel * self.kernel,
            // each output sees on average K²/S² taps per input channel
            LayerKind::TransposedConv2d => {
                (self.in_shape.depth * self.kernel * self.kernel).div_ceil(self.stride * self.stride).max(1)
            }
            LayerKind::AvgPool => self.kernel * self.kernel,
            LayerKind::LayerNorm | LayerKind::BatchNorm => 1,
        }
    }

    pub fn num_weights(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.in_shape.len() * self.out_shape.len(),
            LayerKind::Conv2d | LayerKind::TransposedConv2d => {
                self.out_shape.depth * self.in_shape.depth * self.kernel * self.kernel
            }
            _ => 0,
        }
    }

    pub fn num_biases(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.out_shape.len(),
            LayerKind::Conv2d | LayerKind::TransposedConv2d => self.out_shape.depth,
            _ => 0,
        }
    }
}

/// Output size of a sliding window: `floor((n + 2P - K) / S) + 1`.
pub fn window_out(n: usize, kernel: usize, padding: usize, stride: usize) -> Result<usize> {
    let padded = n + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return Err(TagiError::config(format!(
            "window of {kernel} with padding {padding} does not fit input of {n}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output padding needed for a transposed convolution to map `n` to `out`.
pub fn transposed_output_padding(n: usize, out: usize, kernel: usize, padding: usize, stride: usize) -> Result<usize> {
    let base = ((n as isize - 1) * stride as isize) - 2 * padding as isize + kernel as isize;
    let extra = out as isize - base;
    if n == 0 || base <= 0 || extra < 0 || extra >= stride.max(1) as isize {
        return Err(TagiError::config(format!(
            "transposed window of {kernel}, padding {padding}, stride {stride} cannot map {n} to {out}"
        )));
    }
    Ok(extra as usize)
}

/// Normalisation statistics recorded by the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum NormStats<T> {
    /// One mixture over every unit of the layer.
    Layer(MixtureStats<T>),
    /// One mixture per unit, pooled over the batch.
    Batch(Arc<Vec<MixtureStats<T>>>),
}

impl<T: Scalar> NormStats<T> {
    pub fn for_unit(&self, i: usize) -> MixtureStats<T> {
        match self {
            NormStats::Layer(s) => *s,
            NormStats::Batch(v) => v[i],
        }
    }
}

/// Forward-pass record of one layer for one observation.
///
/// Holds the prior pre-activation moments, the activation moments and Jacobian
/// diagonal, and the normalisation statistics when the layer normalises. The
/// connectivity needed to invert the pass lives with the layer's [`GatherMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache<T> {
    pub z_prior: GaussianVector<T>,
    pub a: GaussianVector<T>,
    pub jacobian: Vec<T>,
    pub norm_stats: Option<NormStats<T>>,
    consumed: bool,
}

impl<T: Scalar> LayerCache<T> {
    pub fn new(
        z_prior: GaussianVector<T>,
        a: GaussianVector<T>,
        jacobian: Vec<T>,
        norm_stats: Option<NormStats<T>>,
    ) -> Self {
        Self { z_prior, a, jacobian, norm_stats, consumed: false }
    }

    /// Builds the cache of an activation layer from its pre-activation moments.
    pub fn from_hidden(z: GaussianVector<T>, activation: ActivationKind) -> Self {
        let lin = crate::gaussian::linearize_activation(&z, activation);
        let a = GaussianVector::from_parts_unchecked(lin.out_mean, lin.out_var);
        Self::new(z, a, lin.jacobian, None)
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Marks the cache as used by an inference sweep; a second call fails.
    pub fn consume(&mut self) -> Result<()> {
        if self.consumed {
            return Err(TagiError::Sequencing("layer cache already consumed by an inference sweep".into()));
        }
        self.consumed = true;
        Ok(())
    }
}

/// A layer ready to run: its spec plus prebuilt connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub map: Option<GatherMap>,
}

impl Layer {
    pub fn new(spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        let map = GatherMap::for_spec(&spec);
        Ok(Self { spec, map })
    }

    pub(crate) fn map(&self) -> &GatherMap {
        self.map.as_ref().expect("windowed layer has a gather map")
    }
}
