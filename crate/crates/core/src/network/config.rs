//! Plain-text layer tables and the built-in architectures.
//!
//! A table has optional `key: value` header lines followed by one row per layer:
//!
//! ```text
//! name: mnist-cnn
//! head: classification 10
//! # layer   DxWxH     KxK  P  S  activation  [norm]
//! input     1x28x28   -    -  -  -
//! conv      32x27x27  4x4  1  1  relu
//! pool      32x13x13  3x3  0  2  -
//! output    11x1x1    -    -  -  -
//! ```
//!
//! The optional last column (`layer` or `batch`) inserts a normalisation layer
//! after that row. Output rows with a kernel resolve to a convolution, or to a
//! transposed convolution when they enlarge the feature map.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, TagiError};
use crate::gaussian::ActivationKind;
use crate::layers::{transposed_output_padding, LayerKind, LayerSpec, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Input,
    FullyConnected,
    Conv2d,
    TransposedConv2d,
    AvgPool,
    LayerNorm,
    BatchNorm,
    Output,
}

impl FromStr for RowKind {
    type Err = TagiError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "input" => RowKind::Input,
            "fc" | "fullyconnected" | "dense" => RowKind::FullyConnected,
            "conv" | "convolutional" | "conv2d" => RowKind::Conv2d,
            "tconv" | "transposedconvolutional" | "transposedconv" | "deconv" => RowKind::TransposedConv2d,
            "pool" | "pooling" | "avgpool" | "averagepooling" => RowKind::AvgPool,
            "layernorm" | "layernormalization" => RowKind::LayerNorm,
            "batchnorm" | "batchnormalization" => RowKind::BatchNorm,
            "output" => RowKind::Output,
            _ => return Err(TagiError::config(format!("unknown layer kind `{s}`"))),
        })
    }
}

/// Normalisation inserted after hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    #[default]
    None,
    Layer,
    Batch,
}

impl FromStr for NormMode {
    type Err = TagiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "-" | "" => Ok(NormMode::None),
            "layer" | "ln" => Ok(NormMode::Layer),
            "batch" | "bn" => Ok(NormMode::Batch),
            _ => Err(TagiError::config(format!("unknown normalization `{s}`"))),
        }
    }
}

impl NormMode {
    fn kind(self) -> Option<LayerKind> {
        match self {
            NormMode::None => None,
            NormMode::Layer => Some(LayerKind::LayerNorm),
            NormMode::Batch => Some(LayerKind::BatchNorm),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub kind: RowKind,
    pub shape: Shape,
    pub kernel: Option<usize>,
    pub padding: Option<usize>,
    pub stride: Option<usize>,
    pub activation: ActivationKind,
    pub norm: NormMode,
}

/// What the last layer of a network is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    Classification { num_classes: usize },
    Regression { dim: usize },
    /// Single real/fake unit.
    Discriminator,
    /// Shared discriminator trunk feeding other heads.
    Features,
    Generator,
    /// `categorical` one-hot groups of `classes` units followed by `continuous` units.
    LatentHead { categorical: usize, classes: usize, continuous: usize },
}

impl OutputHead {
    /// Width actually trained, when it differs from the table.
    pub fn functional_width(&self) -> Option<usize> {
        match *self {
            OutputHead::Classification { num_classes } => Some(num_classes),
            OutputHead::Regression { dim } => Some(dim),
            OutputHead::Discriminator => Some(1),
            OutputHead::LatentHead { categorical, classes, continuous } => Some(categorical * classes + continuous),
            OutputHead::Features | OutputHead::Generator => None,
        }
    }
}

impl FromStr for OutputHead {
    type Err = TagiError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| TagiError::config(format!("head `{s}` needs a numeric argument {i}")))
        };
        match parts.first().map(|p| p.to_ascii_lowercase()).as_deref() {
            Some("classification") => Ok(OutputHead::Classification { num_classes: num(1)? }),
            Some("regression") => Ok(OutputHead::Regression { dim: num(1)? }),
            Some("discriminator") => Ok(OutputHead::Discriminator),
            Some("features") => Ok(OutputHead::Features),
            Some("generator") => Ok(OutputHead::Generator),
            Some("latent") => Ok(OutputHead::LatentHead { categorical: num(1)?, classes: num(2)?, continuous: num(3)? }),
            _ => Err(TagiError::config(format!("unknown head `{s}`"))),
        }
    }
}

impl fmt::Display for OutputHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputHead::Classification { num_classes } => write!(f, "classification {num_classes}"),
            OutputHead::Regression { dim } => write!(f, "regression {dim}"),
            OutputHead::Discriminator => f.write_str("discriminator"),
            OutputHead::Features => f.write_str("features"),
            OutputHead::Generator => f.write_str("generator"),
            OutputHead::LatentHead { categorical, classes, continuous } => {
                write!(f, "latent {categorical} {classes} {continuous}")
            }
        }
    }
}

/// Declarative network description.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub name: String,
    pub rows: Vec<TableRow>,
    pub head: OutputHead,
    /// Header entries other than `name` and `head`, e.g. training hyperparameters.
    pub extras: BTreeMap<String, String>,
    /// Normalisation layers keep `μ = 0`, `σ = 1` instead of computing statistics.
    pub identity_norm: bool,
    /// Multiplier on the He variance `2/fan_in`.
    pub init_gain: f64,
}

fn parse_shape(s: &str) -> Result<Shape> {
    let dims: Vec<usize> = s
        .split(['x', 'X', '×'])
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| TagiError::config(format!("bad shape `{s}`")))?;
    match dims.as_slice() {
        [d] => Ok(Shape::flat(*d)),
        [d, w, h] => Ok(Shape::new(*d, *w, *h)),
        _ => Err(TagiError::config(format!("bad shape `{s}`"))),
    }
}

fn parse_opt(s: &str) -> Result<Option<usize>> {
    if s == "-" {
        return Ok(None);
    }
    let first = s.split(['x', 'X', '×']).next().unwrap_or(s);
    first.parse().map(Some).map_err(|_| TagiError::config(format!("bad number `{s}`")))
}

impl NetworkConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut head = None;
        let mut extras = BTreeMap::new();
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ctx = |e: TagiError| TagiError::config(format!("line {}: {e}", lineno + 1));
            if let Some((k, v)) = line.split_once(':') {
                let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                match k.as_str() {
                    "name" => name = v,
                    "head" => head = Some(v.parse().map_err(ctx)?),
                    _ => {
                        extras.insert(k, v);
                    }
                }
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() < 6 || cols.len() > 7 {
                return Err(ctx(TagiError::config(format!("expected 6 or 7 columns, found {}", cols.len()))));
            }
            let row = TableRow {
                kind: cols[0].parse().map_err(ctx)?,
                shape: parse_shape(cols[1]).map_err(ctx)?,
                kernel: parse_opt(cols[2]).map_err(ctx)?,
                padding: parse_opt(cols[3]).map_err(ctx)?,
                stride: parse_opt(cols[4]).map_err(ctx)?,
                activation: cols[5].parse().map_err(ctx)?,
                norm: cols.get(6).map_or(Ok(NormMode::None), |c| c.parse()).map_err(ctx)?,
            };
            rows.push(row);
        }
        let head = head.ok_or_else(|| TagiError::config("missing `head:` line"))?;
        let cfg = Self { name, rows, head, extras, identity_norm: false, init_gain: 1.0 };
        cfg.layer_specs()?;
        Ok(cfg)
    }

    /// Renders the table back to text.
    pub fn to_table(&self) -> String {
        let mut out = format!("name: {}\nhead: {}\n", self.name, self.head);
        for (k, v) in &self.extras {
            out.push_str(&format!("{k}: {v}\n"));
        }
        for r in &self.rows {
            let kind = match r.kind {
                RowKind::Input => "input",
                RowKind::FullyConnected => "fc",
                RowKind::Conv2d => "conv",
                RowKind::TransposedConv2d => "tconv",
                RowKind::AvgPool => "pool",
                RowKind::LayerNorm => "layernorm",
                RowKind::BatchNorm => "batchnorm",
                RowKind::Output => "output",
            };
            let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
            let k = r.kernel.map_or("-".to_string(), |k| format!("{k}x{k}"));
            out.push_str(&format!(
                "{kind:<10} {:<10} {k:<5} {:<2} {:<2} {}",
                r.shape.to_string(),
                opt(r.padding),
                opt(r.stride),
                r.activation
            ));
            match r.norm {
                NormMode::None => {}
                NormMode::Layer => out.push_str(" layer"),
                NormMode::Batch => out.push_str(" batch"),
            }
            out.push('\n');
        }
        out
    }

    pub fn input_shape(&self) -> Result<Shape> {
        match self.rows.first() {
            Some(r) if r.kind == RowKind::Input => Ok(r.shape),
            _ => Err(TagiError::config("first row must be the input")),
        }
    }

    /// Output width as printed in the table.
    pub fn table_output_width(&self) -> usize {
        self.rows.last().map_or(0, |r| r.shape.len())
    }

    /// Output width the network is built with.
    pub fn output_width(&self) -> usize {
        self.head.functional_width().unwrap_or_else(|| self.table_output_width())
    }

    /// Adds normalisation after every hidden parametric row.
    pub fn with_normalization(mut self, mode: NormMode) -> Self {
        for r in &mut self.rows {
            if matches!(r.kind, RowKind::Conv2d | RowKind::FullyConnected | RowKind::TransposedConv2d) {
                r.norm = mode;
            }
        }
        self
    }

    /// Resolves rows into layers, checking that consecutive shapes chain.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        let mut cur = self.input_shape()?;
        let n = self.rows.len();
        if n < 2 {
            return Err(TagiError::config("a network needs an input and an output row"));
        }
        let outputs = self.rows.iter().filter(|r| r.kind == RowKind::Output).count();
        if outputs != 1 || self.rows[n - 1].kind != RowKind::Output {
            return Err(TagiError::config("exactly one output row, in last position, is required"));
        }
        let mut specs = Vec::new();
        for (idx, row) in self.rows.iter().enumerate().skip(1) {
            let fail = |e: TagiError| TagiError::config(format!("layer {idx} ({:?} {}): {e}", row.kind, row.shape));
            let is_output = row.kind == RowKind::Output;
            let mut out = row.shape;
            if is_output {
                if let Some(w) = self.head.functional_width() {
                    if out.width * out.height != 1 {
                        return Err(fail(TagiError::config("head width override needs a flat output")));
                    }
                    out = Shape::flat(w);
                }
            }
            let kind = match row.kind {
                RowKind::Input => return Err(fail(TagiError::config("input row after the first"))),
                RowKind::Output if row.kernel.is_none() => RowKind::FullyConnected,
                RowKind::Output if self.head == OutputHead::Generator || out.width > cur.width => {
                    RowKind::TransposedConv2d
                }
                RowKind::Output => RowKind::Conv2d,
                k => k,
            };
            let req = |v: Option<usize>, what: &str| {
                v.ok_or_else(|| fail(TagiError::config(format!("{what} column required"))))
            };
            let mut spec = match kind {
                RowKind::FullyConnected => {
                    let width = match self.rows.get(idx + 1) {
                        Some(next) if !is_output && next.kind == RowKind::TransposedConv2d => {
                            feeding_width(out.len(), next).map_err(fail)?
                        }
                        _ => out.len(),
                    };
                    LayerSpec::fully_connected(cur.len(), width, row.activation)
                }
                RowKind::Conv2d => {
                    let spec = LayerSpec::conv(cur, out.depth, req(row.kernel, "kernel")?, row.padding.unwrap_or(0), row.stride.unwrap_or(1), row.activation).map_err(fail)?;
                    if spec.out_shape != out {
                        return Err(fail(TagiError::config(format!("arithmetic gives {}", spec.out_shape))));
                    }
                    spec
                }
                RowKind::TransposedConv2d => {
                    let (k, p, mut s) = (req(row.kernel, "kernel")?, row.padding.unwrap_or(0), row.stride.unwrap_or(1));
                    // an output row whose stride cannot produce its shape keeps the shape
                    if is_output && s > 1 && transposed_output_padding(cur.width, out.width, k, p, s).is_err() {
                        s = 1;
                    }
                    let input = reshape_for_transposed(cur, out, k, p, s).map_err(fail)?;
                    LayerSpec::transposed_conv(input, out, k, p, s, row.activation).map_err(fail)?
                }
                RowKind::AvgPool => {
                    let spec = LayerSpec::avg_pool(cur, req(row.kernel, "kernel")?, row.padding.unwrap_or(0), row.stride.unwrap_or(1)).map_err(fail)?;
                    if spec.out_shape != out {
                        return Err(fail(TagiError::config(format!("arithmetic gives {}", spec.out_shape))));
                    }
                    spec
                }
                RowKind::LayerNorm | RowKind::BatchNorm => {
                    if out != cur {
                        return Err(fail(TagiError::config(format!("normalization input is {cur}"))));
                    }
                    let k = if row.kind == RowKind::LayerNorm { LayerKind::LayerNorm } else { LayerKind::BatchNorm };
                    LayerSpec::normalization(k, cur)
                }
                RowKind::Input | RowKind::Output => unreachable!(),
            };
            spec.is_output = is_output;
            spec.validate().map_err(fail)?;
            cur = spec.out_shape;
            specs.push(spec);
            if let Some(kind) = row.norm.kind() {
                if !is_output {
                    specs.push(LayerSpec::normalization(kind, cur));
                }
            }
        }
        Ok(specs)
    }
}

/// Width of a dense layer feeding a transposed convolution. A width that cannot
/// be reshaped into the feature map the convolution needs is widened to
/// `next.depth × w × h` for the smallest workable `w × h`.
fn feeding_width(width: usize, next: &TableRow) -> Result<usize> {
    let (k, p, s) = (
        next.kernel.ok_or_else(|| TagiError::config("kernel column required"))?,
        next.padding.unwrap_or(0),
        next.stride.unwrap_or(1),
    );
    let out = next.shape;
    if reshape_for_transposed(Shape::flat(width), out, k, p, s).is_ok() {
        return Ok(width);
    }
    for w in 1..=out.width {
        let h = (w * out.height).div_ceil(out.width);
        if transposed_output_padding(w, out.width, k, p, s).is_ok()
            && transposed_output_padding(h, out.height, k, p, s).is_ok()
        {
            return Ok(out.depth * w * h);
        }
    }
    Err(TagiError::config(format!("no feature map of {out} is reachable from {width} units")))
}

/// A flat `N×1×1` input to a transposed convolution is reshaped into
/// `(N / (w·h)) × w × h` with the smallest spatial size that reaches `out`.
fn reshape_for_transposed(cur: Shape, out: Shape, k: usize, p: usize, s: usize) -> Result<Shape> {
    if cur.width * cur.height != 1 || out.width * out.height == 1 {
        return Ok(cur);
    }
    for w in 1..=out.width {
        let h = (w * out.height) / out.width;
        if h == 0 || w * h == 0 || cur.len() % (w * h) != 0 {
            continue;
        }
        if transposed_output_padding(w, out.width, k, p, s).is_ok()
            && transposed_output_padding(h, out.height, k, p, s).is_ok()
        {
            return Ok(Shape::new(cur.len() / (w * h), w, h));
        }
    }
    Err(TagiError::config(format!("cannot reshape {cur} into a transposed convolution producing {out}")))
}

pub const MNIST_CNN: &str = "\
name: mnist-cnn
head: classification 10
input     1x28x28   -    -  -  -
conv      32x27x27  4x4  1  1  relu
pool      32x13x13  3x3  0  2  -
conv      64x9x9    5x5  0  1  relu
pool      64x4x4    3x3  0  2  -
fc        150x1x1   -    -  -  relu
output    11x1x1    -    -  -  -
";

pub const CIFAR10_3CONV: &str = "\
name: cifar10-3conv
head: classification 10
input     3x32x32   -    -  -  -
conv      32x32x32  5x5  2  1  relu
pool      32x16x16  3x3  1  2  -
conv      32x16x16  5x5  2  1  relu
pool      32x8x8    3x3  1  2  -
conv      64x8x8    5x5  2  1  relu
pool      64x4x4    3x3  1  2  -
fc        64x1x1    -    -  -  relu
output    11x1x1    -    -  -  -
";

pub const MNIST_INFOGAN_DNET: &str = "\
name: mnist-infogan-dnet
head: features
input      1x28x28   -    -  -  -
conv       32x28x28  3x3  1  1  lrelu
batchnorm  32x28x28  -    -  -  -
pool       32x14x14  3x3  1  2  -
conv       64x14x14  3x3  1  1  lrelu
batchnorm  64x14x14  -    -  -  -
pool       64x7x7    3x3  1  2  -
output     512x1x1   -    -  -  lrelu
";

pub const MNIST_INFOGAN_PNET: &str = "\
name: mnist-infogan-pnet
head: discriminator
input      512x1x1   -    -  -  -
output     1x1x1     -    -  -  -
";

pub const MNIST_INFOGAN_QNET: &str = "\
name: mnist-infogan-qnet
head: latent 1 10 2
input      512x1x1   -    -  -  -
fc         300x1x1   -    -  -  relu
output     13x1x1    -    -  -  -
";

pub const MNIST_INFOGAN_GNET: &str = "\
name: mnist-infogan-gnet
head: generator
input      75x1x1    -    -  -  -
fc         3072x1x1  -    -  -  relu
tconv      64x7x7    3x3  1  1  relu
tconv      32x14x14  3x3  1  2  relu
output     1x28x28   3x3  1  2  -
";

pub const CELEBA_INFOGAN_DNET: &str = "\
name: celeba-infogan-dnet
head: features
input      3x32x32   -    -  -  -
conv       32x32x32  3x3  1  1  lrelu
batchnorm  32x32x32  -    -  -  -
pool       32x16x16  3x3  1  2  -
conv       32x16x16  3x3  1  1  lrelu
batchnorm  32x16x16  -    -  -  -
pool       32x8x8    3x3  1  2  -
conv       64x8x8    3x3  1  1  lrelu
batchnorm  64x8x8    -    -  -  -
pool       64x4x4    3x3  1  2  -
output     256x1x1   -    -  -  lrelu
";

pub const CELEBA_INFOGAN_PNET: &str = "\
name: celeba-infogan-pnet
head: discriminator
input      256x1x1   -    -  -  -
output     1x1x1     -    -  -  -
";

pub const CELEBA_INFOGAN_QNET: &str = "\
name: celeba-infogan-qnet
head: latent 10 10 0
input      256x1x1   -    -  -  -
fc         256x1x1   -    -  -  relu
output     110x1x1   -    -  -  -
";

pub const CELEBA_INFOGAN_GNET: &str = "\
name: celeba-infogan-gnet
head: generator
input      238x1x1   -    -  -  -
fc         1024x1x1  -    -  -  relu
tconv      64x4x4    3x3  1  1  relu
tconv      64x8x8    3x3  1  2  relu
tconv      32x16x16  3x3  1  2  relu
tconv      32x32x32  3x3  1  2  relu
tconv      32x32x32  3x3  1  1  relu
output     3x32x32   3x3  1  2  -
";

/// Names accepted by [`preset`].
pub const TOY2D_GNET: &str = "\
name: toy2d-gnet
head: generator
input      7     -  -  -  -
fc         32    -  -  -  relu
fc         32    -  -  -  relu
output     2     -  -  -  -
";

pub const TOY2D_DNET: &str = "\
name: toy2d-dnet
head: features
input      2     -  -  -  -
fc         32    -  -  -  lrelu
output     32    -  -  -  lrelu
";

pub const TOY2D_PNET: &str = "\
name: toy2d-pnet
head: discriminator
input      32    -  -  -  -
output     1     -  -  -  -
";

pub const TOY2D_QNET: &str = "\
name: toy2d-qnet
head: latent 1 2 1
input      32    -  -  -  -
output     3     -  -  -  -
";

pub const PRESET_NAMES: [&str; 14] = [
    "mnist-cnn",
    "cifar10-3conv",
    "mnist-infogan-dnet",
    "mnist-infogan-pnet",
    "mnist-infogan-qnet",
    "mnist-infogan-gnet",
    "celeba-infogan-dnet",
    "celeba-infogan-pnet",
    "celeba-infogan-qnet",
    "celeba-infogan-gnet",
    "toy2d-gnet",
    "toy2d-dnet",
    "toy2d-pnet",
    "toy2d-qnet",
];

pub fn preset_table(name: &str) -> Option<&'static str> {
    Some(match name {
        "mnist-cnn" => MNIST_CNN,
        "cifar10-3conv" => CIFAR10_3CONV,
        "mnist-infogan-dnet" => MNIST_INFOGAN_DNET,
        "mnist-infogan-pnet" => MNIST_INFOGAN_PNET,
        "mnist-infogan-qnet" => MNIST_INFOGAN_QNET,
        "mnist-infogan-gnet" => MNIST_INFOGAN_GNET,
        "celeba-infogan-dnet" => CELEBA_INFOGAN_DNET,
        "celeba-infogan-pnet" => CELEBA_INFOGAN_PNET,
        "celeba-infogan-qnet" => CELEBA_INFOGAN_QNET,
        "celeba-infogan-gnet" => CELEBA_INFOGAN_GNET,
        "toy2d-gnet" => TOY2D_GNET,
        "toy2d-dnet" => TOY2D_DNET,
        "toy2d-pnet" => TOY2D_PNET,
        "toy2d-qnet" => TOY2D_QNET,
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<NetworkConfig> {
    let table = preset_table(name).ok_or_else(|| TagiError::config(format!("unknown preset `{name}`")))?;
    NetworkConfig::parse(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out_shapes(name: &str) -> Vec<Shape> {
        preset(name).unwrap().layer_specs().unwrap().iter().map(|s| s.out_shape).collect()
    }

    #[test]
    fn every_preset_reproduces_its_table() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let specs = cfg.layer_specs().unwrap();
            let rows = &cfg.rows[1..];
            assert_eq!(specs.len(), rows.len(), "{name}");
            for (i, (spec, row)) in specs.iter().zip(rows).enumerate() {
                if spec.is_output {
                    assert_eq!(spec.out_shape.len(), cfg.output_width(), "{name} output");
                } else if spec.out_shape != row.shape {
                    // only the dense layer ahead of the first transposed convolution may widen
                    assert_eq!((name, i, row.shape, spec.out_shape), ("mnist-infogan-gnet", 0, Shape::flat(3072), Shape::flat(3136)));
                } else {
                    assert_eq!(spec.out_shape, row.shape, "{name} layer {i}");
                }
            }
        }
    }

    #[test]
    fn mnist_chain() {
        let s = out_shapes("mnist-cnn");
        assert_eq!(
            s,
            vec![
                Shape::new(32, 27, 27),
                Shape::new(32, 13, 13),
                Shape::new(64, 9, 9),
                Shape::new(64, 4, 4),
                Shape::flat(150),
                Shape::flat(10)
            ]
        );
        let cfg = preset("mnist-cnn").unwrap();
        assert_eq!(cfg.table_output_width(), 11);
    }

    #[test]
    fn cifar_chain_ends_in_4x4_pool() {
        let s = out_shapes("cifar10-3conv");
        assert_eq!(s[5], Shape::new(64, 4, 4));
        assert_eq!(s[6], Shape::flat(64));
    }

    fn cfg_rows_width(name: &str, row: usize) -> usize {
        preset(name).unwrap().rows[row].shape.len()
    }

    #[test]
    fn generator_reshapes_fc_output() {
        let specs = preset("mnist-infogan-gnet").unwrap().layer_specs().unwrap();
        assert_eq!(cfg_rows_width("mnist-infogan-gnet", 1), 3072);
        assert_eq!(specs[0].out_shape, Shape::flat(64 * 7 * 7));
        assert_eq!(specs[1].in_shape, Shape::new(64, 7, 7));
        assert_eq!(specs[2].out_shape, Shape::new(32, 14, 14));
        assert_eq!(specs[3].kind, LayerKind::TransposedConv2d);
        assert_eq!(specs[3].out_shape, Shape::new(1, 28, 28));
        let celeba = preset("celeba-infogan-gnet").unwrap().layer_specs().unwrap();
        assert_eq!(celeba[1].in_shape, Shape::new(64, 4, 4));
        assert_eq!(celeba.last().unwrap().out_shape, Shape::new(3, 32, 32));
        assert_eq!(celeba.last().unwrap().stride, 1);
    }

    #[test]
    fn latent_head_widths() {
        let q = preset("mnist-infogan-qnet").unwrap();
        assert_eq!((q.table_output_width(), q.output_width()), (13, 12));
        let q = preset("celeba-infogan-qnet").unwrap();
        assert_eq!((q.table_output_width(), q.output_width()), (110, 100));
    }

    #[test]
    fn broken_chain_names_the_layer() {
        let bad = MNIST_CNN.replace("64x9x9 ", "64x8x8 ");
        let err = NetworkConfig::parse(&bad).unwrap_err();
        assert!(err.to_string().contains("layer 3"), "{err}");
    }

    #[test]
    fn normalization_inserted_after_hidden_layers() {
        let cfg = preset("cifar10-3conv").unwrap().with_normalization(NormMode::Layer);
        let specs = cfg.layer_specs().unwrap();
        let kinds: Vec<LayerKind> = specs.iter().map(|s| s.kind).collect();
        assert_eq!(kinds.iter().filter(|k| **k == LayerKind::LayerNorm).count(), 4);
        assert_eq!(kinds[1], LayerKind::LayerNorm);
        assert!(!specs.last().unwrap().kind.is_normalization());
    }

    #[test]
    fn table_roundtrip() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            assert_eq!(NetworkConfig::parse(&cfg.to_table()).unwrap(), cfg);
        }
    }

    #[test]
    fn parse_errors() {
        assert!(NetworkConfig::parse("head: generator\ninput 1x2x2 - - - -\n").is_err());
        assert!(NetworkConfig::parse("input 4 - - - -\noutput 2 - - - -\n").is_err());
        assert!(NetworkConfig::parse("head: regression 2\ninput 4 - - - -\nfc 3 - - - swish\noutput 2 - - - -\n").is_err());
    }
}
