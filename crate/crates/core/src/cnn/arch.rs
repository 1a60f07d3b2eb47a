//! Layer specifications, shape inference and the named architectures.

use serde::{Deserialize, Serialize};

use super::layers::{pool_output_dim, ConvGeometry, LrnParams};
use super::volume::Shape;
use crate::error::{Error, Result};

pub const DEFAULT_LRN: LrnParams = LrnParams {
    size: 5,
    alpha: 1e-4,
    beta: 0.75,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        out_channels: usize,
    },
    #[serde(rename = "maxpool")]
    MaxPool { window: usize, stride: usize },
    Relu,
    Lrn { size: usize, alpha: f64, beta: f64 },
    InnerProduct { outputs: usize },
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    MaxPool,
    Relu,
    Lrn,
    InnerProduct,
    Softmax,
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, out_channels: usize) -> Self {
        LayerSpec::Conv {
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            out_channels,
        }
    }

    pub fn pool(window: usize, stride: usize) -> Self {
        LayerSpec::MaxPool { window, stride }
    }

    pub fn lrn(p: LrnParams) -> Self {
        LayerSpec::Lrn {
            size: p.size,
            alpha: p.alpha,
            beta: p.beta,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv { .. } => LayerKind::Conv,
            LayerSpec::MaxPool { .. } => LayerKind::MaxPool,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::Lrn { .. } => LayerKind::Lrn,
            LayerSpec::InnerProduct { .. } => LayerKind::InnerProduct,
            LayerSpec::Softmax => LayerKind::Softmax,
        }
    }

    pub fn conv_geometry(&self, in_channels: usize) -> Option<ConvGeometry> {
        match *self {
            LayerSpec::Conv {
                kernel_h,
                kernel_w,
                stride,
                out_channels,
            } => Some(ConvGeometry {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
            }),
            _ => None,
        }
    }

    pub fn lrn_params(&self) -> Option<LrnParams> {
        match *self {
            LayerSpec::Lrn { size, alpha, beta } => Some(LrnParams { size, alpha, beta }),
            _ => None,
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv { .. } => {
                let g = self.conv_geometry(input.channels).unwrap();
                let (h, w) = g.output_dims(input.height, input.width)?;
                Ok(Shape::new(g.out_channels, h, w))
            }
            LayerSpec::MaxPool { window, stride } => Ok(Shape::new(
                input.channels,
                pool_output_dim(input.height, window, stride)?,
                pool_output_dim(input.width, window, stride)?,
            )),
            LayerSpec::Relu => Ok(input),
            LayerSpec::Lrn { .. } => {
                self.lrn_params().unwrap().validate()?;
                Ok(input)
            }
            LayerSpec::InnerProduct { outputs } => {
                if outputs == 0 {
                    return Err(Error::Shape("inner product with zero outputs".into()));
                }
                Ok(Shape::new(outputs, 1, 1))
            }
            LayerSpec::Softmax => {
                if input.height != 1 || input.width != 1 {
                    return Err(Error::Shape(format!("softmax over non-vector input {input}")));
                }
                Ok(input)
            }
        }
    }

    /// `(weights, biases)` parameter counts for a given input shape.
    pub fn param_counts(&self, input: Shape) -> (usize, usize) {
        match *self {
            LayerSpec::Conv { out_channels, .. } => {
                (self.conv_geometry(input.channels).unwrap().weight_len(), out_channels)
            }
            LayerSpec::InnerProduct { outputs } => (outputs * input.len(), outputs),
            _ => (0, 0),
        }
    }
}

/// Shapes flowing into each layer, plus the final output shape.
pub fn infer_shapes(input: Shape, layers: &[LayerSpec]) -> Result<Vec<Shape>> {
    let mut shapes = vec![input];
    for (i, layer) in layers.iter().enumerate() {
        let next = layer
            .output_shape(*shapes.last().unwrap())
            .map_err(|e| Error::Shape(format!("layer {i} ({:?}): {e}", layer.kind())))?;
        shapes.push(next);
    }
    Ok(shapes)
}

/// Layer order of the three-pattern saliency network: conv→pool→relu, then
/// twice conv→relu→conv→relu→pool, LRN after the first two patterns, and an
/// inner-product classifier with softmax.
pub const SALIENCY_PATTERN: [LayerKind; 17] = [
    LayerKind::Conv,
    LayerKind::MaxPool,
    LayerKind::Relu,
    LayerKind::Lrn,
    LayerKind::Conv,
    LayerKind::Relu,
    LayerKind::Conv,
    LayerKind::Relu,
    LayerKind::MaxPool,
    LayerKind::Lrn,
    LayerKind::Conv,
    LayerKind::Relu,
    LayerKind::Conv,
    LayerKind::Relu,
    LayerKind::MaxPool,
    LayerKind::InnerProduct,
    LayerKind::Softmax,
];

pub fn validate_saliency_pattern(layers: &[LayerSpec]) -> Result<()> {
    let kinds: Vec<LayerKind> = layers.iter().map(LayerSpec::kind).collect();
    if kinds != SALIENCY_PATTERN {
        return Err(Error::InvalidArgument(format!(
            "layer order {kinds:?} does not follow the saliency pattern {SALIENCY_PATTERN:?}"
        )));
    }
    Ok(())
}

/// Named layer stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchPreset {
    /// CaffeNet-proportioned stack for 100×100 patches.
    Caffenet,
    /// Narrow stack for small desk-scale patches (roughly 20–40 px).
    Compact,
}

impl ArchPreset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "caffenet" => Ok(ArchPreset::Caffenet),
            "compact" => Ok(ArchPreset::Compact),
            other => Err(Error::Config(format!("unknown architecture preset {other:?}"))),
        }
    }

    pub fn layers(self, patch_size: usize) -> Vec<LayerSpec> {
        match self {
            ArchPreset::Caffenet => caffenet_layers(),
            ArchPreset::Compact => compact_layers(patch_size),
        }
    }
}

pub fn caffenet_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(11, 2, 32),
        LayerSpec::pool(3, 2),
        LayerSpec::Relu,
        LayerSpec::lrn(DEFAULT_LRN),
        LayerSpec::conv(5, 1, 64),
        LayerSpec::Relu,
        LayerSpec::conv(5, 1, 64),
        LayerSpec::Relu,
        LayerSpec::pool(3, 2),
        LayerSpec::lrn(DEFAULT_LRN),
        LayerSpec::conv(3, 1, 96),
        LayerSpec::Relu,
        LayerSpec::conv(3, 1, 96),
        LayerSpec::Relu,
        LayerSpec::pool(3, 2),
        LayerSpec::InnerProduct { outputs: 2 },
        LayerSpec::Softmax,
    ]
}

pub fn compact_layers(patch_size: usize) -> Vec<LayerSpec> {
    // after conv5 → pool2/2 → conv3 → conv3 → pool2/2 the map is about t/4 - 3
    let third = if patch_size >= 32 { 3 } else { 1 };
    vec![
        LayerSpec::conv(5, 1, 12),
        LayerSpec::pool(2, 2),
        LayerSpec::Relu,
        LayerSpec::lrn(DEFAULT_LRN),
        LayerSpec::conv(3, 1, 16),
        LayerSpec::Relu,
        LayerSpec::conv(3, 1, 16),
        LayerSpec::Relu,
        LayerSpec::pool(2, 2),
        LayerSpec::lrn(DEFAULT_LRN),
        LayerSpec::conv(third, 1, 16),
        LayerSpec::Relu,
        LayerSpec::conv(1, 1, 16),
        LayerSpec::Relu,
        LayerSpec::pool(2, 1),
        LayerSpec::InnerProduct { outputs: 2 },
        LayerSpec::Softmax,
    ]
}
