use std::fmt;

use serde::{Deserialize, Serialize};

use super::shape::{ShapeError, TensorShape};

/// Output feature count of a channel-changing op: fixed, or a ratio of the input channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "FeaturesRepr", into = "FeaturesRepr")]
pub enum Features {
    Fixed(usize),
    Scale { num: usize, den: usize },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeaturesRepr {
    Fixed(usize),
    Scale(String),
}

impl Features {
    pub const SAME: Features = Features::Scale { num: 1, den: 1 };

    pub fn scale(num: usize, den: usize) -> Self {
        Features::Scale { num, den }
    }

    /// Resolve against an input channel count; `None` when the ratio is not integral.
    pub fn resolve(&self, channels: usize) -> Option<usize> {
        match *self {
            Features::Fixed(n) => (n > 0).then_some(n),
            Features::Scale { num, den } => {
                if den == 0 || num == 0 || !(channels * num).is_multiple_of(den) {
                    None
                } else {
                    Some(channels * num / den)
                }
            }
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        let body = s
            .strip_prefix('x')
            .ok_or_else(|| format!("relative features must look like x2 or x1/2, got {s:?}"))?;
        let (num, den) = match body.split_once('/') {
            Some((n, d)) => (n, d),
            None => (body, "1"),
        };
        let num: usize = num.parse().map_err(|_| format!("bad numerator in {s:?}"))?;
        let den: usize = den
            .parse()
            .map_err(|_| format!("bad denominator in {s:?}"))?;
        if num == 0 || den == 0 {
            return Err(format!("zero ratio in {s:?}"));
        }
        Ok(Features::Scale { num, den })
    }
}

impl TryFrom<FeaturesRepr> for Features {
    type Error = String;

    fn try_from(value: FeaturesRepr) -> Result<Self, Self::Error> {
        match value {
            FeaturesRepr::Fixed(0) => Err("feature count must be positive".into()),
            FeaturesRepr::Fixed(n) => Ok(Features::Fixed(n)),
            FeaturesRepr::Scale(s) => Features::parse(&s),
        }
    }
}

impl From<Features> for FeaturesRepr {
    fn from(value: Features) -> Self {
        match value {
            Features::Fixed(n) => FeaturesRepr::Fixed(n),
            other => FeaturesRepr::Scale(other.to_string()),
        }
    }
}

impl fmt::Display for Features {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Features::Fixed(n) => write!(f, "{n}"),
            Features::Scale { num, den: 1 } => write!(f, "x{num}"),
            Features::Scale { num, den } => write!(f, "x{num}/{den}"),
        }
    }
}

/// Op kinds, without parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Dense,
    Convolution,
    GroupedConvolution,
    DilatedConvolution,
    Add,
    ScalarMultiply,
    ReLU,
    GeLU,
    SiLU,
    Sigmoid,
    Softmax,
    BatchNorm,
    LayerNorm,
    GroupNorm,
    Dropout,
    AveragePool,
    MaxPool,
}

impl OpKind {
    pub const ALL: [OpKind; 17] = [
        OpKind::Dense,
        OpKind::Convolution,
        OpKind::GroupedConvolution,
        OpKind::DilatedConvolution,
        OpKind::Add,
        OpKind::ScalarMultiply,
        OpKind::ReLU,
        OpKind::GeLU,
        OpKind::SiLU,
        OpKind::Sigmoid,
        OpKind::Softmax,
        OpKind::BatchNorm,
        OpKind::LayerNorm,
        OpKind::GroupNorm,
        OpKind::Dropout,
        OpKind::AveragePool,
        OpKind::MaxPool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Dense => "Dense",
            OpKind::Convolution => "Convolution",
            OpKind::GroupedConvolution => "GroupedConvolution",
            OpKind::DilatedConvolution => "DilatedConvolution",
            OpKind::Add => "Add",
            OpKind::ScalarMultiply => "ScalarMultiply",
            OpKind::ReLU => "ReLU",
            OpKind::GeLU => "GeLU",
            OpKind::SiLU => "SiLU",
            OpKind::Sigmoid => "Sigmoid",
            OpKind::Softmax => "Softmax",
            OpKind::BatchNorm => "BatchNorm",
            OpKind::LayerNorm => "LayerNorm",
            OpKind::GroupNorm => "GroupNorm",
            OpKind::Dropout => "Dropout",
            OpKind::AveragePool => "AveragePool",
            OpKind::MaxPool => "MaxPool",
        }
    }

    pub fn parse(name: &str) -> Option<OpKind> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Convolution hyper-parameters shared by the three convolution kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub features: Features,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub dilation: usize,
}

/// A primitive operation with its parameters. Serialized as `{"kind": .., "params": {..}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum PrimitiveOp {
    Dense {
        features: Features,
    },
    Convolution {
        features: Features,
        kernel: usize,
        stride: usize,
    },
    GroupedConvolution {
        features: Features,
        kernel: usize,
        stride: usize,
        groups: usize,
    },
    DilatedConvolution {
        features: Features,
        kernel: usize,
        stride: usize,
        dilation: usize,
    },
    Add,
    ScalarMultiply {
        value: f64,
    },
    ReLU,
    GeLU,
    SiLU,
    Sigmoid,
    Softmax,
    BatchNorm,
    LayerNorm,
    GroupNorm {
        groups: usize,
    },
    Dropout {
        rate: f64,
    },
    AveragePool {
        window: usize,
    },
    MaxPool {
        window: usize,
    },
}

impl PrimitiveOp {
    pub fn kind(&self) -> OpKind {
        match self {
            PrimitiveOp::Dense { .. } => OpKind::Dense,
            PrimitiveOp::Convolution { .. } => OpKind::Convolution,
            PrimitiveOp::GroupedConvolution { .. } => OpKind::GroupedConvolution,
            PrimitiveOp::DilatedConvolution { .. } => OpKind::DilatedConvolution,
            PrimitiveOp::Add => OpKind::Add,
            PrimitiveOp::ScalarMultiply { .. } => OpKind::ScalarMultiply,
            PrimitiveOp::ReLU => OpKind::ReLU,
            PrimitiveOp::GeLU => OpKind::GeLU,
            PrimitiveOp::SiLU => OpKind::SiLU,
            PrimitiveOp::Sigmoid => OpKind::Sigmoid,
            PrimitiveOp::Softmax => OpKind::Softmax,
            PrimitiveOp::BatchNorm => OpKind::BatchNorm,
            PrimitiveOp::LayerNorm => OpKind::LayerNorm,
            PrimitiveOp::GroupNorm { .. } => OpKind::GroupNorm,
            PrimitiveOp::Dropout { .. } => OpKind::Dropout,
            PrimitiveOp::AveragePool { .. } => OpKind::AveragePool,
            PrimitiveOp::MaxPool { .. } => OpKind::MaxPool,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            PrimitiveOp::Add => 2,
            _ => 1,
        }
    }

    /// Single-input, single-output op usable inside a sequential chain.
    pub fn is_simple(&self) -> bool {
        self.arity() == 1
    }

    pub fn conv_spec(&self) -> Option<ConvSpec> {
        match *self {
            PrimitiveOp::Convolution {
                features,
                kernel,
                stride,
            } => Some(ConvSpec {
                features,
                kernel,
                stride,
                groups: 1,
                dilation: 1,
            }),
            PrimitiveOp::GroupedConvolution {
                features,
                kernel,
                stride,
                groups,
            } => Some(ConvSpec {
                features,
                kernel,
                stride,
                groups,
                dilation: 1,
            }),
            PrimitiveOp::DilatedConvolution {
                features,
                kernel,
                stride,
                dilation,
            } => Some(ConvSpec {
                features,
                kernel,
                stride,
                groups: 1,
                dilation,
            }),
            _ => None,
        }
    }

    pub fn features(&self) -> Option<Features> {
        match *self {
            PrimitiveOp::Dense { features } => Some(features),
            _ => self.conv_spec().map(|c| c.features),
        }
    }

    /// Pool window, for pooling ops.
    pub fn pool_window(&self) -> Option<usize> {
        match *self {
            PrimitiveOp::AveragePool { window } | PrimitiveOp::MaxPool { window } => Some(window),
            _ => None,
        }
    }

    /// Factor by which this op divides every spatial dim (1 if it preserves them).
    pub fn spatial_factor(&self) -> usize {
        if let Some(w) = self.pool_window() {
            return w;
        }
        match self.conv_spec() {
            Some(c) => c.stride,
            None => 1,
        }
    }

    /// Checks the parameter constraints that do not depend on the input shape.
    pub fn check_params(&self) -> Result<(), ShapeError> {
        let bad = |reason: String| {
            Err(ShapeError::Params {
                op: self.to_string(),
                reason,
            })
        };
        if let Some(f) = self.features() {
            match f {
                Features::Fixed(0) => return bad("zero output features".into()),
                Features::Scale { num, den } if num == 0 || den == 0 => {
                    return bad("zero feature ratio".into())
                }
                _ => {}
            }
        }
        if let Some(c) = self.conv_spec() {
            if c.kernel == 0 {
                return bad("kernel must be >= 1".into());
            }
            if c.stride != 1 && c.stride != c.kernel {
                return bad(format!(
                    "stride must be 1 or equal to the kernel ({}), got {}",
                    c.kernel, c.stride
                ));
            }
            if self.kind() == OpKind::GroupedConvolution && c.groups < 2 {
                return bad("grouped convolution needs at least 2 groups".into());
            }
            if self.kind() == OpKind::DilatedConvolution && (c.dilation < 2 || c.kernel < 2) {
                return bad("dilated convolution needs dilation >= 2 and kernel >= 2".into());
            }
        }
        match *self {
            PrimitiveOp::GroupNorm { groups } if groups < 2 => {
                bad("group norm needs at least 2 groups".into())
            }
            PrimitiveOp::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                bad(format!("dropout rate must be in [0, 1), got {rate}"))
            }
            PrimitiveOp::ScalarMultiply { value } if !value.is_finite() || value == 0.0 => {
                bad(format!("scalar must be finite and nonzero, got {value}"))
            }
            PrimitiveOp::AveragePool { window } | PrimitiveOp::MaxPool { window } if window < 2 => {
                bad("pool window must be >= 2".into())
            }
            _ => Ok(()),
        }
    }

    /// Output shape of this op given its operand shapes.
    pub fn output_shape(&self, inputs: &[&TensorShape]) -> Result<TensorShape, ShapeError> {
        self.check_params()?;
        if inputs.len() != self.arity() {
            return Err(ShapeError::Arity {
                op: self.to_string(),
                expected: self.arity(),
                found: inputs.len(),
            });
        }
        let x = inputs[0];
        if let PrimitiveOp::Add = self {
            if inputs[0] != inputs[1] {
                return Err(ShapeError::Mismatch(inputs[0].clone(), inputs[1].clone()));
            }
            return Ok(x.clone());
        }
        let factor = self.spatial_factor();
        let needs_spatial = self.conv_spec().is_some() || self.pool_window().is_some();
        if needs_spatial && x.rank() < 3 {
            return Err(ShapeError::NoSpatial {
                op: self.to_string(),
                rank: x.rank(),
            });
        }
        let mut out = x.clone();
        if factor > 1 {
            if x.spatial().iter().any(|&d| d % factor != 0) {
                return Err(ShapeError::NotDivisible {
                    op: self.to_string(),
                    dims: x.spatial().to_vec(),
                    factor,
                });
            }
            let spatial: Vec<usize> = x.spatial().iter().map(|&d| d / factor).collect();
            out = out.with_spatial(&spatial);
        }
        let c_in = x.channels();
        if let Some(features) = self.features() {
            let c_out = features.resolve(c_in).ok_or_else(|| ShapeError::Features {
                op: self.to_string(),
                features: features.to_string(),
                channels: c_in,
            })?;
            if let Some(conv) = self.conv_spec() {
                let g = conv.groups;
                if g > 1 && (!c_in.is_multiple_of(g) || !c_out.is_multiple_of(g) || c_in / g < 2) {
                    return Err(ShapeError::Groups {
                        op: self.to_string(),
                        groups: g,
                        channels: c_in,
                    });
                }
            }
            out = out.with_channels(c_out);
        }
        if let PrimitiveOp::GroupNorm { groups } = *self {
            if !c_in.is_multiple_of(groups) || c_in / groups < 2 {
                return Err(ShapeError::Groups {
                    op: self.to_string(),
                    groups,
                    channels: c_in,
                });
            }
        }
        Ok(out)
    }

    /// Convenience for simple ops.
    pub fn apply_shape(&self, x: &TensorShape) -> Result<TensorShape, ShapeError> {
        self.output_shape(&[x])
    }
}

impl fmt::Display for PrimitiveOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimitiveOp::Dense { features } => write!(f, "Dense({features})"),
            PrimitiveOp::Convolution {
                features,
                kernel,
                stride,
            } => write!(f, "Conv(k={kernel},s={stride},f={features})"),
            PrimitiveOp::GroupedConvolution {
                features,
                kernel,
                stride,
                groups,
            } => write!(
                f,
                "GroupConv(k={kernel},s={stride},g={groups},f={features})"
            ),
            PrimitiveOp::DilatedConvolution {
                features,
                kernel,
                stride,
                dilation,
            } => write!(
                f,
                "DilatedConv(k={kernel},s={stride},d={dilation},f={features})"
            ),
            PrimitiveOp::Add => write!(f, "Add"),
            PrimitiveOp::ScalarMultiply { value } => write!(f, "ScalarMultiply({value})"),
            PrimitiveOp::GroupNorm { groups } => write!(f, "GroupNorm(g={groups})"),
            PrimitiveOp::Dropout { rate } => write!(f, "Dropout({rate})"),
            PrimitiveOp::AveragePool { window } => write!(f, "AvgPool({window})"),
            PrimitiveOp::MaxPool { window } => write!(f, "MaxPool({window})"),
            other => f.write_str(other.kind().name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn dense_sets_channels() {
        let op = PrimitiveOp::Dense {
            features: Features::Fixed(64),
        };
        assert_eq!(
            op.apply_shape(&shape(&[1, 8, 8, 3])).unwrap(),
            shape(&[1, 8, 8, 64])
        );
        let half = PrimitiveOp::Dense {
            features: Features::scale(1, 2),
        };
        assert!(half.apply_shape(&shape(&[1, 8, 8, 3])).is_err());
        assert_eq!(
            half.apply_shape(&shape(&[1, 8, 8, 4])).unwrap(),
            shape(&[1, 8, 8, 2])
        );
    }

    #[test]
    fn strided_conv_divides_spatial() {
        let op = PrimitiveOp::Convolution {
            features: Features::SAME,
            kernel: 2,
            stride: 2,
        };
        assert_eq!(
            op.apply_shape(&shape(&[1, 8, 8, 3])).unwrap(),
            shape(&[1, 4, 4, 3])
        );
        assert!(op.apply_shape(&shape(&[1, 5, 5, 3])).is_err());
        let bad = PrimitiveOp::Convolution {
            features: Features::SAME,
            kernel: 3,
            stride: 2,
        };
        assert!(bad.check_params().is_err());
    }

    #[test]
    fn grouped_ops_need_divisible_channels() {
        let gc = PrimitiveOp::GroupedConvolution {
            features: Features::SAME,
            kernel: 3,
            stride: 1,
            groups: 2,
        };
        assert!(gc.apply_shape(&shape(&[1, 4, 4, 3])).is_err());
        assert!(gc.apply_shape(&shape(&[1, 4, 4, 4])).is_ok());
        let gn = PrimitiveOp::GroupNorm { groups: 4 };
        assert!(gn.apply_shape(&shape(&[1, 4, 4, 4])).is_err());
        assert!(gn.apply_shape(&shape(&[1, 4, 4, 8])).is_ok());
    }

    #[test]
    fn add_requires_equal_shapes() {
        let a = shape(&[1, 4, 4]);
        let b = shape(&[1, 4, 5]);
        assert!(PrimitiveOp::Add.output_shape(&[&a, &b]).is_err());
        assert!(PrimitiveOp::Add.output_shape(&[&a]).is_err());
        assert_eq!(PrimitiveOp::Add.output_shape(&[&a, &a]).unwrap(), a);
    }

    #[test]
    fn features_serde_forms() {
        let f: Features = serde_json::from_str("\"x1/2\"").unwrap();
        assert_eq!(f, Features::scale(1, 2));
        let f: Features = serde_json::from_str("16").unwrap();
        assert_eq!(f, Features::Fixed(16));
        assert_eq!(
            serde_json::to_string(&Features::scale(2, 1)).unwrap(),
            "\"x2\""
        );
        assert!(serde_json::from_str::<Features>("\"2\"").is_err());
    }

    #[test]
    fn op_serde_roundtrip() {
        let op = PrimitiveOp::GroupedConvolution {
            features: Features::SAME,
            kernel: 3,
            stride: 1,
            groups: 2,
        };
        let text = serde_json::to_string(&op).unwrap();
        assert!(text.contains("\"kind\":\"GroupedConvolution\""));
        let back: PrimitiveOp = serde_json::from_str(&text).unwrap();
        assert_eq!(back, op);
        let relu: PrimitiveOp = serde_json::from_str(r#"{"kind":"ReLU"}"#).unwrap();
        assert_eq!(relu, PrimitiveOp::ReLU);
    }
}
