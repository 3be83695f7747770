use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::op::{Features, PrimitiveOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("catalog grid `{0}` is empty")]
    EmptyGrid(&'static str),
    #[error("catalog entry {op} is invalid: {reason}")]
    Invalid { op: String, reason: String },
}

/// Parameter grids the catalog is enumerated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    pub features: Vec<Features>,
    pub kernels: Vec<usize>,
    /// Also emit `stride == kernel` variants for kernels > 1.
    pub strided: bool,
    pub groups: Vec<usize>,
    pub grouped: bool,
    pub dilations: Vec<usize>,
    pub dilated: bool,
    pub pool_windows: Vec<usize>,
    pub scalars: Vec<f64>,
    pub dropout_rates: Vec<f64>,
    pub include_add: bool,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            features: vec![
                Features::scale(1, 2),
                Features::SAME,
                Features::scale(2, 1),
                Features::scale(4, 1),
            ],
            kernels: vec![1, 2, 3, 5],
            strided: true,
            groups: vec![2, 4],
            grouped: true,
            dilations: vec![2],
            dilated: true,
            pool_windows: vec![2, 3],
            scalars: vec![0.5, 2.0],
            dropout_rates: vec![0.1, 0.5],
            include_add: true,
        }
    }
}

impl CatalogConfig {
    /// Same grids with extra fixed feature counts placed first, so that compression
    /// picks them as class representatives.
    pub fn with_fixed_features(&self, fixed: &[usize]) -> Self {
        let mut cfg = self.clone();
        let mut features: Vec<Features> = Vec::new();
        for &n in fixed {
            let f = Features::Fixed(n);
            if !features.contains(&f) {
                features.push(f);
            }
        }
        for f in &self.features {
            if !features.contains(f) {
                features.push(*f);
            }
        }
        cfg.features = features;
        cfg
    }
}

/// Deterministic enumeration of the concrete ops described by `config`.
pub fn op_catalog(config: &CatalogConfig) -> Result<Vec<PrimitiveOp>, CatalogError> {
    if config.features.is_empty() {
        return Err(CatalogError::EmptyGrid("features"));
    }
    if config.kernels.is_empty() {
        return Err(CatalogError::EmptyGrid("kernels"));
    }
    if config.grouped && config.groups.is_empty() {
        return Err(CatalogError::EmptyGrid("groups"));
    }
    if config.dilated && config.dilations.is_empty() {
        return Err(CatalogError::EmptyGrid("dilations"));
    }

    let mut ops = Vec::new();
    for &features in &config.features {
        ops.push(PrimitiveOp::Dense { features });
    }
    let strides = |k: usize| -> Vec<usize> {
        if config.strided && k > 1 {
            vec![1, k]
        } else {
            vec![1]
        }
    };
    for &kernel in &config.kernels {
        for stride in strides(kernel) {
            for &features in &config.features {
                ops.push(PrimitiveOp::Convolution {
                    features,
                    kernel,
                    stride,
                });
            }
        }
    }
    if config.grouped {
        for &groups in &config.groups {
            for &kernel in &config.kernels {
                for stride in strides(kernel) {
                    for &features in &config.features {
                        ops.push(PrimitiveOp::GroupedConvolution {
                            features,
                            kernel,
                            stride,
                            groups,
                        });
                    }
                }
            }
        }
    }
    if config.dilated {
        for &dilation in &config.dilations {
            for &kernel in config.kernels.iter().filter(|&&k| k > 1) {
                for &features in &config.features {
                    ops.push(PrimitiveOp::DilatedConvolution {
                        features,
                        kernel,
                        stride: 1,
                        dilation,
                    });
                }
            }
        }
    }
    if config.include_add {
        ops.push(PrimitiveOp::Add);
    }
    for &value in &config.scalars {
        ops.push(PrimitiveOp::ScalarMultiply { value });
    }
    ops.extend([
        PrimitiveOp::ReLU,
        PrimitiveOp::GeLU,
        PrimitiveOp::SiLU,
        PrimitiveOp::Sigmoid,
        PrimitiveOp::Softmax,
        PrimitiveOp::BatchNorm,
        PrimitiveOp::LayerNorm,
    ]);
    for &groups in &config.groups {
        ops.push(PrimitiveOp::GroupNorm { groups });
    }
    for &rate in &config.dropout_rates {
        ops.push(PrimitiveOp::Dropout { rate });
    }
    for &window in &config.pool_windows {
        ops.push(PrimitiveOp::AveragePool { window });
    }
    for &window in &config.pool_windows {
        ops.push(PrimitiveOp::MaxPool { window });
    }

    for op in &ops {
        op.check_params().map_err(|e| CatalogError::Invalid {
            op: op.to_string(),
            reason: e.to_string(),
        })?;
    }
    Ok(ops)
}
