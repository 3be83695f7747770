use rand::Rng;

use super::tensor::{unflatten, DenseTensor, ExecError};
use crate::graph::{PrimitiveOp, TensorShape};

/// Parameters of one op instance. Biases are omitted so that affine ops are linear.
#[derive(Clone, Debug, PartialEq)]
pub enum OpWeights {
    None,
    /// Dense matrix, `c_in × c_out`, row-major.
    Matrix(Vec<f64>),
    /// Convolution kernel laid out `[offset][c_in / groups][c_out]`.
    Kernel(Vec<f64>),
    /// Per-channel scale.
    Gamma(Vec<f64>),
}

fn generic_value<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // bounded away from zero so no connection vanishes by accident
    let magnitude = rng.gen_range(0.5..1.5);
    if rng.gen_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

impl OpWeights {
    /// Number of weights the op needs at this input shape.
    pub fn expected_len(
        op: &PrimitiveOp,
        input: &TensorShape,
    ) -> Result<(usize, &'static str), ExecError> {
        if op.arity() != 1 {
            return Ok((0, "none"));
        }
        let out = op.apply_shape(input)?;
        let c_in = input.channels();
        let c_out = out.channels();
        Ok(match op {
            PrimitiveOp::Dense { .. } => (c_in * c_out, "matrix"),
            _ if op.conv_spec().is_some() => {
                let c = op.conv_spec().expect("conv");
                let taps = c.kernel.pow(input.spatial().len() as u32);
                (taps * (c_in / c.groups) * c_out, "kernel")
            }
            PrimitiveOp::BatchNorm | PrimitiveOp::LayerNorm | PrimitiveOp::GroupNorm { .. } => {
                (c_out, "gamma")
            }
            _ => (0, "none"),
        })
    }

    pub fn generate<R: Rng + ?Sized>(
        op: &PrimitiveOp,
        input: &TensorShape,
        rng: &mut R,
    ) -> Result<Self, ExecError> {
        let (n, form) = Self::expected_len(op, input)?;
        let values: Vec<f64> = (0..n).map(|_| generic_value(rng)).collect();
        Ok(match form {
            "matrix" => OpWeights::Matrix(values),
            "kernel" => OpWeights::Kernel(values),
            "gamma" => OpWeights::Gamma(values),
            _ => OpWeights::None,
        })
    }

    fn values(&self) -> &[f64] {
        match self {
            OpWeights::None => &[],
            OpWeights::Matrix(v) | OpWeights::Kernel(v) | OpWeights::Gamma(v) => v,
        }
    }
}

#[derive(Clone, Debug)]
struct ConvGeom {
    kernel: usize,
    stride: usize,
    dilation: usize,
    c_in_group: usize,
    c_out_group: usize,
    pad: Vec<isize>,
    offsets: Vec<Vec<usize>>,
}

fn kernel_offsets(kernel: usize, dims: usize) -> Vec<Vec<usize>> {
    let mut all = vec![vec![]];
    for _ in 0..dims {
        let mut next = Vec::with_capacity(all.len() * kernel);
        for prefix in &all {
            for k in 0..kernel {
                let mut p = prefix.clone();
                p.push(k);
                next.push(p);
            }
        }
        all = next;
    }
    all
}

/// An op bound to an input shape and weights, ready to evaluate.
#[derive(Clone, Debug)]
pub struct PreparedOp {
    op: PrimitiveOp,
    weights: OpWeights,
    input: TensorShape,
    output: TensorShape,
    in_strides: Vec<usize>,
    out_strides: Vec<usize>,
    conv: Option<ConvGeom>,
}

impl PreparedOp {
    pub fn new(
        op: &PrimitiveOp,
        input: &TensorShape,
        weights: OpWeights,
    ) -> Result<Self, ExecError> {
        let output = if let PrimitiveOp::Add = op {
            op.output_shape(&[input, input])?
        } else {
            op.apply_shape(input)?
        };
        let (n, _) = OpWeights::expected_len(op, input)?;
        if weights.values().len() != n {
            return Err(ExecError::Weights(format!(
                "{op} at {input} needs {n} weights, got {}",
                weights.values().len()
            )));
        }
        let conv = op.conv_spec().map(|c| {
            let spatial = input.spatial();
            let pad = spatial
                .iter()
                .map(|&len| {
                    let out = len / c.stride;
                    let needed = (out as isize - 1) * c.stride as isize
                        + (c.kernel as isize - 1) * c.dilation as isize
                        + 1
                        - len as isize;
                    needed.max(0) / 2
                })
                .collect();
            ConvGeom {
                kernel: c.kernel,
                stride: c.stride,
                dilation: c.dilation,
                c_in_group: input.channels() / c.groups,
                c_out_group: output.channels() / c.groups,
                pad,
                offsets: kernel_offsets(c.kernel, spatial.len()),
            }
        });
        Ok(Self {
            op: op.clone(),
            weights,
            in_strides: input.strides(),
            out_strides: output.strides(),
            input: input.clone(),
            output,
            conv,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        op: &PrimitiveOp,
        input: &TensorShape,
        rng: &mut R,
    ) -> Result<Self, ExecError> {
        let w = OpWeights::generate(op, input, rng)?;
        Self::new(op, input, w)
    }

    pub fn output_shape(&self) -> &TensorShape {
        &self.output
    }

    pub fn input_shape(&self) -> &TensorShape {
        &self.input
    }

    fn check(&self, inputs: &[&DenseTensor]) -> Result<(), ExecError> {
        if inputs.len() != self.op.arity() {
            return Err(ExecError::Shape(crate::graph::ShapeError::Arity {
                op: self.op.to_string(),
                expected: self.op.arity(),
                found: inputs.len(),
            }));
        }
        for x in inputs {
            if *x.shape() != self.input {
                return Err(ExecError::OperandShape {
                    expected: self.input.clone(),
                    found: x.shape().clone(),
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, inputs: &[&DenseTensor]) -> Result<DenseTensor, ExecError> {
        self.check(inputs)?;
        let n = self.output.num_elements();
        let mut idx = vec![0; self.output.rank()];
        let values = (0..n)
            .map(|flat| self.eval_unchecked(inputs, flat, &mut idx))
            .collect();
        DenseTensor::new(self.output.clone(), values)
    }

    /// Values at the listed output positions only.
    pub fn eval_subset(
        &self,
        inputs: &[&DenseTensor],
        outputs: &[usize],
    ) -> Result<Vec<f64>, ExecError> {
        self.check(inputs)?;
        let mut idx = vec![0; self.output.rank()];
        Ok(outputs
            .iter()
            .map(|&flat| self.eval_unchecked(inputs, flat, &mut idx))
            .collect())
    }

    fn eval_unchecked(&self, inputs: &[&DenseTensor], out_flat: usize, idx: &mut [usize]) -> f64 {
        let x = inputs[0].values();
        let rank = self.output.rank();
        let c_out = self.output.channels();
        let c_in = self.input.channels();
        let w = self.weights.values();
        match &self.op {
            PrimitiveOp::Add => x[out_flat] + inputs[1].values()[out_flat],
            PrimitiveOp::ScalarMultiply { value } => value * x[out_flat],
            PrimitiveOp::ReLU => x[out_flat].max(0.0),
            PrimitiveOp::GeLU => gelu(x[out_flat]),
            PrimitiveOp::SiLU => x[out_flat] * sigmoid(x[out_flat]),
            PrimitiveOp::Sigmoid => sigmoid(x[out_flat]),
            PrimitiveOp::Dropout { .. } => x[out_flat],
            PrimitiveOp::BatchNorm => {
                let c = out_flat % c_out;
                w[c] * x[out_flat]
            }
            PrimitiveOp::LayerNorm | PrimitiveOp::GroupNorm { .. } => {
                let c = out_flat % c_out;
                let base = out_flat - c;
                let group = match self.op {
                    PrimitiveOp::GroupNorm { groups } => c_out / groups,
                    _ => c_out,
                };
                let start = base + (c / group) * group;
                let mean = x[start..start + group].iter().sum::<f64>() / group as f64;
                w[c] * (x[out_flat] - mean)
            }
            PrimitiveOp::Softmax => {
                let c = out_flat % c_out;
                let base = out_flat - c;
                let row = &x[base..base + c_out];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                (row[c] - max).exp() / denom
            }
            PrimitiveOp::Dense { .. } => {
                let co = out_flat % c_out;
                let position = out_flat / c_out;
                let base = position * c_in;
                (0..c_in).map(|ci| x[base + ci] * w[ci * c_out + co]).sum()
            }
            PrimitiveOp::AveragePool { window } | PrimitiveOp::MaxPool { window } => {
                unflatten(&self.out_strides, out_flat, idx);
                let is_max = matches!(self.op, PrimitiveOp::MaxPool { .. });
                let spatial = rank - 2;
                let mut acc = if is_max { f64::NEG_INFINITY } else { 0.0 };
                let mut count = 0usize;
                let taps = window.pow(spatial as u32);
                for t in 0..taps {
                    let mut rem = t;
                    let mut flat = idx[0] * self.in_strides[0] + idx[rank - 1];
                    for d in (0..spatial).rev() {
                        let k = rem % window;
                        rem /= window;
                        flat += (idx[d + 1] * window + k) * self.in_strides[d + 1];
                    }
                    let v = x[flat];
                    if is_max {
                        acc = acc.max(v);
                    } else {
                        acc += v;
                    }
                    count += 1;
                }
                if is_max {
                    acc
                } else {
                    acc / count as f64
                }
            }
            _ => {
                let g = self.conv.as_ref().expect("conv geometry");
                unflatten(&self.out_strides, out_flat, idx);
                let co = idx[rank - 1];
                let group = co / g.c_out_group;
                let ci0 = group * g.c_in_group;
                let mut acc = 0.0;
                'taps: for (t, offset) in g.offsets.iter().enumerate() {
                    let mut flat = idx[0] * self.in_strides[0];
                    for (d, &k) in offset.iter().enumerate() {
                        let p = (idx[d + 1] * g.stride + k * g.dilation) as isize - g.pad[d];
                        if p < 0 || p as usize >= self.input.dims()[d + 1] {
                            continue 'taps;
                        }
                        flat += p as usize * self.in_strides[d + 1];
                    }
                    let wbase = t * g.c_in_group * c_out;
                    for cl in 0..g.c_in_group {
                        acc += x[flat + ci0 + cl] * w[wbase + cl * c_out + co];
                    }
                }
                let _ = g.kernel;
                acc
            }
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn gelu(v: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * v * (1.0 + (c * (v + 0.044715 * v * v * v)).tanh())
}

/// Evaluates `op` on `inputs` with explicit weights.
pub fn eval_op(
    op: &PrimitiveOp,
    inputs: &[DenseTensor],
    weights: &OpWeights,
) -> Result<DenseTensor, ExecError> {
    let first = inputs.first().ok_or_else(|| {
        ExecError::Shape(crate::graph::ShapeError::Arity {
            op: op.to_string(),
            expected: op.arity(),
            found: 0,
        })
    })?;
    let prepared = PreparedOp::new(op, first.shape(), weights.clone())?;
    let refs: Vec<&DenseTensor> = inputs.iter().collect();
    prepared.eval(&refs)
}

/// A sequential chain bound to weights.
#[derive(Clone, Debug)]
pub struct PreparedChain {
    ops: Vec<PreparedOp>,
    input: TensorShape,
}

impl PreparedChain {
    pub fn random<R: Rng + ?Sized>(
        ops: &[PrimitiveOp],
        input: &TensorShape,
        rng: &mut R,
    ) -> Result<Self, ExecError> {
        let mut shape = input.clone();
        let mut prepared = Vec::with_capacity(ops.len());
        for op in ops {
            let p = PreparedOp::random(op, &shape, rng)?;
            shape = p.output_shape().clone();
            prepared.push(p);
        }
        Ok(Self {
            ops: prepared,
            input: input.clone(),
        })
    }

    pub fn output_shape(&self) -> &TensorShape {
        self.ops
            .last()
            .map(|p| p.output_shape())
            .unwrap_or(&self.input)
    }

    pub fn eval(&self, x: &DenseTensor) -> Result<DenseTensor, ExecError> {
        let mut cur = x.clone();
        for p in &self.ops {
            cur = p.eval(&[&cur])?;
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Features;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn scalar_and_relu() {
        let x = DenseTensor::new(shape(&[1, 3]), vec![-1.0, 0.0, 2.0]).unwrap();
        let y = eval_op(&PrimitiveOp::ReLU, &[x.clone()], &OpWeights::None).unwrap();
        assert_eq!(y.values(), &[0.0, 0.0, 2.0]);
        let y = eval_op(
            &PrimitiveOp::ScalarMultiply { value: 3.0 },
            &[x],
            &OpWeights::None,
        )
        .unwrap();
        assert_eq!(y.values(), &[-3.0, 0.0, 6.0]);
    }

    #[test]
    fn center_tap_conv_is_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = shape(&[1, 5, 5, 3]);
        let x = DenseTensor::random(s.clone(), &mut rng);
        let dense = PrimitiveOp::Dense {
            features: Features::Fixed(4),
        };
        let conv = PrimitiveOp::Convolution {
            features: Features::Fixed(4),
            kernel: 3,
            stride: 1,
        };
        let OpWeights::Matrix(m) = OpWeights::generate(&dense, &s, &mut rng).unwrap() else {
            panic!("dense weights")
        };
        let mut kernel = vec![0.0; 9 * 3 * 4];
        let center = 4; // offset (1, 1)
        kernel[center * 12..center * 12 + 12].copy_from_slice(&m);
        let yd = eval_op(&dense, &[x.clone()], &OpWeights::Matrix(m)).unwrap();
        let yc = eval_op(&conv, &[x], &OpWeights::Kernel(kernel)).unwrap();
        for (a, b) in yd.values().iter().zip(yc.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pools() {
        let x = DenseTensor::new(shape(&[1, 2, 2, 1]), vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let avg = eval_op(
            &PrimitiveOp::AveragePool { window: 2 },
            &[x.clone()],
            &OpWeights::None,
        )
        .unwrap();
        assert_eq!(avg.values(), &[3.0]);
        let max = eval_op(&PrimitiveOp::MaxPool { window: 2 }, &[x], &OpWeights::None).unwrap();
        assert_eq!(max.values(), &[6.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DenseTensor::random(shape(&[2, 3, 4]), &mut rng);
        let y = eval_op(&PrimitiveOp::Softmax, &[x], &OpWeights::None).unwrap();
        for row in y.values().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn output_shape_matches_shape_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = shape(&[1, 6, 6, 4]);
        let op = PrimitiveOp::GroupedConvolution {
            features: Features::scale(2, 1),
            kernel: 3,
            stride: 3,
            groups: 2,
        };
        let p = PreparedOp::random(&op, &s, &mut rng).unwrap();
        let y = p
            .eval(&[&DenseTensor::random(s.clone(), &mut rng)])
            .unwrap();
        assert_eq!(y.shape(), &op.apply_shape(&s).unwrap());
    }

    #[test]
    fn wrong_weight_count_is_rejected() {
        let op = PrimitiveOp::Dense {
            features: Features::Fixed(2),
        };
        assert!(PreparedOp::new(&op, &shape(&[1, 3]), OpWeights::Matrix(vec![1.0])).is_err());
    }
}
