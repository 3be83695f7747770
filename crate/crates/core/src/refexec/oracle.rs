//! Concrete inference of contribution patterns, mixing and linearity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eval::{PreparedChain, PreparedOp};
use super::tensor::{unflatten, DenseTensor, ExecError};
use crate::graph::{PrimitiveOp, TensorShape};
use crate::properties::{Loc, MixingMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    /// Independent weight/base draws; masks are OR-ed.
    pub trials: usize,
    /// Forward-difference step.
    pub delta: f64,
    /// Absolute change counted as a contribution.
    pub threshold: f64,
    /// Max elements of either tensor.
    pub cap: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            trials: 3,
            delta: 4.0,
            threshold: 1e-12,
            cap: 4096,
            seed: 0x5eed,
        }
    }
}

/// Output element → contributing input elements (flat indices, ascending).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContributionPattern {
    pub input_shape: TensorShape,
    pub output_shape: TensorShape,
    deps: Vec<Vec<usize>>,
}

impl ContributionPattern {
    pub fn preimage(&self, output: usize) -> &[usize] {
        &self.deps[output]
    }

    pub fn contributes(&self, output: usize, input: usize) -> bool {
        self.deps[output].binary_search(&input).is_ok()
    }

    pub fn len(&self) -> usize {
        self.deps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deps.is_empty()
    }
}

type Evaluator = Box<dyn Fn(&DenseTensor) -> Result<Vec<f64>, ExecError>>;

/// For each listed output, the inputs whose perturbation changes it in some trial.
fn preimages(
    input: &TensorShape,
    outputs: &[usize],
    cfg: &OracleConfig,
    mut make: impl FnMut(&mut ChaCha8Rng) -> Result<Evaluator, ExecError>,
) -> Result<Vec<Vec<usize>>, ExecError> {
    let n_in = input.num_elements();
    let mut mask = vec![false; outputs.len() * n_in];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.trials.max(1) {
        let f = make(&mut rng)?;
        let mut x = DenseTensor::random(input.clone(), &mut rng);
        let base = f(&x)?;
        for i in 0..n_in {
            let old = x.values()[i];
            x.values_mut()[i] = old + cfg.delta;
            let y = f(&x)?;
            x.values_mut()[i] = old;
            for (o, (a, b)) in base.iter().zip(&y).enumerate() {
                if (a - b).abs() > cfg.threshold {
                    mask[o * n_in + i] = true;
                }
            }
        }
    }
    Ok((0..outputs.len())
        .map(|o| (0..n_in).filter(|&i| mask[o * n_in + i]).collect())
        .collect())
}

fn check_cap(shape: &TensorShape, cap: usize) -> Result<(), ExecError> {
    let elements = shape.num_elements();
    if elements > cap {
        return Err(ExecError::TooLarge {
            shape: shape.clone(),
            elements,
            cap,
        });
    }
    Ok(())
}

fn op_output_shape(op: &PrimitiveOp, input: &TensorShape) -> Result<TensorShape, ExecError> {
    Ok(if op.arity() == 2 {
        op.output_shape(&[input, input])?
    } else {
        op.apply_shape(input)?
    })
}

/// Single-op evaluator; Add is viewed per operand with the other operand held fixed.
fn op_evaluator(
    op: &PrimitiveOp,
    input: &TensorShape,
    outputs: Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Evaluator, ExecError> {
    let prepared = PreparedOp::random(op, input, rng)?;
    let other = DenseTensor::random(input.clone(), rng);
    let binary = op.arity() == 2;
    Ok(Box::new(move |x: &DenseTensor| {
        if binary {
            prepared.eval_subset(&[x, &other], &outputs)
        } else {
            prepared.eval_subset(&[x], &outputs)
        }
    }))
}

pub fn contribution_pattern(
    op: &PrimitiveOp,
    input: &TensorShape,
    cfg: &OracleConfig,
) -> Result<ContributionPattern, ExecError> {
    check_cap(input, cfg.cap)?;
    let output = op_output_shape(op, input)?;
    check_cap(&output, cfg.cap)?;
    let all: Vec<usize> = (0..output.num_elements()).collect();
    let deps = preimages(input, &all, cfg, |rng| {
        op_evaluator(op, input, all.clone(), rng)
    })?;
    Ok(ContributionPattern {
        input_shape: input.clone(),
        output_shape: output,
        deps,
    })
}

/// Output elements on the axis-aligned lines through the center element.
struct Cross {
    outputs: Vec<usize>,
    /// for each output dim, indices into `outputs` of that dim's center slice
    fibers: Vec<Vec<usize>>,
    center: usize,
}

fn center_cross(output: &TensorShape) -> Cross {
    let dims = output.dims();
    let strides = output.strides();
    let center_idx: Vec<usize> = dims.iter().map(|&d| d / 2).collect();
    let flat = |idx: &[usize]| -> usize { idx.iter().zip(&strides).map(|(i, s)| i * s).sum() };
    let center_flat = flat(&center_idx);
    let mut outputs = vec![center_flat];
    let mut fibers = Vec::with_capacity(dims.len());
    for k in 0..dims.len() {
        let mut fiber = Vec::with_capacity(dims[k]);
        for p in 0..dims[k] {
            let mut idx = center_idx.clone();
            idx[k] = p;
            let f = flat(&idx);
            let pos = match outputs.iter().position(|&o| o == f) {
                Some(pos) => pos,
                None => {
                    outputs.push(f);
                    outputs.len() - 1
                }
            };
            fiber.push(pos);
        }
        fibers.push(fiber);
    }
    Cross {
        outputs,
        fibers,
        center: 0,
    }
}

/// Pairing from center slices, locality from the center element.
fn mixing_from_cross(input: &TensorShape, cross: &Cross, pre: &[Vec<usize>]) -> MixingMatrix {
    let in_dims = input.dims();
    let strides = input.strides();
    let rank_in = in_dims.len();
    let rows = cross.fibers.len();
    let mut idx = vec![0; rank_in];
    let positions = |elems: &mut dyn Iterator<Item = usize>, idx: &mut Vec<usize>| {
        let mut seen: Vec<Vec<bool>> = in_dims.iter().map(|&d| vec![false; d]).collect();
        for e in elems {
            unflatten(&strides, e, idx);
            for (l, &p) in idx.iter().enumerate() {
                seen[l][p] = true;
            }
        }
        seen.into_iter()
            .map(|s| s.into_iter().filter(|&b| b).count())
            .collect::<Vec<usize>>()
    };
    let center_counts = positions(&mut pre[cross.center].iter().copied(), &mut idx);
    let mut m = MixingMatrix::none(rows, rank_in);
    for (k, fiber) in cross.fibers.iter().enumerate() {
        let covered = positions(
            &mut fiber.iter().flat_map(|&o| pre[o].iter().copied()),
            &mut idx,
        );
        for l in 0..rank_in {
            if in_dims[l] == 1 {
                // an extent-1 dim is covered by any slice; keep only the diagonal
                if k == l && !pre[cross.center].is_empty() {
                    m.set(k, l, Loc::O);
                }
                continue;
            }
            if covered[l] < in_dims[l] {
                continue;
            }
            let loc = match center_counts[l] {
                c if c == in_dims[l] => Loc::A,
                c if c > 1 => Loc::M,
                _ => Loc::O,
            };
            m.set(k, l, loc);
        }
    }
    m
}

/// Mixing of one op at `input`, evaluated at the center slices/element.
pub fn concrete_mixing(
    op: &PrimitiveOp,
    input: &TensorShape,
    cfg: &OracleConfig,
) -> Result<MixingMatrix, ExecError> {
    check_cap(input, cfg.cap)?;
    let output = op_output_shape(op, input)?;
    let cross = center_cross(&output);
    let outs = cross.outputs.clone();
    let pre = preimages(input, &outs, cfg, |rng| {
        op_evaluator(op, input, outs.clone(), rng)
    })?;
    Ok(mixing_from_cross(input, &cross, &pre))
}

/// Mixing of a sequential chain at `input`, via full forward evaluation.
pub fn concrete_mixing_chain(
    ops: &[PrimitiveOp],
    input: &TensorShape,
    cfg: &OracleConfig,
) -> Result<MixingMatrix, ExecError> {
    check_cap(input, cfg.cap)?;
    let mut probe_rng = ChaCha8Rng::seed_from_u64(0);
    let output = PreparedChain::random(ops, input, &mut probe_rng)?
        .output_shape()
        .clone();
    let cross = center_cross(&output);
    let outs = cross.outputs.clone();
    let pre = preimages(input, &outs, cfg, |rng| {
        let chain = PreparedChain::random(ops, input, rng)?;
        let outs = outs.clone();
        Ok(Box::new(move |x: &DenseTensor| {
            let y = chain.eval(x)?;
            Ok(outs.iter().map(|&o| y.values()[o]).collect())
        }) as Evaluator)
    })?;
    Ok(mixing_from_cross(input, &cross, &pre))
}

/// Pairing bit per (output dim, input dim).
pub fn pairing_bits(m: &MixingMatrix) -> Vec<Vec<bool>> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.get(r, c) != Loc::X).collect())
        .collect()
}

/// Checks `a f(x) + b f(y) = f(a x + b y)` on random draws (relative tolerance 1e-9).
pub fn linearity_test(op: &PrimitiveOp, shape: &TensorShape, trials: usize, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials.max(1) {
        let Ok(p) = PreparedOp::random(op, shape, &mut rng) else {
            return false;
        };
        let a: f64 = rng.gen_range(-2.0..2.0);
        let b: f64 = rng.gen_range(-2.0..2.0);
        let operands = op.arity();
        let xs: Vec<DenseTensor> = (0..operands)
            .map(|_| DenseTensor::random(shape.clone(), &mut rng))
            .collect();
        let ys: Vec<DenseTensor> = (0..operands)
            .map(|_| DenseTensor::random(shape.clone(), &mut rng))
            .collect();
        let mix: Vec<DenseTensor> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let v = x
                    .values()
                    .iter()
                    .zip(y.values())
                    .map(|(u, w)| a * u + b * w)
                    .collect();
                DenseTensor::new(shape.clone(), v).expect("same shape")
            })
            .collect();
        let run = |t: &[DenseTensor]| {
            let refs: Vec<&DenseTensor> = t.iter().collect();
            p.eval(&refs)
        };
        let (Ok(fx), Ok(fy), Ok(fm)) = (run(&xs), run(&ys), run(&mix)) else {
            return false;
        };
        let mut scale: f64 = 0.0;
        let mut err: f64 = 0.0;
        for ((u, w), m) in fx.values().iter().zip(fy.values()).zip(fm.values()) {
            let lhs = a * u + b * w;
            scale = scale.max(lhs.abs()).max(m.abs());
            err = err.max((lhs - m).abs());
        }
        if err > 1e-9 * scale.max(f64::MIN_POSITIVE) {
            return false;
        }
    }
    true
}

/// Width (in input positions, per spatial dim) of the center element's preimage for a
/// chain, and the product of its spatial down-sampling factors.
fn receptive_width(ops: &[PrimitiveOp]) -> (usize, usize) {
    let mut width = 1usize;
    for op in ops.iter().rev() {
        if let Some(w) = op.pool_window() {
            width *= w;
        } else if let Some(c) = op.conv_spec() {
            if c.stride > 1 {
                width *= c.kernel;
            } else {
                width += (c.kernel - 1) * c.dilation;
            }
        }
    }
    let factor = ops.iter().map(|o| o.spatial_factor()).product();
    (width, factor)
}

/// Spatial length large enough that no center preimage covers a whole spatial dim, and
/// divisible by the chain's down-sampling.
pub fn spatial_len_for(ops: &[PrimitiveOp]) -> usize {
    let (width, factor) = receptive_width(ops);
    let blocks = (width + 2).div_ceil(factor).max(2);
    factor * blocks
}

/// Small non-saturating shape for checking a single op: batch 2, enough channels for
/// any grouping, spatial extent past the receptive field.
pub fn oracle_shape(op: &PrimitiveOp, rank: usize) -> TensorShape {
    let groups = match *op {
        PrimitiveOp::GroupedConvolution { groups, .. } | PrimitiveOp::GroupNorm { groups } => {
            groups
        }
        _ => 1,
    };
    let channels = (2 * groups).max(4);
    let len = spatial_len_for(std::slice::from_ref(op));
    let mut dims = vec![2];
    dims.extend(std::iter::repeat_n(len, rank - 2));
    dims.push(channels);
    TensorShape::new(dims).expect("positive dims")
}
