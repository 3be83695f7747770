//! Reference interpreter for the primitive ops and the concrete oracles built on it.

mod eval;
mod oracle;
mod tensor;

pub use eval::{eval_op, OpWeights, PreparedChain, PreparedOp};
pub use oracle::{
    concrete_mixing, concrete_mixing_chain, contribution_pattern, linearity_test, oracle_shape,
    pairing_bits, spatial_len_for, ContributionPattern, OracleConfig,
};
pub use tensor::{DenseTensor, ExecError};
