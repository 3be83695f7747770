//! Abstract distances to property targets, feasibility and covering checks.

mod model;
mod value;

pub use model::{
    covering_check, d_total, feasible_mixing, Breakdown, CoveringReport, DistanceModel,
    MonotonicityViolation,
};
pub use value::{d_depth, d_mixing, d_shape, strengthen_distance, Distance};
