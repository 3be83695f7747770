use super::{Domain, MeteredDistance};
use crate::distances::DistanceModel;
use crate::graph::PrimitiveOp;
use crate::properties::PropertyState;

/// The abstract NAS state space: property states extended by catalog ops.
#[derive(Clone, Debug)]
pub struct NasDomain {
    pub catalog: Vec<PrimitiveOp>,
}

impl Domain for NasDomain {
    type Program = PropertyState;
    type Op = PrimitiveOp;

    fn alphabet(&self) -> Vec<PrimitiveOp> {
        self.catalog.clone()
    }

    fn apply(&self, p: &PropertyState, op: &PrimitiveOp) -> Option<PropertyState> {
        if !op.is_simple() {
            return None;
        }
        p.append(op).ok()
    }
}

/// `d_total` under a distance model, at unit cost per evaluation.
pub struct NasDistance {
    pub model: DistanceModel,
}

impl MeteredDistance<PropertyState> for NasDistance {
    fn eval(&self, p: &PropertyState) -> (f64, u64) {
        (self.model.total(p).as_f64(), 1)
    }
}
