use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::properties::{Loc, PropertyState, TargetSpec};

/// Probabilities of the property mutations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertyMutation {
    pub depth_keep: f64,
    /// Largest step of a depth change.
    pub depth_step: u32,
    pub shape_drop: f64,
    pub pairing_drop: f64,
}

impl Default for PropertyMutation {
    fn default() -> Self {
        Self {
            depth_keep: 0.5,
            depth_step: 2,
            shape_drop: 0.5,
            pairing_drop: 0.5,
        }
    }
}

impl PropertyMutation {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("depth_keep", self.depth_keep),
            ("shape_drop", self.shape_drop),
            ("pairing_drop", self.pairing_drop),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is not a probability"));
            }
        }
        Ok(())
    }
}

/// Target derived from inferred properties by relaxing them at random. Only the depth
/// may move upwards.
pub fn mutate_properties<R: Rng + ?Sized>(
    props: &PropertyState,
    rng: &mut R,
    cfg: &PropertyMutation,
) -> TargetSpec {
    let d = props.depth.count;
    let depth = if cfg.depth_step == 0 || rng.gen_bool(cfg.depth_keep) {
        d
    } else {
        let step = rng.gen_range(1..=cfg.depth_step);
        if rng.gen_bool(0.5) {
            d + step
        } else {
            d.saturating_sub(step)
        }
    };
    let shape = (!rng.gen_bool(cfg.shape_drop)).then(|| props.shape.clone());
    let mut mixing = props.mixing.clone();
    for r in 0..mixing.rows() {
        for c in 0..mixing.cols() {
            if r != c && mixing.get(r, c) != Loc::X && rng.gen_bool(cfg.pairing_drop) {
                mixing.set(r, c, Loc::X);
            }
        }
    }
    TargetSpec {
        mixing: Some(mixing),
        depth: Some(depth),
        shape,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Features, PrimitiveOp, TensorShape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn props() -> PropertyState {
        PropertyState::identity(TensorShape::new(vec![1, 8, 8, 4]).unwrap())
            .append_all(&[
                PrimitiveOp::Convolution {
                    features: Features::SAME,
                    kernel: 3,
                    stride: 1,
                },
                PrimitiveOp::ReLU,
            ])
            .unwrap()
    }

    #[test]
    fn keeping_everything_is_the_identity() {
        let cfg = PropertyMutation {
            depth_keep: 1.0,
            shape_drop: 0.0,
            pairing_drop: 0.0,
            ..PropertyMutation::default()
        };
        let p = props();
        let t = mutate_properties(&p, &mut ChaCha8Rng::seed_from_u64(0), &cfg);
        assert_eq!(t, TargetSpec::from_state(&p));
    }

    #[test]
    fn targets_only_relax_except_depth() {
        let p = props();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let t = mutate_properties(&p, &mut rng, &PropertyMutation::default());
            assert!(t.mixing.as_ref().unwrap().le(&p.mixing));
            let d = t.depth.unwrap();
            assert!(d <= p.depth.count + 2);
            if let Some(s) = &t.shape {
                assert_eq!(*s, p.shape);
            }
            for i in 0..4 {
                assert_eq!(t.mixing.as_ref().unwrap().get(i, i), p.mixing.get(i, i));
            }
        }
    }
}
