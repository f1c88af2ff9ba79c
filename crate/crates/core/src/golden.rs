//! Built-in worked example with hand-checkable numbers.
//!
//! Two tiny datasets, A and B, share three single-pixel observations
//! (intensities 1, 2, 3), so the pixel mapper yields exactly three states.
//! Visit counts and recorded actions are chosen so the per-state action
//! distributions and the final distances can be verified by hand:
//!
//! | state | A visits | A dist      | B visits | B dist      | distance |
//! |-------|----------|-------------|----------|-------------|----------|
//! | s1    | 2        | (0, .5, .5) | 3        | (1, 0, 0)   | sqrt 1.5 |
//! | s2    | 1        | (0, 1, 0)   | 2        | (0, .5, .5) | sqrt 0.5 |
//! | s3    | 2        | (0, .5, .5) | 1        | (0, 0, 1)   | sqrt 0.5 |
//!
//! With the expected (visit-weighted) aggregation at visit threshold 1 the
//! playstyle distance is 0.940; at threshold 2 only s1 survives and the
//! distance is sqrt 1.5 = 1.225.  The unweighted mean over all three
//! states is 0.880.

use crate::dataset::{Action, ActionSpace, ObsShape, Observation, PlayDataset, PlaySample};
use crate::discretizer::{build_state_table, StateMapper, StateTable};

fn sample(value: u8, action: u32) -> PlaySample {
    PlaySample {
        observation: Observation::new(ObsShape(vec![1, 1, 1]), vec![value]).unwrap(),
        action: Action::Discrete(action),
    }
}

/// The two datasets of the worked example.
pub fn worked_example() -> (PlayDataset, PlayDataset) {
    let shape = ObsShape(vec![1, 1, 1]);
    let space = ActionSpace::Discrete { n_actions: 3 };
    let a = PlayDataset::new(
        "golden-a",
        shape.clone(),
        space,
        vec![
            sample(1, 1),
            sample(1, 2),
            sample(2, 1),
            sample(3, 1),
            sample(3, 2),
        ],
    )
    .expect("fixture A is valid");
    let b = PlayDataset::new(
        "golden-b",
        shape,
        space,
        vec![
            sample(1, 0),
            sample(1, 0),
            sample(1, 0),
            sample(2, 1),
            sample(2, 2),
            sample(3, 2),
        ],
    )
    .expect("fixture B is valid");
    (a, b)
}

/// State tables of the worked example under the pixel mapper.
pub fn worked_example_tables() -> (StateTable, StateTable) {
    let (a, b) = worked_example();
    let ta = build_state_table(&StateMapper::Pixel, &a).expect("fixture maps cleanly");
    let tb = build_state_table(&StateMapper::Pixel, &b).expect("fixture maps cleanly");
    (ta, tb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretizer::DiscreteState;

    #[test]
    fn fixture_counts_match_the_write_up() {
        let (ta, tb) = worked_example_tables();
        let s = |v: u16| DiscreteState::new(vec![v]);
        assert_eq!(ta.count(&s(1)), 2);
        assert_eq!(ta.count(&s(2)), 1);
        assert_eq!(ta.count(&s(3)), 2);
        assert_eq!(tb.count(&s(1)), 3);
        assert_eq!(tb.count(&s(2)), 2);
        assert_eq!(tb.count(&s(3)), 1);
        assert_eq!(ta.total_samples(), 5);
        assert_eq!(tb.total_samples(), 6);
    }
}
