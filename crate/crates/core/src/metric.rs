//! The playstyle distance: compare what two datasets do in shared states.
//!
//! Two state tables are compared on their *intersection states* — states
//! visited at least `visit_threshold` times in **both** datasets.  For each
//! intersection state a distance between the two per-state action
//! distributions is computed ([`policy_distance`]), and the per-state
//! values are aggregated:
//!
//! * [`Aggregation::Expected`] — each direction weights states by that
//!   dataset's visit counts (renormalized over the intersection), and the
//!   two directed values are averaged.  This is the default.
//! * [`Aggregation::Uniform`] — the unweighted mean over intersection
//!   states.
//!
//! An empty intersection makes the distance *undefined* — a first-class
//! outcome (`value: None`), not an error.  Prediction treats undefined
//! distances as +infinity.

use thiserror::Error;

use crate::dataset::{Action, ActionSpace};
use crate::discretizer::{DiscreteState, StateTable};
use crate::distribution::{
    fit_categorical, fit_gaussian, kl_categorical, mkl_categorical, w1_categorical,
    w2_categorical, w2_gaussian, w2_gaussian_squared_mean, DistError,
};

/// Which distance compares two per-state action distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceKind {
    W1,
    W2,
    Kl,
    Mkl,
}

impl DistanceKind {
    pub fn parse(s: &str) -> Option<DistanceKind> {
        match s {
            "w1" => Some(DistanceKind::W1),
            "w2" => Some(DistanceKind::W2),
            "kl" => Some(DistanceKind::Kl),
            "mkl" => Some(DistanceKind::Mkl),
            _ => None,
        }
    }
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DistanceKind::W1 => "w1",
            DistanceKind::W2 => "w2",
            DistanceKind::Kl => "kl",
            DistanceKind::Mkl => "mkl",
        };
        write!(f, "{s}")
    }
}

/// How per-state distances aggregate into one number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    /// Visit-weighted in both directions, then averaged.
    Expected,
    /// Unweighted mean over intersection states.
    Uniform,
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Aggregation::Expected => "expected",
            Aggregation::Uniform => "uniform",
        };
        write!(f, "{s}")
    }
}

/// Full configuration of the playstyle distance.
#[derive(Clone, Copy, Debug)]
pub struct MetricConfig {
    pub distance: DistanceKind,
    pub aggregation: Aggregation,
    /// Minimum visit count (in each dataset) for a state to count as shared.
    pub visit_threshold: usize,
    /// Square the Gaussian mean term (see [`w2_gaussian_squared_mean`]).
    pub squared_mean_term: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            distance: DistanceKind::W2,
            aggregation: Aggregation::Expected,
            visit_threshold: 2,
            squared_mean_term: false,
        }
    }
}

/// Per-state detail of a distance computation.
#[derive(Clone, Debug)]
pub struct PerStateDistance {
    pub state: DiscreteState,
    /// Distance between the two per-state action distributions.
    pub distance: f64,
    /// First dataset's renormalized visit weight over the intersection.
    pub weight_a: f64,
    /// Second dataset's renormalized visit weight over the intersection.
    pub weight_b: f64,
}

/// Outcome of a playstyle distance computation.
#[derive(Clone, Debug)]
pub struct DistanceResult {
    /// `None` when the intersection is empty (the distance is undefined).
    pub value: Option<f64>,
    pub intersection_size: usize,
    /// Breakdown in deterministic (code-sorted) state order.
    pub per_state: Vec<PerStateDistance>,
}

impl DistanceResult {
    /// The value with undefined mapped to +infinity (prediction semantics).
    pub fn value_or_infinite(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }
}

/// Errors from metric evaluation.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("visit threshold must be at least 1")]
    BadThreshold,
    #[error("state is below the visit threshold or missing in one dataset")]
    StateMissing,
    #[error("tables record different action spaces")]
    MixedActionSpaces,
    #[error("{0} is not defined for continuous action distributions")]
    UnsupportedDistance(DistanceKind),
    #[error("distribution error: {0}")]
    Dist(#[from] DistError),
    #[error("every candidate distance is undefined; no prediction possible")]
    NoPrediction,
    #[error("nothing to evaluate (no targets)")]
    EmptyEvaluation,
}

/// States visited at least `threshold` times in both tables, code-sorted.
pub fn intersect_states(
    a: &StateTable,
    b: &StateTable,
    threshold: usize,
) -> Result<Vec<DiscreteState>, MetricError> {
    if threshold == 0 {
        return Err(MetricError::BadThreshold);
    }
    let mut shared: Vec<DiscreteState> = a
        .iter()
        .filter(|(state, entry)| entry.count() >= threshold && b.count(state) >= threshold)
        .map(|(state, _)| state.clone())
        .collect();
    shared.sort();
    Ok(shared)
}

fn discrete_actions(actions: &[Action]) -> Vec<u32> {
    actions
        .iter()
        .map(|a| match a {
            Action::Discrete(i) => *i,
            Action::Continuous(_) => unreachable!("action space checked before fitting"),
        })
        .collect()
}

fn continuous_actions(actions: &[Action]) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|a| match a {
            Action::Continuous(v) => v.iter().map(|&x| x as f64).collect(),
            Action::Discrete(_) => unreachable!("action space checked before fitting"),
        })
        .collect()
}

/// Distance between the two per-state action distributions at `state`.
///
/// The state must be present in both tables; threshold filtering is the
/// caller's job (see [`intersect_states`]).
pub fn policy_distance(
    a: &StateTable,
    b: &StateTable,
    state: &DiscreteState,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    if a.action_space() != b.action_space() {
        return Err(MetricError::MixedActionSpaces);
    }
    let ea = a.entry(state).ok_or(MetricError::StateMissing)?;
    let eb = b.entry(state).ok_or(MetricError::StateMissing)?;
    match a.action_space() {
        ActionSpace::Discrete { n_actions } => {
            let pa = fit_categorical(&discrete_actions(ea.actions()), n_actions)?;
            let pb = fit_categorical(&discrete_actions(eb.actions()), n_actions)?;
            let d = match cfg.distance {
                DistanceKind::W1 => w1_categorical(&pa, &pb)?,
                DistanceKind::W2 => w2_categorical(&pa, &pb)?,
                DistanceKind::Kl => kl_categorical(&pa, &pb)?,
                DistanceKind::Mkl => mkl_categorical(&pa, &pb)?,
            };
            Ok(d)
        }
        ActionSpace::Continuous { .. } => {
            if cfg.distance != DistanceKind::W2 {
                return Err(MetricError::UnsupportedDistance(cfg.distance));
            }
            let ga = fit_gaussian(&continuous_actions(ea.actions()))?;
            let gb = fit_gaussian(&continuous_actions(eb.actions()))?;
            let d = if cfg.squared_mean_term {
                w2_gaussian_squared_mean(&ga, &gb)?
            } else {
                w2_gaussian(&ga, &gb)?
            };
            Ok(d)
        }
    }
}

/// The playstyle distance between two datasets' state tables.
pub fn playstyle_distance(
    a: &StateTable,
    b: &StateTable,
    cfg: &MetricConfig,
) -> Result<DistanceResult, MetricError> {
    if a.action_space() != b.action_space() {
        return Err(MetricError::MixedActionSpaces);
    }
    let shared = intersect_states(a, b, cfg.visit_threshold)?;
    if shared.is_empty() {
        return Ok(DistanceResult { value: None, intersection_size: 0, per_state: Vec::new() });
    }
    let total_a: usize = shared.iter().map(|s| a.count(s)).sum();
    let total_b: usize = shared.iter().map(|s| b.count(s)).sum();
    let n = shared.len() as f64;
    let mut per_state = Vec::with_capacity(shared.len());
    for state in shared {
        let distance = policy_distance(a, b, &state, cfg)?;
        per_state.push(PerStateDistance {
            weight_a: a.count(&state) as f64 / total_a as f64,
            weight_b: b.count(&state) as f64 / total_b as f64,
            distance,
            state,
        });
    }
    let value = match cfg.aggregation {
        Aggregation::Expected => {
            // Average the two directed, visit-weighted expectations.
            let d_given_b: f64 = per_state.iter().map(|p| p.weight_b * p.distance).sum();
            let d_given_a: f64 = per_state.iter().map(|p| p.weight_a * p.distance).sum();
            0.5 * (d_given_b + d_given_a)
        }
        Aggregation::Uniform => per_state.iter().map(|p| p.distance).sum::<f64>() / n,
    };
    Ok(DistanceResult { value: Some(value), intersection_size: per_state.len(), per_state })
}

/// Distances from one target to every candidate, in candidate order.
pub fn rank_candidates(
    target: &StateTable,
    candidates: &[(String, StateTable)],
    cfg: &MetricConfig,
) -> Result<Vec<(String, DistanceResult)>, MetricError> {
    candidates
        .iter()
        .map(|(id, table)| Ok((id.clone(), playstyle_distance(target, table, cfg)?)))
        .collect()
}

/// Predict which candidate the target was played by: the candidate with
/// the smallest distance, undefined counting as +infinity, ties broken
/// toward the earliest candidate.  Errors when every distance is undefined.
pub fn predict_style(
    target: &StateTable,
    candidates: &[(String, StateTable)],
    cfg: &MetricConfig,
) -> Result<String, MetricError> {
    let ranked = rank_candidates(target, candidates, cfg)?;
    let mut best: Option<(&str, f64)> = None;
    for (id, result) in &ranked {
        let d = result.value_or_infinite();
        if d.is_finite() && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((id, d));
        }
    }
    best.map(|(id, _)| id.to_string()).ok_or(MetricError::NoPrediction)
}

/// Prediction accuracy (percent) over labelled targets.  Targets whose
/// every candidate distance is undefined count as incorrect.
pub fn accuracy(
    targets: &[(String, StateTable)],
    candidates: &[(String, StateTable)],
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    if targets.is_empty() {
        return Err(MetricError::EmptyEvaluation);
    }
    let mut correct = 0usize;
    for (true_id, table) in targets {
        match predict_style(table, candidates, cfg) {
            Ok(predicted) if &predicted == true_id => correct += 1,
            Ok(_) => {}
            Err(MetricError::NoPrediction) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(100.0 * correct as f64 / targets.len() as f64)
}

/// Gaussian baseline distance between two continuous feature sets
/// (e.g. pre-quantization encoder features): fit one Gaussian to each and
/// compare with the closed-form Gaussian distance.
pub fn continuous_baseline(
    features_a: &[Vec<f64>],
    features_b: &[Vec<f64>],
    squared_mean_term: bool,
) -> Result<f64, MetricError> {
    let ga = fit_gaussian(features_a)?;
    let gb = fit_gaussian(features_b)?;
    let d = if squared_mean_term {
        w2_gaussian_squared_mean(&ga, &gb)?
    } else {
        w2_gaussian(&ga, &gb)?
    };
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Action;
    use crate::golden::worked_example_tables;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn cfg(t: usize, aggregation: Aggregation) -> MetricConfig {
        MetricConfig { visit_threshold: t, aggregation, ..MetricConfig::default() }
    }

    #[test]
    fn worked_example_at_threshold_one() {
        let (ta, tb) = worked_example_tables();
        let r = playstyle_distance(&ta, &tb, &cfg(1, Aggregation::Expected)).unwrap();
        assert_eq!(r.intersection_size, 3);
        let value = r.value.unwrap();
        assert!(close(value, 0.940, 1e-3), "got {value}");
        // Per-state distances: sqrt(1.5), sqrt(0.5), sqrt(0.5).
        let d: Vec<f64> = r.per_state.iter().map(|p| p.distance).collect();
        assert!(close(d[0], 1.5f64.sqrt(), 1e-9));
        assert!(close(d[1], 0.5f64.sqrt(), 1e-9));
        assert!(close(d[2], 0.5f64.sqrt(), 1e-9));
        // Visit weights: A (2,1,2)/5, B (3,2,1)/6.
        let wa: Vec<f64> = r.per_state.iter().map(|p| p.weight_a).collect();
        let wb: Vec<f64> = r.per_state.iter().map(|p| p.weight_b).collect();
        assert!(close(wa[0], 0.4, 1e-12) && close(wa[1], 0.2, 1e-12) && close(wa[2], 0.4, 1e-12));
        assert!(close(wb[0], 0.5, 1e-12) && close(wb[1], 1.0 / 3.0, 1e-12) && close(wb[2], 1.0 / 6.0, 1e-12));
    }

    #[test]
    fn worked_example_at_threshold_two() {
        let (ta, tb) = worked_example_tables();
        let r = playstyle_distance(&ta, &tb, &cfg(2, Aggregation::Expected)).unwrap();
        // Only s1 survives: A visits 2, B visits 3.
        assert_eq!(r.intersection_size, 1);
        assert!(close(r.value.unwrap(), 1.5f64.sqrt(), 1e-3));
    }

    #[test]
    fn worked_example_uniform_mean() {
        let (ta, tb) = worked_example_tables();
        let r = playstyle_distance(&ta, &tb, &cfg(1, Aggregation::Uniform)).unwrap();
        let expected = (1.5f64.sqrt() + 0.5f64.sqrt() + 0.5f64.sqrt()) / 3.0;
        assert!(close(r.value.unwrap(), expected, 1e-12));
        assert!(close(r.value.unwrap(), 0.880, 1e-3));
    }

    #[test]
    fn distance_is_symmetric_on_the_worked_example() {
        let (ta, tb) = worked_example_tables();
        for aggregation in [Aggregation::Expected, Aggregation::Uniform] {
            let ab = playstyle_distance(&ta, &tb, &cfg(1, aggregation)).unwrap();
            let ba = playstyle_distance(&tb, &ta, &cfg(1, aggregation)).unwrap();
            assert!(close(ab.value.unwrap(), ba.value.unwrap(), 1e-12));
        }
    }

    #[test]
    fn self_distance_is_zero() {
        let (ta, _) = worked_example_tables();
        let r = playstyle_distance(&ta, &ta, &cfg(1, Aggregation::Expected)).unwrap();
        assert_eq!(r.value, Some(0.0));
    }

    #[test]
    fn empty_intersection_is_undefined_not_an_error() {
        let (ta, tb) = worked_example_tables();
        // Threshold 4 exceeds every visit count.
        let r = playstyle_distance(&ta, &tb, &cfg(4, Aggregation::Expected)).unwrap();
        assert_eq!(r.value, None);
        assert_eq!(r.intersection_size, 0);
        assert_eq!(r.value_or_infinite(), f64::INFINITY);
    }

    #[test]
    fn threshold_zero_is_rejected() {
        let (ta, tb) = worked_example_tables();
        assert!(matches!(
            playstyle_distance(&ta, &tb, &cfg(0, Aggregation::Expected)),
            Err(MetricError::BadThreshold)
        ));
    }

    #[test]
    fn intersection_shrinks_as_threshold_grows() {
        let (ta, tb) = worked_example_tables();
        let mut last = usize::MAX;
        for t in 1..=4 {
            let n = intersect_states(&ta, &tb, t).unwrap().len();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn predict_breaks_ties_toward_the_earliest_candidate() {
        let (ta, tb) = worked_example_tables();
        // The same candidate table twice: distances tie exactly.
        let candidates = vec![("first".to_string(), tb.clone()), ("second".to_string(), tb)];
        let cfg = cfg(1, Aggregation::Expected);
        assert_eq!(predict_style(&ta, &candidates, &cfg).unwrap(), "first");
    }

    #[test]
    fn prediction_prefers_defined_distances() {
        use crate::discretizer::{DiscreteState, StateTable};
        use crate::dataset::ActionSpace;
        let space = ActionSpace::Discrete { n_actions: 2 };
        let s = |v: u16| DiscreteState::new(vec![v]);
        let acts = |list: &[u32]| list.iter().map(|&i| Action::Discrete(i)).collect::<Vec<_>>();
        let target = StateTable::from_entries(space, vec![(s(0), acts(&[0, 0]))]);
        let disjoint = StateTable::from_entries(space, vec![(s(9), acts(&[1, 1]))]);
        let matching = StateTable::from_entries(space, vec![(s(0), acts(&[0, 1]))]);
        let candidates = vec![
            ("disjoint".to_string(), disjoint.clone()),
            ("matching".to_string(), matching),
        ];
        let cfg = cfg(1, Aggregation::Expected);
        assert_eq!(predict_style(&target, &candidates, &cfg).unwrap(), "matching");
        // All-undefined: no prediction.
        let only_disjoint = vec![("disjoint".to_string(), disjoint)];
        assert!(matches!(
            predict_style(&target, &only_disjoint, &cfg),
            Err(MetricError::NoPrediction)
        ));
        // ...and accuracy counts such targets as incorrect.
        let targets = vec![("disjoint".to_string(), target)];
        let acc = accuracy(&targets, &only_disjoint, &cfg).unwrap();
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn accuracy_requires_targets() {
        let (_, tb) = worked_example_tables();
        let candidates = vec![("b".to_string(), tb)];
        assert!(matches!(
            accuracy(&[], &candidates, &cfg(1, Aggregation::Expected)),
            Err(MetricError::EmptyEvaluation)
        ));
    }

    #[test]
    fn continuous_baseline_single_points() {
        // One-sample fits share the ridge, which cancels: distance = mean gap.
        let d = continuous_baseline(&[vec![0.0]], &[vec![3.0]], false).unwrap();
        assert!(close(d, 3.0, 1e-9));
    }

    #[test]
    fn kl_variants_run_on_the_worked_example() {
        let (ta, tb) = worked_example_tables();
        for kind in [DistanceKind::W1, DistanceKind::Kl, DistanceKind::Mkl] {
            let cfg = MetricConfig { distance: kind, visit_threshold: 1, ..MetricConfig::default() };
            let r = playstyle_distance(&ta, &tb, &cfg).unwrap();
            assert!(r.value.unwrap().is_finite());
            assert!(r.value.unwrap() > 0.0);
        }
    }

    #[test]
    fn continuous_tables_reject_non_w2_distances() {
        use crate::discretizer::{DiscreteState, StateTable};
        use crate::dataset::ActionSpace;
        let space = ActionSpace::Continuous { dim: 1 };
        let s = DiscreteState::new(vec![0]);
        let acts = vec![Action::Continuous(vec![0.0]), Action::Continuous(vec![1.0])];
        let ta = StateTable::from_entries(space, vec![(s.clone(), acts.clone())]);
        let tb = StateTable::from_entries(space, vec![(s, acts)]);
        let cfg = MetricConfig {
            distance: DistanceKind::Kl,
            visit_threshold: 1,
            ..MetricConfig::default()
        };
        assert!(matches!(
            playstyle_distance(&ta, &tb, &cfg),
            Err(MetricError::UnsupportedDistance(DistanceKind::Kl))
        ));
    }
}
