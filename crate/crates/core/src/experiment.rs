//! Experiment protocols: style-identification accuracy and distance
//! ordering, run against simulator-generated datasets.
//!
//! The central protocol treats every grid dataset as a labelled
//! candidate.  Each trial draws a fresh target dataset of a known style
//! (or resamples one from a held-out pool), maps it to a state table, and
//! predicts the nearest candidate under the playstyle distance.  Results
//! aggregate per visit threshold so threshold sweeps reuse the same
//! target tables.

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{DatasetError, PlayDataset};
use crate::discretizer::{build_state_table, MapError, StateMapper, StateTable};
use crate::metric::{rank_candidates, MetricConfig, MetricError};
use crate::sim::{generate_style_dataset, mix_seed, GridEntry, SimConfig, SimError, StyleSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("bad protocol: {0}")]
    Protocol(String),
}

/// Where each trial's target dataset comes from.
#[derive(Clone, Debug)]
pub enum TargetSource {
    /// Simulate a fresh dataset of the candidate's style per trial.
    Fresh { sim: SimConfig },
    /// Subsample (without replacement) from held-out pools, one pool per
    /// candidate, aligned by index.
    Resample { pools: Vec<PlayDataset> },
}

/// A style-identification accuracy study.
#[derive(Clone)]
pub struct AccuracyProtocol<'a> {
    /// Labelled candidate datasets (the "known styles").
    pub candidates: &'a [GridEntry],
    pub mapper: StateMapper,
    /// Distance and aggregation settings; `visit_threshold` is overridden
    /// by each entry of `thresholds`.
    pub metric: MetricConfig,
    /// Visit thresholds to sweep (the expensive state tables are shared
    /// across the sweep).
    pub thresholds: Vec<usize>,
    /// Trials per candidate style.
    pub trials: usize,
    /// Target dataset size per trial.
    pub samples: usize,
    pub seed: u64,
    pub targets: TargetSource,
}

/// Accuracy of one style at one threshold.
#[derive(Clone, Debug)]
pub struct StyleOutcome {
    pub id: String,
    /// Percent of this style's trials predicted correctly.
    pub accuracy: f64,
}

/// Aggregated results at one visit threshold.
#[derive(Clone, Debug)]
pub struct ThresholdReport {
    pub threshold: usize,
    /// Percent correct over all styles and trials.
    pub overall: f64,
    pub per_style: Vec<StyleOutcome>,
    /// Mean size of the state intersection between the target and its
    /// true candidate.
    pub mean_intersection: f64,
    /// Fraction of trials where no candidate had a defined distance
    /// (those count as incorrect).
    pub undefined_rate: f64,
}

/// Per-trial outcome across the threshold sweep.
struct TrialOutcome {
    style_idx: usize,
    /// One `(correct, undefined, intersection_with_truth)` per threshold.
    per_threshold: Vec<(bool, bool, usize)>,
}

impl AccuracyProtocol<'_> {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.candidates.is_empty() {
            return Err(ExperimentError::Protocol("no candidate styles".into()));
        }
        if self.thresholds.is_empty() {
            return Err(ExperimentError::Protocol("no visit thresholds".into()));
        }
        if self.trials == 0 {
            return Err(ExperimentError::Protocol("zero trials".into()));
        }
        if self.samples == 0 {
            return Err(ExperimentError::Protocol("zero target samples".into()));
        }
        if let TargetSource::Resample { pools } = &self.targets {
            if pools.len() != self.candidates.len() {
                return Err(ExperimentError::Protocol(format!(
                    "{} pools for {} candidates",
                    pools.len(),
                    self.candidates.len()
                )));
            }
        }
        Ok(())
    }
}

/// Runs the accuracy protocol and reports one aggregate per threshold.
/// Deterministic for a given seed; trials run in parallel.
pub fn run_accuracy(protocol: &AccuracyProtocol<'_>) -> Result<Vec<ThresholdReport>, ExperimentError> {
    protocol.validate()?;
    let cands = protocol.candidates;

    // Candidate tables are shared by every trial; build them in parallel.
    let candidate_tables: Vec<(String, StateTable)> = cands
        .par_iter()
        .map(|e| Ok((e.id.clone(), build_state_table(&protocol.mapper, &e.dataset)?)))
        .collect::<Result<_, ExperimentError>>()?;

    let jobs: Vec<(usize, usize)> = (0..cands.len())
        .flat_map(|s| (0..protocol.trials).map(move |t| (s, t)))
        .collect();

    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(style_idx, trial)| {
            run_trial(protocol, &candidate_tables, style_idx, trial)
        })
        .collect::<Result<_, ExperimentError>>()?;

    let total = outcomes.len() as f64;
    let mut reports = Vec::with_capacity(protocol.thresholds.len());
    for (ti, &threshold) in protocol.thresholds.iter().enumerate() {
        let mut correct_total = 0usize;
        let mut undefined = 0usize;
        let mut intersection_sum = 0usize;
        let mut per_style_correct = vec![0usize; cands.len()];
        for o in &outcomes {
            let (ok, none, inter) = o.per_threshold[ti];
            if ok {
                correct_total += 1;
                per_style_correct[o.style_idx] += 1;
            }
            if none {
                undefined += 1;
            }
            intersection_sum += inter;
        }
        reports.push(ThresholdReport {
            threshold,
            overall: 100.0 * correct_total as f64 / total,
            per_style: cands
                .iter()
                .zip(&per_style_correct)
                .map(|(e, &c)| StyleOutcome {
                    id: e.id.clone(),
                    accuracy: 100.0 * c as f64 / protocol.trials as f64,
                })
                .collect(),
            mean_intersection: intersection_sum as f64 / total,
            undefined_rate: undefined as f64 / total,
        });
    }
    Ok(reports)
}

fn run_trial(
    protocol: &AccuracyProtocol<'_>,
    candidate_tables: &[(String, StateTable)],
    style_idx: usize,
    trial: usize,
) -> Result<TrialOutcome, ExperimentError> {
    let entry = &protocol.candidates[style_idx];
    let trial_seed = mix_seed(protocol.seed, style_idx as u64, trial as u64);
    let target = match &protocol.targets {
        TargetSource::Fresh { sim } => generate_style_dataset(
            sim,
            &format!("{}-trial{trial}", entry.id),
            &entry.style,
            protocol.samples,
            trial_seed,
        )?,
        TargetSource::Resample { pools } => {
            pools[style_idx].sample_subset(protocol.samples, trial_seed)?
        }
    };
    let target_table = build_state_table(&protocol.mapper, &target)?;

    let mut per_threshold = Vec::with_capacity(protocol.thresholds.len());
    for &threshold in &protocol.thresholds {
        let cfg = MetricConfig { visit_threshold: threshold, ..protocol.metric };
        let ranked = rank_candidates(&target_table, candidate_tables, &cfg)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, result)) in ranked.iter().enumerate() {
            if let Some(d) = result.value {
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((i, d));
                }
            }
        }
        let correct = best.is_some_and(|(i, _)| i == style_idx);
        let undefined = best.is_none();
        let intersection = ranked[style_idx].1.intersection_size;
        per_threshold.push((correct, undefined, intersection));
    }
    Ok(TrialOutcome { style_idx, per_threshold })
}

/// Counts, over `reps` repetitions with fresh seeded datasets, how often
/// the distance ranks `near` closer to `base` than `far`.  Undefined
/// distances rank as infinitely far.
#[allow(clippy::too_many_arguments)]
pub fn ordering_consistency(
    sim: &SimConfig,
    mapper: &StateMapper,
    metric: &MetricConfig,
    base: &StyleSpec,
    near: &StyleSpec,
    far: &StyleSpec,
    samples: usize,
    reps: usize,
    seed: u64,
) -> Result<usize, ExperimentError> {
    if reps == 0 {
        return Err(ExperimentError::Protocol("zero repetitions".into()));
    }
    let hits: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<bool, ExperimentError> {
            let mk = |tag: u64, style: &StyleSpec| -> Result<StateTable, ExperimentError> {
                let ds = generate_style_dataset(
                    sim,
                    &format!("ord-{rep}-{tag}"),
                    style,
                    samples,
                    mix_seed(seed, rep as u64, tag),
                )?;
                Ok(build_state_table(mapper, &ds)?)
            };
            let base_t = mk(0, base)?;
            let near_t = mk(1, near)?;
            let far_t = mk(2, far)?;
            let d_near = crate::metric::playstyle_distance(&base_t, &near_t, metric)?;
            let d_far = crate::metric::playstyle_distance(&base_t, &far_t, metric)?;
            Ok(d_near.value_or_infinite() < d_far.value_or_infinite())
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(hits.iter().filter(|h| **h).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretizer::StateMapper;
    use crate::metric::{Aggregation, DistanceKind};
    use crate::sim::{generate_style_grid, noise_level_stds};

    fn tiny_sim() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.height = 24;
        cfg.width = 16;
        cfg.frames = 2;
        cfg.episode_len = 32;
        cfg
    }

    fn tiny_metric() -> MetricConfig {
        MetricConfig {
            distance: DistanceKind::W2,
            aggregation: Aggregation::Expected,
            visit_threshold: 2,
            squared_mean_term: false,
        }
    }

    fn tiny_mapper() -> StateMapper {
        StateMapper::Lrd { out_h: 6, out_w: 4, intensity_div: 64 }
    }

    #[test]
    fn accuracy_protocol_is_deterministic_and_well_formed() {
        let sim = tiny_sim();
        let grid = generate_style_grid(&sim, &[40.0, 70.0], &[0], 96, 5).unwrap();
        let protocol = AccuracyProtocol {
            candidates: &grid,
            mapper: tiny_mapper(),
            metric: tiny_metric(),
            thresholds: vec![1, 2],
            trials: 3,
            samples: 64,
            seed: 11,
            targets: TargetSource::Fresh { sim: sim.clone() },
        };
        let a = run_accuracy(&protocol).unwrap();
        let b = run_accuracy(&protocol).unwrap();
        assert_eq!(a.len(), 2);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.overall, rb.overall, "parallel runs must agree");
            assert!((0.0..=100.0).contains(&ra.overall));
            assert_eq!(ra.per_style.len(), 2);
            assert_eq!(ra.per_style[0].id, "s40_n0");
            assert!(ra.undefined_rate >= 0.0 && ra.undefined_rate <= 1.0);
            // Overall is the mean of per-style accuracies (equal trials).
            let mean: f64 =
                ra.per_style.iter().map(|s| s.accuracy).sum::<f64>() / ra.per_style.len() as f64;
            assert!((ra.overall - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_targets_draw_from_the_pools() {
        let sim = tiny_sim();
        let grid = generate_style_grid(&sim, &[40.0, 70.0], &[0], 96, 7).unwrap();
        let pools: Vec<PlayDataset> = grid.iter().map(|e| e.dataset.clone()).collect();
        let protocol = AccuracyProtocol {
            candidates: &grid,
            mapper: tiny_mapper(),
            metric: tiny_metric(),
            thresholds: vec![1],
            trials: 2,
            samples: 48,
            seed: 13,
            targets: TargetSource::Resample { pools },
        };
        let reports = run_accuracy(&protocol).unwrap();
        // Targets resampled from the candidates themselves share almost
        // all their states, so distances must be defined.
        assert_eq!(reports[0].undefined_rate, 0.0);
        assert!(reports[0].mean_intersection >= 1.0);
    }

    #[test]
    fn protocol_validation_rejects_misconfiguration() {
        let sim = tiny_sim();
        let grid = generate_style_grid(&sim, &[40.0], &[0], 64, 3).unwrap();
        let ok = AccuracyProtocol {
            candidates: &grid,
            mapper: tiny_mapper(),
            metric: tiny_metric(),
            thresholds: vec![1],
            trials: 1,
            samples: 32,
            seed: 1,
            targets: TargetSource::Fresh { sim: sim.clone() },
        };

        let mut bad = ok.clone();
        bad.thresholds = vec![];
        assert!(matches!(run_accuracy(&bad), Err(ExperimentError::Protocol(_))));

        let mut bad = ok.clone();
        bad.trials = 0;
        assert!(matches!(run_accuracy(&bad), Err(ExperimentError::Protocol(_))));

        let mut bad = ok.clone();
        bad.targets = TargetSource::Resample { pools: vec![] };
        assert!(matches!(run_accuracy(&bad), Err(ExperimentError::Protocol(_))));

        let empty: &[GridEntry] = &[];
        let mut bad = ok;
        bad.candidates = empty;
        assert!(matches!(run_accuracy(&bad), Err(ExperimentError::Protocol(_))));
    }

    #[test]
    fn ordering_runs_are_seeded_and_bounded() {
        let sim = tiny_sim();
        let (ss, sa) = noise_level_stds(0);
        let mk = |speed: f64| StyleSpec { target_speed: speed, sigma_steer: ss, sigma_accel: sa };
        let count = ordering_consistency(
            &sim,
            &tiny_mapper(),
            &tiny_metric(),
            &mk(40.0),
            &mk(45.0),
            &mk(80.0),
            64,
            4,
            17,
        )
        .unwrap();
        let again = ordering_consistency(
            &sim,
            &tiny_mapper(),
            &tiny_metric(),
            &mk(40.0),
            &mk(45.0),
            &mk(80.0),
            64,
            4,
            17,
        )
        .unwrap();
        assert_eq!(count, again);
        assert!(count <= 4);
        assert!(matches!(
            ordering_consistency(
                &sim,
                &tiny_mapper(),
                &tiny_metric(),
                &mk(40.0),
                &mk(45.0),
                &mk(80.0),
                64,
                0,
                17,
            ),
            Err(ExperimentError::Protocol(_))
        ));
    }
}
