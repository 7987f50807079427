//! Transfer metrics over target-task learning curves.
//!
//! A curve's x-axis is cumulative timesteps. A curriculum run's curve starts
//! at its sunk cost, so every comparison charges the steps spent finding and
//! following the curriculum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("insufficient episodes: need {needed}, have {got}")]
    InsufficientEpisodes { needed: usize, got: usize },
    #[error("need at least {needed} curves, have {got}")]
    TooFewCurves { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Timesteps through the end of this episode, sunk cost included.
    pub cumulative_timesteps: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub success: bool,
}

/// Per-episode target-task results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
    pub sunk_cost_timesteps: usize,
}

impl LearningCurve {
    /// Builds a curve from per-episode lengths, returns and outcomes.
    pub fn from_episodes(
        sunk_cost: usize,
        lengths: &[usize],
        returns: &[f64],
        successes: &[bool],
    ) -> LearningCurve {
        let mut t = sunk_cost;
        let points = lengths
            .iter()
            .zip(returns)
            .zip(successes)
            .map(|((&len, &ret), &success)| {
                t += len;
                CurvePoint {
                    cumulative_timesteps: t,
                    ret,
                    success,
                }
            })
            .collect();
        LearningCurve {
            points,
            sunk_cost_timesteps: sunk_cost,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn returns(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.ret)
    }

    /// Lowest return on the curve, or 0 for an empty curve.
    pub fn worst_return(&self) -> f64 {
        self.returns().reduce(f64::min).unwrap_or(0.0)
    }

    /// Return in effect at timestep `t`: the latest episode finished by `t`,
    /// or [`worst_return`](Self::worst_return) before the first one.
    pub fn value_at(&self, t: usize) -> f64 {
        let k = self.points.partition_point(|p| p.cumulative_timesteps <= t);
        if k == 0 {
            self.worst_return()
        } else {
            self.points[k - 1].ret
        }
    }
}

/// Mean return advantage of `c` over `b` across the first `d` episodes.
pub fn jumpstart(c: &LearningCurve, b: &LearningCurve, d: usize) -> Result<f64, MetricsError> {
    let have = c.len().min(b.len());
    if d == 0 || have < d {
        return Err(MetricsError::InsufficientEpisodes {
            needed: d.max(1),
            got: have,
        });
    }
    let sum: f64 = c
        .returns()
        .zip(b.returns())
        .take(d)
        .map(|(x, y)| x - y)
        .sum();
    Ok(sum / d as f64)
}

/// Trailing-window performance bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Threshold {
    /// Success rate over the last `window` episodes at least `delta`.
    SuccessRate { delta: f64, window: usize },
    /// Mean return over the last `window` episodes at least `delta`.
    MeanReturn { delta: f64, window: usize },
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::SuccessRate {
            delta: 0.85,
            window: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeToThreshold {
    Reached(usize),
    NotReached,
}

impl TimeToThreshold {
    pub fn timesteps(self) -> Option<usize> {
        match self {
            TimeToThreshold::Reached(t) => Some(t),
            TimeToThreshold::NotReached => None,
        }
    }
}

/// First cumulative timestep, sunk cost included, at which the trailing
/// window meets `threshold`.
pub fn time_to_threshold(curve: &LearningCurve, threshold: &Threshold) -> TimeToThreshold {
    let (delta, window) = match *threshold {
        Threshold::SuccessRate { delta, window } | Threshold::MeanReturn { delta, window } => {
            (delta, window)
        }
    };
    if window == 0 || curve.len() < window {
        return TimeToThreshold::NotReached;
    }
    let value = |p: &CurvePoint| match threshold {
        Threshold::SuccessRate { .. } => f64::from(u8::from(p.success)),
        Threshold::MeanReturn { .. } => p.ret,
    };
    // sums are recomputed per window so long curves do not accumulate drift
    for end in window..=curve.len() {
        let w = &curve.points[end - window..end];
        let mean = w.iter().map(value).sum::<f64>() / window as f64;
        if mean >= delta - 1e-9 {
            return TimeToThreshold::Reached(w[window - 1].cumulative_timesteps);
        }
    }
    TimeToThreshold::NotReached
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub timesteps: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub sd: f64,
}

/// Mean and sample SD of the curves' [`LearningCurve::value_at`] on each
/// grid checkpoint.
pub fn aggregate_trials(
    curves: &[LearningCurve],
    grid: &[usize],
) -> Result<Vec<AggregatePoint>, MetricsError> {
    if curves.len() < 2 {
        return Err(MetricsError::TooFewCurves {
            needed: 2,
            got: curves.len(),
        });
    }
    let n = curves.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let vals: Vec<f64> = curves.iter().map(|c| c.value_at(t)).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            AggregatePoint {
                timesteps: t,
                mean,
                sd: var.sqrt(),
            }
        })
        .collect())
}

/// `count` evenly spaced checkpoints from 0 through the furthest curve end.
pub fn uniform_grid(curves: &[LearningCurve], count: usize) -> Vec<usize> {
    let end = curves
        .iter()
        .filter_map(|c| c.points.last())
        .map(|p| p.cumulative_timesteps)
        .max()
        .unwrap_or(0);
    if count < 2 {
        return vec![end];
    }
    (0..count)
        .map(|i| ((end as u128 * i as u128) / (count as u128 - 1)) as usize)
        .collect()
}

/// One method's metrics for one trial against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub method: String,
    pub trial: usize,
    pub jumpstart: Option<f64>,
    pub time_to_threshold: TimeToThreshold,
    pub sunk_cost: usize,
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(sunk: usize, returns: &[f64]) -> LearningCurve {
        let n = returns.len();
        LearningCurve::from_episodes(sunk, &vec![10; n], returns, &vec![false; n])
    }

    #[test]
    fn jumpstart_by_hand() {
        let c = curve(0, &[10.0, 20.0]);
        let b = curve(0, &[5.0, 5.0]);
        assert_eq!(jumpstart(&c, &b, 2).unwrap(), 10.0);
        assert_eq!(jumpstart(&c, &c, 2).unwrap(), 0.0);
        assert_eq!(
            jumpstart(&c, &b, 3),
            Err(MetricsError::InsufficientEpisodes { needed: 3, got: 2 })
        );
    }

    #[test]
    fn threshold_counts_sunk_cost() {
        let sunk = 1000;
        let successes = [false, true, true, true, false];
        let c = LearningCurve::from_episodes(sunk, &[5, 6, 7, 8, 9], &[0.0; 5], &successes);
        let th = Threshold::SuccessRate {
            delta: 1.0,
            window: 3,
        };
        assert_eq!(
            time_to_threshold(&c, &th),
            TimeToThreshold::Reached(sunk + 5 + 6 + 7 + 8)
        );
        let never = Threshold::SuccessRate {
            delta: 1.0,
            window: 4,
        };
        assert_eq!(time_to_threshold(&c, &never), TimeToThreshold::NotReached);
        let ret = Threshold::MeanReturn {
            delta: 0.0,
            window: 5,
        };
        assert_eq!(
            time_to_threshold(&c, &ret),
            TimeToThreshold::Reached(sunk + 35)
        );
    }

    #[test]
    fn aggregate_by_hand() {
        let a = curve(0, &[0.0, 0.0]);
        let b = curve(0, &[10.0, 10.0]);
        let agg = aggregate_trials(&[a.clone(), b], &[10, 20]).unwrap();
        for p in &agg {
            assert_eq!(p.mean, 5.0);
            assert!((p.sd - 50f64.sqrt()).abs() < 1e-12);
        }
        assert!(aggregate_trials(&[a], &[0]).is_err());
    }

    #[test]
    fn before_the_offset_the_worst_return_fills_in() {
        let c = curve(100, &[-50.0, -80.0, 30.0]);
        assert_eq!(c.value_at(0), -80.0);
        assert_eq!(c.value_at(109), -80.0);
        assert_eq!(c.value_at(110), -50.0);
        assert_eq!(c.value_at(125), -80.0);
        assert_eq!(c.value_at(10_000), 30.0);
    }

    #[test]
    fn grid_spans_zero_to_end() {
        let g = uniform_grid(&[curve(0, &[1.0; 3]), curve(5, &[1.0])], 4);
        assert_eq!(g, vec![0, 10, 20, 30]);
    }

    fn returns() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1000.0..1000.0f64, 1..40)
    }

    proptest! {
        #[test]
        fn jumpstart_is_antisymmetric(a in returns(), b in returns()) {
            let d = a.len().min(b.len());
            let (ca, cb) = (curve(0, &a), curve(0, &b));
            let x = jumpstart(&ca, &cb, d).unwrap();
            let y = jumpstart(&cb, &ca, d).unwrap();
            prop_assert!((x + y).abs() <= 1e-9 * (1.0 + x.abs()));
        }

        #[test]
        fn jumpstart_is_linear_in_c(a in returns(), k in -5.0..5.0f64, s in -100.0..100.0f64) {
            let d = a.len();
            let zero = curve(0, &vec![0.0; d]);
            let scaled: Vec<f64> = a.iter().map(|x| k * x + s).collect();
            let lhs = jumpstart(&curve(0, &scaled), &zero, d).unwrap();
            let rhs = k * jumpstart(&curve(0, &a), &zero, d).unwrap() + s;
            prop_assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()));
        }

        #[test]
        fn appending_never_delays_a_found_threshold(
            succ in prop::collection::vec(any::<bool>(), 1..60),
            more in prop::collection::vec(any::<bool>(), 0..30),
            window in 1usize..10,
        ) {
            let th = Threshold::SuccessRate { delta: 0.6, window };
            let mk = |s: &[bool]| LearningCurve::from_episodes(7, &vec![3; s.len()], &vec![0.0; s.len()], s);
            let before = time_to_threshold(&mk(&succ), &th);
            let all: Vec<bool> = succ.iter().chain(&more).copied().collect();
            let after = time_to_threshold(&mk(&all), &th);
            if let TimeToThreshold::Reached(t) = before {
                prop_assert_eq!(after, TimeToThreshold::Reached(t));
            }
        }

        #[test]
        fn mean_of_copies_is_the_curve(a in returns(), copies in 2usize..5, sunk in 0usize..50) {
            let c = curve(sunk, &a);
            let curves = vec![c.clone(); copies];
            let grid = uniform_grid(&curves, 17);
            for p in aggregate_trials(&curves, &grid).unwrap() {
                let v = c.value_at(p.timesteps);
                prop_assert!((p.mean - v).abs() <= 1e-12 * (1.0 + v.abs()));
                prop_assert!(p.sd <= 1e-9 * (1.0 + v.abs()));
            }
        }
    }
}
