//! Affine parameter mapping between the grid world and the continuous world.
//!
//! Each numeric parameter maps independently, `hf_i = a_i * lf_i + b_i`. The
//! goal passes through untouched in every direction. The noisy variant adds
//! independent Gaussian noise in continuous-world parameter space with
//! `sigma_i = (max_i - min_i) / 6` over the continuous-world range, so the
//! range spans six standard deviations, and redraws until the task is
//! feasible.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{
    feasible, Bounds, Fidelity, ParamRanges, TaskParams, FIRST_COUNT, NUM_PARAMS, PARAM_NAMES,
};

/// Continuous-world lengths are quantized to this step (meters) so that
/// `forward(inverse(p)) == p` holds bit-exactly for decimal arena sizes.
pub const LENGTH_QUANTUM: f64 = 1e-6;

/// Rejections allowed in [`AffineMap::forward_noisy`] by default.
pub const DEFAULT_MAX_REJECTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("non-invertible map: scale for {name} is zero")]
    NonInvertible { name: &'static str },
    #[error("rejection budget exhausted: no feasible noisy task after {rejects} draws")]
    RejectionBudgetExhausted { rejects: usize },
    #[error("mapping does not anchor the target: {name} maps to {mapped}, expected {expected}")]
    TargetNotAnchored {
        name: &'static str,
        mapped: f64,
        expected: f64,
    },
    #[error("invalid mapping: {0}")]
    Invalid(String),
}

/// Quanta per unit length, exact in binary so that dividing by it lands on
/// the nearest double to a decimal value.
const LENGTH_STEPS: f64 = 1e6;

fn quantize_length(v: f64) -> f64 {
    (v * LENGTH_STEPS).round_ties_even() / LENGTH_STEPS
}

/// Per-parameter scale/offset pairs plus the ranges on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: [f64; NUM_PARAMS],
    pub offset: [f64; NUM_PARAMS],
    pub lf_ranges: ParamRanges,
    pub hf_ranges: ParamRanges,
}

impl AffineMap {
    /// Builds a map and derives the continuous-world ranges as the image of
    /// the grid-world ranges.
    pub fn new(
        scale: [f64; NUM_PARAMS],
        offset: [f64; NUM_PARAMS],
        lf_ranges: ParamRanges,
    ) -> Result<AffineMap, MappingError> {
        if scale.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(MappingError::Invalid("coefficients must be finite".into()));
        }
        lf_ranges
            .validate()
            .map_err(|e| MappingError::Invalid(e.to_string()))?;
        let lf = lf_ranges.as_array();
        let mut hf = lf;
        for i in 0..NUM_PARAMS {
            let lo = scale[i] * lf[i].min + offset[i];
            let hi = scale[i] * lf[i].max + offset[i];
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            hf[i] = if i < FIRST_COUNT {
                Bounds::new(quantize_length(lo), quantize_length(hi))
            } else {
                Bounds::new(lo, hi)
            };
        }
        Ok(AffineMap {
            scale,
            offset,
            lf_ranges,
            hf_ranges: ParamRanges::from_array(hf),
        })
    }

    /// Arena lengths scale by `length_scale` (cells to meters); every count
    /// maps one-to-one.
    pub fn with_length_scale(
        length_scale: f64,
        lf_ranges: ParamRanges,
    ) -> Result<AffineMap, MappingError> {
        let mut scale = [1.0; NUM_PARAMS];
        scale[0] = length_scale;
        scale[1] = length_scale;
        AffineMap::new(scale, [0.0; NUM_PARAMS], lf_ranges)
    }

    /// Grid cells to meters at 0.4 m per cell (10 cells become 4 m).
    pub fn default_for(lf_ranges: ParamRanges) -> AffineMap {
        AffineMap::with_length_scale(0.4, lf_ranges).expect("default coefficients are valid")
    }

    pub fn check_invertible(&self) -> Result<(), MappingError> {
        match self.scale.iter().position(|a| *a == 0.0) {
            Some(i) => Err(MappingError::NonInvertible {
                name: PARAM_NAMES[i],
            }),
            None => Ok(()),
        }
    }

    fn forward_raw(&self, p: &TaskParams) -> [f64; NUM_PARAMS] {
        let mut v = p.to_numeric();
        for i in 0..NUM_PARAMS {
            v[i] = self.scale[i] * v[i] + self.offset[i];
        }
        v
    }

    fn finish_hf(values: &mut [f64; NUM_PARAMS]) {
        for v in values.iter_mut().take(FIRST_COUNT) {
            *v = quantize_length(*v);
        }
    }

    /// Maps a grid-world task to the continuous world. Counts are rounded
    /// half-to-even and saturate at zero; lengths are quantized to
    /// [`LENGTH_QUANTUM`].
    pub fn forward(&self, p_lf: &TaskParams) -> TaskParams {
        let mut v = self.forward_raw(p_lf);
        Self::finish_hf(&mut v);
        for c in v.iter_mut().skip(FIRST_COUNT) {
            *c = c.max(0.0);
        }
        TaskParams::from_numeric(&v, p_lf.goal).expect("saturated values are representable")
    }

    /// Maps a continuous-world task back onto the grid; lengths round to whole
    /// cells and counts to integers.
    pub fn inverse(&self, p_hf: &TaskParams) -> Result<TaskParams, MappingError> {
        self.check_invertible()?;
        let mut v = p_hf.to_numeric();
        for i in 0..NUM_PARAMS {
            v[i] = ((v[i] - self.offset[i]) / self.scale[i])
                .round_ties_even()
                .max(0.0);
        }
        Ok(TaskParams::from_numeric(&v, p_hf.goal).expect("rounded values are representable"))
    }

    /// Exact-map target check: the grid-world target must land exactly on the
    /// continuous-world target.
    pub fn check_anchoring(
        &self,
        lf_target: &TaskParams,
        hf_target: &TaskParams,
    ) -> Result<(), MappingError> {
        let mapped = self.forward(lf_target).to_numeric();
        let expected = hf_target.to_numeric();
        for i in 0..NUM_PARAMS {
            if mapped[i] != expected[i] {
                return Err(MappingError::TargetNotAnchored {
                    name: PARAM_NAMES[i],
                    mapped: mapped[i],
                    expected: expected[i],
                });
            }
        }
        if lf_target.goal != hf_target.goal {
            return Err(MappingError::Invalid("target goals differ".into()));
        }
        Ok(())
    }

    /// Forward map plus Gaussian noise; infeasible draws are rejected and
    /// redrawn. The goal is never perturbed.
    pub fn forward_noisy<R: Rng + ?Sized>(
        &self,
        noise: &NoiseModel,
        p_lf: &TaskParams,
        rng: &mut R,
    ) -> Result<TaskParams, MappingError> {
        let exact = self.forward(p_lf).to_numeric();
        for _ in 0..noise.max_rejects {
            let eps = noise.draw(rng);
            let mut v = exact;
            for i in 0..NUM_PARAMS {
                v[i] += eps[i];
            }
            Self::finish_hf(&mut v);
            if let Some(p) = TaskParams::from_numeric(&v, p_lf.goal) {
                if feasible(&p, Fidelity::High) {
                    return Ok(p);
                }
            }
        }
        Err(MappingError::RejectionBudgetExhausted {
            rejects: noise.max_rejects,
        })
    }
}

/// Diagonal Gaussian noise over the numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: [f64; NUM_PARAMS],
    pub max_rejects: usize,
}

impl NoiseModel {
    /// `sigma_i = (max_i - min_i) / 6` over the given (continuous-world) ranges.
    pub fn from_ranges(ranges: &ParamRanges) -> NoiseModel {
        let mut sigma = [0.0; NUM_PARAMS];
        for (s, b) in sigma.iter_mut().zip(ranges.as_array()) {
            *s = b.span() / 6.0;
        }
        NoiseModel {
            sigma,
            max_rejects: DEFAULT_MAX_REJECTS,
        }
    }

    pub fn zero() -> NoiseModel {
        NoiseModel {
            sigma: [0.0; NUM_PARAMS],
            max_rejects: DEFAULT_MAX_REJECTS,
        }
    }

    /// Diagonal of the covariance matrix (`sigma_i^2`).
    pub fn variances(&self) -> [f64; NUM_PARAMS] {
        self.sigma.map(|s| s * s)
    }

    /// One raw (pre-rejection) noise vector.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; NUM_PARAMS] {
        let mut out = [0.0; NUM_PARAMS];
        for (o, &s) in out.iter_mut().zip(&self.sigma) {
            if s > 0.0 {
                *o = Normal::new(0.0, s).expect("positive sigma").sample(rng);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{goal_categories, random_task, target_task_params, GoalSpec, Variant};
    use crate::seed::stream;

    fn default_map() -> AffineMap {
        AffineMap::default_for(ParamRanges::lf_default(Variant::Plain))
    }

    #[test]
    fn mapped_lengths_equal_their_decimal_literals() {
        let map = default_map();
        for cells in 4..=30u32 {
            let p = target_task_params(Variant::Plain);
            let p = TaskParams {
                width: cells as f64,
                height: cells as f64,
                ..p
            };
            let hf = map.forward(&p);
            let literal: f64 = format!("{}.{}", cells * 4 / 10, cells * 4 % 10)
                .parse()
                .unwrap();
            assert_eq!(hf.width, literal, "{cells} cells");
            assert_eq!(map.inverse(&hf).unwrap().width, cells as f64);
        }
    }

    #[test]
    fn identity_map_is_identity() {
        let ranges = ParamRanges::lf_default(Variant::Fire);
        let id = AffineMap::new([1.0; NUM_PARAMS], [0.0; NUM_PARAMS], ranges).unwrap();
        let p = target_task_params(Variant::Fire);
        assert_eq!(id.forward(&p), p);
        assert_eq!(id.inverse(&p).unwrap(), p);
    }

    #[test]
    fn width_scale_maps_ten_cells_to_four_meters() {
        let m = default_map();
        let hf = m.forward(&target_task_params(Variant::Plain));
        assert_eq!(hf.width, 4.0);
        assert_eq!(hf.height, 4.0);
        assert_eq!(hf.trees_env, 4);
        assert_eq!(hf.rocks_env, 2);
        assert_eq!(hf.goal, GoalSpec::Craft);
        assert_eq!(m.inverse(&hf).unwrap().width, 10.0);
    }

    #[test]
    fn desk_scale_target_round_trips_exactly() {
        let lf = TaskParams {
            width: 6.0,
            height: 6.0,
            trees_env: 3,
            rocks_env: 1,
            ..target_task_params(Variant::Plain)
        };
        let m = default_map();
        let hf = m.forward(&lf);
        assert_eq!(hf.width, 2.4);
        assert_eq!(m.inverse(&hf).unwrap(), lf);
        m.check_anchoring(
            &lf,
            &TaskParams {
                width: 2.4,
                height: 2.4,
                ..lf
            },
        )
        .unwrap();
    }

    #[test]
    fn zero_scale_is_non_invertible() {
        let mut scale = [1.0; NUM_PARAMS];
        scale[3] = 0.0;
        let m = AffineMap::new(
            scale,
            [0.0; NUM_PARAMS],
            ParamRanges::lf_default(Variant::Plain),
        )
        .unwrap();
        assert_eq!(
            m.inverse(&target_task_params(Variant::Plain)),
            Err(MappingError::NonInvertible { name: "rocks_env" })
        );
    }

    #[test]
    fn anchoring_detects_mismatch() {
        let m = default_map();
        let lf = target_task_params(Variant::Plain);
        let wrong = TaskParams {
            width: 5.0,
            ..m.forward(&lf)
        };
        assert!(matches!(
            m.check_anchoring(&lf, &wrong),
            Err(MappingError::TargetNotAnchored { name: "width", .. })
        ));
    }

    #[test]
    fn sigma_is_a_sixth_of_the_range() {
        let m = default_map();
        let noise = NoiseModel::from_ranges(&m.hf_ranges);
        assert!((noise.sigma[2] - 4.0 / 6.0).abs() < 1e-12);
        // widths span [1.6, 4.0] m
        assert!((noise.sigma[0] - 2.4 / 6.0).abs() < 1e-9);
        assert!(noise.variances().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn zero_noise_equals_exact_forward() {
        let m = default_map();
        let p = target_task_params(Variant::Plain);
        let out = m
            .forward_noisy(&NoiseModel::zero(), &p, &mut stream(0, &[]))
            .unwrap();
        assert_eq!(out, m.forward(&p));
    }

    #[test]
    fn noisy_outputs_are_feasible_and_keep_goal() {
        let m = default_map();
        let noise = NoiseModel::from_ranges(&m.hf_ranges);
        let mut rng = stream(5, &[]);
        for i in 0..300 {
            let p = random_task(&mut rng, &m.lf_ranges, goal_categories()[i % 3]).unwrap();
            let q = m.forward_noisy(&noise, &p, &mut rng).unwrap();
            assert!(feasible(&q, Fidelity::High));
            assert_eq!(q.goal, p.goal);
        }
    }

    #[test]
    fn exhausted_rejection_budget() {
        let m = default_map();
        let mut noise = NoiseModel::zero();
        noise.max_rejects = 5;
        // craft with no table can never become feasible without table noise
        let p = TaskParams {
            crafting_tables: 0,
            ..target_task_params(Variant::Plain)
        };
        assert_eq!(
            m.forward_noisy(&noise, &p, &mut stream(0, &[])),
            Err(MappingError::RejectionBudgetExhausted { rejects: 5 })
        );
    }

    proptest::proptest! {
        #[test]
        fn round_trip_on_grid_tasks(seed in 0u64..10_000, cat in 0usize..3) {
            let m = AffineMap::default_for(ParamRanges::lf_default(Variant::Fire));
            let p = random_task(&mut stream(seed, &[]), &m.lf_ranges, goal_categories()[cat]).unwrap();
            let hf = m.forward(&p);
            proptest::prop_assert_eq!(hf.goal, p.goal);
            proptest::prop_assert_eq!(m.inverse(&hf).unwrap(), p);
        }
    }
}
