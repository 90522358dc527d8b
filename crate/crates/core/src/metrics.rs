//! Evaluation quantities: optimization rates, RMSE curves, occupancy.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::partition::{balanced_cardinality, PartitionResult};
use crate::scalar::Real;
use crate::selection::{objective, optimal_set, ErrorMatrix, ObjectiveKind};
use crate::SensorId;

/// Time-averaged ratio `f(selected)/f(optimal)` with exclusion accounting.
#[derive(Debug, Clone, Copy)]
pub struct RateOutcome<T: Real> {
    pub rate: T,
    /// Step (or step-subset) terms that entered the average.
    pub included: usize,
    /// Terms dropped because the denominator was zero.
    pub excluded: usize,
    /// True when every denominator came from exhaustive search; greedy
    /// surrogate denominators can push single ratios above one.
    pub exact_denominator: bool,
    /// Any ratio above one (only possible with surrogate denominators).
    pub any_above_one: bool,
}

/// Per-subset rates plus the subset-average of the same run.
#[derive(Debug, Clone)]
pub struct SubsetRates<T: Real> {
    pub per_subset: Vec<RateOutcome<T>>,
    pub subset_average: RateOutcome<T>,
}

/// Labeled optimization-rate report for one experiment cell.
#[derive(Debug, Clone)]
pub struct OptRateReport<T: Real> {
    pub algorithm: String,
    pub stage1: String,
    pub family: String,
    pub per_subset: Vec<RateOutcome<T>>,
    pub subset_average: Option<RateOutcome<T>>,
    pub total: Option<RateOutcome<T>>,
}

struct RateAccumulator<T: Real> {
    sum: T,
    included: usize,
    excluded: usize,
    exact: bool,
    above_one: bool,
}

impl<T: Real> RateAccumulator<T> {
    fn new() -> Self {
        Self {
            sum: T::zero(),
            included: 0,
            excluded: 0,
            exact: true,
            above_one: false,
        }
    }

    fn push(&mut self, numer: T, denom: T, denom_exact: bool) {
        if denom == T::zero() {
            self.excluded += 1;
            return;
        }
        let ratio = numer / denom;
        self.sum += ratio;
        self.included += 1;
        self.exact &= denom_exact;
        if ratio > T::one() {
            self.above_one = true;
        }
    }

    fn finish(self) -> RateOutcome<T> {
        RateOutcome {
            rate: if self.included == 0 {
                T::zero()
            } else {
                self.sum / T::of_usize(self.included)
            },
            included: self.included,
            excluded: self.excluded,
            exact_denominator: self.exact,
            any_above_one: self.above_one,
        }
    }
}

/// Average optimization rate of whole-neighborhood selections:
/// `(1/T) sum_k f_k(A_k) / f_k(A*_k)` with budget `q`, zero-denominator steps
/// excluded and counted.
pub fn optimization_rate_total<T: Real>(
    selected: &[Vec<SensorId>],
    errors: &[ErrorMatrix<T>],
    kind: ObjectiveKind,
    q: usize,
) -> Result<RateOutcome<T>> {
    if selected.len() != errors.len() {
        return Err(Error::MismatchedUniverse {
            context: "optimization_rate_total trace lengths",
        });
    }
    let mut acc = RateAccumulator::new();
    for (sel, errs) in selected.iter().zip(errors) {
        let set = sel.iter().copied().collect();
        let numer = objective(kind, errs, &set)?;
        let best = optimal_set(kind, errs, q)?;
        acc.push(numer, best.value, best.exact);
    }
    Ok(acc.finish())
}

/// Per-subset average optimization rates of partitioned selections. At each
/// step a subset's benchmark is the optimal same-size suspect set drawn from
/// that subset's candidates; the subset average pools every `(step, subset)`
/// term as in the `1/(T m)` double sum.
pub fn optimization_rate_subsets<T: Real>(
    selected_per_subset: &[Vec<Vec<SensorId>>],
    errors: &[ErrorMatrix<T>],
    partition: &PartitionResult,
    kind: ObjectiveKind,
) -> Result<SubsetRates<T>> {
    if selected_per_subset.len() != errors.len() {
        return Err(Error::MismatchedUniverse {
            context: "optimization_rate_subsets trace lengths",
        });
    }
    let m = partition.subset_count();
    let mut per_subset: Vec<RateAccumulator<T>> = (0..m).map(|_| RateAccumulator::new()).collect();
    let mut pooled = RateAccumulator::new();
    for (per_subs, errs) in selected_per_subset.iter().zip(errors) {
        if per_subs.len() != m {
            return Err(Error::MismatchedUniverse {
                context: "optimization_rate_subsets subset count",
            });
        }
        for g in 0..m {
            let chosen = &per_subs[g];
            if chosen.is_empty() {
                // No budget landed here this step; there is no ratio to take.
                per_subset[g].excluded += 1;
                pooled.excluded += 1;
                continue;
            }
            let restricted = errs.restrict(&partition.subsets[g])?;
            let set = chosen.iter().copied().collect();
            let numer = objective(kind, &restricted, &set)?;
            let best = optimal_set(kind, &restricted, chosen.len())?;
            per_subset[g].push(numer, best.value, best.exact);
            pooled.push(numer, best.value, best.exact);
        }
    }
    Ok(SubsetRates {
        per_subset: per_subset.into_iter().map(RateAccumulator::finish).collect(),
        subset_average: pooled.finish(),
    })
}

/// How the per-sensor error norms of one run are aggregated per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorAggregate {
    /// Mean across sensors (the no-attack convention).
    Mean,
    /// Maximum across sensors (the under-attack convention).
    Max,
}

/// Per-step estimation RMSE: each sensor contributes `||x^ - x|| / sqrt(n)`,
/// aggregated across sensors by `agg`.
pub fn estimation_rmse_per_step<T: Real>(
    truth: &[DVector<T>],
    estimates: &[Vec<DVector<T>>],
    agg: ErrorAggregate,
) -> Result<Vec<T>> {
    if truth.len() != estimates.len() {
        return Err(Error::MismatchedUniverse {
            context: "rmse trace lengths",
        });
    }
    let mut out = Vec::with_capacity(truth.len());
    for (x, per_sensor) in truth.iter().zip(estimates) {
        let dim = T::of_usize(x.len()).sqrt();
        let mut agg_val = T::zero();
        let mut count = 0usize;
        for est in per_sensor {
            let e = (est - x).norm() / dim;
            match agg {
                ErrorAggregate::Mean => agg_val += e,
                ErrorAggregate::Max => {
                    if e > agg_val {
                        agg_val = e;
                    }
                }
            }
            count += 1;
        }
        if agg == ErrorAggregate::Mean && count > 0 {
            agg_val /= T::of_usize(count);
        }
        out.push(agg_val);
    }
    Ok(out)
}

/// The three RMSE curves compared in the secure-estimation experiment.
#[derive(Debug, Clone)]
pub struct RmseCurves<T: Real> {
    pub no_attack: Vec<T>,
    pub dads: Vec<T>,
    pub no_detection: Vec<T>,
}

/// Assemble the comparison curves: the no-attack run uses the per-step mean
/// of the sensors' error norms, the attacked runs use the per-step maximum.
pub fn rmse_curves<T: Real>(
    truth: &[DVector<T>],
    no_attack: &[Vec<DVector<T>>],
    dads: &[Vec<DVector<T>>],
    no_detection: &[Vec<DVector<T>>],
) -> Result<RmseCurves<T>> {
    Ok(RmseCurves {
        no_attack: estimation_rmse_per_step(truth, no_attack, ErrorAggregate::Mean)?,
        dads: estimation_rmse_per_step(truth, dads, ErrorAggregate::Max)?,
        no_detection: estimation_rmse_per_step(truth, no_detection, ErrorAggregate::Max)?,
    })
}

/// Sliding-window RMSE with the window ending at each index (shorter prefix
/// windows at the start).
pub fn windowed_rmse<T: Real>(series: &[T], window: usize) -> Vec<T> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let start = (i + 1).saturating_sub(window);
        let slice = &series[start..=i];
        let mut sum = T::zero();
        for v in slice {
            sum += *v * *v;
        }
        out.push((sum / T::of_usize(slice.len())).sqrt());
    }
    out
}

/// Expected number and fraction of subsets containing at least one attacked
/// sensor.
#[derive(Debug, Clone, Copy)]
pub struct Occupancy<T: Real> {
    pub mean: T,
    pub fraction: T,
}

/// Hypergeometric expectation: `E = sum_g (1 - C(N - s_g, d) / C(N, d))`,
/// with the void probability computed as a stable running product.
pub fn occupancy_analytic<T: Real>(n: usize, m: usize, d: usize) -> Result<Occupancy<T>> {
    if d > n {
        return Err(Error::InfeasiblePartition { count: n, m: d });
    }
    let sizes = balanced_cardinality(n, m)?;
    let mut mean = T::zero();
    for s in sizes {
        let mut void = T::one();
        if d > n - s {
            void = T::zero();
        } else {
            for i in 0..s {
                void *= T::of_usize(n - d - i) / T::of_usize(n - i);
            }
        }
        mean += T::one() - void;
    }
    Ok(Occupancy {
        mean,
        fraction: mean / T::of_usize(m),
    })
}

/// Monte-Carlo estimate of the same quantity from `samples` uniform draws of
/// the attacked set.
pub fn occupancy_montecarlo<T: Real, R: Rng + ?Sized>(
    n: usize,
    m: usize,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Occupancy<T>> {
    if d > n {
        return Err(Error::InfeasiblePartition { count: n, m: d });
    }
    let sizes = balanced_cardinality(n, m)?;
    // Subset index per element position, for contiguous balanced subsets.
    let mut owner = Vec::with_capacity(n);
    for (g, &s) in sizes.iter().enumerate() {
        owner.extend(std::iter::repeat(g).take(s));
    }
    let mut total_hit = 0u64;
    let mut hit = vec![false; m];
    for _ in 0..samples {
        hit.fill(false);
        for idx in rand::seq::index::sample(rng, n, d) {
            hit[owner[idx]] = true;
        }
        total_hit += hit.iter().filter(|&&h| h).count() as u64;
    }
    let mean = T::of_usize(total_hit as usize) / T::of_usize(samples.max(1));
    Ok(Occupancy {
        mean,
        fraction: mean / T::of_usize(m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use std::collections::BTreeSet;

    fn em(cols: &[(SensorId, [f64; 2])]) -> ErrorMatrix<f64> {
        ErrorMatrix::new(
            cols.iter()
                .map(|&(id, c)| {
                    (
                        id,
                        DVector::from_row_slice(&c),
                        vec![true, true],
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rate_is_one_when_selection_is_optimal() {
        let errors = vec![em(&[(1, [3.0, 0.0]), (2, [1.0, 0.0]), (3, [0.5, 0.0]), (4, [0.1, 0.0])]); 5];
        let best = optimal_set(ObjectiveKind::StackedNorm, &errors[0], 2).unwrap();
        let selected = vec![best.ids.clone(); 5];
        let rate =
            optimization_rate_total(&selected, &errors, ObjectiveKind::StackedNorm, 2).unwrap();
        assert_relative_eq!(rate.rate, 1.0);
        assert_eq!(rate.included, 5);
        assert_eq!(rate.excluded, 0);
        assert!(rate.exact_denominator);
        assert!(!rate.any_above_one);
    }

    #[test]
    fn zero_denominator_steps_are_excluded_and_counted() {
        let zero = em(&[(1, [0.0, 0.0]), (2, [0.0, 0.0])]);
        let live = em(&[(1, [2.0, 0.0]), (2, [1.0, 0.0])]);
        let errors = vec![zero, live];
        let selected = vec![vec![1], vec![1]];
        let rate =
            optimization_rate_total(&selected, &errors, ObjectiveKind::StackedNorm, 1).unwrap();
        assert_eq!(rate.excluded, 1);
        assert_eq!(rate.included, 1);
        assert_relative_eq!(rate.rate, 1.0);
    }

    #[test]
    fn subset_rates_pool_like_the_double_sum() {
        let errors = vec![em(&[(1, [2.0, 0.0]), (2, [1.0, 0.0]), (3, [0.0, 3.0]), (4, [0.0, 1.0])])];
        let partition = PartitionResult {
            strategy: crate::partition::Strategy::BalancedCardinality,
            subsets: vec![vec![1, 2], vec![3, 4]],
            distance_evals: 0,
        };
        // Subset 1 picks its optimum {1}; subset 2 picks the weaker {4}.
        let selected = vec![vec![vec![1], vec![4]]];
        let rates = optimization_rate_subsets(
            &selected,
            &errors,
            &partition,
            ObjectiveKind::StackedNorm,
        )
        .unwrap();
        assert_relative_eq!(rates.per_subset[0].rate, 1.0);
        assert_relative_eq!(rates.per_subset[1].rate, 1.0 / 3.0);
        assert_relative_eq!(rates.subset_average.rate, (1.0 + 1.0 / 3.0) / 2.0);
    }

    #[test]
    fn exact_estimates_give_zero_rmse() {
        let truth = vec![DVector::from_row_slice(&[1.0, 2.0]); 4];
        let estimates = vec![vec![truth[0].clone(); 3]; 4];
        let curve = estimation_rmse_per_step(&truth, &estimates, ErrorAggregate::Mean).unwrap();
        assert!(curve.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_and_max_aggregation() {
        let truth = vec![DVector::from_row_slice(&[0.0, 0.0])];
        let estimates = vec![vec![
            DVector::from_row_slice(&[2.0, 0.0]),
            DVector::from_row_slice(&[0.0, 4.0]),
        ]];
        let sqrt2 = 2.0f64.sqrt();
        let mean = estimation_rmse_per_step(&truth, &estimates, ErrorAggregate::Mean).unwrap();
        assert_relative_eq!(mean[0], (2.0 / sqrt2 + 4.0 / sqrt2) / 2.0, max_relative = 1e-12);
        let max = estimation_rmse_per_step(&truth, &estimates, ErrorAggregate::Max).unwrap();
        assert_relative_eq!(max[0], 4.0 / sqrt2, max_relative = 1e-12);
    }

    #[test]
    fn windowed_rmse_matches_hand_sum() {
        let series = vec![1.0, 2.0, 3.0, 4.0];
        let w = windowed_rmse(&series, 2);
        assert_relative_eq!(w[0], 1.0);
        assert_relative_eq!(w[1], ((1.0 + 4.0) / 2.0f64).sqrt());
        assert_relative_eq!(w[2], ((4.0 + 9.0) / 2.0f64).sqrt());
        assert_relative_eq!(w[3], ((9.0 + 16.0) / 2.0f64).sqrt());
    }

    #[test]
    fn occupancy_trivial_points() {
        let all: Occupancy<f64> = occupancy_analytic(100, 4, 100).unwrap();
        assert_relative_eq!(all.mean, 4.0);
        assert_relative_eq!(all.fraction, 1.0);
        let one: Occupancy<f64> = occupancy_analytic(100, 20, 1).unwrap();
        assert_relative_eq!(one.mean, 1.0, max_relative = 1e-12);
        assert_relative_eq!(one.fraction, 1.0 / 20.0, max_relative = 1e-12);
    }

    #[test]
    fn occupancy_matches_hand_computed_void_probability() {
        // N=100, m=20 (s=5), d=40: void = prod_{i=0..4} (60-i)/(100-i),
        // E = 20 (1 - void) ~ 18.549.
        let occ: Occupancy<f64> = occupancy_analytic(100, 20, 40).unwrap();
        let mut void = 1.0f64;
        for i in 0..5 {
            void *= (60.0 - i as f64) / (100.0 - i as f64);
        }
        assert_relative_eq!(occ.mean, 20.0 * (1.0 - void), max_relative = 1e-12);
        assert!((occ.mean - 18.549).abs() < 0.01);
    }

    #[test]
    fn occupancy_montecarlo_agrees_with_analytic() {
        let mut rng = substream(21, "occupancy");
        for (m, d) in [(4usize, 40usize), (20, 40), (10, 6), (50, 96)] {
            let a: Occupancy<f64> = occupancy_analytic(100, m, d).unwrap();
            let mc: Occupancy<f64> =
                occupancy_montecarlo(100, m, d, 20_000, &mut rng).unwrap();
            let rel = (a.mean - mc.mean).abs() / a.mean;
            assert!(rel < 0.02, "m={m} d={d}: analytic {} vs mc {}", a.mean, mc.mean);
        }
    }

    #[test]
    fn occupancy_monotone_in_d_and_m() {
        let grid_m = [2usize, 4, 5, 10, 20, 30, 40, 50];
        for &m in &grid_m {
            let mut prev = 0.0;
            for d in (1..=96).step_by(5) {
                let occ: Occupancy<f64> = occupancy_analytic(100, m, d).unwrap();
                assert!(occ.mean >= prev - 1e-12);
                prev = occ.mean;
            }
        }
        for d in (1..=96).step_by(5) {
            let mut prev = 0.0;
            for &m in &grid_m {
                let occ: Occupancy<f64> = occupancy_analytic(100, m, d).unwrap();
                assert!(occ.mean >= prev - 1e-12, "m={m} d={d}");
                prev = occ.mean;
            }
        }
    }

    #[test]
    fn greedy_surrogate_rates_flag_above_one() {
        // A selected set larger than its benchmark budget can beat a greedy
        // surrogate denominator; the flag must record it.
        let cols: Vec<(SensorId, [f64; 2])> =
            (1..=40).map(|id| (id, [1.0 + id as f64 * 0.01, 0.5])).collect();
        let errors = vec![em(&cols)];
        let all: BTreeSet<SensorId> = errors[0].ids().iter().copied().collect();
        let numer = objective(ObjectiveKind::DimensionCoupled, &errors[0], &all).unwrap();
        let best = optimal_set(ObjectiveKind::DimensionCoupled, &errors[0], 15).unwrap();
        assert!(!best.exact);
        if numer > best.value {
            let selected = vec![errors[0].ids().to_vec()];
            let rate = optimization_rate_total(
                &selected,
                &errors,
                ObjectiveKind::DimensionCoupled,
                15,
            )
            .unwrap();
            assert!(rate.any_above_one);
            assert!(!rate.exact_denominator);
        }
    }
}
