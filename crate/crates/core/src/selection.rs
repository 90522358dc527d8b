//! Submodular detection objectives and the two-stage detection scheduler.
//!
//! A receiving sensor assembles the masked estimation-error columns of its
//! neighbors into an [`ErrorMatrix`] and scores candidate suspect sets with a
//! monotone submodular objective. Two objective kinds are provided:
//!
//! * `StackedNorm` — `f(A) = sqrt(sum_{j in A} ||e_j||^2)`, the stacked
//!   reading of the augmented-error-matrix norm;
//! * `DimensionCoupled` — `f(A) = sum_l sqrt(sum_{j in A} e_{jl}^2)`, whose
//!   marginal gains interact exactly through shared observable dimensions, so
//!   selecting a sensor leaves the gains of disjoint-support candidates
//!   bit-identical.
//!
//! The scheduler (`dads_select`) runs `q` rounds. Each round refreshes
//! multiplicative weights `w <- w * exp(-G)` for the candidates designated by
//! the configured gain-update method, then performs stage 1 (one pick per
//! partition subset from the normalized weight distribution, by sampling or
//! by ranking) and stage 2 (a uniform pick among the stage-1 winners). The
//! non-partitioned scheduler is the degenerate single-subset case with full
//! updates.
//!
//! A paired entry point runs a shadow weight vector with a different update
//! method over the same pick sequence; the recorded per-subset distribution
//! vectors of driver and shadow are what the ratio-error analysis compares.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rand::distr::uniform::SampleUniform;
use rand::Rng;

use crate::error::{Error, Result};
use crate::partition::PartitionResult;
use crate::scalar::Real;
use crate::SensorId;

/// Weights above this magnitude trigger a uniform rescale; the distribution
/// vectors are scale-invariant, so selection behavior is unchanged.
const WEIGHT_RENORM_THRESHOLD: f64 = 1e100;

/// Exhaustive search is used while `C(n, q)` stays at or below this.
const EXHAUSTIVE_LIMIT: u128 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    StackedNorm,
    DimensionCoupled,
}

impl ObjectiveKind {
    pub fn label(self) -> &'static str {
        match self {
            ObjectiveKind::StackedNorm => "stacked_norm",
            ObjectiveKind::DimensionCoupled => "dimension_coupled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage1Method {
    Probability,
    Ranking,
}

impl Stage1Method {
    pub fn label(self) -> &'static str {
        match self {
            Stage1Method::Probability => "probability",
            Stage1Method::Ranking => "ranking",
        }
    }
}

/// Which candidates get their weights refreshed after a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainUpdateMethod {
    /// Grassmann partition; refresh the selected sensor's subset.
    M1PartitionSubset,
    /// Grassmann partition; refresh every candidate with overlapping support.
    M2PartitionRelated,
    /// Random partition; refresh the selected sensor's subset.
    M3RandomSubset,
    /// Random partition; refresh every candidate with overlapping support.
    M4RandomRelated,
    /// No partition structure; refresh every unselected candidate.
    M5Full,
}

impl GainUpdateMethod {
    pub fn label(self) -> &'static str {
        match self {
            GainUpdateMethod::M1PartitionSubset => "m1",
            GainUpdateMethod::M2PartitionRelated => "m2",
            GainUpdateMethod::M3RandomSubset => "m3",
            GainUpdateMethod::M4RandomRelated => "m4",
            GainUpdateMethod::M5Full => "m5",
        }
    }

    fn subset_scoped(self) -> bool {
        matches!(
            self,
            GainUpdateMethod::M1PartitionSubset | GainUpdateMethod::M3RandomSubset
        )
    }

    fn overlap_scoped(self) -> bool {
        matches!(
            self,
            GainUpdateMethod::M2PartitionRelated | GainUpdateMethod::M4RandomRelated
        )
    }
}

/// Masked per-neighbor error columns assembled at one time step.
#[derive(Debug, Clone)]
pub struct ErrorMatrix<T: Real> {
    ids: Vec<SensorId>,
    columns: Vec<DVector<T>>,
    supports: Vec<Vec<usize>>,
    state_dim: usize,
    index: BTreeMap<SensorId, usize>,
}

impl<T: Real> ErrorMatrix<T> {
    /// Build from `(id, masked error, indicator)` triples. Each column must be
    /// zero outside its sensor's indicator support.
    pub fn new(entries: Vec<(SensorId, DVector<T>, Vec<bool>)>) -> Result<Self> {
        let mut entries = entries;
        entries.sort_by_key(|(id, _, _)| *id);
        let state_dim = entries
            .first()
            .map(|(_, col, _)| col.len())
            .unwrap_or_default();
        let mut ids = Vec::with_capacity(entries.len());
        let mut columns = Vec::with_capacity(entries.len());
        let mut supports = Vec::with_capacity(entries.len());
        let mut index = BTreeMap::new();
        for (id, col, indicator) in entries {
            if col.len() != state_dim || indicator.len() != state_dim {
                return Err(Error::DimensionMismatch {
                    context: "error matrix column",
                    expected: state_dim,
                    got: col.len(),
                });
            }
            for (dim, &observable) in indicator.iter().enumerate() {
                if !observable && col[dim] != T::zero() {
                    return Err(Error::MismatchedUniverse {
                        context: "error column nonzero outside indicator support",
                    });
                }
            }
            let support: Vec<usize> = indicator
                .iter()
                .enumerate()
                .filter_map(|(dim, &b)| b.then_some(dim))
                .collect();
            if index.insert(id, ids.len()).is_some() {
                return Err(Error::MismatchedUniverse {
                    context: "duplicate candidate id",
                });
            }
            ids.push(id);
            columns.push(col);
            supports.push(support);
        }
        Ok(Self {
            ids,
            columns,
            supports,
            state_dim,
            index,
        })
    }

    pub fn ids(&self) -> &[SensorId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn column(&self, id: SensorId) -> Result<&DVector<T>> {
        self.index
            .get(&id)
            .map(|&i| &self.columns[i])
            .ok_or(Error::UnknownCandidate { id })
    }

    pub fn support(&self, id: SensorId) -> Result<&[usize]> {
        self.index
            .get(&id)
            .map(|&i| self.supports[i].as_slice())
            .ok_or(Error::UnknownCandidate { id })
    }

    fn position(&self, id: SensorId) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or(Error::UnknownCandidate { id })
    }

    /// The sub-matrix covering only `ids` (used for per-subset optima).
    pub fn restrict(&self, ids: &[SensorId]) -> Result<Self> {
        let mut entries = Vec::with_capacity(ids.len());
        for &id in ids {
            let pos = self.position(id)?;
            let mut indicator = vec![false; self.state_dim];
            for &dim in &self.supports[pos] {
                indicator[dim] = true;
            }
            entries.push((id, self.columns[pos].clone(), indicator));
        }
        Self::new(entries)
    }
}

/// Incremental objective evaluation: marginal gains in O(support size).
struct ObjectiveAcc<'a, T: Real> {
    kind: ObjectiveKind,
    errors: &'a ErrorMatrix<T>,
    dim_sumsq: Vec<T>,
    total_sumsq: T,
    value: T,
}

impl<'a, T: Real> ObjectiveAcc<'a, T> {
    fn new(kind: ObjectiveKind, errors: &'a ErrorMatrix<T>) -> Self {
        Self {
            kind,
            errors,
            dim_sumsq: vec![T::zero(); errors.state_dim()],
            total_sumsq: T::zero(),
            value: T::zero(),
        }
    }

    fn value(&self) -> T {
        self.value
    }

    /// `f(A + j) - f(A)`, nonnegative by monotonicity.
    fn gain(&self, pos: usize) -> T {
        let col = &self.errors.columns[pos];
        match self.kind {
            ObjectiveKind::StackedNorm => {
                let c = col.norm_squared();
                (self.total_sumsq + c).sqrt() - self.total_sumsq.sqrt()
            }
            ObjectiveKind::DimensionCoupled => {
                let mut delta = T::zero();
                for &dim in &self.errors.supports[pos] {
                    let s = self.dim_sumsq[dim];
                    let e = col[dim];
                    delta += (s + e * e).sqrt() - s.sqrt();
                }
                delta
            }
        }
    }

    fn add(&mut self, pos: usize) {
        let gain = self.gain(pos);
        let col = &self.errors.columns[pos];
        self.total_sumsq += col.norm_squared();
        for &dim in &self.errors.supports[pos] {
            self.dim_sumsq[dim] += col[dim] * col[dim];
        }
        self.value += gain;
    }
}

/// Objective value of a suspect set, computed from scratch.
pub fn objective<T: Real>(
    kind: ObjectiveKind,
    errors: &ErrorMatrix<T>,
    set: &BTreeSet<SensorId>,
) -> Result<T> {
    match kind {
        ObjectiveKind::StackedNorm => {
            let mut total = T::zero();
            for &id in set {
                total += errors.column(id)?.norm_squared();
            }
            Ok(total.sqrt())
        }
        ObjectiveKind::DimensionCoupled => {
            let mut dim_sumsq = vec![T::zero(); errors.state_dim()];
            for &id in set {
                let col = errors.column(id)?;
                for &dim in errors.support(id)? {
                    dim_sumsq[dim] += col[dim] * col[dim];
                }
            }
            let mut value = T::zero();
            for s in dim_sumsq {
                value += s.sqrt();
            }
            Ok(value)
        }
    }
}

/// Marginal gain in the sign convention of the scheduler:
/// `G = f(set) - f(set + candidate) <= 0`.
///
/// Computed through the candidate's support dimensions only, so that the
/// gains of candidates disjoint from everything newly selected stay
/// bit-identical rather than merely close.
pub fn marginal_gain<T: Real>(
    kind: ObjectiveKind,
    errors: &ErrorMatrix<T>,
    set: &BTreeSet<SensorId>,
    candidate: SensorId,
) -> Result<T> {
    if set.contains(&candidate) {
        return Err(Error::AlreadySelected { id: candidate });
    }
    let pos = errors.position(candidate)?;
    let mut acc = ObjectiveAcc::new(kind, errors);
    for &id in set {
        acc.add(errors.position(id)?);
    }
    Ok(-acc.gain(pos))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

#[derive(Debug, Clone)]
pub struct OptimalSet<T: Real> {
    pub ids: Vec<SensorId>,
    pub value: T,
    /// True when found by exhaustive enumeration; false for the greedy
    /// surrogate used once `C(n, q)` passes the enumeration limit.
    pub exact: bool,
}

fn greedy_set<T: Real>(kind: ObjectiveKind, errors: &ErrorMatrix<T>, q: usize) -> (Vec<SensorId>, T) {
    let n = errors.len();
    let mut acc = ObjectiveAcc::new(kind, errors);
    let mut selected = vec![false; n];
    let mut picked = Vec::with_capacity(q.min(n));
    for _ in 0..q.min(n) {
        let mut best: Option<(usize, T)> = None;
        for pos in 0..n {
            if selected[pos] {
                continue;
            }
            let gain = acc.gain(pos);
            match best {
                Some((_, g)) if gain <= g => {}
                _ => best = Some((pos, gain)),
            }
        }
        let (pos, _) = best.expect("q <= n");
        selected[pos] = true;
        acc.add(pos);
        picked.push(errors.ids[pos]);
    }
    picked.sort_unstable();
    (picked, acc.value())
}

/// Best suspect set of size at most `q`: exhaustive while the search space is
/// small, otherwise the full-update greedy surrogate (flagged `exact: false`).
pub fn optimal_set<T: Real>(
    kind: ObjectiveKind,
    errors: &ErrorMatrix<T>,
    q: usize,
) -> Result<OptimalSet<T>> {
    let n = errors.len();
    if q >= n {
        let all: BTreeSet<SensorId> = errors.ids.iter().copied().collect();
        let value = objective(kind, errors, &all)?;
        return Ok(OptimalSet {
            ids: errors.ids.clone(),
            value,
            exact: true,
        });
    }
    if binomial(n, q) > EXHAUSTIVE_LIMIT {
        let (ids, value) = greedy_set(kind, errors, q);
        return Ok(OptimalSet {
            ids,
            value,
            exact: false,
        });
    }
    // Monotone objective: the optimum uses the full budget, so enumerating
    // exactly-q subsets suffices.
    let mut best_value = T::zero();
    let mut best: Vec<usize> = (0..q).collect();
    let mut combo: Vec<usize> = (0..q).collect();
    loop {
        let mut acc = ObjectiveAcc::new(kind, errors);
        for &pos in &combo {
            acc.add(pos);
        }
        if acc.value() > best_value {
            best_value = acc.value();
            best = combo.clone();
        }
        // Next combination in lexicographic order.
        let mut i = q;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            if combo[i] != i + n - q {
                combo[i] += 1;
                for j in (i + 1)..q {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                let ids: Vec<SensorId> = best.iter().map(|&p| errors.ids[p]).collect();
                return Ok(OptimalSet {
                    ids,
                    value: best_value,
                    exact: true,
                });
            }
        }
    }
}

/// Candidates whose weights the method refreshes after `selected_id` was
/// picked; never includes already-selected candidates.
pub fn gain_update_targets<T: Real>(
    method: GainUpdateMethod,
    partition: &PartitionResult,
    selected_id: SensorId,
    errors: &ErrorMatrix<T>,
    already_selected: &BTreeSet<SensorId>,
) -> Result<Vec<SensorId>> {
    errors.position(selected_id)?;
    let unselected =
        |id: &SensorId| -> bool { !already_selected.contains(id) && *id != selected_id };
    if method == GainUpdateMethod::M5Full {
        return Ok(errors.ids.iter().copied().filter(|id| unselected(id)).collect());
    }
    if method.subset_scoped() {
        let membership = partition.membership();
        let g = *membership
            .get(&selected_id)
            .ok_or(Error::UnknownCandidate { id: selected_id })?;
        let mut out: Vec<SensorId> = partition.subsets[g]
            .iter()
            .copied()
            .filter(|id| unselected(id) && errors.index.contains_key(id))
            .collect();
        out.sort_unstable();
        return Ok(out);
    }
    debug_assert!(method.overlap_scoped());
    let sel_support = errors.support(selected_id)?;
    let mut out = Vec::new();
    for &id in &errors.ids {
        if !unselected(&id) {
            continue;
        }
        let support = errors.support(id)?;
        if supports_overlap(sel_support, support) {
            out.push(id);
        }
    }
    Ok(out)
}

fn supports_overlap(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => return true,
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    false
}

/// Scheduler configuration for one receiver.
#[derive(Debug, Clone, Copy)]
pub struct DadsConfig {
    /// Number of suspects to select (at most half the candidate set).
    pub q: usize,
    pub stage1: Stage1Method,
    pub method: GainUpdateMethod,
    pub kind: ObjectiveKind,
    /// Keep weights across time steps (historical information) or reset them
    /// at every step.
    pub persist_weights: bool,
}

/// Per-step record of what the scheduler did.
#[derive(Debug, Clone)]
pub struct StepSelection<T: Real> {
    /// Selected suspects in pick order.
    pub picks: Vec<SensorId>,
    /// Suspects per partition subset.
    pub per_subset: Vec<Vec<SensorId>>,
    /// Distribution vectors per round and subset, dense over subset members
    /// (zero entries for already-selected members); `None` when the subset
    /// had no unselected members left.
    pub p_rounds: Vec<Vec<Option<Vec<T>>>>,
    /// Stage-1 winner per round and subset: `(id, weight, p)`.
    pub stage1_winners: Vec<Vec<Option<(SensorId, T, T)>>>,
}

impl<T: Real> Default for StepSelection<T> {
    fn default() -> Self {
        Self {
            picks: Vec::new(),
            per_subset: Vec::new(),
            p_rounds: Vec::new(),
            stage1_winners: Vec::new(),
        }
    }
}

impl<T: Real> StepSelection<T> {
    pub fn suspects(&self) -> BTreeSet<SensorId> {
        self.picks.iter().copied().collect()
    }
}

/// Multiplicative-weight state of one scheduler instance, persisted across
/// time steps.
#[derive(Debug, Clone)]
pub struct SelectionState<T: Real> {
    ids: Vec<SensorId>,
    weights: Vec<T>,
    /// Gain recomputations performed so far (the cost counter).
    pub update_count: u64,
    /// Record of the most recent step.
    pub last: StepSelection<T>,
}

impl<T: Real> SelectionState<T> {
    pub fn new(mut ids: Vec<SensorId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        let n = ids.len();
        Self {
            ids,
            weights: vec![T::one(); n],
            update_count: 0,
            last: StepSelection::default(),
        }
    }

    pub fn ids(&self) -> &[SensorId] {
        &self.ids
    }

    pub fn weight(&self, id: SensorId) -> Result<T> {
        let pos = self
            .ids
            .binary_search(&id)
            .map_err(|_| Error::UnknownCandidate { id })?;
        Ok(self.weights[pos])
    }

    fn reset_weights(&mut self) {
        self.weights.fill(T::one());
    }
}

/// RNG streams consumed by one scheduler instance: one per subset for stage 1
/// plus the stage-2 stream.
pub struct SelectionStreams<R> {
    pub stage1: Vec<R>,
    pub stage2: R,
}

/// Run one scheduling step, updating `state` in place. `forced_first`
/// restricts the first stage-2 pick to the given pool (the fixture used to
/// study cross-subset coupling); the pool is ignored when empty after
/// intersection with the candidates.
pub fn dads_select<T, R>(
    errors: &ErrorMatrix<T>,
    partition: &PartitionResult,
    state: &mut SelectionState<T>,
    cfg: &DadsConfig,
    streams: &mut SelectionStreams<R>,
    forced_first: Option<&[SensorId]>,
) -> Result<()>
where
    T: Real + SampleUniform,
    R: Rng,
{
    run_rounds(
        errors,
        partition,
        &mut [(state, cfg.method)],
        cfg,
        streams,
        forced_first,
    )
}

/// Like [`dads_select`], but a shadow state follows the same pick sequence
/// while refreshing its weights under `shadow_method`. The driver state makes
/// every decision; the shadow only mirrors bookkeeping.
#[allow(clippy::too_many_arguments)]
pub fn dads_select_paired<T, R>(
    errors: &ErrorMatrix<T>,
    partition: &PartitionResult,
    driver: &mut SelectionState<T>,
    shadow: &mut SelectionState<T>,
    cfg: &DadsConfig,
    shadow_method: GainUpdateMethod,
    streams: &mut SelectionStreams<R>,
    forced_first: Option<&[SensorId]>,
) -> Result<()>
where
    T: Real + SampleUniform,
    R: Rng,
{
    run_rounds(
        errors,
        partition,
        &mut [(driver, cfg.method), (shadow, shadow_method)],
        cfg,
        streams,
        forced_first,
    )
}

fn run_rounds<T, R>(
    errors: &ErrorMatrix<T>,
    partition: &PartitionResult,
    states: &mut [(&mut SelectionState<T>, GainUpdateMethod)],
    cfg: &DadsConfig,
    streams: &mut SelectionStreams<R>,
    forced_first: Option<&[SensorId]>,
) -> Result<()>
where
    T: Real + SampleUniform,
    R: Rng,
{
    let n = errors.len();
    if cfg.q > n / 2 {
        return Err(Error::SelectionBudget { q: cfg.q, len: n });
    }
    for (state, _) in states.iter() {
        if state.ids != errors.ids {
            return Err(Error::MismatchedUniverse {
                context: "selection state candidates",
            });
        }
    }
    // Partition members as candidate positions, subset by subset.
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(partition.subset_count());
    let mut covered = 0usize;
    for subset in &partition.subsets {
        let mut positions = Vec::with_capacity(subset.len());
        for &id in subset {
            positions.push(errors.position(id)?);
        }
        covered += positions.len();
        members.push(positions);
    }
    if covered != n {
        return Err(Error::MismatchedUniverse {
            context: "partition does not cover candidates",
        });
    }
    if streams.stage1.len() < members.len() {
        return Err(Error::MismatchedUniverse {
            context: "one stage-1 stream per subset required",
        });
    }

    for (state, _) in states.iter_mut() {
        if !cfg.persist_weights {
            state.reset_weights();
        }
        state.last = StepSelection {
            picks: Vec::with_capacity(cfg.q),
            per_subset: vec![Vec::new(); members.len()],
            p_rounds: Vec::with_capacity(cfg.q),
            stage1_winners: Vec::with_capacity(cfg.q),
        };
    }

    let mut acc = ObjectiveAcc::new(cfg.kind, errors);
    let mut selected = vec![false; n];
    let mut last_pick: Option<usize> = None;

    for round in 0..cfg.q {
        // Weight refresh. The first round of a step has no within-step
        // selection to scope the update by, so every candidate is refreshed;
        // afterwards the method decides whose weights track the new gains.
        let mut gain_cache: Vec<Option<T>> = vec![None; n];
        for (state, method) in states.iter_mut() {
            let targets = refresh_targets(*method, last_pick, &members, errors, &selected);
            for pos in targets {
                let gain = *gain_cache[pos].get_or_insert_with(|| acc.gain(pos));
                // G = f(A) - f(A + j) = -gain; w <- w * exp(-G).
                state.weights[pos] *= gain.exp();
                state.update_count += 1;
            }
            let max_w = state
                .weights
                .iter()
                .copied()
                .fold(T::zero(), |a, b| if b > a { b } else { a });
            if max_w > T::c(WEIGHT_RENORM_THRESHOLD) {
                for w in &mut state.weights {
                    *w /= max_w;
                }
            }
        }

        // Stage 1: one winner per subset from the driver's distribution.
        let mut winners: Vec<(usize, usize)> = Vec::new(); // (subset, position)
        for (state, _) in states.iter_mut() {
            state.last.p_rounds.push(vec![None; members.len()]);
            state.last.stage1_winners.push(vec![None; members.len()]);
        }
        for (g, positions) in members.iter().enumerate() {
            let pool: Vec<usize> = positions.iter().copied().filter(|&p| !selected[p]).collect();
            if pool.is_empty() {
                continue;
            }
            // Record every state's distribution vector over this subset.
            for (state, _) in states.iter_mut() {
                let total: T = pool.iter().map(|&p| state.weights[p]).fold(T::zero(), |a, b| a + b);
                let dense: Vec<T> = positions
                    .iter()
                    .map(|&p| {
                        if selected[p] || total == T::zero() {
                            T::zero()
                        } else {
                            state.weights[p] / total
                        }
                    })
                    .collect();
                let round_p = state.last.p_rounds.last_mut().expect("pushed above");
                round_p[g] = Some(dense);
            }
            let (driver, _) = &states[0];
            let total: T = pool.iter().map(|&p| driver.weights[p]).fold(T::zero(), |a, b| a + b);
            let winner = match cfg.stage1 {
                Stage1Method::Ranking => {
                    // Argmax weight, lowest id on ties (pool is ascending).
                    let mut best = pool[0];
                    for &p in &pool[1..] {
                        if driver.weights[p] > driver.weights[best] {
                            best = p;
                        }
                    }
                    best
                }
                Stage1Method::Probability => {
                    // Inverse-CDF over the ascending candidate list.
                    let u: T = streams.stage1[g].random_range(T::zero()..T::one());
                    let mut acc_p = T::zero();
                    let mut chosen = pool[pool.len() - 1];
                    for &p in &pool {
                        acc_p += driver.weights[p] / total;
                        if u < acc_p {
                            chosen = p;
                            break;
                        }
                    }
                    chosen
                }
            };
            let (driver, _) = &states[0];
            let w = driver.weights[winner];
            let p = if total == T::zero() { T::zero() } else { w / total };
            for (state, _) in states.iter_mut() {
                let row = state.last.stage1_winners.last_mut().expect("pushed above");
                row[g] = Some((errors.ids[winner], w, p));
            }
            winners.push((g, winner));
        }
        if winners.is_empty() {
            break;
        }

        // Stage 2: uniform pick among the stage-1 winners, except when the
        // first pick is forced into a fixture pool.
        let forced_pool: Vec<usize> = if round == 0 {
            forced_first
                .map(|ids| {
                    ids.iter()
                        .filter_map(|id| errors.position(*id).ok())
                        .filter(|&p| !selected[p])
                        .collect()
                })
                .unwrap_or_default()
        } else {
            Vec::new()
        };
        let (subset_idx, pick) = if !forced_pool.is_empty() {
            let i = streams.stage2.random_range(0..forced_pool.len());
            let pos = forced_pool[i];
            let g = members
                .iter()
                .position(|positions| positions.contains(&pos))
                .expect("partition covers candidates");
            (g, pos)
        } else {
            let i = streams.stage2.random_range(0..winners.len());
            winners[i]
        };

        selected[pick] = true;
        acc.add(pick);
        last_pick = Some(pick);
        for (state, _) in states.iter_mut() {
            state.last.picks.push(errors.ids[pick]);
            state.last.per_subset[subset_idx].push(errors.ids[pick]);
        }
    }
    Ok(())
}

/// Positions whose gains are recomputed this round.
fn refresh_targets<T: Real>(
    method: GainUpdateMethod,
    last_pick: Option<usize>,
    members: &[Vec<usize>],
    errors: &ErrorMatrix<T>,
    selected: &[bool],
) -> Vec<usize> {
    let all_unselected = || -> Vec<usize> {
        (0..errors.len()).filter(|&p| !selected[p]).collect()
    };
    let pick = match last_pick {
        None => return all_unselected(),
        Some(p) => p,
    };
    match method {
        GainUpdateMethod::M5Full => all_unselected(),
        GainUpdateMethod::M1PartitionSubset | GainUpdateMethod::M3RandomSubset => members
            .iter()
            .find(|positions| positions.contains(&pick))
            .map(|positions| {
                positions
                    .iter()
                    .copied()
                    .filter(|&p| !selected[p])
                    .collect()
            })
            .unwrap_or_default(),
        GainUpdateMethod::M2PartitionRelated | GainUpdateMethod::M4RandomRelated => {
            let sel_support = &errors.supports[pick];
            (0..errors.len())
                .filter(|&p| !selected[p] && supports_overlap(sel_support, &errors.supports[p]))
                .collect()
        }
    }
}

/// Root-mean-square difference between two distribution vectors.
pub fn ratio_rmse<T: Real>(pa: &[T], pb: &[T]) -> Result<T> {
    if pa.len() != pb.len() {
        return Err(Error::MismatchedUniverse {
            context: "distribution vector lengths",
        });
    }
    if pa.is_empty() {
        return Ok(T::zero());
    }
    let mut sum = T::zero();
    for (a, b) in pa.iter().zip(pb) {
        let d = *a - *b;
        sum += d * d;
    }
    Ok((sum / T::of_usize(pa.len())).sqrt())
}

/// Distribution-ratio error between two scheduler states for one subset: the
/// RMS component difference of the distribution vectors formed at the second
/// selection round, whose gains are the first ones that react to the step's
/// opening pick. Zero when the step ran fewer than two rounds.
pub fn ratio_error<T: Real>(
    a: &SelectionState<T>,
    b: &SelectionState<T>,
    subset: usize,
) -> Result<T> {
    if a.ids != b.ids || a.last.p_rounds.len() != b.last.p_rounds.len() {
        return Err(Error::MismatchedUniverse {
            context: "ratio_error states",
        });
    }
    let (ra, rb) = match (a.last.p_rounds.get(1), b.last.p_rounds.get(1)) {
        (Some(ra), Some(rb)) => (ra, rb),
        _ => return Ok(T::zero()),
    };
    match (ra.get(subset), rb.get(subset)) {
        (Some(Some(pa)), Some(Some(pb))) => ratio_rmse(pa, pb),
        (Some(None), Some(None)) => Ok(T::zero()),
        _ => Err(Error::MismatchedUniverse {
            context: "ratio_error recorded rounds",
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{partition_balanced, partition_grassmann, Signature};
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;

    fn em(entries: Vec<(SensorId, Vec<f64>, Vec<bool>)>) -> ErrorMatrix<f64> {
        ErrorMatrix::new(
            entries
                .into_iter()
                .map(|(id, col, ind)| (id, DVector::from_vec(col), ind))
                .collect(),
        )
        .unwrap()
    }

    fn streams(seed: u64, subsets: usize) -> SelectionStreams<ChaCha8Rng> {
        SelectionStreams {
            stage1: (0..subsets)
                .map(|g| substream(seed, &format!("stage1/{g}")))
                .collect(),
            stage2: substream(seed, "stage2"),
        }
    }

    /// Random instance on full supports (every candidate sees every dim).
    fn random_instance(seed: u64, n: usize, dims: usize) -> ErrorMatrix<f64> {
        use rand::Rng;
        let mut rng = substream(seed, "instance");
        em((1..=n as u32)
            .map(|id| {
                let col: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..1.0)).collect();
                (id, col, vec![true; dims])
            })
            .collect())
    }

    /// Random instance with random supports; columns masked accordingly.
    fn random_masked_instance(seed: u64, n: usize, dims: usize) -> ErrorMatrix<f64> {
        use rand::Rng;
        let mut rng = substream(seed, "masked");
        em((1..=n as u32)
            .map(|id| {
                let mut ind: Vec<bool> = (0..dims).map(|_| rng.random::<bool>()).collect();
                if !ind.iter().any(|&b| b) {
                    ind[rng.random_range(0..dims)] = true;
                }
                let col: Vec<f64> = ind
                    .iter()
                    .map(|&b| if b { rng.random_range(0.0..1.0) } else { 0.0 })
                    .collect();
                (id, col, ind)
            })
            .collect())
    }

    #[test]
    fn objective_examples() {
        let errors = em(vec![(1, vec![3.0, 0.0, 4.0, 0.0], vec![true, true, true, true])]);
        let empty = BTreeSet::new();
        assert_eq!(objective(ObjectiveKind::StackedNorm, &errors, &empty).unwrap(), 0.0);
        assert_eq!(objective(ObjectiveKind::DimensionCoupled, &errors, &empty).unwrap(), 0.0);
        let one: BTreeSet<SensorId> = [1].into();
        assert_relative_eq!(objective(ObjectiveKind::StackedNorm, &errors, &one).unwrap(), 5.0);
        assert_relative_eq!(
            objective(ObjectiveKind::DimensionCoupled, &errors, &one).unwrap(),
            7.0
        );
    }

    #[test]
    fn coupled_objective_is_additive_on_disjoint_supports() {
        let errors = em(vec![
            (1, vec![2.0, 0.0, 1.0, 0.0], vec![true, false, true, false]),
            (2, vec![0.0, 3.0, 0.0, 0.5], vec![false, true, false, true]),
        ]);
        let a: BTreeSet<SensorId> = [1].into();
        let b: BTreeSet<SensorId> = [2].into();
        let ab: BTreeSet<SensorId> = [1, 2].into();
        let k = ObjectiveKind::DimensionCoupled;
        let sum = objective(k, &errors, &a).unwrap() + objective(k, &errors, &b).unwrap();
        assert_eq!(objective(k, &errors, &ab).unwrap(), sum);
    }

    #[test]
    fn marginal_gain_sign_and_errors() {
        let errors = em(vec![(7, vec![3.0, 4.0], vec![true, true])]);
        let empty = BTreeSet::new();
        let g = marginal_gain(ObjectiveKind::StackedNorm, &errors, &empty, 7).unwrap();
        assert_relative_eq!(g, -5.0);
        let set: BTreeSet<SensorId> = [7].into();
        assert!(matches!(
            marginal_gain(ObjectiveKind::StackedNorm, &errors, &set, 7),
            Err(Error::AlreadySelected { id: 7 })
        ));
        assert!(matches!(
            marginal_gain(ObjectiveKind::StackedNorm, &errors, &empty, 8),
            Err(Error::UnknownCandidate { id: 8 })
        ));
    }

    /// Enumerate all (A, B, x) chains on a small instance via a cached table
    /// of all subset values.
    fn check_monotone_submodular(errors: &ErrorMatrix<f64>, kind: ObjectiveKind) {
        let n = errors.len();
        assert!(n <= 10);
        let ids = errors.ids().to_vec();
        let mut table = vec![0.0f64; 1 << n];
        for mask in 0..(1usize << n) {
            let set: BTreeSet<SensorId> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| ids[i])
                .collect();
            table[mask] = objective(kind, errors, &set).unwrap();
        }
        for mask in 0..(1usize << n) {
            for i in 0..n {
                let bit = 1usize << i;
                if mask & bit != 0 {
                    continue;
                }
                // Monotone: f(A + x) >= f(A).
                assert!(table[mask | bit] >= table[mask] - 1e-12);
            }
        }
        // Submodular: for A subset of B and x outside B,
        // f(A+x) - f(A) >= f(B+x) - f(B). Enumerate B and subsets A of B.
        for b_mask in 0..(1usize << n) {
            let mut a_mask = b_mask;
            loop {
                for i in 0..n {
                    let bit = 1usize << i;
                    if b_mask & bit != 0 {
                        continue;
                    }
                    let lhs = table[a_mask | bit] - table[a_mask];
                    let rhs = table[b_mask | bit] - table[b_mask];
                    assert!(
                        lhs >= rhs - 1e-9,
                        "submodularity violated: {lhs} < {rhs}"
                    );
                }
                if a_mask == 0 {
                    break;
                }
                a_mask = (a_mask - 1) & b_mask;
            }
        }
    }

    #[test]
    fn objectives_are_monotone_submodular() {
        for seed in 0..25 {
            let errors = random_masked_instance(seed, 8, 4);
            check_monotone_submodular(&errors, ObjectiveKind::StackedNorm);
            check_monotone_submodular(&errors, ObjectiveKind::DimensionCoupled);
        }
    }

    #[test]
    fn gain_locality_bitwise() {
        for seed in 0..50 {
            let errors = random_masked_instance(100 + seed, 8, 4);
            let ids = errors.ids().to_vec();
            let empty = BTreeSet::new();
            let selected = ids[0];
            let before: Vec<f64> = ids[1..]
                .iter()
                .map(|&id| marginal_gain(ObjectiveKind::DimensionCoupled, &errors, &empty, id).unwrap())
                .collect();
            let set: BTreeSet<SensorId> = [selected].into();
            for (i, &id) in ids[1..].iter().enumerate() {
                let disjoint = !supports_overlap(
                    errors.support(selected).unwrap(),
                    errors.support(id).unwrap(),
                );
                if disjoint {
                    let after =
                        marginal_gain(ObjectiveKind::DimensionCoupled, &errors, &set, id).unwrap();
                    assert_eq!(
                        before[i].to_bits(),
                        after.to_bits(),
                        "gain of disjoint candidate changed"
                    );
                }
            }
        }
    }

    #[test]
    fn optimal_set_examples() {
        // Norms 5, 3, 2, 1: top-2 is {5, 3} with value sqrt(34).
        let errors = em(vec![
            (1, vec![5.0, 0.0], vec![true, true]),
            (2, vec![3.0, 0.0], vec![true, true]),
            (3, vec![2.0, 0.0], vec![true, true]),
            (4, vec![1.0, 0.0], vec![true, true]),
        ]);
        let best = optimal_set(ObjectiveKind::StackedNorm, &errors, 2).unwrap();
        assert_eq!(best.ids, vec![1, 2]);
        assert!(best.exact);
        assert_relative_eq!(best.value, 34.0f64.sqrt());

        let all = optimal_set(ObjectiveKind::StackedNorm, &errors, 4).unwrap();
        assert_eq!(all.ids, vec![1, 2, 3, 4]);
    }

    #[test]
    fn stacked_optimum_is_top_q_by_norm() {
        // Independent oracle: monotone rearrangement picks the q largest
        // column norms.
        for seed in 0..20 {
            let errors = random_instance(200 + seed, 9, 3);
            for q in 1..=4 {
                let best = optimal_set(ObjectiveKind::StackedNorm, &errors, q).unwrap();
                assert!(best.exact);
                let mut norms: Vec<(f64, SensorId)> = errors
                    .ids()
                    .iter()
                    .map(|&id| (errors.column(id).unwrap().norm_squared(), id))
                    .collect();
                norms.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                let expected: f64 = norms[..q].iter().map(|(n2, _)| *n2).sum::<f64>().sqrt();
                assert_relative_eq!(best.value, expected, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn greedy_surrogate_flagged_when_search_space_is_large() {
        let errors = random_instance(1, 40, 4);
        let best = optimal_set(ObjectiveKind::DimensionCoupled, &errors, 15).unwrap();
        assert!(!best.exact);
        assert_eq!(best.ids.len(), 15);
    }

    #[test]
    fn greedy_hits_the_1_minus_1e_bound() {
        let bound = 1.0 - (-1.0f64).exp();
        for seed in 0..30 {
            let errors = random_masked_instance(300 + seed, 9, 4);
            for kind in [ObjectiveKind::StackedNorm, ObjectiveKind::DimensionCoupled] {
                for q in 1..=4 {
                    let exact = optimal_set(kind, &errors, q).unwrap();
                    assert!(exact.exact);
                    let (_, greedy_value) = greedy_set(kind, &errors, q);
                    assert!(
                        greedy_value >= bound * exact.value - 1e-12,
                        "greedy {greedy_value} below bound of optimal {}",
                        exact.value
                    );
                }
            }
        }
    }

    #[test]
    fn gain_update_target_scopes() {
        // Star-100 style: four type subsets; C_2 (dims 2,4) overlaps C_4 (dim 4).
        let patterns = [
            vec![true, false, true, false],
            vec![false, true, false, true],
            vec![false, false, true, false],
            vec![false, false, false, true],
        ];
        let sigs: Vec<Signature> = (1..=8u32)
            .map(|id| Signature {
                id,
                indicator: patterns[((id - 1) / 2) as usize].clone(),
                obs_rank: patterns[((id - 1) / 2) as usize].iter().filter(|&&b| b).count(),
            })
            .collect();
        let partition = partition_grassmann(&sigs).unwrap();
        let errors = em((1..=8u32)
            .map(|id| {
                let ind = patterns[((id - 1) / 2) as usize].clone();
                let col = ind.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                (id, col, ind)
            })
            .collect());
        let selected = 7; // C_4 type
        let none = BTreeSet::new();
        let m1 = gain_update_targets(
            GainUpdateMethod::M1PartitionSubset,
            &partition,
            selected,
            &errors,
            &none,
        )
        .unwrap();
        assert_eq!(m1, vec![8]);
        let m2 = gain_update_targets(
            GainUpdateMethod::M2PartitionRelated,
            &partition,
            selected,
            &errors,
            &none,
        )
        .unwrap();
        assert_eq!(m2, vec![3, 4, 8]); // C_2 pair and the C_4 sibling
        let m5 = gain_update_targets(GainUpdateMethod::M5Full, &partition, selected, &errors, &none)
            .unwrap();
        assert_eq!(m5, vec![1, 2, 3, 4, 5, 6, 8]);
    }

    #[test]
    fn simplex_validity_and_normalization() {
        let errors = random_instance(4, 12, 4);
        let partition = partition_balanced(&errors.ids().to_vec(), 3).unwrap();
        let mut state = SelectionState::new(errors.ids().to_vec());
        let cfg = DadsConfig {
            q: 6,
            stage1: Stage1Method::Probability,
            method: GainUpdateMethod::M5Full,
            kind: ObjectiveKind::DimensionCoupled,
            persist_weights: true,
        };
        let mut s = streams(11, 3);
        for _ in 0..5 {
            dads_select(&errors, &partition, &mut state, &cfg, &mut s, None).unwrap();
            for round in &state.last.p_rounds {
                for p in round.iter().flatten() {
                    let total: f64 = p.iter().sum();
                    assert!((total - 1.0).abs() < 1e-12);
                    assert!(p.iter().all(|&x| x >= 0.0));
                }
            }
        }
        assert_eq!(state.last.picks.len(), 6);
        let dis: BTreeSet<SensorId> = state.last.suspects();
        assert_eq!(dis.len(), 6);
    }

    #[test]
    fn weights_1_1_2_normalize_to_quarter_quarter_half() {
        let p = [1.0, 1.0, 2.0].map(|w: f64| w / 4.0);
        assert_eq!(p, [0.25, 0.25, 0.5]);
        // The recorded p vector reflects the same normalization.
        let errors = em(vec![
            (1, vec![0.0], vec![true]),
            (2, vec![0.0], vec![true]),
            (3, vec![2.0f64.ln()], vec![true]),
        ]);
        // gains: ln(2) for candidate 3 => weight 2; others stay at 1... but
        // stacked norm of zero columns gives gain 0 => weight 1.
        let partition = partition_balanced(&[1, 2, 3], 1).unwrap();
        let mut state = SelectionState::new(vec![1, 2, 3]);
        let cfg = DadsConfig {
            q: 1,
            stage1: Stage1Method::Ranking,
            method: GainUpdateMethod::M5Full,
            kind: ObjectiveKind::StackedNorm,
            persist_weights: false,
        };
        let mut s = streams(12, 1);
        dads_select(&errors, &partition, &mut state, &cfg, &mut s, None).unwrap();
        let p = state.last.p_rounds[0][0].as_ref().unwrap();
        assert_relative_eq!(p[0], 0.25, max_relative = 1e-12);
        assert_relative_eq!(p[1], 0.25, max_relative = 1e-12);
        assert_relative_eq!(p[2], 0.5, max_relative = 1e-12);
        assert_eq!(state.last.picks, vec![3]);
    }

    #[test]
    fn ranking_is_scale_invariant() {
        let errors = random_instance(5, 10, 4);
        let partition = partition_balanced(&errors.ids().to_vec(), 2).unwrap();
        let cfg = DadsConfig {
            q: 5,
            stage1: Stage1Method::Ranking,
            method: GainUpdateMethod::M5Full,
            kind: ObjectiveKind::DimensionCoupled,
            persist_weights: true,
        };
        let mut a = SelectionState::new(errors.ids().to_vec());
        let mut b = SelectionState::new(errors.ids().to_vec());
        for w in &mut b.weights {
            *w *= 37.5;
        }
        let mut sa = streams(13, 2);
        let mut sb = streams(13, 2);
        dads_select(&errors, &partition, &mut a, &cfg, &mut sa, None).unwrap();
        dads_select(&errors, &partition, &mut b, &cfg, &mut sb, None).unwrap();
        assert_eq!(a.last.picks, b.last.picks);
    }

    #[test]
    fn single_subset_m5_is_the_centralized_scheduler() {
        // The non-partitioned baseline is this exact code path with a
        // degenerate partition: one stage-1 winner per round, stage 2 with no
        // freedom, and decision-for-decision reproducibility under a shared
        // stream.
        let errors = random_instance(6, 14, 4);
        let partition = partition_balanced(&errors.ids().to_vec(), 1).unwrap();
        let cfg = DadsConfig {
            q: 7,
            stage1: Stage1Method::Ranking,
            method: GainUpdateMethod::M5Full,
            kind: ObjectiveKind::DimensionCoupled,
            persist_weights: false,
        };
        let mut state = SelectionState::new(errors.ids().to_vec());
        let mut s = streams(14, 1);
        dads_select(&errors, &partition, &mut state, &cfg, &mut s, None).unwrap();
        for (round, winners) in state.last.stage1_winners.iter().enumerate() {
            let (winner, _, _) = winners[0].expect("single subset always has a winner");
            assert_eq!(winner, state.last.picks[round]);
        }
        // Fresh weights make the first pick the argmax singleton gain.
        let empty = BTreeSet::new();
        let best_first = errors
            .ids()
            .iter()
            .copied()
            .min_by(|&a, &b| {
                marginal_gain(cfg.kind, &errors, &empty, a)
                    .unwrap()
                    .partial_cmp(&marginal_gain(cfg.kind, &errors, &empty, b).unwrap())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(state.last.picks[0], best_first);

        let mut replay = SelectionState::new(errors.ids().to_vec());
        let mut s2 = streams(14, 1);
        dads_select(&errors, &partition, &mut replay, &cfg, &mut s2, None).unwrap();
        assert_eq!(state.last.picks, replay.last.picks);
    }

    #[test]
    fn forced_first_pick_confines_divergence_to_overlapping_subset() {
        // Mini star: 2 sensors per type; pick a C_4 sensor first. The shadow
        // (related updates) and driver (subset updates) may only disagree on
        // subset 2 (C_2 overlaps C_4 at dim 4).
        let patterns = [
            vec![true, false, true, false],
            vec![false, true, false, true],
            vec![false, false, true, false],
            vec![false, false, false, true],
        ];
        let sigs: Vec<Signature> = (1..=8u32)
            .map(|id| Signature {
                id,
                indicator: patterns[((id - 1) / 2) as usize].clone(),
                obs_rank: patterns[((id - 1) / 2) as usize].iter().filter(|&&b| b).count(),
            })
            .collect();
        let partition = partition_grassmann(&sigs).unwrap();
        use rand::Rng;
        let mut rng = substream(15, "cols");
        let errors = em((1..=8u32)
            .map(|id| {
                let ind = patterns[((id - 1) / 2) as usize].clone();
                let col = ind
                    .iter()
                    .map(|&b| if b { rng.random_range(0.1..1.0) } else { 0.0 })
                    .collect();
                (id, col, ind)
            })
            .collect());
        let cfg = DadsConfig {
            q: 4,
            stage1: Stage1Method::Ranking,
            method: GainUpdateMethod::M1PartitionSubset,
            kind: ObjectiveKind::DimensionCoupled,
            persist_weights: false,
        };
        let mut driver = SelectionState::new(errors.ids().to_vec());
        let mut shadow = SelectionState::new(errors.ids().to_vec());
        let mut s = streams(16, 4);
        dads_select_paired(
            &errors,
            &partition,
            &mut driver,
            &mut shadow,
            &cfg,
            GainUpdateMethod::M2PartitionRelated,
            &mut s,
            Some(&[7, 8]),
        )
        .unwrap();
        assert!(matches!(driver.last.picks.first(), Some(7 | 8)));
        let e1 = ratio_error(&driver, &shadow, 0).unwrap();
        let e3 = ratio_error(&driver, &shadow, 2).unwrap();
        let e4 = ratio_error(&driver, &shadow, 3).unwrap();
        assert_eq!(e1, 0.0);
        assert_eq!(e3, 0.0);
        assert_eq!(e4, 0.0);
    }

    #[test]
    fn ratio_rmse_worked_example() {
        let pa = [0.25, 0.25, 0.5];
        let pb = [0.3, 0.2, 0.5];
        let expected = (0.005f64 / 3.0).sqrt();
        assert_relative_eq!(ratio_rmse(&pa, &pb).unwrap(), expected, max_relative = 1e-12);
        let max_err = pa
            .iter()
            .zip(&pb)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert_relative_eq!(max_err, 0.05, max_relative = 1e-12);
    }

    #[test]
    fn identical_states_have_zero_ratio_error() {
        let errors = random_instance(8, 10, 4);
        let partition = partition_balanced(&errors.ids().to_vec(), 2).unwrap();
        let cfg = DadsConfig {
            q: 4,
            stage1: Stage1Method::Probability,
            method: GainUpdateMethod::M5Full,
            kind: ObjectiveKind::StackedNorm,
            persist_weights: true,
        };
        let mut a = SelectionState::new(errors.ids().to_vec());
        let mut b = SelectionState::new(errors.ids().to_vec());
        let mut s = streams(17, 2);
        dads_select_paired(
            &errors,
            &partition,
            &mut a,
            &mut b,
            &cfg,
            GainUpdateMethod::M5Full,
            &mut s,
            None,
        )
        .unwrap();
        for g in 0..2 {
            assert_eq!(ratio_error(&a, &b, g).unwrap(), 0.0);
        }
    }

    #[test]
    fn budget_contract() {
        let errors = random_instance(9, 8, 4);
        let partition = partition_balanced(&errors.ids().to_vec(), 2).unwrap();
        let mut state = SelectionState::new(errors.ids().to_vec());
        let cfg = DadsConfig {
            q: 5,
            stage1: Stage1Method::Ranking,
            method: GainUpdateMethod::M5Full,
            kind: ObjectiveKind::StackedNorm,
            persist_weights: true,
        };
        let mut s = streams(18, 2);
        assert!(matches!(
            dads_select(&errors, &partition, &mut state, &cfg, &mut s, None),
            Err(Error::SelectionBudget { q: 5, len: 8 })
        ));
    }

    #[test]
    fn update_counts_scale_with_method() {
        let errors = random_instance(10, 100, 4);
        let ids = errors.ids().to_vec();
        let cfg_m5 = DadsConfig {
            q: 40,
            stage1: Stage1Method::Ranking,
            method: GainUpdateMethod::M5Full,
            kind: ObjectiveKind::DimensionCoupled,
            persist_weights: false,
        };
        let single = partition_balanced(&ids, 1).unwrap();
        let mut m5 = SelectionState::new(ids.clone());
        let mut s5 = streams(19, 1);
        for _ in 0..10 {
            dads_select(&errors, &single, &mut m5, &cfg_m5, &mut s5, None).unwrap();
        }
        let quarters = partition_balanced(&ids, 4).unwrap();
        let cfg_m1 = DadsConfig {
            method: GainUpdateMethod::M1PartitionSubset,
            ..cfg_m5
        };
        let mut m1 = SelectionState::new(ids.clone());
        let mut s1 = streams(19, 4);
        for _ in 0..10 {
            dads_select(&errors, &quarters, &mut m1, &cfg_m1, &mut s1, None).unwrap();
        }
        let ratio = m1.update_count as f64 / (m5.update_count as f64 / 4.0);
        assert!(
            (0.8..=1.2).contains(&ratio),
            "m1 updates {} vs m5/4 {}",
            m1.update_count,
            m5.update_count / 4
        );
    }
}
