//! Plant, sensors, network topology, and the consensus estimator.
//!
//! The plant is a discrete-time LTI system `x(k+1) = A x(k) + w(k)` with
//! truncated Gaussian process noise (`||w||_inf <= process_bound`). Each
//! sensor measures `y_i = C_i x + v_i` with its own truncated noise, carries
//! the observable discrimination matrix of `(A, C_i)` and the binary
//! indicator vector of its nonzero rows, and runs the consensus estimator
//!
//! `x^_i(k+1) = A x^_i + K_i (y_i - C_i x^_i) - lambda A sum_j (x^_i - x^_ij)`
//!
//! where the sum ranges over in-neighbors not currently flagged as suspects.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::SensorId;

/// Attempts before truncated-noise rejection sampling gives up.
const REJECTION_CAP: u64 = 1_000_000;

/// Relative tolerance for symmetry checks and rank decisions.
const RANK_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
enum NoiseShape<T: Real> {
    /// Zero covariance: the noise is identically zero.
    Zero,
    /// Diagonal covariance, stored as per-component standard deviations.
    Diagonal(DVector<T>),
    /// Full covariance, stored as its Cholesky factor L.
    Full(DMatrix<T>),
}

fn noise_shape<T: Real>(cov: &DMatrix<T>) -> Result<NoiseShape<T>> {
    let n = cov.nrows();
    let tol = T::c(1e-12);
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = T::one() + cov[(i, j)].abs();
            if (cov[(i, j)] - cov[(j, i)]).abs() > tol * scale {
                return Err(Error::BadCovariance);
            }
        }
    }
    let off_diag_zero = (0..n).all(|i| (0..n).all(|j| i == j || cov[(i, j)] == T::zero()));
    if off_diag_zero {
        let mut sigmas = DVector::zeros(n);
        for i in 0..n {
            if cov[(i, i)] < T::zero() {
                return Err(Error::BadCovariance);
            }
            sigmas[i] = cov[(i, i)].sqrt();
        }
        if sigmas.iter().all(|s| *s == T::zero()) {
            return Ok(NoiseShape::Zero);
        }
        return Ok(NoiseShape::Diagonal(sigmas));
    }
    match Cholesky::new(cov.clone()) {
        Some(chol) => Ok(NoiseShape::Full(chol.l())),
        None => Err(Error::BadCovariance),
    }
}

/// Draw one noise vector and re-draw until the infinity-norm bound holds.
///
/// For diagonal covariance the components are independent, so each component
/// is rejected independently; this samples the same truncated distribution as
/// whole-vector rejection without its vanishing acceptance rate. A zero bound
/// is the degenerate limit: the noise is exactly zero.
fn sample_truncated<T, R>(shape: &NoiseShape<T>, bound: T, dim: usize, rng: &mut R) -> Result<DVector<T>>
where
    T: Real,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    if bound == T::zero() {
        return Ok(DVector::zeros(dim));
    }
    match shape {
        NoiseShape::Zero => Ok(DVector::zeros(dim)),
        NoiseShape::Diagonal(sigmas) => {
            let mut out = DVector::zeros(dim);
            for i in 0..dim {
                if sigmas[i] == T::zero() {
                    continue;
                }
                let mut attempts = 0u64;
                out[i] = loop {
                    let x: T = sigmas[i] * rng.sample(StandardNormal);
                    if x.abs() <= bound {
                        break x;
                    }
                    attempts += 1;
                    if attempts >= REJECTION_CAP {
                        return Err(Error::NoiseRejectionStall { attempts });
                    }
                };
            }
            Ok(out)
        }
        NoiseShape::Full(l) => {
            let mut attempts = 0u64;
            loop {
                let z = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
                let w = l * z;
                if w.amax() <= bound {
                    return Ok(w);
                }
                attempts += 1;
                if attempts >= REJECTION_CAP {
                    return Err(Error::NoiseRejectionStall { attempts });
                }
            }
        }
    }
}

/// The LTI plant with truncated process noise and its initial state.
#[derive(Debug, Clone)]
pub struct SystemModel<T: Real> {
    transition: DMatrix<T>,
    process_cov: DMatrix<T>,
    process_bound: T,
    initial_state: DVector<T>,
    noise: NoiseShape<T>,
}

impl<T: Real> SystemModel<T> {
    pub fn new(
        transition: DMatrix<T>,
        process_cov: DMatrix<T>,
        process_bound: T,
        initial_state: DVector<T>,
    ) -> Result<Self> {
        let n = transition.nrows();
        if transition.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "transition matrix",
                expected: n,
                got: transition.ncols(),
            });
        }
        if process_cov.nrows() != n || process_cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "process covariance",
                expected: n,
                got: process_cov.nrows(),
            });
        }
        if initial_state.len() != n {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: n,
                got: initial_state.len(),
            });
        }
        if process_bound < T::zero() {
            return Err(Error::NegativeBound);
        }
        let noise = noise_shape(&process_cov)?;
        Ok(Self {
            transition,
            process_cov,
            process_bound,
            initial_state,
            noise,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<T> {
        &self.transition
    }

    pub fn process_cov(&self) -> &DMatrix<T> {
        &self.process_cov
    }

    pub fn process_bound(&self) -> T {
        self.process_bound
    }

    pub fn initial_state(&self) -> &DVector<T> {
        &self.initial_state
    }

    /// Advance the truth state one step: `A x + w`, `||w||_inf <= bound`.
    pub fn step_state<R>(&self, state: &DVector<T>, rng: &mut R) -> Result<DVector<T>>
    where
        R: Rng + ?Sized,
        StandardNormal: Distribution<T>,
    {
        if state.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "step_state input",
                expected: self.state_dim(),
                got: state.len(),
            });
        }
        let w = sample_truncated(&self.noise, self.process_bound, self.state_dim(), rng)?;
        Ok(&self.transition * state + w)
    }
}

/// Observable discrimination matrix of the pair `(A, C)`:
/// `[C' (CA)' (CA^2)' ... (CA^{n-1})']`, an `n x (m n)` matrix whose row `l`
/// is nonzero exactly when state dimension `l` is visible to the sensor.
pub fn observability_matrix<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let m = c.nrows();
    let mut out = DMatrix::zeros(n, m * n);
    let mut block = c.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block.transpose());
        block = &block * a;
    }
    out
}

/// Binary indicator of the nonzero rows of an observable discrimination matrix.
pub fn indicator_rows<T: Real>(obs: &DMatrix<T>) -> Vec<bool> {
    (0..obs.nrows())
        .map(|r| (0..obs.ncols()).any(|c| obs[(r, c)] != T::zero()))
        .collect()
}

/// Zero out the components of `error` that fall outside the observable
/// support described by `indicator` (deinfluence-then-reconstruct masking).
pub fn kalman_mask<T: Real>(indicator: &[bool], error: &DVector<T>) -> Result<DVector<T>> {
    if indicator.len() != error.len() {
        return Err(Error::DimensionMismatch {
            context: "kalman_mask",
            expected: indicator.len(),
            got: error.len(),
        });
    }
    Ok(DVector::from_fn(error.len(), |i, _| {
        if indicator[i] {
            error[i]
        } else {
            T::zero()
        }
    }))
}

fn submatrix<T: Real>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Steady-state Kalman (one-step predictor) gain of the observable subsystem,
/// embedded back into full coordinates with zero rows on unobservable state
/// dimensions.
///
/// The Riccati recursion runs on `(A_o, C_o, Q_o, R)` until the iterate moves
/// by less than `1e-10` in the infinity norm, up to `10^4` iterations.
pub fn compute_gain<T: Real>(
    model: &SystemModel<T>,
    meas_matrix: &DMatrix<T>,
    meas_cov: &DMatrix<T>,
    indicator: &[bool],
    sensor: SensorId,
) -> Result<DMatrix<T>> {
    let n = model.state_dim();
    let m = meas_matrix.nrows();
    let obs_idx: Vec<usize> = (0..n).filter(|&i| indicator[i]).collect();
    if obs_idx.is_empty() {
        return Err(Error::DivergedGain { sensor });
    }
    let all_rows: Vec<usize> = (0..m).collect();
    let a_o = submatrix(model.transition(), &obs_idx, &obs_idx);
    let c_o = submatrix(meas_matrix, &all_rows, &obs_idx);
    let q_o = submatrix(model.process_cov(), &obs_idx, &obs_idx);

    // Precondition: the restricted pair must itself be observable.
    let k = obs_idx.len();
    let obs_restricted = observability_matrix(&a_o, &c_o);
    if obs_restricted.clone().rank(T::c(RANK_EPS)) != k {
        return Err(Error::DivergedGain { sensor });
    }

    let tol = T::c(1e-10);
    let mut p = q_o.clone();
    let mut converged = false;
    for _ in 0..10_000 {
        let s = &c_o * &p * c_o.transpose() + meas_cov;
        let s_inv = match s.try_inverse() {
            Some(inv) => inv,
            None => return Err(Error::DivergedGain { sensor }),
        };
        let apct = &a_o * &p * c_o.transpose();
        let next = &a_o * &p * a_o.transpose() - &apct * &s_inv * apct.transpose() + &q_o;
        let delta = (&next - &p).amax();
        p = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::DivergedGain { sensor });
    }
    let s = &c_o * &p * c_o.transpose() + meas_cov;
    let s_inv = s.try_inverse().ok_or(Error::DivergedGain { sensor })?;
    let k_o = &a_o * &p * c_o.transpose() * s_inv;

    let mut gain = DMatrix::zeros(n, m);
    for (local, &global) in obs_idx.iter().enumerate() {
        for col in 0..m {
            gain[(global, col)] = k_o[(local, col)];
        }
    }
    Ok(gain)
}

/// One sensor: measurement model, observability structure, estimator state.
#[derive(Debug, Clone)]
pub struct SensorNode<T: Real> {
    pub id: SensorId,
    meas_matrix: DMatrix<T>,
    meas_cov: DMatrix<T>,
    meas_bound: T,
    noise: NoiseShape<T>,
    obs_matrix: DMatrix<T>,
    indicator: Vec<bool>,
    pub gain: DMatrix<T>,
    pub estimate: DVector<T>,
    pub neighbors_in: Vec<SensorId>,
}

impl<T: Real> SensorNode<T> {
    pub fn new(
        id: SensorId,
        model: &SystemModel<T>,
        meas_matrix: DMatrix<T>,
        meas_cov: DMatrix<T>,
        meas_bound: T,
    ) -> Result<Self> {
        let n = model.state_dim();
        let m = meas_matrix.nrows();
        if meas_matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "measurement matrix",
                expected: n,
                got: meas_matrix.ncols(),
            });
        }
        if meas_cov.nrows() != m || meas_cov.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "measurement covariance",
                expected: m,
                got: meas_cov.nrows(),
            });
        }
        if meas_bound < T::zero() {
            return Err(Error::NegativeBound);
        }
        let noise = noise_shape(&meas_cov)?;
        let obs_matrix = observability_matrix(model.transition(), &meas_matrix);
        let indicator = indicator_rows(&obs_matrix);
        let weight = indicator.iter().filter(|&&b| b).count();
        let rank = obs_matrix.clone().rank(T::c(RANK_EPS));
        if rank != weight {
            return Err(Error::IndicatorRankMismatch {
                sensor: id,
                rank,
                weight,
            });
        }
        let gain = compute_gain(model, &meas_matrix, &meas_cov, &indicator, id)?;
        Ok(Self {
            id,
            meas_matrix,
            meas_cov,
            meas_bound,
            noise,
            obs_matrix,
            indicator,
            gain,
            estimate: model.initial_state().clone_owned(),
            neighbors_in: Vec::new(),
        })
    }

    pub fn meas_matrix(&self) -> &DMatrix<T> {
        &self.meas_matrix
    }

    pub fn meas_cov(&self) -> &DMatrix<T> {
        &self.meas_cov
    }

    pub fn meas_bound(&self) -> T {
        self.meas_bound
    }

    pub fn obs_matrix(&self) -> &DMatrix<T> {
        &self.obs_matrix
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn obs_rank(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }

    /// Measure the state: `C_i x + v`, `||v||_inf <= meas_bound`.
    pub fn measure<R>(&self, state: &DVector<T>, rng: &mut R) -> Result<DVector<T>>
    where
        R: Rng + ?Sized,
        StandardNormal: Distribution<T>,
    {
        if state.len() != self.meas_matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "measure input",
                expected: self.meas_matrix.ncols(),
                got: state.len(),
            });
        }
        let v = sample_truncated(&self.noise, self.meas_bound, self.meas_matrix.nrows(), rng)?;
        Ok(&self.meas_matrix * state + v)
    }

    /// Mask an error vector to this sensor's observable support.
    pub fn kalman_mask(&self, error: &DVector<T>) -> Result<DVector<T>> {
        kalman_mask(&self.indicator, error)
    }
}

/// Consensus-estimator configuration. `consensus_weight` is the paper-range
/// parameter `lambda in (0, 1/max_i |N_i|)`; validation happens against a
/// concrete graph.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorConfig<T: Real> {
    pub consensus_weight: T,
    pub exclude_suspects: bool,
}

impl<T: Real> EstimatorConfig<T> {
    /// Default weight strictly inside the admissible interval: `0.5 / max|N_i|`.
    pub fn auto_for(graph: &NetworkGraph<T>, exclude_suspects: bool) -> Self {
        let max_n = graph.max_in_degree();
        let weight = if max_n == 0 {
            T::c(0.5)
        } else {
            T::c(0.5) / T::of_usize(max_n)
        };
        Self {
            consensus_weight: weight,
            exclude_suspects,
        }
    }

    pub fn validate_for(&self, graph: &NetworkGraph<T>) -> Result<()> {
        let max_n = graph.max_in_degree();
        if max_n == 0 {
            return Ok(());
        }
        let upper = T::one() / T::of_usize(max_n);
        if self.consensus_weight <= T::zero() || self.consensus_weight >= upper {
            return Err(Error::BadConsensusWeight {
                value: self.consensus_weight.to_f64().unwrap_or(f64::NAN),
                max: upper.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }
}

/// Does the stacked pair `(A, [C_j]_j)` have full observable rank?
pub fn joint_observable<T: Real>(model: &SystemModel<T>, sensors: &[&SensorNode<T>]) -> bool {
    if sensors.is_empty() {
        return false;
    }
    let n = model.state_dim();
    let total_m: usize = sensors.iter().map(|s| s.meas_matrix().nrows()).sum();
    let mut stacked = DMatrix::zeros(total_m, n);
    let mut row = 0;
    for s in sensors {
        let m = s.meas_matrix().nrows();
        stacked.view_mut((row, 0), (m, n)).copy_from(s.meas_matrix());
        row += m;
    }
    let obs = observability_matrix(model.transition(), &stacked);
    obs.clone().rank(T::c(RANK_EPS)) == n
}

/// Sensor network with directed estimate exchange (`j -> i` means sensor j's
/// estimate is delivered to sensor i).
#[derive(Debug, Clone)]
pub struct NetworkGraph<T: Real> {
    pub model: SystemModel<T>,
    nodes: Vec<SensorNode<T>>,
    positions: Option<Vec<[T; 2]>>,
    index: BTreeMap<SensorId, usize>,
}

impl<T: Real> NetworkGraph<T> {
    /// Build the graph and reject it if any node with a nonempty
    /// in-neighborhood fails the joint observability requirement.
    pub fn new(
        model: SystemModel<T>,
        mut nodes: Vec<SensorNode<T>>,
        edges: &[(SensorId, SensorId)],
        positions: Option<Vec<[T; 2]>>,
    ) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (pos, node) in nodes.iter().enumerate() {
            assert!(
                index.insert(node.id, pos).is_none(),
                "duplicate sensor id {}",
                node.id
            );
        }
        if let Some(p) = &positions {
            assert_eq!(p.len(), nodes.len(), "one position per node");
        }
        let mut incoming: BTreeMap<SensorId, BTreeSet<SensorId>> = BTreeMap::new();
        for &(from, to) in edges {
            if !index.contains_key(&from) {
                return Err(Error::UnknownCandidate { id: from });
            }
            if !index.contains_key(&to) {
                return Err(Error::UnknownCandidate { id: to });
            }
            incoming.entry(to).or_default().insert(from);
        }
        for node in nodes.iter_mut() {
            node.neighbors_in = incoming
                .get(&node.id)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
        }
        let graph = Self {
            model,
            nodes,
            positions,
            index,
        };
        for node in &graph.nodes {
            if node.neighbors_in.is_empty() {
                continue;
            }
            let neighbor_nodes: Vec<&SensorNode<T>> = node
                .neighbors_in
                .iter()
                .map(|id| graph.node(*id).expect("edge endpoints checked"))
                .collect();
            if !joint_observable(&graph.model, &neighbor_nodes) {
                return Err(Error::JointObservability { sensor: node.id });
            }
        }
        Ok(graph)
    }

    pub fn node(&self, id: SensorId) -> Option<&SensorNode<T>> {
        self.index.get(&id).map(|&pos| &self.nodes[pos])
    }

    pub fn node_mut(&mut self, id: SensorId) -> Option<&mut SensorNode<T>> {
        self.index.get(&id).copied().map(move |pos| &mut self.nodes[pos])
    }

    pub fn nodes(&self) -> &[SensorNode<T>] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [SensorNode<T>] {
        &mut self.nodes
    }

    pub fn positions(&self) -> Option<&[[T; 2]]> {
        self.positions.as_deref()
    }

    pub fn max_in_degree(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.neighbors_in.len())
            .max()
            .unwrap_or(0)
    }

    /// One estimator step for `sensor_id`. `received` maps each in-neighbor to
    /// the (possibly tampered) estimate it delivered this tick; `suspects` are
    /// dropped from the consensus sum when the config says so. Each
    /// disagreement term is masked to the sender's observable support
    /// (deinfluence-then-reconstruct), so a neighbor never pushes state
    /// dimensions it cannot actually estimate. The caller owns the tick
    /// barrier: the returned estimate is not written back here.
    pub fn estimator_step(
        &self,
        cfg: &EstimatorConfig<T>,
        sensor_id: SensorId,
        measurement: &DVector<T>,
        received: &BTreeMap<SensorId, DVector<T>>,
        suspects: &BTreeSet<SensorId>,
    ) -> Result<DVector<T>> {
        let node = self
            .node(sensor_id)
            .ok_or(Error::UnknownCandidate { id: sensor_id })?;
        if measurement.len() != node.meas_matrix().nrows() {
            return Err(Error::DimensionMismatch {
                context: "estimator measurement",
                expected: node.meas_matrix().nrows(),
                got: measurement.len(),
            });
        }
        let a = self.model.transition();
        let innovation = measurement - node.meas_matrix() * &node.estimate;
        let mut next = a * &node.estimate + &node.gain * innovation;
        let mut disagreement = DVector::zeros(self.model.state_dim());
        for &j in &node.neighbors_in {
            if cfg.exclude_suspects && suspects.contains(&j) {
                continue;
            }
            let incoming = received
                .get(&j)
                .ok_or(Error::MissingNeighborEstimate {
                    sensor: sensor_id,
                    neighbor: j,
                })?;
            let sender = self.node(j).expect("neighbor ids validated");
            disagreement += sender.kalman_mask(&(&node.estimate - incoming))?;
        }
        next -= a * disagreement * cfg.consensus_weight;
        Ok(next)
    }
}
