//! Dynamic false-data-injection traces against neighbor-to-receiver links.
//!
//! At each step the attacker holds a compromised set of exactly `q` neighbor
//! sensors (redrawn uniformly when the strategy is dynamic) and adds a signal
//! `z` to each compromised estimate on its way to the receiver. Signals touch
//! only the configured state dimensions; their magnitude sits in a band
//! relative to the estimation-noise bound: `[1b, 2b]` for the stealthy family
//! and `[5b, 10b]` for the unstealthy one, with independent random signs.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rand::distr::uniform::SampleUniform;
use rand::Rng;

use crate::error::{Error, Result};
use crate::partition::PartitionResult;
use crate::scalar::Real;
use crate::SensorId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackFamily {
    Stealthy,
    Unstealthy,
}

impl AttackFamily {
    /// Amplitude band as multiples of the noise bound.
    pub fn band(self) -> (f64, f64) {
        match self {
            AttackFamily::Stealthy => (1.0, 2.0),
            AttackFamily::Unstealthy => (5.0, 10.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AttackFamily::Stealthy => "stealthy",
            AttackFamily::Unstealthy => "unstealthy",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackConfig<T: Real> {
    /// Maximum (and realized) number of compromised neighbors per step.
    pub q: usize,
    pub family: AttackFamily,
    /// Zero-based state dimensions the attacker tampers with.
    pub attacked_dims: Vec<usize>,
    /// Redraw the compromised set every step (dynamic strategy) or hold it.
    pub redraw_each_step: bool,
    /// Estimation-noise bound `b` the amplitude bands are scaled by.
    pub noise_bound: T,
}

/// Uniformly draw the compromised set; the result keeps draw order, which is
/// also the attacker-slot order used for per-slot power accounting.
pub fn draw_compromised<T, R>(
    neighbors: &[SensorId],
    cfg: &AttackConfig<T>,
    rng: &mut R,
) -> Result<Vec<SensorId>>
where
    T: Real,
    R: Rng + ?Sized,
{
    if cfg.q > neighbors.len() / 2 {
        return Err(Error::AttackBudget {
            q: cfg.q,
            len: neighbors.len(),
        });
    }
    let picked = rand::seq::index::sample(rng, neighbors.len(), cfg.q);
    Ok(picked.iter().map(|i| neighbors[i]).collect())
}

fn draw_signal<T, R>(state_dim: usize, cfg: &AttackConfig<T>, rng: &mut R) -> DVector<T>
where
    T: Real + SampleUniform,
    R: Rng + ?Sized,
{
    let (lo, hi) = cfg.family.band();
    let lo = T::c(lo) * cfg.noise_bound;
    let hi = T::c(hi) * cfg.noise_bound;
    let mut z = DVector::zeros(state_dim);
    for &dim in &cfg.attacked_dims {
        if dim >= state_dim {
            continue;
        }
        let amp = if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        };
        let sign = if rng.random::<bool>() { T::one() } else { -T::one() };
        z[dim] = sign * amp;
    }
    z
}

/// Tamper with one transmitted estimate; returns the attacked copy and the
/// injected signal.
pub fn inject<T, R>(
    sensor_estimate: &DVector<T>,
    cfg: &AttackConfig<T>,
    rng: &mut R,
) -> (DVector<T>, DVector<T>)
where
    T: Real + SampleUniform,
    R: Rng + ?Sized,
{
    let z = draw_signal(sensor_estimate.len(), cfg, rng);
    (sensor_estimate + &z, z)
}

/// One step of an attack trace: who is compromised and what was injected.
#[derive(Debug, Clone)]
pub struct AttackStep<T: Real> {
    /// Compromised senders in attacker-slot order.
    pub compromised: Vec<SensorId>,
    /// Injected signal per compromised sender.
    pub signals: BTreeMap<SensorId, DVector<T>>,
}

impl<T: Real> AttackStep<T> {
    pub fn is_compromised(&self, id: SensorId) -> bool {
        self.signals.contains_key(&id)
    }
}

/// Recorded attack activity against one receiver's neighborhood.
#[derive(Debug, Clone)]
pub struct AttackTrace<T: Real> {
    pub steps: Vec<AttackStep<T>>,
    /// Total churn of the compromised set: sum over consecutive steps of the
    /// symmetric-difference size.
    pub delta_total: u64,
    /// Per attacker slot, the running sum of squared signal norms.
    pub slot_power_sums: Vec<T>,
}

impl<T: Real> AttackTrace<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Time-averaged disturbance power of one attacker slot.
    pub fn slot_power(&self, slot: usize) -> T {
        if self.steps.is_empty() {
            return T::zero();
        }
        self.slot_power_sums[slot] / T::of_usize(self.steps.len())
    }
}

/// Generates and records the attack against one receiver's neighborhood.
#[derive(Debug, Clone)]
pub struct Attacker<T: Real> {
    cfg: AttackConfig<T>,
    neighbors: Vec<SensorId>,
    state_dim: usize,
    pub trace: AttackTrace<T>,
}

impl<T: Real + SampleUniform> Attacker<T> {
    pub fn new(neighbors: Vec<SensorId>, state_dim: usize, cfg: AttackConfig<T>) -> Result<Self> {
        if cfg.q > neighbors.len() / 2 {
            return Err(Error::AttackBudget {
                q: cfg.q,
                len: neighbors.len(),
            });
        }
        let slots = cfg.q;
        Ok(Self {
            cfg,
            neighbors,
            state_dim,
            trace: AttackTrace {
                steps: Vec::new(),
                delta_total: 0,
                slot_power_sums: vec![T::zero(); slots],
            },
        })
    }

    pub fn config(&self) -> &AttackConfig<T> {
        &self.cfg
    }

    /// Advance one step: redraw (or hold) the compromised set and draw one
    /// signal per slot.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&AttackStep<T>> {
        let compromised = match self.trace.steps.last() {
            Some(prev) if !self.cfg.redraw_each_step => prev.compromised.clone(),
            _ => draw_compromised(&self.neighbors, &self.cfg, rng)?,
        };
        if let Some(prev) = self.trace.steps.last() {
            let a: BTreeSet<_> = prev.compromised.iter().collect();
            let b: BTreeSet<_> = compromised.iter().collect();
            self.trace.delta_total += a.symmetric_difference(&b).count() as u64;
        }
        let mut signals = BTreeMap::new();
        for (slot, &sender) in compromised.iter().enumerate() {
            let z = draw_signal(self.state_dim, &self.cfg, rng);
            self.trace.slot_power_sums[slot] += z.norm_squared();
            signals.insert(sender, z);
        }
        self.trace.steps.push(AttackStep {
            compromised,
            signals,
        });
        Ok(self.trace.steps.last().expect("just pushed"))
    }
}

/// Per-subset attack balance over a recorded trace.
#[derive(Debug, Clone)]
pub struct SubsetBalance<T: Real> {
    /// Mean number of compromised members per step.
    pub mean_attacked: T,
    /// Share of the total injected power landing in this subset.
    pub intensity_ratio: T,
    /// False when the trace carries no power at all (ratio reported as 0).
    pub ratio_defined: bool,
}

/// Mean attacked counts and injected-power shares per partition subset.
pub fn balance_stats<T: Real>(
    trace: &AttackTrace<T>,
    partition: &PartitionResult,
) -> Vec<SubsetBalance<T>> {
    let membership = partition.membership();
    let m = partition.subset_count();
    let steps = trace.steps.len().max(1);
    let mut counts = vec![0u64; m];
    let mut power = vec![T::zero(); m];
    let mut total_power = T::zero();
    for step in &trace.steps {
        for (sender, z) in &step.signals {
            if let Some(&g) = membership.get(sender) {
                counts[g] += 1;
                let p = z.norm_squared();
                power[g] += p;
                total_power += p;
            }
        }
    }
    (0..m)
        .map(|g| {
            let ratio_defined = total_power > T::zero();
            SubsetBalance {
                mean_attacked: T::of_usize(counts[g] as usize) / T::of_usize(steps),
                intensity_ratio: if ratio_defined {
                    power[g] / total_power
                } else {
                    T::zero()
                },
                ratio_defined,
            }
        })
        .collect()
}
