//! Experiment engine and orchestration.
//!
//! One engine drives every scenario: per tick it advances the truth, draws
//! measurements, injects attacks on in-edges, runs suspect selection at every
//! node that receives estimates, then applies the consensus estimator under
//! the tick barrier (all step-k estimates are read before any step-k+1
//! estimate is written). Sensors are processed in ascending id order and all
//! randomness comes from named substreams of the master seed, so runs are
//! reproducible byte-for-byte.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;

use adsched_core::attack::{AttackConfig, Attacker};
use adsched_core::metrics::{
    occupancy_analytic, occupancy_montecarlo, optimization_rate_subsets, optimization_rate_total,
    rmse_curves, Occupancy, RateOutcome, RmseCurves, SubsetRates,
};
use adsched_core::model::{EstimatorConfig, NetworkGraph};
use adsched_core::partition::{
    partition_balanced, partition_grassmann, partition_grassmann_improved, partition_min_mutual,
    partition_random, PartitionResult, Signature, Strategy,
};
use adsched_core::rng::substream;
use adsched_core::selection::{
    dads_select, dads_select_paired, ratio_error, DadsConfig, ErrorMatrix, GainUpdateMethod,
    ObjectiveKind, SelectionState, SelectionStreams, Stage1Method,
};
use adsched_core::SensorId;

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::scenario::{build_custom, build_geometric500, build_star100};
use crate::SimError;

/// Attack setup for one run; `q = 0` means `floor(|N_i|/2)` per neighborhood.
#[derive(Debug, Clone)]
pub struct AttackPlan {
    pub q: usize,
    pub family: adsched_core::attack::AttackFamily,
    /// Zero-based attacked state dimensions.
    pub dims: Vec<usize>,
    pub redraw: bool,
    pub noise_bound: f64,
}

/// Selection setup for one run; `q = 0` follows the attack budget.
#[derive(Debug, Clone)]
pub struct SelectionPlan {
    pub q: usize,
    pub stage1: Stage1Method,
    pub method: GainUpdateMethod,
    pub kind: ObjectiveKind,
    pub persist_weights: bool,
    pub strategy: Strategy,
    pub random_m: usize,
    pub paired_reference: Option<GainUpdateMethod>,
    pub compare_ads: bool,
    /// Force each step's first pick into this subset (1-based; 0 = off),
    /// preferring currently compromised members.
    pub force_first_subset: usize,
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub t: usize,
    pub seed: u64,
    /// Consensus weight; 0 = auto (0.5 / max in-degree).
    pub consensus_weight: f64,
    pub exclude_suspects: bool,
    pub attack: Option<AttackPlan>,
    pub selection: Option<SelectionPlan>,
    /// Keep full attack traces (needed for attacks.csv and balance stats).
    pub retain_attack_traces: bool,
    /// Keep per-step error matrices (needed for optimization rates).
    pub record_errors: bool,
}

/// One stage-1 winner row of `selection.csv`.
#[derive(Debug, Clone)]
pub struct WinnerRow {
    pub k: usize,
    pub l: usize,
    pub subset: usize,
    pub candidate: SensorId,
    pub weight: f64,
    pub p: f64,
    pub selected: bool,
}

/// Recorded decisions of one scheduler instance over a run.
#[derive(Debug, Clone, Default)]
pub struct SelectionTrace {
    pub selected: Vec<Vec<SensorId>>,
    pub per_subset: Vec<Vec<Vec<SensorId>>>,
    pub winner_rows: Vec<WinnerRow>,
    pub update_count: u64,
}

/// Everything recorded at one selecting node.
#[derive(Debug, Clone)]
pub struct NodeSelection {
    pub partition: PartitionResult,
    pub q: usize,
    pub driver: SelectionTrace,
    pub ads: Option<SelectionTrace>,
    /// Ratio errors `[step][subset]` between driver and the paired shadow.
    pub ratio_errors: Option<Vec<Vec<f64>>>,
    pub errors: Option<Vec<ErrorMatrix<f64>>>,
}

/// A completed run of the engine.
pub struct NetRun {
    pub node_ids: Vec<SensorId>,
    pub truth: Vec<DVector<f64>>,
    /// Estimates per step in `node_ids` order (state at the start of the step).
    pub estimates: Vec<Vec<DVector<f64>>>,
    pub attackers: BTreeMap<SensorId, Attacker<f64>>,
    pub selections: BTreeMap<SensorId, NodeSelection>,
}

fn build_partition(
    strategy: Strategy,
    sigs: &[Signature],
    m: usize,
    seed: u64,
    node: SensorId,
) -> Result<PartitionResult, SimError> {
    let ids: Vec<SensorId> = sigs.iter().map(|s| s.id).collect();
    Ok(match strategy {
        Strategy::Grassmann => partition_grassmann(sigs)?,
        Strategy::GrassmannImproved => partition_grassmann_improved(sigs)?,
        Strategy::MinMutual => partition_min_mutual(sigs)?,
        Strategy::Random => {
            partition_random(&ids, m, &mut substream(seed, &format!("partition/{node}")))?
        }
        Strategy::BalancedCardinality => partition_balanced(&ids, m)?,
    })
}

struct SelCtx {
    partition: PartitionResult,
    cfg: DadsConfig,
    state: SelectionState<f64>,
    shadow: Option<(SelectionState<f64>, GainUpdateMethod)>,
    ads_state: Option<SelectionState<f64>>,
    ads_partition: PartitionResult,
    streams: SelectionStreams<ChaCha8Rng>,
    ads_streams: Option<SelectionStreams<ChaCha8Rng>>,
    force_subset: usize,
    record: NodeSelection,
}

struct NodeCtx {
    id: SensorId,
    neighbors: Vec<SensorId>,
    attacker: Option<(Attacker<f64>, ChaCha8Rng)>,
    sel: Option<SelCtx>,
}

/// Run the scenario graph under the given options.
pub fn run_network(graph: &NetworkGraph<f64>, opts: &EngineOptions) -> Result<NetRun, SimError> {
    let mut graph = graph.clone();
    let est_cfg = if opts.consensus_weight > 0.0 {
        let cfg = EstimatorConfig {
            consensus_weight: opts.consensus_weight,
            exclude_suspects: opts.exclude_suspects,
        };
        cfg.validate_for(&graph)?;
        cfg
    } else {
        EstimatorConfig::auto_for(&graph, opts.exclude_suspects)
    };

    let node_ids: Vec<SensorId> = graph.nodes().iter().map(|n| n.id).collect();
    let state_dim = graph.model.state_dim();

    // Per-node contexts for every node that receives estimates.
    let mut contexts: Vec<NodeCtx> = Vec::new();
    for node in graph.nodes() {
        if node.neighbors_in.is_empty() {
            continue;
        }
        let id = node.id;
        let neighbors = node.neighbors_in.clone();
        let attacker = match &opts.attack {
            None => None,
            Some(plan) => {
                let q = if plan.q == 0 {
                    neighbors.len() / 2
                } else {
                    plan.q
                };
                let cfg = AttackConfig {
                    q,
                    family: plan.family,
                    attacked_dims: plan.dims.clone(),
                    redraw_each_step: plan.redraw,
                    noise_bound: plan.noise_bound,
                };
                Some((
                    Attacker::new(neighbors.clone(), state_dim, cfg)?,
                    substream(opts.seed, &format!("attack/{id}")),
                ))
            }
        };
        let sel = match &opts.selection {
            None => None,
            Some(plan) => {
                let sigs: Vec<Signature> = neighbors
                    .iter()
                    .map(|&j| graph.node(j).expect("neighbor exists").signature())
                    .collect();
                let partition =
                    build_partition(plan.strategy, &sigs, plan.random_m, opts.seed, id)?;
                let q = if plan.q == 0 {
                    match (&opts.attack, attacker.as_ref()) {
                        (Some(_), Some((a, _))) => a.config().q,
                        _ => neighbors.len() / 2,
                    }
                } else {
                    plan.q
                };
                let cfg = DadsConfig {
                    q,
                    stage1: plan.stage1,
                    method: plan.method,
                    kind: plan.kind,
                    persist_weights: plan.persist_weights,
                };
                let streams = SelectionStreams {
                    stage1: (0..partition.subset_count())
                        .map(|g| substream(opts.seed, &format!("stage1/{id}/{g}")))
                        .collect(),
                    stage2: substream(opts.seed, &format!("stage2/{id}")),
                };
                let ads_partition = partition_balanced(&neighbors, 1)?;
                let (ads_state, ads_streams) = if plan.compare_ads {
                    (
                        Some(SelectionState::new(neighbors.clone())),
                        Some(SelectionStreams {
                            stage1: vec![substream(opts.seed, &format!("ads-stage1/{id}/0"))],
                            stage2: substream(opts.seed, &format!("ads-stage2/{id}")),
                        }),
                    )
                } else {
                    (None, None)
                };
                let shadow = plan
                    .paired_reference
                    .map(|method| (SelectionState::new(neighbors.clone()), method));
                let record = NodeSelection {
                    partition: partition.clone(),
                    q,
                    driver: SelectionTrace::default(),
                    ads: plan.compare_ads.then(SelectionTrace::default),
                    ratio_errors: shadow.is_some().then(Vec::new),
                    errors: opts.record_errors.then(Vec::new),
                };
                Some(SelCtx {
                    partition,
                    cfg,
                    state: SelectionState::new(neighbors.clone()),
                    shadow,
                    ads_state,
                    ads_partition,
                    streams,
                    ads_streams,
                    force_subset: plan.force_first_subset,
                    record,
                })
            }
        };
        contexts.push(NodeCtx {
            id,
            neighbors,
            attacker,
            sel,
        });
    }

    let mut rng_truth = substream(opts.seed, "truth");
    let mut rng_meas: Vec<ChaCha8Rng> = node_ids
        .iter()
        .map(|id| substream(opts.seed, &format!("meas/{id}")))
        .collect();

    let mut truth_trace = Vec::with_capacity(opts.t);
    let mut estimate_trace = Vec::with_capacity(opts.t);
    let mut x = graph.model.initial_state().clone_owned();

    for k in 0..opts.t {
        truth_trace.push(x.clone());
        let snapshot: Vec<DVector<f64>> =
            graph.nodes().iter().map(|n| n.estimate.clone()).collect();
        estimate_trace.push(snapshot.clone());
        let by_id: BTreeMap<SensorId, &DVector<f64>> = node_ids
            .iter()
            .zip(snapshot.iter())
            .map(|(&id, est)| (id, est))
            .collect();

        // Measurements for every node, each from its own stream.
        let mut measurements = Vec::with_capacity(node_ids.len());
        for (pos, node) in graph.nodes().iter().enumerate() {
            measurements.push(node.measure(&x, &mut rng_meas[pos])?);
        }

        // Attacks, selection, and the estimator update per receiving node.
        let mut next_estimates: Vec<Option<DVector<f64>>> = vec![None; node_ids.len()];
        for ctx in contexts.iter_mut() {
            let step_attack = match &mut ctx.attacker {
                Some((attacker, rng)) => {
                    attacker.step(rng)?;
                    let step = attacker.trace.steps.last().expect("stepped").clone();
                    if !opts.retain_attack_traces && attacker.trace.steps.len() > 1 {
                        let last = attacker.trace.steps.pop().expect("nonempty");
                        attacker.trace.steps.clear();
                        attacker.trace.steps.push(last);
                    }
                    Some(step)
                }
                None => None,
            };

            // What this receiver hears from each in-neighbor this tick.
            let mut received: BTreeMap<SensorId, DVector<f64>> = BTreeMap::new();
            for &j in &ctx.neighbors {
                let clean = (*by_id.get(&j).expect("neighbor estimate")).clone();
                let delivered = match &step_attack {
                    Some(step) => match step.signals.get(&j) {
                        Some(z) => clean + z,
                        None => clean,
                    },
                    None => clean,
                };
                received.insert(j, delivered);
            }

            let mut suspects: BTreeSet<SensorId> = BTreeSet::new();
            if let Some(sel) = &mut ctx.sel {
                let own = by_id.get(&ctx.id).expect("own estimate");
                let entries: Vec<(SensorId, DVector<f64>, Vec<bool>)> = ctx
                    .neighbors
                    .iter()
                    .map(|&j| {
                        let node = graph.node(j).expect("neighbor exists");
                        let diff = *own - received.get(&j).expect("received");
                        let masked = node.kalman_mask(&diff).expect("dims agree");
                        (j, masked, node.indicator().to_vec())
                    })
                    .collect();
                let errors = ErrorMatrix::new(entries)?;

                // Fixture pool: compromised members of the forced subset,
                // falling back to the whole subset.
                let forced_pool: Option<Vec<SensorId>> = if sel.force_subset > 0 {
                    let members = sel
                        .partition
                        .subsets
                        .get(sel.force_subset - 1)
                        .cloned()
                        .unwrap_or_default();
                    let compromised: Vec<SensorId> = match &step_attack {
                        Some(step) => members
                            .iter()
                            .copied()
                            .filter(|id| step.is_compromised(*id))
                            .collect(),
                        None => Vec::new(),
                    };
                    Some(if compromised.is_empty() {
                        members
                    } else {
                        compromised
                    })
                } else {
                    None
                };
                let forced = forced_pool.as_deref();

                match &mut sel.shadow {
                    Some((shadow_state, shadow_method)) => {
                        dads_select_paired(
                            &errors,
                            &sel.partition,
                            &mut sel.state,
                            shadow_state,
                            &sel.cfg,
                            *shadow_method,
                            &mut sel.streams,
                            forced,
                        )?;
                        let errs: Vec<f64> = (0..sel.partition.subset_count())
                            .map(|g| ratio_error(&sel.state, shadow_state, g).expect("paired"))
                            .collect();
                        sel.record
                            .ratio_errors
                            .as_mut()
                            .expect("ratio recording on")
                            .push(errs);
                    }
                    None => {
                        dads_select(
                            &errors,
                            &sel.partition,
                            &mut sel.state,
                            &sel.cfg,
                            &mut sel.streams,
                            forced,
                        )?;
                    }
                }
                record_step(&mut sel.record.driver, &sel.state, k);
                suspects = sel.state.last.suspects();

                if let (Some(ads_state), Some(ads_streams)) =
                    (&mut sel.ads_state, &mut sel.ads_streams)
                {
                    let ads_cfg = DadsConfig {
                        method: GainUpdateMethod::M5Full,
                        ..sel.cfg
                    };
                    dads_select(
                        &errors,
                        &sel.ads_partition,
                        ads_state,
                        &ads_cfg,
                        ads_streams,
                        None,
                    )?;
                    record_step(sel.record.ads.as_mut().expect("ads recording"), ads_state, k);
                }
                if let Some(store) = &mut sel.record.errors {
                    store.push(errors);
                }
            }

            let pos = node_ids.binary_search(&ctx.id).expect("node id");
            let next = graph.estimator_step(
                &est_cfg,
                ctx.id,
                &measurements[pos],
                &received,
                &suspects,
            )?;
            next_estimates[pos] = Some(next);
        }

        // Nodes without in-neighbors run the local estimator.
        for (pos, node) in graph.nodes().iter().enumerate() {
            if node.neighbors_in.is_empty() {
                let next = graph.estimator_step(
                    &est_cfg,
                    node.id,
                    &measurements[pos],
                    &BTreeMap::new(),
                    &BTreeSet::new(),
                )?;
                next_estimates[pos] = Some(next);
            }
        }

        // Tick barrier: publish all step-k+1 estimates at once.
        for (pos, next) in next_estimates.into_iter().enumerate() {
            let id = node_ids[pos];
            graph.node_mut(id).expect("node").estimate = next.expect("estimate computed");
        }
        x = graph.model.step_state(&x, &mut rng_truth)?;
    }

    let mut attackers = BTreeMap::new();
    let mut selections = BTreeMap::new();
    for ctx in contexts {
        if let Some((attacker, _)) = ctx.attacker {
            attackers.insert(ctx.id, attacker);
        }
        if let Some(mut sel) = ctx.sel {
            sel.record.driver.update_count = sel.state.update_count;
            if let (Some(ads), Some(state)) = (sel.record.ads.as_mut(), sel.ads_state.as_ref()) {
                ads.update_count = state.update_count;
            }
            selections.insert(ctx.id, sel.record);
        }
    }
    Ok(NetRun {
        node_ids,
        truth: truth_trace,
        estimates: estimate_trace,
        attackers,
        selections,
    })
}

fn record_step(trace: &mut SelectionTrace, state: &SelectionState<f64>, k: usize) {
    trace.selected.push(state.last.picks.clone());
    trace.per_subset.push(state.last.per_subset.clone());
    for (l, winners) in state.last.stage1_winners.iter().enumerate() {
        let pick = state.last.picks.get(l).copied();
        for (g, w) in winners.iter().enumerate() {
            if let Some((candidate, weight, p)) = w {
                trace.winner_rows.push(WinnerRow {
                    k,
                    l: l + 1,
                    subset: g + 1,
                    candidate: *candidate,
                    weight: *weight,
                    p: *p,
                    selected: pick == Some(*candidate),
                });
            }
        }
    }
}

/// Engine options derived from a scenario config for the standard run.
pub fn options_from_config(cfg: &ScenarioConfig) -> Result<EngineOptions, SimError> {
    let attack = cfg.attack.enabled.then(|| AttackPlan {
        q: cfg.attack.q,
        family: cfg.attack.family.to_core(),
        dims: cfg.attack.dims.iter().map(|&d| d - 1).collect(),
        redraw: cfg.attack.redraw,
        noise_bound: cfg.attack.noise_bound,
    });
    let selection = if cfg.selection.enabled {
        Some(SelectionPlan {
            q: cfg.selection.q,
            stage1: cfg.selection.stage1.to_core(),
            method: cfg.selection.method.to_core(),
            kind: cfg.selection.objective.to_core(),
            persist_weights: cfg.selection.persist_weights,
            strategy: cfg.partition.strategy.to_core(),
            random_m: cfg.partition.m,
            paired_reference: cfg.paired_reference()?,
            compare_ads: cfg.selection.compare_ads,
            force_first_subset: cfg.selection.force_first_subset,
        })
    } else {
        None
    };
    Ok(EngineOptions {
        t: cfg.steps(),
        seed: cfg.scenario.seed,
        consensus_weight: cfg.estimator.consensus_weight,
        exclude_suspects: cfg.estimator.exclude_suspects,
        attack,
        selection,
        retain_attack_traces: cfg.scenario.kind != ScenarioKind::Geometric500,
        record_errors: cfg.selection.enabled && cfg.scenario.kind != ScenarioKind::Geometric500,
    })
}

/// The three comparison cases of the secure-estimation experiment.
pub struct GeoOutcome {
    pub graph: NetworkGraph<f64>,
    pub no_attack: NetRun,
    pub dads: NetRun,
    pub no_detection: NetRun,
    pub curves: RmseCurves<f64>,
}

pub fn run_geometric(cfg: &ScenarioConfig) -> Result<GeoOutcome, SimError> {
    let graph = build_geometric500(cfg)?;
    let base = options_from_config(cfg)?;

    let no_attack_opts = EngineOptions {
        attack: None,
        selection: None,
        exclude_suspects: false,
        ..base.clone()
    };
    let dads_opts = EngineOptions {
        exclude_suspects: true,
        ..base.clone()
    };
    let no_detection_opts = EngineOptions {
        selection: None,
        exclude_suspects: false,
        ..base.clone()
    };

    let no_attack = run_network(&graph, &no_attack_opts)?;
    let dads = run_network(&graph, &dads_opts)?;
    let no_detection = run_network(&graph, &no_detection_opts)?;
    let curves = rmse_curves(
        &dads.truth,
        &no_attack.estimates,
        &dads.estimates,
        &no_detection.estimates,
    )?;
    Ok(GeoOutcome {
        graph,
        no_attack,
        dads,
        no_detection,
        curves,
    })
}

pub fn build_graph(cfg: &ScenarioConfig) -> Result<NetworkGraph<f64>, SimError> {
    match cfg.scenario.kind {
        ScenarioKind::Star100 => build_star100(),
        ScenarioKind::Geometric500 => build_geometric500(cfg),
        ScenarioKind::Custom => build_custom(cfg),
    }
}

/// Optimization-rate outcomes of one selecting node. The baseline's picks are
/// split across the same partition so its subset-average is comparable with
/// the distributed scheduler's.
pub struct NodeRates {
    pub node: SensorId,
    pub dads_subsets: SubsetRates<f64>,
    pub dads_total: RateOutcome<f64>,
    pub ads_subsets: Option<SubsetRates<f64>>,
    pub ads_total: Option<RateOutcome<f64>>,
}

/// Group whole-neighborhood picks by partition subset, step by step.
fn split_by_partition(
    selected: &[Vec<SensorId>],
    partition: &PartitionResult,
) -> Vec<Vec<Vec<SensorId>>> {
    let membership = partition.membership();
    selected
        .iter()
        .map(|picks| {
            let mut per = vec![Vec::new(); partition.subset_count()];
            for &id in picks {
                if let Some(&g) = membership.get(&id) {
                    per[g].push(id);
                }
            }
            per
        })
        .collect()
}

pub fn node_rates(run: &NetRun, node: SensorId) -> Result<NodeRates, SimError> {
    node_rates_with(run, node, ObjectiveKind::DimensionCoupled)
}

/// Optimization rates of one node's recorded run under an explicit objective.
pub fn node_rates_with(
    run: &NetRun,
    node: SensorId,
    kind: ObjectiveKind,
) -> Result<NodeRates, SimError> {
    let sel = run
        .selections
        .get(&node)
        .ok_or_else(|| SimError::Runtime(format!("node {node} ran no selection")))?;
    let errors = sel
        .errors
        .as_ref()
        .ok_or_else(|| SimError::Runtime("run did not record error matrices".into()))?;
    let dads_subsets =
        optimization_rate_subsets(&sel.driver.per_subset, errors, &sel.partition, kind)?;
    let dads_total = optimization_rate_total(&sel.driver.selected, errors, kind, sel.q)?;
    let (ads_subsets, ads_total) = match &sel.ads {
        Some(ads) => {
            let split = split_by_partition(&ads.selected, &sel.partition);
            (
                Some(optimization_rate_subsets(
                    &split,
                    errors,
                    &sel.partition,
                    kind,
                )?),
                Some(optimization_rate_total(&ads.selected, errors, kind, sel.q)?),
            )
        }
        None => (None, None),
    };
    Ok(NodeRates {
        node,
        dads_subsets,
        dads_total,
        ads_subsets,
        ads_total,
    })
}

/// One row of the occupancy sweep.
pub struct OccupancyRow {
    pub m: usize,
    pub d: usize,
    pub mean: f64,
    pub fraction: f64,
    pub mode: &'static str,
}

/// Analytic and Monte-Carlo occupancy over the full grid
/// (m in {2,4,5,10,20,30,40,50}, d in {1,6,...,96}, N = 100).
pub fn sweep_occupancy_rows(samples: usize, seed: u64) -> Result<Vec<OccupancyRow>, SimError> {
    let grid_m = [2usize, 4, 5, 10, 20, 30, 40, 50];
    let mut rows = Vec::new();
    let mut rng = substream(seed, "occupancy");
    for &m in &grid_m {
        for d in (1..=96).step_by(5) {
            let a: Occupancy<f64> = occupancy_analytic(100, m, d)?;
            rows.push(OccupancyRow {
                m,
                d,
                mean: a.mean,
                fraction: a.fraction,
                mode: "analytic",
            });
            let mc: Occupancy<f64> = occupancy_montecarlo(100, m, d, samples, &mut rng)?;
            rows.push(OccupancyRow {
                m,
                d,
                mean: mc.mean,
                fraction: mc.fraction,
                mode: "montecarlo",
            });
        }
    }
    Ok(rows)
}

/// Node whose neighborhood the `partition` subcommand reports on: the one
/// with the largest in-neighborhood (lowest id on ties).
pub fn focus_node(graph: &NetworkGraph<f64>) -> Option<SensorId> {
    graph
        .nodes()
        .iter()
        .filter(|n| !n.neighbors_in.is_empty())
        .max_by(|a, b| {
            a.neighbors_in
                .len()
                .cmp(&b.neighbors_in.len())
                .then(b.id.cmp(&a.id))
        })
        .map(|n| n.id)
}
