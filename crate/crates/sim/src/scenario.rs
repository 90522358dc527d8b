//! Scenario construction: the 100-neighbor star, the 500-sensor geometric
//! network, and custom networks from configuration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use adsched_core::model::{NetworkGraph, SensorNode, SystemModel};
use adsched_core::rng::substream;
use adsched_core::{Error as CoreError, SensorId};

use crate::config::{ModelSection, ScenarioConfig, SensorSection};
use crate::SimError;

/// Vehicle-monitoring plant: positions integrate velocities at 50 Hz.
pub fn agv_model(process_cov: f64, process_bound: f64) -> SystemModel<f64> {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0,
            0.0,
            1.0 / 50.0,
            0.0,
            0.0,
            1.0,
            0.0,
            1.0 / 50.0,
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
        ],
    );
    SystemModel::new(
        a,
        DMatrix::identity(4, 4) * process_cov,
        process_bound,
        DVector::from_row_slice(&[50.0, 0.0, 5.0, 0.0]),
    )
    .expect("static plant construction")
}

/// One of the four single-row measurement types (1-based).
pub fn sensor_type_row(kind: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(1, 4);
    c[(0, kind - 1)] = 1.0;
    c
}

fn typed_sensor(id: SensorId, kind: usize, model: &SystemModel<f64>) -> Result<SensorNode<f64>, CoreError> {
    SensorNode::new(
        id,
        model,
        sensor_type_row(kind),
        DMatrix::from_element(1, 1, 0.5),
        0.05,
    )
}

/// Sensor type (1..=4) assigned to each neighbor id in the star scenario:
/// 1-25 observe type 1, 26-50 type 2, 51-75 type 3, 76-100 type 4.
pub fn star_type_of(id: SensorId) -> usize {
    (((id - 1) / 25) + 1) as usize
}

/// Central sensor 0 plus 100 typed neighbors, all transmitting to the center.
pub fn build_star100() -> Result<NetworkGraph<f64>, SimError> {
    let model = agv_model(0.5, 0.05);
    let mut nodes = vec![typed_sensor(0, 1, &model)?];
    let mut edges = Vec::with_capacity(100);
    for id in 1..=100u32 {
        nodes.push(typed_sensor(id, star_type_of(id), &model)?);
        edges.push((id, 0));
    }
    Ok(NetworkGraph::new(model, nodes, &edges, None)?)
}

/// Uniform random deployment with typed sensors, undirected links within the
/// communication radius, and directed rebalancing: every node keeps, per
/// sensor type, its `t_i` nearest in-neighbors where `t_i` is the scarcest
/// type count in range, so each in-neighborhood observes every type equally
/// often. Layouts where some node cannot reach all four types are redrawn up
/// to `max_retries` times.
pub fn build_geometric500(cfg: &ScenarioConfig) -> Result<NetworkGraph<f64>, SimError> {
    let n = cfg.geometric.n;
    let area = cfg.geometric.area;
    let radius = cfg.geometric.radius;
    let mut rng = substream(cfg.scenario.seed, "layout");
    let mut last_failure: Option<SensorId> = None;
    for _ in 0..cfg.geometric.max_retries.max(1) {
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(0.0..area), rng.random_range(0.0..area)])
            .collect();
        let kinds: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4usize)).collect();
        match try_layout(&positions, &kinds, radius)? {
            Ok(edges) => {
                let model = agv_model(0.5, 0.05);
                let mut nodes = Vec::with_capacity(n);
                for (i, &kind) in kinds.iter().enumerate() {
                    nodes.push(typed_sensor(i as SensorId + 1, kind, &model)?);
                }
                return Ok(NetworkGraph::new(model, nodes, &edges, Some(positions))?);
            }
            Err(node) => last_failure = Some(node),
        }
    }
    Err(SimError::Runtime(format!(
        "geometric layout failed after {} attempts: node {} cannot reach all four sensor types",
        cfg.geometric.max_retries.max(1),
        last_failure.unwrap_or_default(),
    )))
}

/// Directed edges of one candidate layout, or the first node that cannot see
/// all four types.
#[allow(clippy::type_complexity)]
fn try_layout(
    positions: &[[f64; 2]],
    kinds: &[usize],
    radius: f64,
) -> Result<std::result::Result<Vec<(SensorId, SensorId)>, SensorId>, SimError> {
    let n = positions.len();
    let mut edges = Vec::new();
    for i in 0..n {
        // In-range neighbors of i, grouped by type with their distances.
        let mut by_type: [Vec<(f64, SensorId)>; 4] = Default::default();
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist <= radius {
                by_type[kinds[j] - 1].push((dist, j as SensorId + 1));
            }
        }
        let t = by_type.iter().map(Vec::len).min().unwrap_or(0);
        if t == 0 {
            return Ok(Err(i as SensorId + 1));
        }
        for group in by_type.iter_mut() {
            // Nearest first; ties broken by id for determinism.
            group.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            for &(_, j) in group.iter().take(t) {
                edges.push((j, i as SensorId + 1));
            }
        }
    }
    Ok(Ok(edges))
}

fn matrix_from_rows(rows: &[Vec<f64>], context: &str) -> Result<DMatrix<f64>, SimError> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(SimError::Config(format!("{context}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(SimError::Config(format!("{context}: ragged matrix rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

fn model_from_section(section: &ModelSection) -> Result<SystemModel<f64>, SimError> {
    Ok(SystemModel::new(
        matrix_from_rows(&section.transition, "model.transition")?,
        matrix_from_rows(&section.process_cov, "model.process_cov")?,
        section.process_bound,
        DVector::from_row_slice(&section.initial_state),
    )?)
}

fn sensor_from_section(
    section: &SensorSection,
    model: &SystemModel<f64>,
) -> Result<SensorNode<f64>, SimError> {
    Ok(SensorNode::new(
        section.id,
        model,
        matrix_from_rows(&section.meas_matrix, "sensor.meas_matrix")?,
        matrix_from_rows(&section.meas_cov, "sensor.meas_cov")?,
        section.meas_bound,
    )?)
}

/// Network described by the `[model]`, `[[sensors]]`, and `edges` sections.
pub fn build_custom(cfg: &ScenarioConfig) -> Result<NetworkGraph<f64>, SimError> {
    let model_section = cfg
        .model
        .as_ref()
        .ok_or_else(|| SimError::Config("custom scenario requires [model]".into()))?;
    let sensors = cfg
        .sensors
        .as_ref()
        .ok_or_else(|| SimError::Config("custom scenario requires [[sensors]]".into()))?;
    let model = model_from_section(model_section)?;
    let nodes = sensors
        .iter()
        .map(|s| sensor_from_section(s, &model))
        .collect::<Result<Vec<_>, _>>()?;
    let edges: Vec<(SensorId, SensorId)> = cfg
        .edges
        .clone()
        .unwrap_or_default()
        .into_iter()
        .map(|[from, to]| (from, to))
        .collect();
    Ok(NetworkGraph::new(model, nodes, &edges, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use adsched_core::partition::partition_grassmann;

    #[test]
    fn star100_layout_and_partition_fixture() {
        let graph = build_star100().unwrap();
        assert_eq!(graph.nodes().len(), 101);
        let center = graph.node(0).unwrap();
        assert_eq!(center.neighbors_in.len(), 100);
        // Every sensor starts at the true initial state.
        for node in graph.nodes() {
            assert_eq!(node.estimate, graph.model.initial_state().clone_owned());
        }
        // Neighbors have no in-edges: the star transmits inward only.
        for id in 1..=100u32 {
            assert!(graph.node(id).unwrap().neighbors_in.is_empty());
        }
        let sigs: Vec<_> = (1..=100u32)
            .map(|id| graph.node(id).unwrap().signature())
            .collect();
        let part = partition_grassmann(&sigs).unwrap();
        assert_eq!(part.subset_count(), 4);
        assert_eq!(part.subsets[1], (26..=50).collect::<Vec<_>>());
    }
}
