//! Scenario configuration: a nested key/value text file (TOML) whose keys are
//! all present in the `--print-default-config` dump. Matrices are row-major
//! nested lists.

use serde::{Deserialize, Serialize};

use adsched_core::attack::AttackFamily;
use adsched_core::partition::Strategy;
use adsched_core::selection::{GainUpdateMethod, ObjectiveKind, Stage1Method};

use crate::SimError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub estimator: EstimatorSection,
    pub partition: PartitionSection,
    pub attack: AttackSection,
    pub selection: SelectionSection,
    pub geometric: GeometricSection,
    /// Custom-scenario plant; ignored for the built-in scenarios.
    pub model: Option<ModelSection>,
    /// Custom-scenario sensors; ignored for the built-in scenarios.
    pub sensors: Option<Vec<SensorSection>>,
    /// Custom-scenario directed edges `[from, to]` (from's estimate flows to).
    pub edges: Option<Vec<[u32; 2]>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSection::default(),
            estimator: EstimatorSection::default(),
            partition: PartitionSection::default(),
            attack: AttackSection::default(),
            selection: SelectionSection::default(),
            geometric: GeometricSection::default(),
            model: None,
            sensors: None,
            edges: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// star100 | geometric500 | custom
    pub kind: ScenarioKind,
    /// Steps to simulate; 0 picks the scenario default (500 / 100).
    pub t: usize,
    pub seed: u64,
    pub out: String,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Star100,
            t: 0,
            seed: 42,
            out: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Star100,
    Geometric500,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// Consensus weight lambda; 0 = auto (0.5 / max in-degree).
    pub consensus_weight: f64,
    pub exclude_suspects: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            consensus_weight: 0.0,
            exclude_suspects: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSection {
    /// grassmann | grassmann_improved | min_mutual | random | balanced_cardinality
    pub strategy: StrategyKey,
    /// Subset count for the random/balanced strategies.
    pub m: usize,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            strategy: StrategyKey::GrassmannImproved,
            m: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKey {
    Grassmann,
    GrassmannImproved,
    MinMutual,
    Random,
    BalancedCardinality,
}

impl StrategyKey {
    pub fn to_core(self) -> Strategy {
        match self {
            StrategyKey::Grassmann => Strategy::Grassmann,
            StrategyKey::GrassmannImproved => Strategy::GrassmannImproved,
            StrategyKey::MinMutual => Strategy::MinMutual,
            StrategyKey::Random => Strategy::Random,
            StrategyKey::BalancedCardinality => Strategy::BalancedCardinality,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub enabled: bool,
    /// Compromised sensors per neighborhood; 0 = floor(|N_i|/2) per node.
    pub q: usize,
    /// stealthy | unstealthy
    pub family: FamilyKey,
    /// One-based state dimensions the attacker tampers with.
    pub dims: Vec<usize>,
    /// Redraw the compromised set each step.
    pub redraw: bool,
    /// Estimation-noise bound the amplitude bands scale with.
    pub noise_bound: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            enabled: true,
            q: 40,
            family: FamilyKey::Unstealthy,
            dims: vec![3, 4],
            redraw: true,
            noise_bound: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKey {
    Stealthy,
    Unstealthy,
}

impl FamilyKey {
    pub fn to_core(self) -> AttackFamily {
        match self {
            FamilyKey::Stealthy => AttackFamily::Stealthy,
            FamilyKey::Unstealthy => AttackFamily::Unstealthy,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    pub enabled: bool,
    /// Suspects to select per neighborhood; 0 = match the attack budget.
    pub q: usize,
    /// probability | ranking
    pub stage1: Stage1Key,
    /// m1 | m2 | m3 | m4 | m5
    pub method: MethodKey,
    /// stacked_norm | dimension_coupled
    pub objective: ObjectiveKey,
    /// Keep multiplicative weights across steps instead of resetting.
    pub persist_weights: bool,
    /// Also run the non-partitioned baseline on the same inputs.
    pub compare_ads: bool,
    /// Shadow gain-update method tracked over the same picks ("" = off).
    pub paired_reference: String,
    /// Force each step's first pick into this subset (1-based; 0 = off).
    pub force_first_subset: usize,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            enabled: true,
            q: 0,
            stage1: Stage1Key::Ranking,
            method: MethodKey::M1,
            objective: ObjectiveKey::DimensionCoupled,
            persist_weights: true,
            compare_ads: true,
            paired_reference: String::new(),
            force_first_subset: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Key {
    Probability,
    Ranking,
}

impl Stage1Key {
    pub fn to_core(self) -> Stage1Method {
        match self {
            Stage1Key::Probability => Stage1Method::Probability,
            Stage1Key::Ranking => Stage1Method::Ranking,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKey {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl MethodKey {
    pub fn to_core(self) -> GainUpdateMethod {
        match self {
            MethodKey::M1 => GainUpdateMethod::M1PartitionSubset,
            MethodKey::M2 => GainUpdateMethod::M2PartitionRelated,
            MethodKey::M3 => GainUpdateMethod::M3RandomSubset,
            MethodKey::M4 => GainUpdateMethod::M4RandomRelated,
            MethodKey::M5 => GainUpdateMethod::M5Full,
        }
    }

    pub fn parse(label: &str) -> Result<Self, SimError> {
        match label {
            "m1" => Ok(MethodKey::M1),
            "m2" => Ok(MethodKey::M2),
            "m3" => Ok(MethodKey::M3),
            "m4" => Ok(MethodKey::M4),
            "m5" => Ok(MethodKey::M5),
            other => Err(SimError::Config(format!(
                "unknown gain-update method `{other}` (expected m1..m5)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKey {
    StackedNorm,
    DimensionCoupled,
}

impl ObjectiveKey {
    pub fn to_core(self) -> ObjectiveKind {
        match self {
            ObjectiveKey::StackedNorm => ObjectiveKind::StackedNorm,
            ObjectiveKey::DimensionCoupled => ObjectiveKind::DimensionCoupled,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometricSection {
    pub n: usize,
    /// Side length of the square deployment area, meters.
    pub area: f64,
    /// Communication radius, meters.
    pub radius: f64,
    /// Layout redraws allowed before construction fails.
    pub max_retries: usize,
}

impl Default for GeometricSection {
    fn default() -> Self {
        Self {
            n: 500,
            area: 200.0,
            radius: 30.0,
            max_retries: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Row-major transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// Row-major process covariance.
    pub process_cov: Vec<Vec<f64>>,
    pub process_bound: f64,
    pub initial_state: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub id: u32,
    /// Row-major measurement matrix.
    pub meas_matrix: Vec<Vec<f64>>,
    /// Row-major measurement covariance.
    pub meas_cov: Vec<Vec<f64>>,
    pub meas_bound: f64,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| SimError::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Steps to run, resolving the scenario default.
    pub fn steps(&self) -> usize {
        if self.scenario.t > 0 {
            return self.scenario.t;
        }
        match self.scenario.kind {
            ScenarioKind::Star100 => 500,
            ScenarioKind::Geometric500 => 100,
            ScenarioKind::Custom => 100,
        }
    }

    pub fn paired_reference(&self) -> Result<Option<GainUpdateMethod>, SimError> {
        if self.selection.paired_reference.is_empty() {
            return Ok(None);
        }
        Ok(Some(
            MethodKey::parse(&self.selection.paired_reference)?.to_core(),
        ))
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.estimator.consensus_weight < 0.0 {
            return Err(SimError::Config(
                "estimator.consensus_weight must be nonnegative (0 = auto)".into(),
            ));
        }
        if self.attack.noise_bound < 0.0 {
            return Err(SimError::Config("attack.noise_bound must be nonnegative".into()));
        }
        if self.attack.dims.iter().any(|&d| d == 0) {
            return Err(SimError::Config("attack.dims are one-based (>= 1)".into()));
        }
        if self.partition.m == 0 {
            return Err(SimError::Config("partition.m must be at least 1".into()));
        }
        if self.geometric.n == 0 || self.geometric.area <= 0.0 || self.geometric.radius <= 0.0 {
            return Err(SimError::Config("geometric section must be positive".into()));
        }
        self.paired_reference()?;
        if self.scenario.kind == ScenarioKind::Custom {
            if self.model.is_none() || self.sensors.is_none() {
                return Err(SimError::Config(
                    "custom scenario requires [model] and [[sensors]] sections".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_lists_named_keys() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml();
        for key in [
            "kind", "t", "seed", "out", "consensus_weight", "exclude_suspects", "strategy",
            "enabled", "q", "family", "dims", "redraw", "noise_bound", "stage1", "method",
            "objective", "persist_weights", "compare_ads", "paired_reference",
            "force_first_subset", "n", "area", "radius", "max_retries",
        ] {
            assert!(text.contains(key), "default dump missing key `{key}`:\n{text}");
        }
        let back = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(back.scenario.seed, cfg.scenario.seed);
        assert_eq!(back.attack.dims, cfg.attack.dims);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ScenarioConfig::from_toml("nonsense = true").is_err());
        let bad_dim = r#"
[attack]
dims = [0]
"#;
        assert!(ScenarioConfig::from_toml(bad_dim).is_err());
        let bad_method = r#"
[selection]
paired_reference = "m9"
"#;
        assert!(ScenarioConfig::from_toml(bad_method).is_err());
    }

    #[test]
    fn scenario_defaults_resolve_steps() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(cfg.steps(), 500);
        cfg.scenario.kind = ScenarioKind::Geometric500;
        assert_eq!(cfg.steps(), 100);
        cfg.scenario.t = 7;
        assert_eq!(cfg.steps(), 7);
    }
}
