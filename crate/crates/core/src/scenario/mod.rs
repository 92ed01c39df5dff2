//! Declarative experiment configuration and Monte-Carlo execution.
//!
//! Four scenarios are built in: two sensor-network consistency tests (a
//! ten-node static estimation cascade and a five-node dynamic star), a
//! three-radar surveillance simulation with local PDA trackers feeding a
//! fusion center, and a scalar experiment tracing optimized fusion weights.
//! Every numeric default is overridable through the JSON-serializable
//! config; `run` executes the Monte-Carlo harness in parallel with
//! per-run RNG streams derived from `(seed, run index)`.

mod consistency;
mod report;
mod scalar;
mod surveillance;

pub use report::{
    csv_document, write_report, EllipseRecord, FuserReport, MetricPoint, MetricSeries, RunReport,
    CSV_FORMAT_VERSION,
};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionMethod;

/// Which experiment a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Consistency1,
    Consistency2,
    Surveillance,
    ScalarWeight,
}

impl ScenarioKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::Consistency1 => "consistency1",
            ScenarioKind::Consistency2 => "consistency2",
            ScenarioKind::Surveillance => "surveillance",
            ScenarioKind::ScalarWeight => "scalar-weight",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "consistency1" => Ok(ScenarioKind::Consistency1),
            "consistency2" => Ok(ScenarioKind::Consistency2),
            "surveillance" => Ok(ScenarioKind::Surveillance),
            "scalar-weight" | "scalar_weight" | "scalar" => Ok(ScenarioKind::ScalarWeight),
            other => Err(Error::InvalidArgument(format!("unknown scenario '{other}'"))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Directed estimate-flow topology of a sensor network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeGraph {
    pub node_count: usize,
    /// Directed `(from, to)` pairs, node indices 0-based.
    pub edges: Vec<(usize, usize)>,
}

impl NodeGraph {
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let graph = Self { node_count, edges };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::InvalidScenario("graph has no nodes".into()));
        }
        for &(from, to) in &self.edges {
            if from >= self.node_count || to >= self.node_count {
                return Err(Error::InvalidScenario(format!(
                    "edge ({from}, {to}) outside 0..{}",
                    self.node_count
                )));
            }
            if from == to {
                return Err(Error::InvalidScenario(format!("self-loop at node {from}")));
            }
        }
        self.topo_order()?;
        Ok(())
    }

    /// Nodes feeding directly into `node`, sorted by index.
    pub fn inbound(&self, node: usize) -> Vec<usize> {
        let mut sources: Vec<usize> = self
            .edges
            .iter()
            .filter(|&&(_, to)| to == node)
            .map(|&(from, _)| from)
            .collect();
        sources.sort_unstable();
        sources
    }

    /// Topological order via Kahn's algorithm; errors on a cycle.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let mut indegree = vec![0usize; self.node_count];
        for &(_, to) in &self.edges {
            indegree[to] += 1;
        }
        let mut queue: Vec<usize> = (0..self.node_count).filter(|&n| indegree[n] == 0).collect();
        queue.sort_unstable();
        let mut order = Vec::with_capacity(self.node_count);
        let mut head = 0;
        while head < queue.len() {
            let n = queue[head];
            head += 1;
            order.push(n);
            let mut next: Vec<usize> = self
                .edges
                .iter()
                .filter(|&&(from, _)| from == n)
                .map(|&(_, to)| to)
                .collect();
            next.sort_unstable();
            for to in next {
                indegree[to] -= 1;
                if indegree[to] == 0 {
                    queue.push(to);
                }
            }
        }
        if order.len() != self.node_count {
            return Err(Error::InvalidScenario("graph contains a cycle".into()));
        }
        Ok(order)
    }

    /// The unique node without outbound edges, if exactly one exists.
    pub fn sink(&self) -> Result<usize> {
        let mut has_out = vec![false; self.node_count];
        for &(from, _) in &self.edges {
            has_out[from] = true;
        }
        let sinks: Vec<usize> = (0..self.node_count).filter(|&n| !has_out[n]).collect();
        match sinks.as_slice() {
            [s] => Ok(*s),
            _ => Err(Error::InvalidScenario(format!(
                "expected exactly one sink node, found {}",
                sinks.len()
            ))),
        }
    }
}

/// Linear-Gaussian dynamics shared by all nodes of a consistency test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDynamics {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// A sensor node's linear measurement model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Configuration of the network consistency tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    /// Measurement steps before the fusion cascade (1 for the static test).
    pub steps: usize,
    pub dynamics: Option<LinearDynamics>,
    pub nodes: Vec<NodeSpec>,
    pub graph: NodeGraph,
}

/// Configuration of the scalar weight-trace experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarConfig {
    /// Correlation between process and measurement noise.
    pub rho: f64,
    pub process_noise_var: f64,
    pub meas_noise_var: f64,
    pub steps: usize,
    pub prior_mean: f64,
    pub prior_var: f64,
}

/// A geodetic surface point in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    pub const fn new(lat_deg: f64, lon_deg: f64) -> Self {
        Self { lat_deg, lon_deg }
    }
}

/// A surveillance target: constant-rate great-arc motion between two
/// surface points over the scenario duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: u32,
    pub start: GeoPoint,
    pub end: GeoPoint,
}

/// Configuration of the three-radar surveillance scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveillanceConfig {
    pub scan_period_s: f64,
    pub fusion_period_s: f64,
    pub duration_s: f64,
    /// Continuous white-noise acceleration intensity of the tracking model.
    pub process_noise_intensity: f64,
    pub sigma_range_m: f64,
    pub sigma_bearing_deg: f64,
    pub coverage_m: f64,
    pub detection_probability: f64,
    /// Clutter density per meter-radian of measurement space.
    pub clutter_density: f64,
    /// Measurement-gate mass for the local PDA trackers.
    pub gate_mass: f64,
    /// Track-to-track association gate mass (chi-square, 4 dof).
    pub t2t_gate_mass: f64,
    /// Initiation pairing gate after subtracting measurement-noise spread.
    pub max_init_speed_m_s: f64,
    pub max_speed_m_s: f64,
    /// Distance beyond which a global track no longer counts as covering a
    /// target; such samples are excluded from metrics.
    pub loss_radius_m: f64,
    /// Fusion cycles a global track may go unassociated before removal.
    pub global_coast_limit: usize,
    pub radars: Vec<GeoPoint>,
    pub targets: Vec<TargetSpec>,
    /// Target ids excluded from metric aggregation.
    pub excluded_targets: Vec<u32>,
    /// Targets inside every radar's coverage (best fusion payoff).
    pub category_a: Vec<u32>,
    /// Targets covered by a single radar (fusion cannot help much).
    pub category_c: Vec<u32>,
}

/// A fully specified experiment: scenario kind, Monte-Carlo size, fusers
/// under test, and the kind-specific parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub mc_runs: usize,
    pub seed: u64,
    pub fusers: Vec<FusionMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<ScalarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surveillance: Option<SurveillanceConfig>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_runs == 0 {
            return Err(Error::InvalidScenario("mc_runs must be at least 1".into()));
        }
        if self.fusers.is_empty() {
            return Err(Error::InvalidScenario("fusers must be nonempty".into()));
        }
        match self.kind {
            ScenarioKind::Consistency1 | ScenarioKind::Consistency2 => {
                let c = self.consistency.as_ref().ok_or_else(|| {
                    Error::InvalidScenario("consistency section missing".into())
                })?;
                c.validate()
            }
            ScenarioKind::ScalarWeight => {
                let s = self
                    .scalar
                    .as_ref()
                    .ok_or_else(|| Error::InvalidScenario("scalar section missing".into()))?;
                for fuser in &self.fusers {
                    if matches!(
                        fuser,
                        FusionMethod::Centralized | FusionMethod::KnownPrior
                    ) {
                        return Err(Error::InvalidScenario(format!(
                            "fuser {fuser} not applicable to the scalar experiment"
                        )));
                    }
                }
                s.validate()
            }
            ScenarioKind::Surveillance => {
                let s = self.surveillance.as_ref().ok_or_else(|| {
                    Error::InvalidScenario("surveillance section missing".into())
                })?;
                for fuser in &self.fusers {
                    if matches!(
                        fuser,
                        FusionMethod::Centralized | FusionMethod::KnownPrior
                    ) {
                        return Err(Error::InvalidScenario(format!(
                            "fuser {fuser} cannot run at a track-fusion center"
                        )));
                    }
                }
                s.validate()
            }
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

impl ConsistencyConfig {
    fn validate(&self) -> Result<()> {
        let dim = self.prior_mean.len();
        if self.prior_cov.nrows() != dim || self.prior_cov.ncols() != dim {
            return Err(Error::InvalidScenario(
                "prior covariance shape does not match prior mean".into(),
            ));
        }
        if self.steps == 0 {
            return Err(Error::InvalidScenario("steps must be at least 1".into()));
        }
        if self.nodes.len() != self.graph.node_count {
            return Err(Error::InvalidScenario(format!(
                "{} node specs for a {}-node graph",
                self.nodes.len(),
                self.graph.node_count
            )));
        }
        self.graph.validate()?;
        self.graph.sink()?;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.h.ncols() != dim || node.h.nrows() != node.r.nrows() || !node.r.is_square() {
                return Err(Error::InvalidScenario(format!(
                    "node {i} measurement model shapes inconsistent"
                )));
            }
        }
        if let Some(dyn_) = &self.dynamics {
            if dyn_.f.nrows() != dim || !dyn_.f.is_square() || dyn_.q.nrows() != dim {
                return Err(Error::InvalidScenario(
                    "dynamics shape does not match state dimension".into(),
                ));
            }
        }
        Ok(())
    }
}

impl ScalarConfig {
    fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidScenario(format!(
                "correlation {} outside [-1, 1]",
                self.rho
            )));
        }
        if self.process_noise_var <= 0.0 || self.meas_noise_var <= 0.0 || self.prior_var <= 0.0 {
            return Err(Error::InvalidScenario("variances must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidScenario("steps must be at least 1".into()));
        }
        Ok(())
    }
}

impl SurveillanceConfig {
    fn validate(&self) -> Result<()> {
        if self.scan_period_s <= 0.0 || self.fusion_period_s <= 0.0 || self.duration_s <= 0.0 {
            return Err(Error::InvalidScenario("periods must be positive".into()));
        }
        let ratio = self.fusion_period_s / self.scan_period_s;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::InvalidScenario(
                "fusion period must be a positive multiple of the scan period".into(),
            ));
        }
        if self.radars.is_empty() {
            return Err(Error::InvalidScenario("at least one radar required".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidScenario("at least one target required".into()));
        }
        let mut ids: Vec<u32> = self.targets.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.targets.len() {
            return Err(Error::InvalidScenario("duplicate target ids".into()));
        }
        if !(self.gate_mass > 0.0 && self.gate_mass < 1.0)
            || !(self.t2t_gate_mass > 0.0 && self.t2t_gate_mass < 1.0)
        {
            return Err(Error::InvalidScenario("gate masses must be in (0, 1)".into()));
        }
        if self.loss_radius_m <= 0.0 || self.max_init_speed_m_s <= 0.0 {
            return Err(Error::InvalidScenario(
                "loss radius and initiation speed must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Scan count over the whole duration (including the scan at t = 0).
    pub fn scan_count(&self) -> usize {
        (self.duration_s / self.scan_period_s).floor() as usize + 1
    }

    /// Scans between consecutive fusion instants.
    pub fn scans_per_fusion(&self) -> usize {
        (self.fusion_period_s / self.scan_period_s).round() as usize
    }
}

/// Ten-node static estimation cascade: every node shares one prior, takes
/// one linear measurement, and estimates flow through a fixed DAG into the
/// final node, where consistency is evaluated.
pub fn build_consistency1() -> ScenarioConfig {
    let n = 10;
    let nodes = (1..=n)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 * (i as f64 / n as f64);
            NodeSpec {
                h: DMatrix::from_row_slice(2, 2, &[a.sin(), a.cos(), a.cos(), a.sin()]),
                r: DMatrix::identity(2, 2) * 0.2,
            }
        })
        .collect();
    let graph = NodeGraph {
        node_count: n,
        edges: vec![
            (0, 3),
            (1, 4),
            (2, 5),
            (3, 6),
            (4, 6),
            (5, 7),
            (6, 8),
            (7, 8),
            (8, 9),
        ],
    };
    ScenarioConfig {
        kind: ScenarioKind::Consistency1,
        mc_runs: 5000,
        seed: 42,
        fusers: vec![
            FusionMethod::Naive,
            FusionMethod::Ci,
            FusionMethod::Ici,
            FusionMethod::HmdGa,
            FusionMethod::Centralized,
        ],
        consistency: Some(ConsistencyConfig {
            prior_mean: DVector::zeros(2),
            prior_cov: DMatrix::identity(2, 2) * 2.0,
            steps: 1,
            dynamics: None,
            nodes,
            graph,
        }),
        scalar: None,
        surveillance: None,
    }
}

/// Five-node dynamic star: all nodes filter the same linear-Gaussian truth
/// for five steps from a shared prior, then send their estimates to the
/// last node for fusion.
pub fn build_consistency2() -> ScenarioConfig {
    let r_a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.2]);
    let r_b = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.5]);
    let nodes = (0..5)
        .map(|i| NodeSpec {
            h: DMatrix::identity(2, 2),
            r: if i % 2 == 0 { r_a.clone() } else { r_b.clone() },
        })
        .collect();
    let graph = NodeGraph {
        node_count: 5,
        edges: vec![(0, 4), (1, 4), (2, 4), (3, 4)],
    };
    ScenarioConfig {
        kind: ScenarioKind::Consistency2,
        mc_runs: 5000,
        seed: 42,
        fusers: vec![
            FusionMethod::Naive,
            FusionMethod::Ci,
            FusionMethod::Ici,
            FusionMethod::HmdGa,
            FusionMethod::Centralized,
        ],
        consistency: Some(ConsistencyConfig {
            prior_mean: DVector::zeros(2),
            prior_cov: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
            steps: 5,
            dynamics: Some(LinearDynamics {
                f: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
                q: DMatrix::identity(2, 2) * 0.5,
            }),
            nodes,
            graph,
        }),
        scalar: None,
        surveillance: None,
    }
}

/// Scalar random-walk experiment tracing each fuser's optimized weight when
/// fusing the prediction with the current measurement under correlated
/// process and measurement noise.
pub fn build_scalar_weight() -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::ScalarWeight,
        mc_runs: 500,
        seed: 42,
        fusers: vec![FusionMethod::Ci, FusionMethod::Ici, FusionMethod::HmdGa],
        consistency: None,
        scalar: Some(ScalarConfig {
            rho: 0.5,
            process_noise_var: 1.0,
            meas_noise_var: 1.0,
            steps: 50,
            prior_mean: 0.0,
            prior_var: 2.0,
        }),
        surveillance: None,
    }
}

/// Three-radar, twenty-target surveillance scenario with local PDA
/// trackers in clutter and a fusion center collocated with the first radar.
pub fn build_surveillance() -> ScenarioConfig {
    let radars = vec![
        GeoPoint::new(59.713_869_4, -55.267_609_3),
        GeoPoint::new(57.539_900_8, -57.655_152_2),
        GeoPoint::new(56.632_056_4, -52.104_272),
    ];
    let endpoints: [(f64, f64, f64, f64); 20] = [
        (59.6104, -52.6939, 59.9352, -52.7611),
        (57.7699, -59.1922, 58.0822, -58.7635),
        (60.7648, -55.762, 60.8607, -56.3676),
        (57.7025, -54.7059, 57.3769, -54.7036),
        (59.4254, -54.4498, 59.7284, -54.5691),
        (59.1483, -51.2977, 59.4869, -51.3718),
        (58.8561, -58.484, 58.6288, -58.495),
        (59.831, -58.3974, 59.6367, -58.0819),
        (59.5306, -53.1629, 59.5036, -53.5418),
        (58.8028, -54.3803, 58.6656, -53.5222),
        (57.8132, -52.6504, 57.676, -51.8147),
        (57.4636, -58.9469, 57.5906, -59.8504),
        (57.2096, -52.6824, 57.7325, -52.5499),
        (59.9093, -56.8477, 59.8108, -57.9123),
        (57.5181, -56.2302, 58.1104, -56.6123),
        (58.3548, -56.4447, 58.0948, -56.8321),
        (57.8268, -49.5721, 57.55, -50.3705),
        (60.2969, -49.9242, 60.6296, -49.3978),
        (57.6451, -59.8337, 57.988, -59.1956),
        (60.6533, -51.4683, 61.1832, -51.9363),
    ];
    let targets = endpoints
        .iter()
        .enumerate()
        .map(|(i, &(lat0, lon0, lat1, lon1))| TargetSpec {
            id: i as u32 + 1,
            start: GeoPoint::new(lat0, lon0),
            end: GeoPoint::new(lat1, lon1),
        })
        .collect();
    ScenarioConfig {
        kind: ScenarioKind::Surveillance,
        mc_runs: 25,
        seed: 42,
        fusers: vec![FusionMethod::Ci, FusionMethod::Ici, FusionMethod::HmdGa],
        consistency: None,
        scalar: None,
        surveillance: Some(SurveillanceConfig {
            scan_period_s: 2.0,
            fusion_period_s: 10.0,
            duration_s: 4537.0,
            process_noise_intensity: 0.15,
            sigma_range_m: 50.0,
            sigma_bearing_deg: 2.0,
            coverage_m: 300_000.0,
            detection_probability: 0.99,
            clutter_density: 1e-6,
            gate_mass: 0.95,
            t2t_gate_mass: 0.99,
            max_init_speed_m_s: 60.0,
            max_speed_m_s: 30.0,
            loss_radius_m: 500.0,
            global_coast_limit: 6,
            radars,
            targets,
            excluded_targets: vec![18],
            category_a: vec![4, 10, 15],
            category_c: vec![3, 6, 9, 17, 20],
        }),
    }
}

/// Execute a scenario and aggregate its Monte-Carlo metrics.
///
/// Deterministic for a fixed config: per-run RNG streams come from
/// `(seed, run index)` and aggregation folds runs in index order. Run
/// failures are counted and reported; more than 1% aborts the scenario.
pub fn run(config: &ScenarioConfig) -> Result<RunReport> {
    config.validate()?;
    match config.kind {
        ScenarioKind::Consistency1 | ScenarioKind::Consistency2 => {
            consistency::run_consistency(config)
        }
        ScenarioKind::ScalarWeight => scalar::run_scalar(config),
        ScenarioKind::Surveillance => surveillance::run_surveillance(config),
    }
}

/// Fraction of failed runs above which a scenario aborts.
const RUN_FAILURE_LIMIT: f64 = 0.01;

pub(crate) struct RunOutcomes<T> {
    /// Successful runs in run-index order.
    pub ok: Vec<T>,
    pub failures: usize,
    pub first_failure: Option<String>,
}

/// Execute `per_run` for every run index in parallel, collect successes in
/// index order, and enforce the failure-rate limit.
pub(crate) fn collect_runs<T, F>(runs: usize, per_run: F) -> Result<RunOutcomes<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..runs).into_par_iter().map(&per_run).collect();
    let mut ok = Vec::with_capacity(runs);
    let mut failures = 0;
    let mut first_failure = None;
    for (idx, result) in results.into_iter().enumerate() {
        match result {
            Ok(value) => ok.push(value),
            Err(err) => {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(format!("run {idx}: {err}"));
                }
            }
        }
    }
    if failures as f64 > RUN_FAILURE_LIMIT * runs as f64 {
        return Err(Error::TooManyRunFailures {
            failures,
            runs,
            limit_percent: RUN_FAILURE_LIMIT * 100.0,
            first: first_failure.unwrap_or_default(),
        });
    }
    Ok(RunOutcomes {
        ok,
        failures,
        first_failure,
    })
}
