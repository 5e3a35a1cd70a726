//! Arena, trajectories and the direct (no network) simulation pipeline.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locator::{self, AnchorLayout, DistanceVector, Point, Position};
use crate::netsim::NetConfig;
use crate::pathloss::{self, NoiseConfig, PathLossParams, Shadowing};
use crate::{proximity_label, Agent};

pub const DEFAULT_SAMPLE_PERIOD_S: f64 = 0.1;
pub const STATIONARY_DURATION_S: f64 = 90.0;
pub const MOBILE_DURATION_S: f64 = 5.0;

pub const HUMAN_HOME: Point = Point::new(1.0, 0.0);
pub const ROBOT_HOME: Point = Point::new(2.0, 2.0);

fn default_period() -> f64 {
    DEFAULT_SAMPLE_PERIOD_S
}

fn default_params() -> [PathLossParams; 3] {
    [PathLossParams::default(); 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub human_path: Vec<Point>,
    pub robot_path: Vec<Point>,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_period")]
    pub sample_period: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub layout: AnchorLayout,
    /// Path-loss parameters of anchors 1, 2, 3.
    #[serde(default = "default_params")]
    pub params: [PathLossParams; 3],
    #[serde(default)]
    pub network: NetConfig,
}

impl ScenarioSpec {
    fn new(name: &str, human_path: Vec<Point>, robot_path: Vec<Point>, duration: f64) -> Self {
        Self {
            name: name.to_owned(),
            human_path,
            robot_path,
            duration,
            sample_period: DEFAULT_SAMPLE_PERIOD_S,
            noise: NoiseConfig::default(),
            layout: AnchorLayout::default(),
            params: default_params(),
            network: NetConfig::default(),
        }
    }

    pub fn with_noise(mut self, sigma_db: f64, seed: u64) -> Self {
        self.noise = NoiseConfig { sigma_db, seed };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(format!("{}: {m}", self.name)));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return bad(format!("sample_period must be positive, got {}", self.sample_period));
        }
        if self.frame_count() < 2 {
            return bad("duration must cover at least two samples".into());
        }
        self.layout.validate()?;
        self.noise.validate()?;
        for p in &self.params {
            p.validate()?;
        }
        self.network.validate()?;
        for (agent, path) in [(Agent::Human, &self.human_path), (Agent::Robot, &self.robot_path)] {
            if path.is_empty() {
                return bad(format!("{agent} path is empty"));
            }
            if let Some(w) = path.iter().find(|w| !self.layout.contains(w.x, w.y)) {
                return bad(format!("{agent} waypoint ({}, {}) is outside the arena", w.x, w.y));
            }
        }
        Ok(())
    }

    /// `floor(duration / period) + 1`; both endpoints are sampled.
    pub fn frame_count(&self) -> usize {
        (self.duration / self.sample_period + 1e-9).floor() as usize + 1
    }

    pub fn tick_time(&self, tick: usize) -> f64 {
        (tick as f64 * self.sample_period).min(self.duration)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// The four experiments: one stationary placement and three short approaches.
///
/// Mobile runs start from the stationary placements.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    vec![
        ScenarioSpec::new("stationary", vec![HUMAN_HOME], vec![ROBOT_HOME], STATIONARY_DURATION_S),
        ScenarioSpec::new(
            "scenario1",
            vec![HUMAN_HOME, Point::new(2.0, 0.5)],
            vec![ROBOT_HOME, Point::new(2.0, 1.0)],
            MOBILE_DURATION_S,
        ),
        ScenarioSpec::new(
            "scenario2",
            vec![HUMAN_HOME, Point::new(1.0, 1.5)],
            vec![ROBOT_HOME, Point::new(1.0, 2.0)],
            MOBILE_DURATION_S,
        ),
        ScenarioSpec::new(
            "scenario3",
            vec![HUMAN_HOME, Point::new(2.0, 1.0)],
            vec![ROBOT_HOME, Point::new(2.0, 1.0)],
            MOBILE_DURATION_S,
        ),
    ]
}

pub fn builtin(name: &str) -> Option<ScenarioSpec> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

/// Constant-speed position along `path` at time `t` of a `duration`-long walk.
pub fn true_position(path: &[Point], duration: f64, t: f64) -> Result<Point> {
    let Some(&first) = path.first() else {
        return Err(Error::Scenario("empty path".into()));
    };
    if !(t >= 0.0 && t <= duration) {
        return Err(Error::Scenario(format!("t = {t} outside [0, {duration}]")));
    }
    let total: f64 = path.windows(2).map(|w| w[0].distance(w[1])).sum();
    if path.len() == 1 || total == 0.0 {
        return Ok(first);
    }
    let mut remaining = total * (t / duration);
    for w in path.windows(2) {
        let len = w[0].distance(w[1]);
        if remaining <= len && len > 0.0 {
            let f = remaining / len;
            return Ok(Point::new(
                w[0].x + f * (w[1].x - w[0].x),
                w[0].y + f * (w[1].y - w[0].y),
            ));
        }
        remaining -= len;
    }
    Ok(*path.last().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub timestamp: f64,
    pub human_true: Position,
    pub robot_true: Position,
    pub true_separation: f64,
    pub true_label: u8,
}

impl GroundTruthFrame {
    pub fn new(timestamp: f64, human_true: Position, robot_true: Position) -> Self {
        let true_separation = locator::separation(&human_true, &robot_true);
        Self {
            timestamp,
            human_true,
            robot_true,
            true_separation,
            true_label: proximity_label(true_separation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedFrame {
    pub timestamp: f64,
    pub human: Position,
    pub robot: Position,
    pub separation: f64,
    /// Label implied by the estimated separation.
    pub label: u8,
}

impl EstimatedFrame {
    pub fn from_fixes(timestamp: f64, human: Position, robot: Position) -> Self {
        let separation = locator::separation(&human, &robot);
        Self {
            timestamp,
            human,
            robot,
            separation,
            label: proximity_label(separation),
        }
    }
}

/// What both agent nodes measure at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensedTick {
    pub tick: usize,
    pub truth: GroundTruthFrame,
    pub human: DistanceVector,
    pub robot: DistanceVector,
}

fn sense_agent(
    agent: Agent,
    t: f64,
    at: Point,
    spec: &ScenarioSpec,
    noise: &mut Shadowing,
) -> Result<DistanceVector> {
    let true_ranges = spec.layout.ranges_to(at);
    let mut d = [0.0; 3];
    for (i, (&r, params)) in true_ranges.iter().zip(&spec.params).enumerate() {
        let rssi = pathloss::distance_to_rssi(r.max(pathloss::MIN_DISTANCE_M), params, noise)?;
        d[i] = pathloss::rssi_to_distance(rssi, params)?;
    }
    DistanceVector::new(agent, t, d)
}

/// Ground truth plus both agents' range estimates for every tick.
///
/// Noise is drawn per tick in the order human anchors 1..3, robot anchors 1..3.
pub fn sense(spec: &ScenarioSpec) -> Result<Vec<SensedTick>> {
    spec.validate()?;
    let mut noise = Shadowing::new(spec.noise)?;
    (0..spec.frame_count())
        .map(|tick| {
            let t = spec.tick_time(tick);
            let mut inner = || -> Result<SensedTick> {
                let h = true_position(&spec.human_path, spec.duration, t)?;
                let r = true_position(&spec.robot_path, spec.duration, t)?;
                let truth = GroundTruthFrame::new(t, spec.layout.position(h.x, h.y), spec.layout.position(r.x, r.y));
                let human = sense_agent(Agent::Human, t, h, spec, &mut noise)?;
                let robot = sense_agent(Agent::Robot, t, r, spec, &mut noise)?;
                Ok(SensedTick { tick, truth, human, robot })
            };
            inner().map_err(|e| e.at_tick(tick, t))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub name: String,
    pub truth: Vec<GroundTruthFrame>,
    pub distances: Vec<(DistanceVector, DistanceVector)>,
    pub estimates: Vec<EstimatedFrame>,
}

impl ScenarioRun {
    pub fn rows(&self) -> Vec<DatasetRow> {
        self.truth
            .iter()
            .zip(&self.distances)
            .zip(&self.estimates)
            .map(|((g, (h, r)), e)| DatasetRow::new(g, h, r, e))
            .collect()
    }
}

/// Runs the sensing and trilateration pipeline without the network layer.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioRun> {
    let ticks = sense(spec)?;
    let mut run = ScenarioRun {
        name: spec.name.clone(),
        truth: Vec::with_capacity(ticks.len()),
        distances: Vec::with_capacity(ticks.len()),
        estimates: Vec::with_capacity(ticks.len()),
    };
    for s in ticks {
        let t = s.truth.timestamp;
        let fix = |d: &DistanceVector| locator::trilaterate(d, &spec.layout).map_err(|e| e.at_tick(s.tick, t));
        let (h, r) = (fix(&s.human)?, fix(&s.robot)?);
        run.truth.push(s.truth);
        run.distances.push((s.human, s.robot));
        run.estimates.push(EstimatedFrame::from_fixes(t, h, r));
    }
    Ok(run)
}

/// One line of the dataset CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub timestamp: f64,
    pub hd1: f64,
    pub hd2: f64,
    pub hd3: f64,
    pub rd1: f64,
    pub rd2: f64,
    pub rd3: f64,
    pub hx_est: f64,
    pub hy_est: f64,
    pub rx_est: f64,
    pub ry_est: f64,
    pub sep_est: f64,
    pub hx_true: f64,
    pub hy_true: f64,
    pub rx_true: f64,
    pub ry_true: f64,
    pub sep_true: f64,
    pub label: u8,
}

pub const DATASET_HEADER: &str = "timestamp,hd1,hd2,hd3,rd1,rd2,rd3,hx_est,hy_est,rx_est,ry_est,sep_est,hx_true,hy_true,rx_true,ry_true,sep_true,label";

impl DatasetRow {
    pub fn new(
        g: &GroundTruthFrame,
        h: &DistanceVector,
        r: &DistanceVector,
        e: &EstimatedFrame,
    ) -> Self {
        Self {
            timestamp: g.timestamp,
            hd1: h.d[0],
            hd2: h.d[1],
            hd3: h.d[2],
            rd1: r.d[0],
            rd2: r.d[1],
            rd3: r.d[2],
            hx_est: e.human.x,
            hy_est: e.human.y,
            rx_est: e.robot.x,
            ry_est: e.robot.y,
            sep_est: e.separation,
            hx_true: g.human_true.x,
            hy_true: g.human_true.y,
            rx_true: g.robot_true.x,
            ry_true: g.robot_true.y,
            sep_true: g.true_separation,
            label: g.true_label,
        }
    }

    /// Estimation-side features, in model order.
    pub fn features(&self) -> [f64; 11] {
        [
            self.hd1, self.hd2, self.hd3, self.rd1, self.rd2, self.rd3, self.hx_est, self.hy_est,
            self.rx_est, self.ry_est, self.sep_est,
        ]
    }
}

pub fn write_dataset<W: Write>(writer: W, rows: &[DatasetRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<DatasetRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != DATASET_HEADER {
        return Err(Error::Data {
            row: 0,
            reason: format!("unexpected header {:?}", header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<DatasetRow>().enumerate() {
        let row = rec?;
        if row.label > 1 {
            return Err(Error::Data { row: i + 1, reason: format!("label {} is not binary", row.label) });
        }
        rows.push(row);
    }
    Ok(rows)
}
