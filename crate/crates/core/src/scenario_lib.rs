//! Bundled properties and a kinematic trace generator for the parking-exit
//! (P1) and obstacle-in-lane (P2) scenarios.
//!
//! The road runs along +x. Lanes are 3.5 m wide: the ego's own lane covers
//! y in [-3.5, 0] and the oncoming lane y in [0, 3.5]. Actors move piecewise
//! linearly between waypoints and keep a constant heading. Relations are
//! derived from geometry in every frame:
//!
//! - `a isIn r` when a's axis-aligned footprint overlaps region r (strictly),
//! - `b inFrontOf a` when b lies ahead of a along a's heading with a lateral
//!   offset below half a lane width ([`in_front_of`]),
//! - `lane isPartOf road` from the static map.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asg_dsl::parse_asg;
use crate::object_model::ObjectModel;
use crate::scene_graph::{AbstractSceneGraph, ConcreteSceneGraph, SceneError, Value};

pub const LANE_WIDTH: f64 = 3.5;
/// 30 km/h in m/s.
pub const URBAN_SPEED: f64 = 30.0 / 3.6;
pub const DEFAULT_DT: f64 = 0.1;

const VEHICLE_HALF_LENGTH: f64 = 2.25;
const VEHICLE_HALF_WIDTH: f64 = 0.9;
const OBSTACLE_HALF_LENGTH: f64 = 1.0;
const OBSTACLE_HALF_WIDTH: f64 = 0.5;

/// Bundled `.asg` sources as (file stem, text).
pub const PROPERTY_FILES: [(&str, &str); 9] = [
    (
        "obstacle_ahead",
        include_str!("../assets/properties/obstacle_ahead.asg"),
    ),
    ("P1-1", include_str!("../assets/properties/P1-1.asg")),
    ("P1-2", include_str!("../assets/properties/P1-2.asg")),
    ("P1-3", include_str!("../assets/properties/P1-3.asg")),
    ("P2-1", include_str!("../assets/properties/P2-1.asg")),
    ("P2-2", include_str!("../assets/properties/P2-2.asg")),
    ("P2-3", include_str!("../assets/properties/P2-3.asg")),
    ("P2-4", include_str!("../assets/properties/P2-4.asg")),
    ("P2-5", include_str!("../assets/properties/P2-5.asg")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    P1,
    P2,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 2] = [ScenarioId::P1, ScenarioId::P2];

    pub fn phase_names(self) -> &'static [&'static str] {
        match self {
            ScenarioId::P1 => &["P1-1", "P1-2", "P1-3"],
            ScenarioId::P2 => &["P2-1", "P2-2", "P2-3", "P2-4", "P2-5"],
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::P1 => "P1",
            ScenarioId::P2 => "P2",
        })
    }
}

impl FromStr for ScenarioId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "P1" => Ok(ScenarioId::P1),
            "P2" => Ok(ScenarioId::P2),
            other => Err(ScenarioError::UnknownScenario(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected P1 or P2)")]
    UnknownScenario(String),
    #[error("unknown perturbation `{key}` for {scenario}")]
    UnknownPerturbation { scenario: ScenarioId, key: String },
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("generated scene is invalid: {0}")]
    Scene(#[from] SceneError),
}

/// Parses a bundled property by name (`obstacle_ahead`, `P1-1`, ...).
pub fn builtin_asg(name: &str) -> Option<AbstractSceneGraph> {
    let (_, text) = PROPERTY_FILES.iter().find(|(stem, _)| *stem == name)?;
    Some(parse_asg(text, ObjectModel::bundled()).expect("bundled properties are valid"))
}

pub fn obstacle_ahead_asg() -> AbstractSceneGraph {
    builtin_asg("obstacle_ahead").expect("obstacle_ahead is bundled")
}

/// The phase properties of a scenario, in phase order.
pub fn builtin_asgs(scenario: ScenarioId) -> Vec<AbstractSceneGraph> {
    scenario
        .phase_names()
        .iter()
        .map(|name| builtin_asg(name).expect("phase properties are bundled"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: String,
    pub class: String,
    pub half_length: f64,
    pub half_width: f64,
    /// Unit heading; only the sign of x matters for footprints.
    pub heading: [f64; 2],
    /// Sorted by time. Before the first and after the last waypoint the actor
    /// stands still at that waypoint.
    pub waypoints: Vec<Waypoint>,
}

/// Static map element. Lanes are unbounded along x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub class: String,
    pub x: Option<[f64; 2]>,
    pub y: [f64; 2],
    /// Road this region is part of.
    pub part_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseWindow {
    pub name: String,
    pub start: f64,
    pub end: f64,
}

impl PhaseWindow {
    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

/// Caps a gap at `threshold + offset` inside the gap's phase window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub key: String,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shift {
    /// Move the actor along x, keeping its side of the ego.
    Longitudinal,
    /// Move the actor along y towards the ego, keeping its regions.
    Lateral,
}

/// What a perturbation key controls: the gap between the ego and `actor`
/// constrained by `threshold` in `phase`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSpec {
    pub key: &'static str,
    pub phase: &'static str,
    pub threshold: f64,
    pub actor: &'static str,
    shift: Shift,
}

const P1_GAPS: [GapSpec; 1] = [GapSpec {
    key: "rear_gap",
    phase: "P1-2",
    threshold: 15.0,
    actor: "rear",
    shift: Shift::Longitudinal,
}];

const P2_GAPS: [GapSpec; 5] = [
    GapSpec {
        key: "obstacle_gap",
        phase: "P2-1",
        threshold: 5.0,
        actor: "obstacle",
        shift: Shift::Longitudinal,
    },
    GapSpec {
        key: "oncoming_gap",
        phase: "P2-2",
        threshold: 30.0,
        actor: "oncoming",
        shift: Shift::Longitudinal,
    },
    // The other vehicle in P2 is the oncoming one.
    GapSpec {
        key: "rear_gap",
        phase: "P2-2",
        threshold: 30.0,
        actor: "oncoming",
        shift: Shift::Longitudinal,
    },
    GapSpec {
        key: "pass_gap",
        phase: "P2-3",
        threshold: 2.0,
        actor: "obstacle",
        shift: Shift::Lateral,
    },
    GapSpec {
        key: "return_gap",
        phase: "P2-4",
        threshold: 20.0,
        actor: "oncoming",
        shift: Shift::Longitudinal,
    },
];

pub fn gap_specs(scenario: ScenarioId) -> &'static [GapSpec] {
    match scenario {
        ScenarioId::P1 => &P1_GAPS,
        ScenarioId::P2 => &P2_GAPS,
    }
}

pub fn gap_spec(scenario: ScenarioId, key: &str) -> Option<&'static GapSpec> {
    gap_specs(scenario).iter().find(|g| g.key == key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub scenario: ScenarioId,
    pub duration: f64,
    pub dt: f64,
    pub ego: String,
    pub actors: Vec<Actor>,
    pub regions: Vec<Region>,
    /// Contiguous windows covering [0, duration].
    pub phases: Vec<PhaseWindow>,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

fn vehicle(id: &str, heading: f64, waypoints: &[(f64, f64, f64)]) -> Actor {
    Actor {
        id: id.into(),
        class: "Vehicle".into(),
        half_length: VEHICLE_HALF_LENGTH,
        half_width: VEHICLE_HALF_WIDTH,
        heading: [heading, 0.0],
        waypoints: waypoints
            .iter()
            .map(|&(t, x, y)| Waypoint { t, x, y })
            .collect(),
    }
}

fn lane(id: &str, y: [f64; 2], road: Option<&str>) -> Region {
    Region {
        id: id.into(),
        class: "Lane".into(),
        x: None,
        y,
        part_of: road.map(String::from),
    }
}

fn windows(bounds: &[(&str, f64)], duration: f64) -> Vec<PhaseWindow> {
    bounds
        .iter()
        .enumerate()
        .map(|(i, &(name, start))| PhaseWindow {
            name: name.into(),
            start,
            end: bounds.get(i + 1).map_or(duration, |b| b.1),
        })
        .collect()
}

impl ScenarioScript {
    pub fn nominal(scenario: ScenarioId) -> Self {
        match scenario {
            ScenarioId::P1 => Self::parking_exit(),
            ScenarioId::P2 => Self::obstacle_in_lane(),
        }
    }

    /// Ego parked in a bay on the right of a single lane, its footprint
    /// touching the lane marking. It pulls out at t = 3 s, ahead of a vehicle
    /// approaching from behind.
    fn parking_exit() -> Self {
        let duration = 12.0;
        let v = URBAN_SPEED;
        ScenarioScript {
            scenario: ScenarioId::P1,
            duration,
            dt: DEFAULT_DT,
            ego: "ego".into(),
            actors: vec![
                vehicle(
                    "ego",
                    1.0,
                    &[
                        (0.0, 23.0, -0.85),
                        (3.0, 23.0, -0.85),
                        (6.0, 32.0, 1.75),
                        (12.0, 32.0 + 6.0 * v, 1.75),
                    ],
                ),
                vehicle(
                    "rear",
                    1.0,
                    &[(0.0, -60.0, 1.75), (12.0, -60.0 + 12.0 * v, 1.75)],
                ),
            ],
            regions: vec![
                lane("lane", [0.0, LANE_WIDTH], None),
                Region {
                    id: "spot".into(),
                    class: "ParkingSpot".into(),
                    x: Some([20.0, 26.0]),
                    y: [-2.5, 0.0],
                    part_of: None,
                },
            ],
            phases: windows(&[("P1-1", 0.0), ("P1-2", 3.0), ("P1-3", 4.0)], duration),
            perturbations: Vec::new(),
        }
    }

    /// Ego drives at 30 km/h towards an obstacle in its lane, overtakes it on
    /// the oncoming lane and returns, while a vehicle approaches on the
    /// oncoming lane.
    fn obstacle_in_lane() -> Self {
        let duration = 20.0;
        let v = URBAN_SPEED;
        let ego_path: Vec<(f64, f64, f64)> = [
            (0.0, -1.75),
            (5.1, -1.75),
            (8.6, 1.75),
            (12.0, 1.75),
            (15.5, -1.75),
            (duration, -1.75),
        ]
        .iter()
        .map(|&(t, y)| (t, v * t, y))
        .collect();
        let obstacle = Actor {
            id: "obstacle".into(),
            class: "Static".into(),
            half_length: OBSTACLE_HALF_LENGTH,
            half_width: OBSTACLE_HALF_WIDTH,
            heading: [1.0, 0.0],
            waypoints: vec![Waypoint {
                t: 0.0,
                x: 80.0,
                y: -1.125,
            }],
        };
        ScenarioScript {
            scenario: ScenarioId::P2,
            duration,
            dt: DEFAULT_DT,
            ego: "ego".into(),
            actors: vec![
                vehicle("ego", 1.0, &ego_path),
                obstacle,
                vehicle(
                    "oncoming",
                    -1.0,
                    &[(0.0, 275.0, 1.75), (duration, 275.0 - duration * v, 1.75)],
                ),
            ],
            regions: vec![
                lane("lane_own", [-LANE_WIDTH, 0.0], Some("road")),
                lane("lane_oncoming", [0.0, LANE_WIDTH], Some("road")),
                Region {
                    id: "road".into(),
                    class: "Road".into(),
                    x: None,
                    y: [-LANE_WIDTH, LANE_WIDTH],
                    part_of: None,
                },
            ],
            phases: windows(
                &[
                    ("P2-1", 0.0),
                    ("P2-2", 6.0),
                    ("P2-3", 6.9),
                    ("P2-4", 13.2),
                    ("P2-5", 13.3),
                ],
                duration,
            ),
            perturbations: Vec::new(),
        }
    }

    /// Adds a perturbation after checking the key exists for the scenario.
    pub fn perturbed(mut self, key: &str, offset: f64) -> Result<Self, ScenarioError> {
        if gap_spec(self.scenario, key).is_none() {
            return Err(ScenarioError::UnknownPerturbation {
                scenario: self.scenario,
                key: key.to_string(),
            });
        }
        self.perturbations.push(Perturbation {
            key: key.to_string(),
            offset,
        });
        Ok(self)
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseWindow> {
        self.phases.iter().find(|p| p.name == name)
    }

    /// Name of the phase whose window contains `t`.
    pub fn phase_at(&self, t: f64) -> Option<&str> {
        self.phases
            .iter()
            .find(|p| p.contains(t))
            .map(|p| p.name.as_str())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidScript(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad(format!(
                "duration must be non-negative, got {}",
                self.duration
            ));
        }
        if !self.phases.is_empty() {
            let mut expected = 0.0;
            for p in &self.phases {
                if p.start != expected || p.end < p.start {
                    return bad(format!(
                        "phase windows must partition [0, {}]; `{}` starts at {}",
                        self.duration, p.name, p.start
                    ));
                }
                expected = p.end;
            }
            if expected != self.duration {
                return bad(format!(
                    "phase windows end at {expected}, not at {}",
                    self.duration
                ));
            }
        }
        if !self.actors.iter().any(|a| a.id == self.ego) {
            return bad(format!("no actor for ego `{}`", self.ego));
        }
        for a in &self.actors {
            if a.waypoints.is_empty() {
                return bad(format!("actor `{}` has no waypoints", a.id));
            }
            if a.waypoints.windows(2).any(|w| w[1].t <= w[0].t) {
                return bad(format!(
                    "waypoints of `{}` are not strictly increasing in time",
                    a.id
                ));
            }
        }
        for p in &self.perturbations {
            let spec = gap_spec(self.scenario, &p.key).ok_or_else(|| {
                ScenarioError::UnknownPerturbation {
                    scenario: self.scenario,
                    key: p.key.clone(),
                }
            })?;
            if self.phase(spec.phase).is_none() {
                return bad(format!(
                    "perturbation `{}` needs phase {}",
                    p.key, spec.phase
                ));
            }
            if !self.actors.iter().any(|a| a.id == spec.actor) {
                return bad(format!(
                    "perturbation `{}` needs actor `{}`",
                    p.key, spec.actor
                ));
            }
        }
        Ok(())
    }

    /// Frame timestamps: multiples of `dt` below `duration`, rounded to 1 µs.
    pub fn timestamps(&self) -> Vec<f64> {
        let n = (self.duration / self.dt).round() as usize;
        (0..n)
            .map(|k| (k as f64 * self.dt * 1e6).round() / 1e6)
            .filter(|&t| t < self.duration)
            .collect()
    }
}

/// Position, heading and speed of an actor in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: [f64; 2],
    pub heading: [f64; 2],
    pub speed: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Pose {
    fn x_extent(&self) -> [f64; 2] {
        let hx = if self.heading[0].abs() >= self.heading[1].abs() {
            self.half_length
        } else {
            self.half_width
        };
        [self.position[0] - hx, self.position[0] + hx]
    }

    fn y_extent(&self) -> [f64; 2] {
        let hy = if self.heading[0].abs() >= self.heading[1].abs() {
            self.half_width
        } else {
            self.half_length
        };
        [self.position[1] - hy, self.position[1] + hy]
    }
}

fn overlaps(a: [f64; 2], b: [f64; 2]) -> bool {
    a[0] < b[1] && b[0] < a[1]
}

/// Whether the footprint of `pose` overlaps `region`.
pub fn is_in(pose: &Pose, region: &Region) -> bool {
    overlaps(pose.y_extent(), region.y) && region.x.is_none_or(|x| overlaps(pose.x_extent(), x))
}

/// Whether `b` is in front of `a`: ahead along a's heading, with a lateral
/// offset below half a lane width.
pub fn in_front_of(a: &Pose, b: &Pose) -> bool {
    let d = [b.position[0] - a.position[0], b.position[1] - a.position[1]];
    let [hx, hy] = a.heading;
    let ahead = d[0] * hx + d[1] * hy;
    let lateral = (d[1] * hx - d[0] * hy).abs();
    ahead > 0.0 && lateral < LANE_WIDTH / 2.0
}

impl Actor {
    pub fn pose_at(&self, t: f64) -> Pose {
        let wps = &self.waypoints;
        let (position, speed) = match wps.iter().position(|w| w.t > t) {
            Some(0) => ([wps[0].x, wps[0].y], 0.0),
            None => {
                let w = wps[wps.len() - 1];
                ([w.x, w.y], 0.0)
            }
            Some(i) => {
                let (a, b) = (wps[i - 1], wps[i]);
                let span = b.t - a.t;
                let f = (t - a.t) / span;
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                ([a.x + f * dx, a.y + f * dy], dx.hypot(dy) / span)
            }
        };
        Pose {
            position,
            heading: self.heading,
            speed,
            half_length: self.half_length,
            half_width: self.half_width,
        }
    }
}

fn apply_gap(spec: &GapSpec, offset: f64, ego: &Pose, actor: &mut Pose, regions: &[Region]) {
    let target = spec.threshold + offset;
    let d = [
        actor.position[0] - ego.position[0],
        actor.position[1] - ego.position[1],
    ];
    if d[0].hypot(d[1]) <= target || target < 0.0 {
        return;
    }
    match spec.shift {
        Shift::Longitudinal => {
            if d[1].abs() >= target {
                return;
            }
            let side = if d[0] < 0.0 { -1.0 } else { 1.0 };
            actor.position[0] = ego.position[0] + side * (target * target - d[1] * d[1]).sqrt();
        }
        Shift::Lateral => {
            if d[0].abs() >= target {
                return;
            }
            let side = if d[1] < 0.0 { -1.0 } else { 1.0 };
            let mut moved = *actor;
            moved.position[1] = ego.position[1] + side * (target * target - d[0] * d[0]).sqrt();
            let keeps_regions = regions.iter().all(|r| !is_in(actor, r) || is_in(&moved, r));
            if keeps_regions {
                *actor = moved;
            }
        }
    }
}

/// Generates the scene stream of `script`, validated against `om`.
pub fn generate_trace(
    script: &ScenarioScript,
    om: &ObjectModel,
) -> Result<Vec<ConcreteSceneGraph>, ScenarioError> {
    script.validate()?;
    let gaps: Vec<(&GapSpec, f64, &PhaseWindow)> = script
        .perturbations
        .iter()
        .map(|p| {
            let spec = gap_spec(script.scenario, &p.key).expect("validated");
            (spec, p.offset, script.phase(spec.phase).expect("validated"))
        })
        .collect();
    let ego_index = script
        .actors
        .iter()
        .position(|a| a.id == script.ego)
        .expect("validated");

    script
        .timestamps()
        .into_iter()
        .map(|t| {
            let mut poses: Vec<Pose> = script.actors.iter().map(|a| a.pose_at(t)).collect();
            for &(spec, offset, window) in &gaps {
                if !window.contains(t) {
                    continue;
                }
                if let Some(i) = script.actors.iter().position(|a| a.id == spec.actor) {
                    let ego = poses[ego_index];
                    apply_gap(spec, offset, &ego, &mut poses[i], &script.regions);
                }
            }
            scene(script, t, &poses, om)
        })
        .collect()
}

fn scene(
    script: &ScenarioScript,
    t: f64,
    poses: &[Pose],
    om: &ObjectModel,
) -> Result<ConcreteSceneGraph, ScenarioError> {
    let mut b = ConcreteSceneGraph::builder(t, script.ego.clone());
    for region in &script.regions {
        b.node(region.id.clone(), region.class.clone());
        if let Some(road) = &region.part_of {
            b.edge(region.id.clone(), "isPartOf", road.clone());
        }
    }
    for (actor, pose) in script.actors.iter().zip(poses) {
        b.node(actor.id.clone(), actor.class.clone())
            .attr(&actor.id, "velocity", Value::Real(pose.speed))
            .attr(&actor.id, "position", Value::Vec2(pose.position));
        for region in &script.regions {
            if region.class != "Road" && is_in(pose, region) {
                b.edge(actor.id.clone(), "isIn", region.id.clone());
            }
        }
    }
    for (a, pa) in script.actors.iter().zip(poses) {
        for (other, po) in script.actors.iter().zip(poses) {
            if a.id != other.id && in_front_of(pa, po) {
                b.edge(other.id.clone(), "inFrontOf", a.id.clone());
            }
        }
    }
    Ok(b.build(om)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asg_dsl::serialize_asg;
    use crate::monitor::{monitor_stream, Cause, Options, Outcome, PhaseAutomaton, Verdict};
    use crate::predicate::euclidean;

    fn om() -> &'static ObjectModel {
        ObjectModel::bundled()
    }

    fn trace(script: &ScenarioScript) -> Vec<ConcreteSceneGraph> {
        generate_trace(script, om()).unwrap()
    }

    fn frame_at(trace: &[ConcreteSceneGraph], t: f64) -> &ConcreteSceneGraph {
        trace
            .iter()
            .find(|s| (s.timestamp() - t).abs() < 1e-9)
            .unwrap()
    }

    #[test]
    fn builtin_phase_counts() {
        assert_eq!(builtin_asgs(ScenarioId::P1).len(), 3);
        assert_eq!(builtin_asgs(ScenarioId::P2).len(), 5);
        assert!("P3".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn p1_1_is_standing_still_in_spot() {
        let asg = builtin_asg("P1-1").unwrap();
        assert_eq!(asg.class_of("spot"), Some("ParkingSpot"));
        assert!(asg
            .edges()
            .iter()
            .any(|e| e.src == "ego" && e.rel == "isIn" && e.dst == "spot"));
        assert_eq!(asg.predicates()[0].to_string(), "ego.velocity == 0");
    }

    #[test]
    fn p2_thresholds() {
        let text = |n: &str| {
            builtin_asg(n)
                .unwrap()
                .predicates()
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
        };
        let p22 = text("P2-2");
        assert!(p22.contains(&"dist(ego, oncoming) >= 30".to_string()));
        assert!(p22.contains(&"dist(ego, obstacle) >= 5".to_string()));
        assert!(text("P2-3").contains(&"dist(ego, obstacle) >= 2".to_string()));
        let serialized = serialize_asg(&builtin_asg("P2-2").unwrap());
        assert!(serialized.contains("30") && serialized.contains(">= 5"));
    }

    #[test]
    fn zero_duration_is_empty() {
        let mut s = ScenarioScript::nominal(ScenarioId::P1);
        s.duration = 0.0;
        s.phases.iter_mut().for_each(|p| {
            p.start = 0.0;
            p.end = 0.0;
        });
        assert!(trace(&s).is_empty());
    }

    #[test]
    fn invalid_scripts_are_rejected() {
        let mut s = ScenarioScript::nominal(ScenarioId::P2);
        s.dt = 0.0;
        assert!(generate_trace(&s, om()).is_err());
        let mut s = ScenarioScript::nominal(ScenarioId::P2);
        s.phases[1].start = 5.0;
        assert!(generate_trace(&s, om()).is_err());
        assert!(ScenarioScript::nominal(ScenarioId::P1)
            .perturbed("pass_gap", -1.0)
            .is_err());
    }

    #[test]
    fn frame_counts() {
        assert_eq!(trace(&ScenarioScript::nominal(ScenarioId::P1)).len(), 120);
        assert_eq!(trace(&ScenarioScript::nominal(ScenarioId::P2)).len(), 200);
    }

    #[test]
    fn in_front_of_implies_positive_distance() {
        for id in ScenarioId::ALL {
            for csg in trace(&ScenarioScript::nominal(id)) {
                for e in csg.edges().iter().filter(|e| e.rel == "inFrontOf") {
                    let pos = |n: &str| match csg.node(n).unwrap().attributes["position"] {
                        Value::Vec2(p) => p,
                        _ => unreachable!(),
                    };
                    assert!(euclidean(pos(&e.src), pos(&e.dst)) > 0.0);
                }
            }
        }
    }

    #[test]
    fn p1_spot_frames() {
        let tr = trace(&ScenarioScript::nominal(ScenarioId::P1));
        let parked = frame_at(&tr, 1.0);
        assert!(parked.has_edge("ego", "isIn", "spot"));
        assert!(parked.has_edge("rear", "isIn", "lane"));
        let merging = frame_at(&tr, 3.5);
        assert!(merging.has_edge("ego", "isIn", "spot") && merging.has_edge("ego", "isIn", "lane"));
        assert!(!merging.has_edge("ego", "inFrontOf", "rear"));
        let driving = frame_at(&tr, 8.0);
        assert!(!driving.has_edge("ego", "isIn", "spot"));
        assert!(driving.has_edge("ego", "inFrontOf", "rear"));
    }

    fn phase_verdicts(id: ScenarioId, script: &ScenarioScript) -> Vec<Vec<Verdict>> {
        let asgs = builtin_asgs(id);
        let tr = trace(script);
        let flat = monitor_stream(om(), &asgs, &tr, Options::default()).unwrap();
        flat.chunks(asgs.len()).map(<[Verdict]>::to_vec).collect()
    }

    /// The automaton's phase matches the script's window in every frame and
    /// no frame is flagged.
    fn assert_nominal_follows_windows(id: ScenarioId) {
        let script = ScenarioScript::nominal(id);
        let mut pa = PhaseAutomaton::new(id.phase_names().iter().map(|s| s.to_string()).collect());
        for frame in phase_verdicts(id, &script) {
            pa.step_verdicts(&frame);
            let t = frame[0].t;
            assert_eq!(pa.current_phase(), script.phase_at(t), "at t={t}");
            assert!(
                frame[pa.current()].is_satisfied(),
                "at t={t}: {:?}",
                frame[pa.current()]
            );
        }
        assert!(pa.accepted(), "{pa:?}");
    }

    #[test]
    fn p1_nominal_follows_windows() {
        assert_nominal_follows_windows(ScenarioId::P1);
    }

    #[test]
    fn p2_nominal_follows_windows() {
        assert_nominal_follows_windows(ScenarioId::P2);
    }

    #[test]
    fn p2_rear_gap_breaks_the_thirty_metre_threshold() {
        let script = ScenarioScript::nominal(ScenarioId::P2)
            .perturbed("rear_gap", -20.0)
            .unwrap();
        let frames = phase_verdicts(ScenarioId::P2, &script);
        assert!(frames
            .iter()
            .any(|f| f[1].outcome == Outcome::Violated(Cause::PredicateFailed(0))));
        let tr = trace(&script);
        let f = frame_at(&tr, 6.5);
        let pos = |n: &str| match f.node(n).unwrap().attributes["position"] {
            Value::Vec2(p) => p,
            _ => unreachable!(),
        };
        assert!((euclidean(pos("ego"), pos("oncoming")) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn script_json_round_trip() {
        let s = ScenarioScript::nominal(ScenarioId::P2)
            .perturbed("pass_gap", -0.5)
            .unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: ScenarioScript = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
