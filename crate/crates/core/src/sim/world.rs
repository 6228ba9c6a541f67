use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::substream;
use crate::grid::SemanticClass;

/// Speed at or below which an agent counts as static.
pub const V_STATIC: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Footprint {
    pub fn for_class(class: SemanticClass) -> Footprint {
        let (length, width) = match class {
            SemanticClass::Car | SemanticClass::EgoVehicle => (4.5, 1.9),
            SemanticClass::OtherVehicle => (9.0, 2.5),
            SemanticClass::Bicyclist => (1.8, 0.6),
            SemanticClass::Pedestrian => (0.6, 0.6),
            _ => (1.0, 1.0),
        };
        Footprint { length, width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub class: SemanticClass,
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from world `+x`.
    pub heading: f64,
    /// Meters per second, never negative.
    pub speed: f64,
    /// Radians per second.
    pub turn_rate: f64,
    pub footprint: Footprint,
}

impl AgentState {
    pub fn new(class: SemanticClass, x: f64, y: f64, heading: f64, speed: f64) -> Self {
        AgentState { class, x, y, heading, speed: speed.max(0.0), turn_rate: 0.0, footprint: Footprint::for_class(class) }
    }

    pub fn with_turn_rate(mut self, turn_rate: f64) -> Self {
        self.turn_rate = turn_rate;
        self
    }

    pub fn is_moving(&self) -> bool {
        self.speed > V_STATIC
    }

    /// Unicycle update: rotate first, then advance along the new heading.
    pub fn advanced(&self, dt: f64) -> AgentState {
        let mut next = self.clone();
        next.heading = self.heading + self.turn_rate * dt;
        next.x += self.speed * dt * next.heading.cos();
        next.y += self.speed * dt * next.heading.sin();
        next
    }

    /// Point expressed in this agent's body frame.
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let (dx, dy) = (x - self.x, y - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn contains(&self, x: f64, y: f64, margin: f64) -> bool {
        let (u, v) = self.to_local(x, y);
        u.abs() <= self.footprint.length / 2.0 + margin && v.abs() <= self.footprint.width / 2.0 + margin
    }
}

/// Per-class speed bands in meters per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedRanges {
    pub vehicle: [f64; 2],
    pub cyclist: [f64; 2],
    pub pedestrian: [f64; 2],
}

impl Default for SpeedRanges {
    fn default() -> Self {
        SpeedRanges { vehicle: [3.0, 14.0], cyclist: [1.5, 6.0], pedestrian: [0.5, 2.0] }
    }
}

impl SpeedRanges {
    pub fn for_class(&self, class: SemanticClass) -> Option<[f64; 2]> {
        match class {
            SemanticClass::Car | SemanticClass::OtherVehicle => Some(self.vehicle),
            SemanticClass::Bicyclist => Some(self.cyclist),
            SemanticClass::Pedestrian => Some(self.pedestrian),
            _ => None,
        }
    }

    pub fn sample(&self, class: SemanticClass, rng: &mut impl Rng) -> f64 {
        match self.for_class(class) {
            Some([lo, hi]) if hi > lo => rng.gen_range(lo..=hi),
            Some([lo, _]) => lo,
            None => 0.0,
        }
    }

    /// Moving agents are held inside their class band; static agents stay put.
    fn enforce(&self, agent: &mut AgentState) {
        if let (true, Some([lo, hi])) = (agent.is_moving(), self.for_class(agent.class)) {
            agent.speed = agent.speed.clamp(lo, hi.max(lo));
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (name, [lo, hi]) in [("vehicle", self.vehicle), ("cyclist", self.cyclist), ("pedestrian", self.pedestrian)] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(crate::Error::Config(format!("invalid {name} speed range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Aabb {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Aabb { min_x: min_x.min(max_x), min_y: min_y.min(max_y), max_x: min_x.max(max_x), max_y: min_y.max(max_y) }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.min_x..=self.max_x).contains(&x) && (self.min_y..=self.max_y).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box(Aabb),
    Polyline(Vec<(f64, f64)>),
}

/// Labeled static geometry in world coordinates. Ground surfaces do not
/// occlude; they only return semantic ground points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticObstacle {
    pub class: SemanticClass,
    pub shape: Shape,
    pub ground: bool,
}

impl StaticObstacle {
    pub fn solid(class: SemanticClass, shape: Shape) -> Self {
        StaticObstacle { class, shape, ground: false }
    }

    pub fn surface(class: SemanticClass, area: Aabb) -> Self {
        StaticObstacle { class, shape: Shape::Box(area), ground: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub ego: AgentState,
    pub agents: Vec<AgentState>,
    pub statics: Vec<StaticObstacle>,
    /// Agents farther than this from the ego along either axis are respawned.
    pub bounds: f64,
    pub speed_ranges: SpeedRanges,
    pub seed: u64,
    /// Number of steps taken so far; keys the per-step random substreams.
    pub tick: u64,
}

/// Advances every agent and the ego by one unicycle step.
///
/// Agents that leave the bounds re-enter from the opposite side of the ego
/// with a freshly drawn speed, using a substream keyed by `(seed, tick, index)`.
pub fn step_world(w: &World, dt: f64) -> World {
    let mut next = w.clone();
    next.tick = w.tick + 1;
    next.ego = w.ego.advanced(dt);
    for (i, agent) in next.agents.iter_mut().enumerate() {
        *agent = agent.advanced(dt);
        w.speed_ranges.enforce(agent);
        let dx = agent.x - next.ego.x;
        let dy = agent.y - next.ego.y;
        if dx.abs() > w.bounds || dy.abs() > w.bounds {
            let mut rng = ChaCha8Rng::seed_from_u64(substream(w.seed, next.tick, i as u64));
            let reenter = |d: f64| if d.abs() > w.bounds { -d.signum() * w.bounds * 0.98 } else { d };
            agent.x = next.ego.x + reenter(dx);
            agent.y = next.ego.y + reenter(dy);
            if agent.is_moving() {
                agent.speed = w.speed_ranges.sample(agent.class, &mut rng);
            }
        }
    }
    next
}
