//! Scenario library and its JSON configuration.
//!
//! Every scenario shares one street layout in world coordinates: a four-lane
//! main road along `x` (lanes at y = -5.25, -1.75 heading +x and y = 1.75,
//! 5.25 heading -x), sidewalks beyond |y| = 7, and buildings or vegetation
//! past |y| = 10. Crossing and turning scenarios add a cross street.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sensor::SensorConfig;
use super::world::{Aabb, AgentState, Shape, SpeedRanges, StaticObstacle, World};
use crate::error::{Error, Result};
use crate::grid::{GridConfig, LabelVariant, SemanticClass, SensorMasses};

const LANE_OUT: [f64; 2] = [-5.25, -1.75];
const LANE_IN: [f64; 2] = [1.75, 5.25];
const ROAD_HALF: f64 = 7.0;
const SIDEWALK_OUTER: f64 = 9.5;
const BUILDING_LINE: f64 = 10.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    StraightCrossing,
    TurningAtIntersection,
    MultiVehicleStraight,
    AppearingVehicle,
    StaticClutter,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::StraightCrossing => "straight-crossing",
            ScenarioKind::TurningAtIntersection => "turning-at-intersection",
            ScenarioKind::MultiVehicleStraight => "multi-vehicle-straight",
            ScenarioKind::AppearingVehicle => "appearing-vehicle",
            ScenarioKind::StaticClutter => "static-clutter",
        }
    }

    fn default_ego_speed(self) -> [f64; 2] {
        match self {
            ScenarioKind::StraightCrossing | ScenarioKind::StaticClutter => [0.0, 0.0],
            ScenarioKind::TurningAtIntersection => [0.0, 3.0],
            ScenarioKind::MultiVehicleStraight | ScenarioKind::AppearingVehicle => [4.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentCounts {
    /// Moving vehicles in addition to any scenario-specific actor.
    pub vehicles: usize,
    pub cyclists: usize,
    pub pedestrians: usize,
    /// Parked vehicles along the curb.
    pub parked: usize,
    /// Poles, signs and similar traffic objects on the sidewalks.
    pub traffic_objects: usize,
}

impl Default for AgentCounts {
    fn default() -> Self {
        AgentCounts { vehicles: 3, cyclists: 1, pedestrians: 2, parked: 2, traffic_objects: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorBlock {
    pub beams: usize,
    /// Defaults to the grid half-extent.
    pub max_range: Option<f64>,
    pub span_deg: f64,
    /// Defaults to the grid resolution.
    pub ground_step: Option<f64>,
}

impl Default for SensorBlock {
    fn default() -> Self {
        SensorBlock { beams: 720, max_range: None, span_deg: 360.0, ground_step: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseBlock {
    pub label_flip: f64,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        NoiseBlock { label_flip: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub grid: GridConfig,
    pub variant: LabelVariant,
    pub sequences: usize,
    pub agents: AgentCounts,
    pub speed_ranges: SpeedRanges,
    /// Ego speed band; the scenario picks a default when absent.
    pub ego_speed: Option<[f64; 2]>,
    pub sensor: SensorBlock,
    pub noise: NoiseBlock,
    pub masses: SensorMasses,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: ScenarioKind::MultiVehicleStraight,
            grid: GridConfig::default(),
            variant: LabelVariant::Full,
            sequences: 100,
            agents: AgentCounts::default(),
            speed_ranges: SpeedRanges::default(),
            ego_speed: None,
            sensor: SensorBlock::default(),
            noise: NoiseBlock::default(),
            masses: SensorMasses::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.masses.validate()?;
        self.speed_ranges.validate()?;
        self.sensor_config().validate()?;
        if self.sequences == 0 {
            return Err(Error::Config("sequence count must be at least 1".into()));
        }
        if let Some([lo, hi]) = self.ego_speed {
            if !(0.0 <= lo && lo <= hi) {
                return Err(Error::Config(format!("invalid ego speed range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn sensor_config(&self) -> SensorConfig {
        SensorConfig {
            beams: self.sensor.beams,
            max_range: self.sensor.max_range.unwrap_or_else(|| self.grid.half_extent()),
            span: self.sensor.span_deg.to_radians(),
            label_noise: self.noise.label_flip,
            ground_step: self.sensor.ground_step.unwrap_or(self.grid.resolution),
        }
    }

    pub fn ego_speed_range(&self) -> [f64; 2] {
        self.ego_speed.unwrap_or_else(|| self.scenario.default_ego_speed())
    }

    /// Initial world for one sequence, drawn from the sequence's own seed.
    pub fn build_world(&self, seed: u64) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [elo, ehi] = self.ego_speed_range();
        let ego_speed = if ehi > elo { rng.gen_range(elo..=ehi) } else { elo };
        let ego = AgentState::new(SemanticClass::EgoVehicle, 0.0, LANE_OUT[1], 0.0, ego_speed);
        let extent = self.grid.half_extent();
        let mut builder = Builder { rng, agents: Vec::new(), statics: Vec::new(), ranges: self.speed_ranges, extent };

        let cross_x = match self.scenario {
            ScenarioKind::StraightCrossing | ScenarioKind::TurningAtIntersection => {
                Some(builder.rng.gen_range(0.3..0.6) * extent + ROAD_HALF)
            }
            _ => None,
        };
        builder.layout(cross_x, self.agents.traffic_objects);
        builder.parked(self.agents.parked, cross_x);

        match self.scenario {
            ScenarioKind::StraightCrossing => {
                let x = cross_x.unwrap_or_default() + builder.pick(&[-1.75, 1.75]);
                let dir = builder.pick(&[-1.0, 1.0]);
                let speed = builder.speed(SemanticClass::Car);
                let y = LANE_OUT[1] - dir * builder.rng.gen_range(0.6..0.9) * extent;
                builder.agents.push(AgentState::new(SemanticClass::Car, x, y, dir * FRAC_PI_2, speed));
            }
            ScenarioKind::TurningAtIntersection => {
                // comes down the cross street and turns right onto the main road
                let cx = cross_x.unwrap_or_default();
                let speed = builder.speed(SemanticClass::Car).min(8.0);
                let radius = builder.rng.gen_range(5.0..7.0);
                let y = LANE_IN[0] + radius + builder.rng.gen_range(0.0..3.0);
                let car = AgentState::new(SemanticClass::Car, cx + 1.75, y, -FRAC_PI_2, speed)
                    .with_turn_rate(-speed / radius);
                builder.agents.push(car);
            }
            ScenarioKind::AppearingVehicle => {
                // oncoming vehicle that starts outside sensor range
                let speed = builder.speed(SemanticClass::Car);
                let x = builder.rng.gen_range(1.3..1.7) * extent + 10.0;
                builder.agents.push(AgentState::new(SemanticClass::Car, x, LANE_IN[0], PI, speed));
            }
            ScenarioKind::MultiVehicleStraight | ScenarioKind::StaticClutter => {}
        }

        if self.scenario != ScenarioKind::StaticClutter {
            builder.traffic(self.agents.vehicles, self.agents.cyclists, self.agents.pedestrians);
        }

        World {
            ego,
            agents: builder.agents,
            statics: builder.statics,
            bounds: 2.5 * extent.max(10.0),
            speed_ranges: self.speed_ranges,
            seed,
            tick: 0,
        }
    }
}

struct Builder {
    rng: ChaCha8Rng,
    agents: Vec<AgentState>,
    statics: Vec<StaticObstacle>,
    ranges: SpeedRanges,
    extent: f64,
}

impl Builder {
    fn pick(&mut self, options: &[f64]) -> f64 {
        options[self.rng.gen_range(0..options.len())]
    }

    fn speed(&mut self, class: SemanticClass) -> f64 {
        self.ranges.sample(class, &mut self.rng)
    }

    fn span(&self) -> f64 {
        3.0 * self.extent.max(10.0)
    }

    fn layout(&mut self, cross_x: Option<f64>, traffic_objects: usize) {
        let span = self.span();
        self.statics.push(StaticObstacle::surface(SemanticClass::Road, Aabb::new(-span, -ROAD_HALF, span, ROAD_HALF)));
        for side in [-1.0, 1.0] {
            let walk = Aabb::new(-span, side * ROAD_HALF, span, side * SIDEWALK_OUTER);
            self.statics.push(StaticObstacle::surface(SemanticClass::UndrivableSurface, walk));
        }
        if let Some(cx) = cross_x {
            self.statics.push(StaticObstacle::surface(SemanticClass::Road, Aabb::new(cx - 3.5, -span, cx + 3.5, span)));
        }
        let blocked = |x0: f64, x1: f64| cross_x.is_some_and(|cx| x1 > cx - 5.0 && x0 < cx + 5.0);

        for side in [-1.0, 1.0] {
            let mut x = -span;
            while x < span {
                let len = self.rng.gen_range(4.0..12.0);
                let gap = self.rng.gen_range(1.0..4.0);
                if !blocked(x, x + len) {
                    let near = side * BUILDING_LINE;
                    let depth = self.rng.gen_range(3.0..8.0);
                    let area = Aabb::new(x, near, x + len, near + side * depth);
                    let class = if self.rng.gen_bool(0.7) { SemanticClass::Building } else { SemanticClass::Vegetation };
                    self.statics.push(StaticObstacle::solid(class, Shape::Box(area)));
                }
                x += len + gap;
            }
            // a hedge along part of the sidewalk
            let x0 = self.rng.gen_range(-span..span * 0.5);
            let hedge = vec![(x0, side * 9.8), (x0 + self.rng.gen_range(3.0..8.0), side * 9.8)];
            if !blocked(hedge[0].0, hedge[1].0) {
                self.statics.push(StaticObstacle::solid(SemanticClass::Vegetation, Shape::Polyline(hedge)));
            }
        }
        for _ in 0..traffic_objects {
            let x = self.rng.gen_range(-self.extent * 1.5..self.extent * 1.5);
            if blocked(x - 0.5, x + 0.5) {
                continue;
            }
            let y = self.pick(&[-1.0, 1.0]) * 8.8;
            self.statics.push(StaticObstacle::solid(
                SemanticClass::TrafficObject,
                Shape::Box(Aabb::new(x - 0.25, y - 0.25, x + 0.25, y + 0.25)),
            ));
        }
    }

    fn parked(&mut self, count: usize, cross_x: Option<f64>) {
        for _ in 0..count {
            for _attempt in 0..8 {
                let x = self.rng.gen_range(-self.extent * 1.5..self.extent * 1.5);
                if cross_x.is_some_and(|cx| (x - cx).abs() < 9.0) {
                    continue;
                }
                let y = self.pick(&[-1.0, 1.0]) * 6.2;
                let car = AgentState::new(SemanticClass::Car, x, y, 0.0, 0.0);
                if self.is_clear(&car) {
                    self.agents.push(car);
                    break;
                }
            }
        }
    }

    fn traffic(&mut self, vehicles: usize, cyclists: usize, pedestrians: usize) {
        let reach = self.extent.max(10.0) * 2.0;
        for _ in 0..vehicles {
            let class = if self.rng.gen_bool(0.15) { SemanticClass::OtherVehicle } else { SemanticClass::Car };
            self.place(class, |b| {
                let outbound = b.rng.gen_bool(0.5);
                let lane = if outbound { b.pick(&LANE_OUT) } else { b.pick(&LANE_IN) };
                let x = b.rng.gen_range(-reach..reach);
                (x, lane, if outbound { 0.0 } else { PI })
            });
        }
        for _ in 0..cyclists {
            self.place(SemanticClass::Bicyclist, |b| {
                let outbound = b.rng.gen_bool(0.5);
                let lane = if outbound { -6.3 } else { 6.3 };
                (b.rng.gen_range(-reach..reach), lane, if outbound { 0.0 } else { PI })
            });
        }
        for _ in 0..pedestrians {
            self.place(SemanticClass::Pedestrian, |b| {
                let y = b.pick(&[-1.0, 1.0]) * b.rng.gen_range(7.5..9.2);
                (b.rng.gen_range(-reach..reach), y, b.pick(&[0.0, PI]))
            });
        }
    }

    fn place(&mut self, class: SemanticClass, mut pose: impl FnMut(&mut Self) -> (f64, f64, f64)) {
        for _attempt in 0..16 {
            let (x, y, heading) = pose(self);
            let speed = self.speed(class);
            let agent = AgentState::new(class, x, y, heading, speed);
            if self.is_clear(&agent) {
                self.agents.push(agent);
                return;
            }
        }
    }

    /// Keeps a car length of headway to other agents and to the ego lane origin.
    fn is_clear(&self, candidate: &AgentState) -> bool {
        let gap = |a: &AgentState| {
            let along = (a.x - candidate.x).abs() - 0.5 * (a.footprint.length + candidate.footprint.length);
            let across = (a.y - candidate.y).abs() - 0.5 * (a.footprint.width + candidate.footprint.width);
            along > 3.0 || across > 0.8
        };
        let ego_probe = AgentState::new(SemanticClass::EgoVehicle, 0.0, LANE_OUT[1], 0.0, 0.0);
        gap(&ego_probe) && self.agents.iter().all(gap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults_and_overrides() {
        let cfg = ScenarioConfig::from_json(
            r#"{"scenario":"straight-crossing","grid":{"width":32,"height":32,"resolution":0.5},
                "agents":{"vehicles":0},"noise":{"label_flip":0.0},"seed":9}"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::StraightCrossing);
        assert_eq!(cfg.agents.vehicles, 0);
        assert_eq!(cfg.agents.pedestrians, AgentCounts::default().pedestrians);
        assert_eq!(cfg.sensor_config().max_range, 8.0);
        assert_eq!(cfg.ego_speed_range(), [0.0, 0.0]);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn json_rejects_unknown_and_invalid() {
        assert!(ScenarioConfig::from_json(r#"{"scenario":"loop-the-loop"}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"bogus":1}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"sequences":0}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"sensor":{"beams":0}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"speed_ranges":{"vehicle":[5,2]}}"#).is_err());
    }

    #[test]
    fn worlds_are_seeded() {
        for kind in [
            ScenarioKind::StraightCrossing,
            ScenarioKind::TurningAtIntersection,
            ScenarioKind::MultiVehicleStraight,
            ScenarioKind::AppearingVehicle,
            ScenarioKind::StaticClutter,
        ] {
            let cfg = ScenarioConfig { scenario: kind, ..ScenarioConfig::default() };
            assert_eq!(cfg.build_world(5), cfg.build_world(5));
            assert_ne!(cfg.build_world(5), cfg.build_world(6));
        }
    }

    #[test]
    fn static_clutter_has_no_movers() {
        let cfg = ScenarioConfig { scenario: ScenarioKind::StaticClutter, ..ScenarioConfig::default() };
        let w = cfg.build_world(1);
        assert!(w.agents.iter().all(|a| !a.is_moving()));
        assert!(!w.ego.is_moving());
    }
}
