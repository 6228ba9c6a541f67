use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::{Aabb, AgentState, Shape, World};
use super::substream;
use crate::grid::SemanticClass;

/// One range-bearing return in the ego frame.
///
/// `label` is a full-taxonomy class; grids map it onto the active label table.
/// Ground returns carry semantics only and never produce occupancy evidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanHit {
    /// Radians relative to the ego heading.
    pub bearing: f64,
    pub range: f64,
    pub label: SemanticClass,
    /// `false` for a beam that reached max range without a return.
    pub is_return: bool,
    pub ground: bool,
}

impl ScanHit {
    /// Ego-frame point at the end of the beam.
    pub fn endpoint(&self) -> (f64, f64) {
        (self.range * self.bearing.cos(), self.range * self.bearing.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub beams: usize,
    pub max_range: f64,
    /// Angular span in radians, centered on the ego heading.
    pub span: f64,
    /// Probability of replacing a return's label with a uniformly drawn class.
    pub label_noise: f64,
    /// Spacing of ground samples along each beam, meters.
    pub ground_step: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig { beams: 720, max_range: 21.0, span: std::f64::consts::TAU, label_noise: 0.05, ground_step: 0.33 }
    }
}

impl SensorConfig {
    pub fn bearing(&self, beam: usize) -> f64 {
        -self.span / 2.0 + self.span * beam as f64 / self.beams as f64
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(format!("sensor: {m}")));
        if self.beams == 0 {
            return bad("beam count must be at least 1");
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return bad("max range must be positive");
        }
        if !(self.span > 0.0 && self.span <= std::f64::consts::TAU) {
            return bad("span must lie in (0, 2 pi]");
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("label noise must lie in [0, 1]");
        }
        if !(self.ground_step.is_finite() && self.ground_step > 0.0) {
            return bad("ground step must be positive");
        }
        Ok(())
    }
}

/// Slab intersection of a ray with an axis-aligned box; `None` when missed or behind.
pub fn ray_aabb(ox: f64, oy: f64, dx: f64, dy: f64, b: &Aabb) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for (o, d, lo, hi) in [(ox, dx, b.min_x, b.max_x), (oy, dy, b.min_y, b.max_y)] {
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (t0, t1) = ((lo - o) / d, (hi - o) / d);
            t_enter = t_enter.max(t0.min(t1));
            t_exit = t_exit.min(t0.max(t1));
        }
    }
    if t_exit < t_enter || t_exit < 0.0 {
        None
    } else {
        Some(t_enter.max(0.0))
    }
}

fn ray_agent(ox: f64, oy: f64, dx: f64, dy: f64, a: &AgentState) -> Option<f64> {
    let (lx, ly) = a.to_local(ox, oy);
    let (s, c) = a.heading.sin_cos();
    let (ldx, ldy) = (c * dx + s * dy, -s * dx + c * dy);
    let (hl, hw) = (a.footprint.length / 2.0, a.footprint.width / 2.0);
    ray_aabb(lx, ly, ldx, ldy, &Aabb::new(-hl, -hw, hl, hw))
}

fn ray_segment(ox: f64, oy: f64, dx: f64, dy: f64, p: (f64, f64), q: (f64, f64)) -> Option<f64> {
    let (ex, ey) = (q.0 - p.0, q.1 - p.1);
    let denom = dx * ey - dy * ex;
    if denom.abs() < 1e-15 {
        return None;
    }
    let (wx, wy) = (p.0 - ox, p.1 - oy);
    let t = (wx * ey - wy * ex) / denom;
    let u = (wx * dy - wy * dx) / denom;
    (t >= 0.0 && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Nearest occluder along a world-frame ray.
fn cast(w: &World, ox: f64, oy: f64, dx: f64, dy: f64) -> Option<(f64, SemanticClass)> {
    let mut best: Option<(f64, SemanticClass)> = None;
    let mut consider = |t: Option<f64>, class: SemanticClass| {
        if let Some(t) = t {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, class));
            }
        }
    };
    for a in &w.agents {
        consider(ray_agent(ox, oy, dx, dy, a), a.class);
    }
    for s in w.statics.iter().filter(|s| !s.ground) {
        match &s.shape {
            Shape::Box(b) => consider(ray_aabb(ox, oy, dx, dy, b), s.class),
            Shape::Polyline(pts) => {
                for seg in pts.windows(2) {
                    consider(ray_segment(ox, oy, dx, dy, seg[0], seg[1]), s.class);
                }
            }
        }
    }
    best
}

fn ground_class_at(w: &World, x: f64, y: f64) -> Option<SemanticClass> {
    w.statics.iter().rev().find_map(|s| match &s.shape {
        Shape::Box(b) if s.ground && b.contains(x, y) => Some(s.class),
        _ => None,
    })
}

/// Casts every beam from the ego pose.
///
/// The output lists one entry per beam (in beam order) followed by ground
/// returns sampled along the unoccluded part of each beam. Ground samples
/// within `ground_step` of an agent footprint are suppressed, since the
/// ground under an agent is not observable.
pub fn sense(w: &World, sensor: &SensorConfig) -> Vec<ScanHit> {
    let (ox, oy) = (w.ego.x, w.ego.y);
    let mut hits = Vec::with_capacity(sensor.beams);
    let mut ground = Vec::new();
    for beam in 0..sensor.beams {
        let bearing = sensor.bearing(beam);
        let (dy, dx) = (w.ego.heading + bearing).sin_cos();
        let nearest = cast(w, ox, oy, dx, dy).filter(|&(t, _)| t <= sensor.max_range);
        let free_len = match nearest {
            Some((t, class)) => {
                hits.push(ScanHit { bearing, range: t, label: class, is_return: true, ground: false });
                t
            }
            None => {
                hits.push(ScanHit {
                    bearing,
                    range: sensor.max_range,
                    label: SemanticClass::Others,
                    is_return: false,
                    ground: false,
                });
                sensor.max_range
            }
        };
        let mut s = sensor.ground_step;
        while s < free_len {
            let (px, py) = (ox + s * dx, oy + s * dy);
            let hidden = w.agents.iter().any(|a| a.contains(px, py, sensor.ground_step));
            if !hidden {
                if let Some(class) = ground_class_at(w, px, py) {
                    ground.push(ScanHit { bearing, range: s, label: class, is_return: true, ground: true });
                }
            }
            s += sensor.ground_step;
        }
    }
    hits.extend(ground);

    if sensor.label_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(substream(w.seed, w.tick, 0x5e5e_0000));
        for h in hits.iter_mut().filter(|h| h.is_return) {
            if rng.gen::<f64>() < sensor.label_noise {
                h.label = SemanticClass::ALL[rng.gen_range(0..SemanticClass::ALL.len())];
            }
        }
    }
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::{SpeedRanges, StaticObstacle};

    fn empty_world() -> World {
        World {
            ego: AgentState::new(SemanticClass::EgoVehicle, 0.0, 0.0, 0.0, 0.0),
            agents: vec![],
            statics: vec![],
            bounds: 100.0,
            speed_ranges: SpeedRanges::default(),
            seed: 3,
            tick: 0,
        }
    }

    fn quiet(beams: usize) -> SensorConfig {
        SensorConfig { beams, max_range: 20.0, label_noise: 0.0, ..SensorConfig::default() }
    }

    /// Brute-force ray marching oracle at a fine step.
    fn march(w: &World, bearing: f64, max_range: f64) -> Option<(f64, SemanticClass)> {
        let (dy, dx) = (w.ego.heading + bearing).sin_cos();
        let step = 1e-3;
        let mut s = 0.0;
        while s <= max_range {
            let (x, y) = (w.ego.x + s * dx, w.ego.y + s * dy);
            if let Some(a) = w.agents.iter().find(|a| a.contains(x, y, 0.0)) {
                return Some((s, a.class));
            }
            for st in w.statics.iter().filter(|s| !s.ground) {
                if let Shape::Box(b) = &st.shape {
                    if b.contains(x, y) {
                        return Some((s, st.class));
                    }
                }
            }
            s += step;
        }
        None
    }

    #[test]
    fn empty_world_all_misses() {
        let hits = sense(&empty_world(), &quiet(36));
        assert_eq!(hits.len(), 36);
        assert!(hits.iter().all(|h| !h.is_return && h.range == 20.0));
    }

    #[test]
    fn box_ahead_matches_analytic_intersection() {
        let mut w = empty_world();
        let b = Aabb::new(5.0, -1.0, 6.0, 1.0);
        w.statics.push(StaticObstacle::solid(SemanticClass::Building, Shape::Box(b)));
        let sensor = quiet(360);
        let hits = sense(&w, &sensor);
        let returns: Vec<usize> = (0..360).filter(|&i| hits[i].is_return).collect();
        // contiguous fan around bearing 0 (beam 180)
        assert!(returns.contains(&180));
        let (lo, hi) = (returns[0], *returns.last().unwrap());
        assert_eq!(hi - lo + 1, returns.len());
        for &i in &returns {
            let bearing = sensor.bearing(i);
            // the sensor sits inside the box's y-slab, so every return enters through x = 5
            let expected = 5.0 / bearing.cos();
            assert!((hits[i].range - expected).abs() < 1e-9, "beam {i}");
            assert_eq!(hits[i].label, SemanticClass::Building);
        }
        let half_angle = (1.0f64 / 5.0).atan();
        for (i, h) in hits.iter().enumerate().take(360) {
            let inside = sensor.bearing(i).abs() <= half_angle + 1e-12;
            assert_eq!(h.is_return, inside, "beam {i}");
        }
    }

    #[test]
    fn occluded_agent_is_invisible() {
        let mut w = empty_world();
        w.statics.push(StaticObstacle::solid(SemanticClass::Building, Shape::Box(Aabb::new(4.0, -4.0, 6.0, 4.0))));
        w.agents.push(AgentState::new(SemanticClass::Car, 9.0, 0.0, 0.0, 0.0));
        let sensor = quiet(720);
        let hits = sense(&w, &sensor);
        assert_eq!(hits.iter().filter(|h| h.label == SemanticClass::Car).count(), 0);
        for (i, h) in hits.iter().enumerate().step_by(7) {
            let oracle = march(&w, sensor.bearing(i), sensor.max_range);
            match oracle {
                Some((t, class)) => {
                    assert!(h.is_return);
                    assert!((h.range - t).abs() < 2e-3);
                    assert_eq!(h.label, class);
                }
                None => assert!(!h.is_return),
            }
        }
    }

    #[test]
    fn oriented_agent_hits_match_marching() {
        let mut w = empty_world();
        w.agents.push(AgentState::new(SemanticClass::Car, 7.0, 2.0, 0.7, 5.0));
        w.agents.push(AgentState::new(SemanticClass::Pedestrian, -3.0, -3.0, 0.0, 1.0));
        w.statics.push(StaticObstacle::solid(
            SemanticClass::Vegetation,
            Shape::Box(Aabb::new(-8.0, 4.0, -6.0, 9.0)),
        ));
        let sensor = quiet(360);
        let hits = sense(&w, &sensor);
        for (i, h) in hits.iter().enumerate() {
            // no return may lie beyond the first intersection along its beam
            match march(&w, sensor.bearing(i), sensor.max_range) {
                Some((t, class)) => {
                    assert!(h.is_return && h.range <= t + 1e-9 && (t - h.range) < 2e-3, "beam {i}");
                    assert_eq!(h.label, class);
                }
                None => assert!(!h.is_return, "beam {i}"),
            }
        }
    }

    #[test]
    fn polyline_occludes() {
        let mut w = empty_world();
        w.statics.push(StaticObstacle::solid(SemanticClass::Vegetation, Shape::Polyline(vec![(3.0, -5.0), (3.0, 5.0)])));
        let hits = sense(&w, &quiet(4));
        // beam 2 points straight ahead
        assert!(hits[2].is_return);
        assert!((hits[2].range - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ground_samples_stop_at_first_return() {
        let mut w = empty_world();
        w.statics.push(StaticObstacle::surface(SemanticClass::Road, Aabb::new(-30.0, -3.0, 30.0, 3.0)));
        w.agents.push(AgentState::new(SemanticClass::Car, 10.0, 0.0, 0.0, 0.0));
        let sensor = SensorConfig { ground_step: 0.5, ..quiet(4) };
        let hits = sense(&w, &sensor);
        let ahead: Vec<&ScanHit> = hits.iter().filter(|h| h.ground && h.bearing == 0.0).collect();
        assert!(!ahead.is_empty());
        // car rear face at 7.75; suppression margin 0.5
        assert!(ahead.iter().all(|h| h.range < 7.75 - 0.5 + 1e-9 && h.label == SemanticClass::Road));
    }

    #[test]
    fn label_noise_is_seeded() {
        let mut w = empty_world();
        w.statics.push(StaticObstacle::solid(SemanticClass::Building, Shape::Box(Aabb::new(-5.0, -5.0, 5.0, 5.0))));
        w.ego.x = -10.0;
        let noisy = SensorConfig { label_noise: 0.5, ..quiet(200) };
        let a = sense(&w, &noisy);
        assert_eq!(a, sense(&w, &noisy));
        assert!(a.iter().any(|h| h.is_return && h.label != SemanticClass::Building));
    }
}
