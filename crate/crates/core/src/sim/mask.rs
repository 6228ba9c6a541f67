use super::world::{AgentState, World, V_STATIC};
use crate::grid::GridConfig;

/// Agent pose re-expressed in the ego frame.
pub fn to_ego_frame(ego: &AgentState, agent: &AgentState) -> AgentState {
    let (x, y) = ego.to_local(agent.x, agent.y);
    AgentState { x, y, heading: agent.heading - ego.heading, ..agent.clone() }
}

/// Marks cells whose centers fall inside the footprint of any agent moving
/// faster than [`V_STATIC`]. The ego itself is never marked.
pub fn dynamic_mask(w: &World, cfg: &GridConfig) -> Vec<bool> {
    let mut mask = vec![false; cfg.cells()];
    for agent in w.agents.iter().filter(|a| a.speed > V_STATIC) {
        rasterize_footprint(&to_ego_frame(&w.ego, agent), cfg, &mut mask);
    }
    mask
}

/// Sets every cell whose center lies inside the (ego-frame) footprint.
pub fn rasterize_footprint(agent: &AgentState, cfg: &GridConfig, mask: &mut [bool]) {
    let r = 0.5 * agent.footprint.length.hypot(agent.footprint.width);
    let (r_min, c_min) = cfg.cell_of(agent.x - r, agent.y + r);
    let (r_max, c_max) = cfg.cell_of(agent.x + r, agent.y - r);
    let clamp_r = |v: i64| v.clamp(0, cfg.height as i64 - 1) as usize;
    let clamp_c = |v: i64| v.clamp(0, cfg.width as i64 - 1) as usize;
    if r_max < 0 || c_max < 0 || r_min >= cfg.height as i64 || c_min >= cfg.width as i64 {
        return;
    }
    for row in clamp_r(r_min)..=clamp_r(r_max) {
        for col in clamp_c(c_min)..=clamp_c(c_max) {
            let (x, y) = cfg.center_of(row, col);
            if agent.contains(x, y, 0.0) {
                mask[cfg.index(row, col)] = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SemanticClass;
    use crate::sim::world::{Footprint, SpeedRanges};

    fn world(agents: Vec<AgentState>) -> World {
        World {
            ego: AgentState::new(SemanticClass::EgoVehicle, 0.0, 0.0, 0.0, 0.0),
            agents,
            statics: vec![],
            bounds: 100.0,
            speed_ranges: SpeedRanges::default(),
            seed: 0,
            tick: 0,
        }
    }

    #[test]
    fn static_agents_leave_mask_empty() {
        let cfg = GridConfig::new(16, 16, 0.5).unwrap();
        let w = world(vec![AgentState::new(SemanticClass::Car, 1.0, 1.0, 0.0, 0.0)]);
        assert!(dynamic_mask(&w, &cfg).iter().all(|&m| !m));
    }

    #[test]
    fn axis_aligned_vehicle_covers_exact_cells() {
        let cfg = GridConfig::new(16, 16, 1.0).unwrap();
        // 4 x 2 m box with edges on cell boundaries: x in [2, 6], y in [1, 3]
        let mut car = AgentState::new(SemanticClass::Car, 4.0, 2.0, 0.0, 5.0);
        car.footprint = Footprint { length: 4.0, width: 2.0 };
        let mask = dynamic_mask(&world(vec![car]), &cfg);
        // independent rasterization: columns 8+2..8+6, rows 8-3..8-1
        let mut expected = vec![false; cfg.cells()];
        for row in 5..7 {
            for col in 10..14 {
                expected[row * 16 + col] = true;
            }
        }
        assert_eq!(mask, expected);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 8);
    }

    #[test]
    fn mask_is_union_of_agents() {
        let cfg = GridConfig::new(32, 32, 0.5).unwrap();
        let a = AgentState::new(SemanticClass::Car, 3.0, 2.0, 0.3, 5.0);
        let b = AgentState::new(SemanticClass::Pedestrian, -4.0, -1.0, 1.0, 1.0);
        let both = dynamic_mask(&world(vec![a.clone(), b.clone()]), &cfg);
        let ma = dynamic_mask(&world(vec![a]), &cfg);
        let mb = dynamic_mask(&world(vec![b]), &cfg);
        let union: Vec<bool> = ma.iter().zip(&mb).map(|(x, y)| *x || *y).collect();
        assert_eq!(both, union);
    }

    #[test]
    fn mask_follows_ego_rotation() {
        let cfg = GridConfig::new(16, 16, 1.0).unwrap();
        let mut w = world(vec![AgentState::new(SemanticClass::Pedestrian, 0.5, 3.5, 0.0, 1.0)]);
        // ego facing +y: the pedestrian lands at ego-frame (3.5, -0.5), a cell center
        w.ego.heading = std::f64::consts::FRAC_PI_2;
        let mask = dynamic_mask(&w, &cfg);
        let (r, c) = cfg.cell_of(3.5, -0.5);
        assert!(mask[cfg.index(r as usize, c as usize)]);
    }
}
