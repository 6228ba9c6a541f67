use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{dst_fuse, BeliefMass, Eogm, GridConfig, LabelTable, Smgm};
use crate::error::{Error, Result};
use crate::sim::ScanHit;

/// Inverse-sensor-model evidence: `m_hit` on `{O}` at a return, `m_free` on
/// `{E}` along the traversed ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMasses {
    pub m_hit: f64,
    pub m_free: f64,
}

impl Default for SensorMasses {
    fn default() -> Self {
        SensorMasses { m_hit: 0.7, m_free: 0.6 }
    }
}

impl SensorMasses {
    pub fn validate(&self) -> Result<()> {
        let ok = |m: f64| m > 0.0 && m <= 1.0;
        if ok(self.m_hit) && ok(self.m_free) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "sensor masses must lie in (0, 1], got hit = {}, free = {}",
                self.m_hit, self.m_free
            )))
        }
    }
}

/// Integer line traversal from `from` to `to`, both inclusive.
pub fn trace_cells(from: (i64, i64), to: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut r, mut c) = from;
    let dc = (to.1 - c).abs();
    let dr = -(to.0 - r).abs();
    let sc = if c < to.1 { 1 } else { -1 };
    let sr = if r < to.0 { 1 } else { -1 };
    let mut err = dc + dr;
    let mut cells = Vec::with_capacity((dc - dr) as usize + 1);
    loop {
        cells.push((r, c));
        if (r, c) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dr {
            err += dr;
            c += sc;
        }
        if e2 <= dc {
            err += dc;
            r += sr;
        }
    }
    cells
}

fn fuse_into(cell: &mut BeliefMass, evidence: BeliefMass) -> Result<()> {
    *cell = match dst_fuse(*cell, evidence) {
        Ok(m) => m,
        // Contradictory certain evidence within one scan: the later beam wins.
        Err(Error::TotalConflict(_)) => evidence,
        Err(e) => return Err(e),
    };
    Ok(())
}

/// Builds one frame's evidential and semantic grids from a scan.
///
/// Non-ground beams are traced from the sensor cell: traversed cells get free
/// evidence, the return cell gets occupied evidence. Ground returns only carry
/// semantics. Labels are written ground-first, then in beam order, so the last
/// obstacle return landing in a cell decides its label.
pub fn rasterize_scan(
    hits: &[ScanHit],
    cfg: &GridConfig,
    masses: SensorMasses,
    table: &Arc<LabelTable>,
) -> Result<(Eogm, Smgm)> {
    cfg.validate()?;
    masses.validate()?;
    let mut cells = vec![BeliefMass::VACUOUS; cfg.cells()];
    let free = BeliefMass { m_occ: 0.0, m_emp: masses.m_free };
    let occupied = BeliefMass { m_occ: masses.m_hit, m_emp: 0.0 };
    let origin = cfg.sensor_cell();

    for hit in hits.iter().filter(|h| !h.ground) {
        let (x, y) = hit.endpoint();
        let ray = trace_cells(origin, cfg.cell_of(x, y));
        let last = ray.len() - 1;
        for (k, &(r, c)) in ray.iter().enumerate() {
            if !cfg.contains(r, c) {
                break;
            }
            let idx = cfg.index(r as usize, c as usize);
            let evidence = if hit.is_return && k == last { occupied } else { free };
            fuse_into(&mut cells[idx], evidence)?;
        }
    }

    let mut smgm = Smgm::others(*cfg, table.clone());
    let ground = hits.iter().filter(|h| h.ground && h.is_return);
    let obstacles = hits.iter().filter(|h| !h.ground && h.is_return);
    for hit in ground.chain(obstacles) {
        let (x, y) = hit.endpoint();
        let (r, c) = cfg.cell_of(x, y);
        if cfg.contains(r, c) {
            smgm.set(cfg.index(r as usize, c as usize), table.map_class(hit.label))?;
        }
    }

    Ok((Eogm::from_masses(*cfg, &cells)?, smgm))
}
