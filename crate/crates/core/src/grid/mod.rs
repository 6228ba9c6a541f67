//! Evidential and semantic grid maps.
//!
//! Grids are ego-centric and row-major. The ego sits at the grid center with
//! `+x` (forward) pointing to increasing columns and `+y` (left) pointing to
//! decreasing rows, so the vehicle heads to the right in exported images.

mod labels;
mod mass;
pub mod pgm;
mod raster;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use labels::{LabelTable, LabelVariant, SemanticClass};
pub use mass::{classify, dst_fuse, BeliefMass, OccClass, Thresholds, CONFLICT_EPS};
pub use raster::{rasterize_scan, trace_cells, SensorMasses};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub resolution: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { width: 128, height: 128, resolution: 0.33 }
    }
}

impl GridConfig {
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self> {
        let cfg = GridConfig { width, height, resolution };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!("grid dimensions must be positive, got {}x{}", self.width, self.height)));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::Config(format!("grid resolution must be positive, got {}", self.resolution)));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Half of the smaller grid side, in meters.
    pub fn half_extent(&self) -> f64 {
        0.5 * self.width.min(self.height) as f64 * self.resolution
    }

    /// Cell (row, col) containing an ego-frame point; may lie outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        let col = (x / self.resolution + self.width as f64 / 2.0).floor() as i64;
        let row = (self.height as f64 / 2.0 - y / self.resolution).floor() as i64;
        (row, col)
    }

    /// Ego-frame coordinates of a cell center.
    pub fn center_of(&self, row: usize, col: usize) -> (f64, f64) {
        let x = (col as f64 + 0.5 - self.width as f64 / 2.0) * self.resolution;
        let y = (self.height as f64 / 2.0 - row as f64 - 0.5) * self.resolution;
        (x, y)
    }

    pub fn contains(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Cell holding the sensor origin.
    pub fn sensor_cell(&self) -> (i64, i64) {
        self.cell_of(0.0, 0.0)
    }
}

fn check_same_config(a: &GridConfig, b: &GridConfig) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Shape(format!(
            "grid {}x{} does not match grid {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Two-channel evidential occupancy grid, stored channel-planar in `f32`
/// (the on-disk precision).
#[derive(Debug, Clone, PartialEq)]
pub struct Eogm {
    config: GridConfig,
    m_occ: Vec<f32>,
    m_emp: Vec<f32>,
}

impl Eogm {
    pub fn vacuous(config: GridConfig) -> Self {
        let n = config.cells();
        Eogm { config, m_occ: vec![0.0; n], m_emp: vec![0.0; n] }
    }

    pub fn from_masses(config: GridConfig, masses: &[BeliefMass]) -> Result<Self> {
        if masses.len() != config.cells() {
            return Err(Error::Shape(format!("expected {} cells, got {}", config.cells(), masses.len())));
        }
        let mut e = Eogm::vacuous(config);
        for (i, m) in masses.iter().enumerate() {
            e.set(i, *m)?;
        }
        Ok(e)
    }

    pub fn from_channels(config: GridConfig, m_occ: Vec<f32>, m_emp: Vec<f32>) -> Result<Self> {
        let n = config.cells();
        if m_occ.len() != n || m_emp.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} cells per channel, got {} and {}",
                m_occ.len(),
                m_emp.len()
            )));
        }
        let e = Eogm { config, m_occ, m_emp };
        if let Some(i) = (0..n).find(|&i| !e.get(i).is_valid()) {
            let m = e.get(i);
            return Err(Error::InvalidMass { m_occ: m.m_occ, m_emp: m.m_emp });
        }
        Ok(e)
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn get(&self, index: usize) -> BeliefMass {
        BeliefMass { m_occ: self.m_occ[index] as f64, m_emp: self.m_emp[index] as f64 }
    }

    pub fn set(&mut self, index: usize, mass: BeliefMass) -> Result<()> {
        let (o, mut e) = (mass.m_occ as f32, mass.m_emp as f32);
        // f32 rounding can push a unit-sum pair just above one.
        if o as f64 + e as f64 > 1.0 {
            e = (1.0 - o as f64) as f32;
            while e > 0.0 && o as f64 + e as f64 > 1.0 {
                e = f32::from_bits(e.to_bits() - 1);
            }
        }
        let stored = BeliefMass { m_occ: o as f64, m_emp: e as f64 };
        if !mass.is_valid() || !stored.is_valid() {
            return Err(Error::InvalidMass { m_occ: mass.m_occ, m_emp: mass.m_emp });
        }
        self.m_occ[index] = o;
        self.m_emp[index] = e;
        Ok(())
    }

    pub fn m_occ(&self) -> &[f32] {
        &self.m_occ
    }

    pub fn m_emp(&self) -> &[f32] {
        &self.m_emp
    }

    pub fn masses(&self) -> impl Iterator<Item = BeliefMass> + '_ {
        (0..self.config.cells()).map(|i| self.get(i))
    }

    /// Keeps cells where `keep` is true and makes every other cell vacuous.
    pub fn masked(&self, mask: &[bool], keep: bool) -> Result<Eogm> {
        if mask.len() != self.config.cells() {
            return Err(Error::Shape(format!("mask has {} cells, grid has {}", mask.len(), self.config.cells())));
        }
        let mut out = self.clone();
        for (i, &m) in mask.iter().enumerate() {
            if m != keep {
                out.m_occ[i] = 0.0;
                out.m_emp[i] = 0.0;
            }
        }
        Ok(out)
    }
}

/// Occupancy probability grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ogm {
    config: GridConfig,
    cells: Vec<f64>,
}

impl Ogm {
    pub fn new(config: GridConfig, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != config.cells() {
            return Err(Error::Shape(format!("expected {} cells, got {}", config.cells(), cells.len())));
        }
        if let Some(p) = cells.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("occupancy probability {p} outside [0, 1]")));
        }
        Ok(Ogm { config, cells })
    }

    pub fn filled(config: GridConfig, p: f64) -> Result<Self> {
        Ogm::new(config, vec![p; config.cells()])
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn check_same_shape(&self, other: &Ogm) -> Result<()> {
        check_same_config(&self.config, &other.config)
    }

    pub fn classes(&self, thresholds: Thresholds) -> Result<Vec<OccClass>> {
        thresholds.validate()?;
        Ok(self.cells.iter().map(|&p| thresholds.class_of(p)).collect())
    }
}

/// Per-cell pignistic transform of an evidential grid.
pub fn pignistic(e: &Eogm) -> Ogm {
    let cells = e.masses().map(|m| m.pignistic().clamp(0.0, 1.0)).collect();
    Ogm { config: e.config, cells }
}

/// Semantic grid map: one label id per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Smgm {
    config: GridConfig,
    labels: Vec<u8>,
    table: Arc<LabelTable>,
}

impl Smgm {
    pub fn others(config: GridConfig, table: Arc<LabelTable>) -> Self {
        Smgm { config, labels: vec![0; config.cells()], table }
    }

    pub fn new(config: GridConfig, labels: Vec<u8>, table: Arc<LabelTable>) -> Result<Self> {
        if labels.len() != config.cells() {
            return Err(Error::Shape(format!("expected {} cells, got {}", config.cells(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| !table.contains(l)) {
            return Err(Error::UnknownLabel(bad));
        }
        Ok(Smgm { config, labels, table })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn table(&self) -> &Arc<LabelTable> {
        &self.table
    }

    pub fn set(&mut self, index: usize, label: u8) -> Result<()> {
        if !self.table.contains(label) {
            return Err(Error::UnknownLabel(label));
        }
        self.labels[index] = label;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_config_defaults_and_validation() {
        let d = GridConfig::default();
        assert_eq!((d.width, d.height, d.resolution), (128, 128, 0.33));
        assert!(GridConfig::new(0, 4, 1.0).is_err());
        assert!(GridConfig::new(4, 4, 0.0).is_err());
        assert!(GridConfig::new(4, 4, f64::NAN).is_err());
    }

    #[test]
    fn cell_mapping_round_trip() {
        let cfg = GridConfig::new(8, 6, 0.5).unwrap();
        assert_eq!(cfg.sensor_cell(), (3, 4));
        for row in 0..6 {
            for col in 0..8 {
                let (x, y) = cfg.center_of(row, col);
                assert_eq!(cfg.cell_of(x, y), (row as i64, col as i64));
            }
        }
        // forward is +col, left is -row
        assert_eq!(cfg.cell_of(1.1, 0.0), (3, 6));
        assert_eq!(cfg.cell_of(0.0, 1.1), (0, 4));
    }

    #[test]
    fn pignistic_of_vacuous_grid_is_half() {
        let cfg = GridConfig::new(4, 4, 1.0).unwrap();
        let ogm = pignistic(&Eogm::vacuous(cfg));
        assert!(ogm.cells().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn eogm_rejects_invalid_cells() {
        let cfg = GridConfig::new(2, 1, 1.0).unwrap();
        assert!(Eogm::from_channels(cfg, vec![0.5, 0.9], vec![0.5, 0.2]).is_err());
        assert!(Eogm::from_channels(cfg, vec![0.5], vec![0.5]).is_err());
        let mut e = Eogm::vacuous(cfg);
        assert!(e.set(0, BeliefMass { m_occ: 0.9, m_emp: 0.9 }).is_err());
    }

    #[test]
    fn smgm_rejects_unknown_labels() {
        let cfg = GridConfig::new(2, 1, 1.0).unwrap();
        let table = Arc::new(LabelTable::new(LabelVariant::Binary));
        assert!(matches!(Smgm::new(cfg, vec![0, 2], table.clone()), Err(Error::UnknownLabel(2))));
        let mut s = Smgm::others(cfg, table);
        assert!(s.set(1, 1).is_ok());
        assert!(s.set(1, 5).is_err());
    }

    #[test]
    fn masking_keeps_selected_cells() {
        let cfg = GridConfig::new(2, 1, 1.0).unwrap();
        let e = Eogm::from_channels(cfg, vec![0.5, 0.25], vec![0.25, 0.5]).unwrap();
        let kept = e.masked(&[true, false], true).unwrap();
        assert_eq!(kept.get(0), e.get(0));
        assert_eq!(kept.get(1), BeliefMass::VACUOUS);
        let rest = e.masked(&[true, false], false).unwrap();
        assert_eq!(rest.get(0), BeliefMass::VACUOUS);
        assert_eq!(rest.get(1), e.get(1));
    }
}
