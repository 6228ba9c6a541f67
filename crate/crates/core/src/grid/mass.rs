use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the unit-sum constraint to absorb rounding in fused values.
const MASS_SLACK: f64 = 1e-9;

/// Conflict values within this distance of one are treated as total conflict.
pub const CONFLICT_EPS: f64 = 1e-12;

/// Dempster–Shafer masses over the frame {O, E}.
///
/// Only `m({O})` and `m({E})` are stored. The remaining mass
/// `1 - m_occ - m_emp` sits on the ignorance hypothesis `{O, E}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BeliefMass {
    pub m_occ: f64,
    pub m_emp: f64,
}

impl BeliefMass {
    /// Total ignorance, the identity element of Dempster's rule.
    pub const VACUOUS: BeliefMass = BeliefMass { m_occ: 0.0, m_emp: 0.0 };

    pub fn new(m_occ: f64, m_emp: f64) -> Result<Self> {
        let mass = BeliefMass { m_occ, m_emp };
        if mass.is_valid() {
            Ok(mass)
        } else {
            Err(Error::InvalidMass { m_occ, m_emp })
        }
    }

    pub fn is_valid(&self) -> bool {
        let in_unit = |m: f64| m.is_finite() && (0.0..=1.0).contains(&m);
        in_unit(self.m_occ) && in_unit(self.m_emp) && self.m_occ + self.m_emp <= 1.0 + MASS_SLACK
    }

    /// Mass on `{O, E}`.
    pub fn unknown(&self) -> f64 {
        (1.0 - self.m_occ - self.m_emp).max(0.0)
    }

    /// Pignistic occupancy probability, `0.5 (1 - m(E)) + 0.5 m(O)`.
    pub fn pignistic(&self) -> f64 {
        0.5 * (1.0 - self.m_emp) + 0.5 * self.m_occ
    }

    /// Conflict `K` between two mass assignments.
    pub fn conflict(&self, other: &BeliefMass) -> f64 {
        self.m_occ * other.m_emp + self.m_emp * other.m_occ
    }
}

/// Dempster's rule of combination on the binary frame {O, E}.
pub fn dst_fuse(prior: BeliefMass, evidence: BeliefMass) -> Result<BeliefMass> {
    for m in [prior, evidence] {
        if !m.is_valid() {
            return Err(Error::InvalidMass { m_occ: m.m_occ, m_emp: m.m_emp });
        }
    }
    // The vacuous assignment is an exact identity; skip the arithmetic so
    // the result is bit-identical to the other operand.
    if prior == BeliefMass::VACUOUS {
        return Ok(evidence);
    }
    if evidence == BeliefMass::VACUOUS {
        return Ok(prior);
    }

    let k = prior.conflict(&evidence);
    if k >= 1.0 - CONFLICT_EPS {
        return Err(Error::TotalConflict(k));
    }
    let (o1, e1, u1) = (prior.m_occ, prior.m_emp, prior.unknown());
    let (o2, e2, u2) = (evidence.m_occ, evidence.m_emp, evidence.unknown());
    let norm = 1.0 - k;
    let m_occ = (o1 * o2 + o1 * u2 + u1 * o2) / norm;
    let m_emp = (e1 * e2 + e1 * u2 + u1 * e2) / norm;

    let sum = m_occ + m_emp;
    let (m_occ, m_emp) = if sum > 1.0 { (m_occ / sum, m_emp / sum) } else { (m_occ, m_emp) };
    Ok(BeliefMass { m_occ: m_occ.clamp(0.0, 1.0), m_emp: m_emp.clamp(0.0, 1.0) })
}

/// Three-way occupancy class used by the image-similarity metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OccClass {
    Occupied,
    Empty,
    Unknown,
}

impl OccClass {
    pub const ALL: [OccClass; 3] = [OccClass::Occupied, OccClass::Empty, OccClass::Unknown];
}

/// Band around the ignorance value that maps probabilities to [`OccClass`].
/// Both boundaries are exclusive: a probability equal to either threshold is `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t_emp: f64,
    pub t_occ: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { t_emp: 0.4, t_occ: 0.6 }
    }
}

impl Thresholds {
    pub fn new(t_emp: f64, t_occ: f64) -> Result<Self> {
        let t = Thresholds { t_emp, t_occ };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.t_emp && self.t_emp < self.t_occ && self.t_occ <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidThresholds { t_emp: self.t_emp, t_occ: self.t_occ })
        }
    }

    /// Classification without re-validating the band; callers validate once per map.
    #[inline]
    pub(crate) fn class_of(&self, p: f64) -> OccClass {
        if p < self.t_emp {
            OccClass::Empty
        } else if p > self.t_occ {
            OccClass::Occupied
        } else {
            OccClass::Unknown
        }
    }
}

pub fn classify(p: f64, thresholds: Thresholds) -> Result<OccClass> {
    thresholds.validate()?;
    Ok(thresholds.class_of(p))
}
