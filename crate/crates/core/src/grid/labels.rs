use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full semantic taxonomy observed by the sensor. Discriminants are the
/// label ids of the `full` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum SemanticClass {
    Others = 0,
    Car = 1,
    OtherVehicle = 2,
    Bicyclist = 3,
    Pedestrian = 4,
    TrafficObject = 5,
    Building = 6,
    Vegetation = 7,
    Road = 8,
    UndrivableSurface = 9,
    EgoVehicle = 10,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 11] = [
        SemanticClass::Others,
        SemanticClass::Car,
        SemanticClass::OtherVehicle,
        SemanticClass::Bicyclist,
        SemanticClass::Pedestrian,
        SemanticClass::TrafficObject,
        SemanticClass::Building,
        SemanticClass::Vegetation,
        SemanticClass::Road,
        SemanticClass::UndrivableSurface,
        SemanticClass::EgoVehicle,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Others => "others",
            SemanticClass::Car => "car",
            SemanticClass::OtherVehicle => "other_vehicle",
            SemanticClass::Bicyclist => "bicyclist",
            SemanticClass::Pedestrian => "pedestrian",
            SemanticClass::TrafficObject => "traffic_object",
            SemanticClass::Building => "building",
            SemanticClass::Vegetation => "vegetation",
            SemanticClass::Road => "road",
            SemanticClass::UndrivableSurface => "undrivable_surface",
            SemanticClass::EgoVehicle => "ego_vehicle",
        }
    }

    /// Classes that can move on their own.
    pub fn is_movable(self) -> bool {
        matches!(
            self,
            SemanticClass::Car
                | SemanticClass::OtherVehicle
                | SemanticClass::Bicyclist
                | SemanticClass::Pedestrian
                | SemanticClass::EgoVehicle
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum LabelVariant {
    Full = 0,
    Six = 1,
    Four = 2,
    Binary = 3,
}

impl LabelVariant {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(LabelVariant::Full),
            1 => Some(LabelVariant::Six),
            2 => Some(LabelVariant::Four),
            3 => Some(LabelVariant::Binary),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelVariant::Full => "full",
            LabelVariant::Six => "six",
            LabelVariant::Four => "four",
            LabelVariant::Binary => "binary",
        }
    }
}

impl fmt::Display for LabelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LabelVariant::Full),
            "six" => Ok(LabelVariant::Six),
            "four" => Ok(LabelVariant::Four),
            "binary" => Ok(LabelVariant::Binary),
            other => Err(Error::Config(format!("unknown label variant '{other}'"))),
        }
    }
}

/// Ordered label set for one taxonomy variant. Id 0 is always `others`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    variant: LabelVariant,
    entries: Vec<(u8, String)>,
}

impl LabelTable {
    pub fn new(variant: LabelVariant) -> Self {
        let names: &[&str] = match variant {
            LabelVariant::Full => &[
                "others",
                "car",
                "other_vehicle",
                "bicyclist",
                "pedestrian",
                "traffic_object",
                "building",
                "vegetation",
                "road",
                "undrivable_surface",
                "ego_vehicle",
            ],
            LabelVariant::Six => &["others", "vehicle", "cyclist", "pedestrian", "building", "road"],
            LabelVariant::Four => &["others", "vehicle", "cyclist", "pedestrian"],
            LabelVariant::Binary => &["others", "vehicle"],
        };
        let entries = names.iter().enumerate().map(|(i, n)| (i as u8, n.to_string())).collect();
        LabelTable { variant, entries }
    }

    /// Rebuilds a table from its serialized parts, checking that it matches the
    /// canonical table for `variant`.
    pub fn from_parts(variant: LabelVariant, entries: Vec<(u8, String)>) -> Result<Self> {
        let canonical = LabelTable::new(variant);
        if canonical.entries != entries {
            return Err(Error::Format(format!("label table does not match the '{variant}' variant")));
        }
        Ok(canonical)
    }

    pub fn variant(&self) -> LabelVariant {
        self.variant
    }

    pub fn entries(&self) -> &[(u8, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_id(&self) -> u8 {
        self.entries.iter().map(|(id, _)| *id).max().unwrap_or(0)
    }

    pub fn contains(&self, id: u8) -> bool {
        (id as usize) < self.entries.len()
    }

    pub fn name_of(&self, id: u8) -> Option<&str> {
        self.entries.get(id as usize).map(|(_, n)| n.as_str())
    }

    /// Label id of a full-taxonomy class under this variant.
    pub fn map_class(&self, class: SemanticClass) -> u8 {
        use SemanticClass as C;
        match self.variant {
            LabelVariant::Full => class.id(),
            LabelVariant::Six | LabelVariant::Four | LabelVariant::Binary => {
                let id = match class {
                    C::Car | C::OtherVehicle => 1,
                    C::Bicyclist => 2,
                    C::Pedestrian => 3,
                    C::Building => 4,
                    C::Road => 5,
                    _ => 0,
                };
                if self.contains(id) {
                    id
                } else {
                    0
                }
            }
        }
    }

    /// Whether a label id of this table denotes movable agents.
    pub fn is_movable(&self, id: u8) -> bool {
        match self.variant {
            LabelVariant::Full => SemanticClass::from_id(id).is_some_and(SemanticClass::is_movable),
            _ => (1..=3).contains(&id) && self.contains(id),
        }
    }
}
