//! Region identifiers and their numeric encoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical (code, display name, file slug) triples.
const REGIONS: [(u8, &str, &str); 10] = [
    (0, "Alberta", "alberta"),
    (1, "British Columbia", "british_columbia"),
    (2, "Manitoba", "manitoba"),
    (3, "New Brunswick", "new_brunswick"),
    (4, "Newfoundland and Labrador", "newfoundland_and_labrador"),
    (5, "Nova Scotia", "nova_scotia"),
    (6, "Ontario", "ontario"),
    (7, "Prince Edward Island", "prince_edward_island"),
    (8, "Quebec", "quebec"),
    (9, "Saskatchewan", "saskatchewan"),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegionError {
    #[error("unknown region code {0} (expected 0-9)")]
    UnknownCode(i64),
    #[error("unknown region name {0:?}")]
    UnknownName(String),
    #[error("region code {code} does not match name {name:?}")]
    NameMismatch { code: u8, name: String },
}

/// A province/region, identified by its feature encoding (`feat_04`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct RegionId(u8);

impl RegionId {
    pub const ALBERTA: RegionId = RegionId(0);
    pub const BRITISH_COLUMBIA: RegionId = RegionId(1);
    pub const MANITOBA: RegionId = RegionId(2);
    pub const NEW_BRUNSWICK: RegionId = RegionId(3);
    pub const NEWFOUNDLAND_AND_LABRADOR: RegionId = RegionId(4);
    pub const NOVA_SCOTIA: RegionId = RegionId(5);
    pub const ONTARIO: RegionId = RegionId(6);
    pub const PRINCE_EDWARD_ISLAND: RegionId = RegionId(7);
    pub const QUEBEC: RegionId = RegionId(8);
    pub const SASKATCHEWAN: RegionId = RegionId(9);

    /// The seven provinces with published daily records, in table order.
    pub const BENCHMARK: [RegionId; 7] = [
        Self::ALBERTA,
        Self::BRITISH_COLUMBIA,
        Self::MANITOBA,
        Self::NEW_BRUNSWICK,
        Self::ONTARIO,
        Self::QUEBEC,
        Self::SASKATCHEWAN,
    ];

    pub fn from_code(code: i64) -> Result<Self, RegionError> {
        if (0..10).contains(&code) {
            Ok(RegionId(code as u8))
        } else {
            Err(RegionError::UnknownCode(code))
        }
    }

    /// Accepts either the display name ("British Columbia") or the file slug
    /// ("british_columbia"), case-insensitively.
    pub fn from_name(name: &str) -> Result<Self, RegionError> {
        let wanted = name.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        REGIONS
            .iter()
            .find(|(_, _, slug)| *slug == wanted)
            .map(|(code, _, _)| RegionId(*code))
            .ok_or_else(|| RegionError::UnknownName(name.to_string()))
    }

    pub fn all() -> impl Iterator<Item = RegionId> {
        (0..10u8).map(RegionId)
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        REGIONS[self.0 as usize].1
    }

    /// Lower-case identifier used for `<slug>.csv` file names.
    pub fn slug(self) -> &'static str {
        REGIONS[self.0 as usize].2
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.slug())
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegionId {
    type Err = RegionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().parse::<i64>() {
            Ok(code) => RegionId::from_code(code),
            Err(_) => RegionId::from_name(s),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RegionRepr {
    code: u8,
    name: String,
}

impl From<RegionId> for RegionRepr {
    fn from(r: RegionId) -> Self {
        RegionRepr {
            code: r.code(),
            name: r.name().to_string(),
        }
    }
}

impl TryFrom<RegionRepr> for RegionId {
    type Error = RegionError;

    fn try_from(repr: RegionRepr) -> Result<Self, Self::Error> {
        let region = RegionId::from_code(repr.code as i64)?;
        if RegionId::from_name(&repr.name)? != region {
            return Err(RegionError::NameMismatch {
                code: repr.code,
                name: repr.name,
            });
        }
        Ok(region)
    }
}
