use std::fmt;
use std::str::FromStr;

use super::{parse_case, BusTopology, CaseParams, GridModel};
use crate::{Error, Result};

/// The three vendored IEEE cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseName {
    Ieee14,
    Ieee39,
    Ieee57,
}

impl CaseName {
    pub const ALL: [CaseName; 3] = [CaseName::Ieee14, CaseName::Ieee39, CaseName::Ieee57];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseName::Ieee14 => "ieee14",
            CaseName::Ieee39 => "ieee39",
            CaseName::Ieee57 => "ieee57",
        }
    }

    pub fn case_text(self) -> &'static str {
        match self {
            CaseName::Ieee14 => include_str!("../../../../data/cases/case14.m"),
            CaseName::Ieee39 => include_str!("../../../../data/cases/case39.m"),
            CaseName::Ieee57 => include_str!("../../../../data/cases/case57.m"),
        }
    }

    pub fn params_text(self) -> &'static str {
        match self {
            CaseName::Ieee14 => include_str!("../../../../data/params/case14.toml"),
            CaseName::Ieee39 => include_str!("../../../../data/params/case39.toml"),
            CaseName::Ieee57 => include_str!("../../../../data/params/case57.toml"),
        }
    }

    pub fn topology(self) -> Result<BusTopology> {
        parse_case(self.case_text())
    }

    pub fn params(self) -> Result<CaseParams> {
        CaseParams::from_toml(self.params_text(), &self.topology()?)
    }

    pub fn load(self) -> Result<GridModel> {
        let topology = self.topology()?;
        let params = CaseParams::from_toml(self.params_text(), &topology)?;
        GridModel::new(self.as_str(), topology, params.dynamics, params.gain_max)
    }
}

impl fmt::Display for CaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ieee14" | "case14" | "14" => Ok(CaseName::Ieee14),
            "ieee39" | "case39" | "39" => Ok(CaseName::Ieee39),
            "ieee57" | "case57" | "57" => Ok(CaseName::Ieee57),
            other => Err(Error::Config(format!("unknown case '{other}'"))),
        }
    }
}
