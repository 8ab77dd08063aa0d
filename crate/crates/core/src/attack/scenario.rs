use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{classify_stability, eigenvalues, BusTopology, GridModel, StabilityReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Static step and dynamic gain on the same bus.
    SinglePoint,
    /// Dynamic gain on the label bus, static steps elsewhere.
    MultiPoint,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::SinglePoint => "single_point",
            AttackKind::MultiPoint => "multi_point",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_point" | "single" => Ok(AttackKind::SinglePoint),
            "multi_point" | "multi" => Ok(AttackKind::MultiPoint),
            other => Err(Error::Config(format!("unknown attack kind '{other}'"))),
        }
    }
}

/// One non-zero entry of `K_L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEntry {
    pub load_bus: u32,
    /// Column of `K_L`: position in the ordered generator-bus list.
    pub gen_ordinal: usize,
    pub gain_pu: f64,
}

/// One non-zero entry of the static step `eps_L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticEntry {
    pub load_bus: u32,
    pub mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackScenario {
    pub kind: AttackKind,
    /// Source bus of the dynamic attack; the class label.
    pub label_bus: u32,
    pub gains: Vec<GainEntry>,
    pub statics: Vec<StaticEntry>,
}

impl AttackScenario {
    pub fn single_point(label_bus: u32, gen_ordinal: usize, gain_pu: f64, eps_mw: f64) -> Self {
        AttackScenario {
            kind: AttackKind::SinglePoint,
            label_bus,
            gains: vec![GainEntry { load_bus: label_bus, gen_ordinal, gain_pu }],
            statics: vec![StaticEntry { load_bus: label_bus, mw: eps_mw }],
        }
    }

    pub fn multi_point(label_bus: u32, gen_ordinal: usize, gain_pu: f64, statics: Vec<StaticEntry>) -> Self {
        AttackScenario {
            kind: AttackKind::MultiPoint,
            label_bus,
            gains: vec![GainEntry { load_bus: label_bus, gen_ordinal, gain_pu }],
            statics,
        }
    }

    /// Checks bus membership and the single/multi-point placement rules.
    pub fn validate(&self, topology: &BusTopology) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if topology.load_ordinal(self.label_bus).is_none() {
            return bad(format!("label bus {} is not a load bus", self.label_bus));
        }
        for g in &self.gains {
            if topology.load_ordinal(g.load_bus).is_none() {
                return bad(format!("gain row {} is not a load bus", g.load_bus));
            }
            if g.gen_ordinal >= topology.n_gen() {
                return bad(format!("generator ordinal {} out of range", g.gen_ordinal));
            }
            if g.gain_pu != 0.0 && g.load_bus != self.label_bus {
                return bad(format!("gain on bus {} but label is {}", g.load_bus, self.label_bus));
            }
        }
        for s in &self.statics {
            if topology.load_ordinal(s.load_bus).is_none() {
                return bad(format!("static attack on non-load bus {}", s.load_bus));
            }
            if self.kind == AttackKind::SinglePoint && s.mw != 0.0 && s.load_bus != self.label_bus {
                return bad(format!(
                    "single-point static attack on bus {} but label is {}",
                    s.load_bus, self.label_bus
                ));
            }
        }
        Ok(())
    }

    /// Dense `K_L` (`N_L x N_G`, pu).
    pub fn gain_matrix(&self, topology: &BusTopology) -> Result<DMatrix<f64>> {
        self.validate(topology)?;
        let mut k = DMatrix::zeros(topology.n_load(), topology.n_gen());
        for g in &self.gains {
            let row = topology.load_ordinal(g.load_bus).expect("validated");
            k[(row, g.gen_ordinal)] += g.gain_pu;
        }
        Ok(k)
    }

    /// Dense `eps_L` (`N_L`, MW).
    pub fn epsilon_mw(&self, topology: &BusTopology) -> Result<DVector<f64>> {
        self.validate(topology)?;
        let mut e = DVector::zeros(topology.n_load());
        for s in &self.statics {
            e[topology.load_ordinal(s.load_bus).expect("validated")] += s.mw;
        }
        Ok(e)
    }

    pub fn static_mw_at(&self, bus: u32) -> f64 {
        self.statics.iter().filter(|s| s.load_bus == bus).map(|s| s.mw).sum()
    }

    /// Scales the static step; the linear response scales with it.
    pub fn scale_static(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for e in &mut s.statics {
            e.mw *= factor;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: AttackKind,
    /// Static step magnitude range (MW).
    pub eps_range_mw: (f64, f64),
    /// Gain magnitude range (pu); `None` uses the case default `[0, gain_max]`.
    pub gain_range: Option<(f64, f64)>,
    /// Screen rejections allowed before giving up on a label bus.
    pub max_rejections: usize,
    /// Number of extra static-attack buses for multi-point attacks.
    pub extra_static_buses: (usize, usize),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: AttackKind::SinglePoint,
            eps_range_mw: (0.1, 2.5),
            gain_range: None,
            max_rejections: 1000,
            extra_static_buses: (1, 3),
        }
    }
}

impl ScenarioConfig {
    pub fn gain_range_for(&self, grid: &GridModel) -> (f64, f64) {
        self.gain_range.unwrap_or((0.0, grid.gain_max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledScenario {
    pub scenario: AttackScenario,
    pub report: StabilityReport,
    /// Screen rejections consumed before acceptance.
    pub rejections: usize,
}

/// Eigenvalue screen of the attacked system matrix.
pub fn screen(grid: &GridModel, scenario: &AttackScenario) -> Result<StabilityReport> {
    let model = grid.assemble_attack(scenario)?;
    Ok(classify_stability(&eigenvalues(&model.a)?))
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo { rng.random_range(lo..hi) } else { lo }
}

/// Draws an attack on `label_bus` (uniform over load buses when `None`)
/// whose system matrix the stability screen flags as unstable or
/// semi-unstable. The sensed generator and gain magnitude are redrawn on
/// every rejection.
pub fn sample_scenario(
    rng: &mut impl Rng,
    grid: &GridModel,
    config: &ScenarioConfig,
    label_bus: Option<u32>,
) -> Result<SampledScenario> {
    let topo = &grid.topology;
    let label = match label_bus {
        Some(b) => b,
        None => *topo.load_buses.choose(rng).expect("validated topology has load buses"),
    };
    if topo.load_ordinal(label).is_none() {
        return Err(Error::Config(format!("bus {label} is not a load bus")));
    }
    let (glo, ghi) = config.gain_range_for(grid);
    if !(glo >= 0.0 && ghi >= glo) {
        return Err(Error::Config(format!("invalid gain range ({glo}, {ghi})")));
    }
    let (elo, ehi) = config.eps_range_mw;
    if !(elo >= 0.0 && ehi >= elo) {
        return Err(Error::Config(format!("invalid static range ({elo}, {ehi})")));
    }

    for attempt in 0..=config.max_rejections {
        let gen = rng.random_range(0..topo.n_gen());
        let gain = uniform(rng, (glo, ghi));
        let probe = AttackScenario::single_point(label, gen, gain, 0.0);
        let report = screen(grid, &probe)?;
        if !report.class.is_attack() {
            continue;
        }
        let scenario = match config.kind {
            AttackKind::SinglePoint => AttackScenario::single_point(label, gen, gain, uniform(rng, (elo, ehi))),
            AttackKind::MultiPoint => {
                let others: Vec<u32> = topo.load_buses.iter().copied().filter(|&b| b != label).collect();
                let (lo, hi) = config.extra_static_buses;
                let count = rng.random_range(lo.max(1)..=hi.max(lo.max(1))).min(others.len());
                let picks: Vec<u32> = others.choose_multiple(rng, count).copied().collect();
                let statics = picks
                    .into_iter()
                    .map(|b| StaticEntry { load_bus: b, mw: uniform(rng, (elo, ehi)) })
                    .collect();
                AttackScenario::multi_point(label, gen, gain, statics)
            }
        };
        return Ok(SampledScenario { scenario, report, rejections: attempt });
    }
    Err(Error::Sampling(format!(
        "bus {label}: no unstable or semi-unstable gain found in {} draws over [{glo}, {ghi}] pu",
        config.max_rejections + 1
    )))
}
