use serde::Deserialize;

use super::BusTopology;
use crate::{Error, Result};

/// Generator and load dynamic parameters (per unit).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicParams {
    pub inertia: Vec<f64>,
    pub gen_damping: Vec<f64>,
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub load_damping: Vec<f64>,
}

impl DynamicParams {
    pub fn validate(&self, topology: &BusTopology) -> Result<()> {
        let ng = topology.n_gen();
        for (name, v) in [
            ("inertia", &self.inertia),
            ("generator damping", &self.gen_damping),
            ("kp", &self.kp),
            ("ki", &self.ki),
        ] {
            if v.len() != ng {
                return Err(Error::Config(format!(
                    "{name} has {} entries, case has {ng} generators",
                    v.len()
                )));
            }
        }
        if self.load_damping.len() != topology.n_load() {
            return Err(Error::Config(format!(
                "load damping has {} entries, case has {} load buses",
                self.load_damping.len(),
                topology.n_load()
            )));
        }
        if self.inertia.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Config("all inertias must be positive".into()));
        }
        if self.ki.iter().any(|&k| k < 0.0) {
            return Err(Error::Config("integral gains must be non-negative".into()));
        }
        if self.load_damping.iter().any(|&d| d < 0.0) {
            return Err(Error::Config("load damping must be non-negative".into()));
        }
        Ok(())
    }
}

/// Contents of a `data/params/<case>.toml` file.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseParams {
    pub case: String,
    pub dynamics: DynamicParams,
    /// Upper end of the attack-gain sampling range (pu).
    pub gain_max: f64,
}

#[derive(Deserialize)]
struct RawParams {
    case: String,
    generators: RawGenerators,
    loads: RawLoads,
    attack: RawAttack,
}

#[derive(Deserialize)]
struct RawGenerators {
    inertia: Vec<f64>,
    damping: Vec<f64>,
    kp: Vec<f64>,
    ki: Vec<f64>,
}

#[derive(Deserialize)]
struct RawLoads {
    damping: f64,
}

#[derive(Deserialize)]
struct RawAttack {
    gain_max: f64,
}

impl CaseParams {
    pub fn from_toml(text: &str, topology: &BusTopology) -> Result<Self> {
        let raw: RawParams =
            toml::from_str(text).map_err(|e| Error::Config(format!("parameter file: {e}")))?;
        let dynamics = DynamicParams {
            inertia: raw.generators.inertia,
            gen_damping: raw.generators.damping,
            kp: raw.generators.kp,
            ki: raw.generators.ki,
            load_damping: vec![raw.loads.damping; topology.n_load()],
        };
        dynamics.validate(topology)?;
        if !(raw.attack.gain_max > 0.0) {
            return Err(Error::Config("attack.gain_max must be positive".into()));
        }
        Ok(CaseParams {
            case: raw.case,
            dynamics,
            gain_max: raw.attack.gain_max,
        })
    }
}
