//! Post-hoc check of the attack limit `|K_L,v . omega(t)| <= (P_LV,v - eps_v) / 2`.

use serde::{Deserialize, Serialize};

use super::{AttackScenario, Trajectory};
use crate::grid::BusTopology;
use crate::{Error, Result};

/// Vulnerable share of each load bus: `max(fraction * P_load, floor_mw)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VulnerableLoad {
    pub fraction: f64,
    pub floor_mw: f64,
}

impl Default for VulnerableLoad {
    fn default() -> Self {
        VulnerableLoad { fraction: 0.5, floor_mw: 20.0 }
    }
}

impl VulnerableLoad {
    /// Per load bus, in load-bus order (MW).
    pub fn per_bus(&self, topology: &BusTopology) -> Vec<f64> {
        topology
            .load_buses
            .iter()
            .map(|&b| (self.fraction * topology.load_mw(b).max(0.0)).max(self.floor_mw))
            .collect()
    }
}

/// Smallest slack `(P_LV,v - eps_v)/2 - |K_L,v . omega(t)|` over time and
/// attacked rows (MW). Errors when a static step exceeds its vulnerable load.
pub fn limit_margin(
    scenario: &AttackScenario,
    trajectory: &Trajectory,
    p_lv_mw: &[f64],
    topology: &BusTopology,
) -> Result<f64> {
    if p_lv_mw.len() != topology.n_load() {
        return Err(Error::Shape(format!(
            "{} vulnerable-load entries for {} load buses",
            p_lv_mw.len(),
            topology.n_load()
        )));
    }
    let gain = scenario.gain_matrix(topology)?;
    let eps = scenario.epsilon_mw(topology)?;
    for (v, (&e, &p)) in eps.iter().zip(p_lv_mw).enumerate() {
        if e > p {
            return Err(Error::InvalidScenario(format!(
                "static attack {e} MW on bus {} exceeds its vulnerable load {p} MW",
                topology.load_buses[v]
            )));
        }
    }
    let rows: Vec<usize> = (0..gain.nrows())
        .filter(|&r| gain.row(r).iter().any(|&k| k != 0.0))
        .collect();
    let mut margin = f64::INFINITY;
    for &v in &rows {
        let bound = (p_lv_mw[v] - eps[v]) / 2.0;
        for step in 0..trajectory.len() {
            let omega = trajectory.omega(step);
            let load_pu: f64 = gain.row(v).iter().zip(omega).map(|(k, w)| k * w).sum();
            let mw = (load_pu * topology.base_mva).abs();
            margin = margin.min(bound - mw);
        }
    }
    Ok(margin)
}

/// True iff the attack stays within its limit over the whole trajectory.
pub fn validate_limit(
    scenario: &AttackScenario,
    trajectory: &Trajectory,
    p_lv_mw: &[f64],
    topology: &BusTopology,
) -> Result<bool> {
    Ok(trajectory.diverged_at.is_none() && limit_margin(scenario, trajectory, p_lv_mw, topology)? >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{simulate, DEFAULT_DT};
    use crate::grid::CaseName;

    #[test]
    fn zero_gain_always_passes() {
        let grid = CaseName::Ieee14.load().unwrap();
        let s = AttackScenario::single_point(9, 0, 0.0, 2.0);
        let traj = simulate(&grid.assemble_attack(&s).unwrap(), 3.0, DEFAULT_DT).unwrap();
        let p = VulnerableLoad::default().per_bus(&grid.topology);
        assert!(validate_limit(&s, &traj, &p, &grid.topology).unwrap());
    }

    #[test]
    fn exhausted_vulnerable_load_fails() {
        let grid = CaseName::Ieee14.load().unwrap();
        let p = VulnerableLoad::default().per_bus(&grid.topology);
        let v = grid.topology.load_ordinal(9).unwrap();
        let s = AttackScenario::single_point(9, 0, 0.3, p[v]);
        let traj = simulate(&grid.assemble_attack(&s).unwrap(), 1.0, DEFAULT_DT).unwrap();
        assert!(!validate_limit(&s, &traj, &p, &grid.topology).unwrap());
    }

    #[test]
    fn oversized_static_step_is_invalid() {
        let grid = CaseName::Ieee14.load().unwrap();
        let p = VulnerableLoad::default().per_bus(&grid.topology);
        let v = grid.topology.load_ordinal(9).unwrap();
        let s = AttackScenario::single_point(9, 0, 0.3, p[v] + 1.0);
        let traj = simulate(&grid.assemble_attack(&s).unwrap(), 0.1, DEFAULT_DT).unwrap();
        assert!(matches!(
            validate_limit(&s, &traj, &p, &grid.topology),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn zero_load_buses_get_the_floor() {
        let grid = CaseName::Ieee14.load().unwrap();
        let p = VulnerableLoad::default().per_bus(&grid.topology);
        let v7 = grid.topology.load_ordinal(7).unwrap();
        assert_eq!(p[v7], 20.0);
        let v4 = grid.topology.load_ordinal(4).unwrap();
        assert!((p[v4] - 23.9).abs() < 1e-12);
    }
}
