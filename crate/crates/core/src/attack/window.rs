use super::Trajectory;
use crate::{Error, Result, NOMINAL_HZ};

pub const DEFAULT_SAMPLE_PERIOD: f64 = 0.02;
pub const DEFAULT_WINDOW_LEN: usize = 100;

/// `N_G x T x 2` PMU samples: channel 0 frequency (Hz), channel 1 angle (rad).
#[derive(Debug, Clone, PartialEq)]
pub struct PmuWindow {
    pub n_gen: usize,
    pub len: usize,
    /// Layout `[gen][t][channel]`.
    pub data: Vec<f64>,
    pub t_start: f64,
    pub sample_period: f64,
}

impl PmuWindow {
    /// All samples at 50 Hz / 0 rad.
    pub fn nominal(n_gen: usize, len: usize, sample_period: f64) -> Self {
        let mut data = vec![0.0; n_gen * len * 2];
        for p in data.chunks_mut(2) {
            p[0] = NOMINAL_HZ;
        }
        PmuWindow { n_gen, len, data, t_start: 0.0, sample_period }
    }

    #[inline]
    pub fn idx(&self, gen: usize, t: usize, ch: usize) -> usize {
        (gen * self.len + t) * 2 + ch
    }

    pub fn freq(&self, gen: usize, t: usize) -> f64 {
        self.data[self.idx(gen, t, 0)]
    }

    pub fn angle(&self, gen: usize, t: usize) -> f64 {
        self.data[self.idx(gen, t, 1)]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_gen, self.len)
    }

    pub fn n_points(&self) -> usize {
        self.n_gen * self.len
    }

    /// Deviation from nominal for channel `ch` at flat point index `p`.
    pub fn deviation(&self, p: usize, ch: usize) -> f64 {
        let v = self.data[p * 2 + ch];
        if ch == 0 { v - NOMINAL_HZ } else { v }
    }

    pub fn set_deviation(&mut self, p: usize, ch: usize, dev: f64) {
        self.data[p * 2 + ch] = if ch == 0 { NOMINAL_HZ + dev } else { dev };
    }
}

/// Decimates a trajectory onto the PMU grid by nearest integrator step.
pub fn to_pmu_window(traj: &Trajectory, t_start: f64, len: usize, sample_period: f64) -> Result<PmuWindow> {
    if !(t_start >= 0.0) || !(sample_period > 0.0) {
        return Err(Error::Range(format!(
            "invalid window start {t_start} s or period {sample_period} s"
        )));
    }
    let end = t_start + len as f64 * sample_period;
    let available = traj.duration();
    if end > available + 0.5 * traj.dt {
        return Err(Error::Range(format!(
            "window [{t_start}, {end}] s exceeds the {available} s trajectory"
        )));
    }
    let ng = traj.n_gen;
    let mut w = PmuWindow::nominal(ng, len, sample_period);
    w.t_start = t_start;
    let two_pi = std::f64::consts::TAU;
    for t in 0..len {
        let step = ((t_start + t as f64 * sample_period) / traj.dt).round() as usize;
        let delta = traj.delta(step);
        let omega = traj.omega(step);
        for g in 0..ng {
            let i = w.idx(g, t, 0);
            w.data[i] = NOMINAL_HZ + omega[g] / two_pi;
            w.data[i + 1] = delta[g];
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{simulate, AttackScenario, DEFAULT_DT};
    use crate::grid::CaseName;

    fn attacked_trajectory(duration: f64) -> Trajectory {
        let grid = CaseName::Ieee14.load().unwrap();
        let s = AttackScenario::single_point(10, 3, 0.4, 1.5);
        simulate(&grid.assemble_attack(&s).unwrap(), duration, DEFAULT_DT).unwrap()
    }

    #[test]
    fn zero_trajectory_is_nominal() {
        let grid = CaseName::Ieee14.load().unwrap();
        let traj = simulate(&grid.nominal(), 3.0, DEFAULT_DT).unwrap();
        let w = to_pmu_window(&traj, 0.0, DEFAULT_WINDOW_LEN, DEFAULT_SAMPLE_PERIOD).unwrap();
        assert_eq!(w.len, 100);
        assert_eq!(w, PmuWindow::nominal(5, 100, 0.02));
    }

    #[test]
    fn shifted_start_matches_slice() {
        let traj = attacked_trajectory(3.0);
        let full = to_pmu_window(&traj, 0.0, 150, 0.02).unwrap();
        let late = to_pmu_window(&traj, 0.5, 100, 0.02).unwrap();
        for g in 0..5 {
            for t in 0..100 {
                assert_eq!(late.freq(g, t), full.freq(g, t + 25));
                assert_eq!(late.angle(g, t), full.angle(g, t + 25));
            }
        }
    }

    #[test]
    fn window_past_end_is_range_error() {
        let traj = attacked_trajectory(2.0);
        assert!(to_pmu_window(&traj, 0.0, 100, 0.02).is_ok());
        assert!(matches!(to_pmu_window(&traj, 0.5, 100, 0.02), Err(Error::Range(_))));
    }
}
