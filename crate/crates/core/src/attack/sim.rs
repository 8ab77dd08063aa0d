//! Fixed-step RK4 integration of `x' = A x + b` from rest.

use nalgebra::{DMatrix, DVector};

use crate::grid::StateSpaceModel;
use crate::{Error, Result};

pub const DEFAULT_DT: f64 = 0.001;
pub const MAX_DT: f64 = 0.005;
/// Covers a 2 s window plus the largest test-time delay.
pub const DEFAULT_DURATION: f64 = 3.0;

/// States on a uniform time grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub n_gen: usize,
    /// Row-major `steps x 2 N_G`; each row is `[delta; omega]`.
    pub states: Vec<f64>,
    /// First time with a non-finite state; the trajectory stops just before it.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len() / (2 * self.n_gen).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Last covered time.
    pub fn duration(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn state(&self, step: usize) -> &[f64] {
        let n = 2 * self.n_gen;
        &self.states[step * n..(step + 1) * n]
    }

    pub fn delta(&self, step: usize) -> &[f64] {
        &self.state(step)[..self.n_gen]
    }

    pub fn omega(&self, step: usize) -> &[f64] {
        &self.state(step)[self.n_gen..]
    }

    pub fn state_norm(&self, step: usize) -> f64 {
        self.state(step).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Classical RK4 over `steps` steps; returns the `steps + 1` visited states
/// (row-major) and the index of the first non-finite step, if any.
pub fn rk4_integrate(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &[f64],
    dt: f64,
    steps: usize,
) -> (Vec<f64>, Option<usize>) {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    assert_eq!(x0.len(), n);
    // row-major copy for the inner loop
    let am: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
    let f = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let row = &am[i * n..(i + 1) * n];
            let mut acc = b[i];
            for (r, xv) in row.iter().zip(x) {
                acc += r * xv;
            }
            out[i] = acc;
        }
    };

    let mut out = Vec::with_capacity((steps + 1) * n);
    out.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let h = dt;
    for step in 1..=steps {
        f(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        let mut finite = true;
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite &= x[i].is_finite();
        }
        if !finite {
            return (out, Some(step));
        }
        out.extend_from_slice(&x);
    }
    (out, None)
}

/// Integrates the model from `x(0) = 0` for `duration` seconds.
pub fn simulate(model: &StateSpaceModel, duration: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::Range(format!("step {dt} s outside (0, {MAX_DT}]")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::Range(format!("invalid duration {duration}")));
    }
    let steps = (duration / dt).round() as usize;
    let x0 = vec![0.0; model.n_state()];
    let (states, bad) = rk4_integrate(&model.a, &model.b, &x0, dt, steps);
    Ok(Trajectory {
        dt,
        n_gen: model.n_gen(),
        states,
        diverged_at: bad.map(|s| s as f64 * dt),
    })
}

/// Reference solution on the same time grid from the exact zero-order-hold
/// discretization `x_{k+1} = e^{A dt} x_k + (int_0^dt e^{A s} ds) b`, both
/// blocks read off the exponential of the augmented matrix `[[A, b], [0, 0]] dt`.
pub fn simulate_exact(model: &StateSpaceModel, duration: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::Range(format!("invalid step {dt} s or duration {duration} s")));
    }
    let n = model.n_state();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&model.a);
    aug.view_mut((0, n), (n, 1)).copy_from(&model.b);
    let phi = (aug * dt).exp();
    let ad = phi.view((0, 0), (n, n)).into_owned();
    let bd = phi.view((0, n), (n, 1)).into_owned();
    let steps = (duration / dt).round() as usize;
    let mut x = DVector::zeros(n);
    let mut states = Vec::with_capacity((steps + 1) * n);
    states.extend(x.iter());
    let mut diverged_at = None;
    for step in 1..=steps {
        x = &ad * &x + &bd;
        if x.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(step as f64 * dt);
            break;
        }
        states.extend(x.iter());
    }
    Ok(Trajectory { dt, n_gen: model.n_gen(), states, diverged_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::AttackScenario;
    use crate::grid::CaseName;

    #[test]
    fn equilibrium_stays_put() {
        let grid = CaseName::Ieee14.load().unwrap();
        let traj = simulate(&grid.nominal(), 1.0, DEFAULT_DT).unwrap();
        assert_eq!(traj.len(), 1001);
        assert!(traj.states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_closed_form() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DVector::from_element(1, 1.0);
        let (s, bad) = rk4_integrate(&a, &b, &[0.0], 0.001, 2000);
        assert!(bad.is_none());
        let x2 = *s.last().unwrap();
        assert!((x2 - (1.0 - (-2.0f64).exp())).abs() < 1e-9, "{x2}");
        assert!((x2 - 0.8647).abs() < 1e-4);
    }

    #[test]
    fn linear_in_forcing() {
        let grid = CaseName::Ieee14.load().unwrap();
        let s = AttackScenario::single_point(9, 1, 0.2, 1.0);
        let m1 = grid.assemble_attack(&s).unwrap();
        let m3 = grid.assemble_attack(&s.scale_static(3.0)).unwrap();
        let t1 = simulate(&m1, 2.0, DEFAULT_DT).unwrap();
        let t3 = simulate(&m3, 2.0, DEFAULT_DT).unwrap();
        for (a, b) in t1.states.iter().zip(&t3.states) {
            assert!((3.0 * a - b).abs() <= 1e-9 * b.abs().max(1e-300) + 1e-18);
        }
    }

    #[test]
    fn divergence_is_flagged() {
        let a = DMatrix::from_element(1, 1, 800.0);
        let b = DVector::from_element(1, 1.0);
        let (s, bad) = rk4_integrate(&a, &b, &[0.0], 0.005, 2000);
        let k = bad.expect("must blow up");
        assert_eq!(s.len(), k);
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn step_bounds() {
        let grid = CaseName::Ieee14.load().unwrap();
        assert!(matches!(simulate(&grid.nominal(), 1.0, 0.01), Err(Error::Range(_))));
    }

    #[test]
    fn rk4_tracks_exact_discretization() {
        use crate::attack::AttackScenario;
        use crate::grid::CaseName;
        let grid = CaseName::Ieee14.load().unwrap();
        let s = AttackScenario::single_point(9, 1, 0.05, 1.5);
        let m = grid.assemble_attack(&s).unwrap();
        let rk = simulate(&m, 2.0, 0.001).unwrap();
        let ex = simulate_exact(&m, 2.0, 0.001).unwrap();
        assert_eq!(rk.len(), ex.len());
        let err = rk.states.iter().zip(&ex.states).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        use crate::attack::AttackScenario;
        use crate::grid::CaseName;
        let grid = CaseName::Ieee14.load().unwrap();
        let m = grid.assemble_attack(&AttackScenario::single_point(4, 0, 0.1, 2.0)).unwrap();
        let err = |dt: f64| {
            let rk = simulate(&m, 1.0, dt).unwrap();
            let ex = simulate_exact(&m, 1.0, dt).unwrap();
            let last = rk.len() - 1;
            rk.state(last).iter().zip(ex.state(last)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = err(0.004) / err(0.002);
        assert!(ratio >= 8.0, "{ratio}");
    }
}
