//! PMU degradations. All operate on the deviation from nominal
//! (frequency minus 50 Hz, angle as-is).

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attack::{to_pmu_window, PmuWindow, Trajectory, DEFAULT_SAMPLE_PERIOD, DEFAULT_WINDOW_LEN};
use crate::{Error, Result};

/// Outliers scale a point's deviation by `1 + u`, `u ~ U(-0.2, 0.2)`.
pub const OUTLIER_SPREAD: f64 = 0.2;

/// Degradation settings; absent keys leave the data untouched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    pub snr_db: Option<f64>,
    pub drop_frac: Option<f64>,
    pub outlier_frac: Option<f64>,
    pub delay_s: Option<f64>,
}

impl DegradationConfig {
    pub fn is_clean(&self) -> bool {
        self.snr_db.is_none()
            && self.drop_frac.is_none()
            && self.outlier_frac.is_none()
            && self.delay_s.is_none_or(|d| d == 0.0)
    }

    /// Noise, then outliers, then missing points. Delay is applied when the
    /// window is cut from the trajectory, not here.
    pub fn apply(&self, window: &PmuWindow, rng: &mut impl Rng) -> Result<PmuWindow> {
        let mut w = window.clone();
        if let Some(snr) = self.snr_db {
            w = add_gaussian_noise(&w, snr, rng)?;
        }
        if let Some(f) = self.outlier_frac {
            w = inject_outliers(&w, f, rng)?;
        }
        if let Some(f) = self.drop_frac {
            w = drop_points(&w, f, rng)?;
        }
        Ok(w)
    }
}

fn channel_rms(w: &PmuWindow, ch: usize) -> f64 {
    let n = w.n_points();
    let ss: f64 = (0..n).map(|p| w.deviation(p, ch).powi(2)).sum();
    (ss / n as f64).sqrt()
}

/// Adds zero-mean Gaussian noise with per-channel
/// `sigma = rms(deviation) / 10^(snr_db / 20)`. `+inf` leaves the window as is.
pub fn add_gaussian_noise(window: &PmuWindow, snr_db: f64, rng: &mut impl Rng) -> Result<PmuWindow> {
    if snr_db == f64::INFINITY {
        return Ok(window.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Range(format!("SNR {snr_db} dB is not finite")));
    }
    let mut out = window.clone();
    for ch in 0..2 {
        let rms = channel_rms(window, ch);
        if rms == 0.0 {
            return Err(Error::Degenerate(format!(
                "channel {ch} has no deviation from nominal; SNR is undefined"
            )));
        }
        let sigma = rms / 10f64.powf(snr_db / 20.0);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Numeric(e.to_string()))?;
        for p in 0..window.n_points() {
            let dev = window.deviation(p, ch) + normal.sample(rng);
            out.set_deviation(p, ch, dev);
        }
    }
    Ok(out)
}

/// `20 log10(rms(clean deviation) / rms(noisy - clean))` for one channel.
pub fn empirical_snr_db(clean: &PmuWindow, noisy: &PmuWindow, ch: usize) -> f64 {
    let n = clean.n_points();
    let (mut s, mut e) = (0.0, 0.0);
    for p in 0..n {
        let c = clean.deviation(p, ch);
        s += c * c;
        let d = noisy.deviation(p, ch) - c;
        e += d * d;
    }
    10.0 * (s / e).log10()
}

fn point_count(window: &PmuWindow, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Range(format!("fraction {fraction} outside [0, 1]")));
    }
    let n = window.n_points();
    Ok(((fraction * n as f64) + 1e-9).floor().min(n as f64) as usize)
}

/// Replaces `floor(fraction * N_G * T)` random points with 50 Hz / 0 rad.
pub fn drop_points(window: &PmuWindow, fraction: f64, rng: &mut impl Rng) -> Result<PmuWindow> {
    let count = point_count(window, fraction)?;
    let mut out = window.clone();
    for p in index::sample(rng, window.n_points(), count) {
        out.set_deviation(p, 0, 0.0);
        out.set_deviation(p, 1, 0.0);
    }
    Ok(out)
}

/// Scales the deviation of `floor(fraction * N_G * T)` random points by
/// `1 + u` on both channels, `u ~ U(-0.2, 0.2)` drawn per channel.
pub fn inject_outliers(window: &PmuWindow, fraction: f64, rng: &mut impl Rng) -> Result<PmuWindow> {
    let count = point_count(window, fraction)?;
    let mut out = window.clone();
    for p in index::sample(rng, window.n_points(), count) {
        for ch in 0..2 {
            let u = rng.random_range(-OUTLIER_SPREAD..=OUTLIER_SPREAD);
            out.set_deviation(p, ch, window.deviation(p, ch) * (1.0 + u));
        }
    }
    Ok(out)
}

/// The standard 2 s / 20 ms window starting `delay_s` after attack onset.
pub fn delayed_window(traj: &Trajectory, delay_s: f64) -> Result<PmuWindow> {
    if !(delay_s >= 0.0) {
        return Err(Error::Range(format!("delay {delay_s} s must be non-negative")));
    }
    to_pmu_window(traj, delay_s, DEFAULT_WINDOW_LEN, DEFAULT_SAMPLE_PERIOD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{simulate, AttackScenario, DEFAULT_DT};
    use crate::grid::CaseName;
    use crate::NOMINAL_HZ;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_window() -> (PmuWindow, Trajectory) {
        let grid = CaseName::Ieee14.load().unwrap();
        let s = AttackScenario::single_point(11, 1, 0.5, 2.0);
        let traj = simulate(&grid.assemble_attack(&s).unwrap(), 3.0, DEFAULT_DT).unwrap();
        (delayed_window(&traj, 0.0).unwrap(), traj)
    }

    #[test]
    fn infinite_snr_is_identity() {
        let (w, _) = sample_window();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(add_gaussian_noise(&w, f64::INFINITY, &mut rng).unwrap(), w);
    }

    #[test]
    fn noise_hits_target_snr() {
        let (w, _) = sample_window();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for snr in [26.0, 20.0, 16.5] {
            let noisy = add_gaussian_noise(&w, snr, &mut rng).unwrap();
            for ch in 0..2 {
                let got = empirical_snr_db(&w, &noisy, ch);
                assert!((got - snr).abs() < 1.0, "ch {ch}: {got} vs {snr}");
            }
        }
    }

    #[test]
    fn noise_sigma_for_unit_rms() {
        let mut w = PmuWindow::nominal(1, 4, 0.02);
        for p in 0..4 {
            w.set_deviation(p, 0, if p % 2 == 0 { 1.0 } else { -1.0 });
            w.set_deviation(p, 1, 1.0);
        }
        // sigma = 10^(-26/20)
        assert!((10f64.powf(-26.0 / 20.0) - 0.0501).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let big = {
            let mut b = PmuWindow::nominal(100, 1000, 0.02);
            for p in 0..b.n_points() {
                b.set_deviation(p, 0, 1.0);
                b.set_deviation(p, 1, -1.0);
            }
            b
        };
        let noisy = add_gaussian_noise(&big, 26.0, &mut rng).unwrap();
        let n = big.n_points() as f64;
        let sd = ((0..big.n_points()).map(|p| (noisy.deviation(p, 0) - 1.0).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd - 0.0501).abs() < 0.001, "{sd}");
        assert!(add_gaussian_noise(&w, 26.0, &mut rng).is_ok());
    }

    #[test]
    fn nominal_window_is_degenerate() {
        let w = PmuWindow::nominal(3, 10, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(add_gaussian_noise(&w, 20.0, &mut rng), Err(Error::Degenerate(_))));
    }

    #[test]
    fn drop_counts() {
        let (w, _) = sample_window();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(drop_points(&w, 0.0, &mut rng).unwrap(), w);
        let all = drop_points(&w, 1.0, &mut rng).unwrap();
        assert!(all.data.chunks(2).all(|p| p[0] == NOMINAL_HZ && p[1] == 0.0));
        let mut grid7 = PmuWindow::nominal(7, 100, 0.02);
        for p in 0..700 {
            grid7.set_deviation(p, 0, 0.5);
            grid7.set_deviation(p, 1, 0.25);
        }
        let d = drop_points(&grid7, 0.04, &mut rng).unwrap();
        let replaced = d.data.chunks(2).filter(|p| p[0] == NOMINAL_HZ && p[1] == 0.0).count();
        assert_eq!(replaced, 28);
        assert!(matches!(drop_points(&w, 1.5, &mut rng), Err(Error::Range(_))));
        assert!(matches!(inject_outliers(&w, -0.1, &mut rng), Err(Error::Range(_))));
    }

    #[test]
    fn outliers_stay_within_twenty_percent() {
        let (w, _) = sample_window();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(inject_outliers(&w, 0.0, &mut rng).unwrap(), w);
        let o = inject_outliers(&w, 0.08, &mut rng).unwrap();
        let mut changed = 0;
        for p in 0..w.n_points() {
            for ch in 0..2 {
                let (a, b) = (w.deviation(p, ch), o.deviation(p, ch));
                if a != b {
                    changed += 1;
                }
                assert!((b - a).abs() <= OUTLIER_SPREAD * a.abs() * (1.0 + 1e-9) + 1e-12);
            }
        }
        assert!(changed > 0);
        // angle of -0.015 rad lands in [-0.018, -0.012]
        let mut one = PmuWindow::nominal(1, 1, 0.02);
        one.set_deviation(0, 1, -0.015);
        one.set_deviation(0, 0, 0.1);
        for _ in 0..100 {
            let v = inject_outliers(&one, 1.0, &mut rng).unwrap().angle(0, 0);
            assert!((-0.018 - 1e-15..=-0.012 + 1e-15).contains(&v), "{v}");
        }
    }

    #[test]
    fn delay_shifts_by_whole_samples() {
        let (_, traj) = sample_window();
        let base = delayed_window(&traj, 0.0).unwrap();
        for k in [1usize, 5, 25] {
            let shifted = delayed_window(&traj, 0.02 * k as f64).unwrap();
            for g in 0..base.n_gen {
                for t in 0..100 - k {
                    assert_eq!(shifted.freq(g, t), base.freq(g, t + k));
                }
                // the k appended samples come from the full-resolution trajectory
                for t in 100 - k..100 {
                    let step = ((0.02 * (k + t) as f64) / traj.dt).round() as usize;
                    assert_eq!(shifted.angle(g, t), traj.delta(step)[g]);
                }
            }
        }
        assert!(matches!(delayed_window(&traj, 1.5), Err(Error::Range(_))));
    }
}
