//! Model input features derived from a PMU window.

use crate::attack::PmuWindow;

/// Frequency deviation and rotor angle.
pub const FEATURE_CHANNELS: usize = 2;

/// Flattens a window to `[gen][t][channel]` features: the deviation from
/// nominal, scaled per channel by its largest magnitude in the window so
/// every channel lies in `[-1, 1]`. An all-zero channel stays zero.
///
/// Scaling per window removes the attack gain's magnitude and keeps the
/// spatial and temporal pattern, which is what identifies the attacked bus.
pub fn window_features(window: &PmuWindow) -> Vec<f32> {
    let n = window.n_points();
    let mut scale = [0.0f64; FEATURE_CHANNELS];
    for p in 0..n {
        for (ch, s) in scale.iter_mut().enumerate() {
            *s = s.max(window.deviation(p, ch).abs());
        }
    }
    let mut out = Vec::with_capacity(n * FEATURE_CHANNELS);
    for p in 0..n {
        for (ch, &s) in scale.iter().enumerate() {
            let v = if s > 0.0 && s.is_finite() { window.deviation(p, ch) / s } else { 0.0 };
            out.push(v as f32);
        }
    }
    out
}
