//! Eigenvalue-based stability screen.
//!
//! Unstable: some eigenvalue has real part above [`UNSTABLE_REAL_TOL`].
//! Semi-unstable: otherwise, some oscillatory pair has damping ratio at most
//! 3 % with natural frequency within 2.5..=12.6 rad/s (NERC criterion).

use super::eigen::Complex64;

pub const UNSTABLE_REAL_TOL: f64 = 1e-9;
pub const SEMI_UNSTABLE_MAX_DAMPING: f64 = 0.03;
pub const SEMI_UNSTABLE_WN_RANGE: (f64, f64) = (2.5, 12.6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StabilityClass {
    Stable,
    SemiUnstable,
    Unstable,
}

impl StabilityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::Stable => "stable",
            StabilityClass::SemiUnstable => "semi_unstable",
            StabilityClass::Unstable => "unstable",
        }
    }

    /// Whether the screen accepts the scenario as an attack.
    pub fn is_attack(self) -> bool {
        self != StabilityClass::Stable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex64>,
    pub class: StabilityClass,
    /// Max-real-part eigenvalue (unstable, stable) or the least-damped
    /// qualifying mode (semi-unstable). `None` only for an empty input.
    pub witness: Option<Complex64>,
}

/// Damping ratio `-a/|lambda|`.
pub fn damping_ratio(l: Complex64) -> f64 {
    -l.re / l.norm()
}

fn is_oscillatory(l: Complex64) -> bool {
    l.im.abs() > UNSTABLE_REAL_TOL * l.norm().max(1.0)
}

pub fn classify_stability(eigs: &[Complex64]) -> StabilityReport {
    let max_re = eigs
        .iter()
        .copied()
        .max_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)));
    let Some(top) = max_re else {
        return StabilityReport {
            eigenvalues: Vec::new(),
            class: StabilityClass::Stable,
            witness: None,
        };
    };
    if top.re > UNSTABLE_REAL_TOL {
        return StabilityReport {
            eigenvalues: eigs.to_vec(),
            class: StabilityClass::Unstable,
            witness: Some(top),
        };
    }
    let (lo, hi) = SEMI_UNSTABLE_WN_RANGE;
    let semi = eigs
        .iter()
        .copied()
        .filter(|&l| l.im > 0.0 && is_oscillatory(l))
        .filter(|&l| {
            let wn = l.norm();
            damping_ratio(l) <= SEMI_UNSTABLE_MAX_DAMPING && (lo..=hi).contains(&wn)
        })
        .min_by(|a, b| damping_ratio(*a).total_cmp(&damping_ratio(*b)));
    match semi {
        Some(w) => StabilityReport {
            eigenvalues: eigs.to_vec(),
            class: StabilityClass::SemiUnstable,
            witness: Some(w),
        },
        None => StabilityReport {
            eigenvalues: eigs.to_vec(),
            class: StabilityClass::Stable,
            witness: Some(top),
        },
    }
}
