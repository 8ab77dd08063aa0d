//! Attack scenarios, simulation of the attacked grid, PMU sampling, and the
//! attack-limit filter.

mod limit;
mod scenario;
mod sim;
mod window;

pub use limit::{limit_margin, validate_limit, VulnerableLoad};
pub use scenario::{
    sample_scenario, screen, AttackKind, AttackScenario, GainEntry, SampledScenario, ScenarioConfig,
    StaticEntry,
};
pub use sim::{rk4_integrate, simulate, simulate_exact, Trajectory, DEFAULT_DT, DEFAULT_DURATION, MAX_DT};
pub use window::{to_pmu_window, PmuWindow, DEFAULT_SAMPLE_PERIOD, DEFAULT_WINDOW_LEN};
