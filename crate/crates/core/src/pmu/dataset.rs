//! Labeled PMU datasets: Monte Carlo generation and stratified splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::DegradationConfig;
use crate::attack::{
    sample_scenario, simulate, to_pmu_window, validate_limit, AttackScenario, PmuWindow, ScenarioConfig, Trajectory,
    VulnerableLoad, DEFAULT_DT, DEFAULT_DURATION, DEFAULT_SAMPLE_PERIOD, DEFAULT_WINDOW_LEN,
};
use crate::exec::{map_indexed, ExecMode};
use crate::grid::GridModel;
use crate::rng::{stream, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Split::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            o => Err(Error::Config(format!("unknown split '{o}'"))),
        }
    }
}

/// One labeled observation. The scenario is kept so test-time variants
/// (e.g. delayed windows) can be regenerated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: PmuWindow,
    pub class: usize,
    pub scenario: AttackScenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    /// Verbatim run configuration (structured text).
    pub config: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub case: String,
    pub split: Split,
    /// Class index to load-bus id.
    pub class_map: Vec<u32>,
    pub n_gen: usize,
    pub window_len: usize,
    pub sample_period: f64,
    pub provenance: Provenance,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_map.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.class >= self.class_map.len() {
                return Err(Error::Format(format!("sample {i}: class {} out of range", s.class)));
            }
            if s.window.shape() != (self.n_gen, self.window_len) {
                return Err(Error::Format(format!("sample {i}: window shape {:?}", s.window.shape())));
            }
            if self.class_map[s.class] != s.scenario.label_bus {
                return Err(Error::Format(format!("sample {i}: label does not match its scenario")));
            }
        }
        Ok(())
    }
}

/// Monte Carlo generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub scenario: ScenarioConfig,
    pub vulnerable: VulnerableLoad,
    pub dt: f64,
    pub duration: f64,
    pub window_len: usize,
    pub sample_period: f64,
    /// Attempts per sample when the attack limit or divergence rejects a run.
    pub max_limit_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            scenario: ScenarioConfig::default(),
            vulnerable: VulnerableLoad::default(),
            dt: DEFAULT_DT,
            duration: DEFAULT_DURATION,
            window_len: DEFAULT_WINDOW_LEN,
            sample_period: DEFAULT_SAMPLE_PERIOD,
            max_limit_retries: 500,
        }
    }
}

/// Simulates a scenario under the generation settings.
pub fn generate_trajectory(grid: &GridModel, scenario: &AttackScenario, cfg: &GenConfig) -> Result<Trajectory> {
    simulate(&grid.assemble_attack(scenario)?, cfg.duration, cfg.dt)
}

/// Generates `n` samples. Sample `i` targets load bus `i mod N_L` and draws
/// from its own random stream, so the result is independent of execution mode.
/// Scenarios whose run diverges or breaks the attack limit are redrawn.
pub fn generate_samples(grid: &GridModel, cfg: &GenConfig, seed: u64, n: usize, mode: ExecMode) -> Result<Vec<Sample>> {
    let topo = &grid.topology;
    let p_lv = cfg.vulnerable.per_bus(topo);
    let nl = topo.n_load();
    let results = map_indexed(mode, n, |i| -> Result<Sample> {
        let mut rng = stream(seed, Stream::Scenario, i as u64);
        let class = i % nl;
        let bus = topo.load_buses[class];
        for _ in 0..cfg.max_limit_retries.max(1) {
            let drawn = sample_scenario(&mut rng, grid, &cfg.scenario, Some(bus))?;
            let traj = generate_trajectory(grid, &drawn.scenario, cfg)?;
            match validate_limit(&drawn.scenario, &traj, &p_lv, topo) {
                Ok(true) => {
                    let window = to_pmu_window(&traj, 0.0, cfg.window_len, cfg.sample_period)?;
                    return Ok(Sample { window, class, scenario: drawn.scenario });
                }
                Ok(false) | Err(Error::InvalidScenario(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Sampling(format!(
            "bus {bus}: no scenario within the attack limit after {} draws",
            cfg.max_limit_retries
        )))
    });
    results.into_iter().collect()
}

/// Split sizes that sum to `n`, each within one of `frac * n`.
pub fn split_counts(n: usize, fracs: [f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for s in interleaved_assignment(n, fracs) {
        counts[s] += 1;
    }
    counts
}

/// Assigns a split to each position of a sequence by largest deficit, so
/// any prefix gets near-proportional shares.
fn interleaved_assignment(n: usize, fracs: [f64; 3]) -> Vec<usize> {
    let mut counts = [0usize; 3];
    (0..n)
        .map(|i| {
            let s = (0..3)
                .max_by(|&a, &b| {
                    let da = fracs[a] * (i + 1) as f64 - counts[a] as f64;
                    let db = fracs[b] * (i + 1) as f64 - counts[b] as f64;
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .unwrap();
            counts[s] += 1;
            s
        })
        .collect()
}

/// Stratified random split into train/val/test.
///
/// Samples are shuffled within each class and laid out class by class; split
/// membership is then dealt by largest-deficit interleaving, which keeps the
/// split totals within one of `frac * n` and each class near-proportional.
/// `degrade` is applied to val/test windows, and to train too when
/// `degrade_train` is set, each sample with its own stream.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    samples: Vec<Sample>,
    case: &str,
    class_map: Vec<u32>,
    fracs: [f64; 3],
    degrade: &DegradationConfig,
    degrade_train: bool,
    provenance: Provenance,
) -> Result<[Dataset; 3]> {
    let total: f64 = fracs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || fracs.iter().any(|&f| f < 0.0) {
        return Err(Error::Config(format!("split fractions {fracs:?} must be non-negative and sum to 1")));
    }
    let first = samples.first().map(|s| (s.window.n_gen, s.window.len, s.window.sample_period));
    let (n_gen, window_len, sample_period) = first.unwrap_or((0, 0, DEFAULT_SAMPLE_PERIOD));
    for s in &samples {
        if s.window.shape() != (n_gen, window_len) {
            return Err(Error::Shape("samples do not share one window shape".into()));
        }
        if s.class >= class_map.len() {
            return Err(Error::Shape(format!("class {} outside the class map", s.class)));
        }
    }
    let seed = provenance.seed;
    let mut rng = stream(seed, Stream::Split, 0);

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.class).or_default().push(i);
    }
    let order: Vec<usize> = if by_class.values().any(|v| v.len() < 3) {
        log::warn!("a class has fewer than 3 samples; falling back to an unstratified shuffle");
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        idx.shuffle(&mut rng);
        idx
    } else {
        let mut order = Vec::with_capacity(samples.len());
        for idx in by_class.values_mut() {
            idx.shuffle(&mut rng);
            order.extend_from_slice(idx);
        }
        order
    };
    let assignment = interleaved_assignment(order.len(), fracs);

    let mut parts: [Vec<(usize, Sample)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut slots: Vec<Option<Sample>> = samples.into_iter().map(Some).collect();
    for (&i, &s) in order.iter().zip(&assignment) {
        parts[s].push((i, slots[i].take().expect("each index used once")));
    }
    let mut out = Vec::with_capacity(3);
    for (k, part) in parts.into_iter().enumerate() {
        let split = Split::ALL[k];
        let mut part = part;
        // shuffle the stratified layout so classes are mixed within a split
        part.shuffle(&mut rng);
        let apply = !degrade.is_clean() && (split != Split::Train || degrade_train);
        let samples = part
            .into_iter()
            .map(|(i, mut s)| {
                if apply {
                    let mut r = stream(seed, Stream::Degrade, i as u64);
                    s.window = degrade.apply(&s.window, &mut r)?;
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Dataset {
            case: case.to_string(),
            split,
            class_map: class_map.clone(),
            n_gen,
            window_len,
            sample_period,
            provenance: provenance.clone(),
            samples,
        });
    }
    Ok(out.try_into().expect("three splits"))
}
