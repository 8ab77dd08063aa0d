//! Localization accuracy and the robustness suites.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{map_indexed, ExecMode};
use crate::grid::GridModel;
use crate::pmu::{add_gaussian_noise, delayed_window, drop_points, generate_trajectory, inject_outliers, Dataset, GenConfig};
use crate::rng::{mix, stream, Stream};
use crate::train::{csv_err, FeatureSet, Model};
use crate::{Error, Result};

/// Episode-averaged accuracy: the test sequence is cut into `episodes`
/// contiguous batches of near-equal size and the per-batch fractions correct
/// are averaged.
pub fn accuracy(preds: &[usize], labels: &[usize], episodes: usize) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    episode_accuracy(preds, labels, &episode_sizes(preds.len(), episodes)?)
}

/// Accuracy over explicitly sized contiguous episodes.
pub fn episode_accuracy(preds: &[usize], labels: &[usize], sizes: &[usize]) -> Result<f64> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Shape("empty episode".into()));
    }
    if sizes.iter().sum::<usize>() != preds.len() || preds.len() != labels.len() {
        return Err(Error::Shape("episode sizes do not cover the test set".into()));
    }
    let mut start = 0;
    let mut total = 0.0;
    for &q in sizes {
        let c = (start..start + q).filter(|&i| preds[i] == labels[i]).count();
        total += c as f64 / q as f64;
        start += q;
    }
    Ok(total / sizes.len() as f64)
}

/// Near-equal contiguous episode sizes; the first `n % episodes` get one more.
pub fn episode_sizes(n: usize, episodes: usize) -> Result<Vec<usize>> {
    if episodes == 0 || episodes > n {
        return Err(Error::Shape(format!("{episodes} episodes over {n} test samples leaves an episode empty")));
    }
    Ok((0..episodes).map(|i| n / episodes + usize::from(i < n % episodes)).collect())
}

/// Episodes used for a test set of `n`: `n / 20`, at least one.
pub fn default_episodes(n: usize) -> usize {
    (n / 20).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Clean,
    Noise,
    MissingOutlier,
    Delay,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Clean, Suite::Noise, Suite::MissingOutlier, Suite::Delay];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Clean => "clean",
            Suite::Noise => "noise",
            Suite::MissingOutlier => "missing_outlier",
            Suite::Delay => "delay",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}' (expected clean, noise, missing_outlier or delay)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub snr_db: Vec<f64>,
    /// Per-window missing-point fraction is drawn uniformly from this range.
    pub drop_frac: (f64, f64),
    /// Per-window outlier fraction is drawn uniformly from this range.
    pub outlier_frac: (f64, f64),
    pub delays_s: Vec<f64>,
    /// Fill `latency_ms`; off by default so reports stay byte-reproducible.
    pub measure_latency: bool,
    pub latency_repeats: usize,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            snr_db: vec![26.0, 20.0, 16.5],
            drop_frac: (0.03, 0.05),
            outlier_frac: (0.03, 0.08),
            delays_s: (0..=10).map(|k| k as f64 / 10.0).collect(),
            measure_latency: false,
            latency_repeats: 50,
            batch_size: 32,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |(a, b): (f64, f64)| (0.0..=1.0).contains(&a) && (a..=1.0).contains(&b);
        if !frac_ok(self.drop_frac) || !frac_ok(self.outlier_frac) {
            return Err(Error::Config("degradation fractions must satisfy 0 <= lo <= hi <= 1".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) || self.delays_s.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Config("SNR levels must be numbers and delays non-negative".into()));
        }
        if self.batch_size == 0 || self.latency_repeats == 0 {
            return Err(Error::Config("batch_size and latency_repeats must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub case: String,
    pub suite: Suite,
    pub condition: String,
    pub accuracy: f64,
    pub n_test: usize,
    pub episodes: usize,
    pub seed: u64,
    pub dataset_sha256: String,
    pub latency_ms: Option<f64>,
}

pub const REPORT_HEADER: [&str; 10] =
    ["model", "case", "suite", "condition", "accuracy", "n_test", "T_n", "seed", "dataset_sha256", "latency_ms"];

/// Writes rows as CSV. `preamble` lines are emitted first, each prefixed
/// with `# `, to carry the run configuration.
pub fn write_report(rows: &[EvalRow], preamble: &str, mut out: impl Write) -> Result<()> {
    for line in preamble.lines() {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.case.clone(),
            r.suite.to_string(),
            r.condition.clone(),
            format!("{:.6}", r.accuracy),
            r.n_test.to_string(),
            r.episodes.to_string(),
            r.seed.to_string(),
            r.dataset_sha256.clone(),
            r.latency_ms.map(|l| format!("{l:.3}")).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Median wall-clock time of a single-window forward pass, in ms.
pub fn measure_latency(model: &Model, set: &FeatureSet, repeats: usize, mode: ExecMode) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Config("latency needs at least one window".into()));
    }
    let x = set.batch(&[0])?;
    model.net.infer(&x, mode)?;
    let mut times: Vec<f64> = (0..repeats.max(1))
        .map(|i| {
            let x = set.batch(&[i % set.len()])?;
            let t = Instant::now();
            model.net.infer(&x, mode)?;
            Ok(t.elapsed().as_secs_f64() * 1e3)
        })
        .collect::<Result<_>>()?;
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Everything a suite needs besides the models.
pub struct EvalContext<'a> {
    pub grid: &'a GridModel,
    pub gen: &'a GenConfig,
    /// Clean single-point test split.
    pub test: &'a Dataset,
    /// Clean multi-point test set for the clean suite.
    pub multi_test: Option<&'a Dataset>,
    pub dataset_sha256: String,
    pub seed: u64,
    pub config: &'a EvalConfig,
    pub mode: ExecMode,
}

/// A named test-time variant of the test split.
pub struct Condition {
    pub name: String,
    pub set: FeatureSet,
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn degraded(
    ctx: &EvalContext<'_>,
    tag: u64,
    f: impl Fn(&crate::attack::PmuWindow, &mut rand_chacha::ChaCha8Rng) -> Result<crate::attack::PmuWindow> + Send + Sync,
) -> Result<FeatureSet> {
    let mut ds = ctx.test.clone();
    let windows = map_indexed(ctx.mode, ds.len(), |i| {
        let mut rng = stream(ctx.seed, Stream::Eval, mix(tag, i as u64));
        f(&ds.samples[i].window, &mut rng)
    });
    for (s, w) in ds.samples.iter_mut().zip(windows) {
        s.window = w?;
    }
    Ok(FeatureSet::from_dataset(&ds, ctx.mode))
}

/// Test-time conditions of a suite, in report order.
pub fn suite_conditions(suite: Suite, ctx: &EvalContext<'_>) -> Result<Vec<Condition>> {
    ctx.config.validate()?;
    let mut out = Vec::new();
    match suite {
        Suite::Clean => {
            out.push(Condition { name: "single_point".into(), set: FeatureSet::from_dataset(ctx.test, ctx.mode) });
            if let Some(m) = ctx.multi_test {
                out.push(Condition { name: "multi_point".into(), set: FeatureSet::from_dataset(m, ctx.mode) });
            }
        }
        Suite::Noise => {
            for (k, &snr) in ctx.config.snr_db.iter().enumerate() {
                let set = degraded(ctx, mix(1, k as u64), |w, rng| add_gaussian_noise(w, snr, rng))?;
                out.push(Condition { name: format!("snr_{}db", fmt_num(snr)), set });
            }
        }
        Suite::MissingOutlier => {
            let (dlo, dhi) = ctx.config.drop_frac;
            let set = degraded(ctx, 2, |w, rng| {
                let f = if dhi > dlo { rng.random_range(dlo..=dhi) } else { dlo };
                drop_points(w, f, rng)
            })?;
            out.push(Condition { name: format!("missing_{}-{}", fmt_num(dlo), fmt_num(dhi)), set });
            let (olo, ohi) = ctx.config.outlier_frac;
            let set = degraded(ctx, 3, |w, rng| {
                let f = if ohi > olo { rng.random_range(olo..=ohi) } else { olo };
                inject_outliers(w, f, rng)
            })?;
            out.push(Condition { name: format!("outlier_{}-{}", fmt_num(olo), fmt_num(ohi)), set });
        }
        Suite::Delay => {
            let trajs = map_indexed(ctx.mode, ctx.test.len(), |i| generate_trajectory(ctx.grid, &ctx.test.samples[i].scenario, ctx.gen));
            let trajs = trajs.into_iter().collect::<Result<Vec<_>>>()?;
            for &d in &ctx.config.delays_s {
                let mut ds = ctx.test.clone();
                for (s, t) in ds.samples.iter_mut().zip(&trajs) {
                    s.window = delayed_window(t, d)?;
                }
                out.push(Condition { name: format!("delay_{d:.1}s"), set: FeatureSet::from_dataset(&ds, ctx.mode) });
            }
        }
    }
    Ok(out)
}

/// Evaluates every model on every condition of a suite. Rows are ordered by
/// model, then condition.
pub fn run_suite(suite: Suite, models: &[&Model], ctx: &EvalContext<'_>) -> Result<Vec<EvalRow>> {
    if models.is_empty() {
        return Err(Error::Config("no models to evaluate".into()));
    }
    let conditions = suite_conditions(suite, ctx)?;
    let mut rows = Vec::new();
    for model in models {
        let latency = if ctx.config.measure_latency {
            Some(measure_latency(model, &conditions[0].set, ctx.config.latency_repeats, ctx.mode)?)
        } else {
            None
        };
        for c in &conditions {
            let preds = model.predict(&c.set, ctx.config.batch_size, ctx.mode)?;
            let episodes = default_episodes(c.set.len());
            rows.push(EvalRow {
                model: model.kind.to_string(),
                case: ctx.test.case.clone(),
                suite,
                condition: c.name.clone(),
                accuracy: accuracy(&preds, &c.set.labels, episodes)?,
                n_test: c.set.len(),
                episodes,
                seed: ctx.seed,
                dataset_sha256: ctx.dataset_sha256.clone(),
                latency_ms: latency,
            });
        }
    }
    Ok(rows)
}
