//! The `inspect`, `gen`, `train`, `eval` and `selfcheck` workflows behind the
//! command-line tool. Every artifact embeds the run configuration, and the
//! output directory is never part of it, so a rerun writes identical bytes.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::attack::{screen, simulate, simulate_exact, AttackKind, AttackScenario, DEFAULT_DT};
use crate::capsnet::{build_capsnet, dynamic_routing, margin_loss_batch, CapsPlan, MarginLossConfig};
use crate::config::RunConfig;
use crate::eval::{run_suite, write_report, EvalContext, EvalRow, Suite};
use crate::exec::{map_indexed, ExecMode};
use crate::grid::{classify_stability, eigenvalues, CaseName, GridModel, StabilityClass};
use crate::nn::{
    cross_entropy, grad_check, Checkpoint, Conv2d, Dense, Flatten, GradCheckOptions, Layer, MaxPool2d, Network,
    Relu, Tensor,
};
use crate::pmu::{
    add_gaussian_noise, build_dataset, delayed_window, deserialize, empirical_snr_db, generate_samples,
    generate_trajectory, serialize, split_counts, Dataset, DegradationConfig, GenConfig, Provenance, Split,
};
use crate::rng::{mix, stream, Stream};
use crate::train::{train, FeatureSet, Model, ModelKind, TrainReport};
use crate::{Error, Result};

/// Seed offset of the multi-point test set.
const MULTI_POINT_KEY: u64 = 2;

/// A written file and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// File names inside an output directory.
pub struct Layout<'a> {
    pub dir: &'a Path,
    pub case: &'a str,
}

impl Layout<'_> {
    pub fn dataset(&self, split: Split) -> PathBuf {
        self.dir.join(format!("{}_{}.gcap", self.case, split))
    }

    pub fn multi_test(&self) -> PathBuf {
        self.dir.join(format!("{}_test_multi.gcap", self.case))
    }

    pub fn checkpoint(&self, kind: ModelKind) -> PathBuf {
        self.dir.join(format!("{}_{}.gckp", self.case, kind))
    }

    pub fn history(&self, kind: ModelKind) -> PathBuf {
        self.dir.join(format!("{}_{}_history.csv", self.case, kind))
    }

    pub fn report(&self, suite: Suite) -> PathBuf {
        self.dir.join(format!("{}_{}_report.csv", self.case, suite))
    }
}

/// The configuration as `# `-prefixed comment lines.
pub fn preamble(cfg: &RunConfig) -> String {
    cfg.to_toml().lines().map(|l| format!("# {l}\n")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn file_artifact(path: PathBuf) -> Result<Artifact> {
    let sha256 = crate::pmu::sha256_hex(&fs::read(&path)?);
    Ok(Artifact { path, sha256 })
}

/// Summary of a case: sizes, the attack-free eigenvalues and their class.
pub fn inspect(case: CaseName) -> Result<String> {
    let grid = case.load()?;
    let nominal = grid.nominal();
    let mut eigs = eigenvalues(&nominal.a)?;
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let report = classify_stability(&eigs);
    let topo = &grid.topology;
    let mut s = String::new();
    writeln!(s, "case {case}").unwrap();
    writeln!(s, "generators (N_G) {}  buses {:?}", topo.n_gen(), topo.generator_buses).unwrap();
    writeln!(s, "load buses (N_L) {}  buses {:?}", topo.n_load(), topo.load_buses).unwrap();
    writeln!(s, "default gain range [0, {}] pu", grid.gain_max).unwrap();
    writeln!(s, "attack-free system matrix: {} states, {}", nominal.n_state(), report.class.as_str()).unwrap();
    for l in &eigs {
        writeln!(s, "  {:>12.6} {:+12.6}i", l.re, l.im).unwrap();
    }
    Ok(s)
}

fn delay_and_degrade(
    grid: &GridModel,
    gen: &GenConfig,
    ds: &mut Dataset,
    degrade: &DegradationConfig,
    delay: f64,
    seed: u64,
    mode: ExecMode,
) -> Result<()> {
    let rest = DegradationConfig { delay_s: None, ..degrade.clone() };
    let code = ds.split.code() as u64;
    let windows = map_indexed(mode, ds.len(), |i| {
        let traj = generate_trajectory(grid, &ds.samples[i].scenario, gen)?;
        let w = delayed_window(&traj, delay)?;
        rest.apply(&w, &mut stream(seed, Stream::Degrade, mix(code, i as u64)))
    });
    for (s, w) in ds.samples.iter_mut().zip(windows) {
        s.window = w?;
    }
    Ok(())
}

fn split_datasets(
    grid: &GridModel,
    cfg: &RunConfig,
    gen: &GenConfig,
    seed: u64,
    n: usize,
    fracs: [f64; 3],
    mode: ExecMode,
) -> Result<[Dataset; 3]> {
    let samples = generate_samples(grid, gen, seed, n, mode)?;
    let provenance = Provenance { seed, config: cfg.to_toml() };
    let delay = cfg.degradation.delay_s.filter(|&d| d != 0.0);
    let class_map = grid.topology.load_buses.clone();
    match delay {
        None => build_dataset(samples, &grid.name, class_map, fracs, &cfg.degradation, cfg.degrade_train, provenance),
        Some(d) => {
            // a delayed window is cut from the trajectory, so it has to come
            // before the point-wise degradations
            let mut sets = build_dataset(samples, &grid.name, class_map, fracs, &DegradationConfig::default(), false, provenance)?;
            for ds in &mut sets {
                if ds.split != Split::Train || cfg.degrade_train {
                    delay_and_degrade(grid, gen, ds, &cfg.degradation, d, seed, mode)?;
                }
            }
            Ok(sets)
        }
    }
}

/// Generates, splits and writes the datasets, plus the multi-point test set
/// when enabled.
pub fn gen(cfg: &RunConfig, out: &Path, mode: ExecMode) -> Result<Vec<Artifact>> {
    cfg.validate()?;
    let case = cfg.case_name()?;
    let grid = case.load()?;
    let layout = Layout { dir: out, case: case.as_str() };
    let sets = split_datasets(&grid, cfg, &cfg.generation, cfg.seed, cfg.n_samples, cfg.split, mode)?;
    let mut written = Vec::new();
    for ds in &sets {
        let path = layout.dataset(ds.split);
        fs::create_dir_all(out)?;
        let sha256 = serialize(ds, &path)?;
        log::info!("wrote {} ({} samples)", path.display(), ds.len());
        written.push(Artifact { path, sha256 });
    }
    if cfg.multi_point_test {
        let n = split_counts(cfg.n_samples, cfg.split)[2].max(1);
        let mut gen = cfg.generation.clone();
        gen.scenario.kind = AttackKind::MultiPoint;
        let [_, _, multi] = split_datasets(&grid, cfg, &gen, mix(cfg.seed, MULTI_POINT_KEY), n, [0.0, 0.0, 1.0], mode)?;
        let path = layout.multi_test();
        let sha256 = serialize(&multi, &path)?;
        log::info!("wrote {} ({} samples)", path.display(), multi.len());
        written.push(Artifact { path, sha256 });
    }
    Ok(written)
}

fn load_split(layout: &Layout<'_>, split: Split) -> Result<(Dataset, String)> {
    let path = layout.dataset(split);
    if !path.exists() {
        return Err(Error::Config(format!("dataset {} not found; run gen first", path.display())));
    }
    deserialize(&path)
}

/// Trains `cfg.model` on the stored train/val splits and writes its
/// checkpoint and per-epoch history.
pub fn train_model(cfg: &RunConfig, out: &Path, mode: ExecMode) -> Result<(TrainReport, Vec<Artifact>)> {
    cfg.validate()?;
    let case = cfg.case_name()?;
    let layout = Layout { dir: out, case: case.as_str() };
    let (train_ds, train_sha) = load_split(&layout, Split::Train)?;
    let (val_ds, _) = load_split(&layout, Split::Val)?;
    let train_set = FeatureSet::from_dataset(&train_ds, mode);
    let val_set = FeatureSet::from_dataset(&val_ds, mode);
    let mut model = Model::for_case(cfg.model, case, cfg.seed, cfg.training.margin)?;
    if model.classes() != train_ds.n_classes() {
        return Err(Error::Shape(format!(
            "dataset has {} classes, {} model has {}",
            train_ds.n_classes(),
            cfg.model,
            model.classes()
        )));
    }
    log::info!("training {} ({} parameters) on {} samples", cfg.model, model.net.param_count(), train_set.len());
    let report = train(&mut model, &train_set, &val_set, &cfg.training, cfg.seed, mode)?;

    let header = format!("train_sha256 = \"{train_sha}\"\n{}", cfg.to_toml());
    let ckpt_path = layout.checkpoint(cfg.model);
    fs::create_dir_all(out)?;
    let sha256 = model.checkpoint(&header).save(&ckpt_path)?;
    let hist_path = layout.history(cfg.model);
    let mut w = create(&hist_path)?;
    std::io::Write::write_all(&mut w, preamble(cfg).as_bytes())?;
    report.write_csv(&mut w)?;
    std::io::Write::flush(&mut w)?;
    drop(w);
    Ok((report, vec![Artifact { path: ckpt_path, sha256 }, file_artifact(hist_path)?]))
}

/// Rebuilds a model of `kind` and loads its stored parameters.
pub fn load_model(cfg: &RunConfig, out: &Path, kind: ModelKind) -> Result<Model> {
    let case = cfg.case_name()?;
    let layout = Layout { dir: out, case: case.as_str() };
    let path = layout.checkpoint(kind);
    if !path.exists() {
        return Err(Error::Config(format!("checkpoint {} not found; run train --kind {kind} first", path.display())));
    }
    let mut model = Model::for_case(kind, case, cfg.seed, cfg.training.margin)?;
    Checkpoint::load(&path)?.load_into(&mut model.net)?;
    Ok(model)
}

/// Runs `cfg.suite` over every model in `cfg.eval_models` and writes the
/// report CSV.
pub fn eval(cfg: &RunConfig, out: &Path, mode: ExecMode) -> Result<(Vec<EvalRow>, Artifact)> {
    cfg.validate()?;
    let case = cfg.case_name()?;
    let grid = case.load()?;
    let layout = Layout { dir: out, case: case.as_str() };
    let (test, sha) = load_split(&layout, Split::Test)?;
    let multi = if cfg.suite == Suite::Clean && layout.multi_test().exists() {
        Some(deserialize(&layout.multi_test())?.0)
    } else {
        None
    };
    let models = cfg
        .eval_models
        .iter()
        .map(|&k| load_model(cfg, out, k))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Model> = models.iter().collect();
    let ctx = EvalContext {
        grid: &grid,
        gen: &cfg.generation,
        test: &test,
        multi_test: multi.as_ref(),
        dataset_sha256: sha,
        seed: cfg.seed,
        config: &cfg.evaluation,
        mode,
    };
    let rows = run_suite(cfg.suite, &refs, &ctx)?;
    let path = layout.report(cfg.suite);
    let mut w = create(&path)?;
    write_report(&rows, &cfg.to_toml(), &mut w)?;
    std::io::Write::flush(&mut w)?;
    drop(w);
    Ok((rows, file_artifact(path)?))
}

/// Outcome of one self-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, r: Result<(bool, String)>) -> Check {
    match r {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn random_tensor(shape: Vec<usize>, seed: u64) -> Result<Tensor<f64>> {
    let mut rng = stream(seed, Stream::Check, 0);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Float64 gradient check of a small conv/pool/dense stack.
pub fn check_layer_gradients(seed: u64) -> Result<f64> {
    let mut rng = stream(seed, Stream::Init, 0);
    let layers: Vec<Box<dyn Layer<f64>>> = vec![
        Box::new(Conv2d::new("c1", 2, 3, (1, 3), (1, 2), &mut rng)?),
        Box::new(Relu::new()),
        Box::new(Conv2d::new("c2", 3, 4, (2, 2), (1, 1), &mut rng)?),
        Box::new(MaxPool2d::new((1, 2))?),
        Box::new(Flatten::new()),
        Box::new(Dense::new("d1", 8, 6, &mut rng)?),
        Box::new(Relu::new()),
        Box::new(Dense::new("d2", 6, 3, &mut rng)?),
    ];
    let mut net = Network::new(vec![3, 9, 2], layers)?;
    let x = random_tensor(vec![2, 3, 9, 2], seed)?;
    let loss = |y: &Tensor<f64>| cross_entropy(y, &[2, 0]);
    let r = grad_check(&mut net, &x, &loss, GradCheckOptions { max_per_block: 200, seed, ..Default::default() })?;
    Ok(r.max_rel_err())
}

/// The reduced capsule plan used by the gradient checks: 8 primary
/// capsules of dimension 4, 3 digit capsules, 5 routing iterations.
pub fn reduced_plan() -> CapsPlan {
    CapsPlan {
        input: (2, 20, 2),
        conv1_kernels: 4,
        conv1_size: (1, 5),
        conv1_stride: (1, 5),
        dropout: 0.0,
        conv2_kernels: 8,
        conv2_size: (1, 2),
        conv2_stride: (1, 2),
        primary_dim: 4,
        digit_count: 3,
        digit_dim: 4,
        routing_iters: 5,
    }
}

/// Float64 gradient check of the full capsule model on the reduced plan,
/// through every routing iteration.
pub fn check_capsule_gradients(seed: u64) -> Result<f64> {
    let plan = reduced_plan();
    let mut net = build_capsnet::<f64>(&plan, seed)?;
    let (h, w, c) = plan.input;
    let x = random_tensor(vec![2, h, w, c], seed)?;
    let cfg = MarginLossConfig::default();
    let loss = |y: &Tensor<f64>| margin_loss_batch(y, &[1, 2], &cfg);
    let r = grad_check(&mut net, &x, &loss, GradCheckOptions { max_per_block: 100, seed, ..Default::default() })?;
    Ok(r.max_rel_err())
}

/// Largest coupling-row deviation from 1 and largest output length over
/// `passes` random routings.
pub fn check_routing(passes: usize, seed: u64) -> Result<(f64, f64)> {
    let (p, q, d, r) = (8, 3, 4, 5);
    let (mut worst_sum, mut worst_len) = (0.0f64, 0.0f64);
    for k in 0..passes {
        let mut rng = stream(seed, Stream::Check, k as u64);
        let scale = 10f64.powf(rng.random_range(-2.0..1.0));
        let u: Vec<f64> = (0..p * q * d).map(|_| rng.random_range(-scale..scale)).collect();
        let t = dynamic_routing(&u, p, q, d, r)?;
        for it in 0..r {
            for row in t.coupling_at(it).chunks(q) {
                worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
            }
            for v in t.output_at(it).chunks(d) {
                worst_len = worst_len.max(v.iter().map(|x| x * x).sum::<f64>().sqrt());
            }
        }
    }
    Ok((worst_sum, worst_len))
}

/// Draws `n` random attack scenarios on `grid` whose system matrix is stable.
pub fn stable_scenarios(grid: &GridModel, n: usize, seed: u64) -> Result<Vec<AttackScenario>> {
    let mut rng = stream(seed, Stream::Check, 0x57AB);
    let topo = &grid.topology;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n * 1000 {
        if out.len() == n {
            break;
        }
        let bus = topo.load_buses[rng.random_range(0..topo.n_load())];
        let gen = rng.random_range(0..topo.n_gen());
        let s = AttackScenario::single_point(bus, gen, rng.random_range(0.0..grid.gain_max), rng.random_range(0.1..2.5));
        if screen(grid, &s)?.class == StabilityClass::Stable {
            out.push(s);
        }
    }
    if out.len() < n {
        return Err(Error::Sampling(format!("found only {} stable scenarios", out.len())));
    }
    Ok(out)
}

/// Largest state difference between RK4 and the exact discretization.
pub fn rk4_max_error(grid: &GridModel, scenario: &AttackScenario, duration: f64, dt: f64) -> Result<f64> {
    let model = grid.assemble_attack(scenario)?;
    let a = simulate(&model, duration, dt)?;
    let b = simulate_exact(&model, duration, dt)?;
    Ok(a.states.iter().zip(&b.states).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Mean empirical SNR (both channels) of `n` noised windows per target level.
pub fn snr_round_trip(grid: &GridModel, levels: &[f64], n: usize, seed: u64, mode: ExecMode) -> Result<Vec<(f64, f64)>> {
    let samples = generate_samples(grid, &GenConfig::default(), seed, n, mode)?;
    levels
        .iter()
        .enumerate()
        .map(|(k, &snr)| {
            let mut total = 0.0;
            for (i, s) in samples.iter().enumerate() {
                let mut rng = stream(seed, Stream::Check, mix(k as u64, i as u64));
                let noisy = add_gaussian_noise(&s.window, snr, &mut rng)?;
                total += empirical_snr_db(&s.window, &noisy, 0) + empirical_snr_db(&s.window, &noisy, 1);
            }
            Ok((snr, total / (2 * samples.len()) as f64))
        })
        .collect()
}

/// Gradient checks, routing invariants, the RK4 oracle and the SNR round
/// trip. All pass on a correct build.
pub fn selfcheck(mode: ExecMode) -> Vec<Check> {
    let mut out = vec![
        check("layer_gradients", check_layer_gradients(1).map(|e| (e <= 1e-6, format!("max rel err {e:.2e} (tol 1e-6)")))),
        check(
            "capsule_gradients",
            check_capsule_gradients(5).map(|e| (e <= 1e-4, format!("max rel err {e:.2e} (tol 1e-4)"))),
        ),
        check(
            "routing_invariants",
            check_routing(200, 3).map(|(s, l)| {
                (s <= 1e-6 && l < 1.0, format!("max |sum c - 1| {s:.1e}, max |v| {l:.6}"))
            }),
        ),
    ];
    let grid = CaseName::Ieee14.load();
    out.push(check(
        "rk4_vs_exact",
        grid.as_ref().map_err(|e| Error::Config(e.to_string())).and_then(|g| {
            let mut worst = 0.0f64;
            for s in stable_scenarios(g, 3, 11)? {
                worst = worst.max(rk4_max_error(g, &s, 2.0, DEFAULT_DT)?);
            }
            Ok((worst <= 1e-6, format!("max state error {worst:.2e} pu over 2 s (tol 1e-6)")))
        }),
    ));
    out.push(check(
        "snr_round_trip",
        grid.as_ref().map_err(|e| Error::Config(e.to_string())).and_then(|g| {
            let r = snr_round_trip(g, &[26.0, 20.0, 16.5], 20, 13, mode)?;
            let ok = r.iter().all(|(t, m)| (t - m).abs() <= 0.5);
            let detail = r.iter().map(|(t, m)| format!("{t} dB -> {m:.2}")).collect::<Vec<_>>().join(", ");
            Ok((ok, detail))
        }),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig { n_samples: 45, ..Default::default() };
        cfg.training.max_epochs = 1;
        cfg.eval_models = vec![ModelKind::Mlp];
        cfg.model = ModelKind::Mlp;
        cfg
    }

    #[test]
    fn gen_writes_splits_and_multi_point_set() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let arts = gen(&cfg, dir.path(), ExecMode::Parallel).unwrap();
        assert_eq!(arts.len(), 4);
        let (train, _) = deserialize(&arts[0].path).unwrap();
        let (test, _) = deserialize(&arts[2].path).unwrap();
        let (multi, _) = deserialize(&arts[3].path).unwrap();
        assert_eq!(train.len() + test.len() + deserialize(&arts[1].path).unwrap().0.len(), 45);
        assert_eq!(multi.len(), test.len());
        assert!(multi.samples.iter().all(|s| s.scenario.kind == AttackKind::MultiPoint));
        assert!(train.provenance.config.contains("n_samples = 45"));
    }

    #[test]
    fn delayed_generation_shifts_test_windows_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.multi_point_test = false;
        cfg.degradation.delay_s = Some(0.5);
        gen(&cfg, dir.path(), ExecMode::Parallel).unwrap();
        let layout = Layout { dir: dir.path(), case: "ieee14" };
        let (test, _) = deserialize(&layout.dataset(Split::Test)).unwrap();
        let (train, _) = deserialize(&layout.dataset(Split::Train)).unwrap();
        assert!(test.samples.iter().all(|s| (s.window.t_start - 0.5).abs() < 1e-12));
        assert!(train.samples.iter().all(|s| s.window.t_start == 0.0));
    }

    #[test]
    fn train_and_eval_need_their_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        assert!(matches!(train_model(&cfg, dir.path(), ExecMode::Sequential), Err(Error::Config(_))));
        gen(&cfg, dir.path(), ExecMode::Sequential).unwrap();
        assert!(matches!(eval(&cfg, dir.path(), ExecMode::Sequential), Err(Error::Config(_))));
        train_model(&cfg, dir.path(), ExecMode::Sequential).unwrap();
        let (rows, art) = eval(&cfg, dir.path(), ExecMode::Sequential).unwrap();
        assert_eq!(rows.len(), 2);
        let text = fs::read_to_string(art.path).unwrap();
        assert!(text.starts_with("# case = \"ieee14\""));
        assert!(!text.contains(dir.path().to_str().unwrap()));
    }

    #[test]
    fn inspect_reports_stable_nominal_case() {
        let s = inspect(CaseName::Ieee14).unwrap();
        assert!(s.contains("N_G) 5"));
        assert!(s.contains("N_L) 9"));
        assert!(s.contains("stable"));
    }
}
