//! One test per acceptance criterion. Each writes a PASS or FAIL line
//! straight to stderr (bypassing output capture) before asserting.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use retassess::results::ResultRow;
use retassess::run::{ModelContext, Prepared};
use retassess::summary::{compare_models, split_gain_table, split_gains};
use retassess::{grid, run_grid, ExperimentConfig};
use retassess_core::retina::{make_lnp, LnpConfig};
use retassess_core::sta::{analyze_validity, DEFAULT_Z_THRESHOLD};
use retassess_core::temporal::{build_rows, Frame};
use retassess_core::{seed, Adjust, DatasetKind, Image, TemporalConfig};
use retassess_learn::mlp::Network;
use retassess_learn::svm::{kkt_audit, Svm, SvmParams};
use retassess_learn::Dataset;

fn verdict(id: u32, ok: bool, detail: &str, started: Instant) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let secs = started.elapsed().as_secs_f64();
    let _ = writeln!(std::io::stderr(), "{tag} criterion {id}: {detail} [{secs:.1} s]");
}

// ---- 1: shape law -------------------------------------------------------

#[test]
fn c01_shape_law_over_full_grid() {
    let t = Instant::now();
    let mut cfg = common::config(3, 1, &[("splits", "1,2,3,4"), ("augment", "no")]);
    cfg.mse_images = 3;
    let data = retassess::run::prepare(&cfg).unwrap();
    // every image goes through the pipeline; the partition only matters for training
    let data = Prepared { train: vec![], test: (0..data.images.len()).collect(), ..data };
    let coords = grid::enumerate(&cfg);
    let mut checked = 0;
    let mut broken = Vec::new();
    for spec in &cfg.models {
        let ctx = ModelContext::build(spec, &cfg, &data, true).unwrap();
        for &p in &cfg.splits {
            for &adjust in &cfg.adjust {
                let responses = ctx.responses(&data, p, adjust).unwrap();
                for c in coords.iter().filter(|c| c.model == spec.name && c.split == p && c.adjust == adjust) {
                    let m = ctx.features(&responses, &data.dataset, c).unwrap();
                    let a = if c.valid { 12 } else { 60 };
                    if m.n_features() != a * p * p || m.n_samples() != data.images.len() {
                        broken.push(c.key());
                    }
                    checked += 1;
                }
            }
        }
    }
    let ok = broken.is_empty() && checked == coords.len() && checked == 192;
    verdict(1, ok, &format!("{checked} coordinates, {} off the law", broken.len()), t);
    assert!(ok, "{broken:?}");
}

// ---- 2: STA recovery ----------------------------------------------------

fn sta_recovers(seed: u64) -> (bool, f64) {
    let model = make_lnp(&LnpConfig::default(), seed).unwrap();
    let reports = analyze_validity(&model, 5000, seed::derive(seed, &[0x5a]), DEFAULT_Z_THRESHOLD).unwrap();
    let strong = model.strong_indices();
    let valid: Vec<usize> = reports.iter().filter(|r| r.valid).map(|r| r.neuron).collect();
    let mut worst: f64 = 0.0;
    for &n in &strong {
        match reports[n].center {
            Some((x, y)) => {
                let nrn = &model.neurons()[n];
                worst = worst.max((x - nrn.center_x).hypot(y - nrn.center_y));
            }
            None => worst = f64::INFINITY,
        }
    }
    (strong.len() == 12 && valid == strong && worst <= 2.0, worst)
}

#[test]
fn c02_sta_recovers_planted_neurons() {
    let t = Instant::now();
    let outcomes: Vec<(u64, bool, f64)> = (0..20u64)
        .map(|s| {
            let (ok, worst) = sta_recovers(1000 + s);
            (s, ok, worst)
        })
        .collect();
    let good = outcomes.iter().filter(|o| o.1).count();
    let worst = outcomes.iter().filter(|o| o.1).map(|o| o.2).fold(0.0, f64::max);
    let ok = good >= 18;
    verdict(2, ok, &format!("{good}/20 seeds exact, worst center error {worst:.2} px"), t);
    assert!(ok, "{outcomes:?}");
}

// ---- 3: gradient check --------------------------------------------------

#[test]
fn c03_gradient_check() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..5u64 {
        let mut net = Network::<f64>::init(3, 1, 1, 2, s);
        let mut rng = seed::rng(s, &[0xc3]);
        // positive weights and inputs keep the rectifiers off their kinks
        let params: Vec<f64> = (0..net.flat_params().len()).map(|_| rng.random_range(0.2..1.0)).collect();
        assert_eq!(params.len(), 10);
        net.set_flat_params(&params);
        let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(0.1..2.0));
        let y = [1u8, 0, 1, 1, 0, 0];
        let (_, g) = net.loss_and_gradients(x.view(), &y);
        let analytic = g.flat_params();
        // near the cube root of machine epsilon, where central-difference
        // truncation and roundoff balance
        let h = 6e-6;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            net.set_flat_params(&p);
            let up = net.loss(x.view(), &y);
            p[k] -= 2.0 * h;
            net.set_flat_params(&p);
            let down = net.loss(x.view(), &y);
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[k].abs().max(numeric.abs());
            let rel = if denom == 0.0 { 0.0 } else { (analytic[k] - numeric).abs() / denom };
            worst = worst.max(rel);
        }
    }
    let ok = worst <= 1e-4;
    verdict(3, ok, &format!("max relative error {worst:.2e} on a 10-parameter probe"), t);
    assert!(ok);
}

// ---- 4: SMO audit -------------------------------------------------------

fn blobs(n: usize, centers: &[(f64, f64)], spread: f64, key: u64) -> Dataset {
    let mut rng = seed::rng(key, &[0xc4]);
    let g = Normal::new(0.0, spread).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % centers.len();
        x.extend([centers[c].0 + g.sample(&mut rng), centers[c].1 + g.sample(&mut rng)]);
        y.push(c as u8);
    }
    Dataset::new(2, x, y).unwrap()
}

fn annulus(n: usize) -> Dataset {
    let mut rng = seed::rng(44, &[0xc4]);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = (i % 2) as u8;
        let r = 1.0 + 2.0 * f64::from(c) + rng.random_range(-0.4..0.4);
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        x.extend([r * a.cos(), r * a.sin()]);
        y.push(c);
    }
    Dataset::new(2, x, y).unwrap()
}

fn noise_labels(n: usize) -> Dataset {
    let mut rng = seed::rng(45, &[0xc4]);
    let x = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n).map(|_| rng.random_range(0..3u8)).collect();
    Dataset::new(4, x, y).unwrap()
}

#[test]
fn c04_smo_solutions_satisfy_kkt() {
    let t = Instant::now();
    let grid10: Vec<(f64, f64)> = (0..10).map(|i| (f64::from(i % 5), f64::from(i / 5))).collect();
    let problems = [
        (blobs(100, &[(-2.5, 0.0), (2.5, 0.5)], 1.0, 1), SvmParams::default()),
        (blobs(150, &[(0.0, 0.0), (1.0, 1.5), (2.0, 0.0)], 0.9, 2), SvmParams { c: 5.0, ..SvmParams::default() }),
        (annulus(120), SvmParams::default()),
        (blobs(200, &grid10, 0.35, 3), SvmParams { gamma: Some(0.3), ..SvmParams::default() }),
        (noise_labels(100), SvmParams { c: 0.3, ..SvmParams::default() }),
    ];
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut machines = 0;
    for (data, params) in &problems {
        let fit = Svm::fit(data, params, 0).unwrap();
        for r in kkt_audit(data, &fit) {
            worst = worst.max(r.max_violation);
            ok &= r.in_box && r.equality_residual <= 1e-9 && r.max_violation <= 1e-3;
            machines += 1;
        }
    }
    verdict(4, ok, &format!("{machines} machines on 5 problems, worst KKT violation {worst:.2e}"), t);
    assert!(ok);
}

// ---- 5 and 6: single coordinate accuracy --------------------------------

fn fa_settings() -> Vec<(&'static str, &'static str)> {
    vec![
        ("splits", "1"),
        ("adjust", "no"),
        ("valid", "no"),
        ("classifiers", "RandomForest"),
        ("models", "Clean:lnp:30"),
    ]
}

fn fa_accuracy(cfg: &ExperimentConfig) -> anyhow::Result<ResultRow> {
    let dir = tempfile::tempdir()?;
    let report = run_grid(cfg, &dir.path().join("r.csv"))?;
    if let Some((c, e)) = report.failures.first() {
        anyhow::bail!("{}: {e}", c.key());
    }
    anyhow::ensure!(report.rows.len() == 1, "expected one row, got {}", report.rows.len());
    Ok(report.rows.into_iter().next().unwrap())
}

fn mnist_fa() -> &'static ResultRow {
    static ROW: OnceLock<ResultRow> = OnceLock::new();
    ROW.get_or_init(|| fa_accuracy(&common::config(1000, 2024, &fa_settings())).expect("MNIST run"))
}

#[test]
fn c05_mnist_above_chance() {
    let t = Instant::now();
    let row = mnist_fa();
    let ok = row.mean_accuracy >= 0.30 && row.accuracies.len() == 10 && row.n_train + row.n_test == 3000;
    verdict(
        5,
        ok,
        &format!("MNIST RandomForest p=1 mean accuracy {:.4} (std {:.4}) over 10 seeds", row.mean_accuracy, row.std_accuracy),
        t,
    );
    assert!(ok);
}

fn cifar_path() -> PathBuf {
    std::env::var_os("RETASSESS_CIFAR10")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cifar-10-batches-bin"))
}

#[test]
fn c06_mnist_beats_cifar() {
    let t = Instant::now();
    let path = cifar_path();
    if !path.exists() {
        let msg = format!("CIFAR-10 binary batches not found at {} (set RETASSESS_CIFAR10)", path.display());
        verdict(6, false, &msg, t);
        panic!("{msg}");
    }
    let mut cfg = common::config(1000, 2024, &fa_settings());
    cfg.dataset = DatasetKind::Cifar10;
    cfg.data = path;
    let cifar = fa_accuracy(&cfg).expect("CIFAR-10 run");
    let mnist = mnist_fa();
    let gap = mnist.mean_accuracy - cifar.mean_accuracy;
    let ok = gap >= 0.05;
    verdict(
        6,
        ok,
        &format!("MNIST {:.4} vs CIFAR-10 {:.4}, gap {gap:.4}", mnist.mean_accuracy, cifar.mean_accuracy),
        t,
    );
    assert!(ok);
}

// ---- 7, 8, 9: desk-scale grid over three degradation levels -------------

const DESK_MODELS: &str = "Clean:lnp:30,Degraded05:lnp:30:0.5,Degraded10:lnp:30:1";

fn desk_config() -> ExperimentConfig {
    common::config(1000, 77, &[("splits", "1,2,3"), ("models", DESK_MODELS)])
}

struct DeskRun {
    _dir: tempfile::TempDir,
    csv: PathBuf,
    rows: Vec<ResultRow>,
    failures: usize,
    seconds: f64,
}

fn desk_run() -> &'static DeskRun {
    static RUN: OnceLock<DeskRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let t = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("desk.csv");
        let report = run_grid(&desk_config(), &csv).expect("desk grid");
        DeskRun {
            _dir: dir,
            csv,
            rows: report.rows,
            failures: report.failures.len(),
            seconds: t.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn c07_accuracy_anti_monotone_in_mse() {
    let t = Instant::now();
    let run = desk_run();
    let cmp = compare_models(&run.rows);
    let frac = cmp.anti_monotone_fraction();
    let mses: Vec<String> = cmp.models.iter().map(|(m, e)| format!("{m}={e:.4}")).collect();
    let ok = run.failures == 0 && cmp.points.len() == 72 && frac >= 0.8;
    verdict(
        7,
        ok,
        &format!(
            "anti-monotone at {:.1}% of {} points (MSE {}); grid took {:.0} s",
            100.0 * frac,
            cmp.points.len(),
            mses.join(", "),
            run.seconds
        ),
        t,
    );
    let _ = write!(std::io::stderr(), "{}", cmp.table());
    assert!(ok);
}

#[test]
fn c08_reruns_are_byte_identical() {
    let t = Instant::now();
    let first = desk_run();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again.csv");
    run_grid(&desk_config(), &again).unwrap();
    let a = std::fs::read(&first.csv).unwrap();
    let b = std::fs::read(&again).unwrap();
    let rows = first.rows.len();
    let ok = a == b && rows == 3 * 72;
    verdict(8, ok, &format!("two runs of {rows} rows, {} bytes each, identical: {}", a.len(), a == b), t);
    assert!(ok);
}

#[test]
fn c09_split_gain() {
    let t = Instant::now();
    let clean: Vec<ResultRow> = desk_run().rows.iter().filter(|r| r.coord.model == "Clean").cloned().collect();
    let gains = split_gains(&clean);
    let monotone = gains.iter().all(|g| g.top_split == 3 && g.top_features >= g.base_features);
    let mean_delta = gains.iter().map(|g| g.delta()).sum::<f64>() / gains.len().max(1) as f64;
    let ok = gains.len() == 24 && monotone;
    verdict(
        9,
        ok,
        &format!("{} p=1 -> p=3 pairs, n_features never decreases: {monotone}, mean accuracy delta {mean_delta:+.4}", gains.len()),
        t,
    );
    let _ = write!(std::io::stderr(), "{}", split_gain_table(&gains));
    assert!(ok);
}

// ---- 10: temporal layout ------------------------------------------------

#[test]
fn c10_temporal_layout_matches_hand_rows() {
    let t = Instant::now();
    let shades = [0.25f32, 0.5, 0.75];
    let images: Vec<Frame> = shades.iter().map(|&v| Arc::new(Image::filled(50, 50, v))).collect();
    let mut mismatches = 0;
    let mut rows_checked = 0;
    for interval in [30usize, 40] {
        for adjust in [Adjust::Yes, Adjust::No] {
            let rows = build_rows(&images, &TemporalConfig::new(interval, adjust)).unwrap();
            let reps: Vec<usize> = if adjust == Adjust::Yes { (1..=5).collect() } else { vec![10] };
            let mut expected = Vec::new();
            for i in 0..3 {
                for &n in &reps {
                    // newest frame last: black padding, each earlier image as
                    // 5 repeats + black, then n copies of image i
                    let mut row: Vec<f32> = Vec::new();
                    for &earlier in &shades[..i] {
                        row.extend(std::iter::repeat_n(earlier, 5));
                        row.push(0.0);
                    }
                    row.extend(std::iter::repeat_n(shades[i], n));
                    let mut full = vec![0.0; interval.saturating_sub(row.len())];
                    full.extend_from_slice(&row[row.len().saturating_sub(interval)..]);
                    expected.push((i, n, full));
                }
            }
            if rows.len() != expected.len() {
                mismatches += 1;
                continue;
            }
            for (row, (i, n, want)) in rows.iter().zip(&expected) {
                rows_checked += 1;
                let got: Vec<f32> = row.frames.iter().map(|f| f.get(0, 0)).collect();
                let uniform = row.frames.iter().all(|f| f.pixels().iter().all(|&p| p == f.get(0, 0)));
                if row.source_index != *i || row.repetitions != *n || got != *want || !uniform {
                    mismatches += 1;
                }
            }
        }
    }
    let ok = mismatches == 0 && rows_checked == 2 * (15 + 3);
    verdict(10, ok, &format!("{rows_checked} rows over intervals 30/40 and both adjust modes, {mismatches} mismatches"), t);
    assert!(ok);
}
