use rand::Rng;
use rand_distr::{Distribution, Normal};
use retassess_core::seed;
use retassess_learn::svm::{kkt_audit, Svm, SvmParams};
use retassess_learn::Dataset;

fn gaussian_classes(n: usize, centers: &[(f64, f64)], spread: f64, key: u64) -> Dataset {
    let mut rng = seed::rng(key, &[]);
    let g = Normal::new(0.0, spread).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % centers.len();
        x.push(centers[c].0 + g.sample(&mut rng));
        x.push(centers[c].1 + g.sample(&mut rng));
        y.push(c as u8);
    }
    Dataset::new(2, x, y).unwrap()
}

fn rings(n: usize) -> Dataset {
    let mut rng = seed::rng(5, &[]);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = (i % 2) as u8;
        let r = if c == 0 { 1.0 } else { 3.0 } + rng.random_range(-0.3..0.3);
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        x.extend([r * t.cos(), r * t.sin()]);
        y.push(c);
    }
    Dataset::new(2, x, y).unwrap()
}

fn random_labels(n: usize, d: usize) -> Dataset {
    let mut rng = seed::rng(6, &[]);
    let x = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
    let y = (0..n).map(|_| rng.random_range(0..4u8)).collect();
    Dataset::new(d, x, y).unwrap()
}

#[test]
fn kkt_conditions_hold_on_five_problems() {
    let problems: Vec<(&str, Dataset, SvmParams)> = vec![
        (
            "separable pair",
            gaussian_classes(80, &[(-3.0, 0.0), (3.0, 0.0)], 1.0, 1),
            SvmParams::default(),
        ),
        (
            "overlapping triple",
            gaussian_classes(120, &[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], 1.0, 2),
            SvmParams::default(),
        ),
        ("rings", rings(100), SvmParams { c: 10.0, ..SvmParams::default() }),
        (
            "ten classes, wide kernel",
            gaussian_classes(150, &[(0., 0.), (1., 0.), (2., 0.), (3., 0.), (4., 0.), (0., 1.), (1., 1.), (2., 1.), (3., 1.), (4., 1.)], 0.4, 3),
            SvmParams { gamma: Some(0.05), ..SvmParams::default() },
        ),
        ("random labels", random_labels(90, 5), SvmParams { c: 0.5, ..SvmParams::default() }),
    ];
    for (name, data, params) in problems {
        let fit = Svm::fit(&data, &params, 0).unwrap();
        let reports = kkt_audit(&data, &fit);
        assert!(!reports.is_empty());
        for r in reports {
            assert!(r.in_box, "{name} class {}: alpha outside [0, C]", r.class);
            assert!(r.equality_residual <= 1e-9, "{name} class {}: sum y*alpha = {}", r.class, r.equality_residual);
            assert!(r.n_support > 0, "{name} class {}", r.class);
            assert!(
                r.max_violation <= params.tol,
                "{name} class {}: KKT violation {}",
                r.class,
                r.max_violation
            );
        }
    }
}

#[test]
fn subsampling_caps_training_rows() {
    let data = gaussian_classes(300, &[(-2.0, 0.0), (2.0, 0.0)], 1.0, 9);
    let p = SvmParams { max_samples: 120, ..SvmParams::default() };
    let a = Svm::fit(&data, &p, 4).unwrap();
    let b = Svm::fit(&data, &p, 4).unwrap();
    let c = Svm::fit(&data, &p, 5).unwrap();
    assert_eq!(a.indices.len(), 120);
    assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(a.indices, b.indices);
    assert_ne!(a.indices, c.indices);
    for r in kkt_audit(&data, &a) {
        assert!(r.max_violation <= p.tol);
    }
}
