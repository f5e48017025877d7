use retassess_core::retina::{make_lnp, LnpConfig, RateVector, RetinaModel};
use retassess_core::sta::{
    analyze_validity, compute_sta, fit_rf_center, white_noise_stimulus, StaAccumulation, DEFAULT_Z_THRESHOLD,
};
use retassess_core::{Result, TemporalRow};

/// Recovered valid set and centers for one planted retina.
fn recovery(seed: u64, rows: usize) -> (bool, f64) {
    let model = make_lnp(&LnpConfig::default(), seed).unwrap();
    let reports = analyze_validity(&model, rows, seed ^ 0xfeed, DEFAULT_Z_THRESHOLD).unwrap();
    let strong = model.strong_indices();
    let valid: Vec<usize> = reports.iter().filter(|r| r.valid).map(|r| r.neuron).collect();
    let mut worst: f64 = 0.0;
    for &n in &strong {
        if let Some((x, y)) = reports[n].center {
            let nrn = &model.neurons()[n];
            worst = worst.max(((x - nrn.center_x).powi(2) + (y - nrn.center_y).powi(2)).sqrt());
        }
    }
    (valid == strong, worst)
}

#[test]
fn planted_strong_neurons_are_exactly_the_valid_ones() {
    for seed in [1, 2, 3] {
        let (exact, worst) = recovery(seed, 5000);
        assert!(exact, "seed {seed}: valid set differs from strong set");
        assert!(worst <= 2.0, "seed {seed}: center error {worst}");
    }
}

#[test]
fn weak_neuron_has_small_zscore() {
    let model = make_lnp(&LnpConfig::default(), 9).unwrap();
    let weak = (0..60).find(|n| !model.strong_indices().contains(n)).unwrap();
    let stim = white_noise_stimulus(5000, 30, 3);
    let k = compute_sta(&model, &stim, weak).unwrap();
    assert!(k.peak_zscore < 2.0, "{}", k.peak_zscore);
    assert!(!fit_rf_center(&k).valid);
}

struct Constant(f64);

impl RetinaModel for Constant {
    fn temporal_interval(&self) -> usize {
        30
    }
    fn n_neurons(&self) -> usize {
        2
    }
    fn predict(&self, _row: &TemporalRow, _i: u64) -> Result<RateVector> {
        Ok(RateVector(vec![self.0, 0.0]))
    }
}

#[test]
fn constant_rate_gives_flat_sta_and_zero_rate_is_degenerate() {
    let stim = white_noise_stimulus(1000, 30, 5);
    let k = compute_sta(&Constant(7.0), &stim, 0).unwrap();
    assert!(k.max_abs() < 1e-12);
    assert!(compute_sta(&Constant(7.0), &stim, 1).is_err());
}

#[test]
fn sta_invariant_to_rate_scaling() {
    let model = make_lnp(&LnpConfig::default(), 4).unwrap();
    let stim = white_noise_stimulus(1500, 30, 8);
    let rates = model.predict_batch(&stim, 0).unwrap();
    let scaled: Vec<RateVector> = rates.iter().map(|r| RateVector(r.0.iter().map(|v| v * 3.7).collect())).collect();
    let a = StaAccumulation::from_rates(&stim, &rates).unwrap();
    let b = StaAccumulation::from_rates(&stim, &scaled).unwrap();
    for n in model.strong_indices() {
        let (ka, kb) = (a.kernel(n).unwrap(), b.kernel(n).unwrap());
        for (x, y) in ka.data.iter().zip(&kb.data) {
            assert!((x - y).abs() <= 1e-9);
        }
        assert_eq!(fit_rf_center(&ka).valid, fit_rf_center(&kb).valid);
    }
}

#[test]
fn noise_pixel_mean_is_half() {
    let stim = white_noise_stimulus(10_000, 1, 11);
    let mean = stim.iter().map(|r| r.frames[0].get(17, 33) as f64).sum::<f64>() / 10_000.0;
    assert!((mean - 0.5).abs() < 0.02, "{mean}");
    let all = stim.iter().map(|r| r.frames[0].mean()).sum::<f64>() / 10_000.0;
    assert!((all - 0.5).abs() < 0.01, "{all}");
}

#[test]
fn noise_prefix_is_stable() {
    let short = white_noise_stimulus(100, 30, 21);
    let long = white_noise_stimulus(200, 30, 21);
    for (a, b) in short.iter().zip(&long) {
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.pixels(), fb.pixels());
        }
    }
}

#[test]
fn validity_is_monotone_in_stimulus_count() {
    for seed in [5u64, 6] {
        let model = make_lnp(&LnpConfig::default(), seed).unwrap();
        let half = analyze_validity(&model, 2500, seed, DEFAULT_Z_THRESHOLD).unwrap();
        let full = analyze_validity(&model, 5000, seed, DEFAULT_Z_THRESHOLD).unwrap();
        for (h, f) in half.iter().zip(&full) {
            assert!(!h.valid || f.valid, "seed {seed} neuron {} lost validity", h.neuron);
        }
    }
}
