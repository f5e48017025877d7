use rand_distr::{Distribution, Normal};
use retassess_core::seed;
use retassess_learn::{
    accuracy, evaluate_repeated, train, ClassifierKind, ClassifierSpec, Dataset, ForestParams, Hyper,
    LearnError, MlpParams, ALL_KINDS,
};

const DIM: usize = 6;

/// Two isotropic unit-variance blobs whose centers are 10 sigma apart along
/// the first axis. Six dimensions so MLP_n_half gets hidden widths (6, 3).
fn blobs(n: usize, seed_key: u64) -> Dataset {
    let mut rng = seed::rng(seed_key, &[]);
    let g = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = (i % 2) as u8;
        let shift = if c == 0 { -5.0 } else { 5.0 };
        x.push(shift + g.sample(&mut rng));
        for _ in 1..DIM {
            x.push(g.sample(&mut rng));
        }
        y.push(c);
    }
    Dataset::new(DIM, x, y).unwrap()
}

fn xor() -> Dataset {
    Dataset::new(2, vec![0., 0., 0., 1., 1., 0., 1., 1.], vec![0, 1, 1, 0]).unwrap()
}

#[test]
fn separable_blobs_every_kind() {
    let data = blobs(200, 11);
    for kind in ALL_KINDS {
        let m = train(&ClassifierSpec::new(kind), &data, 5).unwrap();
        let acc = accuracy(&m, &data).unwrap();
        assert!(acc >= 0.99, "{kind}: train accuracy {acc}");
    }
}

#[test]
fn xor_mlp_memorizes() {
    let spec = ClassifierSpec {
        kind: ClassifierKind::MlpNHalf,
        hyper: Hyper::Mlp(MlpParams {
            hidden: Some((8, 8)),
            epochs: 2000,
            batch_size: 4,
            learning_rate: 0.05,
            patience: 2000,
            ..MlpParams::default()
        }),
    };
    for s in 0..5 {
        let m = train(&spec, &xor(), s).unwrap();
        assert_eq!(accuracy(&m, &xor()).unwrap(), 1.0, "seed {s}");
    }
}

#[test]
fn xor_forest_memorizes() {
    for depth in [Some(2), None] {
        let spec = ClassifierSpec {
            kind: ClassifierKind::RandomForest,
            hyper: Hyper::Forest(ForestParams {
                n_trees: 10,
                max_depth: depth,
                bootstrap: false,
                ..ForestParams::default()
            }),
        };
        let m = train(&spec, &xor(), 2).unwrap();
        assert_eq!(accuracy(&m, &xor()).unwrap(), 1.0);
    }
}

#[test]
fn same_seed_same_predictions() {
    let data = blobs(120, 3);
    let probe = blobs(50, 4);
    for kind in ALL_KINDS {
        let spec = ClassifierSpec::new(kind);
        let a = train(&spec, &data, 9).unwrap();
        let b = train(&spec, &data, 9).unwrap();
        assert_eq!(a.predict_all(&probe).unwrap(), b.predict_all(&probe).unwrap(), "{kind}");
        assert_eq!(a.to_bytes(), b.to_bytes(), "{kind}");
    }
}

#[test]
fn constant_predictor_scores_chance() {
    // Features carry no information, so the forest is a single leaf holding
    // the majority training class (3).
    let train_y = vec![3, 3, 3, 1, 2];
    let train_set = Dataset::new(1, vec![0.5; 5], train_y).unwrap();
    let m = train(&ClassifierSpec::new(ClassifierKind::RandomForest), &train_set, 0).unwrap();
    let test_y: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
    let test_set = Dataset::new(1, (0..100).map(|i| i as f64).collect(), test_y).unwrap();
    assert!(m.predict_all(&test_set).unwrap().iter().all(|&p| p == 3));
    assert_eq!(accuracy(&m, &test_set).unwrap(), 10.0 / 100.0);
}

#[test]
fn manual_tally_of_five_probes() {
    // A single unbagged tree on this set is the stump x0 <= 1.5.
    let data = Dataset::new(1, vec![0., 1., 2., 3.], vec![0, 0, 1, 1]).unwrap();
    let spec = ClassifierSpec {
        kind: ClassifierKind::RandomForest,
        hyper: Hyper::Forest(ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..ForestParams::default()
        }),
    };
    let m = train(&spec, &data, 0).unwrap();
    let probe = Dataset::new(1, vec![0.0, 1.0, 2.0, 3.0, 0.5], vec![0, 1, 1, 0, 0]).unwrap();
    assert_eq!(m.predict_all(&probe).unwrap(), vec![0, 0, 1, 1, 0]);
    // matches at positions 0, 2, 4
    assert_eq!(accuracy(&m, &probe).unwrap(), 3.0 / 5.0);
}

#[test]
fn repeated_evaluation_is_reproducible() {
    let tr = blobs(100, 21);
    let te = blobs(60, 22);
    let spec = ClassifierSpec::new(ClassifierKind::RandomForest);
    let a = evaluate_repeated(&spec, &tr, &te, 40).unwrap();
    let b = evaluate_repeated(&spec, &tr, &te, 40).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.accuracies.len(), 10);

    // The SVM never draws from its seed below the subsampling cap, so one
    // training stands for all ten.
    let svm_spec = ClassifierSpec::new(ClassifierKind::SvmRbf);
    assert!(!svm_spec.uses_seed(tr.len()));
    let direct: Vec<f64> = (7..17)
        .map(|s| accuracy(&train(&svm_spec, &tr, s).unwrap(), &te).unwrap())
        .collect();
    let svm = evaluate_repeated(&ClassifierSpec::new(ClassifierKind::SvmRbf), &tr, &te, 7).unwrap();
    assert_eq!(svm.std, 0.0);
    assert_eq!(svm.accuracies, direct);
}

#[test]
fn training_preconditions() {
    let one = Dataset::new(1, vec![1.0, 2.0], vec![4, 4]).unwrap();
    let empty = Dataset::new(1, vec![], vec![]).unwrap();
    for kind in ALL_KINDS {
        let spec = ClassifierSpec::new(kind);
        assert!(matches!(train(&spec, &one, 0), Err(LearnError::SingleClass(4))));
        assert!(matches!(train(&spec, &empty, 0), Err(LearnError::Empty)));
    }
    let m = train(&ClassifierSpec::new(ClassifierKind::SvmRbf), &blobs(20, 1), 0).unwrap();
    assert!(matches!(
        m.predict(&[1.0, 2.0, 3.0]),
        Err(LearnError::WidthMismatch { expected: DIM, found: 3 })
    ));
    let wide = Dataset::new(3, vec![0.0; 6], vec![0, 1]).unwrap();
    assert!(accuracy(&m, &wide).is_err());
}
