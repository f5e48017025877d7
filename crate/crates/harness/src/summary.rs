//! Tables derived from result rows: accuracy against feature count, best
//! accuracy per dataset, split gain, and model comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::results::ResultRow;

/// Accuracy against `n_features`, grouped by dataset and adjust mode.
pub fn accuracy_vs_features(rows: &[ResultRow]) -> String {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.dataset, a.coord.adjust.as_str(), &a.coord.model, a.coord.classifier.name(), a.n_features)
            .cmp(&(&b.dataset, b.coord.adjust.as_str(), &b.coord.model, b.coord.classifier.name(), b.n_features))
            .then(a.coord.key().cmp(&b.coord.key()))
    });
    let mut s = String::from("dataset,adjust,model,classifier,combine,valid,split,n_features,mean_accuracy,std_accuracy\n");
    for r in sorted {
        let c = &r.coord;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.dataset,
            c.adjust,
            c.model,
            c.classifier,
            c.combine,
            if c.valid { "yes" } else { "no" },
            c.split,
            r.n_features,
            r.mean_accuracy,
            r.std_accuracy
        );
    }
    s
}

/// The best row of each dataset (first row on ties).
pub fn max_per_dataset(rows: &[ResultRow]) -> Vec<&ResultRow> {
    let mut best: BTreeMap<&str, &ResultRow> = BTreeMap::new();
    for r in rows {
        let e = best.entry(&r.dataset).or_insert(r);
        if r.mean_accuracy > e.mean_accuracy {
            *e = r;
        }
    }
    best.into_values().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitGain {
    /// Dataset and coordinate without the split.
    pub key: String,
    pub base_split: usize,
    pub top_split: usize,
    pub base_features: usize,
    pub top_features: usize,
    pub base_accuracy: f64,
    pub top_accuracy: f64,
}

impl SplitGain {
    pub fn delta(&self) -> f64 {
        self.top_accuracy - self.base_accuracy
    }

    /// Change relative to the unsplit accuracy, in percent.
    pub fn relative_percent(&self) -> f64 {
        100.0 * self.delta() / self.base_accuracy
    }
}

/// Accuracy change from p = 1 to the largest p, per remaining coordinate.
pub fn split_gains(rows: &[ResultRow]) -> Vec<SplitGain> {
    let mut groups: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let c = &r.coord;
        let key = format!(
            "{}/{}/{}/{}/{}/{}",
            r.dataset,
            c.model,
            c.adjust,
            c.combine,
            if c.valid { "valid" } else { "all" },
            c.classifier
        );
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .filter_map(|(key, g)| {
            let base = g.iter().find(|r| r.coord.split == 1)?;
            let top = g.iter().max_by_key(|r| r.coord.split)?;
            (top.coord.split > 1).then_some(SplitGain {
                key,
                base_split: 1,
                top_split: top.coord.split,
                base_features: base.n_features,
                top_features: top.n_features,
                base_accuracy: base.mean_accuracy,
                top_accuracy: top.mean_accuracy,
            })
        })
        .collect()
}

pub fn split_gain_table(gains: &[SplitGain]) -> String {
    let mut s = String::from("coordinate,p_from,p_to,n_features_from,n_features_to,accuracy_from,accuracy_to,delta,relative_percent\n");
    for g in gains {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.2}",
            g.key,
            g.base_split,
            g.top_split,
            g.base_features,
            g.top_features,
            g.base_accuracy,
            g.top_accuracy,
            g.delta(),
            g.relative_percent()
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointComparison {
    pub point: String,
    /// (model, mse, mean accuracy) in increasing MSE order.
    pub entries: Vec<(String, f64, f64)>,
}

impl PointComparison {
    /// Accuracy never rises as MSE rises.
    pub fn anti_monotone(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].2 <= w[0].2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// (model, mse) in increasing MSE order.
    pub models: Vec<(String, f64)>,
    /// Grid points evaluated under every model.
    pub points: Vec<PointComparison>,
}

impl Comparison {
    pub fn anti_monotone_fraction(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().filter(|p| p.anti_monotone()).count() as f64 / self.points.len() as f64
    }

    /// Paired (model, MSE, grid point, accuracy) rows.
    pub fn table(&self) -> String {
        let mut s = String::from("point,model,mse,mean_accuracy,anti_monotone\n");
        for p in &self.points {
            for (m, mse, acc) in &p.entries {
                let _ = writeln!(s, "{},{m},{mse},{acc},{}", p.point, if p.anti_monotone() { "yes" } else { "no" });
            }
        }
        s
    }
}

/// Pair rows across models at each grid point, ordering models by MSE.
pub fn compare_models(rows: &[ResultRow]) -> Comparison {
    let mut mse: BTreeMap<&str, f64> = BTreeMap::new();
    for r in rows {
        mse.insert(&r.coord.model, r.model_mse);
    }
    let mut models: Vec<(String, f64)> = mse.iter().map(|(m, v)| (m.to_string(), *v)).collect();
    models.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut by_point: BTreeMap<String, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows {
        by_point
            .entry(format!("{}/{}", r.dataset, r.coord.point_key()))
            .or_default()
            .insert(&r.coord.model, r.mean_accuracy);
    }
    let points = by_point
        .into_iter()
        .filter(|(_, accs)| accs.len() == models.len())
        .map(|(point, accs)| PointComparison {
            point,
            entries: models
                .iter()
                .map(|(m, v)| (m.clone(), *v, accs[m.as_str()]))
                .collect(),
        })
        .collect();
    Comparison { models, points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Coordinate;
    use retassess_core::{Adjust, CombineMode};
    use retassess_learn::ClassifierKind;

    fn row(dataset: &str, model: &str, split: usize, acc: f64, mse: f64) -> ResultRow {
        ResultRow {
            dataset: dataset.into(),
            coord: Coordinate {
                model: model.into(),
                split,
                adjust: Adjust::No,
                combine: CombineMode::None,
                valid: false,
                classifier: ClassifierKind::RandomForest,
            },
            temporal_interval: 30,
            n_features: 60 * split * split,
            n_train: 7,
            n_test: 3,
            mean_accuracy: acc,
            std_accuracy: 0.0,
            model_mse: mse,
            accuracies: vec![acc; 10],
        }
    }

    #[test]
    fn max_table() {
        let one = vec![row("mnist", "m", 1, 0.4, 0.0)];
        assert_eq!(max_per_dataset(&one), vec![&one[0]]);
        let rows = vec![row("mnist", "m", 1, 0.4, 0.0), row("mnist", "m", 2, 0.8, 0.0), row("cifar10", "m", 1, 0.2, 0.0)];
        let best = max_per_dataset(&rows);
        assert_eq!(best.len(), 2);
        assert_eq!(best[1].mean_accuracy, 0.8);
    }

    #[test]
    fn split_gain_arithmetic() {
        let rows = vec![row("mnist", "m", 1, 0.60, 0.0), row("mnist", "m", 2, 0.65, 0.0), row("mnist", "m", 3, 0.72, 0.0)];
        let g = split_gains(&rows);
        assert_eq!(g.len(), 1);
        assert_eq!((g[0].top_split, g[0].base_features, g[0].top_features), (3, 60, 540));
        assert!((g[0].relative_percent() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn comparison_orders_by_mse() {
        let rows = vec![
            row("mnist", "clean", 1, 0.7, 0.0),
            row("mnist", "bad", 1, 0.5, 9.0),
            row("mnist", "mid", 1, 0.6, 2.0),
            row("mnist", "clean", 2, 0.7, 0.0),
            row("mnist", "bad", 2, 0.8, 9.0),
            row("mnist", "mid", 2, 0.6, 2.0),
            // a point missing under one model is left out
            row("mnist", "clean", 3, 0.7, 0.0),
        ];
        let c = compare_models(&rows);
        let names: Vec<&str> = c.models.iter().map(|m| m.0.as_str()).collect();
        assert_eq!(names, ["clean", "mid", "bad"]);
        assert_eq!(c.points.len(), 2);
        assert!(c.points[0].anti_monotone());
        assert!(!c.points[1].anti_monotone());
        assert_eq!(c.anti_monotone_fraction(), 0.5);
    }

    #[test]
    fn model_against_itself() {
        let rows = vec![row("mnist", "a", 1, 0.7, 0.0), row("mnist", "b", 1, 0.7, 0.0)];
        let c = compare_models(&rows);
        assert!(c.models.iter().all(|m| m.1 == 0.0));
        assert_eq!(c.anti_monotone_fraction(), 1.0);
    }
}
