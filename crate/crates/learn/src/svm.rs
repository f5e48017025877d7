//! RBF support vector machine, one-vs-rest, trained by SMO with
//! second-order working set selection.

use ndarray::Array2;
use rand::seq::index;
use rayon::prelude::*;
use retassess_core::seed;

use crate::{Dataset, LearnError, Result};

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// RBF width; `None` uses `1 / (n_features * variance of all feature values)`.
    pub gamma: Option<f64>,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Larger training sets are subsampled to this many rows.
    pub max_samples: usize,
    /// SMO iteration cap per binary machine.
    pub max_iter: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_samples: 5000,
            max_iter: 10_000_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.tol > 0.0) {
            return Err(LearnError::Hyper("svm C and tolerance must be positive".into()));
        }
        if matches!(self.gamma, Some(g) if !(g > 0.0 && g.is_finite())) {
            return Err(LearnError::Hyper("svm gamma must be positive".into()));
        }
        if self.max_samples < 2 || self.max_iter == 0 {
            return Err(LearnError::Hyper("svm needs max_samples >= 2 and max_iter > 0".into()));
        }
        Ok(())
    }

    pub fn gamma_for(&self, data: &Dataset) -> f64 {
        if let Some(g) = self.gamma {
            return g;
        }
        let v = data.values();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        if var > 0.0 {
            1.0 / (data.n_features() as f64 * var)
        } else {
            1.0
        }
    }
}

/// One binary machine: `class` against the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct Machine {
    pub class: u8,
    /// Pairs of (support vector slot, alpha * y).
    pub coef: Vec<(u32, f64)>,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Svm {
    pub(crate) gamma: f64,
    pub(crate) n_features: usize,
    /// Support vectors shared by all machines, row-major.
    pub(crate) sv: Vec<f64>,
    pub(crate) machines: Vec<Machine>,
}

/// Training output with the full dual solution, for auditing.
#[derive(Clone, Debug)]
pub struct SvmFit {
    pub model: Svm,
    /// Rows of the training set used (all rows unless subsampled).
    pub indices: Vec<usize>,
    /// Per machine: class and dual variables over `indices`.
    pub duals: Vec<(u8, Vec<f64>)>,
    pub c: f64,
    pub iterations: u64,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

fn gram(data: &Dataset, gamma: f64) -> Array2<f64> {
    let n = data.len();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rbf(gamma, data.row(i), data.row(j));
        }
    });
    Array2::from_shape_vec((n, n), k).expect("square")
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: u64,
}

/// Solve min 1/2 a'Qa - e'a subject to 0 <= a <= c and y'a = 0.
fn smo(k: &Array2<f64>, y: &[f64], c: f64, tol: f64, max_iter: u64) -> Solution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * g[t] >= gmax {
                gmax = -y[t] * g[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let yg = y[t] * g[t];
            gmax2 = gmax2.max(yg);
            let b = gmax + yg;
            if b > 0.0 {
                let quad = k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]];
                let obj = -(b * b) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            break;
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[[i, j]];
        if y[i] != y[j] {
            let quad = (k[[i, i]] + k[[j, j]] + 2.0 * qij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[[i, i]] + k[[j, j]] - 2.0 * qij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            g[t] += y[t] * (y[i] * k[[i, t]] * di + y[j] * k[[j, t]] * dj);
        }
    }
    let rho = rho_from(&alpha, &g, y, c);
    Solution {
        alpha,
        rho,
        iterations,
    }
}

fn rho_from(alpha: &[f64], g: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

impl Svm {
    pub fn fit(data: &Dataset, params: &SvmParams, seed: u64) -> Result<SvmFit> {
        params.validate()?;
        let indices: Vec<usize> = if data.len() > params.max_samples {
            let mut rng = seed::rng(seed, &[0x5f3]);
            let mut idx = index::sample(&mut rng, data.len(), params.max_samples).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..data.len()).collect()
        };
        let sub = data.select(&indices);
        let gamma = params.gamma_for(&sub);
        let k = gram(&sub, gamma);

        let mut classes: Vec<u8> = sub.labels().to_vec();
        classes.sort_unstable();
        classes.dedup();
        let solutions: Vec<(u8, Solution)> = classes
            .par_iter()
            .map(|&cls| {
                let y: Vec<f64> = sub
                    .labels()
                    .iter()
                    .map(|&l| if l == cls { 1.0 } else { -1.0 })
                    .collect();
                (cls, smo(&k, &y, params.c, params.tol, params.max_iter))
            })
            .collect();

        // Shared support vector table, in training order.
        let n = sub.len();
        let mut slot = vec![u32::MAX; n];
        let mut sv = Vec::new();
        for t in 0..n {
            if solutions.iter().any(|(_, s)| s.alpha[t] > 0.0) {
                slot[t] = (sv.len() / sub.n_features()) as u32;
                sv.extend_from_slice(sub.row(t));
            }
        }
        let mut machines = Vec::with_capacity(solutions.len());
        let mut duals = Vec::with_capacity(solutions.len());
        let mut iterations = 0;
        for (cls, s) in solutions {
            let coef = (0..n)
                .filter(|&t| s.alpha[t] > 0.0)
                .map(|t| {
                    let y = if sub.labels()[t] == cls { 1.0 } else { -1.0 };
                    (slot[t], s.alpha[t] * y)
                })
                .collect();
            machines.push(Machine {
                class: cls,
                coef,
                rho: s.rho,
            });
            iterations += s.iterations;
            duals.push((cls, s.alpha));
        }
        Ok(SvmFit {
            model: Svm {
                gamma,
                n_features: data.n_features(),
                sv,
                machines,
            },
            indices,
            duals,
            c: params.c,
            iterations,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn machines(&self) -> &[Machine] {
        &self.machines
    }

    pub fn n_support(&self) -> usize {
        if self.n_features == 0 {
            0
        } else {
            self.sv.len() / self.n_features
        }
    }

    /// Decision value of every machine, in machine order.
    pub fn decision_values(&self, row: &[f64]) -> Vec<f64> {
        let kv: Vec<f64> = self
            .sv
            .chunks(self.n_features.max(1))
            .map(|s| rbf(self.gamma, s, row))
            .collect();
        self.machines
            .iter()
            .map(|m| m.coef.iter().map(|&(s, a)| a * kv[s as usize]).sum::<f64>() - m.rho)
            .collect()
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        let dv = self.decision_values(row);
        let mut best = 0;
        for (i, v) in dv.iter().enumerate() {
            if *v > dv[best] {
                best = i;
            }
        }
        self.machines[best].class
    }
}

/// Post-training check of one binary dual solution.
#[derive(Clone, Debug, PartialEq)]
pub struct KktReport {
    pub class: u8,
    /// Largest violation of the per-sample optimality conditions.
    pub max_violation: f64,
    /// |sum_i y_i alpha_i|.
    pub equality_residual: f64,
    /// Every alpha lies in [0, C].
    pub in_box: bool,
    pub n_support: usize,
}

/// Recompute the margins of every training row from the raw data and the
/// stored duals, and measure how far each row is from satisfying the KKT
/// conditions against the stored bias.
pub fn kkt_audit(data: &Dataset, fit: &SvmFit) -> Vec<KktReport> {
    let sub = data.select(&fit.indices);
    let gamma = fit.model.gamma;
    let n = sub.len();
    fit.duals
        .iter()
        .zip(&fit.model.machines)
        .map(|((cls, alpha), m)| {
            let y: Vec<f64> = sub
                .labels()
                .iter()
                .map(|l| if l == cls { 1.0 } else { -1.0 })
                .collect();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let f: f64 = (0..n)
                    .filter(|&j| alpha[j] > 0.0)
                    .map(|j| alpha[j] * y[j] * rbf(gamma, sub.row(i), sub.row(j)))
                    .sum::<f64>()
                    - m.rho;
                let margin = y[i] * f - 1.0;
                let v = if alpha[i] <= 0.0 {
                    (-margin).max(0.0)
                } else if alpha[i] >= fit.c {
                    margin.max(0.0)
                } else {
                    margin.abs()
                };
                worst = worst.max(v);
            }
            KktReport {
                class: *cls,
                max_violation: worst,
                equality_residual: alpha.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs(),
                in_box: alpha.iter().all(|&a| (0.0..=fit.c).contains(&a)),
                n_support: alpha.iter().filter(|&&a| a > 0.0).count(),
            }
        })
        .collect()
}
