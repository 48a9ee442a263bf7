use serde::{Deserialize, Serialize};

use super::smo::{solve_binary, SmoParams};
use super::CategoryVector;
use crate::annotation::Category;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// RBF width; `None` means `1 / feature count`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_passes: 10_000,
        }
    }
}

/// Per-dimension affine map to zero mean and unit variance, fitted on the
/// training set. Constant dimensions keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Standardizer {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// One pairwise classifier. A positive decision value votes for `positive`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub positive: Category,
    pub negative: Category,
    /// Standardized support vectors.
    pub support: Vec<Vec<f64>>,
    /// `y_i α_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl BinarySvm {
    /// Decision value for an already standardized input.
    pub fn decision(&self, gamma: f64, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * rbf(gamma, sv, x))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub gamma: f64,
    pub c: f64,
    pub standardizer: Standardizer,
    /// Categories seen in training, ascending.
    pub classes: Vec<Category>,
    /// One classifier per unordered pair, in `(i, j)` lexicographic order.
    pub binaries: Vec<BinarySvm>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Raw decision values of every pairwise classifier.
    pub fn decision_values(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.dim(),
                features.len()
            )));
        }
        let x = self.standardizer.apply(features);
        Ok(self.binaries.iter().map(|b| b.decision(self.gamma, &x)).collect())
    }

    /// Majority vote; ties go to the lowest category index.
    pub fn predict(&self, features: &[f64]) -> Result<Category> {
        let values = self.decision_values(features)?;
        let mut votes = [0usize; Category::COUNT];
        for (b, v) in self.binaries.iter().zip(values) {
            let winner = if v > 0.0 { b.positive } else { b.negative };
            votes[winner.index()] += 1;
        }
        let best = self
            .classes
            .iter()
            .copied()
            .fold(None, |acc: Option<Category>, c| match acc {
                Some(a) if votes[a.index()] >= votes[c.index()] => Some(a),
                _ => Some(c),
            });
        best.ok_or(Error::EmptyModel)
    }
}

/// Trains one RBF SVM per pair of categories present in `samples`.
pub fn train_mcmsvm(samples: &[(Vec<f64>, Category)], params: &SvmParams) -> Result<SvmModel> {
    let Some((first, _)) = samples.first() else {
        return Err(Error::EmptyInput);
    };
    let dim = first.len();
    if dim == 0 {
        return Err(Error::DimensionMismatch("samples have no features".into()));
    }
    if let Some((x, _)) = samples.iter().find(|(x, _)| x.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "sample has {} features, expected {dim}",
            x.len()
        )));
    }
    if samples.iter().any(|(x, _)| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::ValueOutOfRange("non-finite feature value".into()));
    }
    let gamma = params.gamma.unwrap_or(1.0 / dim as f64);
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(Error::InvalidParameter(format!("C must be positive, got {}", params.c)));
    }

    let mut counts = [0usize; Category::COUNT];
    for (_, c) in samples {
        counts[c.index()] += 1;
    }
    let classes: Vec<Category> = Category::ALL.into_iter().filter(|c| counts[c.index()] > 0).collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    if let Some(c) = classes.iter().find(|c| counts[c.index()] < 2) {
        return Err(Error::DegenerateTraining(format!("category {c} has a single sample")));
    }

    let rows: Vec<&[f64]> = samples.iter().map(|(x, _)| x.as_slice()).collect();
    let standardizer = Standardizer::fit(&rows);
    let scaled: Vec<Vec<f64>> = par::map(&rows, |r| standardizer.apply(r));

    let pairs: Vec<(Category, Category)> = classes
        .iter()
        .enumerate()
        .flat_map(|(a, &ca)| classes[a + 1..].iter().map(move |&cb| (ca, cb)))
        .collect();
    let smo = SmoParams {
        c: params.c,
        tol: params.tol,
        max_passes: params.max_passes,
    };
    let binaries = par::map(&pairs, |&(pos, neg)| {
        let members: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].1 == pos || samples[i].1 == neg)
            .collect();
        let y: Vec<f64> = members
            .iter()
            .map(|&i| if samples[i].1 == pos { 1.0 } else { -1.0 })
            .collect();
        let n = members.len();
        let mut gram = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let v = rbf(gamma, &scaled[members[a]], &scaled[members[b]]);
                gram[a * n + b] = v;
                gram[b * n + a] = v;
            }
        }
        let sol = solve_binary(&gram, &y, &smo)?;
        let (support, coef) = members
            .iter()
            .zip(sol.alpha.iter().zip(&y))
            .filter(|(_, (a, _))| **a > 0.0)
            .map(|(&i, (a, y))| (scaled[i].clone(), a * y))
            .unzip();
        Ok(BinarySvm {
            positive: pos,
            negative: neg,
            support,
            coef,
            rho: sol.rho,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    Ok(SvmModel {
        gamma,
        c: params.c,
        standardizer,
        classes,
        binaries,
    })
}

/// Unitary category vector for a feature vector.
pub fn classify(model: &SvmModel, features: &[f64]) -> Result<CategoryVector> {
    model.predict(features).map(CategoryVector::one_hot)
}
