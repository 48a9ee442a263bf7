use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, restarts: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            restarts,
            max_iter: 300,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseClusters {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centers.
    pub distortion: f64,
    /// Distortion after each assignment step of the winning restart.
    pub trace: Vec<f64>,
    /// Fuzzifier for [`fuzzy_membership`].
    pub fuzziness: f64,
}

impl PoseClusters {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn memberships(&self, x: &[f64]) -> Vec<f64> {
        fuzzy_membership(x, &self.centers, self.fuzziness).unwrap_or_default()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center and its squared distance; lowest index wins ties.
fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check(features: &[Vec<f64>], k: usize) -> Result<()> {
    let Some(first) = features.first() else {
        return Err(Error::EmptyInput);
    };
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > features.len() {
        return Err(Error::KTooLarge {
            k,
            samples: features.len(),
        });
    }
    if let Some(x) = features.iter().find(|x| x.len() != first.len()) {
        return Err(Error::DimensionMismatch(format!(
            "feature of length {} among length {}",
            x.len(),
            first.len()
        )));
    }
    Ok(())
}

/// k-means++ seeding.
fn seed_centers(features: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![features[first].clone()];
    let mut d2: Vec<f64> = features.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // Every point sits on a center: take any unused point.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.push(features[pick].clone());
        for (d, x) in d2.iter_mut().zip(features) {
            *d = d.min(sq_dist(x, &features[pick]));
        }
    }
    centers
}

/// Lloyd iterations from `centers`.
fn lloyd(features: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> PoseClusters {
    let k = centers.len();
    let dim = features[0].len();
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iter = 0;
    loop {
        let step: Vec<(usize, f64)> = features.iter().map(|x| nearest(x, &centers)).collect();
        let next: Vec<usize> = step.iter().map(|s| s.0).collect();
        trace.push(step.iter().map(|s| s.1).sum());
        let stable = next == assignments;
        assignments = next;
        if stable || iter == max_iter {
            break;
        }
        iter += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in features.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        // Empty clusters move onto the points worst served by their center.
        let mut residual: Vec<f64> = step.iter().map(|s| s.1).collect();
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                centers[j] = sums[j].iter().map(|s| s * inv).collect();
            } else {
                let far = (0..residual.len())
                    .fold(0, |best, i| if residual[i] > residual[best] { i } else { best });
                centers[j] = features[far].clone();
                residual[far] = 0.0;
            }
        }
    }
    let distortion = *trace.last().expect("at least one assignment step");
    PoseClusters {
        centers,
        assignments,
        distortion,
        trace,
        fuzziness: 2.0,
    }
}

fn best_of(runs: Vec<PoseClusters>) -> PoseClusters {
    runs.into_iter()
        .reduce(|best, r| if r.distortion < best.distortion { r } else { best })
        .expect("at least one run")
}

/// Best of `config.restarts` seeded Lloyd runs; restart `r` seeds its
/// generator with `seed + r`.
pub fn kmeans(features: &[Vec<f64>], config: &KMeansConfig) -> Result<PoseClusters> {
    check(features, config.k)?;
    let restarts = config.restarts.max(1);
    let runs = par::map_range(restarts, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
        let centers = seed_centers(features, config.k, &mut rng);
        lloyd(features, centers, config.max_iter)
    });
    Ok(best_of(runs))
}

/// Degree of membership of `x` in each cluster for fuzzifier `m > 1`.
/// A point on a center belongs to it alone (the first such center).
pub fn fuzzy_membership(x: &[f64], centers: &[Vec<f64>], m: f64) -> Result<Vec<f64>> {
    if centers.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!("fuzzifier must exceed 1, got {m}")));
    }
    let d: Vec<f64> = centers.iter().map(|c| sq_dist(x, c).sqrt()).collect();
    if let Some(hit) = d.iter().position(|&v| v == 0.0) {
        let mut q = vec![0.0; centers.len()];
        q[hit] = 1.0;
        return Ok(q);
    }
    // Ratios against the nearest center keep the powers in range.
    let p = 2.0 / (m - 1.0);
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = d.iter().map(|&v| (dmin / v).powf(p)).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowScan {
    /// `(k, distortion)` for `k = 1..=k_max`.
    pub points: Vec<(usize, f64)>,
    /// `distortion(k) - distortion(k + 1)`.
    pub drops: Vec<f64>,
}

impl ElbowScan {
    /// The `k` reached by the largest drop.
    pub fn largest_drop_at(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &d) in self.drops.iter().enumerate() {
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((i + 2, d));
            }
        }
        best.map(|(k, _)| k)
    }
}

/// Distortion for every `k` up to `k_max`.
///
/// Each `k` also tries the `k - 1` solution plus its worst-served point as
/// an extra start, so the curve never rises.
pub fn elbow_scan(features: &[Vec<f64>], k_max: usize, restarts: usize, seed: u64) -> Result<ElbowScan> {
    check(features, k_max)?;
    let mut points = Vec::with_capacity(k_max);
    let mut previous: Option<PoseClusters> = None;
    for k in 1..=k_max {
        let mut run = kmeans(features, &KMeansConfig::new(k, restarts, seed))?;
        if let Some(prev) = &previous {
            let far = (0..features.len())
                .map(|i| (i, sq_dist(&features[i], &prev.centers[prev.assignments[i]])))
                .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b })
                .0;
            let mut centers = prev.centers.clone();
            centers.push(features[far].clone());
            let warm = lloyd(features, centers, KMeansConfig::new(k, 1, seed).max_iter);
            if warm.distortion < run.distortion {
                run = warm;
            }
        }
        points.push((k, run.distortion));
        previous = Some(run);
    }
    let drops = points.windows(2).map(|w| w[0].1 - w[1].1).collect();
    Ok(ElbowScan { points, drops })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub image_id: String,
    pub membership: f64,
}

/// Cluster summary for gallery display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub distortion: f64,
    pub fuzziness: f64,
    pub centers: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    /// Per cluster, the `top` samples with the highest membership.
    pub members: Vec<Vec<ClusterMember>>,
}

impl ClusterReport {
    pub fn new(clusters: &PoseClusters, ids: &[String], features: &[Vec<f64>], top: usize) -> ClusterReport {
        let memberships: Vec<Vec<f64>> = par::map(features, |x| clusters.memberships(x));
        let members = (0..clusters.k())
            .map(|j| {
                let mut ranked: Vec<(usize, f64)> = memberships.iter().map(|q| q[j]).enumerate().collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0])));
                ranked
                    .into_iter()
                    .take(top)
                    .map(|(i, q)| ClusterMember {
                        image_id: ids[i].clone(),
                        membership: q,
                    })
                    .collect()
            })
            .collect();
        ClusterReport {
            k: clusters.k(),
            distortion: clusters.distortion,
            fuzziness: clusters.fuzziness,
            centers: clusters.centers.clone(),
            sizes: clusters.sizes(),
            members,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64, (i * i % 7) as f64]).collect()
    }

    #[test]
    fn k_one_is_the_mean() {
        let x = line(9);
        let c = kmeans(&x, &KMeansConfig::new(1, 3, 7)).unwrap();
        let mean_x = x.iter().map(|p| p[0]).sum::<f64>() / 9.0;
        let mean_y = x.iter().map(|p| p[1]).sum::<f64>() / 9.0;
        assert!((c.centers[0][0] - mean_x).abs() < 1e-12);
        assert!((c.centers[0][1] - mean_y).abs() < 1e-12);
    }

    #[test]
    fn k_equal_n_has_zero_distortion() {
        let mut x = line(6);
        x.push(x[2].clone());
        let c = kmeans(&x, &KMeansConfig::new(7, 2, 1)).unwrap();
        assert_eq!(c.distortion, 0.0);
    }

    #[test]
    fn trace_never_rises() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.77).sin() * 10.0, (i as f64 * 1.3).cos()]).collect();
        let c = kmeans(&x, &KMeansConfig::new(6, 4, 3)).unwrap();
        assert!(c.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let recomputed: f64 = x.iter().zip(&c.assignments).map(|(p, &a)| sq_dist(p, &c.centers[a])).sum();
        assert!((recomputed - c.distortion).abs() < 1e-9);
    }

    #[test]
    fn deterministic_per_seed() {
        let x = line(40);
        let a = kmeans(&x, &KMeansConfig::new(4, 3, 11)).unwrap();
        let b = par::sequential(|| kmeans(&x, &KMeansConfig::new(4, 3, 11))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        assert!(matches!(kmeans(&[], &KMeansConfig::new(1, 1, 0)), Err(Error::EmptyInput)));
        assert!(matches!(
            kmeans(&line(2), &KMeansConfig::new(3, 1, 0)),
            Err(Error::KTooLarge { k: 3, samples: 2 })
        ));
        assert!(matches!(elbow_scan(&[], 3, 1, 0), Err(Error::EmptyInput)));
    }

    #[test]
    fn membership_limits() {
        let centers = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let q = fuzzy_membership(&[1.0, 5.0], &centers, 2.0).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-15 && (q[1] - 0.5).abs() < 1e-15);
        assert_eq!(fuzzy_membership(&[2.0, 0.0], &centers, 2.0).unwrap(), vec![0.0, 1.0]);
        assert!(fuzzy_membership(&[1.0], &centers, 1.0).is_err());
        let q = fuzzy_membership(&[0.3, -0.4], &centers, 1.7).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // m = 2 gives inverse squared distance weights.
        let q = fuzzy_membership(&[-1.0, 0.0], &centers, 2.0).unwrap();
        assert!((q[0] - (1.0 / (1.0 + 1.0 / 9.0))).abs() < 1e-15);
    }

    #[test]
    fn elbow_is_monotone() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 2.1).sin(), (i as f64 * 0.4).cos() * 3.0]).collect();
        let scan = elbow_scan(&x, 8, 2, 5).unwrap();
        assert_eq!(scan.points.len(), 8);
        assert!(scan.drops.iter().all(|&d| d >= 0.0));
    }
}
