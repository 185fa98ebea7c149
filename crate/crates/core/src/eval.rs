//! Cluster labels from the spectral indicator and external clustering metrics.

use pathfinding::kuhn_munkres::kuhn_munkres;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::Matrix;

pub const KMEANS_RESTARTS: usize = 50;
const KMEANS_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
}

fn sq_dist(points: &Matrix, i: usize, centroids: &Matrix, c: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centroids.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn nearest(points: &Matrix, i: usize, centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = sq_dist(points, i, centroids, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> KMeans {
    let (n, dim) = points.shape();
    let mut centroids = Matrix::zeros(k, dim);

    // k-means++ seeding
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centroids, c));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let (c, _) = nearest(points, i, &centroids);
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += points.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c) / counts[c] as f64;
                centroids.set_row(c, &mean);
            } else {
                // reseed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .map(|i| (i, sq_dist(points, i, &centroids, labels[i])))
                    .fold(
                        (0, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    )
                    .0;
                centroids.set_row(c, &points.row(far));
                labels[far] = c;
            }
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points, i, &centroids, labels[i]))
        .sum();
    KMeans {
        labels,
        centroids,
        inertia,
    }
}

/// k-means on the rows of `points` with k-means++ seeding; the restart with
/// the lowest inertia wins, ties going to the earlier restart.
pub fn kmeans(points: &Matrix, k: usize, restarts: usize, seed: u64) -> KMeans {
    assert!(k >= 1 && k <= points.nrows(), "k out of range");
    let runs: Vec<KMeans> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            kmeans_once(points, k, &mut rng)
        })
        .collect();
    runs.into_iter()
        .reduce(|best, cur| {
            if cur.inertia < best.inertia {
                cur
            } else {
                best
            }
        })
        .expect("at least one restart")
}

/// Row-normalizes `F` (zero rows untouched) and clusters the rows.
pub fn labels_from_indicator(f: &Matrix, c: usize, seed: u64) -> Vec<usize> {
    let mut rows = f.clone();
    for mut row in rows.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    kmeans(&rows, c, KMEANS_RESTARTS, seed).labels
}

// ---------------------------------------------------------------------------
// Metrics

fn compress(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let ids = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("present"))
        .collect();
    (ids, distinct.len())
}

/// `table[p][t]` counts samples with predicted id `p` and true id `t`.
fn contingency(pred: &[usize], truth: &[usize]) -> Vec<Vec<usize>> {
    assert_eq!(pred.len(), truth.len(), "label vectors differ in length");
    assert!(!pred.is_empty(), "empty label vectors");
    let (p, kp) = compress(pred);
    let (t, kt) = compress(truth);
    let mut table = vec![vec![0usize; kt]; kp];
    for (a, b) in p.iter().zip(&t) {
        table[*a][*b] += 1;
    }
    table
}

/// Best agreement over one-to-one matchings of predicted and true ids.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let table = contingency(pred, truth);
    let size = table.len().max(table[0].len());
    let weights = pathfinding::matrix::Matrix::from_fn(size, size, |(r, c)| {
        table
            .get(r)
            .and_then(|row| row.get(c))
            .map_or(0i64, |&v| v as i64)
    });
    let (matched, _) = kuhn_munkres(&weights);
    matched as f64 / pred.len() as f64
}

pub fn purity(pred: &[usize], truth: &[usize]) -> f64 {
    let table = contingency(pred, truth);
    let majority: usize = table
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    majority as f64 / pred.len() as f64
}

/// Mutual information over `sqrt(H(pred) · H(truth))`.
pub fn nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let table = contingency(pred, truth);
    let n = pred.len() as f64;
    let row: Vec<f64> = table
        .iter()
        .map(|r| r.iter().sum::<usize>() as f64)
        .collect();
    let col: Vec<f64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum::<usize>() as f64)
        .collect();
    let entropy = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| {
                let p = c / n;
                -p * p.ln()
            })
            .sum()
    };
    let (hp, ht) = (entropy(&row), entropy(&col));
    if hp == 0.0 || ht == 0.0 {
        // at least one side is a single cluster
        return if table.len() == table[0].len() {
            1.0
        } else {
            0.0
        };
    }
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &count) in r.iter().enumerate() {
            if count > 0 {
                let pij = count as f64 / n;
                mi += pij * (pij * n * n / (row[i] * col[j])).ln();
            }
        }
    }
    (mi / (hp * ht).sqrt()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub purity: f64,
    pub nmi: f64,
}

impl Metrics {
    pub fn compute(pred: &[usize], truth: &[usize]) -> Self {
        Self {
            acc: accuracy(pred, truth),
            purity: purity(pred, truth),
            nmi: nmi(pred, truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub metrics: Option<Metrics>,
    pub seed: u64,
}

/// Mean and sample standard deviation (zero for fewer than two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Median; the mean of the middle pair for even lengths, NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub runs: usize,
    pub acc: MeanStd,
    pub purity: MeanStd,
    pub nmi: MeanStd,
}

impl MetricSummary {
    pub fn of(metrics: &[Metrics]) -> Self {
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&metrics.iter().map(f).collect::<Vec<_>>());
        Self {
            runs: metrics.len(),
            acc: pick(|m| m.acc),
            purity: pick(|m| m.purity),
            nmi: pick(|m| m.nmi),
        }
    }
}
