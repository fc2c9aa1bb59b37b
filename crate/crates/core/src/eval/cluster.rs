use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Score given to the one-cluster hypothesis. A split is only preferred when
/// its mean silhouette beats this, the usual "reasonable structure" cut.
pub const SINGLE_CLUSTER_SCORE: f64 = 0.5;

const RESTARTS: usize = 20;
const MAX_LLOYD: usize = 300;

/// Best clustering found by [`cluster_count`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFit {
    pub k_best: usize,
    /// Mean silhouette of the chosen clustering (0 when `k_best == 1`).
    pub silhouette: f64,
    /// Mean silhouette for `k = 1, 2, ...`.
    pub scores: Vec<f64>,
    pub labels: Vec<usize>,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Lloyd's algorithm from k-means++ seeds, best of `RESTARTS` by inertia.
pub fn kmeans(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..RESTARTS {
        let mut centers = vec![points[rng.random_range(0..n)]];
        while centers.len() < k {
            let d: Vec<f64> = points
                .iter()
                .map(|p| centers.iter().map(|c| dist2(*p, *c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = d.iter().sum();
            let next = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (i, di) in d.iter().enumerate() {
                    if u < *di {
                        pick = i;
                        break;
                    }
                    u -= di;
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            centers.push(points[next]);
        }
        let mut labels = vec![0; n];
        for it in 0..MAX_LLOYD {
            let mut changed = false;
            for (l, p) in labels.iter_mut().zip(points) {
                let mut arg = 0;
                for c in 1..k {
                    if dist2(*p, centers[c]) < dist2(*p, centers[arg]) {
                        arg = c;
                    }
                }
                if *l != arg {
                    *l = arg;
                    changed = true;
                }
            }
            if !changed && it > 0 {
                break;
            }
            let mut sums = vec![[0.0; 3]; k];
            for (l, p) in labels.iter().zip(points) {
                sums[*l][0] += p[0];
                sums[*l][1] += p[1];
                sums[*l][2] += 1.0;
            }
            for (c, s) in centers.iter_mut().zip(&sums) {
                if s[2] > 0.0 {
                    *c = [s[0] / s[2], s[1] / s[2]];
                }
            }
        }
        let inertia: f64 = labels.iter().zip(points).map(|(l, p)| dist2(*p, centers[*l])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

/// Mean silhouette; points in singleton clusters score 0.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = points.len();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let sizes: Vec<usize> = (0..k).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] <= 1 {
            continue;
        }
        let mut sum = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sum[labels[j]] += dist2(points[i], points[j]).sqrt();
            }
        }
        let a = sum[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sum[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Picks `k` in `1..=min(6, n/2)` by mean silhouette, with the one-cluster
/// hypothesis scored at [`SINGLE_CLUSTER_SCORE`]. Ties go to the smaller `k`.
pub fn cluster_count(points: &[[f64; 2]], seed: u64) -> ClusterFit {
    let n = points.len();
    let k_max = 6.min(n / 2).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit = ClusterFit {
        k_best: 1,
        silhouette: 0.0,
        scores: vec![0.0],
        labels: vec![0; n],
    };
    let mut best_score = SINGLE_CLUSTER_SCORE;
    for k in 2..=k_max {
        let labels = kmeans(points, k, &mut rng);
        let s = silhouette(points, &labels);
        fit.scores.push(s);
        if s > best_score {
            best_score = s;
            fit.k_best = k;
            fit.silhouette = s;
            fit.labels = labels;
        }
    }
    fit
}
