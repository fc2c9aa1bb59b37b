use crate::error::{Error, Result};
use crate::netcore::{gemm, Batch};

use super::linalg::sym_eigen;

/// Fitted projection onto the top two principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub mean: Vec<f64>,
    /// Two orthonormal rows of length `D`.
    pub components: [Vec<f64>; 2],
    pub explained_variance_ratio: [f64; 2],
}

/// Top-2 eigenvectors of the sample covariance. Each component is signed so
/// its largest-magnitude coordinate is positive.
pub fn pca_fit(x: &Batch) -> Result<Projection2D> {
    let (n, d) = (x.rows(), x.cols());
    if n < 3 || d < 2 {
        return Err(Error::Data(format!("PCA needs n >= 3 and D >= 2, got {n}x{d}")));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = x.as_slice().to_vec();
    for row in centered.chunks_mut(d) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = vec![0.0; d * d];
    // cov = X^T X / (n - 1)
    gemm(
        d,
        n,
        d,
        1.0 / (n as f64 - 1.0),
        &centered,
        (1, d as isize),
        &centered,
        (d as isize, 1),
        0.0,
        &mut cov,
        (d as isize, 1),
    );
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (cov[i * d + j] + cov[j * d + i]);
            cov[i * d + j] = s;
            cov[j * d + i] = s;
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("data has zero variance".into()));
    }
    let eig = sym_eigen(&cov, d);
    let component = |j: usize| {
        let mut v = eig.vector(j);
        let big = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if big < 0.0 {
            for c in &mut v {
                *c = -*c;
            }
        }
        v
    };
    let ratio = |j: usize| (eig.values[j].max(0.0) / total).clamp(0.0, 1.0);
    Ok(Projection2D {
        mean,
        components: [component(0), component(1)],
        explained_variance_ratio: [ratio(0), ratio(1)],
    })
}

/// `n x 2` coordinates of `x` in the fitted component basis.
pub fn pca_apply(proj: &Projection2D, x: &Batch) -> Result<Batch> {
    let d = proj.mean.len();
    if x.cols() != d {
        return Err(Error::Shape(format!("projection expects {d} features, got {}", x.cols())));
    }
    let mut out = Vec::with_capacity(x.rows() * 2);
    for i in 0..x.rows() {
        let row = x.row(i);
        for c in &proj.components {
            out.push(row.iter().zip(&proj.mean).zip(c).map(|((v, m), w)| (v - m) * w).sum());
        }
    }
    Batch::new(x.rows(), 2, out)
}
