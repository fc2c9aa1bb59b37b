use crate::error::{Error, Result};
use crate::netcore::ParamVector;
use crate::par;

use super::linalg::sym_eigen;

/// Classical MDS coordinates. `dims` is how many axes carry a positive
/// eigenvalue (0, 1 or 2); missing axes are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsEmbedding {
    pub coords: Vec<[f64; 2]>,
    pub dims: usize,
    pub eigenvalues: Vec<f64>,
}

impl MdsEmbedding {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }
}

/// Row-major `k x k` Euclidean distances between weight vectors.
pub fn distance_matrix(samples: &[&ParamVector]) -> Result<Vec<f64>> {
    let k = samples.len();
    if let Some(first) = samples.first() {
        if samples.iter().any(|s| s.spec() != first.spec()) {
            return Err(Error::SpecMismatch("weight samples come from different networks".into()));
        }
    }
    let rows = par::map_range(k, |i| {
        (0..k)
            .map(|j| {
                if i == j {
                    0.0
                } else {
                    samples[i]
                        .values()
                        .iter()
                        .zip(samples[j].values())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                }
            })
            .collect::<Vec<f64>>()
    });
    let mut d = rows.concat();
    // make exactly symmetric regardless of summation order
    for i in 0..k {
        for j in 0..i {
            d[j * k + i] = d[i * k + j];
        }
    }
    Ok(d)
}

/// Torgerson MDS of weight samples into two dimensions.
pub fn mds_embed(samples: &[&ParamVector]) -> Result<MdsEmbedding> {
    if samples.len() < 3 {
        return Err(Error::Data(format!("MDS needs at least 3 samples, got {}", samples.len())));
    }
    let d = distance_matrix(samples)?;
    Ok(mds_from_distances(&d, samples.len()))
}

pub(crate) fn mds_from_distances(d: &[f64], k: usize) -> MdsEmbedding {
    let mut b: Vec<f64> = d.iter().map(|x| x * x).collect();
    let row_means: Vec<f64> = (0..k).map(|i| b[i * k..(i + 1) * k].iter().sum::<f64>() / k as f64).collect();
    let grand = row_means.iter().sum::<f64>() / k as f64;
    for i in 0..k {
        for j in 0..k {
            b[i * k + j] = -0.5 * (b[i * k + j] - row_means[i] - row_means[j] + grand);
        }
    }
    let eig = sym_eigen(&b, k);
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let positive = |j: usize| j < k && eig.values[j] > 1e-10 * scale && scale > 0.0;
    let dims = (0..2).filter(|&j| positive(j)).count();
    let mut coords = vec![[0.0; 2]; k];
    for axis in 0..dims {
        let s = eig.values[axis].sqrt();
        let v = eig.vector(axis);
        for (c, vi) in coords.iter_mut().zip(v) {
            c[axis] = vi * s;
        }
    }
    MdsEmbedding {
        coords,
        dims,
        eigenvalues: eig.values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{NetworkSpec, OutputHead};
    use std::sync::Arc;

    fn vecs(points: &[Vec<f64>]) -> Vec<ParamVector> {
        // spec [1, n-1] with a linear head has exactly 2(n-1) parameters; pick
        // one whose count equals the point dimension
        let dim = points[0].len();
        assert_eq!(dim % 2, 0);
        let spec = Arc::new(NetworkSpec::relu(&[1, dim / 2], OutputHead::Linear).unwrap());
        points.iter().map(|p| ParamVector::new(spec.clone(), p.clone()).unwrap()).collect()
    }

    #[test]
    fn right_triangle_is_exact() {
        let pts = vec![
            vec![1.0, 1.0, 1.0, 1.0],
            vec![4.0, 1.0, 1.0, 1.0],
            vec![1.0, 5.0, 1.0, 1.0],
        ];
        let v = vecs(&pts);
        let refs: Vec<&ParamVector> = v.iter().collect();
        let e = mds_embed(&refs).unwrap();
        assert_eq!(e.dims, 2);
        let want = [(0, 1, 3.0), (0, 2, 4.0), (1, 2, 5.0)];
        for (i, j, d) in want {
            assert!((e.distance(i, j) - d).abs() < 1e-8 * d);
        }
    }

    #[test]
    fn identical_and_collinear() {
        let v = vecs(&vec![vec![2.0, -1.0]; 4]);
        let refs: Vec<&ParamVector> = v.iter().collect();
        let e = mds_embed(&refs).unwrap();
        assert_eq!(e.dims, 0);
        assert!(e.coords.iter().all(|c| c[0] == 0.0 && c[1] == 0.0));

        let v = vecs(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![3.0, 3.0]]);
        let refs: Vec<&ParamVector> = v.iter().collect();
        let e = mds_embed(&refs).unwrap();
        assert_eq!(e.dims, 1);
        assert!((e.distance(0, 2) - 18f64.sqrt()).abs() < 1e-8);
    }
}
