use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::netcore::{gemm, Batch};

/// Grid resolution per axis.
pub const GRID_SIZE: usize = 100;

/// Axis-aligned box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Cell-averaged KDE on a `g x g` grid, row `iy`, column `ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub bounds: Bounds,
    pub g: usize,
    pub bandwidth: [f64; 2],
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn cell_area(&self) -> f64 {
        (self.bounds.x1 - self.bounds.x0) * (self.bounds.y1 - self.bounds.y0) / (self.g * self.g) as f64
    }

    /// Riemann sum of the density over the box.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let b = &self.bounds;
        (
            b.x0 + (ix as f64 + 0.5) * (b.x1 - b.x0) / self.g as f64,
            b.y0 + (iy as f64 + 0.5) * (b.y1 - b.y0) / self.g as f64,
        )
    }

    /// `(ix, iy)` of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let i = (0..self.values.len())
            .fold(0, |best, i| if self.values[i] > self.values[best] { i } else { best });
        (i % self.g, i / self.g)
    }
}

fn check_points(points: &Batch) -> Result<()> {
    if points.cols() != 2 {
        return Err(Error::Shape(format!("KDE needs 2-D points, got {} columns", points.cols())));
    }
    if points.rows() < 10 {
        return Err(Error::Data(format!("KDE needs at least 10 points, got {}", points.rows())));
    }
    Ok(())
}

/// Scott's rule `n^(-1/6) * sigma` per axis, with the unbiased sample
/// standard deviation.
pub fn scott_bandwidth(points: &Batch) -> Result<[f64; 2]> {
    check_points(points)?;
    let n = points.rows() as f64;
    let mut h = [0.0; 2];
    for (axis, h) in h.iter_mut().enumerate() {
        let mean = (0..points.rows()).map(|i| points.row(i)[axis]).sum::<f64>() / n;
        let var = (0..points.rows()).map(|i| (points.row(i)[axis] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var <= 0.0 {
            return Err(Error::Degenerate(format!("coordinate {axis} has zero variance")));
        }
        *h = n.powf(-1.0 / 6.0) * var.sqrt();
    }
    Ok(h)
}

/// Bounding box of all `sets` padded by `pad` per axis.
pub fn joint_bounds(sets: &[&Batch], pad: [f64; 2]) -> Bounds {
    let mut b = Bounds {
        x0: f64::INFINITY,
        x1: f64::NEG_INFINITY,
        y0: f64::INFINITY,
        y1: f64::NEG_INFINITY,
    };
    for s in sets {
        for i in 0..s.rows() {
            let r = s.row(i);
            b.x0 = b.x0.min(r[0]);
            b.x1 = b.x1.max(r[0]);
            b.y0 = b.y0.min(r[1]);
            b.y1 = b.y1.max(r[1]);
        }
    }
    b.x0 -= pad[0];
    b.x1 += pad[0];
    b.y0 -= pad[1];
    b.y1 += pad[1];
    b
}

/// Mass of `N(p, h^2)` inside `[a, b]`, computed on the tail side for
/// accuracy far from the center.
fn interval_mass(a: f64, b: f64, p: f64, h: f64) -> f64 {
    let s = h * std::f64::consts::SQRT_2;
    let (ua, ub) = ((a - p) / s, (b - p) / s);
    if ua >= 0.0 {
        0.5 * (libm::erfc(ua) - libm::erfc(ub))
    } else if ub <= 0.0 {
        0.5 * (libm::erfc(-ub) - libm::erfc(-ua))
    } else {
        1.0 - 0.5 * (libm::erfc(-ua) + libm::erfc(ub))
    }
}

/// Per-point kernel mass in each grid cell along one axis.
fn axis_weights(points: &Batch, axis: usize, lo: f64, hi: f64, g: usize, h: f64) -> Vec<f64> {
    let step = (hi - lo) / g as f64;
    let mut w = Vec::with_capacity(points.rows() * g);
    for i in 0..points.rows() {
        let p = points.row(i)[axis];
        for c in 0..g {
            let a = lo + c as f64 * step;
            w.push(interval_mass(a, a + step, p, h).max(0.0));
        }
    }
    w
}

/// Gaussian product-kernel KDE of `points` with bandwidth `h` on the `g x g`
/// cells of `bounds`. Each value is the kernel mass falling in a cell divided
/// by the cell area, so narrow kernels never slip between cell centers.
pub fn kde_density(points: &Batch, h: [f64; 2], bounds: Bounds, g: usize) -> Result<DensityGrid> {
    check_points(points)?;
    if !(h[0] > 0.0 && h[1] > 0.0) {
        return Err(Error::Degenerate(format!("bandwidth {h:?} is not positive")));
    }
    if !(bounds.x1 > bounds.x0 && bounds.y1 > bounds.y0) || g == 0 {
        return Err(Error::Degenerate(format!("empty grid {bounds:?}")));
    }
    let n = points.rows();
    let wx = axis_weights(points, 0, bounds.x0, bounds.x1, g, h[0]);
    let wy = axis_weights(points, 1, bounds.y0, bounds.y1, g, h[1]);
    let area = (bounds.x1 - bounds.x0) * (bounds.y1 - bounds.y0) / (g * g) as f64;
    // values[iy][ix] = sum_k wy[k][iy] * wx[k][ix] / (n * area)
    let mut values = vec![0.0; g * g];
    gemm(
        g,
        n,
        g,
        1.0 / (n as f64 * area),
        &wy,
        (1, g as isize),
        &wx,
        (g as isize, 1),
        0.0,
        &mut values,
        (g as isize, 1),
    );
    for v in &mut values {
        *v = v.max(0.0);
    }
    Ok(DensityGrid {
        bounds,
        g,
        bandwidth: h,
        values,
    })
}

/// Jensen-Shannon divergence in nats between two grids on the same box.
pub fn jsd_grids(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    if p.bounds != q.bounds || p.g != q.g {
        return Err(Error::Shape("JSD grids must share bounds and resolution".into()));
    }
    let sp: f64 = p.values.iter().sum();
    let sq: f64 = q.values.iter().sum();
    if !(sp > 0.0 && sq > 0.0) {
        return Err(Error::Degenerate("density grid has no mass".into()));
    }
    let mut total = 0.0;
    for (&a, &b) in p.values.iter().zip(&q.values) {
        let (pa, qb) = (a / sp, b / sq);
        let m = (0.5 * (pa + qb)).max(1e-12);
        let mut cell = 0.0;
        if pa > 0.0 {
            cell += 0.5 * pa * (pa / m).ln();
        }
        if qb > 0.0 {
            cell += 0.5 * qb * (qb / m).ln();
        }
        total += cell;
    }
    Ok(total.clamp(0.0, LN_2))
}

/// JSD between two 2-D sample sets: Scott-bandwidth KDEs on the
/// `GRID_SIZE`-square joint bounding box padded by three bandwidths.
pub fn jsd(p: &Batch, q: &Batch) -> Result<f64> {
    let hp = scott_bandwidth(p)?;
    let hq = scott_bandwidth(q)?;
    let pad = [3.0 * hp[0].max(hq[0]), 3.0 * hp[1].max(hq[1])];
    let bounds = joint_bounds(&[p, q], pad);
    let gp = kde_density(p, hp, bounds, GRID_SIZE)?;
    let gq = kde_density(q, hq, bounds, GRID_SIZE)?;
    jsd_grids(&gp, &gq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, cx: f64, cy: f64, s: f64, seed: u64) -> Batch {
        let mut b = Batch::standard_normal(n, 2, &mut ChaCha8Rng::seed_from_u64(seed));
        for r in b.as_mut_slice().chunks_mut(2) {
            r[0] = cx + s * r[0];
            r[1] = cy + s * r[1];
        }
        b
    }

    #[test]
    fn mass_and_peak() {
        let pts = cloud(500, 3.0, -2.0, 0.1, 1);
        let h = scott_bandwidth(&pts).unwrap();
        let b = joint_bounds(&[&pts], [3.0 * h[0], 3.0 * h[1]]);
        let grid = kde_density(&pts, h, b, GRID_SIZE).unwrap();
        assert!((grid.mass() - 1.0).abs() < 0.02, "{}", grid.mass());
        let (ix, iy) = grid.argmax();
        let (cx, cy) = grid.cell_center(ix, iy);
        let cell = (b.x1 - b.x0) / GRID_SIZE as f64;
        assert!((cx - 3.0).abs() < 2.0 * cell && (cy + 2.0).abs() < 2.0 * cell);
    }

    #[test]
    fn jsd_limits() {
        let p = cloud(400, 0.0, 0.0, 1.0, 2);
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
        let q = cloud(400, 100.0, 100.0, 0.1, 3);
        let far = jsd(&cloud(400, 0.0, 0.0, 0.1, 4), &q).unwrap();
        assert!((far - LN_2).abs() < 0.05 * LN_2);
        let r = cloud(300, 0.5, 0.2, 1.3, 5);
        assert_eq!(jsd(&p, &r).unwrap(), jsd(&r, &p).unwrap());
    }

    #[test]
    fn degenerate_inputs() {
        let flat = Batch::new(10, 2, (0..20).map(|i| if i % 2 == 0 { i as f64 } else { 1.0 }).collect()).unwrap();
        assert!(matches!(scott_bandwidth(&flat), Err(Error::Degenerate(_))));
        let few = cloud(5, 0.0, 0.0, 1.0, 6);
        assert!(jsd(&few, &few).is_err());
    }
}
