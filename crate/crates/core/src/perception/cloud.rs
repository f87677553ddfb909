//! Point-cloud preprocessing: voxel downsampling, statistical outlier
//! removal and RANSAC plane removal.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub timestamp: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, timestamp: f64) -> Self {
        Self { points, timestamp }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One `x y z` triple per line, meters.
    pub fn write_xyz<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.points {
            writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }

    pub fn read_xyz<R: BufRead>(input: R) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", n + 1)))?;
            if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("line {}: expected three finite values", n + 1)));
            }
            points.push(Vector3::new(vals[0], vals[1], vals[2]));
        }
        Ok(Self::new(points, 0.0))
    }
}

fn voxel_key(p: &Vector3<f64>, leaf: f64) -> (i64, i64, i64) {
    (
        (p.x / leaf).floor() as i64,
        (p.y / leaf).floor() as i64,
        (p.z / leaf).floor() as i64,
    )
}

/// Replaces the points of every occupied voxel by their centroid. Output is
/// ordered by voxel index.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud> {
    if !(leaf > 0.0) {
        return Err(Error::InvalidInput("voxel leaf must be positive".into()));
    }
    let mut cells: BTreeMap<(i64, i64, i64), (Vector3<f64>, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let e = cells.entry(voxel_key(p, leaf)).or_insert((Vector3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    let points = cells.into_values().map(|(s, n)| s / n as f64).collect();
    Ok(PointCloud::new(points, cloud.timestamp))
}

/// Mean of the `k` smallest values, summed in ascending order.
fn mean_of_smallest(dist: &mut [f64], k: usize) -> f64 {
    dist.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    dist[..k].sort_unstable_by(|a, b| a.total_cmp(b));
    dist[..k].iter().sum::<f64>() / k as f64
}

/// Mean distance from each point to its `k` nearest neighbours, by
/// exhaustive search.
pub fn knn_mean_distances_brute(points: &[Vector3<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let k = k.min(n.saturating_sub(1));
    if k == 0 {
        return vec![0.0; n];
    }
    let mut dist = Vec::with_capacity(n);
    (0..n)
        .map(|i| {
            dist.clear();
            dist.extend((0..n).filter(|j| *j != i).map(|j| (points[i] - points[j]).norm()));
            mean_of_smallest(&mut dist, k)
        })
        .collect()
}

/// Mean distance from each point to its `k` nearest neighbours. Searches a
/// uniform grid in growing shells of cells; equal to
/// [`knn_mean_distances_brute`] bit for bit.
pub fn knn_mean_distances(points: &[Vector3<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let k = k.min(n.saturating_sub(1));
    if k == 0 {
        return vec![0.0; n];
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let mut ext = [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z];
    ext.sort_unstable_by(|a, b| b.total_cmp(a));
    // cells hold about k points of a cloud spread over its two largest extents
    let h = (ext[0] * ext[1] * k as f64 / n as f64).sqrt().max(ext[0] / n as f64);
    if !(h > 0.0 && h.is_finite()) {
        return knn_mean_distances_brute(points, k);
    }
    let key = |p: &Vector3<f64>| {
        (
            ((p.x - lo.x) / h).floor() as i64,
            ((p.y - lo.y) / h).floor() as i64,
            ((p.z - lo.z) / h).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut dist = Vec::new();
    let mut brute = Vec::with_capacity(n);
    (0..n)
        .map(|i| {
            let p = points[i];
            let (cx, cy, cz) = key(&p);
            dist.clear();
            let mut r = 0i64;
            loop {
                let shell = if r == 0 { 1 } else { (2 * r + 1).pow(3) - (2 * r - 1).pow(3) };
                if shell as usize > n {
                    brute.clear();
                    brute.extend((0..n).filter(|j| *j != i).map(|j| (p - points[j]).norm()));
                    return mean_of_smallest(&mut brute, k);
                }
                for dx in -r..=r {
                    for dy in -r..=r {
                        let on_side = dx.abs() == r || dy.abs() == r;
                        let zs: &mut dyn Iterator<Item = i64> = if on_side {
                            &mut (-r..=r)
                        } else if r == 0 {
                            &mut (0..=0)
                        } else {
                            &mut [-r, r].into_iter()
                        };
                        for dz in zs {
                            if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                                dist.extend(bucket.iter().filter(|j| **j != i).map(|j| (p - points[*j]).norm()));
                            }
                        }
                    }
                }
                // every point outside the searched cube is farther than r h
                if dist.len() >= k {
                    dist.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
                    if dist[k - 1] <= r as f64 * h {
                        return mean_of_smallest(&mut dist, k);
                    }
                }
                r += 1;
            }
        })
        .collect()
}

/// Drops points whose k-NN mean distance exceeds `mean + std_ratio * std`.
pub fn statistical_outlier_removal(cloud: &PointCloud, k: usize, std_ratio: f64) -> PointCloud {
    let d = knn_mean_distances(&cloud.points, k);
    if d.len() < 2 {
        return cloud.clone();
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let limit = mean + std_ratio * var.sqrt();
    let points = cloud
        .points
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v <= limit)
        .map(|(p, _)| *p)
        .collect();
    PointCloud::new(points, cloud.timestamp)
}

pub fn downsample_and_filter(cloud: &PointCloud, leaf: f64, outlier_k: usize, outlier_std: f64) -> Result<PointCloud> {
    let down = voxel_downsample(cloud, leaf)?;
    let out = statistical_outlier_removal(&down, outlier_k, outlier_std);
    if out.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(out)
}

/// Plane `n . p + d = 0` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        (self.normal.dot(p) + self.offset).abs()
    }

    fn through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len < 1e-12 {
            return None;
        }
        let normal = n / len;
        Some(Self {
            normal,
            offset: -normal.dot(a),
        })
    }

    /// Least-squares plane through `points`.
    pub fn fit(points: &[Vector3<f64>]) -> Option<Self> {
        if points.len() < 3 {
            return None;
        }
        let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let mut cov = Matrix3::zeros();
        for p in points {
            let d = p - c;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let normal = eig.eigenvectors.column(k).into_owned().normalize();
        Some(Self {
            normal,
            offset: -normal.dot(&c),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub distance: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Minimum inlier fraction for a plane to count.
    pub min_fraction: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            distance: 0.005,
            iterations: 200,
            seed: 7,
            min_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneRemoval {
    pub cloud: PointCloud,
    /// `None` when no plane had enough support; the cloud is then unchanged.
    pub plane: Option<Plane>,
    pub inliers: usize,
}

/// Seeded RANSAC plane fit with a least-squares refit on the best consensus
/// set; the refit plane's inliers are removed.
pub fn ransac_plane_removal(cloud: &PointCloud, cfg: &RansacConfig) -> Result<PlaneRemoval> {
    let n = cloud.len();
    if n < 3 {
        return Err(Error::InvalidInput("RANSAC needs at least three points".into()));
    }
    if !(cfg.distance > 0.0) {
        return Err(Error::InvalidInput("RANSAC distance must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pts = &cloud.points;
    let mut best: Option<(Plane, usize)> = None;
    for _ in 0..cfg.iterations {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let Some(plane) = Plane::through(&pts[i], &pts[j], &pts[k]) else {
            continue;
        };
        let count = pts.iter().filter(|p| plane.distance(p) <= cfg.distance).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
        }
    }
    let unchanged = PlaneRemoval {
        cloud: cloud.clone(),
        plane: None,
        inliers: 0,
    };
    let Some((plane, count)) = best else {
        return Ok(unchanged);
    };
    if (count as f64) < cfg.min_fraction * n as f64 {
        return Ok(unchanged);
    }
    let consensus: Vec<Vector3<f64>> = pts.iter().filter(|p| plane.distance(p) <= cfg.distance).copied().collect();
    let plane = Plane::fit(&consensus).unwrap_or(plane);
    let kept: Vec<Vector3<f64>> = pts.iter().filter(|p| plane.distance(p) > cfg.distance).copied().collect();
    let inliers = n - kept.len();
    Ok(PlaneRemoval {
        cloud: PointCloud::new(kept, cloud.timestamp),
        plane: Some(plane),
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_knn_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [1usize, 2, 5, 40, 300] {
            let mut pts: Vec<Vector3<f64>> = (0..n)
                .map(|_| Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(0.5..0.52)))
                .collect();
            if n > 10 {
                pts.push(Vector3::new(0.0, 0.0, 0.1));
                pts.push(pts[3]);
            }
            for k in [1, 4, 8] {
                assert_eq!(knn_mean_distances(&pts, k), knn_mean_distances_brute(&pts, k), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn one_voxel_collapses() {
        let c = PointCloud::new(
            vec![
                Vector3::new(0.001, 0.001, 0.001),
                Vector3::new(0.003, 0.002, 0.004),
                Vector3::new(0.002, 0.003, 0.001),
            ],
            0.0,
        );
        let d = voxel_downsample(&c, 0.01).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.points[0] - Vector3::new(0.002, 0.002, 0.002)).norm() < 1e-15);
    }

    #[test]
    fn separated_grid_is_kept() {
        let mut pts = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                pts.push(Vector3::new(0.005 + 0.01 * i as f64, 0.005 + 0.01 * j as f64, 0.005));
            }
        }
        let c = PointCloud::new(pts, 0.0);
        assert_eq!(voxel_downsample(&c, 0.01).unwrap().len(), 16);
    }

    #[test]
    fn xyz_round_trip() {
        let c = PointCloud::new(vec![Vector3::new(0.1, -0.2, 0.3), Vector3::new(1e-9, 2.5, -3.0)], 0.0);
        let mut buf = Vec::new();
        c.write_xyz(&mut buf).unwrap();
        let back = PointCloud::read_xyz(&buf[..]).unwrap();
        assert_eq!(back.points, c.points);
        assert!(PointCloud::read_xyz(&b"1 2\n"[..]).is_err());
    }

    #[test]
    fn plane_fit_recovers_normal() {
        let pts: Vec<_> = (0..25)
            .map(|i| Vector3::new((i % 5) as f64, (i / 5) as f64, 2.0))
            .collect();
        let p = Plane::fit(&pts).unwrap();
        assert!((p.normal.z.abs() - 1.0).abs() < 1e-12);
        assert!(p.distance(&Vector3::new(3.0, -1.0, 2.0)) < 1e-12);
    }
}
