//! Euclidean cluster extraction, centroid poses and shape labels.

use std::collections::HashMap;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::kinematics::Pose;

/// Groups points by the transitive closure of `|p - q| <= xi` and discards
/// groups smaller than `min_points`. Each cluster lists point indices in
/// ascending order; clusters are ordered by their first index.
pub fn euclidean_cluster(cloud: &PointCloud, xi: f64, min_points: usize) -> Result<Vec<Vec<usize>>> {
    if !(xi > 0.0) || min_points == 0 {
        return Err(Error::InvalidInput("clustering needs xi > 0 and min_points >= 1".into()));
    }
    let pts = &cloud.points;
    let cell = |p: &Vector3<f64>| {
        (
            (p.x / xi).floor() as i64,
            (p.y / xi).floor() as i64,
            (p.z / xi).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }

    let mut visited = vec![false; pts.len()];
    let mut clusters = Vec::new();
    let mut queue = Vec::new();
    for seed in 0..pts.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        queue.clear();
        queue.push(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop() {
            members.push(i);
            let (cx, cy, cz) = cell(&pts[i]);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in bucket {
                            if !visited[j] && (pts[i] - pts[j]).norm() <= xi {
                                visited[j] = true;
                                queue.push(j);
                            }
                        }
                    }
                }
            }
        }
        if members.len() >= min_points {
            members.sort_unstable();
            clusters.push(members);
        }
    }
    Ok(clusters)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidPose {
    pub pose: Pose,
    /// Extents along the principal axes, longest first.
    pub dims: [f64; 3],
    /// Covariance too flat to define an orientation.
    pub degenerate: bool,
}

/// Mean position and principal-axis orientation of a cluster. Axes are
/// ordered by decreasing variance, each of the first two is signed so its
/// largest component is positive, and the third completes a right-handed
/// frame.
pub fn cluster_centroid_pose(points: &[Vector3<f64>]) -> Result<CentroidPose> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = points.len() as f64;
    let first = points[0];
    let centroid = first + points.iter().map(|p| p - first).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = eig.eigenvalues[order[1]];
    let degenerate = !(l1 > 1e-14) || !(l2 > 1e-9 * l1);
    if degenerate {
        let extent = |axis: Vector3<f64>| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let s = axis.dot(p);
                (lo.min(s), hi.max(s))
            });
            hi - lo
        };
        let mut dims = [extent(Vector3::x()), extent(Vector3::y()), extent(Vector3::z())];
        dims.sort_by(|a, b| b.total_cmp(a));
        return Ok(CentroidPose {
            pose: Pose::from_position(centroid),
            dims,
            degenerate: true,
        });
    }
    let canonical = |v: Vector3<f64>| {
        let big = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if big < 0.0 {
            -v
        } else {
            v
        }
    };
    let e1 = canonical(eig.eigenvectors.column(order[0]).into_owned().normalize());
    let e2 = canonical(eig.eigenvectors.column(order[1]).into_owned().normalize());
    let e2 = (e2 - e1 * e1.dot(&e2)).normalize();
    let e3 = e1.cross(&e2);
    let axes = [e1, e2, e3];
    let mut dims = [0.0; 3];
    for (k, a) in axes.iter().enumerate() {
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let s = a.dot(&(p - centroid));
            (lo.min(s), hi.max(s))
        });
        dims[k] = hi - lo;
    }
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&axes));
    Ok(CentroidPose {
        pose: Pose::new(centroid, UnitQuaternion::from_rotation_matrix(&rot)),
        dims,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeLabel {
    Rod,
    Cap,
    Block,
}

impl ShapeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeLabel::Rod => "rod",
            ShapeLabel::Cap => "cap",
            ShapeLabel::Block => "block",
        }
    }
}

/// Aspect-ratio rule on the sorted extents `a >= b >= c`: `a/b >= 3` is a
/// rod, otherwise `c/b < 0.5` is a cap, otherwise a block.
pub fn classify_shape(dims: [f64; 3]) -> Result<ShapeLabel> {
    if dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidInput("shape dimensions must be positive".into()));
    }
    let mut d = dims;
    d.sort_by(|a, b| b.total_cmp(a));
    Ok(if d[0] / d[1] >= 3.0 {
        ShapeLabel::Rod
    } else if d[2] / d[1] < 0.5 {
        ShapeLabel::Cap
    } else {
        ShapeLabel::Block
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_far_groups() {
        let mut pts = Vec::new();
        for i in 0..12 {
            pts.push(Vector3::new(0.001 * i as f64, 0.0, 0.0));
            pts.push(Vector3::new(0.2 + 0.001 * i as f64, 0.0, 0.0));
        }
        let c = euclidean_cluster(&PointCloud::new(pts, 0.0), 0.02, 10).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn small_group_dropped() {
        let pts: Vec<_> = (0..9).map(|i| Vector3::new(0.001 * i as f64, 0.0, 0.0)).collect();
        let c = euclidean_cluster(&PointCloud::new(pts, 0.0), 0.02, 10).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn single_point_is_degenerate() {
        let p = Vector3::new(0.1, 0.2, 0.3);
        let c = cluster_centroid_pose(&[p]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.pose.position, p);
        assert_eq!(c.pose.scalar(), 1.0);
    }

    #[test]
    fn shape_rules() {
        assert_eq!(classify_shape([0.1, 0.01, 0.01]).unwrap(), ShapeLabel::Rod);
        assert_eq!(classify_shape([0.05, 0.05, 0.048]).unwrap(), ShapeLabel::Block);
        assert_eq!(classify_shape([0.04, 0.04, 0.01]).unwrap(), ShapeLabel::Cap);
        assert!(classify_shape([0.0, 1.0, 1.0]).is_err());
    }
}
