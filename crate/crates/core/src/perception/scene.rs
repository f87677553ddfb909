//! Synthetic tabletop scenes rendered into depth point clouds, and the
//! detection pipeline that turns a cloud into object poses.

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::{depth_to_camera, CameraIntrinsics};
use super::cloud::{downsample_and_filter, ransac_plane_removal, PointCloud, RansacConfig};
use super::cluster::{classify_shape, cluster_centroid_pose, euclidean_cluster, ShapeLabel};
use crate::error::{Error, Result};
use crate::kinematics::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectShape {
    /// `dims` are the box edge lengths along local x, y, z.
    Box,
    /// Axis along local z; `dims = [diameter, diameter, length]`.
    Cylinder,
}

/// Object placed in the scene, pose of its center in the base frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: ObjectShape,
    pub dims: [f64; 3],
    pub position: [f64; 3],
    /// `[w, x, y, z]`
    #[serde(default = "identity_wxyz")]
    pub orientation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl ObjectSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidInput("object dims must be positive".into()));
        }
        if self.shape == ObjectShape::Cylinder && (self.dims[0] - self.dims[1]).abs() > 1e-12 {
            return Err(Error::InvalidInput("cylinder dims must be [d, d, length]".into()));
        }
        Pose::from_parts(self.position, self.orientation)?;
        Ok(())
    }

    pub fn pose(&self) -> Isometry3<f64> {
        let q = UnitQuaternion::new_normalize(Quaternion::new(
            self.orientation[0],
            self.orientation[1],
            self.orientation[2],
            self.orientation[3],
        ));
        Isometry3::from_parts(Translation3::from(Vector3::from(self.position)), q)
    }

    /// Distance along the ray to the first surface hit, if any.
    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let inv = self.pose().inverse();
        let o = inv.transform_point(&(*origin).into()).coords;
        let d = inv.transform_vector(dir);
        let h = Vector3::from(self.dims) / 2.0;
        match self.shape {
            ObjectShape::Box => slab(&o, &d, &(-h), &h),
            ObjectShape::Cylinder => cylinder(&o, &d, h.x, h.z),
        }
    }

    /// Width across the object along `axis` (base frame, unit).
    pub fn width_along(&self, axis: &Vector3<f64>) -> f64 {
        let local = self.pose().rotation.inverse() * axis;
        match self.shape {
            ObjectShape::Box => (0..3).map(|k| local[k].abs() * self.dims[k]).sum(),
            ObjectShape::Cylinder => {
                let radial = (local.x * local.x + local.y * local.y).sqrt();
                radial * self.dims[0] + local.z.abs() * self.dims[2]
            }
        }
    }
}

fn slab(o: &Vector3<f64>, d: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - o[k]) / d[k];
        let b = (hi[k] - o[k]) / d[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

fn cylinder(o: &Vector3<f64>, d: &Vector3<f64>, r: f64, half: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut keep = |t: f64| {
        if t > 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = 2.0 * (o.x * d.x + o.y * d.y);
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            for t in [(-b - disc.sqrt()) / (2.0 * a), (-b + disc.sqrt()) / (2.0 * a)] {
                if (o.z + t * d.z).abs() <= half {
                    keep(t);
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        for z in [-half, half] {
            let t = (z - o.z) / d.z;
            let p = o + d * t;
            if p.x * p.x + p.y * p.y <= r * r {
                keep(t);
            }
        }
    }
    best
}

/// Depth-camera rendering of a tabletop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub table_z: f64,
    /// Pixel stride of the ray grid.
    pub stride: usize,
    /// Standard deviation of depth noise, meters.
    pub depth_noise: f64,
    /// Spurious points scattered in front of the camera.
    pub outliers: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            table_z: 0.0,
            stride: 10,
            depth_noise: 0.001,
            outliers: 10,
        }
    }
}

/// Casts one ray per `stride` pixels from a camera at `camera_to_base` and
/// returns the hits in the camera frame.
pub fn render_scene<R: Rng>(
    objects: &[ObjectSpec],
    scene: &SceneConfig,
    intr: &CameraIntrinsics,
    camera_to_base: &Isometry3<f64>,
    timestamp: f64,
    rng: &mut R,
) -> Result<PointCloud> {
    if scene.stride == 0 {
        return Err(Error::InvalidInput("scene stride must be >= 1".into()));
    }
    let noise = Normal::new(0.0, scene.depth_noise.max(0.0))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let origin = camera_to_base.translation.vector;
    let mut points = Vec::new();
    let (w, h) = (intr.width as usize, intr.height as usize);
    for iy in (0..h).step_by(scene.stride) {
        for ix in (0..w).step_by(scene.stride) {
            let (ix, iy) = (ix as f64, iy as f64);
            let ray_cam = depth_to_camera(ix, iy, 1.0, intr)?;
            let dir = camera_to_base.rotation * ray_cam;
            let mut hit: Option<f64> = None;
            if dir.z < -1e-12 {
                let s = (scene.table_z - origin.z) / dir.z;
                if s > 0.0 {
                    hit = Some(s);
                }
            }
            // `dir` has unit camera depth, so the ray parameter is the depth
            let unit = dir.normalize();
            let scale = dir.norm();
            for o in objects {
                if let Some(s) = o.ray_hit(&origin, &unit) {
                    let depth = s / scale;
                    if hit.is_none_or(|b| depth < b) {
                        hit = Some(depth);
                    }
                }
            }
            if let Some(depth) = hit {
                let pd = depth + noise.sample(rng);
                if pd > 0.0 {
                    points.push(depth_to_camera(ix, iy, pd, intr)?);
                }
            }
        }
    }
    for _ in 0..scene.outliers {
        let ix = rng.random_range(0.0..intr.width);
        let iy = rng.random_range(0.0..intr.height);
        let pd = rng.random_range(0.05..0.3);
        points.push(depth_to_camera(ix, iy, pd, intr)?);
    }
    Ok(PointCloud::new(points, timestamp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub leaf: f64,
    pub outlier_k: usize,
    pub outlier_std: f64,
    pub ransac_distance: f64,
    pub ransac_iterations: usize,
    pub ransac_min_fraction: f64,
    /// Clustering distance, meters.
    pub xi: f64,
    pub min_points: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            leaf: 0.005,
            outlier_k: 8,
            outlier_std: 2.0,
            ransac_distance: 0.005,
            ransac_iterations: 200,
            ransac_min_fraction: 0.2,
            xi: 0.02,
            min_points: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectDetection {
    pub cluster_id: usize,
    pub point_count: usize,
    pub pose_camera: Pose,
    pub pose_base: Pose,
    pub label: ShapeLabel,
    pub dims: [f64; 3],
    pub degenerate: bool,
}

/// Filter, remove the support plane, cluster and localize.
pub fn detect_objects(
    cloud: &PointCloud,
    cfg: &DetectionConfig,
    seed: u64,
    camera_to_base: &Isometry3<f64>,
) -> Result<Vec<ObjectDetection>> {
    let filtered = downsample_and_filter(cloud, cfg.leaf, cfg.outlier_k, cfg.outlier_std)?;
    if filtered.len() < 3 {
        return Ok(Vec::new());
    }
    let ransac = RansacConfig {
        distance: cfg.ransac_distance,
        iterations: cfg.ransac_iterations,
        seed,
        min_fraction: cfg.ransac_min_fraction,
    };
    let removed = ransac_plane_removal(&filtered, &ransac)?;
    let clusters = euclidean_cluster(&removed.cloud, cfg.xi, cfg.min_points)?;
    let mut out = Vec::with_capacity(clusters.len());
    for (id, members) in clusters.iter().enumerate() {
        let pts: Vec<Vector3<f64>> = members.iter().map(|i| removed.cloud.points[*i]).collect();
        let c = cluster_centroid_pose(&pts)?;
        let dims = c.dims.map(|d| d.max(1e-6));
        out.push(ObjectDetection {
            cluster_id: id,
            point_count: pts.len(),
            pose_camera: c.pose,
            pose_base: c.pose.transformed(camera_to_base),
            label: classify_shape(dims)?,
            dims: c.dims,
            degenerate: c.degenerate,
        });
    }
    Ok(out)
}

/// Detection whose centroid is closest to the vertical line through `wrist`.
pub fn select_nearest<'a>(detections: &'a [ObjectDetection], wrist: &Vector3<f64>) -> Option<&'a ObjectDetection> {
    let horizontal = |d: &ObjectDetection| {
        let p = d.pose_base.position;
        ((p.x - wrist.x).powi(2) + (p.y - wrist.y).powi(2)).sqrt()
    };
    detections
        .iter()
        .min_by(|a, b| horizontal(a).total_cmp(&horizontal(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_hit_from_above() {
        let o = ObjectSpec {
            shape: ObjectShape::Box,
            dims: [0.1, 0.1, 0.04],
            position: [0.0, 0.0, 0.02],
            orientation: identity_wxyz(),
        };
        let t = o.ray_hit(&Vector3::new(0.0, 0.0, 1.0), &-Vector3::z()).unwrap();
        assert!((t - 0.96).abs() < 1e-12);
        assert!(o.ray_hit(&Vector3::new(0.2, 0.0, 1.0), &-Vector3::z()).is_none());
    }

    #[test]
    fn lying_cylinder_hit() {
        // axis along base x
        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
        let o = ObjectSpec {
            shape: ObjectShape::Cylinder,
            dims: [0.02, 0.02, 0.12],
            position: [0.0, 0.0, 0.01],
            orientation: [q.w, q.i, q.j, q.k],
        };
        let t = o.ray_hit(&Vector3::new(0.03, 0.0, 1.0), &-Vector3::z()).unwrap();
        assert!((t - 0.98).abs() < 1e-9);
        assert!((o.width_along(&Vector3::y()) - 0.02).abs() < 1e-12);
        assert!((o.width_along(&Vector3::x()) - 0.12).abs() < 1e-12);
    }
}
