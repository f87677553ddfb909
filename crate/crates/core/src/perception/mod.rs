//! Synthetic visual perception: the tracking camera's skeleton stream with
//! active-arm filtering, and the wrist camera's point-cloud object detection.

mod camera;
mod cloud;
mod cluster;
mod scene;
mod skeleton;

pub use camera::{
    base_to_camera, camera_to_base, camera_to_pixel, depth_to_camera, object_pose_to_base, CameraExtrinsics,
    CameraIntrinsics,
};
pub use cloud::{
    downsample_and_filter, knn_mean_distances, knn_mean_distances_brute, ransac_plane_removal, statistical_outlier_removal, voxel_downsample,
    Plane, PlaneRemoval, PointCloud, RansacConfig,
};
pub use cluster::{classify_shape, cluster_centroid_pose, euclidean_cluster, CentroidPose, ShapeLabel};
pub use scene::{
    detect_objects, render_scene, select_nearest, DetectionConfig, ObjectDetection, ObjectShape, ObjectSpec,
    SceneConfig,
};
pub use skeleton::{
    body_pose, synth_skeleton, ActiveArmFilter, ArmEstimate, BodyConfig, Gestures, LeaderKeyframe, LeaderSample,
    LeaderScript, Occluder, Side, SkeletonFrame, SkeletonJoint, JOINT_NAMES,
};

/// Tracking camera rate, Hz.
pub const TRACKING_HZ: f64 = 5.0;
/// Detection camera rate, Hz.
pub const DETECTION_HZ: f64 = 25.0;
