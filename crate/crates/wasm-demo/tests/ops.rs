use isot_core::kinematics::KinematicChain;
use isot_core::perception::{ObjectShape, ObjectSpec};
use isot_wasm::{cluster, cluster_scene, friction, friction_check, reach_target, REACH_TOL};

#[test]
fn reach_converges_to_reachable_target() {
    let r = reach_target(0.45, 0.15, 0.2, 0.3).unwrap();
    assert!(r.converged, "error {} after {} steps", r.error, r.steps);
    let chain = KinematicChain::default();
    let q = nalgebra::DVector::from_vec(r.q.clone());
    let ee = chain.forward_kinematics(&q).unwrap().position;
    assert!((ee - nalgebra::Vector3::new(0.45, 0.15, 0.2)).norm() < 10.0 * REACH_TOL);
    assert_eq!(r.joints.len(), chain.dof() + 1);
    assert!(chain.within_limits(&q));
}

#[test]
fn reach_reports_unreachable_target() {
    let r = reach_target(1.5, 0.0, 0.3, 0.0).unwrap();
    assert!(!r.converged);
    assert!(r.error.is_finite());
}

#[test]
fn cluster_finds_each_object() {
    let objects = vec![
        ObjectSpec {
            shape: ObjectShape::Box,
            dims: [0.06, 0.06, 0.06],
            position: [0.4, -0.1, 0.03],
            orientation: [1.0, 0.0, 0.0, 0.0],
        },
        ObjectSpec {
            shape: ObjectShape::Cylinder,
            dims: [0.03, 0.03, 0.05],
            position: [0.5, 0.1, 0.025],
            orientation: [1.0, 0.0, 0.0, 0.0],
        },
    ];
    let r = cluster_scene(&objects, 3).unwrap();
    assert_eq!(r.detections.len(), 2);
    for o in &objects {
        let hit = r.detections.iter().any(|d| {
            let dx = d.position[0] - o.position[0];
            let dy = d.position[1] - o.position[1];
            (dx * dx + dy * dy).sqrt() < 0.02
        });
        assert!(hit, "no detection near {:?}", o.position);
    }
    assert!(!r.cloud.is_empty());
}

#[test]
fn friction_both_conventions() {
    let standard = friction_check([0.3, 0.4, 1.0], 0.75, true).unwrap();
    assert!((standard.ratio - 0.5).abs() < 1e-12);
    assert!(!standard.slip);
    let written = friction_check([0.3, 0.4, 1.0], 0.75, false).unwrap();
    assert!((written.ratio - 2.0).abs() < 1e-12);
    assert!(written.slip);
    assert!(friction_check([0.0; 3], 0.75, true).is_err());
}

#[test]
fn bindings_return_json() {
    let v: serde_json::Value = serde_json::from_str(&friction(0.1, 0.0, 1.0, 0.75, true).unwrap()).unwrap();
    assert_eq!(v["slip"], false);
    let v: serde_json::Value = serde_json::from_str(&cluster("[]", 1).unwrap()).unwrap();
    assert_eq!(v["detections"].as_array().unwrap().len(), 0);
}
