//! The rest-pose hand mesh is frozen as a golden OBJ; any drift in the
//! kinematics or link meshes shows up here first.

use graspsynth::geom::TriMesh;
use graspsynth::hand::{forward_kinematics, HandModel, HandPose};

#[test]
fn rest_mesh_matches_golden_file() {
    let model = HandModel::builtin();
    let fk = forward_kinematics(&model, &HandPose::rest());
    let mesh = fk.mesh.to_tri_mesh(&model);

    let golden = TriMesh::load_obj(std::path::Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/golden/rest_hand.obj"
    )))
    .expect("golden mesh readable");

    assert_eq!(mesh.vertices.len(), golden.vertices.len());
    assert_eq!(mesh.faces, golden.faces);
    for (a, b) in mesh.vertices.iter().zip(&golden.vertices) {
        assert!((a - b).norm() < 1e-12, "{a:?} vs {b:?}");
    }
    for (a, b) in mesh.normals.iter().zip(&golden.normals) {
        assert!((a - b).norm() < 1e-9, "{a:?} vs {b:?}");
    }
}

#[test]
fn rest_mesh_exports_as_obj() {
    let model = HandModel::builtin();
    let fk = forward_kinematics(&model, &HandPose::rest());
    let mesh = fk.mesh.to_tri_mesh(&model);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hand.obj");
    mesh.save_obj(&path).unwrap();
    let back = TriMesh::load_obj(&path).unwrap();
    assert_eq!(back.vertices.len(), 416);
}
