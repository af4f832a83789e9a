use std::fs;

use sgr_core::graph::{build_graph, SceneGraph};
use sgr_core::io::{load_point_cloud, load_scene_bundle, save_scene_bundle, IoError};
use sgr_core::projection::RelationConfig;
use sgr_core::synth::{gen_scene, CameraKind};

#[test]
fn bundle_save_load_is_lossless() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, kind) in [CameraKind::Pinhole, CameraKind::Cylindrical].into_iter().enumerate() {
        let (_, bundle) = gen_scene(11 + i as u64, 12, kind).unwrap();
        let first = tmp.path().join(format!("a{i}"));
        let second = tmp.path().join(format!("b{i}"));
        save_scene_bundle(&bundle, &first).unwrap();
        let loaded = load_scene_bundle(&first).unwrap();
        assert_eq!(loaded.detections(), bundle.detections());
        assert_eq!(loaded.cloud(), bundle.cloud());
        save_scene_bundle(&loaded, &second).unwrap();
        for name in ["manifest.json", "detections.json", "calibration.json", "cloud.xyz"] {
            assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
        }
        // Manifest path and directory path load the same scene.
        let via_manifest = load_scene_bundle(&first.join("manifest.json")).unwrap();
        assert_eq!(via_manifest.detections(), loaded.detections());

        let cfg = RelationConfig::default();
        assert_eq!(build_graph(&loaded, &cfg), build_graph(&bundle, &cfg));
    }
}

#[test]
fn graph_json_round_trip() {
    let (_, bundle) = gen_scene(4, 15, CameraKind::Cylindrical).unwrap();
    let graph = build_graph(&bundle, &RelationConfig::default());
    let text = graph.to_json();
    let back = SceneGraph::from_json(&text).unwrap();
    assert_eq!(back, graph);
    assert_eq!(back.to_json(), text);
}

#[test]
fn pcd_and_xyz_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let xyz = tmp.path().join("c.xyz");
    fs::write(&xyz, "# comment\n1 2 3\n\n-0.5 0.25 4\n").unwrap();
    let pcd = tmp.path().join("c.pcd");
    fs::write(
        &pcd,
        "VERSION .7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n1 2 3\n-0.5 0.25 4\n",
    )
    .unwrap();
    let a = load_point_cloud(&xyz).unwrap();
    let b = load_point_cloud(&pcd).unwrap();
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
}

#[test]
fn bad_inputs_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let xyz = tmp.path().join("c.xyz");
    fs::write(&xyz, "1 2 3\n1 2\n").unwrap();
    match load_point_cloud(&xyz) {
        Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let ply = tmp.path().join("c.ply");
    fs::write(&ply, "").unwrap();
    assert!(matches!(load_point_cloud(&ply), Err(IoError::UnsupportedFormat(_))));

    let (_, bundle) = gen_scene(1, 3, CameraKind::Pinhole).unwrap();
    let dir = tmp.path().join("s");
    save_scene_bundle(&bundle, &dir).unwrap();
    fs::remove_file(dir.join("calibration.json")).unwrap();
    let err = load_scene_bundle(&dir).unwrap_err();
    assert_eq!(err.to_string(), "MissingInput: calibration");
}
