mod common;

use std::fs;

use splatedit_core::embedding::{normalized, EmbeddingTable};
use splatedit_workbench::formats;
use splatedit_workbench::scenario::{load_scenario, LoadError, CAMERAS_FILE, EMBEDDINGS_FILE};

#[test]
fn written_fixture_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::write_small(dir.path(), 4);
    let s = load_scenario(dir.path()).unwrap();
    assert_eq!(s.views.len(), 20);
    assert_eq!(s.layers, vec![0, 1]);
    assert_eq!(s.scene.gaussians(), fx.scenario.scene.gaussians());
    assert_eq!(s.embeddings, fx.scenario.embeddings);
    for (a, b) in s.views.iter().zip(&fx.scenario.views) {
        assert_eq!(a.camera.id, b.camera.id);
        assert_eq!(a.src, b.src);
        assert_eq!(a.edit, b.edit);
        // Attention is stored below render resolution and resampled on load.
        assert_eq!(a.attention[&0].width, a.camera.width);
        assert_eq!(a.attention, b.attention);
    }
}

#[test]
fn synthetic_fallback_matches_the_stored_table() {
    let dir = tempfile::tempdir().unwrap();
    common::write_small(dir.path(), 5);
    let with_table = load_scenario(dir.path()).unwrap();
    fs::remove_file(dir.path().join(EMBEDDINGS_FILE)).unwrap();
    let synthetic = load_scenario(dir.path()).unwrap();
    assert_eq!(with_table.embeddings, synthetic.embeddings);
}

#[test]
fn missing_cameras_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    common::write_small(dir.path(), 6);
    fs::remove_file(dir.path().join(CAMERAS_FILE)).unwrap();
    let err = load_scenario(dir.path()).unwrap_err();
    assert!(matches!(err, LoadError::Missing(_)), "{err:?}");
    assert!(err.to_string().contains(CAMERAS_FILE), "{err}");
}

#[test]
fn embedding_dimension_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    common::write_small(dir.path(), 7);
    let mut table = EmbeddingTable::new(8);
    table.insert("prompt/src", normalized(&[1.0; 8])).unwrap();
    fs::write(dir.path().join(EMBEDDINGS_FILE), formats::encode_emb(&table).unwrap()).unwrap();
    assert!(load_scenario(dir.path()).is_err());
}

#[test]
fn corrupted_scene_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    common::write_small(dir.path(), 8);
    let path = dir.path().join("scene.gsb");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, bytes).unwrap();
    let err = load_scenario(dir.path()).unwrap_err().to_string();
    assert!(err.contains("scene.gsb"), "{err}");
}

#[test]
fn malformed_cameras_report_the_field() {
    let dir = tempfile::tempdir().unwrap();
    common::write_small(dir.path(), 9);
    let path = dir.path().join(CAMERAS_FILE);
    let text = fs::read_to_string(&path).unwrap().replacen("\"fx\":", "\"fx\": \"wide\", \"fx_old\":", 1);
    fs::write(&path, text).unwrap();
    let err = load_scenario(dir.path()).unwrap_err();
    assert!(matches!(err, LoadError::Schema { .. }), "{err:?}");
    assert!(err.to_string().contains("fx"), "{err}");
}
