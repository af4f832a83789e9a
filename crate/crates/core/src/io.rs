//! Fixture loaders and writers: detections JSON, calibration JSON, XYZ or
//! ASCII PCD point clouds, and the manifest tying them into a bundle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{normalize_degrees, AttributeMap, Box2D, Detection, ModelError, NodeId, PointCloud, SceneBundle};
use crate::projection::{CameraError, CameraModel, Intrinsics};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("IoError: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("ParseError: {path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("UnsupportedFormat: {0}")]
    UnsupportedFormat(String),
    #[error("SchemaError: {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("MissingInput: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_owned(), source })
}

fn schema(path: &Path, message: impl ToString) -> IoError {
    IoError::Schema { path: path.to_owned(), message: message.to_string() }
}

// ---------------------------------------------------------------------------
// Point clouds

/// Loads a `.xyz` or ASCII `.pcd` file.
pub fn load_point_cloud(path: &Path) -> Result<PointCloud, IoError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("xyz") | Some("txt") => {
            let text = read(path)?;
            parse_xyz(&text).map_err(|(line, message)| IoError::Parse { path: path.to_owned(), line, message })
        }
        Some("pcd") => {
            let bytes = fs::read(path).map_err(|source| IoError::Io { path: path.to_owned(), source })?;
            parse_pcd(&bytes, path)
        }
        _ => Err(IoError::UnsupportedFormat(format!("{}: expected a .xyz or .pcd file", path.display()))),
    }
}

fn parse_row(line: &str, columns: &[usize], arity: usize) -> Result<Point3<f64>, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != arity {
        return Err(format!("expected {arity} values, found {}", fields.len()));
    }
    let mut xyz = [0.0; 3];
    for (slot, &c) in xyz.iter_mut().zip(columns) {
        let v: f64 = fields[c].parse().map_err(|_| format!("not a number: {:?}", fields[c]))?;
        if !v.is_finite() {
            return Err(format!("non-finite value {:?}", fields[c]));
        }
        *slot = v;
    }
    Ok(Point3::new(xyz[0], xyz[1], xyz[2]))
}

/// Whitespace-separated `x y z` rows; blank lines and `#` comments skipped.
/// Errors carry the 1-based line number.
pub fn parse_xyz(text: &str) -> Result<PointCloud, (usize, String)> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        points.push(parse_row(line, &[0, 1, 2], 3).map_err(|m| (i + 1, m))?);
    }
    Ok(PointCloud::new(points))
}

fn parse_pcd(bytes: &[u8], path: &Path) -> Result<PointCloud, IoError> {
    let perr = |line: usize, message: String| IoError::Parse { path: path.to_owned(), line, message };
    let mut fields: Option<Vec<String>> = None;
    let mut offset = 0;
    let mut line_no = 0;
    // Header lines are ASCII even in binary files; stop at DATA.
    loop {
        let Some(rel_end) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            return Err(perr(line_no + 1, "header ends without a DATA line".into()));
        };
        line_no += 1;
        let line = String::from_utf8_lossy(&bytes[offset..offset + rel_end]).trim().to_owned();
        offset += rel_end + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("").to_ascii_uppercase();
        match key.as_str() {
            "FIELDS" => fields = Some(parts.map(str::to_ascii_lowercase).collect()),
            "DATA" => {
                let mode = parts.next().unwrap_or("").to_ascii_lowercase();
                if mode != "ascii" {
                    return Err(IoError::UnsupportedFormat(format!(
                        "{}: PCD DATA {mode} is not supported (ASCII only)",
                        path.display()
                    )));
                }
                break;
            }
            _ => {}
        }
    }
    let fields = fields.ok_or_else(|| perr(line_no, "missing FIELDS line".into()))?;
    let col = |name: &str| fields.iter().position(|f| f == name);
    let (Some(x), Some(y), Some(z)) = (col("x"), col("y"), col("z")) else {
        return Err(perr(line_no, "FIELDS must include x y z".into()));
    };
    let body = std::str::from_utf8(&bytes[offset..]).map_err(|_| perr(line_no + 1, "data is not valid UTF-8".into()))?;
    let mut points = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        points.push(parse_row(line, &[x, y, z], fields.len()).map_err(|m| perr(line_no + i + 1, m))?);
    }
    Ok(PointCloud::new(points))
}

/// Canonical `.xyz` text; shortest round-trip float formatting.
pub fn cloud_to_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 24);
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

// ---------------------------------------------------------------------------
// Calibration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CameraKind {
    Pinhole,
    Cylindrical,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationDoc {
    kind: CameraKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seam_azimuth_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fv: Option<f64>,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

/// Parses a calibration document.
pub fn parse_camera(text: &str, path: &Path) -> Result<CameraModel, IoError> {
    let doc: CalibrationDoc = serde_json::from_str(text).map_err(|e| schema(path, e))?;
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| schema(path, format!("missing field `{name}`")));
    let intrinsics = match doc.kind {
        CameraKind::Pinhole => Intrinsics::Pinhole {
            fx: need(doc.fx, "fx")?,
            fy: need(doc.fy, "fy")?,
            cx: need(doc.cx, "cx")?,
            cy: need(doc.cy, "cy")?,
        },
        CameraKind::Cylindrical => Intrinsics::Cylindrical {
            seam_azimuth_deg: need(doc.seam_azimuth_deg, "seam_azimuth_deg")?,
            v_center: need(doc.v_center, "v_center")?,
            fv: need(doc.fv, "fv")?,
        },
    };
    let rotation = Matrix3::from_row_slice(&doc.r);
    let translation = Vector3::from_column_slice(&doc.t);
    Ok(CameraModel::new(intrinsics, rotation, translation)?)
}

pub fn load_camera(path: &Path) -> Result<CameraModel, IoError> {
    parse_camera(&read(path)?, path)
}

pub fn camera_to_json(camera: &CameraModel) -> String {
    let r = camera.rotation();
    let t = camera.translation();
    let mut doc = CalibrationDoc {
        kind: CameraKind::Pinhole,
        fx: None,
        fy: None,
        cx: None,
        cy: None,
        seam_azimuth_deg: None,
        v_center: None,
        fv: None,
        r: std::array::from_fn(|i| r[(i / 3, i % 3)]),
        t: [t.x, t.y, t.z],
    };
    match *camera.intrinsics() {
        Intrinsics::Pinhole { fx, fy, cx, cy } => {
            (doc.fx, doc.fy, doc.cx, doc.cy) = (Some(fx), Some(fy), Some(cx), Some(cy));
        }
        Intrinsics::Cylindrical { seam_azimuth_deg, v_center, fv } => {
            doc.kind = CameraKind::Cylindrical;
            (doc.seam_azimuth_deg, doc.v_center, doc.fv) = (Some(seam_azimuth_deg), Some(v_center), Some(fv));
        }
    }
    serde_json::to_string_pretty(&doc).expect("calibration serializes") + "\n"
}

// ---------------------------------------------------------------------------
// Detections

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionEntry {
    id: NodeId,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    wrap: bool,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heading_deg: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionsDoc {
    image_width: u32,
    image_height: u32,
    detections: Vec<DetectionEntry>,
}

/// Image size and validated detections from a detections document.
pub fn parse_detections(text: &str, path: &Path) -> Result<(u32, u32, Vec<Detection>), IoError> {
    let doc: DetectionsDoc = serde_json::from_str(text).map_err(|e| schema(path, e))?;
    if doc.image_width == 0 || doc.image_height == 0 {
        return Err(ModelError::InvalidImageSize { width: doc.image_width, height: doc.image_height }.into());
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(doc.detections.len());
    for e in doc.detections {
        if !seen.insert(e.id) {
            return Err(ModelError::DuplicateId(e.id).into());
        }
        let [x, y, w, h] = e.bbox;
        let bbox = Box2D { x, y, w, h, wrap: e.wrap };
        bbox.validate(e.id, f64::from(doc.image_width), f64::from(doc.image_height))?;
        let attributes = AttributeMap::canonicalize(e.attributes.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        let heading_deg = match e.heading_deg {
            Some(h) if !h.is_finite() => return Err(schema(path, format!("detection {}: non-finite heading", e.id))),
            h => h.map(normalize_degrees),
        };
        out.push(Detection { id: e.id, bbox, attributes, heading_deg });
    }
    Ok((doc.image_width, doc.image_height, out))
}

pub fn load_detections(path: &Path) -> Result<(u32, u32, Vec<Detection>), IoError> {
    parse_detections(&read(path)?, path)
}

pub fn detections_to_json(image_width: u32, image_height: u32, detections: &[Detection]) -> String {
    let doc = DetectionsDoc {
        image_width,
        image_height,
        detections: detections
            .iter()
            .map(|d| DetectionEntry {
                id: d.id,
                bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                wrap: d.bbox.wrap,
                attributes: d.attributes.iter().map(|(k, v)| (k.to_owned(), v.to_owned())).collect(),
                heading_deg: d.heading_deg,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("detections serialize") + "\n"
}

// ---------------------------------------------------------------------------
// Manifest and bundle

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    detections: Option<String>,
    calibration: Option<String>,
    cloud: Option<String>,
}

/// Loads a bundle from a manifest file, or from a directory containing
/// `manifest.json`. Manifest paths are relative to the manifest.
pub fn load_scene_bundle(dir_or_manifest: &Path) -> Result<SceneBundle, IoError> {
    let manifest_path = if dir_or_manifest.is_dir() {
        dir_or_manifest.join("manifest.json")
    } else {
        dir_or_manifest.to_owned()
    };
    if !manifest_path.is_file() {
        return Err(IoError::MissingInput("manifest".into()));
    }
    let manifest: Manifest = serde_json::from_str(&read(&manifest_path)?).map_err(|e| schema(&manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |entry: &Option<String>, name: &str| -> Result<PathBuf, IoError> {
        let rel = entry.as_deref().filter(|s| !s.is_empty()).ok_or_else(|| IoError::MissingInput(name.into()))?;
        let p = base.join(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(IoError::MissingInput(name.into()))
        }
    };
    let det_path = resolve(&manifest.detections, "detections")?;
    let cal_path = resolve(&manifest.calibration, "calibration")?;
    let cloud_path = resolve(&manifest.cloud, "cloud")?;

    let (width, height, detections) = load_detections(&det_path)?;
    let camera = load_camera(&cal_path)?;
    let cloud = load_point_cloud(&cloud_path)?;
    Ok(SceneBundle::new(width, height, detections, cloud, camera)?)
}

/// File names written by [`save_scene_bundle`].
pub const MANIFEST: &str = "manifest.json";
pub const DETECTIONS: &str = "detections.json";
pub const CALIBRATION: &str = "calibration.json";
pub const CLOUD: &str = "cloud.xyz";

/// Writes the canonical fixture files and a manifest into `dir`.
pub fn save_scene_bundle(bundle: &SceneBundle, dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_owned(), source })?;
    let manifest = Manifest {
        detections: Some(DETECTIONS.into()),
        calibration: Some(CALIBRATION.into()),
        cloud: Some(CLOUD.into()),
    };
    write(&dir.join(MANIFEST), &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;
    write(
        &dir.join(DETECTIONS),
        &detections_to_json(bundle.image_width(), bundle.image_height(), bundle.detections()),
    )?;
    write(&dir.join(CALIBRATION), &camera_to_json(bundle.camera()))?;
    write(&dir.join(CLOUD), &cloud_to_xyz(bundle.cloud()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn xyz_examples() {
        let c = parse_xyz("1 2 3\n4 5 6\n").unwrap();
        assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
        assert_eq!(parse_xyz("# comment\n0 0 0\n").unwrap().len(), 1);
        assert_eq!(parse_xyz("1 2\n").unwrap_err().0, 1);
        assert_eq!(parse_xyz("0 0 0\n1 nan 2\n").unwrap_err().0, 2);
        assert_eq!(parse_xyz("0 0 0\n1 inf 2\n").unwrap_err().0, 2);
    }

    #[test]
    fn pcd_ascii_and_binary() {
        let text = "# .PCD v0.7\nVERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n\
                    WIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n1 2 3 0.5\n4 5 6 0.1\n";
        let c = parse_pcd(text.as_bytes(), p()).unwrap();
        assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
        let bad = text.replace("4 5 6 0.1", "4 5 6");
        assert!(matches!(parse_pcd(bad.as_bytes(), p()), Err(IoError::Parse { line: 12, .. })));
        let mut bin = b"FIELDS x y z\nDATA binary\n".to_vec();
        bin.extend_from_slice(&[0u8, 159, 146, 150]);
        assert!(matches!(parse_pcd(&bin, p()), Err(IoError::UnsupportedFormat(_))));
    }

    #[test]
    fn camera_examples() {
        let id = r#"{"kind":"pinhole","fx":1,"fy":1,"cx":0,"cy":0,"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0]}"#;
        assert_eq!(parse_camera(id, p()).unwrap(), CameraModel::identity());
        let doubled = r#"{"kind":"pinhole","fx":1,"fy":1,"cx":0,"cy":0,"R":[2,0,0,0,2,0,0,0,2],"t":[0,0,0]}"#;
        assert!(matches!(parse_camera(doubled, p()), Err(IoError::Camera(CameraError::BadRotation(_)))));
        let cyl = r#"{"kind":"cylindrical","seam_azimuth_deg":180,"v_center":240,"fv":200,"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0]}"#;
        let cam = parse_camera(cyl, p()).unwrap();
        assert_eq!(*cam.intrinsics(), Intrinsics::Cylindrical { seam_azimuth_deg: 180.0, v_center: 240.0, fv: 200.0 });
        assert_eq!(parse_camera(&camera_to_json(&cam), p()).unwrap(), cam);
        let missing = r#"{"kind":"pinhole","fx":1,"fy":1,"cx":0,"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0]}"#;
        assert!(matches!(parse_camera(missing, p()), Err(IoError::Schema { .. })));
    }

    #[test]
    fn detection_examples() {
        let one = r#"{"image_width":640,"image_height":480,"detections":[{"id":0,"box":[10,20,30,40],"attributes":{"Gender":"Male"}}]}"#;
        let (_, _, d) = parse_detections(one, p()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].attributes.get("gender"), Some("male"));
        let dup = r#"{"image_width":640,"image_height":480,"detections":[{"id":7,"box":[0,0,1,1]},{"id":7,"box":[0,0,1,1]}]}"#;
        assert!(matches!(parse_detections(dup, p()), Err(IoError::Model(ModelError::DuplicateId(7)))));
        let neg = r#"{"image_width":640,"image_height":480,"detections":[{"id":0,"box":[10,20,-5,40]}]}"#;
        assert!(matches!(parse_detections(neg, p()), Err(IoError::Model(ModelError::BoxOutOfRange { .. }))));
        let tall = r#"{"image_width":640,"image_height":480,"detections":[{"id":0,"box":[10,470,5,40]}]}"#;
        assert!(matches!(parse_detections(tall, p()), Err(IoError::Model(ModelError::BoxOutOfRange { .. }))));
        let heading = r#"{"image_width":640,"image_height":480,"detections":[{"id":0,"box":[0,0,1,1],"heading_deg":270}]}"#;
        assert_eq!(parse_detections(heading, p()).unwrap().2[0].heading_deg, Some(-90.0));
    }
}
