//! Point-to-box association and per-entity 3D estimates.

use nalgebra::{Point3, Vector3};

use super::camera::CameraModel;
use super::GeometryError;
use crate::model::{Box2D, Box3D, PointCloud};

/// Smallest half extent a derived box may have on any axis, meters.
pub const MIN_HALF_EXTENT: f64 = 0.01;

/// The cloud points whose projection falls inside `bbox`.
pub fn points_in_box(
    camera: &CameraModel,
    image_width: f64,
    cloud: &PointCloud,
    bbox: &Box2D,
) -> Vec<Point3<f64>> {
    cloud
        .points
        .iter()
        .filter(|p| {
            camera
                .project(p, image_width)
                .is_some_and(|[u, v]| bbox.contains(u, v, image_width))
        })
        .copied()
        .collect()
}

const CELL_PX: f64 = 16.0;

/// Bucket grid over the image used to associate many boxes against a large
/// cloud with one projection pass. Membership uses the same predicate as
/// [`points_in_box`]; only points whose pixel lies inside the image are kept,
/// so boxes must be within the image bounds.
pub struct PixelGrid {
    width: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<(u32, [f64; 2])>>,
}

impl PixelGrid {
    pub fn build(camera: &CameraModel, width: f64, height: f64, cloud: &PointCloud) -> Self {
        let cols = (width / CELL_PX).ceil().max(1.0) as usize;
        let rows = (height / CELL_PX).ceil().max(1.0) as usize;
        let mut cells = vec![Vec::new(); cols * rows];
        for (i, p) in cloud.points.iter().enumerate() {
            let Some([u, v]) = camera.project(p, width) else {
                continue;
            };
            if !(u >= 0.0 && u < width && v >= 0.0 && v < height) {
                continue;
            }
            let c = ((u / CELL_PX) as usize).min(cols - 1);
            let r = ((v / CELL_PX) as usize).min(rows - 1);
            cells[r * cols + c].push((i as u32, [u, v]));
        }
        Self { width, cols, rows, cells }
    }

    /// Indices of the points inside `bbox`, ascending.
    pub fn query(&self, bbox: &Box2D) -> Vec<usize> {
        let r0 = ((bbox.y / CELL_PX).floor().max(0.0) as usize).min(self.rows - 1);
        let r1 = (((bbox.y + bbox.h) / CELL_PX).floor().max(0.0) as usize).min(self.rows - 1);
        let mut col_ranges: Vec<(usize, usize)> = Vec::with_capacity(2);
        let to_col = |x: f64| ((x / CELL_PX).floor().max(0.0) as usize).min(self.cols - 1);
        if bbox.wrap {
            let x0 = bbox.x.rem_euclid(self.width);
            let x1 = x0 + bbox.w;
            if x1 <= self.width {
                col_ranges.push((to_col(x0), to_col(x1)));
            } else {
                col_ranges.push((to_col(x0), self.cols - 1));
                col_ranges.push((0, to_col(x1 - self.width)));
            }
        } else {
            col_ranges.push((to_col(bbox.x), to_col(bbox.x + bbox.w)));
        }
        let mut out = Vec::new();
        for r in r0..=r1 {
            for &(c0, c1) in &col_ranges {
                for c in c0..=c1 {
                    for &(idx, [u, v]) in &self.cells[r * self.cols + c] {
                        if bbox.contains(u, v, self.width) {
                            out.push(idx as usize);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn trim_count(n: usize, trim_pct: f64) -> usize {
    ((n as f64) * trim_pct / 100.0).floor() as usize
}

fn sorted_axis(points: &[Point3<f64>], axis: usize) -> Vec<f64> {
    let mut vals: Vec<f64> = points.iter().map(|p| p[axis]).collect();
    vals.sort_unstable_by(f64::total_cmp);
    vals
}

fn trimmed_mean(sorted: &[f64], trim_pct: f64) -> f64 {
    let k = trim_count(sorted.len(), trim_pct);
    let kept = &sorted[k..sorted.len() - k];
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Linear-interpolation percentile on sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Per-axis trimmed mean of the associated points: the lowest and highest
/// `floor(n * trim_pct / 100)` values on each axis are dropped before
/// averaging. `trim_pct = 0` is the plain arithmetic mean.
pub fn entity_center(points: &[Point3<f64>], trim_pct: f64) -> Result<Point3<f64>, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyAssociation);
    }
    let mut c = Point3::origin();
    for axis in 0..3 {
        c[axis] = trimmed_mean(&sorted_axis(points, axis), trim_pct);
    }
    Ok(c)
}

/// Axis-aligned box over the `[trim, 100 - trim]` percentile interval of each
/// axis, with half extents floored at [`MIN_HALF_EXTENT`].
pub fn entity_box3d(points: &[Point3<f64>], trim_pct: f64) -> Result<Box3D, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyAssociation);
    }
    let q = trim_pct / 100.0;
    let mut center = Point3::origin();
    let mut half = Vector3::zeros();
    for axis in 0..3 {
        let sorted = sorted_axis(points, axis);
        let lo = percentile(&sorted, q);
        let hi = percentile(&sorted, 1.0 - q);
        center[axis] = 0.5 * (lo + hi);
        half[axis] = (0.5 * (hi - lo)).max(MIN_HALF_EXTENT);
    }
    Ok(Box3D { center, half_extents: half })
}

/// Center and box for one association; the box is widened if needed so that
/// it always contains the center.
pub fn entity_estimate(
    points: &[Point3<f64>],
    trim_pct: f64,
) -> Result<(Point3<f64>, Box3D), GeometryError> {
    let center = entity_center(points, trim_pct)?;
    let mut bbox = entity_box3d(points, trim_pct)?;
    for axis in 0..3 {
        let lo = (bbox.center[axis] - bbox.half_extents[axis]).min(center[axis]);
        let hi = (bbox.center[axis] + bbox.half_extents[axis]).max(center[axis]);
        if lo < bbox.center[axis] - bbox.half_extents[axis] || hi > bbox.center[axis] + bbox.half_extents[axis] {
            bbox.center[axis] = 0.5 * (lo + hi);
            bbox.half_extents[axis] = (0.5 * (hi - lo)).max(MIN_HALF_EXTENT);
        }
    }
    Ok((center, bbox))
}
