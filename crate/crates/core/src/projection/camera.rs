use std::f64::consts::TAU;

use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

const ROTATION_TOL: f64 = 1e-6;
const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("BadRotation: {0}")]
    BadRotation(String),
    #[error("BadIntrinsics: {0}")]
    BadIntrinsics(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intrinsics {
    /// Perspective camera looking down its +z axis.
    Pinhole { fx: f64, fy: f64, cx: f64, cy: f64 },
    /// 360 degree panorama. Azimuth is measured in the camera x-y plane;
    /// `seam_azimuth_deg` maps to column 0 and columns grow clockwise.
    Cylindrical { seam_azimuth_deg: f64, v_center: f64, fv: f64 },
}

/// Intrinsics plus the rigid robot-to-camera transform `p_cam = R p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: Intrinsics,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraModel {
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, CameraError> {
        match intrinsics {
            Intrinsics::Pinhole { fx, fy, cx, cy } => {
                if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
                    return Err(CameraError::BadIntrinsics(format!(
                        "pinhole requires fx, fy > 0 (got fx={fx}, fy={fy})"
                    )));
                }
            }
            Intrinsics::Cylindrical { seam_azimuth_deg, v_center, fv } => {
                if !(fv > 0.0) || !seam_azimuth_deg.is_finite() || !v_center.is_finite() {
                    return Err(CameraError::BadIntrinsics(format!(
                        "cylindrical requires fv > 0 (got fv={fv})"
                    )));
                }
            }
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(CameraError::BadIntrinsics("non-finite translation".into()));
        }
        let ortho_err = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(ortho_err <= ROTATION_TOL) || !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(CameraError::BadRotation(format!(
                "R must be orthonormal with det +1 (orthogonality error {ortho_err:.3e}, det {det})"
            )));
        }
        Ok(Self { intrinsics, rotation, translation })
    }

    /// Unit-focal pinhole at the robot origin with no rotation.
    pub fn identity() -> Self {
        Self {
            intrinsics: Intrinsics::Pinhole { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 },
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    /// Pixel `(u, v)` of a robot-frame point, or `None` when the point has no
    /// defined image (behind a pinhole, or on a panorama's axis).
    /// `image_width` is only consulted by the cylindrical model.
    pub fn project(&self, p: &Point3<f64>, image_width: f64) -> Option<[f64; 2]> {
        let pc = self.to_camera(p);
        match self.intrinsics {
            Intrinsics::Pinhole { fx, fy, cx, cy } => {
                if pc.z <= MIN_DEPTH {
                    return None;
                }
                Some([fx * (pc.x / pc.z) + cx, fy * (pc.y / pc.z) + cy])
            }
            Intrinsics::Cylindrical { seam_azimuth_deg, v_center, fv } => {
                let rho = pc.x.hypot(pc.y);
                if rho <= MIN_DEPTH {
                    return None;
                }
                let azimuth = pc.y.atan2(pc.x);
                let frac = (seam_azimuth_deg.to_radians() - azimuth).rem_euclid(TAU) / TAU;
                let mut u = image_width * frac;
                if u >= image_width {
                    u -= image_width;
                }
                Some([u, v_center - fv * (pc.z / rho)])
            }
        }
    }
}
