//! Elementary 3-vector and rotation algebra shared by all modules.
//!
//! The attitude of the body is stored as a full 3x3 matrix `B` mapping body
//! coordinates to space coordinates; the Poisson vectors are its rows.
//! Integration drift is controlled by re-orthonormalizing after each accepted
//! step rather than by a constrained parametrization.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `B^T B - id` and `det B - 1` accepted by [`Rotation::from_matrix`].
pub const ROTATION_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("matrix is not a rotation: max |B^T B - id| = {defect:.3e}, det = {det:.6}")]
    NotARotation { defect: f64, det: f64 },
    #[error("matrix cannot be orthonormalized: determinant {det:.6} after projection")]
    NonOrthonormalizable { det: f64 },
}

/// Attitude matrix in SO(3). Rows are the Poisson vectors (alpha, beta, gamma).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates `B^T B = id` and `det B = 1` within [`ROTATION_TOL`].
    pub fn from_matrix(b: Mat3) -> Result<Self, AlgebraError> {
        let defect = orthogonality_defect(&b);
        let det = b.determinant();
        if defect > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(AlgebraError::NotARotation { defect, det });
        }
        Ok(Rotation(b))
    }

    /// Wraps a matrix without validation. Caller guarantees the invariants.
    pub(crate) fn from_matrix_unchecked(b: Mat3) -> Self {
        Rotation(b)
    }

    /// Rotation by `angle` about a coordinate axis (0, 1 or 2).
    pub fn about_axis(axis: usize, angle: f64) -> Self {
        let mut unit = Vec3::zeros();
        unit[axis] = 1.0;
        Rotation(nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_unchecked(unit),
            angle,
        )
        .into_inner())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Body -> space.
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Space -> body (`B^{-1} = B^T`).
    pub fn apply_inverse(&self, v: &Vec3) -> Vec3 {
        self.0.transpose() * v
    }

    /// The third Poisson vector: body-frame coordinates of the spatial vertical.
    pub fn gamma(&self) -> Vec3 {
        self.0.row(2).transpose()
    }
}

/// The unique skew-symmetric matrix with `hat(a) * b = a x b`.
pub fn hat(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Poisson vectors `(alpha, beta, gamma) = (B^{-1} e1, B^{-1} e2, B^{-1} e3)`,
/// i.e. the rows of the attitude matrix.
pub fn poisson_vectors(b: &Rotation) -> (Vec3, Vec3, Vec3) {
    let m = b.matrix();
    (
        m.row(0).transpose(),
        m.row(1).transpose(),
        m.row(2).transpose(),
    )
}

/// Max-abs entry of `B^T B - id`.
pub fn orthogonality_defect(b: &Mat3) -> f64 {
    let d = b.transpose() * b - Mat3::identity();
    d.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Projects a near-orthogonal matrix onto SO(3).
///
/// Gram-Schmidt on the rows in order 1 -> 2, with row 3 replaced by the cross
/// product of the first two; idempotent on exact rotations. Fails if the
/// result is not a proper rotation (e.g. the input was near a reflection).
pub fn orthonormalize(b: &Mat3) -> Result<Rotation, AlgebraError> {
    let r0: Vec3 = b.row(0).transpose();
    let r1: Vec3 = b.row(1).transpose();

    let e0 = r0.normalize();
    let e1 = (r1 - e0 * e0.dot(&r1)).normalize();
    let e2 = e0.cross(&e1);

    let m = Mat3::from_rows(&[e0.transpose(), e1.transpose(), e2.transpose()]);
    let det = m.determinant();
    // det of the projected matrix is +1 by construction unless the input row 3
    // pointed against e0 x e1, which means the input was reflection-like.
    if b.row(2).transpose().dot(&e2) <= 0.0 || !det.is_finite() {
        return Err(AlgebraError::NonOrthonormalizable {
            det: b.determinant(),
        });
    }
    Ok(Rotation(m))
}
