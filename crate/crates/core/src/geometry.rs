//! SE(3) pose algebra, pinhole projection and the depth-based reprojection map.
//!
//! Conventions: all stored extrinsics are world-to-camera (the COLMAP native
//! convention). Rotations are unit quaternions, renormalized after every
//! composition. Residual rotations are parameterized in axis-angle, where the
//! exponential map is well-conditioned for small angles.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// A 3D rotation stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// From raw quaternion components (w, x, y, z); normalized on construction.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        Rotation(UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)))
    }

    /// Exponential map: axis-angle vector (direction = axis, norm = angle in
    /// radians). Smooth through zero.
    pub fn from_axis_angle(v: Vector3<f64>) -> Self {
        Rotation(UnitQuaternion::from_scaled_axis(v))
    }

    pub fn quaternion(&self) -> (f64, f64, f64, f64) {
        let q = self.0.quaternion();
        (q.w, q.i, q.j, q.k)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        // renormalize to keep drift below 1e-9 over long chains
        Rotation(UnitQuaternion::new_normalize(
            self.0.into_inner() * other.0.into_inner(),
        ))
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.inverse())
    }

    pub fn angle(&self) -> f64 {
        self.0.angle()
    }
}

/// Rigid transform x ↦ R·x + t, world-to-camera unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rinv = self.rotation.inverse();
        Pose {
            rotation: rinv,
            translation: -rinv.rotate(&self.translation),
        }
    }
}

/// `compose(a, b)` applies `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation.compose(&b.rotation),
        translation: a.rotation.rotate(&b.translation) + a.translation,
    }
}

/// Relative pose mapping target-camera coordinates to source-camera
/// coordinates, given world-to-camera extrinsics of both frames:
/// E_{t→s} = E_s ∘ E_t⁻¹.
pub fn relative_pose(e_t: &Pose, e_s: &Pose) -> Pose {
    compose(e_s, &e_t.inverse())
}

/// Pinhole camera intrinsics, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if cx < 0.0 || cx >= width as f64 || cy < 0.0 || cy >= height as f64 {
            return Err(Error::Config(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Ray direction in camera coordinates for pixel (u, v), z = 1.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Perspective projection of a camera-space point; `None` if at or
    /// behind the camera plane.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= MIN_PROJECT_DEPTH {
            return None;
        }
        Some((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }
}

pub const MIN_PROJECT_DEPTH: f64 = 1e-9;

/// Reprojects target pixel `(u, v)` with depth `depth` into the source view:
/// p_s ∼ K[R·depth·K⁻¹·p_t + t]. Returns `None` when the point falls behind
/// the source camera; the result may lie outside image bounds (caller masks).
pub fn reproject(
    u: f64,
    v: f64,
    depth: f64,
    k: &Intrinsics,
    pose: &Pose,
) -> Option<(f64, f64)> {
    let x_cam = k.unproject(u, v) * depth;
    let x_src = pose.transform(&x_cam);
    k.project(&x_src)
}

#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Partial derivatives ∂R(r)/∂r_i of the Rodrigues rotation matrix with
/// respect to the axis-angle components, using the closed form
/// ∂R/∂r_i = ((r_i [r]ₓ + [r × (I − R)e_i]ₓ) / ‖r‖²) · R,
/// with the first-order limit [e_i]ₓ at r = 0.
pub fn rotation_jacobians(r: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let theta_sq = r.norm_squared();
    if theta_sq < 1e-16 {
        return [
            hat(&Vector3::x()),
            hat(&Vector3::y()),
            hat(&Vector3::z()),
        ];
    }
    let rot = Rotation::from_axis_angle(*r).matrix();
    let mut out = [Matrix3::zeros(); 3];
    for (i, e) in [Vector3::x(), Vector3::y(), Vector3::z()].iter().enumerate() {
        let v = r.cross(&((Matrix3::identity() - rot) * e));
        let a = (r[i] * hat(r) + hat(&v)) / theta_sq;
        out[i] = a * rot;
    }
    out
}

/// Chains a matrix-sense rotation gradient dL/dR into axis-angle parameter
/// space: (dL/dr)_i = ⟨dL/dR, ∂R/∂r_i⟩_F.
pub fn rotation_grad_axis_angle(r: &Vector3<f64>, dl_dmat: &Matrix3<f64>) -> Vector3<f64> {
    let jac = rotation_jacobians(r);
    Vector3::new(
        dl_dmat.dot(&jac[0]),
        dl_dmat.dot(&jac[1]),
        dl_dmat.dot(&jac[2]),
    )
}
