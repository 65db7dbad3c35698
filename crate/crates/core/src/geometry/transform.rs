//! Rigid transforms and their construction from a pair of joint axes plus
//! pose parameters.

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};

use super::Error;
use crate::brep::AxisSpec;

/// Proper rigid motion: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rot: Rotation3<f64>,
    pub trans: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rot: Rotation3::identity(),
            trans: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, p: Point3<f64>) -> Point3<f64> {
        self.rot * p + self.trans
    }

    pub fn apply_vector(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.rot * v
    }

    pub fn apply_axis(&self, axis: &AxisSpec) -> AxisSpec {
        AxisSpec {
            origin: self.apply_point(axis.origin),
            direction: Unit::new_normalize(self.apply_vector(axis.direction.into_inner())),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rot: self.rot * other.rot,
            trans: self.rot * other.trans + self.trans,
        }
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rot.inverse();
        Self {
            rot: inv,
            trans: -(inv * self.trans),
        }
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_mat16(&self) -> [f64; 16] {
        let r = self.rot.matrix();
        let t = self.trans;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    /// Parse a row-major 4×4, validating rigidity: orthonormal rotation block
    /// with det = +1 within 1e-6 and an affine last row.
    pub fn from_mat16(m: &[f64; 16]) -> Result<Self, Error> {
        let last_ok = m[12].abs() <= 1e-9
            && m[13].abs() <= 1e-9
            && m[14].abs() <= 1e-9
            && (m[15] - 1.0).abs() <= 1e-9;
        if !last_ok {
            return Err(Error::NotRigid("last row is not [0, 0, 0, 1]".into()));
        }
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let gram = r.transpose() * r;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > 1e-6 {
            return Err(Error::NotRigid(format!(
                "rotation block not orthonormal (deviation {ortho_err:.2e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::NotRigid(format!("determinant {det}, expected +1")));
        }
        Ok(Self {
            rot: Rotation3::from_matrix_unchecked(r),
            trans: Vector3::new(m[3], m[7], m[11]),
        })
    }
}

/// Minimal rotation taking unit vector `from` onto unit vector `to`:
/// axis = from×to, angle = atan2(‖from×to‖, from·to). For antiparallel
/// inputs the axis is the coordinate axis least aligned with `from`,
/// projected orthogonal to it.
pub fn minimal_rotation(from: Vector3<f64>, to: Vector3<f64>) -> Rotation3<f64> {
    let cross = from.cross(&to);
    let sin = cross.norm();
    let cos = from.dot(&to);
    if sin < 1e-12 {
        if cos >= 0.0 {
            return Rotation3::identity();
        }
        let candidates = [Vector3::x(), Vector3::y(), Vector3::z()];
        let least = candidates
            .into_iter()
            .min_by(|a, b| {
                a.dot(&from)
                    .abs()
                    .partial_cmp(&b.dot(&from).abs())
                    .expect("finite dots")
            })
            .expect("three candidates");
        let perp = least - from * least.dot(&from);
        return Rotation3::from_axis_angle(&Unit::new_normalize(perp), std::f64::consts::PI);
    }
    let angle = sin.atan2(cos);
    Rotation3::from_axis_angle(&Unit::new_normalize(cross), angle)
}

/// Pose parameters resolved against a pair of axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub offset: f64,
    pub rotation: f64,
    pub flip: bool,
}

impl Pose {
    pub fn zero() -> Self {
        Self {
            offset: 0.0,
            rotation: 0.0,
            flip: false,
        }
    }
}

/// Build the rigid transform that assembles part 1 onto part 2: part 1's
/// axis is rotated onto part 2's (flipped if requested), spun by `rotation`
/// about it, and translated so part 1's origin lands `offset` along part 2's
/// axis from its origin.
pub fn transform_from_axes(
    axis1: &AxisSpec,
    axis2: &AxisSpec,
    pose: Pose,
) -> Result<RigidTransform, Error> {
    let d1 = axis1.direction.into_inner();
    let mut d2 = axis2.direction.into_inner();
    if !d1.norm().is_finite() || !d2.norm().is_finite() {
        return Err(Error::DegenerateDirection);
    }
    if pose.flip {
        d2 = -d2;
    }
    let r0 = minimal_rotation(d1, d2);
    let spin = Rotation3::from_axis_angle(&Unit::new_unchecked(d2), pose.rotation);
    let rot = spin * r0;
    let trans = axis2.origin.coords + pose.offset * d2 - rot * axis1.origin.coords;
    Ok(RigidTransform { rot, trans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn axis(o: [f64; 3], d: [f64; 3]) -> AxisSpec {
        AxisSpec::new(Point3::new(o[0], o[1], o[2]), Vector3::new(d[0], d[1], d[2])).unwrap()
    }

    #[test]
    fn identical_axes_zero_pose_is_identity() {
        let a = axis([1.0, 2.0, 3.0], [0.0, 0.0, 1.0]);
        let t = transform_from_axes(&a, &a, Pose::zero()).unwrap();
        assert_relative_eq!(t.rot.matrix(), &Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(t.trans, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn flip_rotates_onto_negated_axis() {
        let a1 = axis([0.0; 3], [0.0, 0.0, 1.0]);
        let a2 = axis([0.0; 3], [0.0, 0.0, 1.0]);
        let t = transform_from_axes(
            &a1,
            &a2,
            Pose {
                offset: 0.0,
                rotation: 0.0,
                flip: true,
            },
        )
        .unwrap();
        let mapped = t.apply_vector(Vector3::z());
        assert_relative_eq!(mapped, -Vector3::z(), epsilon = 1e-9);
    }

    #[test]
    fn offset_translates_along_target_axis() {
        let a1 = axis([0.0; 3], [0.0, 0.0, 1.0]);
        let a2 = axis([0.0; 3], [0.0, 0.0, 1.0]);
        let t = transform_from_axes(
            &a1,
            &a2,
            Pose {
                offset: 2.0,
                rotation: 0.0,
                flip: false,
            },
        )
        .unwrap();
        assert_relative_eq!(t.trans, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn maps_origin_and_direction_onto_target() {
        let a1 = axis([5.0, -2.0, 1.0], [1.0, 1.0, 0.0]);
        let a2 = axis([0.0, 3.0, 0.5], [0.0, -1.0, 1.0]);
        for flip in [false, true] {
            let pose = Pose {
                offset: 0.75,
                rotation: 1.1,
                flip,
            };
            let t = transform_from_axes(&a1, &a2, pose).unwrap();
            let d2 = if flip {
                -a2.direction.into_inner()
            } else {
                a2.direction.into_inner()
            };
            let mapped_d = t.apply_vector(a1.direction.into_inner());
            assert_relative_eq!(mapped_d, d2, epsilon = 1e-9);
            let mapped_o = t.apply_point(a1.origin);
            let expected = a2.origin + pose.offset * d2;
            assert_relative_eq!(mapped_o, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn antiparallel_uses_a_perpendicular_axis() {
        let r = minimal_rotation(Vector3::z(), -Vector3::z());
        assert_relative_eq!(r * Vector3::z(), -Vector3::z(), epsilon = 1e-12);
        // A proper rotation, not a reflection.
        assert_relative_eq!(r.matrix().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mat16_round_trip_and_rigidity_check() {
        let a1 = axis([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let a2 = axis([0.0, 0.0, 2.0], [1.0, 0.0, 1.0]);
        let t = transform_from_axes(
            &a1,
            &a2,
            Pose {
                offset: -0.5,
                rotation: 0.3,
                flip: false,
            },
        )
        .unwrap();
        let m = t.to_mat16();
        let back = RigidTransform::from_mat16(&m).unwrap();
        assert_relative_eq!(back.rot.matrix(), t.rot.matrix(), epsilon = 1e-12);
        assert_relative_eq!(back.trans, t.trans, epsilon = 1e-12);

        let mut scaled = m;
        scaled[0] *= 2.0;
        assert!(RigidTransform::from_mat16(&scaled).is_err());
    }

    #[test]
    fn compose_and_inverse() {
        let a = transform_from_axes(
            &axis([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            &axis([0.0, 2.0, 0.0], [0.0, 1.0, 0.0]),
            Pose {
                offset: 0.2,
                rotation: 0.9,
                flip: false,
            },
        )
        .unwrap();
        let p = Point3::new(0.3, -1.2, 2.2);
        let round = a.inverse().apply_point(a.apply_point(p));
        assert_relative_eq!(round, p, epsilon = 1e-12);
        let c = a.compose(&a.inverse());
        assert_relative_eq!(c.rot.matrix(), &Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(c.trans, Vector3::zeros(), epsilon = 1e-12);
    }
}
