//! SO(3) helpers: 6D ↔ matrix, log/exp maps, geodesic angle.
//!
//! A 6D rotation is two 3-vectors `(a1, a2)` stored as
//! `[a1.x, a1.y, a1.z, a2.x, a2.y, a2.z]`; Gram–Schmidt turns them into the
//! first two columns of a rotation matrix.
//!
//! The backward functions (`*_backward`) propagate a gradient with respect
//! to the output of each map onto its input. They are used by the loss
//! gradients.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type RotationMatrix = Matrix3<f64>;
pub type AxisAngle = Vector3<f64>;

/// Below this norm Gram–Schmidt is undefined.
pub const GS_EPS: f64 = 1e-8;
/// Below this angle the log map uses its first-order expansion.
pub const SMALL_ANGLE: f64 = 1e-6;
/// Within this distance of π the log map recovers the axis from `(V + I)/2`.
pub const NEAR_PI: f64 = 1e-4;
/// Orthonormality tolerance for [`check_rotation`].
pub const ORTHO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub const IDENTITY: Rot6D = Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn a1(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn a2(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    /// First two columns of `r`.
    pub fn from_matrix(r: &RotationMatrix) -> Self {
        Rot6D([
            r[(0, 0)],
            r[(1, 0)],
            r[(2, 0)],
            r[(0, 1)],
            r[(1, 1)],
            r[(2, 1)],
        ])
    }
}

/// Gram–Schmidt: `b1 = a1/|a1|`, `b2 = normalize(a2 − (b1·a2) b1)`, `b3 = b1 × b2`.
pub fn sixd_to_matrix(r: &Rot6D) -> Result<RotationMatrix> {
    Ok(GramSchmidt::forward(r)?.matrix())
}

/// Intermediates of the Gram–Schmidt map, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GramSchmidt {
    a2: Vector3<f64>,
    norm1: f64,
    norm_u: f64,
    b1: Vector3<f64>,
    b2: Vector3<f64>,
    b3: Vector3<f64>,
}

impl GramSchmidt {
    pub fn forward(r: &Rot6D) -> Result<Self> {
        let a1 = r.a1();
        let a2 = r.a2();
        if !r.0.iter().all(|v| v.is_finite()) {
            return Err(Error::Degenerate("non-finite 6D rotation".into()));
        }
        let norm1 = a1.norm();
        if norm1 < GS_EPS {
            return Err(Error::Degenerate(format!("|a1| = {norm1:e}")));
        }
        let b1 = a1 / norm1;
        let u = a2 - b1 * b1.dot(&a2);
        let norm_u = u.norm();
        if norm_u < GS_EPS {
            return Err(Error::Degenerate(format!(
                "orthogonal residual of a2 = {norm_u:e}"
            )));
        }
        let b2 = u / norm_u;
        let b3 = b1.cross(&b2);
        Ok(Self {
            a2,
            norm1,
            norm_u,
            b1,
            b2,
            b3,
        })
    }

    /// Smaller of `|a1|` and the orthogonal residual of `a2`.
    pub fn min_norm(&self) -> f64 {
        self.norm1.min(self.norm_u)
    }

    pub fn matrix(&self) -> RotationMatrix {
        Matrix3::from_columns(&[self.b1, self.b2, self.b3])
    }

    /// Gradient with respect to the six inputs given `dL/dR`.
    pub fn backward(&self, grad_r: &RotationMatrix) -> [f64; 6] {
        let g3: Vector3<f64> = grad_r.column(2).into();
        let mut g1: Vector3<f64> = grad_r.column(0).into();
        let mut g2: Vector3<f64> = grad_r.column(1).into();

        // b3 = b1 × b2
        g1 += self.b2.cross(&g3);
        g2 += g3.cross(&self.b1);

        // b2 = u / |u|
        let gu = (g2 - self.b2 * self.b2.dot(&g2)) / self.norm_u;

        // u = a2 − (b1·a2) b1
        let proj = self.b1.dot(&self.a2);
        let ga2 = gu - self.b1 * self.b1.dot(&gu);
        g1 -= gu * proj + self.a2 * self.b1.dot(&gu);

        // b1 = a1 / |a1|
        let ga1 = (g1 - self.b1 * self.b1.dot(&g1)) / self.norm1;

        [ga1.x, ga1.y, ga1.z, ga2.x, ga2.y, ga2.z]
    }
}

/// Rejects matrices that are not proper rotations within [`ORTHO_TOL`].
pub fn check_rotation(v: &RotationMatrix) -> Result<()> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidValue("non-finite rotation matrix".into()));
    }
    let err = (v.transpose() * v - Matrix3::identity()).abs().max();
    let det = v.determinant();
    if err > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
        return Err(Error::InvalidValue(format!(
            "not a rotation: |RᵀR − I| = {err:e}, det = {det}"
        )));
    }
    Ok(())
}

#[inline]
fn vee_skew(v: &RotationMatrix) -> Vector3<f64> {
    Vector3::new(
        v[(2, 1)] - v[(1, 2)],
        v[(0, 2)] - v[(2, 0)],
        v[(1, 0)] - v[(0, 1)],
    )
}

#[inline]
fn half_trace_cos(v: &RotationMatrix) -> f64 {
    ((v.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)
}

/// `arccos(clamp((tr V − 1)/2))`, the angle used inside the log map.
#[inline]
fn trace_angle(v: &RotationMatrix) -> f64 {
    half_trace_cos(v).acos()
}

/// Rotation angle in `[0, π]`.
///
/// Evaluated as `atan2(|vee(V − Vᵀ)|/2, (tr V − 1)/2)`, which equals
/// `arccos((tr V − 1)/2)` on SO(3) but keeps full precision near 0 and π.
pub fn geodesic_angle(v: &RotationMatrix) -> f64 {
    (vee_skew(v).norm() * 0.5).atan2(half_trace_cos(v))
}

/// Log map SO(3) → so(3), returned as an axis-angle vector with `|ω| ≤ π`.
pub fn matrix_to_log(v: &RotationMatrix) -> Result<AxisAngle> {
    check_rotation(v)?;
    Ok(log_unchecked(v))
}

/// Log map without the orthonormality check.
pub fn log_unchecked(v: &RotationMatrix) -> AxisAngle {
    let theta = trace_angle(v);
    let w = vee_skew(v);
    if theta < SMALL_ANGLE {
        return w * 0.5;
    }
    if PI - theta < NEAR_PI {
        return near_pi_log(v, geodesic_angle(v), &w);
    }
    w * (theta / (2.0 * theta.sin()))
}

fn near_pi_log(v: &RotationMatrix, theta: f64, w: &Vector3<f64>) -> AxisAngle {
    // sym(V) = cos θ·I + (1 − cos θ)·n nᵀ, free of the skew term
    let c = theta.cos();
    let s = ((v + v.transpose()) * 0.5 - Matrix3::identity() * c) / (1.0 - c);
    let k = (0..3)
        .max_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = s.column(k).into();
    let norm = axis.norm();
    if norm == 0.0 {
        return Vector3::zeros();
    }
    axis /= norm;
    // the skew part points along +n for θ < π
    let dominant = (0..3)
        .max_by(|&i, &j| w[i].abs().total_cmp(&w[j].abs()))
        .unwrap_or(0);
    if w[dominant] * axis[dominant] < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Rodrigues' formula. `exp(0) = I`.
pub fn exp_map(omega: &AxisAngle) -> RotationMatrix {
    let theta2 = omega.norm_squared();
    let k = omega.cross_matrix();
    let (sa, sb) = if theta2 < 1e-12 {
        // series of sin θ/θ and (1 − cos θ)/θ²
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * sa + k * k * sb
}

/// `r_prevᵀ · r_curr`.
pub fn relative_rotation(r_prev: &RotationMatrix, r_curr: &RotationMatrix) -> RotationMatrix {
    r_prev.transpose() * r_curr
}

/// Gradients of `relative_rotation` with respect to `(r_prev, r_curr)`.
pub fn relative_rotation_backward(
    r_prev: &RotationMatrix,
    r_curr: &RotationMatrix,
    grad: &RotationMatrix,
) -> (RotationMatrix, RotationMatrix) {
    (r_curr * grad.transpose(), r_prev * grad)
}

/// Gradient of the log map with respect to the nine entries of `v`.
///
/// Differentiates `ω = θ/(2 sin θ) · vee(V − Vᵀ)` with
/// `θ = arccos((tr V − 1)/2)`, switching to series coefficients near zero.
/// Fails within `margin` of π, where the map is not differentiable.
pub fn log_backward(v: &RotationMatrix, grad_omega: &Vector3<f64>, margin: f64) -> Result<RotationMatrix> {
    let theta = trace_angle(v);
    if PI - theta < margin {
        return Err(Error::Degenerate(format!(
            "relative rotation angle {theta} within {margin:e} of π"
        )));
    }
    let w = vee_skew(v);
    // scale = θ/(2 sin θ); dscale = d(scale)/d(tr V)
    let (scale, dscale) = if theta < SMALL_ANGLE {
        (0.5, 0.0)
    } else if theta < 1e-3 {
        let t2 = theta * theta;
        (0.5 + t2 / 12.0, -(1.0 / 6.0 + t2 / 15.0) / 2.0)
    } else {
        let (s, c) = theta.sin_cos();
        let scale = theta / (2.0 * s);
        let dscale_dtheta = (s - theta * c) / (2.0 * s * s);
        (scale, dscale_dtheta * (-1.0 / s) * 0.5)
    };
    let g = grad_omega;
    let diag = dscale * g.dot(&w);
    let mut out = Matrix3::from_diagonal_element(diag);
    out[(2, 1)] += scale * g.x;
    out[(1, 2)] -= scale * g.x;
    out[(0, 2)] += scale * g.y;
    out[(2, 0)] -= scale * g.y;
    out[(1, 0)] += scale * g.z;
    out[(0, 1)] -= scale * g.z;
    Ok(out)
}

/// Rotation about the z axis.
pub fn rot_z(theta: f64) -> RotationMatrix {
    exp_map(&Vector3::new(0.0, 0.0, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
        let r = Rot6D(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        sixd_to_matrix(&r).unwrap()
    }

    #[test]
    fn sixd_identity_and_scale() {
        let id = Matrix3::identity();
        assert_eq!(sixd_to_matrix(&Rot6D::IDENTITY).unwrap(), id);
        assert_eq!(
            sixd_to_matrix(&Rot6D([2.0, 0.0, 0.0, 0.0, 3.0, 0.0])).unwrap(),
            id
        );
    }

    #[test]
    fn sixd_degenerate() {
        assert!(sixd_to_matrix(&Rot6D([0.0; 6])).is_err());
        assert!(sixd_to_matrix(&Rot6D([1.0, 0.0, 0.0, 2.0, 0.0, 0.0])).is_err());
        assert!(sixd_to_matrix(&Rot6D([1.0, 0.0, 0.0, f64::NAN, 1.0, 0.0])).is_err());
    }

    #[test]
    fn sixd_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sixd_matrix_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_rotation(&mut rng);
        let back = sixd_to_matrix(&Rot6D::from_matrix(&r)).unwrap();
        assert!((back - r).abs().max() < 1e-12);
    }

    #[test]
    fn log_known_values() {
        assert_eq!(matrix_to_log(&Matrix3::identity()).unwrap(), Vector3::zeros());
        let w = matrix_to_log(&rot_z(PI / 2.0)).unwrap();
        assert!((w - Vector3::new(0.0, 0.0, PI / 2.0)).norm() < 1e-12);
        let half = matrix_to_log(&Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0))).unwrap();
        assert!((half.norm() - PI).abs() < 1e-12);
        assert!(half.x.abs() < 1e-12 && half.y.abs() < 1e-12);
    }

    #[test]
    fn log_rejects_non_rotation() {
        assert!(matrix_to_log(&(Matrix3::identity() * 2.0)).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matrix_to_log(&reflect).is_err());
    }

    #[test]
    fn exp_known_values() {
        assert_eq!(exp_map(&Vector3::zeros()), Matrix3::identity());
        let half = exp_map(&Vector3::new(0.0, 0.0, PI));
        let want = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert!((half - want).abs().max() < 1e-15);
        let w = Vector3::new(0.3, -0.2, 0.5);
        let full = w * (1.0 + 2.0 * PI / w.norm());
        assert!((exp_map(&full) - exp_map(&w)).abs().max() < 1e-12);
    }

    #[test]
    fn exp_log_near_singular_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &theta in &[1e-9, 1e-6, 1e-4, PI - 1e-3, PI - 1e-4, PI - 1e-6, PI] {
            for _ in 0..50 {
                let axis = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
                .normalize();
                let v = exp_map(&(axis * theta));
                let back = exp_map(&matrix_to_log(&v).unwrap());
                assert!((back - v).norm() < 1e-7, "theta {theta}");
            }
        }
    }

    #[test]
    fn relative_rotation_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = random_rotation(&mut rng);
        assert!((relative_rotation(&r, &r) - Matrix3::identity()).abs().max() < 1e-12);
        assert_eq!(relative_rotation(&Matrix3::identity(), &rot_z(0.4)), rot_z(0.4));
        let q = random_rotation(&mut rng);
        assert!((r * relative_rotation(&r, &q) - q).abs().max() < 1e-9);
    }

    #[test]
    fn geodesic_cases() {
        assert_eq!(geodesic_angle(&Matrix3::identity()), 0.0);
        assert!((geodesic_angle(&rot_z(0.3)) - 0.3).abs() < 1e-12);
        let half = exp_map(&(Vector3::new(1.0, 2.0, -0.5).normalize() * PI));
        assert!((geodesic_angle(&half) - PI).abs() < 1e-7);
    }

    fn numeric_grad<F: Fn(&[f64; 6]) -> f64>(f: F, x: &[f64; 6]) -> [f64; 6] {
        let h = 1e-6;
        std::array::from_fn(|i| {
            let mut p = *x;
            let mut m = *x;
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
    }

    #[test]
    fn gram_schmidt_backward_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let x: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let weights = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let f = |v: &[f64; 6]| {
                sixd_to_matrix(&Rot6D(*v))
                    .unwrap()
                    .component_mul(&weights)
                    .sum()
            };
            let analytic = GramSchmidt::forward(&Rot6D(x)).unwrap().backward(&weights);
            let numeric = numeric_grad(f, &x);
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{a} vs {n}");
            }
        }
    }

    #[test]
    fn log_backward_matches_fd_on_manifold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let g = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let f = |v: &[f64; 6]| log_unchecked(&sixd_to_matrix(&Rot6D(*v)).unwrap()).dot(&g);
            let gs = GramSchmidt::forward(&Rot6D(x)).unwrap();
            let dv = log_backward(&gs.matrix(), &g, 1e-5).unwrap();
            let analytic = gs.backward(&dv);
            let numeric = numeric_grad(f, &x);
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!((a - n).abs() < 1e-5 * (1.0 + n.abs()), "{a} vs {n}");
            }
        }
    }

    #[test]
    fn log_backward_rejects_half_turn() {
        let v = exp_map(&Vector3::new(0.0, PI - 1e-7, 0.0));
        assert!(log_backward(&v, &Vector3::new(1.0, 0.0, 0.0), 1e-5).is_err());
    }
}
