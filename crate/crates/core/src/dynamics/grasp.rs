//! Grasp matrix algebra, force decomposition and payload dynamics.
//!
//! Wrenches are world-frame `(f, m)` stacks. The grasp matrix maps the stacked
//! wrenches applied at the grasp points to the net wrench about the payload COM.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use super::model::LoadModel;
use crate::error::{CrmError, Result};
use crate::kinematics::{rotate, GraspGeometry};

/// Relative singular-value cutoff of the pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// 3×3 planar block: moment row is `ρ_y f_x − ρ_x f_y + m`, where `ρ` points
/// from the grasp to the COM in the world frame.
pub fn planar_grasp_block(rho: &Vector2<f64>) -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, rho.y, -rho.x, 1.0)
}

/// World-frame grasp-to-COM vectors at payload orientation `phi`.
pub fn world_offsets(grasp: &GraspGeometry, phi: f64) -> Vec<Vector2<f64>> {
    (0..grasp.len()).map(|i| rotate(phi, grasp.offset(i))).collect()
}

/// Planar grasp matrix `J_oᵀ` (3 × 3N).
pub fn planar_grasp_matrix(grasp: &GraspGeometry, load_phi: f64) -> DMatrix<f64> {
    let n = grasp.len();
    let mut g = DMatrix::zeros(3, 3 * n);
    for (i, rho) in world_offsets(grasp, load_phi).iter().enumerate() {
        g.fixed_view_mut::<3, 3>(0, 3 * i).copy_from(&planar_grasp_block(rho));
    }
    g
}

/// Cross-product matrix `S(v)` with `S(v)x = v × x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Spatial grasp matrix `J_oᵀ` (6 × 6N); block `i` is `[I, 0; −S(R r_i), I]`.
pub fn spatial_grasp_matrix(offsets: &[Vector3<f64>], rotation: &Matrix3<f64>) -> DMatrix<f64> {
    let n = offsets.len();
    let mut g = DMatrix::zeros(6, 6 * n);
    for (i, r) in offsets.iter().enumerate() {
        let s = skew(&(rotation * r));
        let c = 6 * i;
        g.fixed_view_mut::<3, 3>(0, c).copy_from(&Matrix3::identity());
        g.fixed_view_mut::<3, 3>(3, c).copy_from(&(-s));
        g.fixed_view_mut::<3, 3>(3, c + 3).copy_from(&Matrix3::identity());
    }
    g
}

/// Motion-inducing and internal parts of a stacked wrench.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceDecomposition {
    pub motion: DVector<f64>,
    pub internal: DVector<f64>,
}

/// Splits `f` into `f_M = (J_oᵀ)⁺J_oᵀf` and `f_I = f − f_M`.
pub fn decompose_forces(f: &DVector<f64>, grasp_t: &DMatrix<f64>) -> Result<ForceDecomposition> {
    if f.len() != grasp_t.ncols() {
        return Err(CrmError::Domain(format!(
            "wrench stack has {} entries, grasp matrix expects {}",
            f.len(),
            grasp_t.ncols()
        )));
    }
    let svd = grasp_t.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = PINV_CUTOFF * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < grasp_t.nrows() {
        return Err(CrmError::DegenerateGrasp { rank, expected: grasp_t.nrows() });
    }
    let pinv = svd
        .pseudo_inverse(cutoff)
        .map_err(|e| CrmError::Domain(e.to_string()))?;
    let motion = &pinv * (grasp_t * f);
    let internal = f - &motion;
    Ok(ForceDecomposition { motion, internal })
}

/// Planar payload accelerations `(P̈_o, ω̇_o)` under net applied wrench `wrench`
/// (about the COM, gravity excluded).
pub fn load_dynamics_planar(load: &LoadModel, wrench: &Vector3<f64>) -> Vector3<f64> {
    let g = load.gravity_vector();
    Vector3::new(
        wrench.x / load.mass + g.x,
        wrench.y / load.mass + g.y,
        wrench.z / load.inertia,
    )
}

/// Spatial Newton–Euler payload accelerations.
pub fn load_dynamics_spatial(
    mass: f64,
    inertia: &Matrix3<f64>,
    gravity: &Vector3<f64>,
    omega: &Vector3<f64>,
    force: &Vector3<f64>,
    moment: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let lin = force / mass + gravity;
    let gyro = omega.cross(&(inertia * omega));
    let ang = inertia
        .lu()
        .solve(&(moment - gyro))
        .ok_or_else(|| CrmError::Domain("payload inertia is singular".into()))?;
    Ok((lin, ang))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rod() -> GraspGeometry {
        GraspGeometry {
            offsets: vec![[0.25, 0.0], [-0.25, 0.0]],
            orientation_offsets: vec![0.0, 0.0],
        }
    }

    #[test]
    fn concentric_grasp_is_stacked_identity() {
        let g = GraspGeometry { offsets: vec![[0.0, 0.0]; 3], orientation_offsets: vec![0.0; 3] };
        let m = planar_grasp_matrix(&g, 0.7);
        for i in 0..3 {
            assert_eq!(m.fixed_view::<3, 3>(0, 3 * i).into_owned(), Matrix3::identity());
        }
        let s = spatial_grasp_matrix(&[Vector3::zeros(); 2], &Matrix3::identity());
        assert_eq!(s.fixed_view::<6, 6>(0, 6).into_owned(), nalgebra::Matrix6::identity());
    }

    #[test]
    fn rod_moment_row_matches_cross_products() {
        let m = planar_grasp_matrix(&rod(), 0.0);
        // Grasp 1 sits at −x of the COM, grasp 2 at +x; moment = (p_i − p_o) × f.
        let p1 = Vector3::new(-0.25, 0.0, 0.0);
        let p2 = Vector3::new(0.25, 0.0, 0.0);
        for (p, c) in [(p1, 0), (p2, 3)] {
            for (k, e) in [Vector3::x(), Vector3::y()].iter().enumerate() {
                assert_relative_eq!(m[(2, c + k)], p.cross(e).z, epsilon = 1e-15);
            }
            assert_eq!(m[(2, c + 2)], 1.0);
        }
        assert_relative_eq!(m[(2, 1)], -0.25);
        assert_relative_eq!(m[(2, 4)], 0.25);
    }

    #[test]
    fn tension_is_internal() {
        let m = planar_grasp_matrix(&rod(), 0.0);
        let f = DVector::from_vec(vec![-10.0, 0.0, 0.0, 10.0, 0.0, 0.0]);
        assert!((&m * &f).norm() < 1e-15);
        let d = decompose_forces(&f, &m).unwrap();
        assert!(d.motion.norm() < 1e-12);
        assert!((d.internal - f).norm() < 1e-12);
    }

    #[test]
    fn row_space_force_has_no_internal_part() {
        let m = planar_grasp_matrix(&rod(), 0.3);
        let f = m.transpose() * DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let d = decompose_forces(&f, &m).unwrap();
        assert!(d.internal.norm() < 1e-12 * f.norm());
    }

    #[test]
    fn degenerate_grasp_is_refused() {
        let m = DMatrix::<f64>::zeros(3, 6);
        assert!(matches!(
            decompose_forces(&DVector::zeros(6), &m),
            Err(CrmError::DegenerateGrasp { rank: 0, expected: 3 })
        ));
    }

    #[test]
    fn load_dynamics_cases() {
        let load = LoadModel::rod(5.0, 0.5, 9.81);
        let hold = Vector3::new(0.0, 5.0 * 9.81, 0.0);
        assert!(load_dynamics_planar(&load, &hold).norm() < 1e-14);
        let free = load_dynamics_planar(&load, &Vector3::zeros());
        assert_eq!(free, Vector3::new(0.0, -9.81, 0.0));

        let inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let omega = Vector3::new(0.0, 4.0, 0.0);
        let (_, alpha) = load_dynamics_spatial(
            2.0,
            &inertia,
            &Vector3::zeros(),
            &omega,
            &Vector3::zeros(),
            &Vector3::zeros(),
        )
        .unwrap();
        assert!(alpha.norm() < 1e-15);
    }

    /// Normal-equations projector, independent of the SVD pseudoinverse.
    fn normal_equation_motion(f: &DVector<f64>, g: &DMatrix<f64>) -> DVector<f64> {
        let ggt = g * g.transpose();
        g.transpose() * ggt.cholesky().unwrap().solve(&(g * f))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn planar_decomposition_properties(
            vals in prop::collection::vec(-100.0..100.0f64, 6),
            phi in -3.0..3.0f64,
        ) {
            let m = planar_grasp_matrix(&rod(), phi);
            let f = DVector::from_vec(vals);
            let d = decompose_forces(&f, &m).unwrap();
            prop_assert!((&m * &d.internal).norm() <= 1e-10 * f.norm().max(1e-300));
            prop_assert!((&d.motion + &d.internal - &f).norm() <= 1e-12 * f.norm().max(1.0));
            prop_assert!(d.motion.dot(&d.internal).abs() <= 1e-9 * f.norm_squared().max(1.0));
            prop_assert!((&d.motion - normal_equation_motion(&f, &m)).norm() <= 1e-9 * f.norm().max(1.0));
            let again = decompose_forces(&d.motion, &m).unwrap();
            prop_assert!(again.internal.norm() <= 1e-9 * f.norm().max(1.0));
        }

        #[test]
        fn decomposition_is_linear(
            a in prop::collection::vec(-10.0..10.0f64, 6),
            b in prop::collection::vec(-10.0..10.0f64, 6),
            s in -3.0..3.0f64,
        ) {
            let m = planar_grasp_matrix(&rod(), 0.4);
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            let da = decompose_forces(&a, &m).unwrap();
            let db = decompose_forces(&b, &m).unwrap();
            let dc = decompose_forces(&(&a * s + &b), &m).unwrap();
            prop_assert!((dc.motion - (da.motion * s + db.motion)).norm() < 1e-9);
        }

        #[test]
        fn spatial_decomposition_null_space(
            vals in prop::collection::vec(-100.0..100.0f64, 12),
            r1 in prop::array::uniform3(-0.5..0.5f64),
            r2 in prop::array::uniform3(-0.5..0.5f64),
        ) {
            let offs = [Vector3::from(r1), Vector3::from(r2)];
            let m = spatial_grasp_matrix(&offs, &Matrix3::identity());
            let f = DVector::from_vec(vals);
            let d = decompose_forces(&f, &m).unwrap();
            prop_assert!((&m * &d.internal).norm() <= 1e-10 * f.norm().max(1e-300));
        }
    }
}
