//! Angular-momentum constraint Aζ = 0, its analytic null-space basis S,
//! the rate Ṡ and the momentum map R.

use crate::config::SwarmConfig;
use crate::kinematics::{apply_rate_matrix, mrp_to_dcm_derivative, read3, Pose};
use crate::linalg::skew;
use crate::{DMat, DVec, Mat3};

/// Constraint matrices evaluated at one state.
#[derive(Debug, Clone)]
pub struct ConstraintGeometry {
    pub a: DMat,
    pub s: DMat,
    pub s_dot: DMat,
    pub r: DMat,
}

impl ConstraintGeometry {
    pub fn evaluate(cfg: &SwarmConfig, q: &DVec, zeta: &DVec) -> Self {
        let pose = Pose::new(cfg, q);
        let a = momentum_matrix_at(cfg, &pose);
        let s = nullspace_from_a(cfg, &pose, &a);
        let s_dot = nullspace_derivative_at(cfg, &pose, &a, &apply_rate_matrix(cfg, q, zeta));
        let r = momentum_map_at(cfg, &pose);
        Self { a, s, s_dot, r }
    }

    /// Geometry at (q, ζ = S(q)v).
    pub fn from_quasi_velocity(cfg: &SwarmConfig, q: &DVec, v: &DVec) -> Self {
        let pose = Pose::new(cfg, q);
        let a = momentum_matrix_at(cfg, &pose);
        let s = nullspace_from_a(cfg, &pose, &a);
        let zeta = &s * v;
        let s_dot = nullspace_derivative_at(cfg, &pose, &a, &apply_rate_matrix(cfg, q, &zeta));
        let r = momentum_map_at(cfg, &pose);
        Self { a, s, s_dot, r }
    }
}

/// A = [m₂(r̃₂ − r̃₁), …, mₙ(r̃ₙ − r̃₁), C₁J₁, …, CₙJₙ], so that Aζ is the total
/// angular momentum about the centre of mass in inertial axes.
pub fn momentum_matrix(cfg: &SwarmConfig, q: &DVec) -> DMat {
    momentum_matrix_at(cfg, &Pose::new(cfg, q))
}

pub(crate) fn momentum_matrix_at(cfg: &SwarmConfig, pose: &Pose) -> DMat {
    let n = cfg.n();
    let mut a = DMat::zeros(3, cfg.dim_q());
    for j in 2..=n {
        let block = skew(&(pose.positions[j - 1] - pose.positions[0])) * cfg.mass(j);
        a.fixed_view_mut::<3, 3>(0, cfg.pos_index(j)).copy_from(&block);
    }
    for j in 1..=n {
        let block = pose.dcms[j - 1] * cfg.inertia(j);
        a.fixed_view_mut::<3, 3>(0, cfg.att_index(j)).copy_from(&block);
    }
    a
}

/// Directional derivative dA[δq].
pub fn momentum_matrix_derivative(cfg: &SwarmConfig, q: &DVec, dq: &DVec) -> DMat {
    momentum_matrix_derivative_at(cfg, &Pose::new(cfg, q), dq)
}

pub(crate) fn momentum_matrix_derivative_at(cfg: &SwarmConfig, pose: &Pose, dq: &DVec) -> DMat {
    let n = cfg.n();
    let mut da = DMat::zeros(3, cfg.dim_q());
    let dr = Pose::velocities(cfg, dq);
    for j in 2..=n {
        let block = skew(&(dr[j - 1] - dr[0])) * cfg.mass(j);
        da.fixed_view_mut::<3, 3>(0, cfg.pos_index(j)).copy_from(&block);
    }
    for j in 1..=n {
        let ds = read3(dq, cfg.att_index(j));
        let block = mrp_to_dcm_derivative(&pose.mrps[j - 1], &ds) * cfg.inertia(j);
        da.fixed_view_mut::<3, 3>(0, cfg.att_index(j)).copy_from(&block);
    }
    da
}

/// S = [E_{6n−6}; −Jₙ⁻¹ C^{Bₙ/I} A_s].
pub fn nullspace_basis(cfg: &SwarmConfig, q: &DVec) -> DMat {
    let pose = Pose::new(cfg, q);
    let a = momentum_matrix_at(cfg, &pose);
    nullspace_from_a(cfg, &pose, &a)
}

fn last_inertia_inv(cfg: &SwarmConfig) -> Mat3 {
    cfg.inertia(cfg.n()).try_inverse().expect("validated inertia is invertible")
}

pub(crate) fn nullspace_from_a(cfg: &SwarmConfig, pose: &Pose, a: &DMat) -> DMat {
    let m = cfg.dim_v();
    let mut s = DMat::zeros(cfg.dim_q(), m);
    s.view_mut((0, 0), (m, m)).fill_with_identity();
    let k = -(last_inertia_inv(cfg) * pose.dcms[cfg.n() - 1].transpose());
    let bottom = k * a.columns(0, m);
    s.view_mut((m, 0), (3, m)).copy_from(&bottom);
    s
}

/// Directional derivative dS[δq] of the analytic basis.
pub fn nullspace_basis_derivative(cfg: &SwarmConfig, q: &DVec, dq: &DVec) -> DMat {
    let pose = Pose::new(cfg, q);
    let a = momentum_matrix_at(cfg, &pose);
    nullspace_derivative_at(cfg, &pose, &a, dq)
}

pub(crate) fn nullspace_derivative_at(cfg: &SwarmConfig, pose: &Pose, a: &DMat, dq: &DVec) -> DMat {
    let n = cfg.n();
    let m = cfg.dim_v();
    let da = momentum_matrix_derivative_at(cfg, pose, dq);
    let dsig = read3(dq, cfg.att_index(n));
    let dct = mrp_to_dcm_derivative(&pose.mrps[n - 1], &dsig).transpose();
    let ct = pose.dcms[n - 1].transpose();
    let jinv = last_inertia_inv(cfg);
    let bottom = -(jinv * (dct * a.columns(0, m) + ct * da.columns(0, m)));
    let mut ds = DMat::zeros(cfg.dim_q(), m);
    ds.view_mut((m, 0), (3, m)).copy_from(&bottom);
    ds
}

/// Ṡ along the motion q̇ = Ẑζ.
pub fn nullspace_basis_rate(cfg: &SwarmConfig, q: &DVec, zeta: &DVec) -> DMat {
    nullspace_basis_derivative(cfg, q, &apply_rate_matrix(cfg, q, zeta))
}

/// R = [(r̃₂ − r̃₁), …, (r̃ₙ − r̃₁), C₁, …, Cₙ]; R·u_c is the inertial rate of
/// change of the total angular momentum produced by the wrench u_c.
pub fn momentum_map(cfg: &SwarmConfig, q: &DVec) -> DMat {
    momentum_map_at(cfg, &Pose::new(cfg, q))
}

pub(crate) fn momentum_map_at(cfg: &SwarmConfig, pose: &Pose) -> DMat {
    let n = cfg.n();
    let mut r = DMat::zeros(3, cfg.dim_q());
    for j in 2..=n {
        let block = skew(&(pose.positions[j - 1] - pose.positions[0]));
        r.fixed_view_mut::<3, 3>(0, cfg.pos_index(j)).copy_from(&block);
    }
    for j in 1..=n {
        r.fixed_view_mut::<3, 3>(0, cfg.att_index(j)).copy_from(&pose.dcms[j - 1]);
    }
    r
}

/// Total angular momentum Σ mⱼ rⱼ × ṙⱼ + Cⱼ Jⱼ ωⱼ summed satellite by
/// satellite, with r₁ and ṙ₁ reconstructed from the centre-of-mass convention.
pub fn angular_momentum(cfg: &SwarmConfig, q: &DVec, zeta: &DVec) -> crate::Vec3 {
    let pose = Pose::new(cfg, q);
    let vel = Pose::velocities(cfg, zeta);
    (1..=cfg.n())
        .map(|j| {
            let w = read3(zeta, cfg.att_index(j));
            pose.positions[j - 1].cross(&vel[j - 1]) * cfg.mass(j)
                + pose.dcms[j - 1] * cfg.inertia(j) * w
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::apply_rate_matrix;
    use crate::linalg::{norm2, numerical_rank};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(cfg: &SwarmConfig, rng: &mut ChaCha8Rng) -> DVec {
        DVec::from_fn(cfg.dim_q(), |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_attitude_blocks_are_raw_inertias() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut q = DVec::zeros(cfg.dim_q());
        q[0] = 1.0;
        let a = momentum_matrix(&cfg, &q);
        for j in 1..=3 {
            let blk = a.fixed_view::<3, 3>(0, cfg.att_index(j)).into_owned();
            assert_eq!(blk, *cfg.inertia(j));
        }
    }

    #[test]
    fn a_zeta_equals_explicit_angular_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..=4 {
            let cfg = SwarmConfig::uniform(n);
            for _ in 0..50 {
                let q = random_q(&cfg, &mut rng);
                let z = random_q(&cfg, &mut rng);
                let l1 = momentum_matrix(&cfg, &q) * &z;
                let l2 = angular_momentum(&cfg, &q, &z);
                let diff = (l1 - DVec::from_column_slice(l2.as_slice())).norm();
                assert!(diff <= 1e-12 * l2.norm().max(1.0), "diff {diff}");
            }
        }
    }

    #[test]
    fn doubling_masses_doubles_a() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_q(&cfg, &mut rng);
        let a1 = momentum_matrix(&cfg, &q);
        let a2 = momentum_matrix(&cfg.scaled(2.0), &q);
        assert!((a2 - a1 * 2.0).amax() < 1e-13);
    }

    #[test]
    fn null_space_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=4 {
            let cfg = SwarmConfig::uniform(n);
            let m = cfg.dim_v();
            for _ in 0..50 {
                let q = random_q(&cfg, &mut rng);
                let a = momentum_matrix(&cfg, &q);
                let s = nullspace_basis(&cfg, &q);
                assert!((s.view((0, 0), (m, m)) - DMat::identity(m, m)).amax() == 0.0);
                assert!((&a * &s).amax() <= 1e-10 * norm2(&a) * norm2(&s));
                assert_eq!(numerical_rank(&s, 1e-12), m);
                let r = momentum_map(&cfg, &q);
                let mm = crate::dynamics::mass_matrix(&cfg);
                assert!((r * mm * &s).amax() <= 1e-10 * norm2(&a) * norm2(&s));
            }
        }
    }

    #[test]
    fn rate_vanishes_at_rest() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_q(&cfg, &mut rng);
        let sd = nullspace_basis_rate(&cfg, &q, &DVec::zeros(cfg.dim_q()));
        assert_eq!(sd.amax(), 0.0);
    }

    #[test]
    fn rate_matches_central_difference_along_trajectory() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let q = random_q(&cfg, &mut rng) * 0.5;
            let z = random_q(&cfg, &mut rng);
            let qd = apply_rate_matrix(&cfg, &q, &z);
            let h = 1e-6;
            let fd = (nullspace_basis(&cfg, &(&q + &qd * h)) - nullspace_basis(&cfg, &(&q - &qd * h)))
                / (2.0 * h);
            let an = nullspace_basis_rate(&cfg, &q, &z);
            assert!((fd - &an).amax() <= 1e-7 * an.amax().max(1.0));
        }
    }

    #[test]
    fn differentiated_constraint_vanishes() {
        let cfg = SwarmConfig::uniform(3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let q = random_q(&cfg, &mut rng);
            let z = random_q(&cfg, &mut rng);
            let qd = apply_rate_matrix(&cfg, &q, &z);
            let g = ConstraintGeometry::evaluate(&cfg, &q, &z);
            let adot = momentum_matrix_derivative(&cfg, &q, &qd);
            let res = adot * &g.s + &g.a * &g.s_dot;
            assert!(res.amax() < 1e-8, "{}", res.amax());
        }
    }

    #[test]
    fn force_on_second_satellite_gives_cross_product_torque() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut q = DVec::zeros(cfg.dim_q());
        q[0] = 1.0;
        q[1] = 0.5;
        q[3] = -0.3;
        let pose = Pose::new(&cfg, &q);
        let d = pose.positions[1] - pose.positions[0];
        let f = crate::Vec3::new(0.2, -1.0, 0.4);
        let mut uc = DVec::zeros(cfg.dim_q());
        uc.rows_mut(0, 3).copy_from(&f);
        let rate = momentum_map(&cfg, &q) * uc;
        let expect = d.cross(&f);
        assert!((rate - DVec::from_column_slice(expect.as_slice())).norm() < 1e-14);
        assert!(expect.dot(&d).abs() < 1e-14);
    }
}
