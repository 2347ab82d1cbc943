//! Attitude parameterization and the stacked kinematic map q̇ = Ẑζ.

use crate::config::SwarmConfig;
use crate::error::{check_dim, Result};
use crate::linalg::skew;
use crate::{DMat, DVec, Mat3, Vec3};

/// Modified Rodrigues parameters of one body relative to the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mrp(pub Vec3);

impl Mrp {
    pub fn zero() -> Self {
        Mrp(Vec3::zeros())
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    /// Kinematic matrix Z(σ) with σ̇ = Z(σ) ω.
    pub fn rate_matrix(&self) -> Mat3 {
        mrp_rate_matrix(&self.0)
    }

    /// C^{I/B}: rotates body-frame components into the inertial frame.
    pub fn to_dcm(&self) -> Mat3 {
        mrp_to_dcm(&self.0)
    }

    pub fn shadow_switched(&self) -> Self {
        Mrp(shadow_switch(&self.0))
    }
}

/// Z(σ) = ¼[(1 − σᵀσ)E₃ + 2σ̃ + 2σσᵀ].
pub fn mrp_rate_matrix(sigma: &Vec3) -> Mat3 {
    let s2 = sigma.norm_squared();
    (Mat3::identity() * (1.0 - s2) + skew(sigma) * 2.0 + sigma * sigma.transpose() * 2.0) * 0.25
}

/// Inverse of Z(σ), using Z Zᵀ = ((1 + σᵀσ)/4)² E₃.
pub fn mrp_rate_matrix_inv(sigma: &Vec3) -> Mat3 {
    let k = 4.0 / (1.0 + sigma.norm_squared());
    mrp_rate_matrix(sigma).transpose() * (k * k)
}

/// Directional derivative of Z(σ) along δσ.
pub fn mrp_rate_matrix_derivative(sigma: &Vec3, dsigma: &Vec3) -> Mat3 {
    let dot = sigma.dot(dsigma);
    (Mat3::identity() * (-2.0 * dot)
        + skew(dsigma) * 2.0
        + (dsigma * sigma.transpose() + sigma * dsigma.transpose()) * 2.0)
        * 0.25
}

/// Body-to-inertial rotation C^{I/B}(σ).
pub fn mrp_to_dcm(sigma: &Vec3) -> Mat3 {
    let s2 = sigma.norm_squared();
    let sk = skew(sigma);
    let d = (1.0 + s2) * (1.0 + s2);
    Mat3::identity() + (sk * sk * 8.0 + sk * (4.0 * (1.0 - s2))) / d
}

/// Directional derivative of C^{I/B}(σ) along δσ: C·(Z(σ)⁻¹δσ)~.
pub fn mrp_to_dcm_derivative(sigma: &Vec3, dsigma: &Vec3) -> Mat3 {
    mrp_to_dcm(sigma) * skew(&(mrp_rate_matrix_inv(sigma) * dsigma))
}

/// Maps σ with ‖σ‖ > 1 to its shadow set −σ/σᵀσ.
pub fn shadow_switch(sigma: &Vec3) -> Vec3 {
    let s2 = sigma.norm_squared();
    if s2 > 1.0 {
        -sigma / s2
    } else {
        *sigma
    }
}

/// Generalized coordinates q = [r₂ … rₙ, σ₁ … σₙ] and velocities
/// ζ = [ṙ₂ … ṙₙ, ω₁ … ωₙ]. Positions and rates are inertial; ω is in body axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub q: DVec,
    pub zeta: DVec,
}

impl SwarmState {
    pub fn new(cfg: &SwarmConfig, q: DVec, zeta: DVec) -> Result<Self> {
        check_dim(cfg.dim_q(), q.len())?;
        check_dim(cfg.dim_q(), zeta.len())?;
        Ok(Self { q, zeta })
    }

    pub fn zero(cfg: &SwarmConfig) -> Self {
        Self { q: DVec::zeros(cfg.dim_q()), zeta: DVec::zeros(cfg.dim_q()) }
    }

    /// Quasi-velocity v. Because S has an identity top block, ζ = Sv gives
    /// back v as the first 6n − 6 entries of ζ.
    pub fn quasi_velocity(&self, cfg: &SwarmConfig) -> DVec {
        self.zeta.rows(0, cfg.dim_v()).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.zeta.iter()).all(|x| x.is_finite())
    }

    pub fn position(&self, cfg: &SwarmConfig, j: usize) -> Vec3 {
        read3(&self.q, cfg.pos_index(j))
    }

    pub fn mrp(&self, cfg: &SwarmConfig, j: usize) -> Mrp {
        Mrp(read3(&self.q, cfg.att_index(j)))
    }

    /// Applies the shadow switch to every MRP, returning how many flipped.
    pub fn shadow_switch_all(&mut self, cfg: &SwarmConfig) -> usize {
        shadow_switch_coordinates(cfg, &mut self.q)
    }
}

pub(crate) fn shadow_switch_coordinates(cfg: &SwarmConfig, q: &mut DVec) -> usize {
    let mut flips = 0;
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        let s = read3(q, i);
        if s.norm_squared() > 1.0 {
            write3(q, i, &shadow_switch(&s));
            flips += 1;
        }
    }
    flips
}

pub(crate) fn read3(v: &DVec, i: usize) -> Vec3 {
    Vec3::new(v[i], v[i + 1], v[i + 2])
}

pub(crate) fn write3(v: &mut DVec, i: usize, x: &Vec3) {
    v[i] = x.x;
    v[i + 1] = x.y;
    v[i + 2] = x.z;
}

/// Ẑ = blockdiag(E_{3n−3}, Z(σ₁), …, Z(σₙ)).
pub fn stacked_rate_matrix(cfg: &SwarmConfig, q: &DVec) -> DMat {
    let mut z = DMat::identity(cfg.dim_q(), cfg.dim_q());
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        z.fixed_view_mut::<3, 3>(i, i).copy_from(&mrp_rate_matrix(&read3(q, i)));
    }
    z
}

/// Ẑ applied to a velocity vector without forming the matrix.
pub fn apply_rate_matrix(cfg: &SwarmConfig, q: &DVec, zeta: &DVec) -> DVec {
    let mut out = zeta.clone();
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        write3(&mut out, i, &(mrp_rate_matrix(&read3(q, i)) * read3(zeta, i)));
    }
    out
}

/// Inverse map ζ = Ẑ⁻¹ q̇.
pub fn apply_rate_matrix_inv(cfg: &SwarmConfig, q: &DVec, qdot: &DVec) -> DVec {
    let mut out = qdot.clone();
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        write3(&mut out, i, &(mrp_rate_matrix_inv(&read3(q, i)) * read3(qdot, i)));
    }
    out
}

/// q̇ = Ẑζ.
pub fn q_dot(cfg: &SwarmConfig, state: &SwarmState) -> DVec {
    apply_rate_matrix(cfg, &state.q, &state.zeta)
}

/// Inertial positions of all satellites (r₁ reconstructed with the centre
/// of mass at the origin) and their body-to-inertial rotations.
#[derive(Debug, Clone)]
pub struct Pose {
    pub positions: Vec<Vec3>,
    pub mrps: Vec<Vec3>,
    pub dcms: Vec<Mat3>,
}

impl Pose {
    pub fn new(cfg: &SwarmConfig, q: &DVec) -> Self {
        let n = cfg.n();
        let mut positions = Vec::with_capacity(n);
        let mut first = Vec3::zeros();
        for j in 2..=n {
            first -= read3(q, cfg.pos_index(j)) * cfg.mass(j);
        }
        positions.push(first / cfg.mass(1));
        for j in 2..=n {
            positions.push(read3(q, cfg.pos_index(j)));
        }
        let mrps: Vec<Vec3> = (1..=n).map(|j| read3(q, cfg.att_index(j))).collect();
        let dcms = mrps.iter().map(mrp_to_dcm).collect();
        Self { positions, mrps, dcms }
    }

    /// Inertial rates of all satellites, including the reconstructed ṙ₁.
    pub fn velocities(cfg: &SwarmConfig, zeta: &DVec) -> Vec<Vec3> {
        let n = cfg.n();
        let mut out = Vec::with_capacity(n);
        let mut first = Vec3::zeros();
        for j in 2..=n {
            first -= read3(zeta, cfg.pos_index(j)) * cfg.mass(j);
        }
        out.push(first / cfg.mass(1));
        for j in 2..=n {
            out.push(read3(zeta, cfg.pos_index(j)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rate_matrix_at_origin_is_quarter_identity() {
        assert_relative_eq!(mrp_rate_matrix(&Vec3::zeros()), Mat3::identity() * 0.25);
    }

    #[test]
    fn rate_matrix_unit_x() {
        let z = mrp_rate_matrix(&Vec3::x());
        let expect = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0) * 0.5;
        assert_relative_eq!(z, expect, epsilon = 1e-15);
    }

    #[test]
    fn shadow_examples() {
        assert_eq!(shadow_switch(&Vec3::new(0.5, 0.0, 0.0)), Vec3::new(0.5, 0.0, 0.0));
        assert_relative_eq!(shadow_switch(&Vec3::new(2.0, 0.0, 0.0)), Vec3::new(-0.5, 0.0, 0.0));
    }

    #[test]
    fn dcm_at_origin_is_identity() {
        assert_eq!(mrp_to_dcm(&Vec3::zeros()), Mat3::identity());
    }

    #[test]
    fn dcm_derivative_matches_finite_difference() {
        let s = Vec3::new(0.2, -0.3, 0.4);
        let d = Vec3::new(0.7, 0.1, -0.5);
        let h = 1e-6;
        let fd = (mrp_to_dcm(&(s + d * h)) - mrp_to_dcm(&(s - d * h))) / (2.0 * h);
        assert_relative_eq!(mrp_to_dcm_derivative(&s, &d), fd, epsilon = 1e-8);
        let fdz = (mrp_rate_matrix(&(s + d * h)) - mrp_rate_matrix(&(s - d * h))) / (2.0 * h);
        assert_relative_eq!(mrp_rate_matrix_derivative(&s, &d), fdz, epsilon = 1e-9);
    }

    #[test]
    fn zero_velocity_gives_zero_rate() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut st = SwarmState::zero(&cfg);
        st.q[4] = 0.3;
        st.q[cfg.att_index(2)] = 0.2;
        assert_eq!(q_dot(&cfg, &st), DVec::zeros(cfg.dim_q()));
    }

    #[test]
    fn rate_at_zero_attitude_is_quarter_omega() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut st = SwarmState::zero(&cfg);
        for (k, x) in st.zeta.iter_mut().enumerate() {
            *x = k as f64 * 0.1 - 0.5;
        }
        let qd = q_dot(&cfg, &st);
        let np = cfg.dim_pos();
        for k in 0..cfg.dim_q() {
            let expect = if k < np { st.zeta[k] } else { st.zeta[k] / 4.0 };
            assert_eq!(qd[k], expect);
        }
    }

    #[test]
    fn pose_reconstructs_centre_of_mass() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut q = DVec::zeros(cfg.dim_q());
        q[0] = 1.0;
        q[4] = -2.0;
        let pose = Pose::new(&cfg, &q);
        let com: Vec3 = (1..=3).map(|j| pose.positions[j - 1] * cfg.mass(j)).sum();
        assert!(com.norm() < 1e-15);
    }
}
