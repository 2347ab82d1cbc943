//! Equations of motion: the full constrained form with its multiplier, the
//! reduced quasi-velocity form, and fixed-step RK4 time integration.

use crate::config::SwarmConfig;
use crate::constraint::{momentum_matrix_derivative, ConstraintGeometry};
use crate::error::{EmffError, Result};
use crate::kinematics::{apply_rate_matrix, read3, shadow_switch_coordinates, SwarmState};
use crate::linalg::{condition_number, skew};
use crate::{DMat, DVec};

/// [M] = blockdiag(m₂E₃, …, mₙE₃, J₁, …, Jₙ). Independent of q.
pub fn mass_matrix(cfg: &SwarmConfig) -> DMat {
    let mut m = DMat::zeros(cfg.dim_q(), cfg.dim_q());
    for j in 2..=cfg.n() {
        let i = cfg.pos_index(j);
        for k in 0..3 {
            m[(i + k, i + k)] = cfg.mass(j);
        }
    }
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        m.fixed_view_mut::<3, 3>(i, i).copy_from(cfg.inertia(j));
    }
    m
}

/// [C] = blockdiag(0, −(J₁ω₁)~, …, −(Jₙωₙ)~).
pub fn coriolis_matrix(cfg: &SwarmConfig, zeta: &DVec) -> DMat {
    let mut c = DMat::zeros(cfg.dim_q(), cfg.dim_q());
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        let h = cfg.inertia(j) * read3(zeta, i);
        c.fixed_view_mut::<3, 3>(i, i).copy_from(&(-skew(&h)));
    }
    c
}

/// [C]ζ without forming [C]: the gyroscopic terms ωⱼ × Jⱼωⱼ.
pub fn coriolis_force(cfg: &SwarmConfig, zeta: &DVec) -> DVec {
    let mut out = DVec::zeros(cfg.dim_q());
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        let w = read3(zeta, i);
        let g = w.cross(&(cfg.inertia(j) * w));
        out.rows_mut(i, 3).copy_from(&g);
    }
    out
}

/// Reduced dynamics M̄v̇ + C̄v = Sᵀu_c.
#[derive(Debug, Clone)]
pub struct ReducedDynamics {
    pub m_bar: DMat,
    pub c_bar: DMat,
}

impl ReducedDynamics {
    pub fn from_geometry(cfg: &SwarmConfig, geom: &ConstraintGeometry, zeta: &DVec) -> Self {
        let m = mass_matrix(cfg);
        let c = coriolis_matrix(cfg, zeta);
        let st = geom.s.transpose();
        let m_bar = &st * &m * &geom.s;
        let c_bar = &st * (&m * &geom.s_dot + &c * &geom.s);
        Self { m_bar, c_bar }
    }

    /// v̇ for a given generalized wrench. Fails if M̄ is not positive definite.
    pub fn acceleration(&self, v: &DVec, s: &DMat, u_c: &DVec) -> Result<DVec> {
        let rhs = s.transpose() * u_c - &self.c_bar * v;
        let chol = self.m_bar.clone().cholesky().ok_or(EmffError::NotPositiveDefinite)?;
        Ok(chol.solve(&rhs))
    }
}

/// M̄ = SᵀMS and C̄ = Sᵀ(MṠ + CS) at (q, ζ).
pub fn reduced_dynamics(cfg: &SwarmConfig, q: &DVec, zeta: &DVec) -> ReducedDynamics {
    let geom = ConstraintGeometry::evaluate(cfg, q, zeta);
    ReducedDynamics::from_geometry(cfg, &geom, zeta)
}

/// Solves [M]ζ̇ + [C]ζ = u_c − Aᵀη together with Aζ̇ + Ȧζ = 0.
/// Returns (ζ̇, η).
pub fn full_accel(cfg: &SwarmConfig, q: &DVec, zeta: &DVec, u_c: &DVec) -> Result<(DVec, DVec)> {
    let dq = cfg.dim_q();
    let m = mass_matrix(cfg);
    let geom = ConstraintGeometry::evaluate(cfg, q, zeta);
    let a_dot = momentum_matrix_derivative(cfg, q, &apply_rate_matrix(cfg, q, zeta));
    let minv = m.clone().try_inverse().ok_or(EmffError::NotPositiveDefinite)?;
    let schur = &geom.a * &minv * geom.a.transpose();
    let cond = condition_number(&schur);
    if !(cond < 1e12) {
        return Err(EmffError::SingularConstraint { condition: cond });
    }
    let free = &minv * (u_c - coriolis_force(cfg, zeta));
    // A(free − M⁻¹Aᵀη) + Ȧζ = 0
    let rhs = &geom.a * &free + &a_dot * zeta;
    let eta = schur
        .lu()
        .solve(&rhs)
        .ok_or(EmffError::SingularConstraint { condition: cond })?;
    let zeta_dot = free - &minv * geom.a.transpose() * &eta;
    debug_assert_eq!(zeta_dot.len(), dq);
    Ok((zeta_dot, eta))
}

/// Anything that produces the generalized control wrench u_c (6n − 3) from
/// the time, coordinates, quasi-velocity and constraint geometry.
pub trait WrenchSource {
    fn wrench(&mut self, t: f64, q: &DVec, v: &DVec, geom: &ConstraintGeometry) -> Result<DVec>;
}

/// Zero wrench.
pub struct Unforced;

impl WrenchSource for Unforced {
    fn wrench(&mut self, _t: f64, q: &DVec, _v: &DVec, _g: &ConstraintGeometry) -> Result<DVec> {
        Ok(DVec::zeros(q.len()))
    }
}

impl<F> WrenchSource for F
where
    F: FnMut(f64, &DVec, &DVec, &ConstraintGeometry) -> Result<DVec>,
{
    fn wrench(&mut self, t: f64, q: &DVec, v: &DVec, geom: &ConstraintGeometry) -> Result<DVec> {
        self(t, q, v, geom)
    }
}

/// When the control law is sampled inside a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlTiming {
    /// Re-evaluated at every RK4 stage time.
    PerStage,
    /// Sampled at multiples of `period` and held in between.
    ZeroOrderHold { period: f64 },
}

/// Time derivative of the reduced state y = [q; v]:
/// q̇ = ẐSv, M̄v̇ = −C̄v + Sᵀu_c.
pub fn reduced_rhs(
    cfg: &SwarmConfig,
    t: f64,
    q: &DVec,
    v: &DVec,
    wrench: &mut dyn FnMut(f64, &DVec, &DVec, &ConstraintGeometry) -> Result<DVec>,
) -> Result<(DVec, DVec)> {
    let geom = ConstraintGeometry::from_quasi_velocity(cfg, q, v);
    let zeta = &geom.s * v;
    let qdot = apply_rate_matrix(cfg, q, &zeta);
    let u_c = wrench(t, q, v, &geom)?;
    let red = ReducedDynamics::from_geometry(cfg, &geom, &zeta);
    let vdot = red.acceleration(v, &geom.s, &u_c)?;
    Ok((qdot, vdot))
}

/// One classical RK4 step on y with derivative `f`.
pub fn rk4<F>(t: f64, y: &DVec, dt: f64, mut f: F) -> Result<DVec>
where
    F: FnMut(f64, &DVec) -> Result<DVec>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &(y + &k1 * (0.5 * dt)))?;
    let k3 = f(t + 0.5 * dt, &(y + &k2 * (0.5 * dt)))?;
    let k4 = f(t + dt, &(y + &k3 * dt))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Integrator for the reduced closed-loop system.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub dt: f64,
    pub timing: ControlTiming,
    /// Number of MRP shadow switches applied so far.
    pub shadow_switches: usize,
    held: Option<(f64, DVec)>,
}

impl Integrator {
    pub fn new(dt: f64, timing: ControlTiming) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EmffError::Validation(format!("dt must be positive, got {dt}")));
        }
        if let ControlTiming::ZeroOrderHold { period } = timing {
            if !(period > 0.0) {
                return Err(EmffError::Validation("hold period must be positive".into()));
            }
        }
        Ok(Self { dt, timing, shadow_switches: 0, held: None })
    }

    /// Advances `state` from `t` to `t + dt`.
    pub fn step(
        &mut self,
        cfg: &SwarmConfig,
        state: &SwarmState,
        t: f64,
        source: &mut dyn WrenchSource,
    ) -> Result<SwarmState> {
        let dq = cfg.dim_q();
        let dv = cfg.dim_v();
        let mut y = DVec::zeros(dq + dv);
        y.rows_mut(0, dq).copy_from(&state.q);
        y.rows_mut(dq, dv).copy_from(&state.quasi_velocity(cfg));

        let timing = self.timing;
        if let ControlTiming::ZeroOrderHold { period } = timing {
            let due = match &self.held {
                Some((t_next, _)) => t + 1e-12 * period.max(1.0) >= *t_next,
                None => true,
            };
            if due {
                let v = state.quasi_velocity(cfg);
                let geom = ConstraintGeometry::from_quasi_velocity(cfg, &state.q, &v);
                let u = source.wrench(t, &state.q, &v, &geom)?;
                let k = (t / period + 1e-9).floor() + 1.0;
                self.held = Some((k * period, u));
            }
        }
        let held = self.held.as_ref().map(|(_, u)| u.clone());

        let mut wrench = |ts: f64, q: &DVec, v: &DVec, g: &ConstraintGeometry| -> Result<DVec> {
            match (&timing, &held) {
                (ControlTiming::ZeroOrderHold { .. }, Some(u)) => Ok(u.clone()),
                _ => source.wrench(ts, q, v, g),
            }
        };
        let y1 = rk4(t, &y, self.dt, |ts, yy| {
            let q = yy.rows(0, dq).into_owned();
            let v = yy.rows(dq, dv).into_owned();
            let (qd, vd) = reduced_rhs(cfg, ts, &q, &v, &mut wrench)?;
            let mut out = DVec::zeros(dq + dv);
            out.rows_mut(0, dq).copy_from(&qd);
            out.rows_mut(dq, dv).copy_from(&vd);
            Ok(out)
        })?;

        let mut q = y1.rows(0, dq).into_owned();
        let v = y1.rows(dq, dv).into_owned();
        if !(q.iter().chain(v.iter()).all(|x| x.is_finite())) {
            return Err(EmffError::NonFiniteState { t: t + self.dt });
        }
        self.shadow_switches += shadow_switch_coordinates(cfg, &mut q);
        let s = crate::constraint::nullspace_basis(cfg, &q);
        let zeta = s * v;
        Ok(SwarmState { q, zeta })
    }
}

/// One RK4 step of the closed loop, controller sampled per stage.
pub fn integrate_step(
    cfg: &SwarmConfig,
    state: &SwarmState,
    source: &mut dyn WrenchSource,
    t: f64,
    dt: f64,
) -> Result<SwarmState> {
    Integrator::new(dt, ControlTiming::PerStage)?.step(cfg, state, t, source)
}

/// One RK4 step of the full-order model in (q, ζ) with the multiplier
/// solved at every stage. Used as an independent oracle for the reduced path.
pub fn full_order_step(
    cfg: &SwarmConfig,
    state: &SwarmState,
    source: &mut dyn WrenchSource,
    t: f64,
    dt: f64,
) -> Result<SwarmState> {
    let dq = cfg.dim_q();
    let dv = cfg.dim_v();
    let mut y = DVec::zeros(2 * dq);
    y.rows_mut(0, dq).copy_from(&state.q);
    y.rows_mut(dq, dq).copy_from(&state.zeta);
    let y1 = rk4(t, &y, dt, |ts, yy| {
        let q = yy.rows(0, dq).into_owned();
        let zeta = yy.rows(dq, dq).into_owned();
        let v = zeta.rows(0, dv).into_owned();
        let geom = ConstraintGeometry::evaluate(cfg, &q, &zeta);
        let u_c = source.wrench(ts, &q, &v, &geom)?;
        let (zd, _eta) = full_accel(cfg, &q, &zeta, &u_c)?;
        let mut out = DVec::zeros(2 * dq);
        out.rows_mut(0, dq).copy_from(&apply_rate_matrix(cfg, &q, &zeta));
        out.rows_mut(dq, dq).copy_from(&zd);
        Ok(out)
    })?;
    let out = SwarmState { q: y1.rows(0, dq).into_owned(), zeta: y1.rows(dq, dq).into_owned() };
    if !out.is_finite() {
        return Err(EmffError::NonFiniteState { t: t + dt });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::nullspace_basis;
    use crate::{Mat3, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> DVec {
        DVec::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn reference_mass_matrix() {
        let cfg = SwarmConfig::three_satellite_reference();
        let m = mass_matrix(&cfg);
        let mut diag = vec![3.0; 6];
        for k in 1..=3 {
            diag.extend([k as f64, 2.0 * k as f64, 3.0 * k as f64]);
        }
        assert_eq!(m, DMat::from_diagonal(&DVec::from_vec(diag)));
        assert!(m.clone().cholesky().is_some());
    }

    #[test]
    fn coriolis_vanishes_at_rest_and_does_no_work() {
        let cfg = SwarmConfig::three_satellite_reference();
        assert_eq!(coriolis_matrix(&cfg, &DVec::zeros(15)).amax(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let z = rand_vec(15, &mut rng);
            let c = coriolis_matrix(&cfg, &z);
            assert!(z.dot(&(&c * &z)).abs() < 1e-14);
            assert!((&c * &z - coriolis_force(&cfg, &z)).amax() < 1e-14);
        }
    }

    #[test]
    fn symmetric_top_matches_analytic_precession() {
        // Axisymmetric body (J₁ = J₂), torque-free: ω₃ constant and the
        // transverse rate rotates at λ = (J₃ − J₁)ω₃/J₁.
        let (jt, ja) = (2.0, 5.0);
        let j = Mat3::from_diagonal(&Vec3::new(jt, jt, ja));
        let w0 = Vec3::new(0.3, 0.0, 1.2);
        let lam = (ja - jt) * w0.z / jt;
        let mut cfg = SwarmConfig::uniform(2);
        cfg.satellites[0].inertia = j;
        let jinv = j.try_inverse().unwrap();
        let i = cfg.att_index(1);
        let dt = 1e-3;
        let mut w = w0;
        // Jω̇ = −[C_a]ω
        let f = |w: &Vec3| {
            let mut z = DVec::zeros(cfg.dim_q());
            z.rows_mut(i, 3).copy_from(w);
            let cz = coriolis_matrix(&cfg, &z) * z;
            jinv * (-read3(&cz, i))
        };
        for _ in 0..5000 {
            let k1 = f(&w);
            let k2 = f(&(w + k1 * dt / 2.0));
            let k3 = f(&(w + k2 * dt / 2.0));
            let k4 = f(&(w + k3 * dt));
            w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * dt / 6.0;
        }
        let t = 5.0;
        let expect = Vec3::new(0.3 * (lam * t).cos(), 0.3 * (lam * t).sin(), 1.2);
        assert!((w - expect).norm() < 1e-10, "{w} vs {expect}");
    }

    #[test]
    fn reduced_mass_is_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in 2..=4 {
            let cfg = SwarmConfig::uniform(n);
            for _ in 0..20 {
                let q = rand_vec(cfg.dim_q(), &mut rng);
                let z = rand_vec(cfg.dim_q(), &mut rng);
                let red = reduced_dynamics(&cfg, &q, &z);
                let asym = (&red.m_bar - red.m_bar.transpose()).amax();
                assert!(asym <= 1e-12 * red.m_bar.amax());
                let eig = red.m_bar.clone().symmetric_eigen().eigenvalues;
                assert!(eig.min() > 0.0);
            }
        }
    }

    #[test]
    fn equilibrium_has_no_acceleration_or_multiplier() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut q = DVec::zeros(15);
        q[0] = 1.0;
        let (zd, eta) = full_accel(&cfg, &q, &DVec::zeros(15), &DVec::zeros(15)).unwrap();
        assert!(zd.amax() < 1e-15 && eta.amax() < 1e-15);
    }

    #[test]
    fn multiplier_vanishes_for_momentum_neutral_wrench() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = mass_matrix(&cfg);
        for _ in 0..20 {
            let q = rand_vec(15, &mut rng);
            let s = nullspace_basis(&cfg, &q);
            let v = rand_vec(12, &mut rng);
            let zeta = &s * v;
            let uc = &m * &s * rand_vec(12, &mut rng);
            let (zd, eta) = full_accel(&cfg, &q, &zeta, &uc).unwrap();
            assert!(eta.norm() <= 1e-10 * uc.norm().max(1.0), "eta {}", eta.norm());
            let geom = ConstraintGeometry::evaluate(&cfg, &q, &zeta);
            let adot = momentum_matrix_derivative(&cfg, &q, &apply_rate_matrix(&cfg, &q, &zeta));
            let viol = &geom.a * zd + adot * &zeta;
            assert!(viol.norm() < 1e-10);
        }
    }

    #[test]
    fn unforced_rest_stays_put() {
        let cfg = SwarmConfig::three_satellite_reference();
        let mut q = DVec::zeros(15);
        q[0] = 0.7;
        q[8] = 0.1;
        let st = SwarmState { q: q.clone(), zeta: DVec::zeros(15) };
        let next = integrate_step(&cfg, &st, &mut Unforced, 0.0, 1e-2).unwrap();
        assert_eq!(next.q, q);
        assert_eq!(next.zeta.amax(), 0.0);
    }

    #[test]
    fn zero_order_hold_samples_once_per_period() {
        let cfg = SwarmConfig::uniform(2);
        let mut calls = 0usize;
        let mut src = |_t: f64, q: &DVec, _v: &DVec, _g: &ConstraintGeometry| -> Result<DVec> {
            calls += 1;
            Ok(DVec::zeros(q.len()))
        };
        let mut integ = Integrator::new(0.01, ControlTiming::ZeroOrderHold { period: 0.05 }).unwrap();
        let mut st = SwarmState::zero(&cfg);
        for k in 0..20 {
            st = integ.step(&cfg, &st, k as f64 * 0.01, &mut src).unwrap();
        }
        assert_eq!(calls, 4);
    }
}
