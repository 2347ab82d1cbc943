//! Time-varying oscillatory feedback for the momentum-constrained swarm.
//!
//! The configuration kinematics q̇ = ẐSv are driftless with 6n − 6 input
//! fields Xⱼ = ẐSⱼ, three short of the 6n − 3 coordinates. The missing
//! directions are the brackets of three of those fields. The law solves
//! [X | brackets]·ũ = −(q − q*), applies the first 6n − 6 entries of ũ as
//! direct velocities, and realizes each bracket coefficient with a pair of
//! sinusoids at ωₖ/ε whose product averages to ũₖ times that bracket.
//! The h² terms cancel the drift caused by the state dependence of the
//! oscillation amplitudes. The velocity loop u = −K(v − w) tracks the
//! resulting quasi-velocity w, and u_c = [M]Su keeps total angular
//! momentum unchanged.

use crate::config::SwarmConfig;
use crate::constraint::{
    momentum_matrix_at, nullspace_derivative_at, nullspace_from_a, ConstraintGeometry,
};
use crate::dynamics::{mass_matrix, WrenchSource};
use crate::error::{check_dim, EmffError, Result};
use crate::kinematics::{mrp_rate_matrix, mrp_rate_matrix_derivative, read3, Pose};
use crate::linalg::condition_number;
use crate::{DMat, DVec};

/// How the amplitude scale ρ is built from the error coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoForm {
    /// (Σ r⁴ + Σ σ²)^¼: homogeneous of degree one when positions carry
    /// weight one and attitudes weight two.
    Homogeneous,
    /// Σ r⁴ + Σ σ² without the root.
    Literal,
}

/// Gains and tables of the feedback law.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Velocity-loop gain K (scalar times identity).
    pub gain: f64,
    pub epsilon: f64,
    /// Dither base frequencies ω₁, ω₂, ω₃ in rad/s.
    pub omega: [f64; 3],
    /// Target coordinates q*.
    pub target: DVec,
    pub rho_form: RhoForm,
    /// Below this ρ the dither channels are switched off.
    pub rho_min: f64,
    /// For dither channel k, the zero-based quasi-velocity indices (a, b)
    /// carrying the cosine and sine parts. Channel k realizes [X_a, X_b].
    pub pairing: [(usize, usize); 3],
    /// Apply the h² amplitude-gradient corrections.
    pub corrections: bool,
    /// Factor c moving amplitude between the two parts of each channel:
    /// the cosine part is scaled by cρ and the sine part by β/c, so the
    /// averaged product does not depend on c.
    pub amplitude_ratio: f64,
    /// Rate λ of the averaged error dynamics ė = −λe.
    pub rate: f64,
}

impl ControllerConfig {
    /// ε = 0.1, K = 30, ω = (0.2, 0.4, 0.6) rad/s, target at the origin.
    pub fn reference(cfg: &SwarmConfig) -> Self {
        Self {
            gain: 30.0,
            epsilon: 0.1,
            omega: [0.2, 0.4, 0.6],
            target: DVec::zeros(cfg.dim_q()),
            rho_form: RhoForm::Homogeneous,
            rho_min: 1e-9,
            pairing: [(1, 2), (2, 0), (0, 1)],
            corrections: true,
            amplitude_ratio: 1.0,
            rate: 1.0,
        }
    }

    pub fn validate(&self, cfg: &SwarmConfig) -> Result<()> {
        check_dim(cfg.dim_q(), self.target.len())?;
        if !(self.gain > 0.0) || !(self.epsilon > 0.0) {
            return Err(EmffError::Validation("gain and epsilon must be positive".into()));
        }
        let w = self.omega;
        if w.iter().any(|x| !(x.abs() > 0.0) || !x.is_finite()) {
            return Err(EmffError::Validation("dither frequencies must be nonzero".into()));
        }
        if w[0] == w[1] || w[1] == w[2] || w[0] == w[2] {
            return Err(EmffError::Validation("dither frequencies must be distinct".into()));
        }
        for &(a, b) in &self.pairing {
            if a >= cfg.dim_v() || b >= cfg.dim_v() || a == b {
                return Err(EmffError::Validation(format!("invalid pairing ({a}, {b})")));
            }
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(EmffError::Validation("rate must be positive".into()));
        }
        if !(self.amplitude_ratio > 0.0) || !self.amplitude_ratio.is_finite() {
            return Err(EmffError::Validation("amplitude_ratio must be positive".into()));
        }
        if !(self.rho_min >= 0.0) {
            return Err(EmffError::Validation("rho_min must be non-negative".into()));
        }
        Ok(())
    }

    /// Distinct field indices used by the pairing table.
    fn letters(&self) -> Vec<usize> {
        let mut l: Vec<usize> = self.pairing.iter().flat_map(|&(a, b)| [a, b]).collect();
        l.sort_unstable();
        l.dedup();
        l
    }
}

/// Every intermediate of one control evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecomposition {
    pub u_tilde: DVec,
    pub rho: f64,
    /// Corrections added to the direct quasi-velocity entries (length 6n − 6).
    pub h2: DVec,
    /// Desired quasi-velocity.
    pub w: DVec,
    pub u: DVec,
    pub u_c: DVec,
    /// ρ fell below ρ_min and the dither channels were switched off.
    pub guard_engaged: bool,
}

/// The q-space input fields X = ẐS and their derivatives at one q.
struct FieldGeometry {
    x: DMat,
    /// dX[X_l] for every letter l in the pairing table.
    dx: Vec<(usize, DMat)>,
}

fn zhat_times(cfg: &SwarmConfig, q: &DVec, m: &DMat) -> DMat {
    let mut out = m.clone();
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        let z = mrp_rate_matrix(&read3(q, i));
        let rows = z * m.rows(i, 3);
        out.rows_mut(i, 3).copy_from(&rows);
    }
    out
}

fn dzhat_times(cfg: &SwarmConfig, q: &DVec, dq: &DVec, m: &DMat) -> DMat {
    let mut out = DMat::zeros(m.nrows(), m.ncols());
    for j in 1..=cfg.n() {
        let i = cfg.att_index(j);
        let dz = mrp_rate_matrix_derivative(&read3(q, i), &read3(dq, i));
        let rows = dz * m.rows(i, 3);
        out.rows_mut(i, 3).copy_from(&rows);
    }
    out
}

fn field_geometry(cfg: &SwarmConfig, q: &DVec, letters: &[usize]) -> FieldGeometry {
    let pose = Pose::new(cfg, q);
    let a = momentum_matrix_at(cfg, &pose);
    let s = nullspace_from_a(cfg, &pose, &a);
    let x = zhat_times(cfg, q, &s);
    let dx = letters
        .iter()
        .map(|&l| {
            let dir = x.column(l).into_owned();
            let ds = nullspace_derivative_at(cfg, &pose, &a, &dir);
            (l, dzhat_times(cfg, q, &dir, &s) + zhat_times(cfg, q, &ds))
        })
        .collect();
    FieldGeometry { x, dx }
}

/// X = ẐS: the input vector fields of the configuration kinematics.
pub fn input_fields(cfg: &SwarmConfig, q: &DVec) -> DMat {
    field_geometry(cfg, q, &[]).x
}

/// Directional derivative dX[δq] of the input fields.
pub fn input_fields_derivative(cfg: &SwarmConfig, q: &DVec, dq: &DVec) -> DMat {
    let pose = Pose::new(cfg, q);
    let a = momentum_matrix_at(cfg, &pose);
    let s = nullspace_from_a(cfg, &pose, &a);
    let ds = nullspace_derivative_at(cfg, &pose, &a, dq);
    dzhat_times(cfg, q, dq, &s) + zhat_times(cfg, q, &ds)
}

impl FieldGeometry {
    fn d(&self, l: usize) -> &DMat {
        &self.dx.iter().find(|(k, _)| *k == l).expect("letter present").1
    }

    /// [X_a, X_b] = dX_b[X_a] − dX_a[X_b].
    fn bracket(&self, a: usize, b: usize) -> DVec {
        self.d(a).column(b) - self.d(b).column(a)
    }

    fn matrix(&self, pairing: &[(usize, usize); 3]) -> DMat {
        let (rows, m) = (self.x.nrows(), self.x.ncols());
        let mut g = DMat::zeros(rows, m + 3);
        g.columns_mut(0, m).copy_from(&self.x);
        for (k, &(a, b)) in pairing.iter().enumerate() {
            g.set_column(m + k, &self.bracket(a, b));
        }
        g
    }
}

/// Lie bracket [X_a, X_b] of two input fields at q (analytic).
pub fn field_bracket(cfg: &SwarmConfig, q: &DVec, a: usize, b: usize) -> DVec {
    let mut letters = vec![a, b];
    letters.dedup();
    field_geometry(cfg, q, &letters).bracket(a, b)
}

fn bracket_matrix_raw(cfg: &SwarmConfig, q: &DVec, pairing: &[(usize, usize); 3], letters: &[usize]) -> (DMat, DMat) {
    let fg = field_geometry(cfg, q, letters);
    let g = fg.matrix(pairing);
    (g, fg.x)
}

const BRACKET_CONDITION_LIMIT: f64 = 1e12;

/// [X₁ … X_{6n−6} | [X_{a₁},X_{b₁}] | [X_{a₂},X_{b₂}] | [X_{a₃},X_{b₃}]].
pub fn bracket_matrix(cfg: &SwarmConfig, q: &DVec, pairing: &[(usize, usize); 3]) -> Result<DMat> {
    let ctl = ControllerConfig { pairing: *pairing, ..ControllerConfig::reference(cfg) };
    let (g, _) = bracket_matrix_raw(cfg, q, pairing, &ctl.letters());
    let cond = condition_number(&g);
    if !(cond < BRACKET_CONDITION_LIMIT) {
        return Err(EmffError::SingularBracketMatrix { condition: cond });
    }
    Ok(g)
}

fn solve_bracket(g: &DMat, rhs: &DVec) -> Result<DVec> {
    let lu = g.clone().lu();
    let x = lu
        .solve(rhs)
        .ok_or_else(|| EmffError::SingularBracketMatrix { condition: condition_number(g) })?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(EmffError::SingularBracketMatrix { condition: condition_number(g) });
    }
    Ok(x)
}

/// ũ = −[X | brackets]⁻¹ (q − q*).
pub fn u_tilde(cfg: &SwarmConfig, q: &DVec, ctl: &ControllerConfig) -> Result<DVec> {
    let g = bracket_matrix(cfg, q, &ctl.pairing)?;
    solve_bracket(&g, &((q - &ctl.target) * -ctl.rate))
}

/// ρ of the error coordinates e = q − q*.
pub fn rho(cfg: &SwarmConfig, e: &DVec, form: RhoForm) -> f64 {
    let np = cfg.dim_pos();
    let quartic: f64 = e.rows(0, np).iter().map(|x| x.powi(4)).sum();
    let quad: f64 = e.rows(np, e.len() - np).iter().map(|x| x * x).sum();
    let p = quartic + quad;
    match form {
        RhoForm::Literal => p,
        RhoForm::Homogeneous => p.sqrt().sqrt(),
    }
}

/// ∇ρ with respect to the error coordinates.
pub fn rho_gradient(cfg: &SwarmConfig, e: &DVec, form: RhoForm) -> DVec {
    let np = cfg.dim_pos();
    let mut g = DVec::from_fn(e.len(), |i, _| if i < np { 4.0 * e[i].powi(3) } else { 2.0 * e[i] });
    if let RhoForm::Homogeneous = form {
        let p = rho(cfg, e, RhoForm::Literal);
        if p > 0.0 {
            g *= 0.25 * p.powf(-0.75);
        } else {
            g.fill(0.0);
        }
    }
    g
}

/// Oscillatory inputs (u¹, u²) of the three channels at time t:
/// u¹ₖ = ε^{−½} cos(ωₖt/ε), u²ₖ = 2ωₖ ε^{−½} sin(ωₖt/ε).
pub fn dither_inputs(t: f64, ctl: &ControllerConfig) -> ([f64; 3], [f64; 3]) {
    let amp = ctl.epsilon.sqrt().recip();
    let mut u1 = [0.0; 3];
    let mut u2 = [0.0; 3];
    for k in 0..3 {
        let (s, c) = (ctl.omega[k] * t / ctl.epsilon).sin_cos();
        u1[k] = amp * c;
        u2[k] = 2.0 * ctl.omega[k] * amp * s;
    }
    (u1, u2)
}

/// Lie derivatives of ũ along the letter fields via the derivative of the
/// linear solve: dũ[δ] = −G⁻¹(dG[δ] ũ + δ). dG comes from central
/// differences of the analytic bracket matrix.
fn u_tilde_lie_derivatives(
    cfg: &SwarmConfig,
    q: &DVec,
    g: &DMat,
    x: &DMat,
    ut: &DVec,
    ctl: &ControllerConfig,
    letters: &[usize],
) -> Result<Vec<(usize, DVec)>> {
    let lu = g.clone().lu();
    letters
        .iter()
        .map(|&l| {
            let dir = x.column(l).into_owned();
            let h = 1e-6 * q.norm().max(1.0) / dir.norm().max(1e-300);
            let (gp, _) = bracket_matrix_raw(cfg, &(q + &dir * h), &ctl.pairing, letters);
            let (gm, _) = bracket_matrix_raw(cfg, &(q - &dir * h), &ctl.pairing, letters);
            let dg = (gp - gm) / (2.0 * h);
            let rhs = -(dg * ut + &dir * ctl.rate);
            let d = lu
                .solve(&rhs)
                .ok_or_else(|| EmffError::SingularBracketMatrix { condition: condition_number(g) })?;
            Ok((l, d))
        })
        .collect()
}

/// Evaluates the feedback law at (q, v, t).
pub fn control(
    cfg: &SwarmConfig,
    ctl: &ControllerConfig,
    q: &DVec,
    v: &DVec,
    t: f64,
    geom: &ConstraintGeometry,
) -> Result<ControlDecomposition> {
    let m = cfg.dim_v();
    check_dim(cfg.dim_q(), q.len())?;
    check_dim(m, v.len())?;
    let letters = ctl.letters();
    let (g, x) = bracket_matrix_raw(cfg, q, &ctl.pairing, &letters);
    let e = q - &ctl.target;
    let ut = solve_bracket(&g, &(&e * -ctl.rate))?;
    let r = rho(cfg, &e, ctl.rho_form);

    let mut w = ut.rows(0, m).into_owned();
    let mut h2 = DVec::zeros(m);
    let guard = !(r >= ctl.rho_min) || r == 0.0;
    if guard {
        if r > 0.0 {
            log::debug!("near-origin guard engaged at t = {t:.6}, rho = {r:.3e}");
        }
    } else {
        let beta: Vec<f64> = (0..3).map(|k| ut[m + k] / r).collect();
        if ctl.corrections {
            let grad = rho_gradient(cfg, &e, ctl.rho_form);
            let lie_u = u_tilde_lie_derivatives(cfg, q, &g, &x, &ut, ctl, &letters)?;
            let lie = |l: usize| &lie_u.iter().find(|(k, _)| *k == l).expect("letter").1;
            let lie_rho = |l: usize| grad.dot(&x.column(l));
            for (k, &(a, b)) in ctl.pairing.iter().enumerate() {
                // Averaging leaves ρ(L_{X_a}β)X_b − β(L_{X_b}ρ)X_a behind.
                let l_beta_a = lie(a)[m + k] / r - ut[m + k] * lie_rho(a) / (r * r);
                h2[a] += beta[k] * lie_rho(b);
                h2[b] -= r * l_beta_a;
            }
            w += &h2;
        }
        let (u1, u2) = dither_inputs(t, ctl);
        for (k, &(a, b)) in ctl.pairing.iter().enumerate() {
            w[a] += u1[k] * r * ctl.amplitude_ratio;
            w[b] += u2[k] * beta[k] / ctl.amplitude_ratio;
        }
    }

    let u = (v - &w) * (-ctl.gain);
    let u_c = mass_matrix(cfg) * (&geom.s * &u);
    Ok(ControlDecomposition { u_tilde: ut, rho: r, h2, w, u, u_c, guard_engaged: guard })
}

/// Closed-loop wrench source around [`control`], remembering the most
/// recent decomposition for logging.
#[derive(Debug, Clone)]
pub struct TimeVaryingController {
    pub swarm: SwarmConfig,
    pub config: ControllerConfig,
    pub last: Option<ControlDecomposition>,
    pub guard_events: usize,
}

impl TimeVaryingController {
    pub fn new(swarm: SwarmConfig, config: ControllerConfig) -> Result<Self> {
        config.validate(&swarm)?;
        Ok(Self { swarm, config, last: None, guard_events: 0 })
    }
}

impl WrenchSource for TimeVaryingController {
    fn wrench(&mut self, t: f64, q: &DVec, v: &DVec, geom: &ConstraintGeometry) -> Result<DVec> {
        let d = control(&self.swarm, &self.config, q, v, t, geom)?;
        if d.guard_engaged {
            self.guard_events += 1;
        }
        let u = d.u_c.clone();
        self.last = Some(d);
        Ok(u)
    }
}
