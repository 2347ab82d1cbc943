//! Far-field magnetic dipole interaction, AC modulation with first-order
//! averaging, and the inverse map from commanded wrenches to dipole amplitudes.

use crate::config::SwarmConfig;
use crate::error::{check_dim, EmffError, Result};
use crate::{DMat, DVec, Mat3, Vec3};

/// μ₀ and the near-field floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleModel {
    pub mu0: f64,
    pub r_min: f64,
}

impl DipoleModel {
    pub fn from_config(cfg: &SwarmConfig) -> Self {
        Self { mu0: cfg.mu0, r_min: cfg.r_min }
    }

    fn check(&self, r: &Vec3) -> Result<f64> {
        let d = r.norm();
        if d > self.r_min {
            Ok(d)
        } else {
            Err(EmffError::SeparationTooSmall { separation: d, r_min: self.r_min })
        }
    }
}

impl Default for DipoleModel {
    fn default() -> Self {
        Self { mu0: crate::config::MU0, r_min: 0.1 }
    }
}

/// Sine and cosine amplitudes of one satellite's AC dipole, A·m².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DipolePair {
    pub mu_sin: Vec3,
    pub mu_cos: Vec3,
}

/// Force (inertial) and torque on one satellite.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

/// Force exerted on dipole j by dipole i, with `r_ij` pointing from i to j.
pub fn dipole_force(model: &DipoleModel, mu_i: &Vec3, mu_j: &Vec3, r_ij: &Vec3) -> Result<Vec3> {
    let d = model.check(r_ij)?;
    Ok(force_unchecked(model.mu0, mu_i, mu_j, r_ij, d))
}

/// Torque exerted on dipole j by the field of dipole i.
pub fn dipole_torque(model: &DipoleModel, mu_i: &Vec3, mu_j: &Vec3, r_ij: &Vec3) -> Result<Vec3> {
    let d = model.check(r_ij)?;
    Ok(torque_unchecked(model.mu0, mu_i, mu_j, r_ij, d))
}

fn force_unchecked(mu0: f64, mi: &Vec3, mj: &Vec3, r: &Vec3, d: f64) -> Vec3 {
    let k = 3.0 * mu0 / (4.0 * std::f64::consts::PI);
    let d2 = d * d;
    let d5 = d2 * d2 * d;
    let (ir, jr) = (mi.dot(r), mj.dot(r));
    (r * mi.dot(mj) + mj * ir + mi * jr - r * (5.0 * ir * jr / d2)) * (k / d5)
}

fn torque_unchecked(mu0: f64, mi: &Vec3, mj: &Vec3, r: &Vec3, d: f64) -> Vec3 {
    let k = mu0 / (4.0 * std::f64::consts::PI);
    let d3 = d * d * d;
    let field = r * (3.0 * mi.dot(r) / (d3 * d * d)) - mi / d3;
    mj.cross(&field) * k
}

/// μ(t) = μ^sin sin(ω_f t) + μ^cos cos(ω_f t).
pub fn instantaneous_dipole(pair: &DipolePair, t: f64, omega_f: f64) -> Vec3 {
    let (s, c) = (omega_f * t).sin_cos();
    pair.mu_sin * s + pair.mu_cos * c
}

/// Exact wrench on every satellite from instantaneous (DC) dipoles.
pub fn instantaneous_wrench(model: &DipoleModel, dipoles: &[Vec3], positions: &[Vec3]) -> Result<Vec<Wrench>> {
    check_dim(positions.len(), dipoles.len())?;
    let n = positions.len();
    let mut out = vec![Wrench::default(); n];
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let r = positions[j] - positions[i];
            let d = model.check(&r)?;
            out[j].force += force_unchecked(model.mu0, &dipoles[i], &dipoles[j], &r, d);
            out[j].torque += torque_unchecked(model.mu0, &dipoles[i], &dipoles[j], &r, d);
        }
    }
    Ok(out)
}

/// Bilinear form behind the averaged wrench: satellite i's amplitudes come
/// from `src`, satellite j's from `dst`. `averaged_wrench(x) = Q(x, x)`.
fn averaged_bilinear(
    model: &DipoleModel,
    src: &[DipolePair],
    dst: &[DipolePair],
    positions: &[Vec3],
) -> Result<Vec<Wrench>> {
    let n = positions.len();
    let mut out = vec![Wrench::default(); n];
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let r = positions[j] - positions[i];
            let d = model.check(&r)?;
            let (a, b) = (&src[i], &dst[j]);
            out[j].force += (force_unchecked(model.mu0, &a.mu_sin, &b.mu_sin, &r, d)
                + force_unchecked(model.mu0, &a.mu_cos, &b.mu_cos, &r, d))
                * 0.5;
            out[j].torque += (torque_unchecked(model.mu0, &a.mu_sin, &b.mu_sin, &r, d)
                + torque_unchecked(model.mu0, &a.mu_cos, &b.mu_cos, &r, d))
                * 0.5;
        }
    }
    Ok(out)
}

/// Period-averaged force and torque (inertial frame) on each satellite.
pub fn averaged_wrench(model: &DipoleModel, pairs: &[DipolePair], positions: &[Vec3]) -> Result<Vec<Wrench>> {
    check_dim(positions.len(), pairs.len())?;
    averaged_bilinear(model, pairs, pairs, positions)
}

/// Stacks per-satellite wrenches into u_c = [f₂ … fₙ (inertial); τ₁ … τₙ (body)].
pub fn stack_wrenches(cfg: &SwarmConfig, wrenches: &[Wrench], dcms: &[Mat3]) -> DVec {
    let mut u = DVec::zeros(cfg.dim_q());
    for j in 2..=cfg.n() {
        u.rows_mut(cfg.pos_index(j), 3).copy_from(&wrenches[j - 1].force);
    }
    for j in 1..=cfg.n() {
        let tb = dcms[j - 1].transpose() * wrenches[j - 1].torque;
        u.rows_mut(cfg.att_index(j), 3).copy_from(&tb);
    }
    u
}

/// Solver settings for [`allocate_dipoles`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationOptions {
    /// Relative residual ‖w(x) − target‖ / ‖target‖ accepted as converged.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iterations: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub pairs: Vec<DipolePair>,
    /// Relative residual of the returned solution.
    pub residual: f64,
    pub iterations: usize,
}

fn pack(pairs: &[DipolePair]) -> DVec {
    let mut x = DVec::zeros(6 * pairs.len());
    for (k, p) in pairs.iter().enumerate() {
        x.rows_mut(6 * k, 3).copy_from(&p.mu_sin);
        x.rows_mut(6 * k + 3, 3).copy_from(&p.mu_cos);
    }
    x
}

fn unpack(x: &DVec) -> Vec<DipolePair> {
    (0..x.len() / 6)
        .map(|k| DipolePair {
            mu_sin: Vec3::new(x[6 * k], x[6 * k + 1], x[6 * k + 2]),
            mu_cos: Vec3::new(x[6 * k + 3], x[6 * k + 4], x[6 * k + 5]),
        })
        .collect()
}

/// Finds AC dipole amplitudes whose averaged wrench reproduces the stacked
/// target u_c (6n − 3 entries, forces inertial, torques in body axes).
///
/// Damped Gauss-Newton on the bilinear forward model with its exact
/// Jacobian. Fails with `NotConverged` when the residual stays above
/// `opts.tol`, and with `SaturationExceeded` when the solution needs more
/// dipole than a coil can supply.
pub fn allocate_dipoles(
    cfg: &SwarmConfig,
    target: &DVec,
    positions: &[Vec3],
    dcms: &[Mat3],
    guess: &[DipolePair],
    opts: &AllocationOptions,
) -> Result<Allocation> {
    let n = cfg.n();
    check_dim(cfg.dim_q(), target.len())?;
    check_dim(n, positions.len())?;
    check_dim(n, guess.len())?;
    let model = DipoleModel::from_config(cfg);
    let scale = target.norm();
    let denom = if scale > 0.0 { scale } else { 1.0 };

    let eval = |x: &DVec| -> Result<DVec> {
        let p = unpack(x);
        Ok(stack_wrenches(cfg, &averaged_wrench(&model, &p, positions)?, dcms) - target)
    };
    let jacobian = |x: &DVec| -> Result<DMat> {
        let p = unpack(x);
        let mut jac = DMat::zeros(cfg.dim_q(), 6 * n);
        let mut basis = vec![DipolePair::default(); n];
        for k in 0..6 * n {
            let (sat, c) = (k / 6, k % 6);
            let slot = if c < 3 { &mut basis[sat].mu_sin } else { &mut basis[sat].mu_cos };
            slot[c % 3] = 1.0;
            let a = averaged_bilinear(&model, &basis, &p, positions)?;
            let b = averaged_bilinear(&model, &p, &basis, positions)?;
            let sum: Vec<Wrench> = a
                .iter()
                .zip(&b)
                .map(|(a, b)| Wrench { force: a.force + b.force, torque: a.torque + b.torque })
                .collect();
            jac.set_column(k, &stack_wrenches(cfg, &sum, dcms));
            basis[sat] = DipolePair::default();
        }
        Ok(jac)
    };

    let mut x = pack(guess);
    let mut f = eval(&x)?;
    let mut cost = f.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < opts.max_iterations && f.norm() / denom > opts.tol {
        iterations += 1;
        let jac = jacobian(&x)?;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &f;
        let diag_scale = jtj.diagonal().max().max(1e-300);
        let mut improved = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += lambda * diag_scale;
            }
            let Some(chol) = lhs.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -chol.solve(&g);
            let xn = &x + &step;
            let fn_ = eval(&xn)?;
            let cn = fn_.norm_squared();
            if cn < cost {
                x = xn;
                f = fn_;
                cost = cn;
                lambda = (lambda / 3.0).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }

    let residual = f.norm() / denom;
    if !(residual <= opts.tol) {
        return Err(EmffError::NotConverged { residual, iterations });
    }
    let pairs = unpack(&x);
    for (k, p) in pairs.iter().enumerate() {
        let limit = cfg.satellites[k].coil.max_dipole();
        for v in p.mu_sin.iter().chain(p.mu_cos.iter()) {
            if v.abs() > limit {
                return Err(EmffError::SaturationExceeded { satellite: k + 1, value: *v, limit });
            }
        }
    }
    Ok(Allocation { pairs, residual, iterations })
}

/// Closed-loop allocator that warm-starts from the previous solution.
#[derive(Debug, Clone)]
pub struct DipoleAllocator {
    pub options: AllocationOptions,
    last: Option<Vec<DipolePair>>,
    seed: Vec<DipolePair>,
}

impl DipoleAllocator {
    /// `seed` is used for the first solve and after failures; it must not be
    /// zero, since the forward model's Jacobian vanishes there.
    pub fn new(options: AllocationOptions, seed: Vec<DipolePair>) -> Self {
        Self { options, last: None, seed }
    }

    pub fn solve(&mut self, cfg: &SwarmConfig, target: &DVec, positions: &[Vec3], dcms: &[Mat3]) -> Result<Allocation> {
        let guess = self.last.clone().unwrap_or_else(|| self.seed.clone());
        match allocate_dipoles(cfg, target, positions, dcms, &guess, &self.options) {
            Ok(sol) => {
                self.last = Some(sol.pairs.clone());
                Ok(sol)
            }
            Err(e) => {
                self.last = None;
                Err(e)
            }
        }
    }
}
