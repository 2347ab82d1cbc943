use crate::error::{EmffError, Result};
use crate::{Mat3, Vec3};

/// Vacuum permeability, H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Geometry and drive limits of one satellite's coil set.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilParams {
    pub turns: f64,
    /// Enclosed area, m².
    pub area: f64,
    pub axis: Vec3,
    /// Peak current, A.
    pub current_max: f64,
}

impl CoilParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.turns >= 1.0) {
            return Err(EmffError::Validation(format!("coil turns {} < 1", self.turns)));
        }
        if !(self.area > 0.0) {
            return Err(EmffError::Validation(format!("coil area {} must be positive", self.area)));
        }
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(EmffError::Validation("coil axis must be a unit vector".into()));
        }
        if !(self.current_max > 0.0) {
            return Err(EmffError::Validation("coil current_max must be positive".into()));
        }
        Ok(())
    }

    /// Largest dipole amplitude the coil can produce, A·m².
    pub fn max_dipole(&self) -> f64 {
        self.turns * self.area * self.current_max
    }
}

impl Default for CoilParams {
    fn default() -> Self {
        Self { turns: 400.0, area: 0.5, axis: Vec3::z(), current_max: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Satellite {
    pub id: u32,
    /// kg
    pub mass: f64,
    /// Body-frame inertia, kg·m².
    pub inertia: Mat3,
    pub coil: CoilParams,
}

/// Physical description of the swarm plus global constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig {
    pub satellites: Vec<Satellite>,
    pub mu0: f64,
    /// Near-field floor below which the dipole model is rejected, m.
    pub r_min: f64,
    /// Shared AC drive frequency, rad/s.
    pub ac_frequency: f64,
}

impl SwarmConfig {
    pub fn new(satellites: Vec<Satellite>) -> Result<Self> {
        let cfg = Self { satellites, mu0: MU0, r_min: 0.1, ac_frequency: 100.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Three 3 kg satellites with inertias k·diag(1,2,3), k = 1, 2, 3.
    pub fn three_satellite_reference() -> Self {
        let satellites = (1..=3)
            .map(|k| Satellite {
                id: k,
                mass: 3.0,
                inertia: Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0)) * k as f64,
                coil: CoilParams::default(),
            })
            .collect();
        Self::new(satellites).expect("reference configuration is valid")
    }

    /// Equal masses and scaled inertias for an arbitrary swarm size.
    pub fn uniform(n: usize) -> Self {
        let satellites = (1..=n)
            .map(|k| Satellite {
                id: k as u32,
                mass: 3.0,
                inertia: Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0)) * k as f64,
                coil: CoilParams::default(),
            })
            .collect();
        Self::new(satellites).expect("uniform configuration is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.satellites.len() < 2 {
            return Err(EmffError::Validation("a swarm needs at least two satellites".into()));
        }
        for (k, sat) in self.satellites.iter().enumerate() {
            if self.satellites[..k].iter().any(|o| o.id == sat.id) {
                return Err(EmffError::Validation(format!("satellite {}: duplicate id {}", k + 1, sat.id)));
            }
            if !(sat.mass > 0.0 && sat.mass.is_finite()) {
                return Err(EmffError::Validation(format!("satellite {}: mass must be positive", k + 1)));
            }
            let sym = (sat.inertia - sat.inertia.transpose()).amax();
            if sym > 1e-12 * sat.inertia.amax() {
                return Err(EmffError::Validation(format!("satellite {}: inertia not symmetric", k + 1)));
            }
            if sat.inertia.cholesky().is_none() {
                return Err(EmffError::Validation(format!(
                    "satellite {}: inertia not positive definite",
                    k + 1
                )));
            }
            sat.coil
                .validate()
                .map_err(|e| EmffError::Validation(format!("satellite {}: {e}", k + 1)))?;
        }
        if !(self.r_min > 0.0) || !(self.ac_frequency > 0.0) || !(self.mu0 > 0.0) {
            return Err(EmffError::Validation("r_min, ac_frequency and mu0 must be positive".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.satellites.len()
    }

    /// Dimension of q and ζ: 6n − 3.
    pub fn dim_q(&self) -> usize {
        6 * self.n() - 3
    }

    /// Dimension of the quasi-velocity v: 6n − 6.
    pub fn dim_v(&self) -> usize {
        6 * self.n() - 6
    }

    /// Number of translational coordinates, 3n − 3.
    pub fn dim_pos(&self) -> usize {
        3 * self.n() - 3
    }

    /// Offset of satellite `j`'s (1-based, j ≥ 2) position in q.
    pub fn pos_index(&self, j: usize) -> usize {
        debug_assert!(j >= 2 && j <= self.n());
        3 * (j - 2)
    }

    /// Offset of satellite `j`'s (1-based) MRP in q.
    pub fn att_index(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.n());
        self.dim_pos() + 3 * (j - 1)
    }

    pub fn mass(&self, j: usize) -> f64 {
        self.satellites[j - 1].mass
    }

    pub fn inertia(&self, j: usize) -> &Mat3 {
        &self.satellites[j - 1].inertia
    }

    pub fn total_mass(&self) -> f64 {
        self.satellites.iter().map(|s| s.mass).sum()
    }

    /// Scales every mass and inertia by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.satellites {
            s.mass *= k;
            s.inertia *= k;
        }
        out
    }
}
