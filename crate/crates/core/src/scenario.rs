//! Scenario files: swarm, controller, initial state and run settings in TOML.
//!
//! ```toml
//! name = "example"
//!
//! [swarm]
//! r_min = 0.1
//!
//! [[swarm.satellites]]
//! id = 1
//! mass = 3.0
//! inertia = [1.0, 2.0, 3.0]      # diagonal, or a 3×3 nested array
//!
//! [controller]
//! gain = 30.0
//! epsilon = 0.1
//! omega = [0.2, 0.4, 0.6]
//!
//! [initial]
//! kind = "random"                # or "explicit" with q = [...]
//! seed = 42
//!
//! [run]
//! dt = 1e-3
//! duration = 40.0
//! ```

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::config::{CoilParams, Satellite, SwarmConfig, MU0};
use crate::controller::{ControllerConfig, RhoForm};
use crate::error::{EmffError, Result};
use crate::kinematics::SwarmState;
use crate::{DVec, Mat3, Vec3};

/// The scenario reproducing the three-satellite reconfiguration experiment.
pub const PAPER_FIG123: &str = include_str!("../scenarios/paper_fig123.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    /// Commanded wrenches are applied as is.
    Direct,
    /// Commanded wrenches are realized through allocated coil dipoles.
    Dipole,
}

impl std::str::FromStr for ControlMode {
    type Err = EmffError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ControlMode::Direct),
            "dipole" => Ok(ControlMode::Dipole),
            other => Err(EmffError::Validation(format!("unknown control mode '{other}' (direct|dipole)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// Target plus a perturbation drawn uniformly from balls of the given
    /// radii, zero velocities.
    Random { seed: u64, position_radius: f64, mrp_radius: f64 },
    Explicit { q: DVec, zeta: DVec },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub dt: f64,
    pub duration: f64,
    pub mode: ControlMode,
    /// Write every k-th step; the final step is always written.
    pub output_stride: usize,
    pub output_dir: PathBuf,
}

impl RunSpec {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub swarm: SwarmConfig,
    pub controller: ControllerConfig,
    pub initial: InitialSpec,
    pub run: RunSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    swarm: RawSwarm,
    #[serde(default)]
    controller: RawController,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    run: RawRun,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSwarm {
    r_min: Option<f64>,
    ac_frequency: Option<f64>,
    mu0: Option<f64>,
    #[serde(default)]
    satellites: Vec<RawSatellite>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSatellite {
    id: Option<u32>,
    mass: Option<f64>,
    inertia: Option<RawInertia>,
    coil: Option<RawCoil>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawInertia {
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoil {
    turns: Option<f64>,
    area: Option<f64>,
    axis: Option<[f64; 3]>,
    current_max: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawController {
    gain: Option<f64>,
    epsilon: Option<f64>,
    omega: Option<[f64; 3]>,
    target: Option<Vec<f64>>,
    rho_form: Option<String>,
    rho_min: Option<f64>,
    pairing: Option<[[usize; 2]; 3]>,
    corrections: Option<bool>,
    rate: Option<f64>,
    amplitude_ratio: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: Option<String>,
    seed: Option<u64>,
    position_radius: Option<f64>,
    mrp_radius: Option<f64>,
    q: Option<Vec<f64>>,
    zeta: Option<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    dt: Option<f64>,
    duration: Option<f64>,
    mode: Option<String>,
    output_stride: Option<usize>,
    output_dir: Option<PathBuf>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, col)
}

fn invalid(msg: impl Into<String>) -> EmffError {
    EmffError::Validation(msg.into())
}

impl Scenario {
    /// Parses and validates scenario text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    EmffError::Parse(format!("line {line}, column {col}: {msg}"))
                }
                None => EmffError::Parse(msg),
            }
        })?;
        Self::from_raw(raw)
    }

    /// The bundled three-satellite experiment.
    pub fn paper_fig123() -> Self {
        Self::from_toml(PAPER_FIG123).expect("bundled scenario is valid")
    }

    fn from_raw(raw: RawScenario) -> Result<Self> {
        let swarm = build_swarm(&raw.swarm)?;
        let controller = build_controller(&raw.controller, &swarm)?;
        let initial = build_initial(&raw.initial, &swarm)?;
        let run = build_run(&raw.run)?;
        Ok(Self { name: raw.name.unwrap_or_else(|| "scenario".into()), swarm, controller, initial, run })
    }

    /// Initial state; `seed` overrides the seed of a random specification.
    pub fn initial_state(&self, seed: Option<u64>) -> Result<SwarmState> {
        match &self.initial {
            InitialSpec::Explicit { q, zeta } => SwarmState::new(&self.swarm, q.clone(), zeta.clone()),
            InitialSpec::Random { seed: s, position_radius, mrp_radius } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(*s));
                let q = sample_around(&self.swarm, &self.controller.target, *position_radius, *mrp_radius, &mut rng);
                Ok(SwarmState::new(&self.swarm, q, DVec::zeros(self.swarm.dim_q()))?)
            }
        }
    }

    /// Seed of a random initial state, if any.
    pub fn seed(&self) -> Option<u64> {
        match self.initial {
            InitialSpec::Random { seed, .. } => Some(seed),
            InitialSpec::Explicit { .. } => None,
        }
    }
}

/// Target plus perturbations drawn uniformly from balls of radius
/// `pos_radius` (each position) and `mrp_radius` (each attitude).
pub fn sample_around<R: Rng>(cfg: &SwarmConfig, target: &DVec, pos_radius: f64, mrp_radius: f64, rng: &mut R) -> DVec {
    let mut q = target.clone();
    let np = cfg.dim_pos();
    for chunk in (0..cfg.dim_q()).step_by(3) {
        let radius = if chunk < np { pos_radius } else { mrp_radius };
        let d = sample_ball(rng) * radius;
        for i in 0..3 {
            q[chunk + i] += d[i];
        }
    }
    q
}

/// Uniform sample from the unit ball by rejection.
fn sample_ball<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text).map_err(|e| match e {
        EmffError::Parse(m) => EmffError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn build_swarm(raw: &RawSwarm) -> Result<SwarmConfig> {
    if raw.satellites.len() < 2 {
        return Err(invalid(format!("swarm.satellites: need at least two satellites, found {}", raw.satellites.len())));
    }
    let mut satellites = Vec::with_capacity(raw.satellites.len());
    for (k, s) in raw.satellites.iter().enumerate() {
        let idx = k + 1;
        let mass = s.mass.ok_or_else(|| invalid(format!("satellite {idx}: missing field 'mass'")))?;
        let inertia = match s.inertia.as_ref().ok_or_else(|| invalid(format!("satellite {idx}: missing field 'inertia'")))? {
            RawInertia::Diagonal(d) => Mat3::from_diagonal(&Vec3::from(*d)),
            RawInertia::Full(m) => Mat3::from_fn(|i, j| m[i][j]),
        };
        let mut coil = CoilParams::default();
        if let Some(c) = &s.coil {
            coil.turns = c.turns.unwrap_or(coil.turns);
            coil.area = c.area.unwrap_or(coil.area);
            coil.axis = c.axis.map(Vec3::from).unwrap_or(coil.axis);
            coil.current_max = c.current_max.unwrap_or(coil.current_max);
        }
        satellites.push(Satellite { id: s.id.unwrap_or(idx as u32), mass, inertia, coil });
    }
    let cfg = SwarmConfig {
        satellites,
        mu0: raw.mu0.unwrap_or(MU0),
        r_min: raw.r_min.unwrap_or(0.1),
        ac_frequency: raw.ac_frequency.unwrap_or(100.0),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn build_controller(raw: &RawController, swarm: &SwarmConfig) -> Result<ControllerConfig> {
    let mut c = ControllerConfig::reference(swarm);
    c.gain = raw.gain.unwrap_or(c.gain);
    c.epsilon = raw.epsilon.unwrap_or(c.epsilon);
    c.omega = raw.omega.unwrap_or(c.omega);
    c.rho_min = raw.rho_min.unwrap_or(c.rho_min);
    c.corrections = raw.corrections.unwrap_or(c.corrections);
    c.rate = raw.rate.unwrap_or(c.rate);
    c.amplitude_ratio = raw.amplitude_ratio.unwrap_or(c.amplitude_ratio);
    if let Some(t) = &raw.target {
        if t.len() != swarm.dim_q() {
            return Err(invalid(format!("controller.target: expected {} entries, got {}", swarm.dim_q(), t.len())));
        }
        c.target = DVec::from_vec(t.clone());
    }
    if let Some(p) = raw.pairing {
        c.pairing = [(p[0][0], p[0][1]), (p[1][0], p[1][1]), (p[2][0], p[2][1])];
    }
    if let Some(f) = &raw.rho_form {
        c.rho_form = match f.as_str() {
            "homogeneous" => RhoForm::Homogeneous,
            "literal" => RhoForm::Literal,
            other => return Err(invalid(format!("controller.rho_form: unknown value '{other}'"))),
        };
    }
    c.validate(swarm).map_err(|e| invalid(format!("controller: {e}")))?;
    Ok(c)
}

fn build_initial(raw: &RawInitial, swarm: &SwarmConfig) -> Result<InitialSpec> {
    match raw.kind.as_deref().unwrap_or("random") {
        "random" => {
            let position_radius = raw.position_radius.unwrap_or(1.0);
            let mrp_radius = raw.mrp_radius.unwrap_or(0.5);
            if !(position_radius >= 0.0) || !(mrp_radius >= 0.0) || mrp_radius > 1.0 {
                return Err(invalid("initial: radii must be non-negative and mrp_radius at most 1"));
            }
            if raw.zeta.is_some() || raw.q.is_some() {
                return Err(invalid("initial: random initial states take no q or zeta (velocities start at zero)"));
            }
            Ok(InitialSpec::Random { seed: raw.seed.unwrap_or(0), position_radius, mrp_radius })
        }
        "explicit" => {
            let q = raw.q.clone().ok_or_else(|| invalid("initial: missing field 'q'"))?;
            let zeta = raw.zeta.clone().unwrap_or_else(|| vec![0.0; swarm.dim_q()]);
            for (name, v) in [("q", &q), ("zeta", &zeta)] {
                if v.len() != swarm.dim_q() {
                    return Err(invalid(format!("initial.{name}: expected {} entries, got {}", swarm.dim_q(), v.len())));
                }
            }
            Ok(InitialSpec::Explicit { q: DVec::from_vec(q), zeta: DVec::from_vec(zeta) })
        }
        other => Err(invalid(format!("initial.kind: unknown value '{other}' (random|explicit)"))),
    }
}

fn build_run(raw: &RawRun) -> Result<RunSpec> {
    let dt = raw.dt.unwrap_or(1e-3);
    let duration = raw.duration.unwrap_or(40.0);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("run.dt must be positive"));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(invalid("run.duration must be positive"));
    }
    let mode = raw.mode.as_deref().unwrap_or("direct").parse()?;
    let output_stride = raw.output_stride.unwrap_or(100);
    if output_stride == 0 {
        return Err(invalid("run.output_stride must be at least 1"));
    }
    Ok(RunSpec {
        dt,
        duration,
        mode,
        output_stride,
        output_dir: raw.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_matches_reference_parameters() {
        let s = Scenario::paper_fig123();
        assert_eq!(s.swarm.n(), 3);
        assert_eq!(s.swarm, SwarmConfig::three_satellite_reference());
        assert_eq!(s.controller.gain, 30.0);
        assert_eq!(s.controller.epsilon, 0.1);
        assert_eq!(s.controller.omega, [0.2, 0.4, 0.6]);
    }

    #[test]
    fn line_and_column_of_offsets() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
