//! Closed-loop runs, trajectory output, seed sweeps and controllability
//! reports for a [`Scenario`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::SwarmConfig;
use crate::constraint::ConstraintGeometry;
use crate::controllability::{accessibility_rank, check_bad_brackets, AffineSystem};
use crate::controller::{rho, ControllerConfig, TimeVaryingController};
use crate::dynamics::{ControlTiming, Integrator, WrenchSource};
use crate::error::{EmffError, Result};
use crate::kinematics::{Pose, SwarmState};
use crate::magnetics::{averaged_wrench, stack_wrenches, AllocationOptions, DipoleAllocator, DipoleModel, DipolePair};
use crate::parallel::par_map;
use crate::scenario::{sample_around, ControlMode, Scenario};
use crate::{DVec, Vec3};

/// Schema line at the top of every trajectory file.
pub const TRAJECTORY_SCHEMA: &str = "# emff-trajectory v1";
/// Schema line at the top of every controllability report.
pub const REPORT_SCHEMA: &str = "# emff-controllability v1";

/// Overrides applied on top of the scenario's run section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub mode: Option<ControlMode>,
    pub out_dir: Option<PathBuf>,
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub q: DVec,
    pub zeta: DVec,
    /// ‖q − q*‖.
    pub error_norm: f64,
    pub rho: f64,
    /// |Aζ|, the total angular momentum.
    pub momentum_drift: f64,
    pub uc_norm: f64,
    /// Phase ω₁t/ε of the slowest dither channel, wrapped to [0, 2π).
    pub phase: f64,
}

/// One logged allocation in dipole mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRecord {
    pub t: f64,
    pub commanded: DVec,
    pub pairs: Vec<DipolePair>,
    pub positions: Vec<Vec3>,
    pub residual: f64,
    pub iterations: usize,
}

/// Aggregate figures of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: Option<u64>,
    pub mode: ControlMode,
    pub dt: f64,
    pub duration: f64,
    pub steps: usize,
    pub initial_error: f64,
    pub final_error: f64,
    pub peak_uc: f64,
    pub max_momentum_drift: f64,
    pub shadow_switches: usize,
    pub guard_events: usize,
    pub max_allocation_residual: Option<f64>,
    pub wall_seconds: f64,
}

impl RunSummary {
    /// final ‖q − q*‖ / initial ‖q − q*‖ (zero when both vanish).
    pub fn error_ratio(&self) -> f64 {
        if self.initial_error > 0.0 {
            self.final_error / self.initial_error
        } else {
            0.0
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "seed = {}", self.seed.map(|x| x.to_string()).unwrap_or_else(|| "none".into()));
        let _ = writeln!(s, "mode = {}", mode_name(self.mode));
        let _ = writeln!(s, "dt = {:e}", self.dt);
        let _ = writeln!(s, "duration = {:e}", self.duration);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "initial_error_norm = {:e}", self.initial_error);
        let _ = writeln!(s, "final_error_norm = {:e}", self.final_error);
        let _ = writeln!(s, "error_ratio = {:e}", self.error_ratio());
        let _ = writeln!(s, "peak_uc_norm = {:e}", self.peak_uc);
        let _ = writeln!(s, "max_momentum_drift = {:e}", self.max_momentum_drift);
        let _ = writeln!(s, "shadow_switches = {}", self.shadow_switches);
        let _ = writeln!(s, "guard_events = {}", self.guard_events);
        if let Some(r) = self.max_allocation_residual {
            let _ = writeln!(s, "max_allocation_residual = {r:e}");
        }
        let _ = writeln!(s, "wall_seconds = {:.3}", self.wall_seconds);
        s
    }
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub records: Vec<TrajectoryRecord>,
    pub allocations: Vec<AllocationRecord>,
    pub summary: RunSummary,
    pub final_state: SwarmState,
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct SimAbort {
    pub error: EmffError,
    pub t: f64,
    pub state: SwarmState,
    pub records: Vec<TrajectoryRecord>,
}

fn mode_name(m: ControlMode) -> &'static str {
    match m {
        ControlMode::Direct => "direct",
        ControlMode::Dipole => "dipole",
    }
}

/// Wrench source that realizes the controller's command through allocated
/// coil dipoles and applies the averaged magnetic wrench instead.
struct DipoleRealizer {
    inner: TimeVaryingController,
    allocator: DipoleAllocator,
    model: DipoleModel,
    log_at: Option<f64>,
    log: Vec<AllocationRecord>,
    max_residual: f64,
}

impl WrenchSource for DipoleRealizer {
    fn wrench(&mut self, t: f64, q: &DVec, v: &DVec, geom: &ConstraintGeometry) -> Result<DVec> {
        let commanded = self.inner.wrench(t, q, v, geom)?;
        let cfg = &self.inner.swarm;
        let pose = Pose::new(cfg, q);
        let alloc = self.allocator.solve(cfg, &commanded, &pose.positions, &pose.dcms)?;
        self.max_residual = self.max_residual.max(alloc.residual);
        let realized = stack_wrenches(cfg, &averaged_wrench(&self.model, &alloc.pairs, &pose.positions)?, &pose.dcms);
        if self.log_at == Some(t) {
            self.log_at = None;
            self.log.push(AllocationRecord {
                t,
                commanded,
                pairs: alloc.pairs,
                positions: pose.positions,
                residual: alloc.residual,
                iterations: alloc.iterations,
            });
        }
        Ok(realized)
    }
}

/// Deterministic nonzero starting dipoles for the allocator.
fn allocator_seed(cfg: &SwarmConfig) -> Vec<DipolePair> {
    (0..cfg.n())
        .map(|k| {
            let a = cfg.satellites[k].coil.max_dipole() * 1e-3;
            let s = 1.0 + 0.1 * k as f64;
            DipolePair { mu_sin: Vec3::new(a * s, 0.3 * a, -0.2 * a), mu_cos: Vec3::new(0.1 * a, a / s, 0.4 * a) }
        })
        .collect()
}

fn make_record(cfg: &SwarmConfig, ctl: &ControllerConfig, t: f64, state: &SwarmState, uc_norm: f64) -> TrajectoryRecord {
    let e = &state.q - &ctl.target;
    let geom_a = crate::constraint::momentum_matrix(cfg, &state.q);
    let phase = (ctl.omega[0] * t / ctl.epsilon).rem_euclid(std::f64::consts::TAU);
    TrajectoryRecord {
        t,
        q: state.q.clone(),
        zeta: state.zeta.clone(),
        error_norm: e.norm(),
        rho: rho(cfg, &e, ctl.rho_form),
        momentum_drift: (geom_a * &state.zeta).norm(),
        uc_norm,
        phase,
    }
}

/// Commanded wrench norm at a recorded state (no side effects on the run).
fn command_norm(cfg: &SwarmConfig, ctl: &ControllerConfig, t: f64, state: &SwarmState) -> Result<f64> {
    let v = state.quasi_velocity(cfg);
    let geom = ConstraintGeometry::from_quasi_velocity(cfg, &state.q, &v);
    Ok(crate::controller::control(cfg, ctl, &state.q, &v, t, &geom)?.u_c.norm())
}

/// Integrates the closed loop of `scenario` in memory.
pub fn simulate(scenario: &Scenario, opts: &RunOptions) -> std::result::Result<SimOutput, Box<SimAbort>> {
    let started = Instant::now();
    let cfg = &scenario.swarm;
    let ctl = &scenario.controller;
    let dt = opts.dt.unwrap_or(scenario.run.dt);
    let duration = opts.duration.unwrap_or(scenario.run.duration);
    let mode = opts.mode.unwrap_or(scenario.run.mode);
    let seed = opts.seed.or(scenario.seed());
    let early = |error: EmffError, state: SwarmState| {
        Box::new(SimAbort { error, t: 0.0, state, records: Vec::new() })
    };
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(early(EmffError::Validation("dt and duration must be positive".into()), SwarmState::zero(cfg)));
    }
    let mut state = scenario.initial_state(opts.seed).map_err(|e| early(e, SwarmState::zero(cfg)))?;
    let steps = (duration / dt).round().max(1.0) as usize;
    let stride = scenario.run.output_stride.max(1);

    let controller = TimeVaryingController::new(cfg.clone(), ctl.clone()).map_err(|e| early(e, state.clone()))?;
    let mut dipole = match mode {
        ControlMode::Direct => None,
        ControlMode::Dipole => Some(DipoleRealizer {
            inner: controller.clone(),
            allocator: DipoleAllocator::new(AllocationOptions::default(), allocator_seed(cfg)),
            model: DipoleModel::from_config(cfg),
            log_at: None,
            log: Vec::new(),
            max_residual: 0.0,
        }),
    };
    let mut direct = controller;
    let mut integrator = Integrator::new(dt, ControlTiming::PerStage).map_err(|e| early(e, state.clone()))?;

    let mut records = Vec::with_capacity(steps / stride + 2);
    let mut peak_uc: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    let abort = |error: EmffError, t: f64, state: &SwarmState, records: Vec<TrajectoryRecord>| {
        log::error!("run aborted at t = {t:.6}: {error}");
        Box::new(SimAbort { error, t, state: state.clone(), records })
    };

    let uc0 = match command_norm(cfg, ctl, 0.0, &state) {
        Ok(u) => u,
        Err(e) => return Err(abort(e, 0.0, &state, records)),
    };
    let first = make_record(cfg, ctl, 0.0, &state, uc0);
    let initial_error = first.error_norm;
    peak_uc = peak_uc.max(uc0);
    max_drift = max_drift.max(first.momentum_drift);
    records.push(first);

    for k in 0..steps {
        let t = k as f64 * dt;
        let source: &mut dyn WrenchSource = match dipole.as_mut() {
            Some(d) => {
                if (k + 1) % stride == 0 || k + 1 == steps || k == 0 {
                    d.log_at = Some(t);
                }
                d
            }
            None => &mut direct,
        };
        let next = match integrator.step(cfg, &state, t, source) {
            Ok(s) => s,
            Err(e) => return Err(abort(e, t, &state, records)),
        };
        state = next;
        let t1 = (k + 1) as f64 * dt;
        let last = match dipole.as_ref() {
            Some(d) => d.inner.last.as_ref(),
            None => direct.last.as_ref(),
        };
        let uc = last.map(|d| d.u_c.norm()).unwrap_or(0.0);
        peak_uc = peak_uc.max(uc);
        if (k + 1) % stride == 0 || k + 1 == steps {
            let uc_now = match command_norm(cfg, ctl, t1, &state) {
                Ok(u) => u,
                Err(e) => return Err(abort(e, t1, &state, records)),
            };
            let rec = make_record(cfg, ctl, t1, &state, uc_now);
            max_drift = max_drift.max(rec.momentum_drift);
            records.push(rec);
        }
    }

    let guard_events = match dipole.as_ref() {
        Some(d) => d.inner.guard_events,
        None => direct.guard_events,
    };
    let (allocations, max_allocation_residual) = match dipole {
        Some(d) => (d.log, Some(d.max_residual)),
        None => (Vec::new(), None),
    };
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        seed,
        mode,
        dt,
        duration,
        steps,
        initial_error,
        final_error: records.last().map(|r| r.error_norm).unwrap_or(initial_error),
        peak_uc,
        max_momentum_drift: max_drift,
        shadow_switches: integrator.shadow_switches,
        guard_events,
        max_allocation_residual,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(SimOutput { records, allocations, summary, final_state: state })
}

fn fmt_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

/// Trajectory CSV text: schema comment, header row, one row per record.
pub fn trajectory_csv(cfg: &SwarmConfig, records: &[TrajectoryRecord]) -> String {
    let nq = cfg.dim_q();
    let mut s = String::new();
    s.push_str(TRAJECTORY_SCHEMA);
    s.push('\n');
    let mut header = vec!["t".to_string()];
    header.extend((1..=nq).map(|i| format!("q{i}")));
    header.extend((1..=nq).map(|i| format!("zeta{i}")));
    header.extend(["error_norm", "rho", "momentum_drift", "uc_norm", "phase"].map(String::from));
    s.push_str(&header.join(","));
    s.push('\n');
    for r in records {
        let vals = std::iter::once(r.t)
            .chain(r.q.iter().copied())
            .chain(r.zeta.iter().copied())
            .chain([r.error_norm, r.rho, r.momentum_drift, r.uc_norm, r.phase]);
        fmt_row(&mut s, vals);
    }
    s
}

/// Per-figure plot data: relative positions, attitudes, position triples.
pub fn figure_files(cfg: &SwarmConfig, records: &[TrajectoryRecord]) -> Vec<(&'static str, String)> {
    let n = cfg.n();
    let mut rel = String::from("t");
    let mut att = String::from("t");
    let mut pos = String::from("t");
    for j in 2..=n {
        for c in ["x", "y", "z"] {
            let _ = write!(rel, ",r{j}{c}_minus_r1{c}");
        }
    }
    for j in 1..=n {
        for c in ["1", "2", "3"] {
            let _ = write!(att, ",sigma{j}_{c}");
        }
        for c in ["x", "y", "z"] {
            let _ = write!(pos, ",r{j}{c}");
        }
    }
    rel.push('\n');
    att.push('\n');
    pos.push('\n');
    for r in records {
        let pose = Pose::new(cfg, &r.q);
        let rel_vals = (1..n).flat_map(|j| {
            let d = pose.positions[j] - pose.positions[0];
            [d.x, d.y, d.z]
        });
        fmt_row(&mut rel, std::iter::once(r.t).chain(rel_vals));
        let np = cfg.dim_pos();
        fmt_row(&mut att, std::iter::once(r.t).chain(r.q.rows(np, r.q.len() - np).iter().copied()));
        let pos_vals = pose.positions.iter().flat_map(|p| [p.x, p.y, p.z]);
        fmt_row(&mut pos, std::iter::once(r.t).chain(pos_vals));
    }
    vec![("fig1_relative_positions.csv", rel), ("fig2_attitudes.csv", att), ("fig3_positions.csv", pos)]
}

/// Allocation log text: commanded wrench, dipoles and positions per entry.
pub fn allocation_csv(cfg: &SwarmConfig, log: &[AllocationRecord]) -> String {
    let n = cfg.n();
    let mut s = String::from("# emff-allocation v1\nt,residual,iterations");
    for i in 1..=cfg.dim_q() {
        let _ = write!(s, ",uc{i}");
    }
    for j in 1..=n {
        for part in ["sin", "cos"] {
            for c in ["x", "y", "z"] {
                let _ = write!(s, ",mu{j}_{part}_{c}");
            }
        }
        for c in ["x", "y", "z"] {
            let _ = write!(s, ",r{j}{c}");
        }
    }
    s.push('\n');
    for a in log {
        let _ = write!(s, "{:e},{:e},{}", a.t, a.residual, a.iterations);
        for v in a.commanded.iter() {
            let _ = write!(s, ",{v:e}");
        }
        for (p, r) in a.pairs.iter().zip(&a.positions) {
            for v in p.mu_sin.iter().chain(p.mu_cos.iter()).chain(r.iter()) {
                let _ = write!(s, ",{v:e}");
            }
        }
        s.push('\n');
    }
    s
}

/// Snapshot of the state at which a run stopped.
fn abort_text(a: &SimAbort) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "error = {}", a.error);
    let _ = writeln!(s, "t = {:e}", a.t);
    let join = |v: &DVec| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
    let _ = writeln!(s, "q = [{}]", join(&a.state.q));
    let _ = writeln!(s, "zeta = [{}]", join(&a.state.zeta));
    s
}

/// Output files written by [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub trajectory: PathBuf,
    pub summary: PathBuf,
    pub figures: Vec<PathBuf>,
    pub allocation: Option<PathBuf>,
}

/// Runs the scenario and writes trajectory, summary and plot files into the
/// output directory. On a numerical abort the records so far and a state
/// snapshot (`abort.txt`) are written before the error is returned.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<(RunSummary, RunFiles)> {
    let dir = opts.out_dir.clone().unwrap_or_else(|| scenario.run.output_dir.clone());
    fs::create_dir_all(&dir)?;
    let cfg = &scenario.swarm;
    let trajectory = dir.join("trajectory.csv");
    match simulate(scenario, opts) {
        Ok(out) => {
            fs::write(&trajectory, trajectory_csv(cfg, &out.records))?;
            let summary = dir.join("summary.txt");
            fs::write(&summary, out.summary.to_text())?;
            let mut figures = Vec::new();
            for (name, text) in figure_files(cfg, &out.records) {
                let p = dir.join(name);
                fs::write(&p, text)?;
                figures.push(p);
            }
            let allocation = if out.summary.mode == ControlMode::Dipole {
                let p = dir.join("allocation.csv");
                fs::write(&p, allocation_csv(cfg, &out.allocations))?;
                Some(p)
            } else {
                None
            };
            Ok((out.summary, RunFiles { trajectory, summary, figures, allocation }))
        }
        Err(abort) => {
            fs::write(&trajectory, trajectory_csv(cfg, &abort.records))?;
            fs::write(dir.join("abort.txt"), abort_text(&abort))?;
            Err(abort.error)
        }
    }
}

/// Parses `a..b` (exclusive end) or `a..=b`.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || EmffError::Validation(format!("invalid seed range '{s}' (expected a..b or a..=b)"));
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    let end = if inclusive { b.checked_add(1).ok_or_else(bad)? } else { b };
    if end <= a {
        return Err(bad());
    }
    Ok((a..end).collect())
}

/// Outcome of one seed in a sweep.
#[derive(Debug)]
pub struct SweepEntry {
    pub seed: u64,
    pub outcome: Result<RunSummary>,
}

/// Runs one trajectory per seed concurrently, each in `out/seed_<N>/`, and
/// writes `sweep.csv` with one row per seed.
pub fn sweep(scenario: &Scenario, seeds: &[u64], opts: &RunOptions) -> Result<Vec<SweepEntry>> {
    let dir = opts.out_dir.clone().unwrap_or_else(|| scenario.run.output_dir.clone());
    fs::create_dir_all(&dir)?;
    let entries: Vec<SweepEntry> = par_map(seeds, |&seed| {
        let o = RunOptions { seed: Some(seed), out_dir: Some(dir.join(format!("seed_{seed}"))), ..opts.clone() };
        SweepEntry { seed, outcome: run(scenario, &o).map(|(s, _)| s) }
    });
    let mut s = String::from("seed,status,initial_error_norm,final_error_norm,error_ratio,peak_uc_norm,max_momentum_drift\n");
    for e in &entries {
        match &e.outcome {
            Ok(r) => {
                let _ = writeln!(
                    s,
                    "{},ok,{:e},{:e},{:e},{:e},{:e}",
                    e.seed,
                    r.initial_error,
                    r.final_error,
                    r.error_ratio(),
                    r.peak_uc,
                    r.max_momentum_drift
                );
            }
            Err(err) => {
                let _ = writeln!(s, "{},\"{}\",,,,,", e.seed, err.to_string().replace('"', "'"));
            }
        }
    }
    fs::write(dir.join("sweep.csv"), s)?;
    Ok(entries)
}

/// Result of the controllability check at one sampled state.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    Checked { rank: usize, singular_values: Vec<f64>, bad: Vec<(String, f64)> },
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityReport {
    pub scenario: String,
    pub dim: usize,
    pub seed: u64,
    pub samples: Vec<SampleOutcome>,
}

impl ControllabilityReport {
    fn sample_passes(&self, s: &SampleOutcome) -> Option<bool> {
        match s {
            SampleOutcome::Checked { rank, bad, .. } => {
                Some(*rank == self.level_set_dim() && bad.iter().all(|(_, r)| *r <= crate::controllability::SPAN_TOLERANCE))
            }
            SampleOutcome::Skipped(_) => None,
        }
    }

    /// Dimension of the momentum level set, the largest rank any bracket
    /// set can reach (see [`crate::controllability::RankReport`]).
    pub fn level_set_dim(&self) -> usize {
        self.dim - 3
    }

    /// True when every checked sample reaches the level-set rank and has
    /// spanned bad brackets, and at least one sample was checked.
    pub fn passed(&self) -> bool {
        let checked: Vec<bool> = self.samples.iter().filter_map(|s| self.sample_passes(s)).collect();
        !checked.is_empty() && checked.iter().all(|&p| p)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{REPORT_SCHEMA}");
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "state_dimension = {}", self.dim);
        let _ = writeln!(s, "level_set_dimension = {}", self.level_set_dim());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "samples = {}", self.samples.len());
        for (k, sample) in self.samples.iter().enumerate() {
            let _ = writeln!(s, "\n[sample {}]", k + 1);
            match sample {
                SampleOutcome::Checked { rank, singular_values, bad } => {
                    let pass = self.sample_passes(sample) == Some(true);
                    let _ = writeln!(s, "status = {}", if pass { "PASS" } else { "FAIL" });
                    let _ = writeln!(s, "rank = {rank}");
                    let _ = writeln!(s, "full_state_rank = {}", *rank == self.dim);
                    let sv: Vec<String> = singular_values.iter().map(|x| format!("{x:.6e}")).collect();
                    let _ = writeln!(s, "singular_values = [{}]", sv.join(", "));
                    for (w, r) in bad {
                        let _ = writeln!(s, "bad {w} residual = {r:.3e}");
                    }
                }
                SampleOutcome::Skipped(note) => {
                    let _ = writeln!(s, "status = SKIPPED");
                    let _ = writeln!(s, "note = {note}");
                }
            }
        }
        let checked = self.samples.iter().filter(|x| matches!(x, SampleOutcome::Checked { .. })).count();
        let _ = writeln!(s, "\n[summary]");
        let _ = writeln!(s, "checked = {checked}");
        let _ = writeln!(s, "skipped = {}", self.samples.len() - checked);
        let _ = writeln!(s, "status = {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

/// Samples zero-velocity states around the target (same distribution as a
/// random initial state) and checks accessibility rank and the bad brackets
/// up to degree three at each.
pub fn report_controllability(scenario: &Scenario, samples: usize, seed: u64) -> Result<ControllabilityReport> {
    let sys = AffineSystem::new(scenario.swarm.clone())?;
    let (pr, mr) = match scenario.initial {
        crate::scenario::InitialSpec::Random { position_radius, mrp_radius, .. } => (position_radius, mrp_radius),
        crate::scenario::InitialSpec::Explicit { .. } => (1.0, 0.5),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<DVec> = (0..samples)
        .map(|_| {
            let q = sample_around(&scenario.swarm, &scenario.controller.target, pr, mr, &mut rng);
            sys.join(&q, &DVec::zeros(q.len()))
        })
        .collect();
    let outcomes = par_map(&states, |x| {
        let rank = accessibility_rank(&sys, x).and_then(|r| Ok((r, check_bad_brackets(&sys, x, 3)?)));
        match rank {
            Ok((r, bad)) => SampleOutcome::Checked {
                rank: r.rank,
                singular_values: r.singular_values,
                bad: bad.into_iter().map(|b| (b.word.to_string(), b.residual)).collect(),
            },
            Err(e) => SampleOutcome::Skipped(e.to_string()),
        }
    });
    Ok(ControllabilityReport { scenario: scenario.name.clone(), dim: sys.dim(), seed, samples: outcomes })
}

/// Writes the report to `path`.
pub fn write_report(report: &ControllabilityReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, report.to_text())?;
    Ok(())
}
