//! Wind force reconstruction from observed marker motion.
//!
//! Each frame interval is solved on its own, in order: starting from a zero
//! force field, minimize
//!
//! ```text
//! L = L_obs + lambda_phys * L_phys
//! ```
//!
//! where `L_obs` is the mean squared marker position error at the end of
//! the interval and `L_phys` penalizes force components perpendicular to
//! the wind guide direction. The state reached under the recovered force is
//! the initial condition of the next interval.

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::adjoint::{backward, forward_record};
use crate::coupling::{guide_from_field, voxelize, GuideField};
use crate::error::{Error, Result};
use crate::field::{ForceField, NodalField};
use crate::lbm::{init_equilibrium, lbm_step, LbmField};
use crate::mpm::kernel::OFFSETS;
use crate::mpm::{particle_stencils, ParticleSet, MASS_EPSILON};
use crate::scene::{Scene, WindForceMode};

/// Marker trajectories: `frames[t][k]` is the position of particle
/// `marker_ids[k]` at frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub marker_ids: Vec<usize>,
    pub frames: Vec<Vec<Vector3<f64>>>,
}

impl ObservationSequence {
    /// Record the markers of a sequence of particle states.
    pub fn from_states(states: &[ParticleSet]) -> Self {
        let marker_ids = states.first().map(|s| s.marker_indices()).unwrap_or_default();
        let frames = states.iter().map(|s| s.positions_of(&marker_ids)).collect();
        Self { marker_ids, frames }
    }

    pub fn timesteps(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    /// Check marker counts and that frame 0 matches `state` within `tolerance`.
    pub fn validate(&self, state: &ParticleSet, tolerance: f64) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidArgument("observation sequence has no frames".into()));
        }
        if self.marker_ids.is_empty() {
            return Err(Error::InvalidArgument("observation sequence has no markers".into()));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.len() != self.marker_ids.len() {
                return Err(Error::Shape(format!(
                    "frame {t} has {} markers, expected {}",
                    frame.len(),
                    self.marker_ids.len()
                )));
            }
        }
        if let Some(&bad) = self.marker_ids.iter().find(|&&p| p >= state.len()) {
            return Err(Error::InvalidArgument(format!("marker id {bad} exceeds particle count {}", state.len())));
        }
        let start = state.positions_of(&self.marker_ids);
        let worst = start.iter().zip(&self.frames[0]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if worst > tolerance {
            return Err(Error::InvalidArgument(format!(
                "frame 0 differs from the initial state by up to {worst:.3e} m (tolerance {tolerance:.1e})"
            )));
        }
        Ok(())
    }
}

/// Mean squared marker position error, m^2.
pub fn observation_loss(sim: &[Vector3<f64>], obs: &[Vector3<f64>]) -> Result<f64> {
    if sim.len() != obs.len() {
        return Err(Error::Shape(format!("{} simulated markers vs {} observed", sim.len(), obs.len())));
    }
    if sim.is_empty() {
        return Ok(0.0);
    }
    Ok(sim.iter().zip(obs).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / sim.len() as f64)
}

/// Root-mean-square marker position error, m.
pub fn marker_rmse(sim: &[Vector3<f64>], obs: &[Vector3<f64>]) -> Result<f64> {
    observation_loss(sim, obs).map(f64::sqrt)
}

/// Forces below this magnitude have no direction for the normalized loss.
const DIRECTION_EPSILON: f64 = 1e-12;

/// Squared component of each nodal force perpendicular to the guide,
/// summed over nodes with a defined guide. With `normalized`, the force is
/// reduced to its unit direction first, so each node contributes
/// `sin^2` of its angle to the guide.
pub fn phys_loss(force: &NodalField, guide: &GuideField, normalized: bool) -> f64 {
    force
        .values
        .iter()
        .zip(&guide.dir)
        .filter_map(|(f, d)| d.map(|d| (f, d)))
        .map(|(f, d)| {
            if normalized {
                let n = f.norm();
                if n < DIRECTION_EPSILON {
                    return 0.0;
                }
                let u = f / n;
                (u - d * u.dot(&d)).norm_squared()
            } else {
                (f - d * f.dot(&d)).norm_squared()
            }
        })
        .sum()
}

/// Gradient of [`phys_loss`] with respect to the force.
pub fn phys_loss_grad(force: &NodalField, guide: &GuideField, normalized: bool) -> NodalField {
    NodalField {
        dims: force.dims,
        values: force
            .values
            .iter()
            .zip(&guide.dir)
            .map(|(f, d)| match d {
                None => Vector3::zeros(),
                Some(d) if normalized => {
                    let n = f.norm();
                    if n < DIRECTION_EPSILON {
                        return Vector3::zeros();
                    }
                    let u = f / n;
                    let c = u.dot(d);
                    (d - u * c) * (-2.0 * c / n)
                }
                Some(d) => (f - d * f.dot(d)) * 2.0,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    /// Steepest descent with a quadratic-fit step and backtracking.
    GradientDescent,
    /// Limited-memory BFGS with backtracking, keeping `memory` pairs.
    Lbfgs { memory: usize },
    Adam { lr: f64, beta1: f64, beta2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Identity,
    /// Inverse diagonal of the Gauss-Newton Hessian of the observation
    /// loss, estimated from the interpolation weights of the markers with
    /// elasticity ignored.
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconOptions {
    pub lambda_phys: f64,
    /// Use unit force directions in the physics loss.
    pub normalized_phys: bool,
    pub max_iters: usize,
    /// Stop when an iteration improves the loss by less than this fraction.
    pub rel_tol: f64,
    /// Stop once the observation loss is at or below this (m^2).
    pub obs_floor: f64,
    pub optimizer: Optimizer,
    pub preconditioner: Preconditioner,
    /// Allowed mismatch between frame 0 and the initial state (m).
    pub obs_tolerance: f64,
}

impl Default for ReconOptions {
    fn default() -> Self {
        Self {
            lambda_phys: 0.1,
            normalized_phys: false,
            max_iters: 200,
            rel_tol: 1e-8,
            obs_floor: 0.0,
            optimizer: Optimizer::Lbfgs { memory: 10 },
            preconditioner: Preconditioner::Jacobi,
            obs_tolerance: 1e-9,
        }
    }
}

/// Loss values of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub obs: f64,
    pub phys: f64,
    pub total: f64,
}

/// Result of one frame interval.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub force: NodalField,
    pub state: ParticleSet,
    pub loss: LossParts,
    pub iterations: usize,
    /// Best-so-far total loss after each iteration, starting with the
    /// zero-force loss.
    pub trace: Vec<f64>,
}

struct Problem<'a> {
    state: &'a ParticleSet,
    obs: &'a [Vector3<f64>],
    marker_ids: &'a [usize],
    guide: Option<&'a GuideField>,
    scene: &'a Scene,
    opts: &'a ReconOptions,
}

/// A loss evaluation with its gradient and the state it reached.
struct Eval {
    force: NodalField,
    parts: LossParts,
    grad: NodalField,
    state: ParticleSet,
}

impl Problem<'_> {
    fn lambda(&self) -> f64 {
        if self.guide.is_some() {
            self.opts.lambda_phys
        } else {
            0.0
        }
    }

    fn evaluate(&self, force: NodalField) -> Result<Eval> {
        let (out, tape) = forward_record(self.state, &force, self.scene, self.scene.substeps)?;
        let sim = out.positions_of(self.marker_ids);
        let obs = observation_loss(&sim, self.obs)?;
        let n = self.marker_ids.len().max(1) as f64;
        let mut x_bar = vec![Vector3::zeros(); out.len()];
        for (k, &p) in self.marker_ids.iter().enumerate() {
            x_bar[p] += (sim[k] - self.obs[k]) * (2.0 / n);
        }
        let v_bar = vec![Vector3::zeros(); out.len()];
        let mut grad = backward(&tape, self.scene, &x_bar, &v_bar)?.force;
        let mut phys = 0.0;
        if let Some(g) = self.guide {
            if self.lambda() > 0.0 {
                phys = phys_loss(&force, g, self.opts.normalized_phys);
                grad.axpy(self.lambda(), &phys_loss_grad(&force, g, self.opts.normalized_phys));
            }
        }
        let parts = LossParts { obs, phys, total: obs + self.lambda() * phys };
        Ok(Eval { force, parts, grad, state: out })
    }

    /// Evaluate, reporting steps that break the simulation as `None`.
    fn try_evaluate(&self, force: NodalField) -> Result<Option<Eval>> {
        match self.evaluate(force) {
            Ok(e) if e.parts.total.is_finite() && e.grad.is_finite() => Ok(Some(e)),
            Ok(_) | Err(Error::Inversion { .. }) | Err(Error::ParticleOutOfDomain { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Per-node inverse Hessian diagonal used to scale search directions.
    fn preconditioner(&self) -> Result<Vec<f64>> {
        let len = self.scene.dims.len();
        if self.opts.preconditioner == Preconditioner::Identity {
            return Ok(vec![1.0; len]);
        }
        let stencils = particle_stencils(self.state, self.scene)?;
        let dims = self.scene.dims;
        let mut mass = vec![0.0; len];
        for (p, s) in stencils.iter().enumerate() {
            for o in OFFSETS {
                let node = dims.checked_index(s.node(o)).expect("stencil inside grid");
                mass[node] += s.weight(o) * self.state.mass[p];
            }
        }
        let per_mass = self.scene.fluid.wind_force == WindForceMode::PerMass;
        // displacement per unit acceleration over a frame held constant
        let t = self.scene.frame_dt;
        let reach = 0.5 * t * t;
        let n = self.marker_ids.len().max(1) as f64;
        let mut diag = vec![0.0; len];
        for &p in self.marker_ids {
            let s = &stencils[p];
            for o in OFFSETS {
                let node = dims.checked_index(s.node(o)).expect("stencil inside grid");
                if mass[node] > MASS_EPSILON {
                    let gain = if per_mass { 1.0 } else { 1.0 / mass[node] };
                    diag[node] += 2.0 / n * (reach * s.weight(o) * gain).powi(2);
                }
            }
        }
        let lambda = 2.0 * self.lambda();
        let fallback = diag.iter().copied().fold(0.0, f64::max).max(lambda);
        Ok(diag
            .into_iter()
            .map(|d| {
                let h = d + lambda;
                if h > 0.0 {
                    1.0 / h
                } else if fallback > 0.0 {
                    1.0 / fallback
                } else {
                    1.0
                }
            })
            .collect())
    }
}

fn scale_nodes(field: &NodalField, diag: &[f64]) -> NodalField {
    NodalField { dims: field.dims, values: field.values.iter().zip(diag).map(|(v, k)| v * *k).collect() }
}

/// Backtracking from `alpha` until the Armijo condition holds.
fn backtrack(problem: &Problem, at: &Eval, dir: &NodalField, slope: f64, mut alpha: f64) -> Result<Option<Eval>> {
    for _ in 0..40 {
        let mut candidate = at.force.clone();
        candidate.axpy(alpha, dir);
        if let Some(e) = problem.try_evaluate(candidate)? {
            if e.parts.total <= at.parts.total + 1e-4 * alpha * slope {
                return Ok(Some(e));
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Step length minimizing a quadratic fitted through the current loss, its
/// slope and one trial evaluation.
fn quadratic_step(problem: &Problem, at: &Eval, dir: &NodalField, slope: f64, trial: f64) -> Result<f64> {
    let mut probe = at.force.clone();
    probe.axpy(trial, dir);
    let Some(e) = problem.try_evaluate(probe)? else { return Ok(0.5 * trial) };
    let curvature = 2.0 * (e.parts.total - at.parts.total - trial * slope) / (trial * trial);
    Ok(if curvature > 0.0 && curvature.is_finite() { -slope / curvature } else { 2.0 * trial })
}

/// Two-loop recursion: approximate inverse Hessian applied to `grad`.
fn lbfgs_direction(grad: &NodalField, pairs: &[(NodalField, NodalField, f64)], diag: &[f64]) -> NodalField {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y);
        alphas.push(a);
    }
    let mut r = scale_nodes(&q, diag);
    if let Some((s, y, _)) = pairs.last() {
        let gamma = s.dot(y) / y.dot(&scale_nodes(y, diag));
        r = r.scaled(gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&r);
        r.axpy(a - b, s);
    }
    r.scaled(-1.0)
}

/// Recover the force of one frame interval.
pub fn reconstruct_step(
    state: &ParticleSet,
    obs_next: &[Vector3<f64>],
    marker_ids: &[usize],
    guide: Option<&GuideField>,
    scene: &Scene,
    opts: &ReconOptions,
) -> Result<StepResult> {
    reconstruct_step_at(state, obs_next, marker_ids, guide, scene, opts, 0)
}

fn reconstruct_step_at(
    state: &ParticleSet,
    obs_next: &[Vector3<f64>],
    marker_ids: &[usize],
    guide: Option<&GuideField>,
    scene: &Scene,
    opts: &ReconOptions,
    timestep: usize,
) -> Result<StepResult> {
    if obs_next.len() != marker_ids.len() {
        return Err(Error::Shape(format!("{} observed markers for {} marker ids", obs_next.len(), marker_ids.len())));
    }
    let problem = Problem { state, obs: obs_next, marker_ids, guide, scene, opts };
    let mut at = problem.evaluate(NodalField::zeros(scene.dims))?;
    if !at.parts.total.is_finite() || !at.grad.is_finite() {
        return Err(Error::Optimization { timestep, reason: "non-finite loss at zero force".into() });
    }
    let diag = problem.preconditioner()?;
    let mut trace = vec![at.parts.total];
    let mut iterations = 0;
    let mut last_step = None::<f64>;
    let mut pairs: Vec<(NodalField, NodalField, f64)> = Vec::new();
    let mut m1 = NodalField::zeros(scene.dims);
    let mut m2 = NodalField::zeros(scene.dims);

    while iterations < opts.max_iters && at.parts.obs > opts.obs_floor && at.grad.max_abs() > 0.0 {
        iterations += 1;
        let previous = at.parts.total;
        let next = match opts.optimizer {
            Optimizer::GradientDescent => {
                let dir = scale_nodes(&at.grad, &diag).scaled(-1.0);
                let slope = at.grad.dot(&dir);
                if !(slope < 0.0) {
                    break;
                }
                let trial = last_step.unwrap_or(1.0);
                let alpha = quadratic_step(&problem, &at, &dir, slope, trial)?;
                let next = backtrack(&problem, &at, &dir, slope, alpha)?;
                if next.is_some() {
                    last_step = Some(alpha);
                }
                next
            }
            Optimizer::Lbfgs { memory } => {
                let mut dir = lbfgs_direction(&at.grad, &pairs, &diag);
                let mut slope = at.grad.dot(&dir);
                if !(slope < 0.0) {
                    pairs.clear();
                    dir = scale_nodes(&at.grad, &diag).scaled(-1.0);
                    slope = at.grad.dot(&dir);
                }
                let next = backtrack(&problem, &at, &dir, slope, 1.0)?;
                if let Some(e) = &next {
                    let mut s = e.force.clone();
                    s.axpy(-1.0, &at.force);
                    let mut y = e.grad.clone();
                    y.axpy(-1.0, &at.grad);
                    let sy = s.dot(&y);
                    if sy > 0.0 {
                        pairs.push((s, y, 1.0 / sy));
                        if pairs.len() > memory.max(1) {
                            pairs.remove(0);
                        }
                    }
                }
                next
            }
            Optimizer::Adam { lr, beta1, beta2 } => {
                let t = iterations as i32;
                let mut candidate = at.force.clone();
                for i in 0..candidate.len() {
                    let g = at.grad.values[i];
                    m1.values[i] = m1.values[i] * beta1 + g * (1.0 - beta1);
                    m2.values[i] = m2.values[i] * beta2 + g.component_mul(&g) * (1.0 - beta2);
                    let mh = m1.values[i] / (1.0 - beta1.powi(t));
                    let vh = m2.values[i] / (1.0 - beta2.powi(t));
                    candidate.values[i] -= mh.zip_map(&vh, |a, b| lr * a / (b.sqrt() + 1e-12));
                }
                let e = problem.evaluate(candidate)?;
                if !e.parts.total.is_finite() || !e.grad.is_finite() {
                    return Err(Error::Optimization { timestep, reason: format!("non-finite loss after {iterations} iterations") });
                }
                Some(e)
            }
        };
        let Some(next) = next else { break };
        at = next;
        let best = trace.last().copied().unwrap_or(f64::INFINITY).min(at.parts.total);
        trace.push(best);
        let line_search = !matches!(opts.optimizer, Optimizer::Adam { .. });
        if line_search && previous - at.parts.total <= opts.rel_tol * previous {
            break;
        }
    }
    Ok(StepResult { force: at.force, state: at.state, loss: at.parts, iterations, trace })
}

/// Where the guide direction comes from during a sequence reconstruction.
#[derive(Debug, Clone)]
pub enum GuideSource {
    /// Advance a lattice wind field alongside the object.
    Lattice,
    /// The same guide for every interval.
    Fixed(GuideField),
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimestepRecord {
    pub timestep: usize,
    pub loss: LossParts,
    pub iterations: usize,
    pub marker_rmse: f64,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Failure {
    pub timestep: usize,
    pub message: String,
    /// The simulation broke down, as opposed to the optimizer.
    pub instability: bool,
}

impl Failure {
    fn new(timestep: usize, e: &Error) -> Self {
        let instability = matches!(
            e,
            Error::Instability { .. } | Error::Inversion { .. } | Error::ParticleOutOfDomain { .. } | Error::SingularDeformation(_)
        );
        Self { timestep, message: e.to_string(), instability }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub lbm_seconds: f64,
    pub optimization_seconds: f64,
}

/// Outcome of a sequence reconstruction. On failure the records up to the
/// failing interval are kept and `failure` is set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconReport {
    pub timesteps: Vec<TimestepRecord>,
    pub options: ReconOptions,
    pub failure: Option<Failure>,
    pub timings: StageTimings,
    #[serde(skip)]
    pub forces: Option<ForceField>,
    #[serde(skip)]
    pub states: Vec<ParticleSet>,
}

impl ReconReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn max_marker_rmse(&self) -> f64 {
        self.timesteps.iter().map(|t| t.marker_rmse).fold(0.0, f64::max)
    }
}

/// Reconstruct every interval of `observations` in order.
pub fn reconstruct_sequence(
    state0: &ParticleSet,
    observations: &ObservationSequence,
    scene: &Scene,
    opts: &ReconOptions,
    guide_source: &GuideSource,
) -> Result<ReconReport> {
    observations.validate(state0, opts.obs_tolerance)?;
    let mut report = ReconReport {
        timesteps: Vec::new(),
        options: *opts,
        failure: None,
        timings: StageTimings::default(),
        forces: Some(ForceField::new(scene.dims)),
        states: vec![state0.clone()],
    };
    let mut lattice: Option<LbmField> = match guide_source {
        GuideSource::Lattice => {
            Some(init_equilibrium(LbmField::new(scene.dims), 1.0, scene.inlet_lattice_velocity())?)
        }
        _ => None,
    };
    let mut state = state0.clone();
    for t in 0..observations.timesteps() {
        let guide = match guide_source {
            GuideSource::Lattice => {
                let started = Instant::now();
                let field = lattice.as_mut().expect("lattice initialized");
                let mask = voxelize(&state, scene);
                let zero = vec![Vector3::zeros(); field.len()];
                let mut stepped = Ok(());
                for _ in 0..scene.substeps {
                    if let Err(e) = lbm_step(field, &zero, &mask.occupied, scene) {
                        stepped = Err(e);
                        break;
                    }
                }
                report.timings.lbm_seconds += started.elapsed().as_secs_f64();
                if let Err(e) = stepped {
                    report.failure = Some(Failure::new(t, &e));
                    return Ok(report);
                }
                Some(guide_from_field(field, scene))
            }
            GuideSource::Fixed(g) => Some(g.clone()),
            GuideSource::None => None,
        };
        let started = Instant::now();
        let result = reconstruct_step_at(
            &state,
            &observations.frames[t + 1],
            &observations.marker_ids,
            guide.as_ref(),
            scene,
            opts,
            t,
        );
        report.timings.optimization_seconds += started.elapsed().as_secs_f64();
        let step = match result {
            Ok(s) => s,
            Err(e) => {
                report.failure = Some(Failure::new(t, &e));
                return Ok(report);
            }
        };
        let rmse = marker_rmse(&step.state.positions_of(&observations.marker_ids), &observations.frames[t + 1])?;
        log::info!(
            "interval {t}: obs {:.3e} phys {:.3e} in {} iterations, marker rmse {rmse:.3e} m",
            step.loss.obs,
            step.loss.phys,
            step.iterations
        );
        report.timesteps.push(TimestepRecord {
            timestep: t,
            loss: step.loss,
            iterations: step.iterations,
            marker_rmse: rmse,
            trace: step.trace,
        });
        if let Some(f) = report.forces.as_mut() {
            f.push(step.force)?;
        }
        state = step.state;
        report.states.push(state.clone());
    }
    Ok(report)
}

/// Forward simulation of `particles` under stored per-interval forces.
/// Returns the state at every frame, starting with the initial one.
pub fn retarget(forces: &ForceField, particles: &ParticleSet, scene: &Scene) -> Result<Vec<ParticleSet>> {
    if forces.dims != scene.dims {
        return Err(Error::Shape(format!(
            "force field grid {:?} does not match scene grid {:?}",
            forces.dims.as_array(),
            scene.dims.as_array()
        )));
    }
    forces.check()?;
    let mut frames = vec![particles.clone()];
    let mut state = particles.clone();
    for f in &forces.frames {
        state = crate::adjoint::advance(&state, f, scene, scene.substeps)?;
        frames.push(state.clone());
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cos_sim: f64,
    pub nmse: f64,
    /// Number of (node, timestep) pairs evaluated.
    pub evaluated: usize,
}

/// Nodal forces at or below this magnitude (N) are left out of the metrics.
pub const METRIC_EPSILON: f64 = 1e-12;

/// Direction metrics over unit-normalized nodal forces, on the nodes where
/// both fields are nonzero.
pub fn eval_metrics(gt: &ForceField, rec: &ForceField) -> Result<Metrics> {
    if gt.dims != rec.dims || gt.timesteps() != rec.timesteps() {
        return Err(Error::Shape(format!(
            "ground truth {:?} x {} vs reconstruction {:?} x {}",
            gt.dims.as_array(),
            gt.timesteps(),
            rec.dims.as_array(),
            rec.timesteps()
        )));
    }
    let mut cos = 0.0;
    let mut err = 0.0;
    let mut count = 0usize;
    for (a, b) in gt.frames.iter().zip(&rec.frames) {
        for (fa, fb) in a.values.iter().zip(&b.values) {
            let (na, nb) = (fa.norm(), fb.norm());
            if na > METRIC_EPSILON && nb > METRIC_EPSILON {
                let (ua, ub) = (fa / na, fb / nb);
                cos += ua.dot(&ub);
                err += (ua - ub).norm_squared();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no node carries a nonzero force in both fields".into()));
    }
    Ok(Metrics { cos_sim: cos / count as f64, nmse: err / count as f64, evaluated: count })
}

/// Mean angle (radians) between two fields over nodes where both are nonzero.
pub fn mean_angular_error(gt: &ForceField, rec: &ForceField) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in gt.frames.iter().zip(&rec.frames) {
        for (fa, fb) in a.values.iter().zip(&b.values) {
            let (na, nb) = (fa.norm(), fb.norm());
            if na > METRIC_EPSILON && nb > METRIC_EPSILON {
                sum += (fa.dot(fb) / (na * nb)).clamp(-1.0, 1.0).acos();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no node carries a nonzero force in both fields".into()));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDims;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn observation_loss_examples() {
        let a = vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.5, 0.5, 0.5)];
        assert_eq!(observation_loss(&a, &a).unwrap(), 0.0);
        let one = [Vector3::zeros()];
        assert!((observation_loss(&[Vector3::new(0.1, 0.0, 0.0)], &one).unwrap() - 0.01).abs() < 1e-17);
        let swapped = vec![a[1], a[0]];
        assert!(observation_loss(&swapped, &a).unwrap() > 0.0);
        assert!(observation_loss(&a, &one).is_err());
    }

    #[test]
    fn phys_loss_examples() {
        let dims = GridDims::cubic(2);
        let guide = GuideField::uniform(dims, Vector3::new(1.0, 0.0, 0.0));
        let parallel = NodalField::from_fn(dims, |c| Vector3::new(c[0] as f64 * 3.0 - 1.0, 0.0, 0.0));
        assert_eq!(phys_loss(&parallel, &guide, false), 0.0);

        let mut f = NodalField::zeros(dims);
        f.values[0] = Vector3::new(0.0, 1.0, 0.0);
        assert!((phys_loss(&f, &guide, false) - 1.0).abs() < 1e-15);
        let s = 0.5f64.sqrt();
        f.values[0] = Vector3::new(s, s, 0.0);
        assert!((phys_loss(&f, &guide, false) - 0.5).abs() < 1e-15);
        assert!((phys_loss(&f, &guide, true) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn calm_nodes_are_skipped() {
        let dims = GridDims::cubic(2);
        let mut u = vec![Vector3::new(0.0, 0.0, 1.0); dims.len()];
        u[0] = Vector3::zeros();
        let guide = GuideField::from_velocity(dims, &u);
        let mut f = NodalField::zeros(dims);
        f.values[0] = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(phys_loss(&f, &guide, false), 0.0);
    }

    fn random_field(rng: &mut ChaCha8Rng, dims: GridDims) -> NodalField {
        NodalField::from_fn(dims, |_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn phys_loss_gradient_matches_finite_differences() {
        let dims = GridDims::cubic(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let guide = GuideField::from_velocity(dims, &random_field(&mut rng, dims).values);
        let f = random_field(&mut rng, dims);
        for normalized in [false, true] {
            let g = phys_loss_grad(&f, &guide, normalized);
            let h = 1e-6;
            for n in 0..dims.len() {
                for k in 0..3 {
                    let mut p = f.clone();
                    p.values[n][k] += h;
                    let mut m = f.clone();
                    m.values[n][k] -= h;
                    let fd = (phys_loss(&p, &guide, normalized) - phys_loss(&m, &guide, normalized)) / (2.0 * h);
                    assert!((fd - g.values[n][k]).abs() < 1e-8, "{normalized} {fd} vs {}", g.values[n][k]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn phys_loss_scales_quadratically_and_ignores_guide_sign(seed in 0u64..1000, k in 0.01f64..100.0) {
            let dims = GridDims::cubic(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&mut rng, dims);
            let guide = GuideField::from_velocity(dims, &u.values);
            let flipped = GuideField::from_velocity(dims, &u.scaled(-1.0).values);
            let f = random_field(&mut rng, dims);
            let base = phys_loss(&f, &guide, false);
            prop_assert!((phys_loss(&f.scaled(k), &guide, false) - k * k * base).abs() <= 1e-12 * k * k * base.max(1.0));
            prop_assert!((phys_loss(&f, &flipped, false) - base).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn metric_bounds_and_identity(seed in 0u64..1000) {
            let dims = GridDims::cubic(3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = ForceField::constant(random_field(&mut rng, dims), 2);
            let b = ForceField::constant(random_field(&mut rng, dims), 2);
            let m = eval_metrics(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&m.cos_sim));
            prop_assert!((0.0..=4.0).contains(&m.nmse));
            prop_assert!((m.nmse - (2.0 - 2.0 * m.cos_sim)).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_examples() {
        let dims = GridDims::cubic(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = ForceField::constant(random_field(&mut rng, dims), 3);
        let same = eval_metrics(&a, &a).unwrap();
        assert!((same.cos_sim - 1.0).abs() < 1e-15 && same.nmse < 1e-15);
        let neg = ForceField { dims, frames: a.frames.iter().map(|f| f.scaled(-1.0)).collect() };
        let opp = eval_metrics(&a, &neg).unwrap();
        assert!((opp.cos_sim + 1.0).abs() < 1e-15 && (opp.nmse - 4.0).abs() < 1e-14);
        let zero = ForceField::constant(NodalField::zeros(dims), 3);
        assert!(eval_metrics(&a, &zero).is_err());
        assert!(eval_metrics(&a, &ForceField::constant(NodalField::zeros(dims), 2)).is_err());
    }
}
