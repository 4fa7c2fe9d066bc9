//! Command implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windform::adjoint::{backward, finite_difference_grad, forward_record, relative_error};
use windform::inverse::{
    eval_metrics, reconstruct_sequence, retarget as retarget_forces, GuideSource, ObservationSequence, Optimizer,
    ReconOptions,
};
use windform::io;
use windform::mpm::{particle_stencils, ExecMode, ParticleSet, FLAG_INTERNAL, FLAG_MARKER, MASS_EPSILON};
use windform::scene::WindForceMode;
use windform::simulate::{simulate as run_simulation, FrameSummary, ForceSource};
use windform::{NodalField, Scene};

use crate::manifest::RunManifest;
use crate::{
    Common, DensifyArgs, EvalArgs, Exit, GradcheckArgs, GuideKind, ObjectArgs, OptimizerKind, ReconstructArgs, RetargetArgs,
    SimulateArgs,
};

fn invalid(message: String) -> anyhow::Error {
    Exit { code: 2, message }.into()
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(invalid(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn load_scene(path: &Path, manifest: &mut RunManifest) -> Result<Scene> {
    require_file(path, "scene file")?;
    manifest.scene = Some(path.to_path_buf());
    Scene::load(path).with_context(|| format!("loading scene {}", path.display()))
}

fn mode(common: &Common) -> ExecMode {
    if common.deterministic {
        ExecMode::Serial
    } else {
        ExecMode::Parallel
    }
}

/// A block of particles spanning the central quarter of the domain.
fn default_block(scene: &Scene) -> Result<ParticleSet> {
    let center = scene.domain_min + scene.domain_size() * 0.5;
    let half = scene.domain_size() * 0.125;
    Ok(ParticleSet::block(scene, center - half, center + half, 0.5 * scene.dx, 0)?)
}

fn load_particles(args: &ObjectArgs, scene: &Scene, manifest: &mut RunManifest) -> Result<ParticleSet> {
    let particles = match &args.particles {
        None => default_block(scene)?,
        Some(path) => {
            require_file(path, "particle file")?;
            manifest.input(path);
            let bytes = fs::read(path)?;
            if bytes.starts_with(b"DWPT") {
                io::read_particles_from(bytes.as_slice()).with_context(|| format!("reading {}", path.display()))?
            } else {
                let points = io::read_points_csv(bytes.as_slice()).with_context(|| format!("reading {}", path.display()))?;
                let spacing = args.spacing.unwrap_or(0.5 * scene.dx);
                let material = scene.materials.first().ok_or_else(|| invalid("scene has no material".into()))?;
                let vol = spacing.powi(3);
                let mut set = ParticleSet::new();
                for p in points {
                    set.push(p, material.density * vol, vol, material.id, FLAG_MARKER);
                }
                set
            }
        }
    };
    if particles.is_empty() {
        return Err(invalid("the object has no particles".into()));
    }
    particles.check_consistent()?;
    if let Err(e) = particle_stencils(&particles, scene) {
        return Err(invalid(format!("particles do not fit the scene grid: {e}")));
    }
    if let Some(id) = particles.material_id.iter().find(|id| scene.material(**id).is_none()) {
        return Err(invalid(format!("particles reference material {id}, which the scene does not define")));
    }
    Ok(particles)
}

fn write_frames(dir: &Path, states: &[ParticleSet]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (t, s) in states.iter().enumerate() {
        io::write_particles(dir.join(format!("frame_{t:04}.dwpt")), s)?;
    }
    Ok(())
}

fn write_summaries(path: &Path, rows: &[FrameSummary]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frame,time,kinetic_energy,centroid_x,centroid_y,centroid_z,max_displacement")?;
    for r in rows {
        let c = r.centroid;
        writeln!(w, "{},{:?},{:?},{:?},{:?},{:?},{:?}", r.frame, r.time, r.kinetic_energy, c[0], c[1], c[2], r.max_displacement)?;
    }
    Ok(w.flush()?)
}

fn write_trajectory(out: &Path, scene: &Scene, states: &[ParticleSet], manifest: &mut RunManifest) -> Result<()> {
    write_frames(&out.join("frames"), states)?;
    manifest.output(&out.join("frames"));
    let markers = out.join("markers.csv");
    io::write_markers(&markers, &ObservationSequence::from_states(states))?;
    manifest.output(&markers);
    let initial = &states[0];
    let rows: Vec<FrameSummary> = states
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let c = s.centroid();
            FrameSummary {
                frame: t,
                time: t as f64 * scene.frame_dt,
                kinetic_energy: windform::simulate::kinetic_energy(s),
                centroid: [c[0], c[1], c[2]],
                max_displacement: s.x.iter().zip(&initial.x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max),
            }
        })
        .collect();
    let energy = out.join("energy.csv");
    write_summaries(&energy, &rows)?;
    manifest.output(&energy);
    Ok(())
}

pub fn simulate(args: &SimulateArgs, common: &Common, manifest: &mut RunManifest) -> Result<()> {
    let scene = load_scene(&args.object.config, manifest)?;
    let particles = load_particles(&args.object, &scene, manifest)?;
    let source = match (&args.force_field, args.no_wind) {
        (Some(path), _) => {
            require_file(path, "force field")?;
            manifest.input(path);
            ForceSource::Stored(io::read_force_field(path)?)
        }
        (None, true) => ForceSource::None,
        (None, false) => ForceSource::Wind,
    };
    let frames_dir = args.out.join("frames");
    let fields_dir = args.out.join("fields");
    fs::create_dir_all(&frames_dir)?;
    if args.dump_fields {
        fs::create_dir_all(&fields_dir)?;
    }
    manifest.output(&frames_dir);
    let sim = run_simulation(&scene, &particles, args.frames, &source, mode(common), |t, state, lattice| {
        io::write_particles(frames_dir.join(format!("frame_{t:04}.dwpt")), state)?;
        if let (true, Some(field)) = (args.dump_fields, lattice) {
            io::GridDump::from_lbm(field).write(fields_dir.join(format!("lattice_{t:04}.dwgf")))?;
        }
        Ok(())
    })?;
    if args.dump_fields && matches!(source, ForceSource::Wind) {
        manifest.output(&fields_dir);
    }
    let forces = args.out.join("forces.dwff");
    io::write_force_field(&forces, &sim.forces)?;
    manifest.output(&forces);
    let markers = args.out.join("markers.csv");
    io::write_markers(&markers, &ObservationSequence::from_states(&sim.states))?;
    manifest.output(&markers);
    let energy = args.out.join("energy.csv");
    write_summaries(&energy, &sim.summaries)?;
    manifest.output(&energy);
    manifest.timings.lbm_seconds = sim.timings.lbm_seconds;
    manifest.timings.mpm_seconds = sim.timings.mpm_seconds;
    manifest.timings.coupling_seconds = sim.timings.coupling_seconds;
    manifest.timings.lbm_steps = sim.timings.lbm_steps;
    manifest.timings.mpm_steps = sim.timings.mpm_steps;
    println!(
        "simulated {} frames of {} particles: LBM {:.2e} s/step, MPM {:.2e} s/step",
        args.frames,
        particles.len(),
        sim.timings.lbm_per_step(),
        sim.timings.mpm_per_step()
    );
    Ok(())
}

pub fn reconstruct(args: &ReconstructArgs, _common: &Common, manifest: &mut RunManifest) -> Result<()> {
    let scene = load_scene(&args.object.config, manifest)?;
    let particles = load_particles(&args.object, &scene, manifest)?;
    require_file(&args.observations, "observation file")?;
    manifest.input(&args.observations);
    let obs = io::read_markers(&args.observations).with_context(|| format!("reading {}", args.observations.display()))?;
    let optimizer = match args.optimizer {
        OptimizerKind::Gd => Optimizer::GradientDescent,
        OptimizerKind::Lbfgs => Optimizer::Lbfgs { memory: 10 },
        OptimizerKind::Adam => Optimizer::Adam { lr: args.lr, beta1: 0.9, beta2: 0.999 },
    };
    if !(args.lambda_phys >= 0.0) {
        return Err(invalid(format!("--lambda-phys must be non-negative, got {}", args.lambda_phys)));
    }
    let opts = ReconOptions {
        lambda_phys: args.lambda_phys,
        normalized_phys: args.normalized_phys,
        max_iters: args.max_iters,
        rel_tol: args.rel_tol,
        optimizer,
        ..Default::default()
    };
    let guide = match (args.guide, args.lambda_phys > 0.0) {
        (GuideKind::Lattice, true) => GuideSource::Lattice,
        _ => GuideSource::None,
    };
    let report = reconstruct_sequence(&particles, &obs, &scene, &opts, &guide)?;
    fs::create_dir_all(&args.out)?;
    if let Some(forces) = &report.forces {
        let path = args.out.join("forces.dwff");
        io::write_force_field(&path, forces)?;
        manifest.output(&path);
    }
    let path = args.out.join("report.json");
    fs::write(&path, report.to_json())?;
    manifest.output(&path);
    let path = args.out.join("loss_trace.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "timestep,iteration,loss")?;
    for r in &report.timesteps {
        for (i, l) in r.trace.iter().enumerate() {
            writeln!(w, "{},{i},{l:?}", r.timestep)?;
        }
    }
    w.flush()?;
    manifest.output(&path);
    write_trajectory(&args.out, &scene, &report.states, manifest)?;
    manifest.timings.lbm_seconds = report.timings.lbm_seconds;
    manifest.timings.optimization_seconds = report.timings.optimization_seconds;
    for r in &report.timesteps {
        println!("interval {}: loss {:.3e} after {} iterations, marker rmse {:.3e} m", r.timestep, r.loss.total, r.iterations, r.marker_rmse);
    }
    if let Some(f) = &report.failure {
        let code = if f.instability { 3 } else { 4 };
        return Err(Exit { code, message: format!("reconstruction stopped at interval {}: {}", f.timestep, f.message) }.into());
    }
    Ok(())
}

pub fn retarget(args: &RetargetArgs, _common: &Common, manifest: &mut RunManifest) -> Result<()> {
    let mut scene = load_scene(&args.object.config, manifest)?;
    if let Some(e) = args.youngs_modulus {
        let mut cfg = scene.to_config();
        for m in cfg.materials.iter_mut() {
            m.youngs_modulus = e;
        }
        scene = Scene::from_config(&cfg)?;
    }
    let particles = load_particles(&args.object, &scene, manifest)?;
    require_file(&args.force_field, "force field")?;
    manifest.input(&args.force_field);
    let forces = io::read_force_field(&args.force_field)?;
    let started = std::time::Instant::now();
    let states = retarget_forces(&forces, &particles, &scene)?;
    manifest.timings.mpm_seconds = started.elapsed().as_secs_f64();
    fs::create_dir_all(&args.out)?;
    write_trajectory(&args.out, &scene, &states, manifest)?;
    println!("retargeted {} intervals onto {} particles", forces.timesteps(), particles.len());
    Ok(())
}

pub fn eval(args: &EvalArgs, manifest: &mut RunManifest) -> Result<()> {
    for p in [&args.ground_truth, &args.reconstruction] {
        require_file(p, "force field")?;
        manifest.input(p);
    }
    let gt = io::read_force_field(&args.ground_truth)?;
    let rec = io::read_force_field(&args.reconstruction)?;
    let m = eval_metrics(&gt, &rec)?;
    println!("CosSim {:.6}", m.cos_sim);
    println!("NMSE {:.6}", m.nmse);
    println!("nodes {}", m.evaluated);
    if let Some(out) = &args.out {
        fs::write(out, serde_json::to_string_pretty(&m)?)?;
        manifest.output(out);
    }
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs, common: &Common, manifest: &mut RunManifest) -> Result<()> {
    let scene = load_scene(&args.object.config, manifest)?;
    let particles = load_particles(&args.object, &scene, manifest)?;
    if scene.dims.len() > windform::adjoint::FD_MAX_NODES {
        return Err(invalid(format!(
            "finite differences are limited to {} nodes; the scene has {}",
            windform::adjoint::FD_MAX_NODES,
            scene.dims.len()
        )));
    }
    let substeps = args.substeps.unwrap_or(scene.substeps).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let dt = scene.dt();

    // characteristic force: moves the mean loaded node one cell per substep
    let grid = windform::mpm::p2g(&particles, &scene, dt)?;
    let loaded: Vec<f64> = grid.mass.iter().copied().filter(|m| *m > MASS_EPSILON).collect();
    let mean_mass = loaded.iter().sum::<f64>() / loaded.len().max(1) as f64;
    let characteristic = match scene.fluid.wind_force {
        WindForceMode::Nodal => mean_mass * scene.dx / (dt * dt),
        WindForceMode::PerMass => scene.dx / (dt * dt),
    };
    let scale = 1e-3 * characteristic;
    let force = NodalField::from_fn(scene.dims, |_| Vector3::from_fn(|_, _| rng.gen_range(-scale..scale)));
    let wx: Vec<Vector3<f64>> = (0..particles.len()).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
    let wv: Vec<Vector3<f64>> = (0..particles.len()).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
    let x0 = particles.x.clone();
    let loss = |s: &ParticleSet| -> f64 {
        (0..s.len())
            .map(|p| {
                let d = s.x[p] - x0[p];
                let quad = if s.is_marker(p) { 10.0 * d.norm_squared() } else { 0.0 };
                wx[p].dot(&d) + 0.1 * wv[p].dot(&s.v[p]) + quad
            })
            .sum()
    };

    let started = std::time::Instant::now();
    let (out, tape) = forward_record(&particles, &force, &scene, substeps)?;
    let x_bar: Vec<Vector3<f64>> = (0..out.len())
        .map(|p| if out.is_marker(p) { wx[p] + (out.x[p] - x0[p]) * 20.0 } else { wx[p] })
        .collect();
    let v_bar: Vec<Vector3<f64>> = wv.iter().map(|w| w * 0.1).collect();
    let adjoint = backward(&tape, &scene, &x_bar, &v_bar)?.force;
    manifest.timings.mpm_seconds = started.elapsed().as_secs_f64();
    let started = std::time::Instant::now();
    let fd = finite_difference_grad(&particles, &force, &scene, substeps, &loss, 1e-5 * characteristic)?;
    manifest.timings.optimization_seconds = started.elapsed().as_secs_f64();

    let floor = 1e-6 * fd.max_abs();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for (a, b) in adjoint.values.iter().zip(&fd.values) {
        for k in 0..3 {
            if a[k] != 0.0 || b[k] != 0.0 {
                checked += 1;
            }
            worst = worst.max(relative_error(a[k], b[k], floor));
        }
    }
    println!("max relative error {worst:.3e} over {checked} nonzero components ({substeps} substeps)");
    if worst > args.tolerance {
        return Err(Exit { code: 5, message: format!("gradient check failed: {worst:.3e} > {:.1e}", args.tolerance) }.into());
    }
    Ok(())
}

pub fn densify(args: &DensifyArgs, common: &Common, manifest: &mut RunManifest) -> Result<()> {
    require_file(&args.input, "point file")?;
    manifest.input(&args.input);
    if args.resolution < 2 {
        return Err(invalid(format!("--resolution must be at least 2, got {}", args.resolution)));
    }
    let points = io::read_points(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let (lo, hi) = windform::volume::bounds_of(&points, 0.0).ok_or_else(|| invalid("the point file is empty".into()))?;
    let extent = hi - lo;
    let longest = extent.max();
    if !(longest > 0.0) {
        return Err(invalid("points are all at one location".into()));
    }
    // one free voxel on every side so the flood can pass around the shell
    let h = longest / (args.resolution as f64 - 2.0).max(1.0);
    let res: [usize; 3] = std::array::from_fn(|d| (extent[d] / h).ceil() as usize + 2);
    let min = lo - Vector3::repeat(h);
    let max = min + Vector3::new(res[0] as f64, res[1] as f64, res[2] as f64) * h;
    let (all, grid) = windform::volume::densify(&points, res, min, max, args.jitter, common.seed)?;
    let interior = grid.count(windform::volume::Voxel::Interior);
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    if args.output.extension().is_some_and(|e| e.eq_ignore_ascii_case("dwpt")) {
        let vol = h.powi(3);
        let mut set = ParticleSet::new();
        for (i, p) in all.iter().enumerate() {
            let flags = if i < points.len() { FLAG_MARKER } else { FLAG_INTERNAL };
            set.push(*p, args.density * vol, vol, 0, flags);
        }
        io::write_particles(&args.output, &set)?;
    } else {
        io::write_points_csv(BufWriter::new(File::create(&args.output)?), &all)?;
    }
    manifest.output(&args.output);
    println!("{} surface points, {interior} interior points, grid {res:?}", points.len());
    Ok(())
}
