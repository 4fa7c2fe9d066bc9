//! Scenarios shared by the integration suites and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windform::adjoint::{backward, finite_difference_grad, forward_record, relative_error};
use windform::grid::GridDims;
use windform::lbm::{bgk_step_with, init_equilibrium, lbm_step_with, LbmField, LbmParams, StreamBoundary};
use windform::mpm::ParticleSet;
use windform::scene::{Faces, LatticeFace, MomentClosure, SceneBuilder, WallBc, WindForceMode};
use windform::{NodalField, Scene};

pub struct Case {
    pub scene: Scene,
    pub particles: ParticleSet,
    pub force: NodalField,
    pub substeps: usize,
    pub wx: Vec<Vector3<f64>>,
    pub wv: Vec<Vector3<f64>>,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let walls = [WallBc::Sticky, WallBc::Slip, WallBc::Open][rng.gen_range(0..3)];
    let mode = if rng.gen_bool(0.25) { WindForceMode::PerMass } else { WindForceMode::Nodal };
    let mut builder = SceneBuilder::cube(1.0, 8)
        .walls(walls)
        .wind_force(mode)
        .time(1.0 / 60.0, 10)
        .material(rng.gen_range(2e4..2e5), rng.gen_range(0.2..0.4), 200.0);
    if rng.gen_bool(0.3) {
        builder = builder.gravity([0.0, -9.81, 0.0]);
    }
    let scene = builder.build().unwrap();
    let (lo, hi) = if rng.gen_bool(0.5) { (0.35, 0.65) } else { (0.21, 0.79) };
    let n = rng.gen_range(20..=100);
    let mut particles = ParticleSet::new();
    for k in 0..n {
        let x = Vector3::from_fn(|_, _| rng.gen_range(lo..hi));
        particles.push(x, rng.gen_range(0.01..0.05), rng.gen_range(1e-4..3e-4), 0, u32::from(k % 2 == 0));
        let p = particles.len() - 1;
        particles.v[p] = Vector3::from_fn(|_, _| rng.gen_range(-0.3..0.3));
        particles.c[p] = Matrix3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
        particles.f[p] = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
    }
    let force_scale = if mode == WindForceMode::PerMass { 2.0 } else { 0.05 };
    let force = NodalField::from_fn(scene.dims, |_| Vector3::from_fn(|_, _| rng.gen_range(-force_scale..force_scale)));
    let substeps = rng.gen_range(1..=4);
    let wx = (0..n).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
    let wv = (0..n).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
    Case { scene, particles, force, substeps, wx, wv }
}

/// Loss with a quadratic marker term and linear position/velocity terms.
pub fn loss(case: &Case, s: &ParticleSet) -> f64 {
    let mut l = 0.0;
    for p in 0..s.len() {
        let dxp = s.x[p] - case.particles.x[p];
        l += case.wx[p].dot(&dxp) + 0.1 * case.wv[p].dot(&s.v[p]);
        if s.is_marker(p) {
            l += 10.0 * dxp.norm_squared();
        }
    }
    l
}

pub fn loss_seeds(case: &Case, s: &ParticleSet) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let xb = (0..s.len())
        .map(|p| {
            let mut g = case.wx[p];
            if s.is_marker(p) {
                g += (s.x[p] - case.particles.x[p]) * 20.0;
            }
            g
        })
        .collect();
    let vb = case.wv.iter().map(|w| w * 0.1).collect();
    (xb, vb)
}

/// `1e-5` of the characteristic force, the nodal force that moves the mean
/// loaded node by one cell in one substep.
pub fn fd_step(case: &Case, tape: &windform::adjoint::Tape) -> f64 {
    let grid = &tape.grids[0];
    let loaded: Vec<f64> = grid.mass.iter().copied().filter(|m| *m > 1e-10).collect();
    let mean_mass = loaded.iter().sum::<f64>() / loaded.len() as f64;
    let dt = case.scene.dt();
    let characteristic = match case.scene.fluid.wind_force {
        WindForceMode::Nodal => mean_mass * case.scene.dx / (dt * dt),
        WindForceMode::PerMass => case.scene.dx / (dt * dt),
    };
    1e-5 * characteristic
}

pub fn max_error(case: &Case) -> (f64, usize) {
    let (out, tape) = forward_record(&case.particles, &case.force, &case.scene, case.substeps).unwrap();
    let (xb, vb) = loss_seeds(case, &out);
    let g = backward(&tape, &case.scene, &xb, &vb).unwrap();
    let fd = finite_difference_grad(&case.particles, &case.force, &case.scene, case.substeps, &|s| loss(case, s), fd_step(case, &tape))
        .unwrap();
    let floor = 1e-6 * fd.max_abs();
    let mut worst: f64 = 0.0;
    let mut loaded = 0;
    for (a, b) in g.force.values.iter().zip(&fd.values) {
        if a.norm() > 0.0 {
            loaded += 1;
        }
        for k in 0..3 {
            worst = worst.max(relative_error(a[k], b[k], floor));
        }
    }
    (worst, loaded)
}

/// Whether every node the window never loads gets an exactly zero gradient.
pub fn empty_nodes_are_zero(case: &Case) -> bool {
    let (out, tape) = forward_record(&case.particles, &case.force, &case.scene, case.substeps).unwrap();
    let (xb, vb) = loss_seeds(case, &out);
    let g = backward(&tape, &case.scene, &xb, &vb).unwrap();
    (0..case.scene.dims.len())
        .filter(|&i| !tape.grids.iter().any(|grid| grid.is_loaded(i)))
        .all(|i| g.force.values[i] == Vector3::zeros())
}

#[derive(Clone, Copy, PartialEq)]
pub enum Solver {
    Home(MomentClosure),
    Bgk,
}

pub fn step(field: &mut LbmField, force: &[Vector3<f64>], params: &LbmParams, solver: Solver) {
    let mask = vec![false; field.len()];
    match solver {
        Solver::Home(closure) => {
            lbm_step_with(field, force, &mask, &LbmParams { closure, ..*params }).unwrap();
        }
        Solver::Bgk => {
            bgk_step_with(field, force, &mask, params).unwrap();
        }
    }
}

/// Channel with half-way walls at y = -1/2 and y = H - 1/2, driven by a
/// uniform body force. Oracle: u(y) = G y'(H - y') / (2 rho nu), y' = j + 1/2.
pub fn poiseuille_error(solver: Solver) -> f64 {
    let (h, tau) = (32usize, 1.0);
    let nu = (tau - 0.5) / 3.0;
    let u_max = 0.05;
    let g = u_max * 8.0 * nu / (h * h) as f64;
    let dims = GridDims::new(4, h, 1);
    let mut faces = Faces::uniform(LatticeFace::Periodic);
    faces.y_min = LatticeFace::Wall;
    faces.y_max = LatticeFace::Wall;
    let params = LbmParams { tau, closure: MomentClosure::Consistent, boundary: StreamBoundary { faces, inlet_velocity: Vector3::zeros() } };
    let mut field = init_equilibrium(LbmField::new(dims), 1.0, Vector3::zeros()).unwrap();
    let force = vec![Vector3::new(g, 0.0, 0.0); dims.len()];
    for _ in 0..20000 {
        step(&mut field, &force, &params, solver);
    }
    let mut err: f64 = 0.0;
    for j in 0..h {
        let y = j as f64 + 0.5;
        let exact = g * y * (h as f64 - y) / (2.0 * nu);
        let node = dims.index(1, j, 0);
        let u = field.hydrodynamic_velocity(node, &force[node]);
        err = err.max((u.x - exact).abs());
        assert!(u.y.abs() < 1e-10 && u.z.abs() < 1e-10);
    }
    err / u_max
}

/// Taylor-Green vortex, uniform in z, on a periodic 32^3 box at Re = 10.
pub fn taylor_green(n: usize, u0: f64, nu: f64) -> (LbmField, LbmParams, f64) {
    let tau = 3.0 * nu + 0.5;
    let k = 2.0 * PI / n as f64;
    let dims = GridDims::cubic(n);
    let mut field = LbmField::new(dims);
    for node in 0..dims.len() {
        let [x, y, _] = dims.coords(node);
        let (x, y) = (x as f64, y as f64);
        let u = Vector3::new(u0 * (k * x).sin() * (k * y).cos(), -u0 * (k * x).cos() * (k * y).sin(), 0.0);
        let dp = -0.25 * u0 * u0 * ((2.0 * k * x).cos() + (2.0 * k * y).cos());
        field.set_equilibrium(node, 1.0 + 3.0 * dp, u);
    }
    (field, LbmParams::periodic(tau), 2.0 * k * k)
}

