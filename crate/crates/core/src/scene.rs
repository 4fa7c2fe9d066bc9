//! Simulation configuration: domain, grid, time stepping, fluid and solid
//! materials, and boundary conditions.
//!
//! All public quantities are SI. The lattice solver works in lattice units;
//! the conversion uses `dx` for length, the substep `dt` for time and the
//! ambient air density for mass, so that
//! `nu_lattice = nu * dt / dx^2` and `tau = nu_lattice / cs^2 + 1/2`.
//!
//! A scene is parsed from a versioned JSON document (see `scenes/README.md`
//! in the repository for the full schema) and validated once; afterwards it
//! is immutable and can be shared freely between runs.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDims;

pub const SCHEMA_VERSION: u32 = 1;

/// Lattice speed of sound squared.
pub const CS2: f64 = 1.0 / 3.0;

/// Smallest relaxation time accepted by validation.
pub const MIN_TAU: f64 = 0.51;

/// Relaxation times above this are accepted but flagged as over-damped.
pub const MAX_TAU: f64 = 2.0;

/// Boundary treatment of an MPM domain face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WallBc {
    /// Zero velocity in the boundary band.
    #[default]
    Sticky,
    /// Zero normal velocity in the boundary band.
    Slip,
    /// No treatment; particles leaving the grid are an error.
    Open,
}

/// Boundary treatment of a lattice domain face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeFace {
    Periodic,
    /// Half-way bounce-back, no slip.
    Wall,
    /// Moving-wall bounce-back imposing the inlet velocity.
    Inlet,
    /// Zero-gradient copy from the adjacent interior layer.
    Outlet,
}

/// Per-face values, ordered `x_min, x_max, y_min, y_max, z_min, z_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Faces<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
    pub z_min: T,
    pub z_max: T,
}

impl<T: Copy> Faces<T> {
    pub fn uniform(v: T) -> Self {
        Self { x_min: v, x_max: v, y_min: v, y_max: v, z_min: v, z_max: v }
    }

    /// Face on `axis`; `high` selects the max face.
    pub fn get(&self, axis: usize, high: bool) -> T {
        match (axis, high) {
            (0, false) => self.x_min,
            (0, true) => self.x_max,
            (1, false) => self.y_min,
            (1, true) => self.y_max,
            (2, false) => self.z_min,
            (2, true) => self.z_max,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn set(&mut self, axis: usize, high: bool, v: T) {
        let slot = match (axis, high) {
            (0, false) => &mut self.x_min,
            (0, true) => &mut self.x_max,
            (1, false) => &mut self.y_min,
            (1, true) => &mut self.y_max,
            (2, false) => &mut self.z_min,
            (2, true) => &mut self.z_max,
            _ => panic!("axis {axis} out of range"),
        };
        *slot = v;
    }
}

impl<T: Copy + Default> Default for Faces<T> {
    fn default() -> Self {
        Self::uniform(T::default())
    }
}

/// How a nodal wind force enters the grid momentum update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindForceMode {
    /// Force in newtons: `dv = dt * f / m_i`.
    #[default]
    Nodal,
    /// Force per unit mass (acceleration): `dv = dt * f`.
    PerMass,
}

/// Which form of the diagonal stress relaxation the moment solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MomentClosure {
    /// Full Hermite closure: equilibrium of the stress is `u u` on every
    /// component, and the third-order coefficients follow the regularized
    /// recursion.
    #[default]
    Consistent,
    /// The update as commonly printed: the diagonal stress carries only the
    /// isotropic part of `u u`, and the third-order terms use the printed
    /// index pattern.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    /// Ambient air density, kg/m^3.
    pub rho_w: f64,
    /// Kinematic viscosity, m^2/s (an effective value at the grid scale).
    pub nu: f64,
    /// Drag coefficient.
    pub c_d: f64,
    pub inlet_dir: [f64; 3],
    /// Inlet speed, m/s.
    pub inlet_speed: f64,
    /// Reference area for nodal drag, m^2. Defaults to `dx^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drag_area: Option<f64>,
    #[serde(default)]
    pub wind_force: WindForceMode,
    #[serde(default)]
    pub closure: MomentClosure,
    /// Lattice face conditions. Derived from the inlet when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Faces<LatticeFace>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub id: u32,
    pub name: String,
    /// Young's modulus, Pa.
    #[serde(rename = "E")]
    pub youngs_modulus: f64,
    /// Poisson's ratio.
    pub nu_p: f64,
    /// Density, kg/m^3.
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default)]
    pub gravity: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub res: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Interval between observation frames, s.
    pub frame_dt: f64,
    pub substeps: usize,
}

/// The on-disk scene document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema: u32,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub fluid: FluidConfig,
    pub materials: Vec<MaterialConfig>,
    #[serde(default)]
    pub walls: Faces<WallBc>,
}

/// Validated fluid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub rho_w: f64,
    pub nu: f64,
    pub c_d: f64,
    pub inlet_dir: Vector3<f64>,
    pub inlet_speed: f64,
    /// Lattice relaxation time.
    pub tau: f64,
    pub drag_area: f64,
    pub wind_force: WindForceMode,
    pub closure: MomentClosure,
    pub faces: Faces<LatticeFace>,
    explicit_drag_area: bool,
    explicit_faces: bool,
}

/// Validated material with derived Lamé parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub id: u32,
    pub name: String,
    pub youngs_modulus: f64,
    pub nu_p: f64,
    pub density: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl Material {
    pub fn new(id: u32, name: &str, youngs_modulus: f64, nu_p: f64, density: f64) -> Result<Self> {
        let (mu, lambda) = lame_from_young(youngs_modulus, nu_p)?;
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::Material(format!("density must be positive, got {density}")));
        }
        Ok(Self { id, name: name.to_string(), youngs_modulus, nu_p, density, mu, lambda })
    }
}

/// Lamé parameters `(mu, lambda)` from Young's modulus and Poisson's ratio.
pub fn lame_from_young(youngs_modulus: f64, nu_p: f64) -> Result<(f64, f64)> {
    if !(youngs_modulus > 0.0 && youngs_modulus.is_finite()) {
        return Err(Error::Material(format!("Young's modulus must be positive, got {youngs_modulus}")));
    }
    if !(nu_p > 0.0 && nu_p < 0.5) {
        return Err(Error::Material(format!("Poisson's ratio must lie in (0, 0.5), got {nu_p}")));
    }
    let mu = youngs_modulus / (2.0 * (1.0 + nu_p));
    let lambda = youngs_modulus * nu_p / ((1.0 + nu_p) * (1.0 - 2.0 * nu_p));
    Ok((mu, lambda))
}

/// A validated, immutable scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub domain_min: Vector3<f64>,
    pub domain_max: Vector3<f64>,
    pub dims: GridDims,
    /// Uniform node spacing, m.
    pub dx: f64,
    pub frame_dt: f64,
    pub substeps: usize,
    pub gravity: Vector3<f64>,
    pub fluid: FluidParams,
    pub materials: Vec<Material>,
    pub walls: Faces<WallBc>,
}

impl Scene {
    /// Validate a scene document, reporting every violated invariant at once.
    pub fn from_config(cfg: &SceneConfig) -> Result<Self> {
        validate_scene(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: SceneConfig = serde_json::from_str(s)?;
        Self::from_config(&cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_config(&self) -> SceneConfig {
        SceneConfig {
            schema: SCHEMA_VERSION,
            domain: DomainConfig {
                min: self.domain_min.into(),
                max: self.domain_max.into(),
                gravity: self.gravity.into(),
            },
            grid: GridConfig { res: self.dims.as_array() },
            time: TimeConfig { frame_dt: self.frame_dt, substeps: self.substeps },
            fluid: FluidConfig {
                rho_w: self.fluid.rho_w,
                nu: self.fluid.nu,
                c_d: self.fluid.c_d,
                inlet_dir: self.fluid.inlet_dir.into(),
                inlet_speed: self.fluid.inlet_speed,
                drag_area: self.fluid.explicit_drag_area.then_some(self.fluid.drag_area),
                wind_force: self.fluid.wind_force,
                closure: self.fluid.closure,
                faces: self.fluid.explicit_faces.then_some(self.fluid.faces),
            },
            materials: self
                .materials
                .iter()
                .map(|m| MaterialConfig {
                    id: m.id,
                    name: m.name.clone(),
                    youngs_modulus: m.youngs_modulus,
                    nu_p: m.nu_p,
                    density: m.density,
                })
                .collect(),
            walls: self.walls,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_config()).expect("scene config serializes")
    }

    /// Substep length, which is also the lattice time step.
    pub fn dt(&self) -> f64 {
        self.frame_dt / self.substeps as f64
    }

    pub fn material(&self, id: u32) -> Option<&Material> {
        self.materials.iter().find(|m| m.id == id)
    }

    pub fn node_position(&self, c: [usize; 3]) -> Vector3<f64> {
        self.domain_min + Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.dx
    }

    pub fn domain_size(&self) -> Vector3<f64> {
        self.domain_max - self.domain_min
    }

    /// SI velocity to lattice units.
    pub fn velocity_to_lattice(&self, v: Vector3<f64>) -> Vector3<f64> {
        v * (self.dt() / self.dx)
    }

    pub fn velocity_from_lattice(&self, u: Vector3<f64>) -> Vector3<f64> {
        u * (self.dx / self.dt())
    }

    /// Inlet velocity in lattice units.
    pub fn inlet_lattice_velocity(&self) -> Vector3<f64> {
        self.velocity_to_lattice(self.fluid.inlet_dir * self.fluid.inlet_speed)
    }

    pub fn nu_lattice(&self) -> f64 {
        self.fluid.nu * self.dt() / (self.dx * self.dx)
    }

    /// Non-fatal advisories: CFL margin, Mach number, relaxation range.
    pub fn advisories(&self) -> Vec<String> {
        let mut notes = Vec::new();
        let dt = self.dt();
        let v = self.fluid.inlet_speed;
        if v * dt > 0.5 * self.dx {
            notes.push(format!(
                "CFL: inlet speed {v} m/s moves {:.3} cells per substep (> 0.5); raise substeps",
                v * dt / self.dx
            ));
        }
        for m in &self.materials {
            let c = ((m.lambda + 2.0 * m.mu) / m.density).sqrt();
            if c * dt > 0.5 * self.dx {
                notes.push(format!(
                    "CFL: elastic wave speed {c:.3} m/s of material '{}' crosses {:.3} cells per substep (> 0.5); raise substeps",
                    m.name,
                    c * dt / self.dx
                ));
            }
        }
        let u = self.inlet_lattice_velocity().norm();
        if u > crate::lbm::MACH_WARN {
            notes.push(format!("lattice inlet velocity is {u:.3}, above the {} low-Mach guideline", crate::lbm::MACH_WARN));
        }
        if self.fluid.tau > MAX_TAU {
            notes.push(format!("relaxation time {:.3} is strongly over-damped", self.fluid.tau));
        }
        notes
    }
}

fn default_lattice_faces(inlet_dir: &Vector3<f64>, inlet_speed: f64) -> Faces<LatticeFace> {
    let mut faces = Faces::uniform(LatticeFace::Periodic);
    if inlet_speed > 0.0 {
        let axis = inlet_dir.iamax();
        let upstream_high = inlet_dir[axis] < 0.0;
        faces.set(axis, upstream_high, LatticeFace::Inlet);
        faces.set(axis, !upstream_high, LatticeFace::Outlet);
    }
    faces
}

/// Check every invariant of a scene document and derive `dx`, `tau` and the
/// Lamé parameters.
pub fn validate_scene(cfg: &SceneConfig) -> Result<Scene> {
    let mut errs = Vec::new();
    if cfg.schema != SCHEMA_VERSION {
        errs.push(format!("unsupported schema version {} (expected {SCHEMA_VERSION})", cfg.schema));
    }
    let min = Vector3::from(cfg.domain.min);
    let max = Vector3::from(cfg.domain.max);
    let res = cfg.grid.res;
    let finite3 = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
    if !finite3(&cfg.domain.min) || !finite3(&cfg.domain.max) || !finite3(&cfg.domain.gravity) {
        errs.push("domain bounds and gravity must be finite".into());
    }
    for d in 0..3 {
        if !(max[d] > min[d]) {
            errs.push(format!("domain max must exceed min on axis {d} ({} <= {})", max[d], min[d]));
        }
        if res[d] < 2 {
            errs.push(format!("grid resolution on axis {d} must be at least 2, got {}", res[d]));
        }
    }
    let dx = if res[0] > 0 { (max[0] - min[0]) / res[0] as f64 } else { f64::NAN };
    if errs.is_empty() {
        for d in 1..3 {
            let dxd = (max[d] - min[d]) / res[d] as f64;
            if ((dxd - dx) / dx).abs() > 1e-12 {
                errs.push(format!("cells must be cubic: dx on axis {d} is {dxd}, axis 0 gives {dx}"));
            }
        }
    }
    if !(cfg.time.frame_dt > 0.0 && cfg.time.frame_dt.is_finite()) {
        errs.push(format!("frame_dt must be positive, got {}", cfg.time.frame_dt));
    }
    if cfg.time.substeps < 1 {
        errs.push("substeps must be at least 1".into());
    }

    let f = &cfg.fluid;
    if !(f.rho_w > 0.0 && f.rho_w.is_finite()) {
        errs.push(format!("fluid rho_w must be positive, got {}", f.rho_w));
    }
    if !(f.nu >= 0.0 && f.nu.is_finite()) {
        errs.push(format!("fluid nu must be non-negative, got {}", f.nu));
    }
    if !(f.c_d >= 0.0 && f.c_d.is_finite()) {
        errs.push(format!("drag coefficient must be non-negative, got {}", f.c_d));
    }
    if !(f.inlet_speed >= 0.0 && f.inlet_speed.is_finite()) {
        errs.push(format!("inlet_speed must be non-negative, got {}", f.inlet_speed));
    }
    let inlet_dir = Vector3::from(f.inlet_dir);
    if (inlet_dir.norm() - 1.0).abs() > 1e-9 {
        errs.push(format!("inlet_dir must be a unit vector (|d| = {})", inlet_dir.norm()));
    }
    if let Some(a) = f.drag_area {
        if !(a > 0.0 && a.is_finite()) {
            errs.push(format!("drag_area must be positive, got {a}"));
        }
    }
    let mut tau = f64::NAN;
    if dx.is_finite() && dx > 0.0 && cfg.time.substeps >= 1 && cfg.time.frame_dt > 0.0 {
        let dt = cfg.time.frame_dt / cfg.time.substeps as f64;
        tau = f.nu * dt / (dx * dx) / CS2 + 0.5;
        if !(tau >= MIN_TAU) {
            errs.push(format!(
                "lattice relaxation time {tau:.6} is below the stability bound {MIN_TAU}; raise nu or the time step"
            ));
        }
    }
    let faces = f.faces.unwrap_or_else(|| default_lattice_faces(&inlet_dir, f.inlet_speed));
    for axis in 0..3 {
        let lo = faces.get(axis, false) == LatticeFace::Periodic;
        let hi = faces.get(axis, true) == LatticeFace::Periodic;
        if lo != hi {
            errs.push(format!("periodic lattice faces must come in pairs (axis {axis})"));
        }
    }

    let mut materials = Vec::new();
    if cfg.materials.is_empty() {
        errs.push("at least one material is required".into());
    }
    for (k, m) in cfg.materials.iter().enumerate() {
        if cfg.materials[..k].iter().any(|o| o.id == m.id) {
            errs.push(format!("duplicate material id {}", m.id));
        }
        match Material::new(m.id, &m.name, m.youngs_modulus, m.nu_p, m.density) {
            Ok(mat) => materials.push(mat),
            Err(e) => errs.push(format!("material {} ('{}'): {e}", m.id, m.name)),
        }
    }

    if !errs.is_empty() {
        return Err(Error::InvalidScene(errs));
    }

    let scene = Scene {
        domain_min: min,
        domain_max: max,
        dims: GridDims::from_array(res),
        dx,
        frame_dt: cfg.time.frame_dt,
        substeps: cfg.time.substeps,
        gravity: Vector3::from(cfg.domain.gravity),
        fluid: FluidParams {
            rho_w: f.rho_w,
            nu: f.nu,
            c_d: f.c_d,
            inlet_dir,
            inlet_speed: f.inlet_speed,
            tau,
            drag_area: f.drag_area.unwrap_or(dx * dx),
            wind_force: f.wind_force,
            closure: f.closure,
            faces,
            explicit_drag_area: f.drag_area.is_some(),
            explicit_faces: f.faces.is_some(),
        },
        materials,
        walls: cfg.walls,
    };
    for note in scene.advisories() {
        log::warn!("{note}");
    }
    Ok(scene)
}

/// Builder-style helper for tests and examples: a cubic unit-ish domain
/// with one material.
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    cfg: SceneConfig,
}

impl SceneBuilder {
    pub fn cube(size: f64, n: usize) -> Self {
        Self {
            cfg: SceneConfig {
                schema: SCHEMA_VERSION,
                domain: DomainConfig { min: [0.0; 3], max: [size; 3], gravity: [0.0; 3] },
                grid: GridConfig { res: [n; 3] },
                time: TimeConfig { frame_dt: 1.0 / 60.0, substeps: 10 },
                fluid: FluidConfig {
                    rho_w: 1.2,
                    nu: 0.0,
                    c_d: 1.0,
                    inlet_dir: [1.0, 0.0, 0.0],
                    inlet_speed: 0.0,
                    drag_area: None,
                    wind_force: WindForceMode::Nodal,
                    closure: MomentClosure::Consistent,
                    faces: None,
                },
                materials: vec![MaterialConfig {
                    id: 0,
                    name: "soft".into(),
                    youngs_modulus: 4e4,
                    nu_p: 0.3,
                    density: 200.0,
                }],
                walls: Faces::uniform(WallBc::Sticky),
            },
        }
    }

    pub fn time(mut self, frame_dt: f64, substeps: usize) -> Self {
        self.cfg.time = TimeConfig { frame_dt, substeps };
        self
    }

    pub fn gravity(mut self, g: [f64; 3]) -> Self {
        self.cfg.domain.gravity = g;
        self
    }

    pub fn walls(mut self, w: WallBc) -> Self {
        self.cfg.walls = Faces::uniform(w);
        self
    }

    pub fn material(mut self, youngs_modulus: f64, nu_p: f64, density: f64) -> Self {
        self.cfg.materials[0].youngs_modulus = youngs_modulus;
        self.cfg.materials[0].nu_p = nu_p;
        self.cfg.materials[0].density = density;
        self
    }

    pub fn add_material(mut self, m: MaterialConfig) -> Self {
        self.cfg.materials.push(m);
        self
    }

    pub fn wind_force(mut self, mode: WindForceMode) -> Self {
        self.cfg.fluid.wind_force = mode;
        self
    }

    /// Set the fluid so that the lattice relaxation time equals `tau`.
    pub fn fluid_tau(mut self, tau: f64) -> Self {
        let dx = (self.cfg.domain.max[0] - self.cfg.domain.min[0]) / self.cfg.grid.res[0] as f64;
        let dt = self.cfg.time.frame_dt / self.cfg.time.substeps as f64;
        self.cfg.fluid.nu = (tau - 0.5) * CS2 * dx * dx / dt;
        self
    }

    pub fn inlet(mut self, dir: [f64; 3], speed: f64) -> Self {
        self.cfg.fluid.inlet_dir = dir;
        self.cfg.fluid.inlet_speed = speed;
        self
    }

    pub fn lattice_faces(mut self, faces: Faces<LatticeFace>) -> Self {
        self.cfg.fluid.faces = Some(faces);
        self
    }

    pub fn config(&self) -> &SceneConfig {
        &self.cfg
    }

    pub fn build(self) -> Result<Scene> {
        let cfg = if self.cfg.fluid.nu == 0.0 {
            // keep the lattice valid when the caller does not care about the fluid
            SceneBuilder { cfg: self.cfg }.fluid_tau(0.8).cfg
        } else {
            self.cfg
        };
        Scene::from_config(&cfg)
    }
}
