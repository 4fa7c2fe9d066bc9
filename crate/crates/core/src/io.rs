//! File formats: particle snapshots (`DWPT`), grid dumps (`DWGF`), force
//! fields (`DWFF`), marker trajectories and point lists as CSV.
//!
//! Binary files are little-endian with a four-byte magic and a `u32`
//! version after it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::coupling::{GuideField, SolidMask};
use crate::error::{Error, Result};
use crate::field::{ForceField, NodalField};
use crate::grid::GridDims;
use crate::inverse::ObservationSequence;
use crate::lbm::LbmField;
use crate::mpm::ParticleSet;

pub const FORMAT_VERSION: u32 = 1;

const PARTICLE_MAGIC: &[u8; 4] = b"DWPT";
const GRID_MAGIC: &[u8; 4] = b"DWGF";
const FORCE_MAGIC: &[u8; 4] = b"DWFF";

/// Largest grid a dump may declare, to reject garbage headers before
/// allocating.
const MAX_NODES: usize = 1 << 30;

struct Encoder<W: Write>(W);

impl<W: Write> Encoder<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        Ok(self.0.write_all(b)?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        self.bytes(magic)?;
        self.u32(FORMAT_VERSION)
    }
    fn dims(&mut self, dims: GridDims) -> Result<()> {
        for r in dims.as_array() {
            self.u32(u32::try_from(r).map_err(|_| Error::Format(format!("grid resolution {r} exceeds u32")))?)?;
        }
        Ok(())
    }
    fn finish(mut self) -> Result<()> {
        Ok(self.0.flush()?)
    }
}

struct Decoder<R: Read>(R);

impl<R: Read> Decoder<R> {
    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format(format!("file truncated while reading {what}")),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        self.array::<4>(what).map(u32::from_le_bytes)
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        self.array::<8>(what).map(u64::from_le_bytes)
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        self.array::<8>(what).map(f64::from_le_bytes)
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let found = self.array::<4>("magic")?;
        if &found != magic {
            return Err(Error::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&found)
            )));
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        Ok(())
    }
    fn dims(&mut self) -> Result<GridDims> {
        let r = [self.u32("grid dims")?, self.u32("grid dims")?, self.u32("grid dims")?];
        let dims = GridDims::new(r[0] as usize, r[1] as usize, r[2] as usize);
        if dims.is_empty() || dims.len() > MAX_NODES {
            return Err(Error::Format(format!("implausible grid dims {r:?}")));
        }
        Ok(dims)
    }
    fn end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.0.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after the declared content".into())),
        }
    }
}

pub fn write_particles_to(w: impl Write, p: &ParticleSet) -> Result<()> {
    p.check_consistent()?;
    let mut e = Encoder(w);
    e.header(PARTICLE_MAGIC)?;
    e.u64(p.len() as u64)?;
    for i in 0..p.len() {
        for v in p.x[i].iter().chain(p.v[i].iter()) {
            e.f64(*v)?;
        }
        e.f64(p.mass[i])?;
        e.f64(p.volume0[i])?;
        for m in [&p.c[i], &p.f[i]] {
            for r in 0..3 {
                for c in 0..3 {
                    e.f64(m[(r, c)])?;
                }
            }
        }
        e.u32(p.material_id[i])?;
        e.u32(p.flags[i])?;
    }
    e.finish()
}

pub fn read_particles_from(r: impl Read) -> Result<ParticleSet> {
    let mut d = Decoder(r);
    d.header(PARTICLE_MAGIC)?;
    let n = d.u64("particle count")?;
    let mut p = ParticleSet::new();
    for _ in 0..n {
        let mut vals = [0.0; 26];
        for v in vals.iter_mut() {
            *v = d.f64("particle record")?;
        }
        let matrix = |o: usize| Matrix3::from_fn(|r, c| vals[o + 3 * r + c]);
        p.x.push(Vector3::new(vals[0], vals[1], vals[2]));
        p.v.push(Vector3::new(vals[3], vals[4], vals[5]));
        p.mass.push(vals[6]);
        p.volume0.push(vals[7]);
        p.c.push(matrix(8));
        p.f.push(matrix(17));
        p.material_id.push(d.u32("material id")?);
        p.flags.push(d.u32("flags")?);
    }
    d.end()?;
    Ok(p)
}

pub fn write_particles(path: impl AsRef<Path>, p: &ParticleSet) -> Result<()> {
    let file = BufWriter::new(File::create(path.as_ref())?);
    write_particles_to(file, p)
}

pub fn read_particles(path: impl AsRef<Path>) -> Result<ParticleSet> {
    read_particles_from(BufReader::new(File::open(path.as_ref())?))
}

/// Named per-node scalar channels on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub dims: GridDims,
    pub channels: Vec<(String, Vec<f64>)>,
}

impl GridDump {
    pub fn new(dims: GridDims) -> Self {
        Self { dims, channels: Vec::new() }
    }

    pub fn with(mut self, name: &str, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.dims.len(), "channel {name} has the wrong length");
        self.channels.push((name.to_string(), values));
        self
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Format(format!("grid dump has no channel {name:?}")))
    }

    /// Channels rho, ux, uy, uz, Sxx, Syy, Szz, Sxy, Sxz, Syz and solid.
    pub fn from_lbm(field: &LbmField) -> Self {
        let mut dump = Self::new(field.dims).with("rho", field.rho.clone());
        for (k, name) in ["ux", "uy", "uz"].into_iter().enumerate() {
            dump = dump.with(name, field.u.iter().map(|u| u[k]).collect());
        }
        for (k, name) in ["Sxx", "Syy", "Szz", "Sxy", "Sxz", "Syz"].into_iter().enumerate() {
            dump = dump.with(name, field.s.iter().map(|s| s[k]).collect());
        }
        dump.with("solid", field.solid.iter().map(|&s| f64::from(u8::from(s))).collect())
    }

    /// Restore a lattice state written by [`GridDump::from_lbm`].
    pub fn to_lbm(&self) -> Result<LbmField> {
        let mut field = LbmField::new(self.dims);
        field.rho = self.channel("rho")?.to_vec();
        let (ux, uy, uz) = (self.channel("ux")?, self.channel("uy")?, self.channel("uz")?);
        field.u = (0..self.dims.len()).map(|n| Vector3::new(ux[n], uy[n], uz[n])).collect();
        let names = ["Sxx", "Syy", "Szz", "Sxy", "Sxz", "Syz"];
        let s: Vec<&[f64]> = names.iter().map(|n| self.channel(n)).collect::<Result<_>>()?;
        field.s = (0..self.dims.len()).map(|n| std::array::from_fn(|k| s[k][n])).collect();
        field.solid = self.channel("solid")?.iter().map(|v| *v != 0.0).collect();
        field.invalidate_distributions();
        Ok(field)
    }

    pub fn from_mask(mask: &SolidMask) -> Self {
        Self::new(mask.dims).with("solid", mask.occupied.iter().map(|&s| f64::from(u8::from(s))).collect())
    }

    pub fn to_mask(&self) -> Result<SolidMask> {
        Ok(SolidMask { dims: self.dims, occupied: self.channel("solid")?.iter().map(|v| *v != 0.0).collect() })
    }

    /// Channels dx, dy, dz, speed; calm nodes store a zero direction.
    pub fn from_guide(guide: &GuideField) -> Self {
        let mut dump = Self::new(guide.dims);
        for (k, name) in ["dx", "dy", "dz"].into_iter().enumerate() {
            dump = dump.with(name, guide.dir.iter().map(|d| d.map_or(0.0, |d| d[k])).collect());
        }
        dump.with("speed", guide.speed.clone())
    }

    pub fn to_guide(&self) -> Result<GuideField> {
        let (x, y, z, speed) = (self.channel("dx")?, self.channel("dy")?, self.channel("dz")?, self.channel("speed")?);
        let u: Vec<Vector3<f64>> = (0..self.dims.len()).map(|n| Vector3::new(x[n], y[n], z[n]) * speed[n]).collect();
        Ok(GuideField::from_velocity(self.dims, &u))
    }

    /// Channels `{prefix}x`, `{prefix}y`, `{prefix}z`.
    pub fn from_nodal(field: &NodalField, prefix: &str) -> Self {
        let mut dump = Self::new(field.dims);
        for (k, axis) in ["x", "y", "z"].into_iter().enumerate() {
            dump = dump.with(&format!("{prefix}{axis}"), field.values.iter().map(|v| v[k]).collect());
        }
        dump
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut e = Encoder(w);
        e.header(GRID_MAGIC)?;
        e.dims(self.dims)?;
        e.u32(self.channels.len() as u32)?;
        for (name, values) in &self.channels {
            if values.len() != self.dims.len() {
                return Err(Error::Shape(format!("channel {name} has {} values for {} nodes", values.len(), self.dims.len())));
            }
            e.u32(name.len() as u32)?;
            e.bytes(name.as_bytes())?;
        }
        for n in 0..self.dims.len() {
            for (_, values) in &self.channels {
                e.f64(values[n])?;
            }
        }
        e.finish()
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut d = Decoder(r);
        d.header(GRID_MAGIC)?;
        let dims = d.dims()?;
        let count = d.u32("channel count")? as usize;
        if count > 1024 {
            return Err(Error::Format(format!("implausible channel count {count}")));
        }
        let mut names = Vec::with_capacity(count);
        for _ in 0..count {
            let len = d.u32("channel name length")? as usize;
            if len > 1024 {
                return Err(Error::Format(format!("implausible channel name length {len}")));
            }
            let mut b = vec![0u8; len];
            d.0.read_exact(&mut b).map_err(|_| Error::Format("file truncated in channel names".into()))?;
            names.push(String::from_utf8(b).map_err(|_| Error::Format("channel name is not UTF-8".into()))?);
        }
        let mut values = vec![Vec::with_capacity(dims.len()); count];
        for _ in 0..dims.len() {
            for v in values.iter_mut() {
                v.push(d.f64("grid values")?);
            }
        }
        d.end()?;
        Ok(Self { dims, channels: names.into_iter().zip(values).collect() })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path.as_ref())?))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path.as_ref())?))
    }
}

pub fn write_force_field_to(w: impl Write, field: &ForceField) -> Result<()> {
    field.check()?;
    let mut e = Encoder(w);
    e.header(FORCE_MAGIC)?;
    e.u32(field.timesteps() as u32)?;
    e.dims(field.dims)?;
    for frame in &field.frames {
        for v in &frame.values {
            for k in 0..3 {
                e.f64(v[k])?;
            }
        }
    }
    e.finish()
}

pub fn read_force_field_from(r: impl Read) -> Result<ForceField> {
    let mut d = Decoder(r);
    d.header(FORCE_MAGIC)?;
    let steps = d.u32("timestep count")? as usize;
    let dims = d.dims()?;
    let mut field = ForceField::new(dims);
    for _ in 0..steps {
        let mut values = Vec::with_capacity(dims.len());
        for _ in 0..dims.len() {
            values.push(Vector3::new(d.f64("force values")?, d.f64("force values")?, d.f64("force values")?));
        }
        field.frames.push(NodalField { dims, values });
    }
    d.end()?;
    Ok(field)
}

pub fn write_force_field(path: impl AsRef<Path>, field: &ForceField) -> Result<()> {
    write_force_field_to(BufWriter::new(File::create(path.as_ref())?), field)
}

pub fn read_force_field(path: impl AsRef<Path>) -> Result<ForceField> {
    read_force_field_from(BufReader::new(File::open(path.as_ref())?))
}

/// Marker trajectories as `frame,particle,x,y,z` rows with a header.
pub fn write_markers_csv(w: impl Write, obs: &ObservationSequence) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frame", "particle", "x", "y", "z"])?;
    for (t, frame) in obs.frames.iter().enumerate() {
        for (id, p) in obs.marker_ids.iter().zip(frame) {
            out.write_record([t.to_string(), id.to_string(), fmt(p[0]), fmt(p[1]), fmt(p[2])])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same value.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

#[derive(serde::Deserialize)]
struct MarkerRow {
    frame: usize,
    particle: usize,
    x: f64,
    y: f64,
    z: f64,
}

/// Read a marker CSV. Frames must be numbered from 0 without gaps, and each
/// frame must list the same particles in the same order.
pub fn read_markers_csv(r: impl Read) -> Result<ObservationSequence> {
    let mut rows = csv::Reader::from_reader(r);
    let mut frames: Vec<Vec<Vector3<f64>>> = Vec::new();
    let mut ids: Vec<Vec<usize>> = Vec::new();
    for row in rows.deserialize() {
        let row: MarkerRow = row?;
        if row.frame > frames.len() {
            return Err(Error::Format(format!("marker frames skip from {} to {}", frames.len().saturating_sub(1), row.frame)));
        }
        if row.frame == frames.len() {
            frames.push(Vec::new());
            ids.push(Vec::new());
        }
        if row.frame + 1 != frames.len() {
            return Err(Error::Format(format!("marker rows for frame {} are not contiguous", row.frame)));
        }
        frames[row.frame].push(Vector3::new(row.x, row.y, row.z));
        ids[row.frame].push(row.particle);
    }
    let marker_ids = ids.first().cloned().unwrap_or_default();
    if let Some(t) = ids.iter().position(|f| *f != marker_ids) {
        return Err(Error::Format(format!("frame {t} lists a different marker set than frame 0")));
    }
    Ok(ObservationSequence { marker_ids, frames })
}

pub fn write_markers(path: impl AsRef<Path>, obs: &ObservationSequence) -> Result<()> {
    write_markers_csv(BufWriter::new(File::create(path.as_ref())?), obs)
}

pub fn read_markers(path: impl AsRef<Path>) -> Result<ObservationSequence> {
    read_markers_csv(BufReader::new(File::open(path.as_ref())?))
}

/// Points as `x,y,z` lines. A first line that does not parse as numbers is
/// taken as a header.
pub fn read_points_csv(r: impl Read) -> Result<Vec<Vector3<f64>>> {
    let mut rows = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for (line, record) in rows.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == 3 => out.push(Vector3::new(v[0], v[1], v[2])),
            Err(_) if line == 0 => continue,
            _ => return Err(Error::Format(format!("line {} is not an x,y,z triple", line + 1))),
        }
    }
    Ok(out)
}

pub fn write_points_csv(w: impl Write, points: &[Vector3<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "z"])?;
    for p in points {
        out.write_record([fmt(p[0]), fmt(p[1]), fmt(p[2])])?;
    }
    out.flush()?;
    Ok(())
}

/// Read points from a `DWPT` snapshot or an `x,y,z` CSV, by content.
pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Vector3<f64>>> {
    let bytes = std::fs::read(path.as_ref())?;
    if bytes.starts_with(PARTICLE_MAGIC) {
        Ok(read_particles_from(bytes.as_slice())?.x)
    } else {
        read_points_csv(bytes.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lbm::init_equilibrium;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_particles(seed: u64, n: usize) -> ParticleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParticleSet::new();
        for i in 0..n {
            p.push(Vector3::from_fn(|_, _| rng.gen()), rng.gen(), rng.gen(), rng.gen_range(0..4), (i % 3) as u32);
            p.v[i] = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            p.c[i] = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            p.f[i] = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        }
        p
    }

    proptest! {
        #[test]
        fn particles_round_trip(seed in 0u64..1000, n in 0usize..40) {
            let p = random_particles(seed, n);
            let mut buf = Vec::new();
            write_particles_to(&mut buf, &p).unwrap();
            prop_assert_eq!(buf.len(), 4 + 4 + 8 + n * (26 * 8 + 8));
            prop_assert_eq!(read_particles_from(buf.as_slice()).unwrap(), p);
        }

        #[test]
        fn force_field_round_trip(seed in 0u64..1000, steps in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = GridDims::new(2, 3, 4);
            let frames = (0..steps)
                .map(|_| NodalField::from_fn(dims, |_| Vector3::from_fn(|_, _| rng.gen_range(-1e3..1e3))))
                .collect();
            let f = ForceField { dims, frames };
            let mut buf = Vec::new();
            write_force_field_to(&mut buf, &f).unwrap();
            prop_assert_eq!(buf.len(), 4 + 4 + 4 + 12 + steps * dims.len() * 24);
            prop_assert_eq!(read_force_field_from(buf.as_slice()).unwrap(), f);
        }
    }

    #[test]
    fn particle_layout_is_field_ordered() {
        let mut p = ParticleSet::new();
        p.push(Vector3::new(1.0, 2.0, 3.0), 4.0, 5.0, 7, 1);
        let mut buf = Vec::new();
        write_particles_to(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"DWPT");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 1);
        let f = |k: usize| f64::from_le_bytes(buf[16 + 8 * k..24 + 8 * k].try_into().unwrap());
        assert_eq!([f(0), f(1), f(2), f(6), f(7)], [1.0, 2.0, 3.0, 4.0, 5.0]);
        // F = I row-major after C
        assert_eq!([f(17), f(18), f(21), f(25)], [1.0, 0.0, 1.0, 1.0]);
        let tail = &buf[16 + 26 * 8..];
        assert_eq!(u32::from_le_bytes(tail[..4].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(tail[4..8].try_into().unwrap()), 1);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = random_particles(1, 3);
        let mut buf = Vec::new();
        write_particles_to(&mut buf, &p).unwrap();
        assert!(matches!(read_particles_from(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_particles_from(extra.as_slice()), Err(Error::Format(_))));
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(matches!(read_particles_from(wrong.as_slice()), Err(Error::Format(_))));
        let mut version = buf;
        version[4] = 9;
        assert!(matches!(read_particles_from(version.as_slice()), Err(Error::Format(_))));
        assert!(matches!(GridDump::read_from(&b"DWFF"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn lattice_dump_round_trips() {
        let dims = GridDims::new(3, 4, 2);
        let mut field = init_equilibrium(LbmField::new(dims), 1.0, Vector3::new(0.05, 0.01, 0.0)).unwrap();
        field.solid[5] = true;
        field.rho[3] = 1.01;
        let dump = GridDump::from_lbm(&field);
        let names: Vec<&str> = dump.channels.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["rho", "ux", "uy", "uz", "Sxx", "Syy", "Szz", "Sxy", "Sxz", "Syz", "solid"]);
        let mut buf = Vec::new();
        dump.write_to(&mut buf).unwrap();
        let back = GridDump::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, dump);
        let restored = back.to_lbm().unwrap();
        assert_eq!(restored.rho, field.rho);
        assert_eq!(restored.u, field.u);
        assert_eq!(restored.s, field.s);
        assert_eq!(restored.solid, field.solid);
    }

    #[test]
    fn mask_and_guide_dumps_round_trip() {
        let dims = GridDims::cubic(3);
        let mut mask = SolidMask::empty(dims);
        mask.occupied[4] = true;
        let back = GridDump::read_from(write(&GridDump::from_mask(&mask)).as_slice()).unwrap();
        assert_eq!(back.to_mask().unwrap(), mask);

        let mut u: Vec<Vector3<f64>> = (0..dims.len()).map(|n| Vector3::new(n as f64, 1.0, -2.0)).collect();
        u[7] = Vector3::zeros();
        let guide = GuideField::from_velocity(dims, &u);
        let back = GridDump::read_from(write(&GridDump::from_guide(&guide)).as_slice()).unwrap().to_guide().unwrap();
        assert_eq!(back.dir[7], None);
        for (a, b) in guide.dir.iter().zip(&back.dir) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).norm() < 1e-15),
                (None, None) => {}
                _ => panic!("null pattern changed"),
            }
        }
    }

    fn write(dump: &GridDump) -> Vec<u8> {
        let mut buf = Vec::new();
        dump.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn markers_round_trip() {
        let obs = ObservationSequence {
            marker_ids: vec![3, 0, 9],
            frames: (0..4)
                .map(|t| (0..3).map(|k| Vector3::new(0.1 * t as f64, 1.0 / (k as f64 + 3.0), -0.3)).collect())
                .collect(),
        };
        let mut buf = Vec::new();
        write_markers_csv(&mut buf, &obs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("frame,particle,x,y,z\n"));
        assert_eq!(read_markers_csv(buf.as_slice()).unwrap(), obs);

        let bad = "frame,particle,x,y,z\n0,1,0,0,0\n2,1,0,0,0\n";
        assert!(matches!(read_markers_csv(bad.as_bytes()), Err(Error::Format(_))));
        let mixed = "frame,particle,x,y,z\n0,1,0,0,0\n1,2,0,0,0\n";
        assert!(matches!(read_markers_csv(mixed.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn point_csv_accepts_optional_header() {
        let pts = read_points_csv("x,y,z\n1,2,3\n 0.5 , -1e-3, 7\n".as_bytes()).unwrap();
        assert_eq!(pts, vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.5, -1e-3, 7.0)]);
        assert_eq!(read_points_csv("1,2,3\n".as_bytes()).unwrap().len(), 1);
        assert!(read_points_csv("1,2,3\n1,2\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &pts).unwrap();
        assert_eq!(read_points_csv(buf.as_slice()).unwrap(), pts);
    }
}
