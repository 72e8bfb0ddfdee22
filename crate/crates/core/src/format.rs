//! Text formats: the versioned library document, trajectory CSV and the
//! initial-conditions file.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MpError, Result};
use crate::types::{positive_finite, InitialCondition, LearnedMp, MpLibrary, Trajectory, Vec2};

pub const LIBRARY_FORMAT: &str = "mpjoin-library";
pub const LIBRARY_VERSION: u32 = 1;

#[derive(Serialize)]
struct LibraryDocOut<'a> {
    format: &'a str,
    version: u32,
    primitives: Vec<&'a LearnedMp>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryDocIn {
    #[allow(dead_code)]
    format: String,
    #[allow(dead_code)]
    version: u32,
    primitives: Vec<LearnedMp>,
}

/// Pretty-printed JSON, primitives ordered by id.
pub fn serialize_library(lib: &MpLibrary) -> Vec<u8> {
    let doc = LibraryDocOut {
        format: LIBRARY_FORMAT,
        version: LIBRARY_VERSION,
        primitives: lib.primitives.values().collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("library serialization is infallible");
    out.push(b'\n');
    out
}

pub fn parse_library(bytes: &[u8]) -> Result<MpLibrary> {
    let header: Header = serde_json::from_slice(bytes).map_err(json_error)?;
    if header.format != LIBRARY_FORMAT {
        return Err(MpError::Parse(format!(
            "not a motion-primitive library (format `{}`)",
            header.format
        )));
    }
    if header.version != LIBRARY_VERSION {
        return Err(MpError::UnsupportedVersion {
            found: header.version,
            expected: LIBRARY_VERSION,
        });
    }
    let doc: LibraryDocIn = serde_json::from_slice(bytes).map_err(json_error)?;
    let mut lib = MpLibrary::new();
    for mp in doc.primitives {
        check_finite(&mp)?;
        let id = mp.id.clone();
        if lib.insert(mp).is_some() {
            return Err(MpError::Parse(format!("duplicate primitive id `{id}`")));
        }
    }
    Ok(lib)
}

fn json_error(e: serde_json::Error) -> MpError {
    MpError::Parse(format!("{e} (line {}, column {})", e.line(), e.column()))
}

fn check_finite(mp: &LearnedMp) -> Result<()> {
    let scalars = [mp.mean_duration, mp.forcing_scale];
    let all = scalars
        .iter()
        .chain(&mp.bank.centers)
        .chain(&mp.bank.widths)
        .chain(mp.x.weights.iter())
        .chain(mp.y.weights.iter())
        .chain(&mp.x.singular_values)
        .chain(&mp.y.singular_values)
        .chain(mp.x.demo_s.iter())
        .chain(mp.y.demo_s.iter())
        .chain(&mp.demo_durations)
        .chain(mp.demo_goals.iter().flat_map(|g| g.iter()));
    for v in all {
        if !v.is_finite() {
            return Err(MpError::Parse(format!(
                "primitive `{}` has a non-finite field",
                mp.id
            )));
        }
    }
    Ok(())
}

pub fn read_library(path: &Path) -> Result<MpLibrary> {
    let bytes = std::fs::read(path)?;
    parse_library(&bytes)
}

pub fn write_library(path: &Path, lib: &MpLibrary) -> Result<()> {
    write_atomic(path, &serialize_library(lib))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| MpError::Io(e.error))?;
    Ok(())
}

/// Serializes `t,x,y[,vx,vy]` rows.
pub fn trajectory_to_csv(traj: &Trajectory) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let vel = traj.velocities();
    if vel.is_some() {
        w.write_record(["t", "x", "y", "vx", "vy"]).unwrap();
    } else {
        w.write_record(["t", "x", "y"]).unwrap();
    }
    for (i, (t, p)) in traj.times().iter().zip(traj.points()).enumerate() {
        let mut rec = vec![t.to_string(), p.x.to_string(), p.y.to_string()];
        if let Some(v) = vel {
            rec.push(v[i].x.to_string());
            rec.push(v[i].y.to_string());
        }
        w.write_record(&rec).unwrap();
    }
    w.into_inner().expect("in-memory csv writer")
}

/// Parses a trajectory CSV. With `require_uniform`, the time step must be
/// constant to 1e-6 relative.
pub fn parse_trajectory_csv<R: Read>(reader: R, require_uniform: bool) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_vel = match names.as_slice() {
        ["t", "x", "y"] => false,
        ["t", "x", "y", "vx", "vy"] => true,
        _ => {
            return Err(MpError::Parse(format!(
                "line 1: expected header `t,x,y[,vx,vy]`, got `{}`",
                names.join(",")
            )))
        }
    };
    let mut times = Vec::new();
    let mut points = Vec::new();
    let mut vels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            let v: f64 = raw
                .parse()
                .map_err(|_| MpError::Parse(format!("line {line}: `{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(MpError::Parse(format!("line {line}: non-finite value")));
            }
            Ok(v)
        };
        times.push(field(0)?);
        points.push(Vec2::new(field(1)?, field(2)?));
        if has_vel {
            vels.push(Vec2::new(field(3)?, field(4)?));
        }
    }
    for (i, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(MpError::Parse(format!(
                "line {}: timestamps must be strictly increasing",
                i + 3
            )));
        }
    }
    let mut traj = Trajectory::new(times, points)?;
    if require_uniform && !traj.is_uniform(1e-6) {
        return Err(MpError::Parse(
            "timestamps must have a constant step".into(),
        ));
    }
    if has_vel {
        traj = traj.with_velocities(vels)?;
    }
    Ok(traj)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let f = std::fs::File::open(path)?;
    parse_trajectory_csv(f, true).map_err(|e| MpError::Parse(format!("{}: {e}", path.display())))
}

fn csv_error(e: csv::Error) -> MpError {
    match e.position() {
        Some(p) => MpError::Parse(format!("line {}: {e}", p.line())),
        None => MpError::Parse(e.to_string()),
    }
}

pub const CONDITIONS_HEADER: [&str; 6] = ["id", "T", "x_init", "y_init", "x_g", "y_g"];

/// Parses the initial-conditions file: header `id,T,x_init,y_init,x_g,y_g`,
/// one row per segment in execution order.
pub fn parse_conditions<R: Read>(reader: R) -> Result<Vec<InitialCondition>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != CONDITIONS_HEADER {
        return Err(MpError::Parse(format!(
            "line 1: expected header `{}`",
            CONDITIONS_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(MpError::Parse(format!("line {line}: empty id")));
        }
        let mut nums = [0.0; 5];
        for (k, slot) in nums.iter_mut().enumerate() {
            let raw = rec.get(k + 1).unwrap_or("");
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    MpError::Parse(format!(
                        "line {line}: field `{}` = `{raw}` is not a finite number",
                        CONDITIONS_HEADER[k + 1]
                    ))
                })?;
        }
        if !positive_finite(nums[0]) {
            return Err(MpError::Parse(format!(
                "line {line}: duration must be positive"
            )));
        }
        out.push(InitialCondition {
            id,
            duration: nums[0],
            start: Vec2::new(nums[1], nums[2]),
            goal: Vec2::new(nums[3], nums[4]),
        });
    }
    Ok(out)
}

pub fn conditions_to_csv(conditions: &[InitialCondition]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CONDITIONS_HEADER).unwrap();
    for c in conditions {
        w.write_record([
            c.id.clone(),
            c.duration.to_string(),
            c.start.x.to_string(),
            c.start.y.to_string(),
            c.goal.x.to_string(),
            c.goal.y.to_string(),
        ])
        .unwrap();
    }
    w.into_inner().expect("in-memory csv writer")
}
