//! Artifact formats: CSV tables, JSON documents, binary checkpoints and
//! cloud archives.
//!
//! A checkpoint file is one line of compact JSON (the header, terminated by
//! `\n`) followed by the raw little-endian `f64` payload of every field
//! listed in the header, in order.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use fhn_core::integrator::SplitState;
use fhn_core::pullback::AttractorCloud;
use fhn_core::{Field, Grid, Parameters, State, StepConfig};
use serde::{Deserialize, Serialize};

use crate::LabError;

pub const CHECKPOINT_FORMAT: &str = "fhn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn ensure_dir(dir: &Path) -> Result<(), LabError> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), LabError> {
    let file = File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LabError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| LabError::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), LabError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, LabError> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))
}

/// Row of `series.csv`. `residual` is the energy-inequality residual on the
/// interval starting at this sample (empty on the last row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub u_l2_sq: f64,
    pub v_l2_sq: f64,
    pub grad_u_sq: f64,
    pub residual: Option<f64>,
}

/// Row of `diagnostics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub depth: f64,
    pub hausdorff_to_prev: Option<f64>,
    pub max_norm_u: f64,
    pub max_norm_v: f64,
    pub all_absorbed: bool,
}

/// Row of `sweep.csv`; the norms are empty when that `ε` failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub u_h1: Option<f64>,
    pub v_l2: Option<f64>,
    pub v_h1: Option<f64>,
    pub theoretical_v_bound: Option<f64>,
    pub v1_fraction: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub t: f64,
    pub grid: Grid,
    pub parameters: Parameters,
    pub step: StepConfig,
    pub fields: Vec<FieldInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    fn field(&self, name: &str) -> Result<Field, LabError> {
        let values = self
            .fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| LabError::Format(format!("checkpoint has no field `{name}`")))?;
        Ok(Field::from_values(&self.header.grid, values)?)
    }

    /// `(t, u, v)`; split checkpoints are recombined as `v = v₁ + v₂`.
    pub fn state(&self) -> Result<State, LabError> {
        if self.fields.iter().any(|(n, _)| n == "v") {
            Ok(State::new(self.header.t, self.field("u")?, self.field("v")?)?)
        } else {
            Ok(self.split_state()?.to_state())
        }
    }

    pub fn split_state(&self) -> Result<SplitState, LabError> {
        Ok(SplitState { t: self.header.t, u: self.field("u")?, v1: self.field("v1")?, v2: self.field("v2")? })
    }
}

fn write_checkpoint_fields(
    path: &Path,
    t: f64,
    parameters: &Parameters,
    step: &StepConfig,
    fields: &[(&str, &Field)],
) -> Result<(), LabError> {
    let grid = *fields[0].1.grid();
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        t,
        grid,
        parameters: *parameters,
        step: *step,
        fields: fields.iter().map(|(n, f)| FieldInfo { name: (*n).into(), len: f.values().len() }).collect(),
    };
    let file = File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let line = serde_json::to_string(&header).map_err(|e| LabError::Format(e.to_string()))?;
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| LabError::io(path, e));
    write(line.as_bytes())?;
    write(b"\n")?;
    for (_, f) in fields {
        for x in f.values() {
            write(&x.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn write_checkpoint(path: &Path, state: &State, parameters: &Parameters, step: &StepConfig) -> Result<(), LabError> {
    write_checkpoint_fields(path, state.t, parameters, step, &[("u", &state.u), ("v", &state.v)])
}

pub fn write_split_checkpoint(
    path: &Path,
    state: &SplitState,
    parameters: &Parameters,
    step: &StepConfig,
) -> Result<(), LabError> {
    write_checkpoint_fields(path, state.t, parameters, step, &[("u", &state.u), ("v1", &state.v1), ("v2", &state.v2)])
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, LabError> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| LabError::io(path, e))?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| LabError::Format(format!("{}: bad checkpoint header: {e}", path.display())))?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(LabError::Format(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            header.format,
            header.version
        )));
    }
    let mut fields = Vec::with_capacity(header.fields.len());
    for info in &header.fields {
        if info.len != header.grid.len() {
            return Err(LabError::Format(format!(
                "{}: field `{}` has {} values, grid has {}",
                path.display(),
                info.name,
                info.len,
                header.grid.len()
            )));
        }
        let mut bytes = vec![0u8; info.len * 8];
        r.read_exact(&mut bytes).map_err(|e| LabError::io(path, e))?;
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        fields.push((info.name.clone(), values));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| LabError::io(path, e))?;
    if !rest.is_empty() {
        return Err(LabError::Format(format!("{}: {} trailing bytes", path.display(), rest.len())));
    }
    Ok(Checkpoint { header, fields })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudManifest {
    pub tau: f64,
    pub depth: f64,
    pub members: Vec<String>,
}

/// Writes every point of `cloud` as a split checkpoint under `dir` plus a
/// `cloud.json` listing them.
pub fn write_cloud(
    dir: &Path,
    cloud: &AttractorCloud,
    parameters: &Parameters,
    step: &StepConfig,
) -> Result<(), LabError> {
    ensure_dir(dir)?;
    let mut members = Vec::with_capacity(cloud.points.len());
    for (i, p) in cloud.points.iter().enumerate() {
        let name = format!("member_{i:04}.ckpt");
        write_split_checkpoint(&dir.join(&name), p, parameters, step)?;
        members.push(name);
    }
    write_json(&dir.join("cloud.json"), &CloudManifest { tau: cloud.tau, depth: cloud.depth, members })
}

pub fn read_cloud(dir: &Path) -> Result<AttractorCloud, LabError> {
    let m: CloudManifest = read_json(&dir.join("cloud.json"))?;
    let points = m
        .members
        .iter()
        .map(|name| read_checkpoint(&dir.join(name))?.split_state())
        .collect::<Result<_, _>>()?;
    Ok(AttractorCloud { tau: m.tau, depth: m.depth, points })
}

/// `manifest.json`: everything needed to reproduce a run. Wall-clock data
/// lives in `timing.json` so that the manifest is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub experiment: String,
    pub config_sha256: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

pub fn artifact_names(dir: &Path) -> Result<Vec<String>, LabError> {
    let mut names: Vec<String> = Vec::new();
    let mut stack: Vec<PathBuf> = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| LabError::io(&d, e))? {
            let entry = entry.map_err(|e| LabError::io(&d, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(dir) {
                names.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    names.retain(|n| n != "manifest.json" && n != "timing.json");
    names.sort();
    Ok(names)
}
