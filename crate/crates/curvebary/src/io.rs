//! On-disk schemas (JSON for measures, curves, processes, and oracle
//! instances; CSV for solver artifacts) and their conversion into domain
//! types. Loading always revalidates through the domain constructors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barycenter::ConvergenceRecord;
use crate::measures::{
    CurveSample, DensityFlags, DiscreteMeasure, Interpolation, MeasureCurve, MeasureError,
    TimeGrid,
};
use crate::oracle::{MultiMarginalInstance, OracleError};
use crate::ot::{Coupling, MapKind, OtError, TransportMap};
use crate::process::{ProcessError, ProcessRepresentation};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown interpolation {0:?} (expected \"nearest\" or \"quantile\")")]
    UnknownInterpolation(String),
    #[error("unknown map kind {0:?}")]
    UnknownMapKind(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|source| IoError::Parse {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("schema types serialize");
    text.push('\n');
    write_text(path, &text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl MeasureFile {
    pub fn from_measure(measure: &DiscreteMeasure) -> Self {
        MeasureFile {
            dim: measure.dim(),
            points: measure.points().to_vec(),
            weights: measure.weights().to_vec(),
        }
    }

    pub fn into_measure(self) -> Result<DiscreteMeasure, IoError> {
        let measure = DiscreteMeasure::new(self.points, self.weights)?;
        if measure.dim() != self.dim {
            return Err(MeasureError::MixedDimensions {
                left: self.dim,
                right: measure.dim(),
            }
            .into());
        }
        Ok(measure)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSampleFile {
    pub t: f64,
    pub measure: MeasureFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_ac: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linf: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveFile {
    pub samples: Vec<CurveSampleFile>,
    pub interpolation: String,
}

impl CurveFile {
    pub fn from_curve(curve: &MeasureCurve) -> Self {
        let samples = curve
            .samples()
            .iter()
            .map(|s| CurveSampleFile {
                t: s.t,
                measure: MeasureFile::from_measure(&s.measure),
                is_ac: s.density.as_ref().map(|d| d.is_ac),
                linf: s.density.as_ref().and_then(|d| d.linf_norm),
            })
            .collect();
        let interpolation = match curve.interpolation() {
            Interpolation::Nearest => "nearest",
            Interpolation::Quantile => "quantile",
        };
        CurveFile {
            samples,
            interpolation: interpolation.to_string(),
        }
    }

    pub fn into_curve(self) -> Result<MeasureCurve, IoError> {
        let interpolation = match self.interpolation.as_str() {
            "nearest" => Interpolation::Nearest,
            "quantile" => Interpolation::Quantile,
            other => return Err(IoError::UnknownInterpolation(other.to_string())),
        };
        let samples = self
            .samples
            .into_iter()
            .map(|s| {
                let density = if s.is_ac.is_some() || s.linf.is_some() {
                    Some(DensityFlags {
                        is_ac: s.is_ac.unwrap_or(false),
                        linf_norm: s.linf,
                    })
                } else {
                    None
                };
                Ok(CurveSample {
                    t: s.t,
                    measure: s.measure.into_measure()?,
                    density,
                })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(MeasureCurve::new(samples, interpolation)?)
    }
}

fn kind_name(kind: MapKind) -> &'static str {
    match kind {
        MapKind::ExactMonge => "exact_monge",
        MapKind::BarycentricProjection => "barycentric_projection",
        MapKind::Monotone1d => "monotone_1d",
    }
}

fn kind_from_name(name: &str) -> Result<MapKind, IoError> {
    match name {
        "exact_monge" => Ok(MapKind::ExactMonge),
        "barycentric_projection" => Ok(MapKind::BarycentricProjection),
        "monotone_1d" => Ok(MapKind::Monotone1d),
        other => Err(IoError::UnknownMapKind(other.to_string())),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessMapFile {
    pub t: f64,
    pub images: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessFile {
    pub base: MeasureFile,
    /// Quadrature weights of the time grid; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_weights: Option<Vec<f64>>,
    pub maps: Vec<ProcessMapFile>,
}

impl ProcessFile {
    pub fn from_process(proc: &ProcessRepresentation) -> Self {
        ProcessFile {
            base: MeasureFile::from_measure(proc.base()),
            grid_weights: Some(proc.grid().weights().to_vec()),
            maps: proc
                .time_maps()
                .iter()
                .map(|(t, map)| ProcessMapFile {
                    t: *t,
                    images: map.images().to_vec(),
                    kind: Some(kind_name(map.kind()).to_string()),
                    fidelity: Some(map.fidelity()),
                })
                .collect(),
        }
    }

    pub fn into_process(self) -> Result<ProcessRepresentation, IoError> {
        let base = self.base.into_measure()?;
        let nodes: Vec<f64> = self.maps.iter().map(|m| m.t).collect();
        let weights = match self.grid_weights {
            Some(w) => w,
            None => vec![1.0 / nodes.len().max(1) as f64; nodes.len()],
        };
        let grid = TimeGrid::new(nodes, weights)?;
        let maps = self
            .maps
            .into_iter()
            .map(|m| {
                let kind = match m.kind {
                    Some(name) => kind_from_name(&name)?,
                    None => MapKind::ExactMonge,
                };
                Ok(TransportMap::new(
                    base.clone(),
                    m.images,
                    kind,
                    m.fidelity.unwrap_or(0.0),
                )?)
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(ProcessRepresentation::new(base, maps, grid)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub marginals: Vec<MeasureFile>,
    pub weights: Vec<f64>,
}

impl InstanceFile {
    pub fn from_instance(instance: &MultiMarginalInstance) -> Self {
        InstanceFile {
            marginals: instance
                .marginals()
                .iter()
                .map(MeasureFile::from_measure)
                .collect(),
            weights: instance.weights().to_vec(),
        }
    }

    pub fn into_instance(self) -> Result<MultiMarginalInstance, IoError> {
        let marginals = self
            .marginals
            .into_iter()
            .map(MeasureFile::into_measure)
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(MultiMarginalInstance::new(marginals, self.weights)?)
    }
}

pub fn load_measure(path: &Path) -> Result<DiscreteMeasure, IoError> {
    let text = read_to_string(path)?;
    parse_json::<MeasureFile>(path, &text)?.into_measure()
}

pub fn save_measure(path: &Path, measure: &DiscreteMeasure) -> Result<(), IoError> {
    write_json(path, &MeasureFile::from_measure(measure))
}

pub fn load_curve(path: &Path) -> Result<MeasureCurve, IoError> {
    let text = read_to_string(path)?;
    parse_json::<CurveFile>(path, &text)?.into_curve()
}

pub fn save_curve(path: &Path, curve: &MeasureCurve) -> Result<(), IoError> {
    write_json(path, &CurveFile::from_curve(curve))
}

pub fn load_process(path: &Path) -> Result<ProcessRepresentation, IoError> {
    let text = read_to_string(path)?;
    parse_json::<ProcessFile>(path, &text)?.into_process()
}

pub fn save_process(path: &Path, proc: &ProcessRepresentation) -> Result<(), IoError> {
    write_json(path, &ProcessFile::from_process(proc))
}

pub fn load_instance(path: &Path) -> Result<MultiMarginalInstance, IoError> {
    let text = read_to_string(path)?;
    parse_json::<InstanceFile>(path, &text)?.into_instance()
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_json(path, value)
}

/// One row per schedule entry: n, objective, w2_step (empty on the first
/// row), fixed_point_residual.
pub fn write_convergence_csv(path: &Path, log: &[ConvergenceRecord]) -> Result<(), IoError> {
    let mut text = String::from("n,objective,w2_step,fixed_point_residual\n");
    for record in log {
        let step = record
            .w2_step
            .map(|s| s.to_string())
            .unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{}\n",
            record.n, record.objective, step, record.fixed_point_residual
        ));
    }
    write_text(path, &text)
}

/// One row per (base atom, grid node) pair: atom index, atom weight, node
/// time, then the image coordinates.
pub fn write_sample_paths_csv(
    path: &Path,
    proc: &ProcessRepresentation,
) -> Result<(), IoError> {
    let dim = proc.base().dim();
    let mut text = String::from("atom,weight,t");
    for d in 0..dim {
        text.push_str(&format!(",x{d}"));
    }
    text.push('\n');
    for (atom, &weight) in proc.base().weights().iter().enumerate() {
        for (t, map) in proc.time_maps() {
            text.push_str(&format!("{atom},{weight},{t}"));
            for c in map.image(atom) {
                text.push_str(&format!(",{c}"));
            }
            text.push('\n');
        }
    }
    write_text(path, &text)
}

/// Nonzero coupling entries as rows (row, col, mass).
pub fn write_coupling_csv(path: &Path, plan: &Coupling) -> Result<(), IoError> {
    let mut text = String::from("row,col,mass\n");
    for row in 0..plan.source().len() {
        for col in 0..plan.target().len() {
            let mass = plan.mass(row, col);
            if mass > 0.0 {
                text.push_str(&format!("{row},{col},{mass}\n"));
            }
        }
    }
    write_text(path, &text)
}
