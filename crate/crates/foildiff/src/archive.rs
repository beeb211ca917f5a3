//! Coordinate-file IO and the JSON dataset archive written by `ingest`.

use std::fs;
use std::path::{Path, PathBuf};

use foildiff_core::aero::{self, AeroCoefficients, FlowCondition};
use foildiff_core::denoiser::ConditionKind;
use foildiff_core::geometry::{
    self, canonical_grid, AirfoilProfile, CanonicalSample, GeometryError, CANONICAL_POINTS, SURFACE_POINTS,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ARCHIVE_VERSION: u32 = 1;
pub const ARCHIVE_FILE: &str = "dataset.json";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not a dataset archive: {source}")]
    Format {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: archive version {found}, expected {ARCHIVE_VERSION}")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: entry {index} does not hold {SURFACE_POINTS} values per surface")]
    BadEntry { path: PathBuf, index: usize },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A file that could not be ingested, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub name: String,
    pub file: String,
    /// Upper surface, trailing edge to leading edge.
    pub upper: Vec<f64>,
    /// Lower surface, leading edge to trailing edge.
    pub lower: Vec<f64>,
    pub thickness_ratio: f64,
    pub max_camber: f64,
    pub self_intersecting: bool,
    /// Coefficients at the archive's flow condition, absent when the oracle
    /// failed.
    pub aero: Option<AeroCoefficients>,
    pub aero_error: Option<String>,
}

impl ArchiveEntry {
    pub fn sample(&self) -> CanonicalSample {
        let mut s = CanonicalSample::zeros();
        s.upper.copy_from_slice(&self.upper);
        s.lower.copy_from_slice(&self.lower);
        s
    }

    /// The conditioning quantity of this entry, if known.
    pub fn value(&self, kind: ConditionKind) -> Option<f64> {
        match kind {
            ConditionKind::LiftCoefficient => self.aero.map(|a| a.cl),
            ConditionKind::DragCoefficient => self.aero.map(|a| a.cd),
            ConditionKind::MaxThickness => Some(self.thickness_ratio),
            ConditionKind::MaxCamber => Some(self.max_camber),
            ConditionKind::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArchive {
    pub version: u32,
    pub flow: FlowCondition,
    pub entries: Vec<ArchiveEntry>,
    pub rejected: Vec<Rejection>,
}

impl DatasetArchive {
    pub fn samples(&self) -> Vec<CanonicalSample> {
        self.entries.iter().map(ArchiveEntry::sample).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("archive fields are finite");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), ArchiveError> {
        fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, ArchiveError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let archive: Self = serde_json::from_str(&text).map_err(|source| ArchiveError::Format {
            path: path.to_path_buf(),
            source,
        })?;
        if archive.version != ARCHIVE_VERSION {
            return Err(ArchiveError::Version {
                path: path.to_path_buf(),
                found: archive.version,
            });
        }
        for (index, e) in archive.entries.iter().enumerate() {
            if e.upper.len() != SURFACE_POINTS || e.lower.len() != SURFACE_POINTS {
                return Err(ArchiveError::BadEntry {
                    path: path.to_path_buf(),
                    index,
                });
            }
        }
        Ok(archive)
    }
}

/// Non-hidden regular files of `dir`, sorted by name.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>, ArchiveError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Canonical form of a parsed profile. Profiles already on the canonical
/// grid (such as generated samples) are taken as they are; anything else is
/// normalized and repanelized.
pub fn to_canonical_sample(profile: &AirfoilProfile) -> Result<CanonicalSample, GeometryError> {
    if profile.points.len() == CANONICAL_POINTS {
        let grid = canonical_grid();
        let on_grid = (0..SURFACE_POINTS).all(|k| {
            (profile.points[k].x - grid[SURFACE_POINTS - 1 - k]).abs() <= 1e-6
                && (profile.points[SURFACE_POINTS + k].x - grid[k]).abs() <= 1e-6
        });
        if on_grid {
            return geometry::to_canonical(profile);
        }
    }
    geometry::to_canonical(&geometry::canonicalize(profile)?)
}

/// Reads and canonicalizes one coordinate file.
pub fn read_profile(path: &Path) -> Result<(AirfoilProfile, CanonicalSample), String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    let text = String::from_utf8(bytes).map_err(|_| "not UTF-8 text".to_string())?;
    let profile = geometry::parse_selig(&text).map_err(|e| e.to_string())?;
    let sample = to_canonical_sample(&profile).map_err(|e| e.to_string())?;
    Ok((profile, sample))
}

/// Builds an archive entry, evaluating geometry and coefficients.
pub fn entry_for(name: &str, file: &str, sample: &CanonicalSample, flow: &FlowCondition) -> Result<ArchiveEntry, String> {
    let canonical = geometry::from_canonical(sample, name);
    let metrics = geometry::geometric_metrics(&canonical).map_err(|e| e.to_string())?;
    let (aero, aero_error) = match aero::evaluate(&canonical, flow) {
        Ok(c) if c.cl.is_finite() && c.cd.is_finite() && c.lift_to_drag.is_finite() => (Some(c), None),
        Ok(_) => (None, Some("non-finite coefficients".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ArchiveEntry {
        name: name.to_string(),
        file: file.to_string(),
        upper: sample.upper.to_vec(),
        lower: sample.lower.to_vec(),
        thickness_ratio: metrics.thickness_ratio,
        max_camber: metrics.max_camber,
        self_intersecting: metrics.self_intersecting,
        aero,
        aero_error,
    })
}

/// Parses every file of `dir` into an archive. Unreadable or invalid files
/// are listed as rejections.
pub fn build_archive(dir: &Path, flow: &FlowCondition) -> Result<DatasetArchive, ArchiveError> {
    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    for path in list_files(dir)? {
        let file = file_name(&path);
        let built = read_profile(&path).and_then(|(p, s)| entry_for(&p.name, &file, &s, flow));
        match built {
            Ok(e) => entries.push(e),
            Err(reason) => rejected.push(Rejection { file, reason }),
        }
    }
    Ok(DatasetArchive {
        version: ARCHIVE_VERSION,
        flow: *flow,
        entries,
        rejected,
    })
}
