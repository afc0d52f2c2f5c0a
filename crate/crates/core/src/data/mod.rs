//! Region time series, session layout and dataset persistence.
//!
//! A subject's series is an `R × T` matrix over its concatenated timeline.
//! Sessions are contiguous windows of that timeline, each carrying a task
//! label in `1..=C`.

mod binary;
pub(crate) mod container;
mod csv;

use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use self::binary::{decode_dataset, encode_dataset};

/// One task session inside a subject's concatenated timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSpec {
    /// Class index in `1..=C`.
    pub task_label: usize,
    pub n_scans: usize,
    pub offset: usize,
}

impl SessionSpec {
    pub fn end(&self) -> usize {
        self.offset + self.n_scans
    }
}

/// Lay out sessions back to back from `(task_label, n_scans)` pairs.
pub fn tile_sessions(layout: &[(usize, usize)]) -> Vec<SessionSpec> {
    let mut offset = 0;
    layout
        .iter()
        .map(|&(task_label, n_scans)| {
            let spec = SessionSpec {
                task_label,
                n_scans,
                offset,
            };
            offset += n_scans;
            spec
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    /// `R × T` region series.
    pub series: Array2<f64>,
    pub sessions: Vec<SessionSpec>,
}

impl SubjectRecord {
    /// Build a record, checking finiteness and that sessions tile the timeline.
    pub fn new(
        subject_id: impl Into<String>,
        series: Array2<f64>,
        sessions: Vec<SessionSpec>,
    ) -> Result<Self> {
        let rec = Self {
            subject_id: subject_id.into(),
            series,
            sessions,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn n_regions(&self) -> usize {
        self.series.nrows()
    }

    pub fn n_scans(&self) -> usize {
        self.series.ncols()
    }

    fn validate(&self) -> Result<()> {
        let id = &self.subject_id;
        if self.series.nrows() == 0 || self.series.ncols() == 0 {
            return Err(Error::InvalidDataset(format!("subject {id}: empty series")));
        }
        if let Some(((r, t), _)) = self.series.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "subject {id}: non-finite value at region {r}, scan {t}"
            )));
        }
        if self.sessions.is_empty() {
            return Err(Error::InvalidDataset(format!("subject {id}: no sessions")));
        }
        let mut expected = 0;
        for (q, s) in self.sessions.iter().enumerate() {
            if s.n_scans == 0 {
                return Err(Error::InvalidDataset(format!(
                    "subject {id}: session {q} has no scans"
                )));
            }
            if s.offset != expected {
                return Err(Error::InvalidDataset(format!(
                    "subject {id}: session {q} starts at {} but previous session ends at {expected}",
                    s.offset
                )));
            }
            expected = s.end();
        }
        if expected != self.n_scans() {
            return Err(Error::InvalidDataset(format!(
                "subject {id}: sessions cover {expected} scans but series has {}",
                self.n_scans()
            )));
        }
        Ok(())
    }

    /// `R × D_q` window of session `q`.
    pub fn session_matrix(&self, q: usize) -> ArrayView2<'_, f64> {
        let s = &self.sessions[q];
        self.series
            .slice(ndarray::s![.., s.offset..s.end()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<SubjectRecord>,
    pub n_classes: usize,
    pub region_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        subjects: Vec<SubjectRecord>,
        n_classes: usize,
        region_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let ds = Self {
            subjects,
            n_classes,
            region_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .subjects
            .first()
            .ok_or_else(|| Error::InvalidDataset("no subjects".into()))?;
        let r = first.n_regions();
        let mut seen = vec![false; self.n_classes];
        let mut ids = std::collections::HashSet::new();
        for subj in &self.subjects {
            subj.validate()?;
            if !ids.insert(subj.subject_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate subject id {}",
                    subj.subject_id
                )));
            }
            if subj.n_regions() != r {
                return Err(Error::InvalidDataset(format!(
                    "subject {} has {} regions, expected {r}",
                    subj.subject_id,
                    subj.n_regions()
                )));
            }
            for s in &subj.sessions {
                if s.task_label == 0 || s.task_label > self.n_classes {
                    return Err(Error::InvalidDataset(format!(
                        "subject {}: task label {} outside 1..={}",
                        subj.subject_id, s.task_label, self.n_classes
                    )));
                }
                seen[s.task_label - 1] = true;
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidDataset(format!(
                "no session carries task label {}",
                c + 1
            )));
        }
        if let Some(names) = &self.region_names {
            if names.len() != r {
                return Err(Error::InvalidDataset(format!(
                    "{} region names for {r} regions",
                    names.len()
                )));
            }
        }
        Ok(())
    }

    pub fn n_regions(&self) -> usize {
        self.subjects[0].n_regions()
    }

    pub fn n_sessions(&self) -> usize {
        self.subjects.iter().map(|s| s.sessions.len()).sum()
    }

    /// `(subject index, session index)` pairs in dataset order.
    pub fn session_index(&self) -> Vec<(usize, usize)> {
        self.subjects
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..s.sessions.len()).map(move |q| (i, q)))
            .collect()
    }
}

/// Mean over the voxel rows of a `V_r × T` matrix.
pub fn region_average(voxels: ArrayView2<f64>) -> Result<Array1<f64>> {
    if voxels.nrows() == 0 || voxels.ncols() == 0 {
        return Err(Error::EmptyRegion);
    }
    if voxels.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite voxel value".into()));
    }
    Ok(voxels.sum_axis(Axis(0)) / voxels.nrows() as f64)
}

/// Contiguous window `[offset, offset + n_scans)` of `signal`.
pub fn slice_session<'a>(
    signal: ArrayView1<'a, f64>,
    spec: &SessionSpec,
) -> Result<ArrayView1<'a, f64>> {
    if spec.end() > signal.len() {
        return Err(Error::SessionOutOfRange {
            offset: spec.offset,
            end: spec.end(),
            len: signal.len(),
        });
    }
    Ok(signal.slice_move(ndarray::s![spec.offset..spec.end()]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// Directory with `subject_<id>.csv` files and `sessions.csv`.
    #[default]
    Csv,
    /// Single binary container file.
    Bin,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "csv-dir" => Ok(DataFormat::Csv),
            "bin" | "binary" | "single-binary" => Ok(DataFormat::Bin),
            other => Err(Error::invalid(format!("unknown data format `{other}`"))),
        }
    }
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Csv => csv::load(path),
        DataFormat::Bin => {
            let bytes = std::fs::read(path)?;
            decode_dataset(&bytes)
        }
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    match format {
        DataFormat::Csv => csv::save(ds, path),
        DataFormat::Bin => {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, encode_dataset(ds))?;
            Ok(())
        }
    }
}
