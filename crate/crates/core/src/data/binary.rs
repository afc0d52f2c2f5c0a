use ndarray::Array2;

use super::container::{Decoder, Encoder};
use super::{Dataset, SessionSpec, SubjectRecord};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MBDS";

/// Serialize a dataset into the binary container.
///
/// Layout after the magic/version header:
/// `n_classes u32, R u32, n_subjects u32, has_names u8, [R names]`, then per
/// subject `id, T u64, n_sessions u32, (label u32, n_scans u64, offset u64)*,
/// R*T f64 row-major`.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut enc = Encoder::new(MAGIC);
    enc.u32(ds.n_classes as u32);
    enc.u32(ds.n_regions() as u32);
    enc.u32(ds.subjects.len() as u32);
    match &ds.region_names {
        Some(names) => {
            enc.u8(1);
            for n in names {
                enc.str(n);
            }
        }
        None => enc.u8(0),
    }
    for subj in &ds.subjects {
        enc.str(&subj.subject_id);
        enc.usize(subj.n_scans());
        enc.u32(subj.sessions.len() as u32);
        for s in &subj.sessions {
            enc.u32(s.task_label as u32);
            enc.usize(s.n_scans);
            enc.usize(s.offset);
        }
        for row in subj.series.rows() {
            enc.f64s(row.iter());
        }
    }
    enc.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut dec = Decoder::new(bytes, MAGIC)?;
    let n_classes = dec.u32()? as usize;
    let n_regions = dec.u32()? as usize;
    let n_subjects = dec.u32()? as usize;
    let region_names = match dec.u8()? {
        0 => None,
        1 => Some((0..n_regions).map(|_| dec.str()).collect::<Result<Vec<_>>>()?),
        other => return Err(Error::Format(format!("bad region-name flag {other}"))),
    };
    let mut subjects = Vec::with_capacity(n_subjects);
    for _ in 0..n_subjects {
        let id = dec.str()?;
        let t = dec.usize()?;
        let n_sessions = dec.u32()? as usize;
        let mut sessions = Vec::with_capacity(n_sessions);
        for _ in 0..n_sessions {
            sessions.push(SessionSpec {
                task_label: dec.u32()? as usize,
                n_scans: dec.usize()?,
                offset: dec.usize()?,
            });
        }
        let values = dec.f64s(n_regions * t)?;
        let series = Array2::from_shape_vec((n_regions, t), values)
            .map_err(|e| Error::Format(e.to_string()))?;
        subjects.push(SubjectRecord::new(id, series, sessions)?);
    }
    dec.finish()?;
    Dataset::new(subjects, n_classes, region_names)
}
