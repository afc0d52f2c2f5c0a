//! CSV directory layout.
//!
//! ```text
//! dir/
//!   sessions.csv          subject_id,task_label,n_scans  (timeline order)
//!   subject_<id>.csv      R rows x T columns, no header
//!   subject_<id>/         alternative: region_<r>.csv voxel matrices (V_r x T)
//!   regions.csv           optional, one region name per line
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{region_average, tile_sessions, Dataset, SubjectRecord};
use crate::{Error, Result};

const SESSIONS_FILE: &str = "sessions.csv";
const REGIONS_FILE: &str = "regions.csv";
const SESSIONS_HEADER: &str = "subject_id,task_label,n_scans";

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parse a headerless numeric matrix; rows are lines, columns comma-separated.
fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .enumerate()
            .map(|(c, cell)| {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    parse_err(path, i + 1, format!("column {}: cannot parse `{}`", c + 1, cell.trim()))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(path, i + 1, format!("column {}: non-finite value", c + 1)));
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        match n_cols {
            None => n_cols = Some(row.len()),
            Some(n) if n != row.len() => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected {n} columns, found {}", row.len()),
                ))
            }
            _ => {}
        }
        values.extend(row);
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| parse_err(path, 1, "empty matrix"))?;
    Ok(Array2::from_shape_vec((n_rows, n_cols), values).expect("shape checked row by row"))
}

fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            // `{:?}` prints the shortest representation that round-trips.
            write!(out, "{v:?}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

struct SessionRow {
    subject: String,
    label: usize,
    n_scans: usize,
}

fn read_sessions(path: &Path) -> Result<Vec<SessionRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("subject_id")) {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(parse_err(path, i + 1, format!("expected 3 fields, found {}", cells.len())));
        }
        let label = cells[1]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad task label `{}`", cells[1])))?;
        let n_scans = cells[2]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad scan count `{}`", cells[2])))?;
        if label == 0 {
            return Err(parse_err(path, i + 1, "unknown task label 0; labels start at 1"));
        }
        rows.push(SessionRow {
            subject: cells[0].to_string(),
            label,
            n_scans,
        });
    }
    Ok(rows)
}

/// Average every `region_<r>.csv` voxel matrix in a subject directory.
fn read_voxel_subject(dir: &Path) -> Result<Array2<f64>> {
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(idx) = name
            .strip_prefix("region_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse().ok())
        {
            files.push((idx, path));
        }
    }
    files.sort_by_key(|(i, _)| *i);
    if files.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "{}: no region_<r>.csv files",
            dir.display()
        )));
    }
    let mut rows = Vec::with_capacity(files.len());
    for (expected, (idx, path)) in files.iter().enumerate() {
        if *idx != expected {
            return Err(Error::InvalidDataset(format!(
                "{}: missing region_{expected}.csv",
                dir.display()
            )));
        }
        let voxels = read_matrix(path)?;
        rows.push(region_average(voxels.view())?);
    }
    let t = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != t) {
        return Err(Error::InvalidDataset(format!(
            "{}: region {bad} has {} scans, expected {t}",
            dir.display(),
            rows[bad].len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(Array2::from_shape_vec((rows.len(), t), flat).unwrap())
}

pub(super) fn load(dir: &Path) -> Result<Dataset> {
    let sessions_path = dir.join(SESSIONS_FILE);
    let rows = read_sessions(&sessions_path)?;
    if rows.is_empty() {
        return Err(parse_err(&sessions_path, 1, "no sessions listed"));
    }

    let mut order: Vec<String> = Vec::new();
    for r in &rows {
        if !order.contains(&r.subject) {
            order.push(r.subject.clone());
        }
    }
    let n_classes = rows.iter().map(|r| r.label).max().unwrap();

    let mut subjects = Vec::with_capacity(order.len());
    for id in &order {
        let layout: Vec<(usize, usize)> = rows
            .iter()
            .filter(|r| &r.subject == id)
            .map(|r| (r.label, r.n_scans))
            .collect();
        let file = dir.join(format!("subject_{id}.csv"));
        let voxel_dir = dir.join(format!("subject_{id}"));
        let series = if file.is_file() {
            read_matrix(&file)?
        } else if voxel_dir.is_dir() {
            read_voxel_subject(&voxel_dir)?
        } else {
            return Err(Error::InvalidDataset(format!(
                "no series for subject {id}: expected {} or {}/",
                file.display(),
                voxel_dir.display()
            )));
        };
        subjects.push(SubjectRecord::new(id.clone(), series, tile_sessions(&layout))?);
    }

    let names_path = dir.join(REGIONS_FILE);
    let region_names = if names_path.is_file() {
        Some(
            fs::read_to_string(&names_path)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    } else {
        None
    };
    Dataset::new(subjects, n_classes, region_names)
}

pub(super) fn save(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut sessions = String::from(SESSIONS_HEADER);
    sessions.push('\n');
    for subj in &ds.subjects {
        for s in &subj.sessions {
            writeln!(sessions, "{},{},{}", subj.subject_id, s.task_label, s.n_scans).unwrap();
        }
        write_matrix(&dir.join(format!("subject_{}.csv", subj.subject_id)), &subj.series)?;
    }
    fs::write(dir.join(SESSIONS_FILE), sessions)?;
    if let Some(names) = &ds.region_names {
        fs::write(dir.join(REGIONS_FILE), names.join("\n") + "\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_dataset, save_dataset, DataFormat};

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn fixture(dir: &Path) {
        write(dir, "sessions.csv", "subject_id,task_label,n_scans\na,1,2\na,2,2\nb,2,1\nb,1,3\n");
        write(dir, "subject_a.csv", "1,2,3,4\n5,6,7,8\n");
        write(dir, "subject_b.csv", "0.5,0.25,0,1\n-1,-2,-3,-4\n");
    }

    #[test]
    fn loads_two_subject_fixture() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let ds = load_dataset(tmp.path(), DataFormat::Csv).unwrap();
        assert_eq!(ds.subjects.len(), 2);
        assert_eq!(ds.n_classes, 2);
        assert_eq!(ds.n_regions(), 2);
        assert_eq!(ds.subjects[1].sessions[1].offset, 1);
        assert_eq!(ds.subjects[0].series[[1, 2]], 7.0);
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(tmp.path(), "subject_b.csv", "0.5,0.25,0,1\n-1,NaN,-3,-4\n");
        let err = load_dataset(tmp.path(), DataFormat::Csv).unwrap_err();
        match err {
            Error::Parse { file, line, msg } => {
                assert!(file.ends_with("subject_b.csv"));
                assert_eq!(line, 2);
                assert!(msg.contains("column 2"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn label_zero_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(tmp.path(), "sessions.csv", "a,0,4\nb,1,4\n");
        assert!(matches!(
            load_dataset(tmp.path(), DataFormat::Csv),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn scan_count_mismatch_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(tmp.path(), "sessions.csv", "a,1,2\na,2,3\nb,2,1\nb,1,3\n");
        assert!(load_dataset(tmp.path(), DataFormat::Csv).is_err());
    }

    #[test]
    fn voxel_directory_is_region_averaged() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "sessions.csv", "v,1,3\n");
        let sub = tmp.path().join("subject_v");
        fs::create_dir(&sub).unwrap();
        write(&sub, "region_0.csv", "1,2,3\n3,4,5\n");
        write(&sub, "region_1.csv", "9,9,9\n");
        let ds = load_dataset(tmp.path(), DataFormat::Csv).unwrap();
        assert_eq!(
            ds.subjects[0].series,
            ndarray::array![[2.0, 3.0, 4.0], [9.0, 9.0, 9.0]]
        );
    }

    #[test]
    fn save_then_load_is_identity() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let mut ds = load_dataset(tmp.path(), DataFormat::Csv).unwrap();
        ds.subjects[0].series[[0, 0]] = std::f64::consts::PI / 7.0;
        ds.region_names = Some(vec!["x".into(), "y".into()]);
        let out = tmp.path().join("copy");
        save_dataset(&ds, &out, DataFormat::Csv).unwrap();
        assert_eq!(load_dataset(&out, DataFormat::Csv).unwrap(), ds);
    }
}
