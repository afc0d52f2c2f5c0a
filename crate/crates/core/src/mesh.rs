//! Mesh networks: each region (the seed) is regressed on its `p` most
//! correlated regions with a ridge penalty, one local mesh per seed.
//!
//! `adjacency[[r, s]]` is the weight of the arc `s -> r`, so every row holds
//! exactly `p` nonzero entries and every node has in-degree `p`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::container::{Decoder, Encoder};
use crate::data::Dataset;
use crate::linalg::{cholesky_solve, mean, variance};
use crate::wavelet::{Subband, SubbandStack};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    /// Neighbors per seed region.
    pub p: usize,
    /// Ridge penalty.
    pub lambda: f64,
    /// z-score each region's session window before ranking and regression.
    pub standardize: bool,
}

impl Default for MeshParams {
    fn default() -> Self {
        Self {
            p: 40,
            lambda: 32.0,
            standardize: true,
        }
    }
}

fn is_flat(row: ArrayView1<f64>) -> bool {
    let sd = variance(row).sqrt();
    let rms = (row.iter().map(|v| v * v).sum::<f64>() / row.len().max(1) as f64).sqrt();
    sd <= 1e-12 * rms || sd == 0.0
}

fn check_rows(m: ArrayView2<f64>) -> Result<()> {
    for (r, row) in m.rows().into_iter().enumerate() {
        if is_flat(row) {
            return Err(Error::ZeroVariance(r));
        }
    }
    Ok(())
}

/// Pearson correlation of two equal-length series.
pub fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

/// z-score each row (population standard deviation).
pub fn standardize_rows(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_rows(m)?;
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let mu = mean(row.view());
        let sd = variance(row.view()).sqrt();
        row.mapv_inplace(|v| (v - mu) / sd);
    }
    Ok(out)
}

/// The `p` regions most correlated with a seed, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub seed: usize,
    pub neighbors: Vec<usize>,
    pub correlations: Vec<f64>,
}

/// Rank all other regions by Pearson correlation with `seed`; ties go to the
/// smaller region index.
pub fn functional_neighbors(session: ArrayView2<f64>, seed: usize, p: usize) -> Result<Neighborhood> {
    let (r, d) = session.dim();
    if seed >= r {
        return Err(Error::invalid(format!("seed {seed} outside 0..{r}")));
    }
    if p == 0 || p >= r {
        return Err(Error::invalid(format!("p = {p} must be in 1..{r}")));
    }
    if d < 3 {
        return Err(Error::invalid(format!("session has {d} scans; at least 3 are required")));
    }
    check_rows(session)?;

    let seed_row = session.row(seed);
    let mut ranked: Vec<(usize, f64)> = (0..r)
        .filter(|&s| s != seed)
        .map(|s| (s, pearson(seed_row, session.row(s))))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(p);
    Ok(Neighborhood {
        seed,
        neighbors: ranked.iter().map(|n| n.0).collect(),
        correlations: ranked.iter().map(|n| n.1).collect(),
    })
}

/// Ridge weights `w = (N'N + lambda I)^-1 N'y` of the seed series `y` on the
/// neighbor series `N`, plus the variance of the residual `y - N w`.
pub fn ridge_mesh(session: ArrayView2<f64>, hood: &Neighborhood, lambda: f64) -> Result<(Vec<f64>, f64)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda = {lambda} must be finite and >= 0")));
    }
    let p = hood.neighbors.len();
    let y = session.row(hood.seed);
    let cols: Vec<ArrayView1<f64>> = hood.neighbors.iter().map(|&s| session.row(s)).collect();

    let mut gram = Array2::<f64>::zeros((p, p));
    let mut rhs = Array1::<f64>::zeros(p);
    for i in 0..p {
        rhs[i] = cols[i].dot(&y);
        for j in 0..=i {
            let v = cols[i].dot(&cols[j]);
            gram[[i, j]] = v;
            gram[[j, i]] = v;
        }
        gram[[i, i]] += lambda;
    }
    let w = cholesky_solve(&gram, &rhs).ok_or(Error::Singular)?;

    let mut resid = y.to_owned();
    for (c, wi) in cols.iter().zip(w.iter()) {
        resid.scaled_add(-wi, c);
    }
    Ok((w.to_vec(), variance(resid.view())))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MeshMeta {
    pub subject_id: String,
    pub session: usize,
    /// Class index in `0..C`.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshNetwork {
    pub adjacency: Array2<f64>,
    pub subband: Subband,
    pub meta: MeshMeta,
    /// Residual variance of each seed's regression.
    pub residual_variance: Vec<f64>,
}

impl MeshNetwork {
    pub fn n_regions(&self) -> usize {
        self.adjacency.nrows()
    }
}

/// One local mesh per seed region, assembled into a directed network.
pub fn build_mesh_network(
    session: ArrayView2<f64>,
    params: &MeshParams,
    subband: Subband,
    meta: MeshMeta,
) -> Result<MeshNetwork> {
    let x = if params.standardize {
        standardize_rows(session)?
    } else {
        session.to_owned()
    };
    let r = x.nrows();
    let mut adjacency = Array2::<f64>::zeros((r, r));
    let mut residual_variance = Vec::with_capacity(r);
    for seed in 0..r {
        let hood = functional_neighbors(x.view(), seed, params.p)?;
        let (w, rv) = ridge_mesh(x.view(), &hood, params.lambda)?;
        for (&s, wi) in hood.neighbors.iter().zip(w) {
            adjacency[[seed, s]] = wi;
        }
        residual_variance.push(rv);
    }
    Ok(MeshNetwork {
        adjacency,
        subband,
        meta,
        residual_variance,
    })
}

/// Row-major flattening of the adjacency matrix.
pub fn embed_mesh(network: &MeshNetwork) -> Vec<f64> {
    network.adjacency.iter().copied().collect()
}

/// Inverse of [`embed_mesh`].
pub fn unflatten(features: &[f64]) -> Result<Array2<f64>> {
    let r = (features.len() as f64).sqrt().round() as usize;
    if r * r != features.len() {
        return Err(Error::invalid(format!("{} features is not a square count", features.len())));
    }
    Ok(Array2::from_shape_vec((r, r), features.to_vec()).unwrap())
}

/// Full `R × R` Pearson matrix, flattened row-major, unit diagonal.
pub fn pairwise_correlation_features(session: ArrayView2<f64>) -> Result<Vec<f64>> {
    let z = standardize_rows(session)?;
    let (r, d) = z.dim();
    let mut c = Array2::<f64>::eye(r);
    for i in 0..r {
        for j in (i + 1)..r {
            let v = z.row(i).dot(&z.row(j)) / d as f64;
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(c.into_iter().collect())
}

/// Each region row truncated or zero-padded to `t_fix`, rows concatenated.
pub fn raw_series_features(session: ArrayView2<f64>, t_fix: usize) -> Vec<f64> {
    let keep = t_fix.min(session.ncols());
    let mut out = Vec::with_capacity(session.nrows() * t_fix);
    for row in session.rows() {
        out.extend(row.iter().take(keep));
        out.extend(std::iter::repeat_n(0.0, t_fix - keep));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum FeatureKind {
    #[default]
    #[serde(rename = "mesh")]
    MeshArcs,
    #[serde(rename = "corr")]
    PairwiseCorr,
    #[serde(rename = "raw")]
    RawSeries,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::MeshArcs => "mesh",
            FeatureKind::PairwiseCorr => "corr",
            FeatureKind::RawSeries => "raw",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mesh" | "mesh_arcs" => Ok(FeatureKind::MeshArcs),
            "corr" | "pairwise_corr" => Ok(FeatureKind::PairwiseCorr),
            "raw" | "raw_series" => Ok(FeatureKind::RawSeries),
            other => Err(Error::invalid(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// Per-session embeddings for one subband.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub kind: FeatureKind,
    pub subband: Subband,
    /// `N × F`, one row per session in dataset order.
    pub features: Array2<f64>,
    /// Class index in `0..n_classes` per row.
    pub labels: Vec<usize>,
    pub subject_ids: Vec<String>,
    pub n_classes: usize,
}

impl FeatureTable {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }
}

fn session_windows<'a>(
    dataset: &'a Dataset,
    stacks: &'a [SubbandStack],
    band: Subband,
) -> Result<Vec<(ArrayView2<'a, f64>, MeshMeta)>> {
    if stacks.len() != dataset.subjects.len() {
        return Err(Error::Misaligned(format!(
            "{} stacks for {} subjects",
            stacks.len(),
            dataset.subjects.len()
        )));
    }
    let mut out = Vec::with_capacity(dataset.n_sessions());
    for (subj, stack) in dataset.subjects.iter().zip(stacks) {
        if subj.subject_id != stack.subject_id {
            return Err(Error::Misaligned(format!(
                "stack for {} paired with subject {}",
                stack.subject_id, subj.subject_id
            )));
        }
        band.check(stack.levels)?;
        let m = stack.band(band);
        for (q, s) in subj.sessions.iter().enumerate() {
            out.push((
                m.slice(ndarray::s![.., s.offset..s.end()]),
                MeshMeta {
                    subject_id: subj.subject_id.clone(),
                    session: q,
                    label: s.task_label - 1,
                },
            ));
        }
    }
    Ok(out)
}

/// Mesh networks for every session of the dataset in one subband.
pub fn mesh_networks(
    dataset: &Dataset,
    stacks: &[SubbandStack],
    band: Subband,
    params: &MeshParams,
) -> Result<Vec<MeshNetwork>> {
    session_windows(dataset, stacks, band)?
        .into_par_iter()
        .map(|(m, meta)| {
            let tag = format!("{} session {} {band}", meta.subject_id, meta.session);
            build_mesh_network(m, params, band, meta)
                .map_err(|e| Error::InvalidDataset(format!("{tag}: {e}")))
        })
        .collect()
}

/// Assemble a feature table from session-level vectors.
pub fn feature_table(
    dataset: &Dataset,
    stacks: &[SubbandStack],
    band: Subband,
    kind: FeatureKind,
    params: &MeshParams,
    t_fix: usize,
) -> Result<FeatureTable> {
    let windows = session_windows(dataset, stacks, band)?;
    let rows: Vec<Vec<f64>> = windows
        .par_iter()
        .map(|(m, meta)| {
            let tag = || format!("{} session {} {band}", meta.subject_id, meta.session);
            let v = match kind {
                FeatureKind::MeshArcs => {
                    embed_mesh(&build_mesh_network(*m, params, band, meta.clone()).map_err(|e| {
                        Error::InvalidDataset(format!("{}: {e}", tag()))
                    })?)
                }
                FeatureKind::PairwiseCorr => pairwise_correlation_features(*m)
                    .map_err(|e| Error::InvalidDataset(format!("{}: {e}", tag())))?,
                FeatureKind::RawSeries => raw_series_features(*m, t_fix),
            };
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let f = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(FeatureTable {
        kind,
        subband: band,
        features: Array2::from_shape_vec((windows.len(), f), flat).unwrap(),
        labels: windows.iter().map(|(_, m)| m.label).collect(),
        subject_ids: windows.iter().map(|(_, m)| m.subject_id.clone()).collect(),
        n_classes: dataset.n_classes,
    })
}

const TABLE_MAGIC: &[u8; 4] = b"MBFT";

pub fn encode_feature_table(t: &FeatureTable, provenance: &str) -> Vec<u8> {
    let mut enc = Encoder::new(TABLE_MAGIC);
    enc.str(provenance);
    enc.str(t.kind.name());
    enc.str(&t.subband.to_string());
    enc.u32(t.n_classes as u32);
    let (n, f) = t.features.dim();
    enc.usize(n);
    enc.usize(f);
    for (label, id) in t.labels.iter().zip(&t.subject_ids) {
        enc.u32(*label as u32);
        enc.str(id);
    }
    enc.f64s(t.features.iter());
    enc.finish()
}

pub fn decode_feature_table(bytes: &[u8]) -> Result<(FeatureTable, String)> {
    let mut dec = Decoder::new(bytes, TABLE_MAGIC)?;
    let provenance = dec.str()?;
    let kind = dec.str()?.parse()?;
    let subband = dec.str()?.parse()?;
    let n_classes = dec.u32()? as usize;
    let n = dec.usize()?;
    let f = dec.usize()?;
    let mut labels = Vec::with_capacity(n);
    let mut subject_ids = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(dec.u32()? as usize);
        subject_ids.push(dec.str()?);
    }
    let features = Array2::from_shape_vec((n, f), dec.f64s(n * f)?)
        .map_err(|e| Error::Format(e.to_string()))?;
    dec.finish()?;
    Ok((
        FeatureTable {
            kind,
            subband,
            features,
            labels,
            subject_ids,
            n_classes,
        },
        provenance,
    ))
}

/// CSV export: `subject_id,label,f0,f1,...` with task labels 1-based.
pub fn feature_table_csv(t: &FeatureTable, provenance: &str) -> String {
    use std::fmt::Write as _;
    let mut out = format!("# {provenance}\nsubject_id,task_label");
    for j in 0..t.features.ncols() {
        write!(out, ",f{j}").unwrap();
    }
    out.push('\n');
    for (i, row) in t.features.rows().into_iter().enumerate() {
        write!(out, "{},{}", t.subject_ids[i], t.labels[i] + 1).unwrap();
        for v in row {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}
