//! One-vs-rest two-sample t statistics over class-membership columns.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceMode {
    /// `|m1 - m0| / (s_p sqrt(1/n1 + 1/n0))` with the pooled variance `s_p^2`.
    #[default]
    Pooled,
    /// `|m1 - m0| / sqrt(sd1/n1 - sd0/n0)` exactly as typeset in the source
    /// algorithm (standard deviations, minus sign).
    AsPrinted,
}

impl fmt::Display for SignificanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignificanceMode::Pooled => "pooled",
            SignificanceMode::AsPrinted => "as_printed",
        })
    }
}

impl FromStr for SignificanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(SignificanceMode::Pooled),
            "as_printed" | "as-printed" => Ok(SignificanceMode::AsPrinted),
            other => Err(Error::invalid(format!("unknown significance mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub mode: SignificanceMode,
    /// `z[c][j]`: class `c` against the rest, membership column `j`.
    pub z: Vec<Vec<f64>>,
    /// `block_max[c][b]`: largest `z[c][j]` within column block `b`.
    pub block_max: Vec<Vec<f64>>,
    /// `(class, column)` pairs whose statistic had a zero denominator and
    /// was reported as 0.
    pub degenerate: Vec<(usize, usize)>,
}

fn sample_mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
    (mu, var)
}

/// Two-sample statistic for one column; `None` when the denominator vanishes.
pub fn two_sample_z(group: &[f64], rest: &[f64], mode: SignificanceMode) -> Option<f64> {
    let (n1, n0) = (group.len() as f64, rest.len() as f64);
    let (m1, v1) = sample_mean_var(group);
    let (m0, v0) = sample_mean_var(rest);
    let den = match mode {
        SignificanceMode::Pooled => {
            let pooled = ((n1 - 1.0) * v1 + (n0 - 1.0) * v0) / (n1 + n0 - 2.0);
            pooled.sqrt() * (1.0 / n1 + 1.0 / n0).sqrt()
        }
        SignificanceMode::AsPrinted => {
            let radicand = v1.sqrt() / n1 - v0.sqrt() / n0;
            if radicand > 0.0 {
                radicand.sqrt()
            } else {
                0.0
            }
        }
    };
    if den > 0.0 && den.is_finite() {
        Some((m1 - m0).abs() / den)
    } else {
        None
    }
}

/// One-vs-rest statistics for every class and membership column, plus
/// per-block maxima with blocks of `block` consecutive columns.
pub fn membership_significance(
    memberships: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    block: usize,
    mode: SignificanceMode,
) -> Result<SignificanceTable> {
    let (n, f) = memberships.dim();
    if labels.len() != n {
        return Err(Error::Misaligned(format!("{n} rows but {} labels", labels.len())));
    }
    if block == 0 || f % block != 0 {
        return Err(Error::invalid(format!("{f} columns do not split into blocks of {block}")));
    }
    let mut z = Vec::with_capacity(n_classes);
    let mut degenerate = Vec::new();
    for c in 0..n_classes {
        let size = labels.iter().filter(|&&y| y == c).count();
        for (group, sz) in [(format!("task {}", c + 1), size), (format!("all but task {}", c + 1), n - size)] {
            if sz < 2 {
                return Err(Error::SmallGroup { group, size: sz });
            }
        }
        let split = |col: ArrayView1<f64>| -> (Vec<f64>, Vec<f64>) {
            let mut g = Vec::with_capacity(size);
            let mut r = Vec::with_capacity(n - size);
            for (v, &y) in col.iter().zip(labels) {
                if y == c {
                    g.push(*v);
                } else {
                    r.push(*v);
                }
            }
            (g, r)
        };
        let zc: Vec<f64> = (0..f)
            .map(|j| {
                let (g, r) = split(memberships.column(j));
                two_sample_z(&g, &r, mode).unwrap_or_else(|| {
                    degenerate.push((c, j));
                    0.0
                })
            })
            .collect();
        z.push(zc);
    }
    let block_max = z
        .iter()
        .map(|zc| zc.chunks(block).map(|b| b.iter().copied().fold(0.0, f64::max)).collect())
        .collect();
    Ok(SignificanceTable {
        mode,
        z,
        block_max,
        degenerate,
    })
}
