use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::analysis::{DiversityReport, SignificanceMode};
use crate::graphmetrics::SubbandSummary;
use crate::learn::MetaKind;
use crate::mesh::FeatureKind;
use crate::wavelet::Subband;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_subjects: usize,
    pub n_sessions: usize,
    pub n_regions: usize,
    pub n_classes: usize,
    pub region_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEnergy {
    pub subband: Subband,
    /// Mean squared value over subjects, regions and scans.
    pub mean_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub kind: FeatureKind,
    pub n_rows: usize,
    pub n_features: usize,
}

/// One row of the per-subband accuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandAccuracy {
    pub subband: Subband,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAccuracy {
    pub method: MetaKind,
    pub label: String,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// `confusion[true][predicted]` pooled over folds.
    pub confusion: Vec<Vec<usize>>,
}

/// Fusion over the bases `A0..Al, D2..Dl` that are selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFusion {
    pub level: usize,
    pub bases: Vec<Subband>,
    pub best_base_accuracy: f64,
    pub methods: Vec<MethodAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiversity {
    pub level: usize,
    pub bases: Vec<Subband>,
    pub oracle_rule: String,
    pub diversity: DiversityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceSummary {
    pub mode: SignificanceMode,
    /// Column blocks, one per base, each `n_classes` wide.
    pub bases: Vec<Subband>,
    /// `z[c][j]` for task `c + 1` against the rest.
    pub z: Vec<Vec<f64>>,
    /// `block_max[c][b]`: largest statistic of task `c + 1` within base `b`.
    pub block_max: Vec<Vec<f64>>,
    pub n_degenerate: usize,
}

/// Machine-readable result of one run. Contains no timestamps, so equal
/// configurations yield equal reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub tool_version: String,
    pub config_hash: String,
    pub data_hash: String,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub subbands: Vec<Subband>,
    pub fold_sizes: Vec<usize>,
    pub decomposition: Option<Vec<BandEnergy>>,
    pub features: Option<FeatureSummary>,
    pub single_subband: Option<Vec<SubbandAccuracy>>,
    pub fusion: Option<Vec<LevelFusion>>,
    pub metrics: Option<Vec<SubbandSummary>>,
    pub diversity: Option<Vec<LevelDiversity>>,
    pub significance: Option<SignificanceSummary>,
}

impl ResultsReport {
    pub fn header(&self) -> String {
        format!("# meshband {} config={}\n", self.tool_version, self.config_hash)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Mean of the per-subband mean accuracies.
    pub fn mean_single_accuracy(&self) -> Option<f64> {
        let rows = self.single_subband.as_ref()?;
        Some(rows.iter().map(|r| r.mean_accuracy).sum::<f64>() / rows.len() as f64)
    }

    pub fn best_single_accuracy(&self) -> Option<f64> {
        self.single_subband
            .as_ref()?
            .iter()
            .map(|r| r.mean_accuracy)
            .max_by(f64::total_cmp)
    }

    /// Result of `method` at the deepest level of the sweep.
    pub fn fusion_accuracy(&self, method: MetaKind) -> Option<f64> {
        self.fusion
            .as_ref()?
            .last()?
            .methods
            .iter()
            .find(|m| m.method == method)
            .map(|m| m.mean_accuracy)
    }

    pub fn single_csv(&self) -> Option<String> {
        let rows = self.single_subband.as_ref()?;
        let mut s = self.header();
        s.push_str("subband,mean_accuracy,std_accuracy,fold_accuracy\n");
        for r in rows {
            let folds: Vec<String> = r.fold_accuracy.iter().map(|a| a.to_string()).collect();
            writeln!(s, "{},{},{},{}", r.subband, r.mean_accuracy, r.std_accuracy, folds.join(";")).unwrap();
        }
        Some(s)
    }

    pub fn fusion_csv(&self) -> Option<String> {
        let levels = self.fusion.as_ref()?;
        let mut s = self.header();
        s.push_str("level,n_bases,method,mean_accuracy,std_accuracy,best_base_accuracy\n");
        for l in levels {
            for m in &l.methods {
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    l.level,
                    l.bases.len(),
                    m.label,
                    m.mean_accuracy,
                    m.std_accuracy,
                    l.best_base_accuracy
                )
                .unwrap();
            }
        }
        Some(s)
    }

    pub fn diversity_csv(&self) -> Option<String> {
        let levels = self.diversity.as_ref()?;
        let mut s = self.header();
        s.push_str("level,n_bases,disagreement,q,rho,entropy,kappa,kw,theta,warnings\n");
        for l in levels {
            let d = &l.diversity;
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                l.level,
                l.bases.len(),
                d.disagreement,
                d.mean_q,
                d.mean_rho,
                d.entropy,
                d.kappa,
                d.kw_variance,
                d.theta,
                d.warnings.len()
            )
            .unwrap();
        }
        Some(s)
    }

    /// One row per task, one column per base subband, holding the block
    /// maxima.
    pub fn significance_csv(&self) -> Option<String> {
        let t = self.significance.as_ref()?;
        let mut s = self.header();
        let bands: Vec<String> = t.bases.iter().map(|b| b.to_string()).collect();
        writeln!(s, "task,{}", bands.join(",")).unwrap();
        for (c, row) in t.block_max.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(s, "{},{}", c + 1, vals.join(",")).unwrap();
        }
        Some(s)
    }

    pub fn metrics_csv(&self) -> Option<String> {
        let rows = self.metrics.as_ref()?;
        let mut s = self.header();
        s.push_str(
            "task,subband,n_sessions,mean_out_degree,std_out_degree,mean_in_degree,mean_out_strength,\
             mean_abs_out_strength,mean_betweenness,total_strength,global_efficiency\n",
        );
        for r in rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.task_label,
                r.subband,
                r.n_sessions,
                mean(&r.mean_out_degree),
                r.std_out_degree,
                mean(&r.mean_in_degree),
                mean(&r.mean_out_strength),
                mean(&r.mean_abs_out_strength),
                mean(&r.mean_betweenness),
                r.total_strength,
                r.global_efficiency
            )
            .unwrap();
        }
        Some(s)
    }

    pub fn decomposition_csv(&self) -> Option<String> {
        let rows = self.decomposition.as_ref()?;
        let mut s = self.header();
        s.push_str("subband,mean_square\n");
        for r in rows {
            writeln!(s, "{},{}", r.subband, r.mean_square).unwrap();
        }
        Some(s)
    }

    /// Plain-text tables for the terminal.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let d = &self.dataset;
        writeln!(
            s,
            "meshband {}  config {}\n{} subjects, {} sessions, {} regions, {} tasks; folds {:?}",
            self.tool_version,
            &self.config_hash[..12],
            d.n_subjects,
            d.n_sessions,
            d.n_regions,
            d.n_classes,
            self.fold_sizes
        )
        .unwrap();
        if let Some(rows) = &self.single_subband {
            writeln!(s, "\nsubband  accuracy (mean ± std over folds)").unwrap();
            for r in rows {
                writeln!(s, "{:<8} {:.4} ± {:.4}", r.subband.to_string(), r.mean_accuracy, r.std_accuracy).unwrap();
            }
        }
        if let Some(levels) = &self.fusion {
            writeln!(s, "\nlevel  bases  method  accuracy").unwrap();
            for l in levels {
                for m in &l.methods {
                    writeln!(
                        s,
                        "{:<6} {:<6} {:<7} {:.4} ± {:.4}",
                        l.level,
                        l.bases.len(),
                        m.label,
                        m.mean_accuracy,
                        m.std_accuracy
                    )
                    .unwrap();
                }
            }
        }
        if let Some(levels) = &self.diversity {
            writeln!(s, "\nlevel  disagr  Q       rho     ent     kappa   KW      theta").unwrap();
            for l in levels {
                let d = &l.diversity;
                writeln!(
                    s,
                    "{:<6} {:.4}  {:+.4} {:+.4} {:.4}  {:+.4} {:.4}  {:.4}",
                    l.level, d.disagreement, d.mean_q, d.mean_rho, d.entropy, d.kappa, d.kw_variance, d.theta
                )
                .unwrap();
            }
        }
        if let Some(t) = &self.significance {
            let best = t.block_max.iter().flatten().copied().fold(0.0, f64::max);
            writeln!(s, "\nsignificance ({}): largest z = {best:.3}, {} degenerate columns", t.mode, t.n_degenerate)
                .unwrap();
        }
        if let Some(rows) = &self.metrics {
            writeln!(s, "\nmetrics: {} (task, subband) groups", rows.len()).unwrap();
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
