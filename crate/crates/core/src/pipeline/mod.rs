//! Configuration, cached stage execution and the results report.
//!
//! Stages run in a fixed order: decompose, features, base training, fusion,
//! network metrics, diversity, significance. Each selected stage adds one
//! section to the [`ResultsReport`]; a failure is returned tagged with its
//! stage, and files already written to the output directory are kept.

mod cache;
mod config;
mod report;
pub mod verify;

use std::path::{Path, PathBuf};

use ndarray::{concatenate, Axis};

pub use cache::Cache;
pub use config::{PipelineConfig, Stage};
pub use report::{
    BandEnergy, DatasetSummary, FeatureSummary, LevelDiversity, LevelFusion, MethodAccuracy, ResultsReport,
    SignificanceSummary, SubbandAccuracy,
};

use crate::analysis::{diversity, membership_significance, oracle_outputs, ORACLE_RULE};
use crate::data::{encode_dataset, load_dataset, Dataset};
use crate::graphmetrics::{subband_summary, SubbandSummary};
use crate::learn::{
    build_decision_space, fsg_classify, make_fold_plan, single_subband_accuracy, DecisionSpace, FoldPlan, FoldSpaces,
};
use crate::mesh::{
    decode_feature_table, encode_feature_table, feature_table, feature_table_csv, mesh_networks, FeatureKind,
    FeatureTable,
};
use crate::synth::generate;
use crate::wavelet::{decode_stack, encode_stack, subband_stack_scoped, Subband, SubbandStack};
use crate::{Error, Result, TOOL_VERSION};

use config::sha256_hex;

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: ResultsReport,
    pub cache_hits: usize,
    pub cache_misses: usize,
    /// Files written under the output directory.
    pub written: Vec<PathBuf>,
}

struct Run<'a> {
    config: &'a PipelineConfig,
    cache: Cache,
    written: Vec<PathBuf>,
}

impl Run<'_> {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        if let Some(out) = &self.config.out {
            let path = out.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, contents)?;
            self.written.push(path);
        }
        Ok(())
    }

    fn write_opt(&mut self, name: &str, contents: Option<String>) -> Result<()> {
        match contents {
            Some(c) => self.write(name, c.as_bytes()),
            None => Ok(()),
        }
    }
}

fn load_input(config: &PipelineConfig) -> Result<Dataset> {
    match (&config.data, &config.synth) {
        (Some(path), _) => load_dataset(path, config.format),
        (None, Some(synth)) => generate(synth),
        (None, None) => Err(Error::Config("no dataset configured".into())),
    }
}

fn encode_stacks(stacks: &Vec<SubbandStack>, key: &str) -> Vec<u8> {
    let mut out = Vec::new();
    for s in stacks {
        let bytes = encode_stack(s, key);
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

fn decode_stacks(mut buf: &[u8], key: &str) -> Result<Vec<SubbandStack>> {
    let mut stacks = Vec::new();
    while !buf.is_empty() {
        let len = buf
            .get(..8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| Error::Format("truncated stack length".into()))?;
        let body = buf.get(8..8 + len).ok_or_else(|| Error::Format("truncated stack".into()))?;
        let (stack, provenance) = decode_stack(body)?;
        if provenance != key {
            return Err(Error::Format("stale stack".into()));
        }
        stacks.push(stack);
        buf = &buf[8 + len..];
    }
    Ok(stacks)
}

/// Stack test-fold decision spaces of all folds into one, rows in fold order.
pub fn pooled_test_space(folds: &[FoldSpaces]) -> Result<DecisionSpace> {
    let first = folds.first().ok_or_else(|| Error::invalid("no folds"))?;
    let views: Vec<_> = folds.iter().map(|f| f.test.matrix.view()).collect();
    Ok(DecisionSpace {
        matrix: concatenate(Axis(0), &views).map_err(|e| Error::Misaligned(e.to_string()))?,
        base_order: first.test.base_order.clone(),
        labels: folds.iter().flat_map(|f| f.test.labels.iter().copied()).collect(),
        subject_ids: folds.iter().flat_map(|f| f.test.subject_ids.iter().cloned()).collect(),
        rows: folds.iter().flat_map(|f| f.test.rows.iter().copied()).collect(),
        n_classes: first.test.n_classes,
    })
}

/// Selected bases up to level `l`: approximations `A0..Al` and details
/// `D1..Dl`, in selection order.
pub fn bases_up_to(selected: &[Subband], level: usize) -> Vec<Subband> {
    selected.iter().copied().filter(|b| b.level() <= level).collect()
}

fn sweep_levels(config: &PipelineConfig, selected: &[Subband]) -> Vec<(usize, Vec<Subband>)> {
    let mut out: Vec<(usize, Vec<Subband>)> = Vec::new();
    for l in 1..=config.levels {
        let bases = bases_up_to(selected, l);
        if !bases.is_empty() && out.last().is_none_or(|(_, prev)| *prev != bases) {
            out.push((l, bases));
        }
    }
    out
}

fn band_energy(stacks: &[SubbandStack], bands: &[Subband]) -> Vec<BandEnergy> {
    bands
        .iter()
        .map(|&b| {
            let (sum, count) = stacks.iter().fold((0.0, 0usize), |(s, n), st| {
                let m = st.band(b);
                (s + m.iter().map(|v| v * v).sum::<f64>(), n + m.len())
            });
            BandEnergy {
                subband: b,
                mean_square: sum / count.max(1) as f64,
            }
        })
        .collect()
}

/// Run the stages listed in `config.stages` and write the report and tables
/// to `config.out` when set.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let cache = match (&config.out, config.cache) {
        (Some(out), true) => Cache::at(&out.join("cache")).map_err(|e| e.in_stage("config"))?,
        _ => Cache::disabled(),
    };
    let config_hash = config.hash();
    let mut run = Run {
        config,
        cache,
        written: Vec::new(),
    };

    let dataset = load_input(config).map_err(|e| e.in_stage("load"))?;
    let min_scans = dataset.subjects.iter().map(|s| s.n_scans()).min().unwrap_or(0);
    config
        .validate_against(dataset.n_regions(), min_scans)
        .map_err(|e| e.in_stage("config"))?;
    let data_hash = sha256_hex(&encode_dataset(&dataset));
    let selected = config.selected_subbands();
    let mut normalized = config.clone();
    normalized.out = None;
    normalized.cache = true;
    let provenance = format!("meshband {TOOL_VERSION} config={config_hash}");
    run.write("config.toml", format!("# {provenance}\n{}", normalized.to_toml()).as_bytes())
        .map_err(|e| e.in_stage("config"))?;

    let plan: FoldPlan = make_fold_plan(&dataset, config.folds, config.seed).map_err(|e| e.in_stage("folds"))?;
    let mut report = ResultsReport {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config_hash.clone(),
        data_hash: data_hash.clone(),
        config: normalized,
        dataset: DatasetSummary {
            n_subjects: dataset.subjects.len(),
            n_sessions: dataset.n_sessions(),
            n_regions: dataset.n_regions(),
            n_classes: dataset.n_classes,
            region_names: dataset.region_names.clone(),
        },
        subbands: selected.clone(),
        fold_sizes: plan.fold_sizes(),
        decomposition: None,
        features: None,
        single_subband: None,
        fusion: None,
        metrics: None,
        diversity: None,
        significance: None,
    };

    // decompose
    let stack_key = Cache::key("decompose", &data_hash, &(config.family, config.levels, config.scope));
    let family = config.wavelet();
    let stacks: Vec<SubbandStack> = run
        .cache
        .bytes(
            "decompose",
            &stack_key,
            || {
                dataset
                    .subjects
                    .iter()
                    .map(|s| subband_stack_scoped(s, &family, config.levels, config.scope))
                    .collect()
            },
            encode_stacks,
            decode_stacks,
        )
        .map_err(|e| e.in_stage("decompose"))?;
    if config.runs(Stage::Decompose) {
        report.decomposition = Some(band_energy(&stacks, &Subband::all(config.levels)));
        let csv = report.decomposition_csv();
        run.write_opt("decomposition.csv", csv).map_err(|e| e.in_stage("decompose"))?;
        if config.out.is_some() {
            for s in &stacks {
                run.write(&format!("stacks/{}.bin", s.subject_id), &encode_stack(s, &provenance))
                    .map_err(|e| e.in_stage("decompose"))?;
            }
        }
    }

    let needs_tables = [Stage::Features, Stage::Single, Stage::Fusion, Stage::Diversity, Stage::Significance]
        .iter()
        .any(|s| config.runs(*s));
    let needs_spaces = [Stage::Fusion, Stage::Diversity, Stage::Significance]
        .iter()
        .any(|s| config.runs(*s));

    // features
    let params = config.mesh_params();
    let mut tables: Vec<FeatureTable> = Vec::new();
    let mut table_keys: Vec<String> = Vec::new();
    if needs_tables {
        for &band in &selected {
            let stage_params = match config.features {
                FeatureKind::RawSeries => serde_json::json!({ "band": band, "kind": config.features, "t_fix": config.t_fix }),
                kind => serde_json::json!({ "band": band, "kind": kind, "mesh": params }),
            };
            let key = Cache::key("features", &stack_key, &stage_params);
            let table = run
                .cache
                .bytes(
                    "features",
                    &key,
                    || feature_table(&dataset, &stacks, band, config.features, &params, config.t_fix),
                    encode_feature_table,
                    |buf, k| {
                        let (t, prov) = decode_feature_table(buf)?;
                        if prov != k {
                            return Err(Error::Format("stale feature table".into()));
                        }
                        Ok(t)
                    },
                )
                .map_err(|e| e.in_stage("features"))?;
            tables.push(table);
            table_keys.push(key);
        }
        report.features = Some(FeatureSummary {
            kind: config.features,
            n_rows: tables[0].n_rows(),
            n_features: tables[0].features.ncols(),
        });
        if config.runs(Stage::Features) && config.out.is_some() {
            for t in &tables {
                let csv = feature_table_csv(t, &provenance);
                run.write(&format!("features/{}_{}.csv", t.kind, t.subband), csv.as_bytes())
                    .map_err(|e| e.in_stage("features"))?;
            }
        }
    }

    // base layer
    let base_opts = config.base_options();
    let tables_key = sha256_hex(table_keys.join(",").as_bytes());
    let spaces: Option<Vec<FoldSpaces>> = if needs_spaces {
        let key = Cache::key("spaces", &tables_key, &(&plan, config.base, &base_opts));
        Some(
            run.cache
                .json("spaces", &key, || build_decision_space(&tables, &plan, config.base, &base_opts))
                .map_err(|e| e.in_stage("train"))?,
        )
    } else {
        None
    };

    if config.runs(Stage::Single) {
        let rows: Vec<SubbandAccuracy> = match &spaces {
            Some(folds) => selected
                .iter()
                .enumerate()
                .map(|(e, &band)| accuracy_row(band, folds.iter().map(|f| f.base_test_accuracy[e]).collect()))
                .collect(),
            None => {
                let key = Cache::key("single", &tables_key, &(&plan, config.base, &base_opts));
                let per_band: Vec<Vec<f64>> = run
                    .cache
                    .json("single", &key, || {
                        tables
                            .iter()
                            .map(|t| single_subband_accuracy(t, &plan, config.base, &base_opts))
                            .collect()
                    })
                    .map_err(|e| e.in_stage("train"))?;
                selected.iter().zip(per_band).map(|(&b, acc)| accuracy_row(b, acc)).collect()
            }
        };
        report.single_subband = Some(rows);
        let csv = report.single_csv();
        run.write_opt("single_subband.csv", csv).map_err(|e| e.in_stage("train"))?;
    }

    let levels = sweep_levels(config, &selected);

    if config.runs(Stage::Fusion) {
        let folds = spaces.as_ref().expect("decision spaces built for fusion");
        let meta_opts = config.meta_options();
        let mut out = Vec::with_capacity(levels.len());
        for (level, bases) in &levels {
            let sub: Vec<FoldSpaces> = folds.iter().map(|f| f.select(bases)).collect::<Result<_>>().map_err(|e| e.in_stage("fusion"))?;
            let idx: Vec<usize> = bases.iter().map(|b| selected.iter().position(|x| x == b).unwrap()).collect();
            let best_base_accuracy = idx
                .iter()
                .map(|&e| folds.iter().map(|f| f.base_test_accuracy[e]).sum::<f64>() / folds.len() as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            let methods = config
                .meta
                .iter()
                .map(|&m| {
                    let r = fsg_classify(&sub, m, &meta_opts)?;
                    Ok(MethodAccuracy {
                        method: m,
                        label: m.label().to_string(),
                        fold_accuracy: r.fold_accuracy,
                        mean_accuracy: r.mean_accuracy,
                        std_accuracy: r.std_accuracy,
                        confusion: r.confusion,
                    })
                })
                .collect::<Result<_>>()
                .map_err(|e| e.in_stage("fusion"))?;
            out.push(LevelFusion {
                level: *level,
                bases: bases.clone(),
                best_base_accuracy,
                methods,
            });
        }
        report.fusion = Some(out);
        let csv = report.fusion_csv();
        run.write_opt("fusion.csv", csv).map_err(|e| e.in_stage("fusion"))?;
    }

    if config.runs(Stage::Metrics) {
        let key = Cache::key("metrics", &stack_key, &(&selected, &params));
        let summary: Vec<SubbandSummary> = run
            .cache
            .json("metrics", &key, || {
                let mut nets = Vec::new();
                for &band in &selected {
                    nets.extend(mesh_networks(&dataset, &stacks, band, &params)?);
                }
                Ok(subband_summary(&nets))
            })
            .map_err(|e| e.in_stage("metrics"))?;
        report.metrics = Some(summary);
        let csv = report.metrics_csv();
        run.write_opt("metrics.csv", csv).map_err(|e| e.in_stage("metrics"))?;
    }

    let pooled = match &spaces {
        Some(folds) => Some(pooled_test_space(folds).map_err(|e| e.in_stage("diversity"))?),
        None => None,
    };

    if config.runs(Stage::Diversity) {
        let space = pooled.as_ref().expect("decision spaces built for diversity");
        let out = levels
            .iter()
            .map(|(level, bases)| {
                let d = diversity(&oracle_outputs(&space.select(bases)?));
                Ok(LevelDiversity {
                    level: *level,
                    bases: bases.clone(),
                    oracle_rule: ORACLE_RULE.to_string(),
                    diversity: d,
                })
            })
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("diversity"))?;
        report.diversity = Some(out);
        let csv = report.diversity_csv();
        run.write_opt("diversity.csv", csv).map_err(|e| e.in_stage("diversity"))?;
    }

    if config.runs(Stage::Significance) {
        let space = pooled.as_ref().expect("decision spaces built for significance");
        let t = membership_significance(
            space.matrix.view(),
            &space.labels,
            space.n_classes,
            space.n_classes,
            config.significance,
        )
        .map_err(|e| e.in_stage("significance"))?;
        if !t.degenerate.is_empty() {
            log::warn!("{} membership columns had a zero denominator; reported as 0", t.degenerate.len());
        }
        report.significance = Some(SignificanceSummary {
            mode: t.mode,
            bases: selected.clone(),
            z: t.z,
            block_max: t.block_max,
            n_degenerate: t.degenerate.len(),
        });
        let csv = report.significance_csv();
        run.write_opt("significance.csv", csv).map_err(|e| e.in_stage("significance"))?;
    }

    let json = report.to_json();
    run.write("report.json", json.as_bytes()).map_err(|e| e.in_stage("report"))?;
    Ok(PipelineOutcome {
        cache_hits: run.cache.hits(),
        cache_misses: run.cache.misses(),
        written: run.written,
        report,
    })
}

fn accuracy_row(subband: Subband, fold_accuracy: Vec<f64>) -> SubbandAccuracy {
    let n = fold_accuracy.len() as f64;
    let mean = fold_accuracy.iter().sum::<f64>() / n;
    let std = (fold_accuracy.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    SubbandAccuracy {
        subband,
        fold_accuracy,
        mean_accuracy: mean,
        std_accuracy: std,
    }
}

/// Read a report written by [`run_pipeline`].
pub fn read_report(path: &Path) -> Result<ResultsReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::MetaKind;
    use crate::synth::SynthConfig;

    fn small(seed: u64) -> PipelineConfig {
        PipelineConfig {
            synth: Some(SynthConfig {
                n_regions: 8,
                n_classes: 3,
                n_subjects: 6,
                session_scans: 64,
                levels: 3,
                arcs_per_class: 3,
                designated: vec![Subband::Detail(2), Subband::Detail(3), Subband::Approx(3)],
                seed,
                ..SynthConfig::default()
            }),
            levels: 3,
            p: 3,
            lambda: 2.0,
            folds: 3,
            seed,
            max_iter: 300,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn full_run_fills_every_section() {
        let out = run_pipeline(&small(1)).unwrap();
        let r = &out.report;
        assert_eq!(r.subbands, Subband::default_set(3));
        assert_eq!(r.decomposition.as_ref().unwrap().len(), 7);
        assert_eq!(r.single_subband.as_ref().unwrap().len(), 6);
        let fusion = r.fusion.as_ref().unwrap();
        assert_eq!(fusion.iter().map(|l| l.level).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(fusion[0].bases, vec![Subband::Approx(0), Subband::Approx(1)]);
        assert_eq!(fusion.last().unwrap().bases, r.subbands);
        for l in fusion {
            assert_eq!(l.methods.len(), 4);
            for m in &l.methods {
                assert!((0.0..=1.0).contains(&m.mean_accuracy));
                let total: usize = m.confusion.iter().flatten().sum();
                assert_eq!(total, r.dataset.n_sessions);
            }
        }
        assert_eq!(r.diversity.as_ref().unwrap().len(), 3);
        let sig = r.significance.as_ref().unwrap();
        assert_eq!(sig.z.len(), 3);
        assert_eq!(sig.z[0].len(), 3 * 6);
        assert_eq!(sig.block_max[0].len(), 6);
        assert_eq!(r.metrics.as_ref().unwrap().len(), 3 * 6);
        assert_eq!(out.cache_hits, 0);
    }

    #[test]
    fn single_stage_alone_matches_the_decision_space_path() {
        let full = run_pipeline(&small(2)).unwrap().report;
        let only = run_pipeline(&PipelineConfig {
            stages: [Stage::Single].into_iter().collect(),
            ..small(2)
        })
        .unwrap()
        .report;
        assert_eq!(full.single_subband, only.single_subband);
        assert!(only.fusion.is_none() && only.metrics.is_none() && only.decomposition.is_none());
    }

    #[test]
    fn rerun_hits_the_cache_and_reproduces_the_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            out: Some(dir.path().to_path_buf()),
            ..small(3)
        };
        let first = run_pipeline(&cfg).unwrap();
        assert_eq!(first.cache_hits, 0);
        let written = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let second = run_pipeline(&cfg).unwrap();
        assert!(second.cache_hits >= 3, "{}", second.cache_hits);
        assert_eq!(second.cache_misses, 0);
        assert_eq!(std::fs::read_to_string(dir.path().join("report.json")).unwrap(), written);
        assert_eq!(read_report(&dir.path().join("report.json")).unwrap(), second.report);
        for name in ["single_subband.csv", "fusion.csv", "diversity.csv", "significance.csv", "metrics.csv"] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(text.starts_with(&format!("# meshband {TOOL_VERSION} config={}", cfg.hash())), "{name}");
        }
    }

    #[test]
    fn changed_parameters_miss_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            out: Some(dir.path().to_path_buf()),
            stages: [Stage::Single].into_iter().collect(),
            ..small(4)
        };
        run_pipeline(&cfg).unwrap();
        let changed = run_pipeline(&PipelineConfig { lambda: 3.0, ..cfg.clone() }).unwrap();
        // the decomposition is shared, features and training are not
        assert_eq!(changed.cache_hits, 1);
        assert!(changed.cache_misses >= 2);
    }

    #[test]
    fn stage_failures_name_the_stage() {
        let err = run_pipeline(&PipelineConfig { p: 8, ..small(1) }).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "config", .. }), "{err}");
        let err = run_pipeline(&PipelineConfig {
            data: Some("/nonexistent/meshband".into()),
            ..small(1)
        })
        .unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "load", .. }), "{err}");
        let mut cfg = small(1);
        cfg.synth.as_mut().unwrap().n_subjects = 2;
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "folds", .. }), "{err}");
    }

    #[test]
    fn features_stage_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            out: Some(dir.path().to_path_buf()),
            stages: [Stage::Features].into_iter().collect(),
            features: FeatureKind::PairwiseCorr,
            ..small(5)
        };
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.report.features.as_ref().unwrap().n_features, 64);
        let text = std::fs::read_to_string(dir.path().join("features/corr_D2.csv")).unwrap();
        assert!(text.starts_with("# meshband"));
    }

    #[test]
    fn level_sweep_sets() {
        let sel = Subband::default_set(4);
        assert_eq!(
            bases_up_to(&sel, 2),
            vec![Subband::Approx(0), Subband::Approx(1), Subband::Approx(2), Subband::Detail(2)]
        );
        let cfg = PipelineConfig::default();
        let only_deep = vec![Subband::Detail(4)];
        assert_eq!(sweep_levels(&cfg, &only_deep), vec![(4, only_deep.clone())]);
        assert_eq!(MetaKind::ALL.len(), cfg.meta.len());
    }
}
