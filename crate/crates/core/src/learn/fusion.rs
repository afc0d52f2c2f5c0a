//! Subject-level folds, decision spaces and the two-layer fusion.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::{accuracy, argmax, predict_posteriors, train, ClassifierKind, TrainOptions};
use crate::data::Dataset;
use crate::linalg::mean_std;
use crate::mesh::FeatureTable;
use crate::wavelet::Subband;
use crate::{Error, Result};

/// Assignment of subjects to `k` folds; all sessions of a subject share a fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    /// Shuffle subject ids with a seeded generator, then deal them out
    /// round-robin.
    pub fn from_ids(ids: &[String], k: usize, seed: u64) -> Result<Self> {
        if k < 2 || k > ids.len() {
            return Err(Error::invalid(format!("k = {k} folds for {} subjects", ids.len())));
        }
        let mut order = ids.to_vec();
        order.sort();
        order.dedup();
        if order.len() != ids.len() {
            return Err(Error::invalid("duplicate subject ids"));
        }
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let assignment = order.into_iter().enumerate().map(|(i, id)| (id, i % k)).collect();
        Ok(Self { k, assignment })
    }

    pub fn fold_of(&self, subject: &str) -> Result<usize> {
        self.assignment
            .get(subject)
            .copied()
            .ok_or_else(|| Error::Misaligned(format!("subject {subject} has no fold")))
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in self.assignment.values() {
            sizes[*f] += 1;
        }
        sizes
    }
}

pub fn make_fold_plan(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let ids: Vec<String> = dataset.subjects.iter().map(|s| s.subject_id.clone()).collect();
    FoldPlan::from_ids(&ids, k, seed)
}

/// Concatenated class memberships of `E` base classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSpace {
    /// `N × (C·E)`; block `e` holds base `e`'s memberships.
    pub matrix: Array2<f64>,
    pub base_order: Vec<Subband>,
    pub labels: Vec<usize>,
    pub subject_ids: Vec<String>,
    /// Row indices into the source feature tables.
    pub rows: Vec<usize>,
    pub n_classes: usize,
}

impl DecisionSpace {
    pub fn n_bases(&self) -> usize {
        self.base_order.len()
    }

    pub fn block(&self, e: usize) -> ndarray::ArrayView2<'_, f64> {
        let c = self.n_classes;
        self.matrix.slice(ndarray::s![.., e * c..(e + 1) * c])
    }

    /// Keep only the listed bases, in the given order.
    pub fn select(&self, bases: &[Subband]) -> Result<DecisionSpace> {
        let idx: Vec<usize> = bases
            .iter()
            .map(|b| {
                self.base_order
                    .iter()
                    .position(|x| x == b)
                    .ok_or_else(|| Error::invalid(format!("subband {b} not in the decision space")))
            })
            .collect::<Result<_>>()?;
        let blocks: Vec<_> = idx.iter().map(|&e| self.block(e)).collect();
        Ok(DecisionSpace {
            matrix: ndarray::concatenate(Axis(1), &blocks).map_err(|e| Error::invalid(e.to_string()))?,
            base_order: bases.to_vec(),
            ..self.clone_meta()
        })
    }

    fn clone_meta(&self) -> DecisionSpace {
        DecisionSpace {
            matrix: Array2::zeros((0, 0)),
            base_order: Vec::new(),
            labels: self.labels.clone(),
            subject_ids: self.subject_ids.clone(),
            rows: self.rows.clone(),
            n_classes: self.n_classes,
        }
    }
}

/// Meta-training and test decision spaces of one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpaces {
    pub fold: usize,
    /// Memberships of training-fold sessions from inner leave-one-fold-out.
    pub train: DecisionSpace,
    /// Memberships of test-fold sessions from bases trained on all training folds.
    pub test: DecisionSpace,
    /// Inner cross-validated accuracy of each base on the training folds.
    pub base_train_accuracy: Vec<f64>,
    /// Accuracy of each base on the test fold.
    pub base_test_accuracy: Vec<f64>,
}

impl FoldSpaces {
    pub fn select(&self, bases: &[Subband]) -> Result<FoldSpaces> {
        let pick = |acc: &[f64]| -> Vec<f64> {
            bases
                .iter()
                .map(|b| acc[self.train.base_order.iter().position(|x| x == b).unwrap()])
                .collect()
        };
        let train = self.train.select(bases)?;
        Ok(FoldSpaces {
            fold: self.fold,
            test: self.test.select(bases)?,
            base_train_accuracy: pick(&self.base_train_accuracy),
            base_test_accuracy: pick(&self.base_test_accuracy),
            train,
        })
    }
}

fn check_tables(tables: &[FeatureTable]) -> Result<()> {
    let first = tables.first().ok_or_else(|| Error::invalid("no feature tables"))?;
    for t in tables {
        if t.labels != first.labels || t.subject_ids != first.subject_ids || t.n_classes != first.n_classes {
            return Err(Error::Misaligned(format!(
                "feature table for {} does not share the row order of {}",
                t.subband, first.subband
            )));
        }
    }
    Ok(())
}

fn take_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

struct BaseRun {
    train_memberships: Array2<f64>,
    test_memberships: Array2<f64>,
    inner_accuracy: f64,
    test_accuracy: f64,
}

fn run_base(
    table: &FeatureTable,
    folds: &[usize],
    outer: usize,
    kind: ClassifierKind,
    opts: &TrainOptions,
    inner_cv: bool,
) -> Result<BaseRun> {
    let n = folds.len();
    let c = table.n_classes;
    let train_rows: Vec<usize> = (0..n).filter(|&i| folds[i] != outer).collect();
    let test_rows: Vec<usize> = (0..n).filter(|&i| folds[i] == outer).collect();
    let fit = |rows: &[usize]| {
        let y: Vec<usize> = rows.iter().map(|&i| table.labels[i]).collect();
        train(kind, take_rows(&table.features, rows).view(), &y, c, opts)
    };

    let model = fit(&train_rows)?;
    let test_memberships = predict_posteriors(&model, take_rows(&table.features, &test_rows).view())?;
    let test_labels: Vec<usize> = test_rows.iter().map(|&i| table.labels[i]).collect();
    let test_accuracy = accuracy(&argmax_rows(&test_memberships), &test_labels);

    let mut train_memberships = Array2::zeros((train_rows.len(), c));
    if inner_cv {
        let k = folds.iter().max().unwrap() + 1;
        for inner in (0..k).filter(|&g| g != outer) {
            let fit_rows: Vec<usize> = train_rows.iter().copied().filter(|&i| folds[i] != inner).collect();
            let held: Vec<usize> = (0..train_rows.len()).filter(|&j| folds[train_rows[j]] == inner).collect();
            if held.is_empty() {
                continue;
            }
            let m = fit(&fit_rows)?;
            let held_rows: Vec<usize> = held.iter().map(|&j| train_rows[j]).collect();
            let p = predict_posteriors(&m, take_rows(&table.features, &held_rows).view())?;
            for (r, &j) in held.iter().enumerate() {
                train_memberships.row_mut(j).assign(&p.row(r));
            }
        }
    }
    let train_labels: Vec<usize> = train_rows.iter().map(|&i| table.labels[i]).collect();
    Ok(BaseRun {
        inner_accuracy: accuracy(&argmax_rows(&train_memberships), &train_labels),
        train_memberships,
        test_memberships,
        test_accuracy,
    })
}

fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows().into_iter().map(|r| argmax(r.iter().copied())).collect()
}

fn row_folds(table: &FeatureTable, plan: &FoldPlan) -> Result<Vec<usize>> {
    table.subject_ids.iter().map(|id| plan.fold_of(id)).collect()
}

/// For every outer fold: base classifiers per subband, nested
/// leave-one-fold-out memberships for meta-training, and direct test-fold
/// memberships.
pub fn build_decision_space(
    tables: &[FeatureTable],
    plan: &FoldPlan,
    base: ClassifierKind,
    opts: &TrainOptions,
) -> Result<Vec<FoldSpaces>> {
    check_tables(tables)?;
    if plan.k < 3 {
        return Err(Error::invalid(format!(
            "nested cross-validation needs k >= 3 folds, got {}",
            plan.k
        )));
    }
    let first = &tables[0];
    let folds = row_folds(first, plan)?;
    let jobs: Vec<(usize, usize)> = (0..plan.k).flat_map(|f| (0..tables.len()).map(move |e| (f, e))).collect();
    let runs: Vec<BaseRun> = jobs
        .par_iter()
        .map(|&(f, e)| {
            run_base(&tables[e], &folds, f, base, opts, true)
                .map_err(|err| Error::InvalidDataset(format!("fold {f}, base {}: {err}", tables[e].subband)))
        })
        .collect::<Result<_>>()?;

    let base_order: Vec<Subband> = tables.iter().map(|t| t.subband).collect();
    let space = |rows: Vec<usize>, blocks: Vec<&Array2<f64>>| -> DecisionSpace {
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        DecisionSpace {
            matrix: ndarray::concatenate(Axis(1), &views).unwrap(),
            base_order: base_order.clone(),
            labels: rows.iter().map(|&i| first.labels[i]).collect(),
            subject_ids: rows.iter().map(|&i| first.subject_ids[i].clone()).collect(),
            rows,
            n_classes: first.n_classes,
        }
    };
    Ok((0..plan.k)
        .map(|f| {
            let mine = &runs[f * tables.len()..(f + 1) * tables.len()];
            let train_rows = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            let test_rows = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            FoldSpaces {
                fold: f,
                train: space(train_rows, mine.iter().map(|r| &r.train_memberships).collect()),
                test: space(test_rows, mine.iter().map(|r| &r.test_memberships).collect()),
                base_train_accuracy: mine.iter().map(|r| r.inner_accuracy).collect(),
                base_test_accuracy: mine.iter().map(|r| r.test_accuracy).collect(),
            }
        })
        .collect())
}

/// Per-fold test accuracy of a single base classifier, without the inner
/// loop.
pub fn single_subband_accuracy(
    table: &FeatureTable,
    plan: &FoldPlan,
    base: ClassifierKind,
    opts: &TrainOptions,
) -> Result<Vec<f64>> {
    let folds = row_folds(table, plan)?;
    (0..plan.k)
        .into_par_iter()
        .map(|f| Ok(run_base(table, &folds, f, base, opts, false)?.test_accuracy))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum MetaKind {
    /// FSG-L
    #[default]
    #[serde(rename = "logistic")]
    Logistic,
    /// FSG-S
    #[serde(rename = "maxmargin")]
    MaxMargin,
    #[serde(rename = "mv")]
    MajorityVote,
    #[serde(rename = "wmv")]
    WeightedMajorityVote,
}

impl MetaKind {
    pub const ALL: [MetaKind; 4] = [
        MetaKind::Logistic,
        MetaKind::MaxMargin,
        MetaKind::MajorityVote,
        MetaKind::WeightedMajorityVote,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetaKind::Logistic => "logistic",
            MetaKind::MaxMargin => "maxmargin",
            MetaKind::MajorityVote => "mv",
            MetaKind::WeightedMajorityVote => "wmv",
        }
    }

    /// Table label: FSG-L, FSG-S, MV, WMV.
    pub fn label(self) -> &'static str {
        match self {
            MetaKind::Logistic => "FSG-L",
            MetaKind::MaxMargin => "FSG-S",
            MetaKind::MajorityVote => "MV",
            MetaKind::WeightedMajorityVote => "WMV",
        }
    }
}

impl fmt::Display for MetaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "fsg-l" => Ok(MetaKind::Logistic),
            "maxmargin" | "svm" | "fsg-s" => Ok(MetaKind::MaxMargin),
            "mv" => Ok(MetaKind::MajorityVote),
            "wmv" => Ok(MetaKind::WeightedMajorityVote),
            other => Err(Error::invalid(format!("unknown meta classifier `{other}`"))),
        }
    }
}

/// Plurality of per-base argmax votes, each counted with its weight. Ties go
/// to the larger membership summed over all bases, then to the lowest class.
pub fn weighted_majority_vote(space: &DecisionSpace, weights: &[f64]) -> Result<Vec<usize>> {
    if weights.len() != space.n_bases() {
        return Err(Error::Misaligned(format!(
            "{} weights for {} bases",
            weights.len(),
            space.n_bases()
        )));
    }
    let c = space.n_classes;
    Ok((0..space.matrix.nrows())
        .map(|i| {
            let mut tally = vec![0.0; c];
            let mut mass = vec![0.0; c];
            for (e, w) in weights.iter().enumerate() {
                let block = space.block(e);
                let row = block.row(i);
                tally[argmax(row.iter().copied())] += w;
                for k in 0..c {
                    mass[k] += row[k];
                }
            }
            let top = tally.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = (0..c).filter(|&k| (tally[k] - top).abs() <= 1e-12 * top.abs().max(1.0)).collect();
            *tied.iter().max_by(|&&a, &&b| mass[a].total_cmp(&mass[b]).then(b.cmp(&a))).unwrap()
        })
        .collect())
}

pub fn majority_vote(space: &DecisionSpace) -> Vec<usize> {
    weighted_majority_vote(space, &vec![1.0; space.n_bases()]).expect("one weight per base")
}

/// Fold-level and pooled results of one fusion method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub method: MetaKind,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// `confusion[true][predicted]` pooled over folds.
    pub confusion: Vec<Vec<usize>>,
    /// Predicted class per feature-table row.
    pub predictions: Vec<usize>,
}

/// Meta-layer classification of every outer fold.
pub fn fsg_classify(folds: &[FoldSpaces], meta: MetaKind, opts: &TrainOptions) -> Result<FusionResult> {
    let first = folds.first().ok_or_else(|| Error::invalid("no folds"))?;
    let c = first.test.n_classes;
    let per_fold: Vec<Vec<usize>> = folds
        .par_iter()
        .map(|fs| match meta {
            MetaKind::Logistic | MetaKind::MaxMargin => {
                let kind = if meta == MetaKind::Logistic {
                    ClassifierKind::MultinomialLogistic
                } else {
                    ClassifierKind::LinearMaxMargin
                };
                let model = train(kind, fs.train.matrix.view(), &fs.train.labels, c, opts)?;
                Ok(argmax_rows(&predict_posteriors(&model, fs.test.matrix.view())?))
            }
            MetaKind::MajorityVote => Ok(majority_vote(&fs.test)),
            MetaKind::WeightedMajorityVote => weighted_majority_vote(&fs.test, &fs.base_train_accuracy),
        })
        .collect::<Result<_>>()?;

    let n_rows = first.train.rows.len() + first.test.rows.len();
    let mut predictions = vec![0; n_rows];
    let mut confusion = vec![vec![0; c]; c];
    let mut fold_accuracy = Vec::with_capacity(folds.len());
    for (fs, pred) in folds.iter().zip(&per_fold) {
        fold_accuracy.push(accuracy(pred, &fs.test.labels));
        for ((&row, &p), &y) in fs.test.rows.iter().zip(pred).zip(&fs.test.labels) {
            predictions[row] = p;
            confusion[y][p] += 1;
        }
    }
    let (mean_accuracy, std_accuracy) = mean_std(&fold_accuracy);
    Ok(FusionResult {
        method: meta,
        fold_accuracy,
        mean_accuracy,
        std_accuracy,
        confusion,
        predictions,
    })
}
