use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::SignificanceMode;
use crate::data::DataFormat;
use crate::learn::{ClassifierKind, MetaKind, TrainOptions};
use crate::mesh::{FeatureKind, MeshParams};
use crate::synth::SynthConfig;
use crate::wavelet::{padded_length, DecompositionScope, Subband, WaveletFamily, WaveletKind};
use crate::{Error, Result};

/// Pipeline stages; each report section belongs to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decompose,
    Features,
    /// Per-subband base accuracy.
    Single,
    /// Stacked fusion and majority votes over the level sweep.
    Fusion,
    Metrics,
    Diversity,
    Significance,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Decompose,
        Stage::Features,
        Stage::Single,
        Stage::Fusion,
        Stage::Metrics,
        Stage::Diversity,
        Stage::Significance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Decompose => "decompose",
            Stage::Features => "features",
            Stage::Single => "single",
            Stage::Fusion => "fusion",
            Stage::Metrics => "metrics",
            Stage::Diversity => "diversity",
            Stage::Significance => "significance",
        }
    }
}

/// Everything a run depends on. Loaded from TOML; unset keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Dataset location; when absent, `synth` is generated in memory.
    pub data: Option<PathBuf>,
    pub format: DataFormat,
    pub synth: Option<SynthConfig>,
    pub family: WaveletKind,
    pub levels: usize,
    pub scope: DecompositionScope,
    /// Base subbands; defaults to every subband except `D1`.
    pub subbands: Option<Vec<Subband>>,
    pub p: usize,
    pub lambda: f64,
    pub standardize: bool,
    pub features: FeatureKind,
    /// Raw-series length per region.
    pub t_fix: usize,
    pub base: ClassifierKind,
    pub meta: Vec<MetaKind>,
    pub folds: usize,
    pub seed: u64,
    pub reg_base: f64,
    pub reg_meta: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub significance: SignificanceMode,
    pub stages: BTreeSet<Stage>,
    /// Output directory; the cache lives in `out/cache`.
    pub out: Option<PathBuf>,
    pub cache: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mesh = MeshParams::default();
        let train = TrainOptions::default();
        Self {
            data: None,
            format: DataFormat::default(),
            synth: None,
            family: WaveletKind::Haar,
            levels: 4,
            scope: DecompositionScope::Subject,
            subbands: None,
            p: mesh.p,
            lambda: mesh.lambda,
            standardize: mesh.standardize,
            features: FeatureKind::MeshArcs,
            t_fix: 405,
            base: ClassifierKind::MultinomialLogistic,
            meta: MetaKind::ALL.to_vec(),
            folds: 5,
            seed: 0,
            reg_base: train.reg,
            reg_meta: train.reg,
            max_iter: train.max_iter,
            tol: train.tol,
            significance: SignificanceMode::Pooled,
            stages: Stage::ALL.into_iter().collect(),
            out: None,
            cache: true,
        }
    }
}

impl PipelineConfig {
    /// The desk-scale synthetic benchmark: 20 regions, 7 classes, 4 levels,
    /// `p = 5`, `lambda = 4`.
    pub fn synthetic_benchmark(seed: u64) -> Self {
        Self {
            synth: Some(SynthConfig { seed, ..SynthConfig::default() }),
            levels: 4,
            p: 5,
            lambda: 4.0,
            seed,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn wavelet(&self) -> WaveletFamily {
        WaveletFamily::new(self.family)
    }

    pub fn mesh_params(&self) -> MeshParams {
        MeshParams {
            p: self.p,
            lambda: self.lambda,
            standardize: self.standardize,
        }
    }

    pub fn base_options(&self) -> TrainOptions {
        TrainOptions {
            reg: self.reg_base,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
        }
    }

    pub fn meta_options(&self) -> TrainOptions {
        TrainOptions {
            reg: self.reg_meta,
            ..self.base_options()
        }
    }

    pub fn selected_subbands(&self) -> Vec<Subband> {
        self.subbands.clone().unwrap_or_else(|| Subband::default_set(self.levels))
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Checks that need no data. Region and scan counts are checked once
    /// the dataset is loaded.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.data.is_none() && self.synth.is_none() {
            return bad("either `data` or a `[synth]` table is required".into());
        }
        if self.levels == 0 {
            return bad("levels must be >= 1".into());
        }
        let bands = self.selected_subbands();
        if bands.is_empty() {
            return bad("no subbands selected".into());
        }
        let mut seen = BTreeSet::new();
        for b in &bands {
            b.check(self.levels).map_err(|e| Error::Config(e.to_string()))?;
            if !seen.insert(*b) {
                return bad(format!("subband {b} listed twice"));
            }
        }
        if self.p == 0 {
            return bad("p must be >= 1".into());
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda = {} must be finite and >= 0", self.lambda));
        }
        if self.t_fix == 0 {
            return bad("t_fix must be >= 1".into());
        }
        if self.folds < 3 {
            return bad(format!("folds = {} but nested cross-validation needs >= 3", self.folds));
        }
        for (name, reg) in [("reg_base", self.reg_base), ("reg_meta", self.reg_meta)] {
            if !(reg > 0.0) || !reg.is_finite() {
                return bad(format!("{name} = {reg} must be finite and > 0"));
            }
        }
        if self.meta.is_empty() && self.runs(Stage::Fusion) {
            return bad("fusion stage requested with no meta methods".into());
        }
        Ok(())
    }

    /// Checks against the loaded dataset's shape.
    pub(crate) fn validate_against(&self, n_regions: usize, min_scans: usize) -> Result<()> {
        if self.p >= n_regions {
            return Err(Error::Config(format!("p = {} must be below the {n_regions} regions", self.p)));
        }
        if padded_length(min_scans, self.levels) > 2 * min_scans {
            return Err(Error::Config(format!(
                "{} levels are too deep for a {min_scans}-scan series",
                self.levels
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.cache = true;
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_defaults_only_where_set() {
        let c = PipelineConfig::from_toml("p = 5\nlambda = 4.0\nsubbands = [\"D2\", \"A3\"]\n[synth]\nseed = 3\n").unwrap();
        assert_eq!(c.p, 5);
        assert_eq!(c.subbands, Some(vec![Subband::Detail(2), Subband::Approx(3)]));
        assert_eq!(c.synth.as_ref().unwrap().seed, 3);
        assert_eq!(c.synth.as_ref().unwrap().n_regions, 20);
        assert_eq!(c.folds, 5);
        assert_eq!(c.t_fix, 405);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::from_toml("lamda = 3.0"), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c = PipelineConfig::synthetic_benchmark(11);
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn default_subbands_drop_d1() {
        let c = PipelineConfig::default();
        let bands = c.selected_subbands();
        assert_eq!(bands.len(), 2 * c.levels);
        assert!(!bands.contains(&Subband::Detail(1)));
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = PipelineConfig::synthetic_benchmark(1);
        let mut b = a.clone();
        b.out = Some("/tmp/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.p = 6;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_settings() {
        let base = PipelineConfig::synthetic_benchmark(1);
        let cases = [
            PipelineConfig { folds: 2, ..base.clone() },
            PipelineConfig { lambda: -1.0, ..base.clone() },
            PipelineConfig { reg_base: 0.0, ..base.clone() },
            PipelineConfig { subbands: Some(vec![Subband::Detail(5)]), ..base.clone() },
            PipelineConfig { subbands: Some(vec![Subband::Detail(2), Subband::Detail(2)]), ..base.clone() },
            PipelineConfig { synth: None, ..base.clone() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
        assert!(base.validate_against(5, 128).is_err());
        assert!(base.validate_against(20, 128).is_ok());
    }
}
