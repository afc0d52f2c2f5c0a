//! Synthetic datasets with planted, class- and subband-specific connectivity.
//!
//! Every session is synthesized in the wavelet domain: i.i.d. standard normal
//! coefficients for every band, then for the session's class the target
//! regions of each planted arc are mixed with their sources in the class's
//! designated band, `c_t = sum w c_s + sqrt(1 - sum w^2) c_t`. The inverse
//! transform gives the session signal and white noise is added on top.

pub mod oracles;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ndarray::Array2;

use crate::data::{tile_sessions, Dataset, SubjectRecord};
use crate::wavelet::{padded_length, reconstruct_padded, Subband, WaveletCoefficients, WaveletFamily, WaveletKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedArc {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub subband: Subband,
    pub arcs: Vec<PlantedArc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_regions: usize,
    pub n_classes: usize,
    pub levels: usize,
    pub n_subjects: usize,
    pub sessions_per_class: usize,
    pub session_scans: usize,
    pub noise: f64,
    pub family: WaveletKind,
    pub seed: u64,
    /// Bands assigned to classes in turn when `classes` is empty.
    pub designated: Vec<Subband>,
    pub arcs_per_class: usize,
    pub weight_range: (f64, f64),
    /// Explicit per-class plans; generated from the seed when empty.
    pub classes: Vec<ClassPlan>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_regions: 20,
            n_classes: 7,
            levels: 4,
            n_subjects: 20,
            sessions_per_class: 1,
            session_scans: 128,
            noise: 0.3,
            family: WaveletKind::Haar,
            seed: 7,
            designated: vec![
                Subband::Detail(2),
                Subband::Detail(3),
                Subband::Detail(4),
                Subband::Approx(4),
            ],
            arcs_per_class: 6,
            weight_range: (0.6, 0.9),
            classes: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_regions < 2 || self.n_classes < 1 || self.n_subjects < 1 || self.sessions_per_class < 1 {
            return bad("need at least 2 regions, 1 class, 1 subject and 1 session per class".into());
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise = {} must be finite and >= 0", self.noise));
        }
        if self.levels == 0 || padded_length(self.session_scans, self.levels) > 2 * self.session_scans {
            return bad(format!(
                "{} levels do not fit sessions of {} scans",
                self.levels, self.session_scans
            ));
        }
        if !self.classes.is_empty() && self.classes.len() != self.n_classes {
            return bad(format!("{} class plans for {} classes", self.classes.len(), self.n_classes));
        }
        if self.classes.is_empty() {
            if self.designated.is_empty() {
                return bad("no designated subbands".into());
            }
            if 2 * self.arcs_per_class > self.n_regions {
                return bad(format!(
                    "{} arcs per class need {} regions",
                    self.arcs_per_class,
                    2 * self.arcs_per_class
                ));
            }
            let (lo, hi) = self.weight_range;
            if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
                return bad(format!("weight range ({lo}, {hi}) must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// The configured plans, or the seeded default: class `c` uses
    /// `designated[c % len]` and its own disjoint source and target sets.
    pub fn plans(&self) -> Result<Vec<ClassPlan>> {
        self.validate()?;
        let plans = if self.classes.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let (lo, hi) = self.weight_range;
            (0..self.n_classes)
                .map(|c| {
                    let mut regions: Vec<usize> = (0..self.n_regions).collect();
                    regions.shuffle(&mut rng);
                    let k = self.arcs_per_class;
                    let arcs = (0..k)
                        .map(|i| PlantedArc {
                            from: regions[i],
                            to: regions[k + i],
                            weight: if hi > lo { rng.random_range(lo..hi) } else { lo },
                        })
                        .collect();
                    ClassPlan {
                        subband: self.designated[c % self.designated.len()],
                        arcs,
                    }
                })
                .collect()
        } else {
            self.classes.clone()
        };
        for (c, plan) in plans.iter().enumerate() {
            plan.subband.check(self.levels)?;
            for a in &plan.arcs {
                if a.from >= self.n_regions || a.to >= self.n_regions || a.from == a.to {
                    return Err(Error::Config(format!("class {}: bad arc {} -> {}", c + 1, a.from, a.to)));
                }
                if plan.arcs.iter().any(|b| b.to == a.from) {
                    return Err(Error::Config(format!(
                        "class {}: region {} is both a source and a target",
                        c + 1,
                        a.from
                    )));
                }
            }
        }
        Ok(plans)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Coefficients for one region: `(approx_L, [detail_1 .. detail_L])`.
type RegionCoeffs = (Vec<f64>, Vec<Vec<f64>>);

fn band_mut(c: &mut RegionCoeffs, band: Subband) -> &mut Vec<f64> {
    match band {
        Subband::Approx(_) => &mut c.0,
        Subband::Detail(l) => &mut c.1[l - 1],
    }
}

fn synth_session(
    cfg: &SynthConfig,
    plan: &ClassPlan,
    family: &WaveletFamily,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let (r, l, d) = (cfg.n_regions, cfg.levels, cfg.session_scans);
    let n = padded_length(d, l);
    let mut coeffs: Vec<RegionCoeffs> = (0..r)
        .map(|_| {
            let details = (1..=l).map(|lv| normal_vec(rng, n >> lv)).collect();
            (normal_vec(rng, n >> l), details)
        })
        .collect();

    // A0 or a coarser approximation than A_L carries every band; treat the
    // designated band as the deepest approximation in that case.
    let band = match plan.subband {
        Subband::Approx(_) => Subband::Approx(l),
        b => b,
    };
    let mut targets: Vec<usize> = plan.arcs.iter().map(|a| a.to).collect();
    targets.sort_unstable();
    targets.dedup();
    for t in targets {
        let incoming: Vec<&PlantedArc> = plan.arcs.iter().filter(|a| a.to == t).collect();
        let energy: f64 = incoming.iter().map(|a| a.weight * a.weight).sum();
        let own = (1.0 - energy).max(0.0).sqrt();
        let mut mixed: Vec<f64> = band_mut(&mut coeffs[t], band).iter().map(|v| own * v).collect();
        for a in incoming {
            let src = band_mut(&mut coeffs[a.from], band).clone();
            mixed.iter_mut().zip(src).for_each(|(m, s)| *m += a.weight * s);
        }
        *band_mut(&mut coeffs[t], band) = mixed;
    }

    let mut out = Array2::zeros((r, d));
    for (i, (approx_l, details)) in coeffs.into_iter().enumerate() {
        let mut approx: Vec<Vec<f64>> = (1..l).map(|lv| vec![0.0; n >> lv]).collect();
        approx.push(approx_l);
        let wc = WaveletCoefficients {
            approx,
            detail: details,
            levels: l,
            original_length: d,
            padded_length: n,
        };
        let signal = reconstruct_padded(&wc, family);
        for (t, v) in signal.into_iter().take(d).enumerate() {
            out[[i, t]] = v;
        }
    }
    if cfg.noise > 0.0 {
        out.mapv_inplace(|v| v + cfg.noise * rng.sample::<f64, _>(StandardNormal));
    }
    out
}

/// Deterministic synthetic dataset. Each subject records
/// `sessions_per_class` sessions of every class, in class order.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    let plans = cfg.plans()?;
    let family = WaveletFamily::new(cfg.family);
    let width = cfg.n_subjects.to_string().len().max(2);
    let layout: Vec<(usize, usize)> = (1..=cfg.n_classes)
        .flat_map(|c| std::iter::repeat_n((c, cfg.session_scans), cfg.sessions_per_class))
        .collect();
    let subjects = (0..cfg.n_subjects)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64 + 1);
            let sessions = tile_sessions(&layout);
            let mut series = Array2::zeros((cfg.n_regions, sessions.len() * cfg.session_scans));
            for spec in &sessions {
                let block = synth_session(cfg, &plans[spec.task_label - 1], &family, &mut rng);
                series
                    .slice_mut(ndarray::s![.., spec.offset..spec.end()])
                    .assign(&block);
            }
            SubjectRecord::new(format!("s{:0width$}", s + 1), series, sessions)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(subjects, cfg.n_classes, None)
}
