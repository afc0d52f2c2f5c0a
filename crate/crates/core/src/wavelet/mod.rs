//! Periodized orthogonal dyadic filterbank and subband reconstruction.
//!
//! Signals are first extended by symmetric reflection to `T_pad`, the
//! smallest multiple of `2^L` not below `T`, then transformed with periodic
//! boundaries. Analysis uses decimated correlation: output `n` consumes input
//! samples `2n + k` (indices modulo the current length).

mod filters;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::container::{Decoder, Encoder};
use crate::data::SubjectRecord;
use crate::{Error, Result};

pub use filters::{WaveletFamily, WaveletKind, BATTLE_LEMARIE_TAPS};

/// One entry of the ordered subband set `A0, A1..AL, D1..DL`.
///
/// `Approx(0)` is the untransformed signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subband {
    Approx(usize),
    Detail(usize),
}

impl Subband {
    pub const ORIGINAL: Subband = Subband::Approx(0);

    pub fn level(self) -> usize {
        match self {
            Subband::Approx(l) | Subband::Detail(l) => l,
        }
    }

    /// Position `j` in `A0, A1..AL, D1..DL`.
    pub fn index(self, levels: usize) -> usize {
        match self {
            Subband::Approx(l) => l,
            Subband::Detail(l) => levels + l,
        }
    }

    pub fn from_index(j: usize, levels: usize) -> Result<Self> {
        match j {
            j if j <= levels => Ok(Subband::Approx(j)),
            j if j <= 2 * levels => Ok(Subband::Detail(j - levels)),
            j => Err(Error::Wavelet(format!(
                "subband index {j} outside 0..={} for {levels} levels",
                2 * levels
            ))),
        }
    }

    pub fn check(self, levels: usize) -> Result<()> {
        let ok = match self {
            Subband::Approx(l) => l <= levels,
            Subband::Detail(l) => (1..=levels).contains(&l),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Wavelet(format!("subband {self} invalid for {levels} levels")))
        }
    }

    /// All `2L + 1` subbands in index order.
    pub fn all(levels: usize) -> Vec<Subband> {
        (0..=2 * levels)
            .map(|j| Subband::from_index(j, levels).unwrap())
            .collect()
    }

    /// Every subband except the finest detail `D1`.
    pub fn default_set(levels: usize) -> Vec<Subband> {
        Self::all(levels)
            .into_iter()
            .filter(|b| *b != Subband::Detail(1))
            .collect()
    }
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subband::Approx(l) => write!(f, "A{l}"),
            Subband::Detail(l) => write!(f, "D{l}"),
        }
    }
}

impl FromStr for Subband {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("bad subband `{s}`; expected A<l> or D<l>"));
        let level: usize = s.get(1..).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        match s.chars().next() {
            Some('A' | 'a') => Ok(Subband::Approx(level)),
            Some('D' | 'd') if level >= 1 => Ok(Subband::Detail(level)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Subband {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subband {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Pyramid coefficients of one signal. `approx[l - 1]` and `detail[l - 1]`
/// hold level `l`, each with `padded_length / 2^l` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    pub approx: Vec<Vec<f64>>,
    pub detail: Vec<Vec<f64>>,
    pub levels: usize,
    pub original_length: usize,
    pub padded_length: usize,
}

/// Smallest multiple of `2^levels` that is at least `len`.
pub fn padded_length(len: usize, levels: usize) -> usize {
    let block = 1usize << levels;
    len.div_ceil(block) * block
}

/// Extend by half-sample symmetric reflection: `x[T-1], x[T-2], ...`.
fn pad_symmetric(signal: &[f64], target: usize) -> Vec<f64> {
    let t = signal.len();
    let mut out = Vec::with_capacity(target);
    out.extend_from_slice(signal);
    for i in 0..target - t {
        out.push(signal[t - 1 - i]);
    }
    out
}

fn analysis_step(x: &[f64], family: &WaveletFamily) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for i in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for (k, (&h, &g)) in family.lowpass.iter().zip(&family.highpass).enumerate() {
            let v = x[(2 * i + k) % n];
            a += h * v;
            d += g * v;
        }
        approx[i] = a;
        detail[i] = d;
    }
    (approx, detail)
}

/// Adjoint of [`analysis_step`]; either band may be absent (treated as zero).
fn synthesis_step(approx: Option<&[f64]>, detail: Option<&[f64]>, half: usize, family: &WaveletFamily) -> Vec<f64> {
    let n = 2 * half;
    let mut out = vec![0.0; n];
    for i in 0..half {
        let a = approx.map_or(0.0, |a| a[i]);
        let d = detail.map_or(0.0, |d| d[i]);
        if a == 0.0 && d == 0.0 {
            continue;
        }
        for (k, (&h, &g)) in family.lowpass.iter().zip(&family.highpass).enumerate() {
            out[(2 * i + k) % n] += h * a + g * d;
        }
    }
    out
}

fn check_levels(len: usize, levels: usize) -> Result<usize> {
    if levels == 0 {
        return Err(Error::Wavelet("at least one decomposition level is required".into()));
    }
    if len < 2 {
        return Err(Error::Wavelet(format!("signal of length {len} is too short")));
    }
    if levels >= usize::BITS as usize - 1 {
        return Err(Error::Wavelet(format!("{levels} levels is too many")));
    }
    let padded = padded_length(len, levels);
    if padded > 2 * len {
        return Err(Error::Wavelet(format!(
            "{levels} levels needs {padded} samples; a length-{len} signal supports at most {} levels",
            (usize::BITS - 1 - (2 * len).leading_zeros()) as usize
        )));
    }
    Ok(padded)
}

/// Multi-level analysis of `signal`.
pub fn decompose(signal: &[f64], family: &WaveletFamily, levels: usize) -> Result<WaveletCoefficients> {
    let padded_len = check_levels(signal.len(), levels)?;
    let mut current = pad_symmetric(signal, padded_len);
    let mut approx = Vec::with_capacity(levels);
    let mut detail = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis_step(&current, family);
        detail.push(d);
        approx.push(a.clone());
        current = a;
    }
    Ok(WaveletCoefficients {
        approx,
        detail,
        levels,
        original_length: signal.len(),
        padded_length: padded_len,
    })
}

/// Run synthesis from `level` up to the padded signal, with only the given
/// band(s) nonzero at the starting level.
fn synthesize_from(
    coeffs: &WaveletCoefficients,
    level: usize,
    approx: Option<&[f64]>,
    detail: Option<&[f64]>,
    family: &WaveletFamily,
    keep_finer_details: bool,
) -> Vec<f64> {
    let mut current = synthesis_step(approx, detail, coeffs.padded_length >> level, family);
    for l in (1..level).rev() {
        let d = keep_finer_details.then(|| coeffs.detail[l - 1].as_slice());
        current = synthesis_step(Some(&current), d, coeffs.padded_length >> l, family);
    }
    current
}

/// Inverse transform with every band retained, on the padded length.
pub fn reconstruct_padded(coeffs: &WaveletCoefficients, family: &WaveletFamily) -> Vec<f64> {
    let l = coeffs.levels;
    synthesize_from(
        coeffs,
        l,
        Some(&coeffs.approx[l - 1]),
        Some(&coeffs.detail[l - 1]),
        family,
        true,
    )
}

/// Reconstruct one subband signal, truncated to the original length.
///
/// `A0` is the full inverse transform (the original signal up to rounding);
/// `A_l` and `D_l` keep only the level-`l` approximation or detail band.
pub fn reconstruct_subband(coeffs: &WaveletCoefficients, band: Subband, family: &WaveletFamily) -> Result<Vec<f64>> {
    band.check(coeffs.levels)?;
    let mut out = match band {
        Subband::Approx(0) => reconstruct_padded(coeffs, family),
        Subband::Approx(l) => synthesize_from(coeffs, l, Some(&coeffs.approx[l - 1]), None, family, false),
        Subband::Detail(l) => synthesize_from(coeffs, l, None, Some(&coeffs.detail[l - 1]), family, false),
    };
    out.truncate(coeffs.original_length);
    Ok(out)
}

/// Whether decomposition runs over a subject's whole timeline or per session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionScope {
    #[default]
    Subject,
    Session,
}

impl FromStr for DecompositionScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subject" => Ok(DecompositionScope::Subject),
            "session" => Ok(DecompositionScope::Session),
            other => Err(Error::invalid(format!("unknown decomposition scope `{other}`"))),
        }
    }
}

/// The `2L + 1` reconstructed `R × T` matrices of one subject, indexed by
/// [`Subband::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandStack {
    pub subject_id: String,
    pub family: WaveletKind,
    pub levels: usize,
    pub bands: Vec<Array2<f64>>,
}

impl SubbandStack {
    pub fn band(&self, band: Subband) -> &Array2<f64> {
        &self.bands[band.index(self.levels)]
    }

    pub fn subbands(&self) -> Vec<Subband> {
        Subband::all(self.levels)
    }
}

/// All subbands of one series, in index order; `A0` is copied verbatim.
fn series_subbands(signal: &[f64], family: &WaveletFamily, levels: usize) -> Result<Vec<Vec<f64>>> {
    let coeffs = decompose(signal, family, levels)?;
    Subband::all(levels)
        .into_iter()
        .map(|b| match b {
            Subband::Approx(0) => Ok(signal.to_vec()),
            b => reconstruct_subband(&coeffs, b, family),
        })
        .collect()
}

/// Decompose every region row of `subject`.
pub fn subband_stack(subject: &SubjectRecord, family: &WaveletFamily, levels: usize) -> Result<SubbandStack> {
    subband_stack_scoped(subject, family, levels, DecompositionScope::Subject)
}

pub fn subband_stack_scoped(
    subject: &SubjectRecord,
    family: &WaveletFamily,
    levels: usize,
    scope: DecompositionScope,
) -> Result<SubbandStack> {
    let (r, t) = subject.series.dim();
    let n_bands = 2 * levels + 1;
    let rows: Vec<Vec<Vec<f64>>> = (0..r)
        .into_par_iter()
        .map(|i| {
            let row = subject.series.row(i).to_vec();
            match scope {
                DecompositionScope::Subject => series_subbands(&row, family, levels),
                DecompositionScope::Session => {
                    let mut bands = vec![Vec::with_capacity(t); n_bands];
                    for s in &subject.sessions {
                        let parts = series_subbands(&row[s.offset..s.end()], family, levels)?;
                        for (acc, part) in bands.iter_mut().zip(parts) {
                            acc.extend(part);
                        }
                    }
                    Ok(bands)
                }
            }
        })
        .collect::<Result<_>>()?;

    let bands = (0..n_bands)
        .map(|j| Array2::from_shape_fn((r, t), |(i, k)| rows[i][j][k]))
        .collect();
    Ok(SubbandStack {
        subject_id: subject.subject_id.clone(),
        family: family.kind,
        levels,
        bands,
    })
}

const STACK_MAGIC: &[u8; 4] = b"MBSS";

/// Binary container with a subband table: `(j, kind, level)` per entry,
/// followed by each `R × T` matrix row-major.
pub fn encode_stack(stack: &SubbandStack, provenance: &str) -> Vec<u8> {
    let mut enc = Encoder::new(STACK_MAGIC);
    enc.str(provenance);
    enc.str(&stack.subject_id);
    enc.str(stack.family.name());
    enc.u32(stack.levels as u32);
    let (r, t) = stack.bands[0].dim();
    enc.u32(r as u32);
    enc.usize(t);
    enc.u32(stack.bands.len() as u32);
    for (j, band) in stack.subbands().into_iter().enumerate() {
        enc.u32(j as u32);
        enc.u8(matches!(band, Subband::Detail(_)) as u8);
        enc.u32(band.level() as u32);
    }
    for m in &stack.bands {
        enc.f64s(m.iter());
    }
    enc.finish()
}

/// Returns the stack and its provenance string.
pub fn decode_stack(bytes: &[u8]) -> Result<(SubbandStack, String)> {
    let mut dec = Decoder::new(bytes, STACK_MAGIC)?;
    let provenance = dec.str()?;
    let subject_id = dec.str()?;
    let family: WaveletKind = dec.str()?.parse()?;
    let levels = dec.u32()? as usize;
    let r = dec.u32()? as usize;
    let t = dec.usize()?;
    let n = dec.u32()? as usize;
    if n != 2 * levels + 1 {
        return Err(Error::Format(format!("{n} subbands for {levels} levels")));
    }
    for j in 0..n {
        let (idx, kind, level) = (dec.u32()? as usize, dec.u8()?, dec.u32()? as usize);
        let band = if kind == 1 { Subband::Detail(level) } else { Subband::Approx(level) };
        if idx != j || band.index(levels) != j {
            return Err(Error::Format(format!("subband table entry {j} is inconsistent")));
        }
    }
    let bands = (0..n)
        .map(|_| {
            let v = dec.f64s(r * t)?;
            Array2::from_shape_vec((r, t), v).map_err(|e| Error::Format(e.to_string()))
        })
        .collect::<Result<_>>()?;
    dec.finish()?;
    Ok((
        SubbandStack {
            subject_id,
            family,
            levels,
            bands,
        },
        provenance,
    ))
}
