//! Orthonormal two-channel filter pairs.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WaveletKind {
    #[default]
    Haar,
    /// Daubechies with four vanishing moments (8 taps).
    Daubechies4,
    /// Cubic-spline Battle-Lemarié, truncated to [`BATTLE_LEMARIE_TAPS`] taps.
    BattleLemarieCubic,
}

impl WaveletKind {
    pub fn name(self) -> &'static str {
        match self {
            WaveletKind::Haar => "haar",
            WaveletKind::Daubechies4 => "daubechies4",
            WaveletKind::BattleLemarieCubic => "battle_lemarie_cubic",
        }
    }
}

impl fmt::Display for WaveletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(WaveletKind::Haar),
            "daubechies4" | "db4" => Ok(WaveletKind::Daubechies4),
            "battle_lemarie_cubic" | "battle-lemarie-cubic" | "bl3" => {
                Ok(WaveletKind::BattleLemarieCubic)
            }
            other => Err(Error::invalid(format!("unknown wavelet family `{other}`"))),
        }
    }
}

const DAUBECHIES4: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_6,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_08,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

pub const BATTLE_LEMARIE_TAPS: usize = 64;

/// Quadrature points used to invert the Battle-Lemarié frequency response.
const BL_QUADRATURE: usize = 8192;

/// Autocorrelation of the cubic B-spline sampled on the integers, as a
/// trigonometric polynomial: `sum_k |B(w + 2 pi k)|^2`.
fn spline_autocorrelation(w: f64) -> f64 {
    (1208.0 + 1191.0 * w.cos() + 120.0 * (2.0 * w).cos() + (3.0 * w).cos()) / 2520.0
}

/// Lowpass taps `h[n]` for `n = -31..=32`, renormalized to unit energy.
///
/// The response `H(w) = sqrt(2) cos^4(w/2) sqrt(S(w) / S(2w))` is real and
/// even, so `h[n] = (1/M) sum_m H(w_m) cos(n w_m)` on a uniform grid is
/// spectrally accurate.
fn battle_lemarie_cubic() -> &'static [f64] {
    static TAPS: OnceLock<Vec<f64>> = OnceLock::new();
    TAPS.get_or_init(|| {
        let half = (BATTLE_LEMARIE_TAPS / 2) as i64;
        let response: Vec<(f64, f64)> = (0..BL_QUADRATURE)
            .map(|m| {
                let w = 2.0 * PI * m as f64 / BL_QUADRATURE as f64;
                let h = SQRT_2
                    * (w / 2.0).cos().powi(4)
                    * (spline_autocorrelation(w) / spline_autocorrelation(2.0 * w)).sqrt();
                (w, h)
            })
            .collect();
        let mut taps: Vec<f64> = (-(half - 1)..=half)
            .map(|n| {
                response
                    .iter()
                    .map(|&(w, h)| h * (n as f64 * w).cos())
                    .sum::<f64>()
                    / BL_QUADRATURE as f64
            })
            .collect();
        let norm = taps.iter().map(|v| v * v).sum::<f64>().sqrt();
        taps.iter_mut().for_each(|v| *v /= norm);
        taps
    })
}

/// Quadrature-mirror highpass: `g[k] = (-1)^k h[N-1-k]`.
fn quadrature_mirror(lowpass: &[f64]) -> Vec<f64> {
    let n = lowpass.len();
    (0..n)
        .map(|k| {
            let v = lowpass[n - 1 - k];
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFamily {
    pub kind: WaveletKind,
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl WaveletFamily {
    pub fn new(kind: WaveletKind) -> Self {
        let lowpass = match kind {
            WaveletKind::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletKind::Daubechies4 => DAUBECHIES4.to_vec(),
            WaveletKind::BattleLemarieCubic => battle_lemarie_cubic().to_vec(),
        };
        let highpass = quadrature_mirror(&lowpass);
        Self {
            kind,
            lowpass,
            highpass,
        }
    }

    pub fn haar() -> Self {
        Self::new(WaveletKind::Haar)
    }

    pub fn daubechies4() -> Self {
        Self::new(WaveletKind::Daubechies4)
    }

    pub fn battle_lemarie_cubic() -> Self {
        Self::new(WaveletKind::BattleLemarieCubic)
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }

    /// Worst-case reconstruction error expected for unit-scale signals.
    pub fn reconstruction_tolerance(&self) -> f64 {
        match self.kind {
            WaveletKind::Haar | WaveletKind::Daubechies4 => 1e-10,
            WaveletKind::BattleLemarieCubic => 1e-4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_family(f: &WaveletFamily, tol: f64) {
        let e_lo: f64 = f.lowpass.iter().map(|v| v * v).sum();
        let e_hi: f64 = f.highpass.iter().map(|v| v * v).sum();
        assert!((e_lo - 1.0).abs() < 1e-12);
        assert!((e_hi - 1.0).abs() < 1e-12);
        assert!(f.highpass.iter().sum::<f64>().abs() < tol);
        assert!((f.lowpass.iter().sum::<f64>() - SQRT_2).abs() < tol);
        // even-shift orthogonality
        for shift in (2..f.len()).step_by(2) {
            let c: f64 = (0..f.len() - shift).map(|k| f.lowpass[k] * f.lowpass[k + shift]).sum();
            assert!(c.abs() < tol, "shift {shift}: {c}");
        }
    }

    #[test]
    fn exact_families_are_orthonormal() {
        check_family(&WaveletFamily::haar(), 1e-15);
        check_family(&WaveletFamily::daubechies4(), 1e-15);
    }

    #[test]
    fn battle_lemarie_is_nearly_orthonormal() {
        check_family(&WaveletFamily::battle_lemarie_cubic(), 1e-4);
    }

    #[test]
    fn battle_lemarie_matches_published_taps() {
        // centre taps h[0], h[±1], h[±2], h[±3], h[±4] of the cubic filter
        let reference = [0.766130, 0.433923, -0.050202, -0.110037, 0.032081];
        let f = WaveletFamily::battle_lemarie_cubic();
        let centre = BATTLE_LEMARIE_TAPS / 2 - 1;
        for (n, r) in reference.iter().enumerate() {
            assert!((f.lowpass[centre + n] - r).abs() < 5e-6, "h[{n}]");
            assert!((f.lowpass[centre - n] - r).abs() < 5e-6, "h[-{n}]");
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("db4".parse::<WaveletKind>().unwrap(), WaveletKind::Daubechies4);
        assert_eq!(
            "battle_lemarie_cubic".parse::<WaveletKind>().unwrap().to_string(),
            "battle_lemarie_cubic"
        );
        assert!("sym8".parse::<WaveletKind>().is_err());
    }
}
