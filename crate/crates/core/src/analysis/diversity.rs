//! Ensemble diversity over oracle (correct / incorrect) outputs.

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::learn::DecisionSpace;
use crate::{Error, Result};

pub const ORACLE_RULE: &str = "true-class membership > 0.5";

/// `N × E` binary matrix; 1 marks a correct base classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMatrix {
    pub matrix: Array2<u8>,
    pub rule: String,
}

impl OracleMatrix {
    pub fn new(matrix: Array2<u8>) -> Result<Self> {
        if matrix.iter().any(|&v| v > 1) {
            return Err(Error::invalid("oracle entries must be 0 or 1"));
        }
        Ok(Self {
            matrix,
            rule: ORACLE_RULE.to_string(),
        })
    }

    pub fn n_classifiers(&self) -> usize {
        self.matrix.ncols()
    }

    /// Correct classifiers per session.
    pub fn correct_counts(&self) -> Vec<usize> {
        self.matrix.rows().into_iter().map(|r| r.iter().map(|&v| v as usize).sum()).collect()
    }
}

/// Entry `(n, e)` is 1 iff base `e` gives the true class of session `n` a
/// membership above 0.5.
pub fn oracle_outputs(space: &DecisionSpace) -> OracleMatrix {
    let (n, e) = (space.matrix.nrows(), space.n_bases());
    let c = space.n_classes;
    let matrix = Array2::from_shape_fn((n, e), |(i, b)| (space.matrix[[i, b * c + space.labels[i]]] > 0.5) as u8);
    OracleMatrix {
        matrix,
        rule: ORACLE_RULE.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub disagreement: f64,
    pub mean_q: f64,
    pub mean_rho: f64,
    pub entropy: f64,
    pub kappa: f64,
    pub kw_variance: f64,
    pub theta: f64,
    /// Degenerate cases that fell back to a convention.
    pub warnings: Vec<String>,
}

/// Pair statistics `(disagreement, Q, rho)` from `[N11, N10, N01, N00]`.
///
/// A zero denominator yields 1 when the pair never disagrees and 0 otherwise.
fn pair_stats(c: [usize; 4], warnings: &mut Vec<String>, pair: (usize, usize)) -> (f64, f64, f64) {
    let [n11, n10, n01, n00] = c.map(|v| v as f64);
    let n = n11 + n10 + n01 + n00;
    let dis = (n10 + n01) / n;
    let agree = n10 == 0.0 && n01 == 0.0;
    let num = n11 * n00 - n10 * n01;
    let fallback = |what: &str, warnings: &mut Vec<String>| {
        if agree {
            1.0
        } else {
            warnings.push(format!("{what} undefined for pair {pair:?}; using 0"));
            0.0
        }
    };
    let q_den = n11 * n00 + n10 * n01;
    let q = if q_den == 0.0 { fallback("Q", warnings) } else { num / q_den };
    let rho_den = ((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)).sqrt();
    let rho = if rho_den == 0.0 { fallback("rho", warnings) } else { num / rho_den };
    (dis, q, rho)
}

fn contingency(m: &Array2<u8>, a: usize, b: usize) -> [usize; 4] {
    let mut c = [0; 4];
    for row in m.rows() {
        c[(1 - row[a] as usize) * 2 + (1 - row[b] as usize)] += 1;
    }
    c
}

/// Pairwise measures averaged over all classifier pairs.
pub fn pairwise_diversity(oracle: &OracleMatrix) -> (f64, f64, f64, Vec<String>) {
    let e = oracle.n_classifiers();
    let mut warnings = Vec::new();
    let (mut sd, mut sq, mut sr, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for a in 0..e {
        for b in a + 1..e {
            let (d, q, r) = pair_stats(contingency(&oracle.matrix, a, b), &mut warnings, (a, b));
            sd += d;
            sq += q;
            sr += r;
            pairs += 1.0;
        }
    }
    if pairs == 0.0 {
        warnings.push("fewer than two classifiers; pairwise measures set to 0".into());
        return (0.0, 0.0, 0.0, warnings);
    }
    (sd / pairs, sq / pairs, sr / pairs, warnings)
}

/// `(entropy, kappa, kw_variance, theta)` from per-session correct counts.
pub fn nonpairwise_diversity(oracle: &OracleMatrix) -> (f64, f64, f64, f64, Vec<String>) {
    let l = oracle.n_classifiers() as f64;
    let m: Vec<f64> = oracle.correct_counts().iter().map(|&v| v as f64).collect();
    let n = m.len() as f64;
    let mut warnings = Vec::new();

    let half = l - (l / 2.0).ceil();
    let entropy = if half > 0.0 {
        m.iter().map(|&mi| mi.min(l - mi)).sum::<f64>() / (n * half)
    } else {
        0.0
    };
    let spread: f64 = m.iter().map(|&mi| mi * (l - mi)).sum();
    let kw = spread / (n * l * l);
    let p_bar = m.iter().sum::<f64>() / (n * l);
    let kappa_den = n * (l - 1.0) * p_bar * (1.0 - p_bar);
    let kappa = if kappa_den == 0.0 {
        warnings.push(format!("kappa undefined (mean accuracy {p_bar}); using 1"));
        1.0
    } else {
        1.0 - (spread / l) / kappa_den
    };
    // variance of m / l, computed on the integer counts so that equal
    // counts give exactly zero
    let mu = m.iter().sum::<f64>() / n;
    let theta = m.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n * l * l);
    (entropy, kappa, kw, theta, warnings)
}

pub fn diversity(oracle: &OracleMatrix) -> DiversityReport {
    let (disagreement, mean_q, mean_rho, mut warnings) = pairwise_diversity(oracle);
    let (entropy, kappa, kw_variance, theta, more) = nonpairwise_diversity(oracle);
    warnings.extend(more);
    for w in &warnings {
        warn!("{w}");
    }
    DiversityReport {
        disagreement,
        mean_q,
        mean_rho,
        entropy,
        kappa,
        kw_variance,
        theta,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::oracles::pair_contingency;
    use crate::wavelet::Subband;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(m: Array2<u8>) -> OracleMatrix {
        OracleMatrix::new(m).unwrap()
    }

    fn random_oracle(n: usize, e: usize, seed: u64) -> OracleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        oracle(Array2::from_shape_fn((n, e), |_| rng.random_range(0..2u8)))
    }

    #[test]
    fn threshold_rule() {
        let space = DecisionSpace {
            matrix: array![[0.51, 0.49, 0.2, 0.8], [0.3, 0.7, 0.5, 0.5], [0.9, 0.1, 0.6, 0.4]],
            base_order: vec![Subband::Approx(1), Subband::Detail(2)],
            labels: vec![0, 1, 0],
            subject_ids: vec!["a".into(); 3],
            rows: vec![0, 1, 2],
            n_classes: 2,
        };
        assert_eq!(oracle_outputs(&space).matrix, array![[1, 0], [1, 0], [1, 1]]);

        let uniform = DecisionSpace {
            matrix: Array2::from_elem((2, 7), 1.0 / 7.0),
            base_order: vec![Subband::Approx(0)],
            labels: vec![3, 6],
            subject_ids: vec!["a".into(); 2],
            rows: vec![0, 1],
            n_classes: 7,
        };
        assert!(oracle_outputs(&uniform).matrix.iter().all(|&v| v == 0));
    }

    #[test]
    fn identical_classifiers() {
        let col = [1u8, 0, 1, 1, 0, 1];
        let m = Array2::from_shape_fn((6, 4), |(i, _)| col[i]);
        let d = diversity(&oracle(m));
        assert_eq!((d.disagreement, d.mean_q, d.mean_rho), (0.0, 1.0, 1.0));
        assert_eq!((d.entropy, d.kw_variance), (0.0, 0.0));
        assert!(d.theta > 0.0);

        let all_ones = diversity(&oracle(Array2::ones((5, 3))));
        assert_eq!((all_ones.disagreement, all_ones.mean_q, all_ones.mean_rho), (0.0, 1.0, 1.0));
        assert_eq!((all_ones.entropy, all_ones.kw_variance, all_ones.theta), (0.0, 0.0, 0.0));
        assert_eq!(all_ones.kappa, 1.0);
        assert!(!all_ones.warnings.is_empty());
    }

    #[test]
    fn complementary_classifiers() {
        let (d, q, r, _) = pairwise_diversity(&oracle(array![[1, 0], [0, 1], [1, 0], [0, 1]]));
        assert_eq!((d, q, r), (1.0, -1.0, -1.0));
    }

    #[test]
    fn two_by_two_by_hand() {
        let (entropy, _, kw, theta, _) = nonpairwise_diversity(&oracle(array![[1, 0], [0, 1]]));
        assert_eq!(entropy, 1.0);
        assert_eq!(kw, 0.25);
        assert_eq!(theta, 0.0);
    }

    #[test]
    fn pairwise_matches_contingency_loop() {
        let o = random_oracle(20, 4, 3);
        let (d, q, r, _) = pairwise_diversity(&o);
        let (mut sd, mut sq, mut sr) = (0.0, 0.0, 0.0);
        for a in 0..4 {
            for b in a + 1..4 {
                let ca: Vec<u8> = o.matrix.column(a).to_vec();
                let cb: Vec<u8> = o.matrix.column(b).to_vec();
                let [n11, n10, n01, n00] = pair_contingency(&ca, &cb).map(|v| v as f64);
                sd += (n10 + n01) / 20.0;
                sq += (n11 * n00 - n10 * n01) / (n11 * n00 + n10 * n01);
                sr += (n11 * n00 - n10 * n01) / ((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)).sqrt();
            }
        }
        assert!((d - sd / 6.0).abs() < 1e-15);
        assert!((q - sq / 6.0).abs() < 1e-15);
        assert!((r - sr / 6.0).abs() < 1e-15);
    }

    #[test]
    fn nonpairwise_matches_session_loop() {
        let o = random_oracle(30, 5, 4);
        let (entropy, kappa, kw, theta, _) = nonpairwise_diversity(&o);
        let l = 5.0;
        let (mut e, mut k, mut correct, mut fr) = (0.0, 0.0, 0.0, Vec::new());
        for row in o.matrix.rows() {
            let m = row.iter().filter(|&&v| v == 1).count() as f64;
            e += m.min(l - m) / (l - 3.0);
            k += m * (l - m);
            correct += m;
            fr.push(m / l);
        }
        let p = correct / (30.0 * l);
        assert!((entropy - e / 30.0).abs() < 1e-15);
        assert!((kw - k / (30.0 * l * l)).abs() < 1e-15);
        assert!((kappa - (1.0 - (k / l) / (30.0 * (l - 1.0) * p * (1.0 - p)))).abs() < 1e-14);
        let mu = fr.iter().sum::<f64>() / 30.0;
        assert!((theta - fr.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 30.0).abs() < 1e-15);
    }

    fn arb_oracle() -> impl Strategy<Value = OracleMatrix> {
        (1usize..25, 2usize..9).prop_flat_map(|(n, e)| {
            proptest::collection::vec(0u8..2, n * e)
                .prop_map(move |v| OracleMatrix::new(Array2::from_shape_vec((n, e), v).unwrap()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn kw_disagreement_identity(o in arb_oracle()) {
            let d = diversity(&o);
            let l = o.n_classifiers() as f64;
            prop_assert!((d.kw_variance - d.disagreement * (l - 1.0) / (2.0 * l)).abs() <= 1e-12);
        }

        #[test]
        fn measures_stay_in_range(o in arb_oracle()) {
            let d = diversity(&o);
            for v in [d.disagreement, d.entropy, d.kw_variance] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            for v in [d.mean_q, d.mean_rho] {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
            }
            prop_assert!(d.theta >= 0.0);
        }

        #[test]
        fn classifier_order_is_irrelevant(o in arb_oracle(), shift in 0usize..8) {
            let e = o.n_classifiers();
            let perm: Vec<usize> = (0..e).map(|j| (j + shift) % e).collect();
            let p = OracleMatrix::new(o.matrix.select(ndarray::Axis(1), &perm)).unwrap();
            let (a, b) = (diversity(&o), diversity(&p));
            prop_assert!((a.disagreement - b.disagreement).abs() < 1e-12);
            prop_assert!((a.mean_q - b.mean_q).abs() < 1e-12);
            prop_assert!((a.mean_rho - b.mean_rho).abs() < 1e-12);
            prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
        }

        #[test]
        fn theta_zero_iff_constant_counts(o in arb_oracle()) {
            let m = o.correct_counts();
            let constant = m.iter().all(|&v| v == m[0]);
            prop_assert_eq!(diversity(&o).theta == 0.0, constant);
        }
    }
}
