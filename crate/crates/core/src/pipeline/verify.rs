//! Cross-checks of the fast implementations against the slow references in
//! [`crate::synth::oracles`] and against hand-computed cases.

use std::fmt;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::analysis::{
    membership_significance, nonpairwise_diversity, pairwise_diversity, two_sample_z, OracleMatrix, SignificanceMode,
};
use crate::graphmetrics::{betweenness_centrality, global_efficiency, in_degree, shortest_path_lengths};
use crate::learn::{accuracy, logistic_loss_and_grad, predict, train, ClassifierKind, TrainOptions};
use crate::mesh::{build_mesh_network, MeshMeta, MeshParams};
use crate::synth::oracles::{allpairs_paths, dense_ridge_solve, enumerate_betweenness, matrix_dwt, pair_contingency};
use crate::wavelet::{decompose, reconstruct_subband, Subband, WaveletFamily, WaveletKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    /// Pass when `err <= tol`; NaN fails.
    fn bound(name: &str, err: f64, tol: f64, what: &str) -> Self {
        Self::new(name, err <= tol, format!("{what}: max error {err:.3e} (tolerance {tol:.0e})"))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Subbands sum back to the signal, and each approximation splits into the
/// next approximation plus detail.
pub fn reconstruction(n_signals: usize, len: usize, levels: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total_err = 0.0f64;
    let mut split_err = 0.0f64;
    for kind in [WaveletKind::Haar, WaveletKind::Daubechies4] {
        let family = WaveletFamily::new(kind);
        for _ in 0..n_signals {
            let x = normal_vec(&mut rng, len);
            let coeffs = match decompose(&x, &family, levels) {
                Ok(c) => c,
                Err(e) => return Check::new("reconstruction", false, e.to_string()),
            };
            let band = |b: Subband| reconstruct_subband(&coeffs, b, &family).expect("valid subband");
            let approx: Vec<Vec<f64>> = (0..=levels)
                .map(|l| if l == 0 { x.clone() } else { band(Subband::Approx(l)) })
                .collect();
            let details: Vec<Vec<f64>> = (1..=levels).map(|l| band(Subband::Detail(l))).collect();
            let mut sum = approx[levels].clone();
            for d in &details {
                sum.iter_mut().zip(d).for_each(|(s, v)| *s += v);
            }
            total_err = total_err.max(max_abs_diff(&x, &sum));
            for l in 1..=levels {
                let next: Vec<f64> = approx[l].iter().zip(&details[l - 1]).map(|(a, d)| a + d).collect();
                split_err = split_err.max(max_abs_diff(&approx[l - 1], &next));
            }
        }
    }
    let tol = 1e-8;
    Check::new(
        "reconstruction",
        total_err <= tol && split_err <= tol,
        format!(
            "{n_signals} signals x2 families, length {len}, L={levels}: |x - (A_L + sum D)| {total_err:.3e}, \
             |A_(l-1) - (A_l + D_l)| {split_err:.3e} (tolerance {tol:.0e})"
        ),
    )
}

/// Pyramid coefficients equal the explicit transform matrix applied to the
/// signal.
pub fn wavelet_matrix(n_signals: usize, len: usize, levels: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = 0.0f64;
    for kind in [WaveletKind::Haar, WaveletKind::Daubechies4] {
        let family = WaveletFamily::new(kind);
        for l in 1..=levels {
            let q = matrix_dwt(len, &family, l);
            for _ in 0..n_signals {
                let x = normal_vec(&mut rng, len);
                let expect = q.dot(&Array1::from(x.clone()));
                let c = decompose(&x, &family, l).expect("length is a multiple of 2^L");
                let mut got = c.approx[l - 1].clone();
                for d in c.detail.iter().rev() {
                    got.extend_from_slice(d);
                }
                err = err.max(max_abs_diff(&got, expect.iter()));
            }
        }
    }
    Check::bound(
        "wavelet matrix",
        err,
        1e-10,
        &format!("{n_signals} signals per level 1..={levels}, length {len}, haar and daubechies4"),
    )
}

/// Neighbor choice and ridge weights recomputed from scratch: population
/// z-scores, a plain correlation loop and Gaussian elimination on the normal
/// equations.
pub fn ridge(instances: usize, regions: usize, p: usize, scans: usize, lambdas: &[f64], seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = 0.0f64;
    let mut degree_ok = true;
    for i in 0..instances {
        let lambda = lambdas[i % lambdas.len()];
        // a shared factor with random loadings gives graded correlations
        let factor = normal_vec(&mut rng, scans);
        let load = normal_vec(&mut rng, regions);
        let x = Array2::from_shape_fn((regions, scans), |(r, t)| {
            load[r] * factor[t] + rng.sample::<f64, _>(StandardNormal)
        });
        let params = MeshParams {
            p,
            lambda,
            standardize: true,
        };
        let net = match build_mesh_network(x.view(), &params, Subband::ORIGINAL, MeshMeta::default()) {
            Ok(n) => n,
            Err(e) => return Check::new("ridge", false, e.to_string()),
        };
        degree_ok &= in_degree(&net.adjacency).iter().all(|&d| d == p);

        let z: Vec<Vec<f64>> = (0..regions)
            .map(|r| {
                let row: Vec<f64> = x.row(r).to_vec();
                let mu = row.iter().sum::<f64>() / scans as f64;
                let sd = (row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / scans as f64).sqrt();
                row.iter().map(|v| (v - mu) / sd).collect()
            })
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        for s in 0..regions {
            // z-scored rows: correlation is the mean product
            let mut ranked: Vec<(usize, f64)> = (0..regions)
                .filter(|&o| o != s)
                .map(|o| (o, dot(&z[s], &z[o]) / scans as f64))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let hood: Vec<usize> = ranked[..p].iter().map(|r| r.0).collect();
            let a: Vec<Vec<f64>> = hood
                .iter()
                .map(|&u| {
                    hood.iter()
                        .map(|&v| dot(&z[u], &z[v]) + if u == v { lambda } else { 0.0 })
                        .collect()
                })
                .collect();
            let b: Vec<f64> = hood.iter().map(|&u| dot(&z[u], &z[s])).collect();
            let Some(w) = dense_ridge_solve(&a, &b) else {
                return Check::new("ridge", false, "oracle system singular".into());
            };
            let mut expect = vec![0.0; regions];
            for (&u, wu) in hood.iter().zip(w) {
                expect[u] = wu;
            }
            err = err.max(max_abs_diff(net.adjacency.row(s).iter(), &expect));
        }
    }
    let tol = 1e-9;
    Check::new(
        "ridge",
        err <= tol && degree_ok,
        format!(
            "{instances} instances R={regions} p={p} lambda in {lambdas:?}: max error {err:.3e} \
             (tolerance {tol:.0e}); in-degree = p everywhere: {degree_ok}"
        ),
    )
}

fn random_digraph(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    // few distinct lengths so that equal-length paths occur
    const WEIGHTS: [f64; 4] = [0.5, 1.0, 2.0, 1.0 / 3.0];
    Array2::from_shape_fn((n, n), |(r, s)| {
        if r == s || !rng.random_bool(0.45) {
            0.0
        } else if rng.random_bool(0.1) {
            -1.0
        } else {
            WEIGHTS[rng.random_range(0..WEIGHTS.len())]
        }
    })
}

fn efficiency_oracle(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let w_max = a.iter().copied().fold(0.0, f64::max);
    if n < 2 || w_max <= 0.0 {
        return 0.0;
    }
    let d = allpairs_paths(&a.mapv(|w| w / w_max));
    let mut total = 0.0;
    for s in 0..n {
        for t in 0..n {
            if s != t && d[[s, t]].is_finite() {
                total += 1.0 / d[[s, t]];
            }
        }
    }
    total / (n * (n - 1)) as f64
}

/// Betweenness against simple-path enumeration, distances and efficiency
/// against repeated relaxation, and the complete unit digraph.
pub fn graph(n_graphs: usize, max_nodes: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bc_err, mut d_err, mut e_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut reach_ok = true;
    for _ in 0..n_graphs {
        let n = rng.random_range(2..=max_nodes);
        let a = random_digraph(&mut rng, n);
        bc_err = bc_err.max(max_abs_diff(&betweenness_centrality(&a), &enumerate_betweenness(&a)));
        let fast = shortest_path_lengths(&a);
        let slow = allpairs_paths(&a);
        for (x, y) in fast.iter().zip(slow.iter()) {
            if x.is_finite() != y.is_finite() {
                reach_ok = false;
            } else if x.is_finite() {
                d_err = d_err.max((x - y).abs());
            }
        }
        e_err = e_err.max((global_efficiency(&a) - efficiency_oracle(&a)).abs());
    }
    let complete = Array2::from_shape_fn((6, 6), |(r, s)| if r == s { 0.0 } else { 1.0 });
    let complete_e = global_efficiency(&complete);
    let complete_bc = betweenness_centrality(&complete).into_iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let passed = bc_err <= 1e-9 && d_err <= 1e-10 && e_err <= 1e-10 && reach_ok && complete_e == 1.0 && complete_bc == 0.0;
    Check::new(
        "graph metrics",
        passed,
        format!(
            "{n_graphs} digraphs with <= {max_nodes} nodes: betweenness {bc_err:.3e} (tolerance 1e-9), \
             distances {d_err:.3e} (1e-10), efficiency {e_err:.3e} (1e-10), reachability agrees {reach_ok}; \
             complete unit digraph E = {complete_e}, max |BC| = {complete_bc}"
        ),
    )
}

/// Analytic logistic gradient against central differences.
pub fn logistic_gradient(points: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, f, c) = (12, 4, 3);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x = Array2::from_shape_vec((n, f), normal_vec(&mut rng, n * f)).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let w = Array2::from_shape_vec((c, f + 1), normal_vec(&mut rng, c * (f + 1))).unwrap();
        let reg = rng.random_range(0.01..2.0);
        let (_, grad) = logistic_loss_and_grad(&w, x.view(), &labels, reg);
        let h = 1e-5;
        let mut fd = Array2::<f64>::zeros(w.dim());
        for idx in ndarray::indices(w.dim()) {
            let mut plus = w.clone();
            plus[idx] += h;
            let mut minus = w.clone();
            minus[idx] -= h;
            let lp = logistic_loss_and_grad(&plus, x.view(), &labels, reg).0;
            let lm = logistic_loss_and_grad(&minus, x.view(), &labels, reg).0;
            fd[idx] = (lp - lm) / (2.0 * h);
        }
        let diff = (&grad - &fd).iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    Check::bound(
        "logistic gradient",
        worst,
        1e-5,
        &format!("{points} random points, relative to the central difference"),
    )
}

/// Linearly separable clusters are fit perfectly by both classifiers.
pub fn separable(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [[4.0, 0.0], [-4.0, 0.0], [0.0, 4.0], [0.0, -4.0]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, ctr) in centers.iter().enumerate() {
        for _ in 0..15 {
            rows.push(ctr[0] + 0.5 * rng.sample::<f64, _>(StandardNormal));
            rows.push(ctr[1] + 0.5 * rng.sample::<f64, _>(StandardNormal));
            labels.push(c);
        }
    }
    let x = Array2::from_shape_vec((labels.len(), 2), rows).unwrap();
    let opts = TrainOptions {
        reg: 0.01,
        max_iter: 2000,
        ..TrainOptions::default()
    };
    let mut accs = Vec::new();
    for kind in [ClassifierKind::MultinomialLogistic, ClassifierKind::LinearMaxMargin] {
        let acc = train(kind, x.view(), &labels, centers.len(), &opts)
            .and_then(|m| predict(&m, x.view()))
            .map(|p| accuracy(&p, &labels))
            .unwrap_or(0.0);
        accs.push(acc);
    }
    Check::new(
        "separable training",
        accs.iter().all(|&a| a == 1.0),
        format!("training accuracy logistic {}, max-margin {}", accs[0], accs[1]),
    )
}

fn random_oracle(rng: &mut ChaCha8Rng, n: usize, e: usize) -> OracleMatrix {
    let p: f64 = rng.random_range(0.2..0.9);
    OracleMatrix::new(Array2::from_shape_fn((n, e), |_| rng.random_bool(p) as u8)).unwrap()
}

/// The KW/disagreement identity, agreement with a pair-loop over
/// contingency counts, and identical ensembles.
pub fn diversity_identities(n_matrices: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kw_err = 0.0f64;
    let mut pair_err = 0.0f64;
    for _ in 0..n_matrices {
        let n = rng.random_range(5..40);
        let e = rng.random_range(2..9);
        let o = random_oracle(&mut rng, n, e);
        let (d, _, _, _) = pairwise_diversity(&o);
        let (_, _, kw, _, _) = nonpairwise_diversity(&o);
        let l = e as f64;
        kw_err = kw_err.max((kw - d * (l - 1.0) / (2.0 * l)).abs());

        let cols: Vec<Vec<u8>> = (0..e).map(|j| o.matrix.column(j).to_vec()).collect();
        let mut slow = 0.0;
        for a in 0..e {
            for b in a + 1..e {
                let [_, n10, n01, _] = pair_contingency(&cols[a], &cols[b]);
                slow += (n10 + n01) as f64 / n as f64;
            }
        }
        slow /= (e * (e - 1) / 2) as f64;
        pair_err = pair_err.max((slow - d).abs());
    }

    let col: Vec<u8> = (0..30).map(|_| rng.random_bool(0.6) as u8).collect();
    let same = OracleMatrix::new(Array2::from_shape_fn((30, 5), |(i, _)| col[i])).unwrap();
    let (d, q, rho, _) = pairwise_diversity(&same);
    let (ent, _, kw, _, _) = nonpairwise_diversity(&same);
    let ones = OracleMatrix::new(Array2::ones((30, 5))).unwrap();
    let (_, _, _, theta, _) = nonpairwise_diversity(&ones);
    let identical_ok = d == 0.0 && q == 1.0 && rho == 1.0 && ent == 0.0 && kw == 0.0 && theta == 0.0;
    Check::new(
        "diversity identities",
        kw_err <= 1e-12 && pair_err <= 1e-12 && identical_ok,
        format!(
            "{n_matrices} random oracles: |KW - D(E-1)/2E| {kw_err:.3e} (tolerance 1e-12), pair loop {pair_err:.3e}; \
             identical ensemble D={d} Q={q} rho={rho} entropy={ent} KW={kw}; all-correct ensemble theta={theta}"
        ),
    )
}

/// The hand-computed pooled case and identical groups.
pub fn significance() -> Check {
    // +-0.5 around the means, rescaled so the sample sd is exactly 0.5
    let sd = (8.0f64 / 7.0).sqrt() * 0.5;
    let scale = 0.5 / sd;
    let g: Vec<f64> = [0.5, 1.5].repeat(4).iter().map(|v| 1.0 + (v - 1.0) * scale).collect();
    let r: Vec<f64> = [-0.5, 0.5].repeat(4).iter().map(|v| v * scale).collect();
    let z = two_sample_z(&g, &r, SignificanceMode::Pooled).unwrap_or(f64::NAN);
    let m = Array2::from_shape_fn((8, 1), |(i, _)| [0.2, 0.7, 0.4, 0.9][i % 4]);
    let labels = [0, 0, 0, 0, 1, 1, 1, 1];
    let same = membership_significance(m.view(), &labels, 2, 1, SignificanceMode::Pooled)
        .map(|t| t.z[0][0])
        .unwrap_or(f64::NAN);
    Check::new(
        "significance",
        (z - 4.0).abs() <= 1e-9 && same == 0.0,
        format!("hand case z = {z} (expected 4 +- 1e-9); identical groups z = {same}"),
    )
}

/// Every check at its default size.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        reconstruction(100, 1940, 11, seed),
        wavelet_matrix(50, 256, 5, seed + 1),
        ridge(100, 10, 4, 60, &[0.1, 32.0], seed + 2),
        graph(200, 8, seed + 3),
        logistic_gradient(20, seed + 4),
        separable(seed + 5),
        diversity_identities(100, seed + 6),
        significance(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_checks_pass() {
        for c in [
            reconstruction(3, 200, 5, 1),
            wavelet_matrix(2, 64, 3, 2),
            ridge(6, 8, 3, 40, &[0.1, 32.0], 3),
            graph(20, 6, 4),
            logistic_gradient(3, 5),
            separable(6),
            diversity_identities(10, 7),
            significance(),
        ] {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn display_tags_the_outcome() {
        let c = Check::bound("x", 2.0, 1.0, "y");
        assert!(!c.passed);
        assert!(c.to_string().starts_with("FAIL x"));
        assert!(!Check::bound("x", f64::NAN, 1.0, "y").passed);
    }
}
