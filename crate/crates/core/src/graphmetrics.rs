//! Topology of mesh networks: degree, strength, betweenness and efficiency.
//!
//! Paths follow arc direction `s -> r` for every `A[r][s] > 0`, with length
//! `1 / w`. Non-positive arcs are dropped from all path computations.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::mean_std;
use crate::mesh::MeshNetwork;
use crate::wavelet::Subband;

/// Two path lengths are tied when they differ by at most this fraction.
const TIE_TOLERANCE: f64 = 1e-12;

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Number of arcs leaving each node: nonzero entries per column.
pub fn out_degree(adjacency: &Array2<f64>) -> Vec<usize> {
    adjacency
        .columns()
        .into_iter()
        .map(|c| c.iter().filter(|w| **w != 0.0).count())
        .collect()
}

/// Number of arcs entering each node: nonzero entries per row.
pub fn in_degree(adjacency: &Array2<f64>) -> Vec<usize> {
    adjacency
        .rows()
        .into_iter()
        .map(|r| r.iter().filter(|w| **w != 0.0).count())
        .collect()
}

/// Column sums of the adjacency; `absolute` sums magnitudes instead.
pub fn out_strength(adjacency: &Array2<f64>, absolute: bool) -> Vec<f64> {
    adjacency
        .columns()
        .into_iter()
        .map(|c| {
            if absolute {
                c.iter().map(|w| w.abs()).sum()
            } else {
                c.sum()
            }
        })
        .collect()
}

pub fn total_strength(adjacency: &Array2<f64>) -> f64 {
    adjacency.sum()
}

/// Outgoing positive arcs as `(target, length)` lists.
fn positive_arcs(adjacency: &Array2<f64>, scale: f64) -> Vec<Vec<(usize, f64)>> {
    let n = adjacency.nrows();
    (0..n)
        .map(|s| {
            (0..n)
                .filter(|&r| r != s && adjacency[[r, s]] > 0.0)
                .map(|r| (r, scale / adjacency[[r, s]]))
                .collect()
        })
        .collect()
}

struct SingleSource {
    dist: Vec<f64>,
    sigma: Vec<f64>,
    preds: Vec<Vec<usize>>,
    order: Vec<usize>,
}

/// Dijkstra from `source` with shortest-path counting.
fn single_source(arcs: &[Vec<(usize, f64)>], source: usize) -> SingleSource {
    let n = arcs.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0; n];
    let mut preds = vec![Vec::new(); n];
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    dist[source] = 0.0;
    sigma[source] = 1.0;
    loop {
        let next = (0..n)
            .filter(|&v| !done[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let Some(v) = next else { break };
        done[v] = true;
        order.push(v);
        for &(w, len) in &arcs[v] {
            if done[w] {
                continue;
            }
            let alt = dist[v] + len;
            if dist[w].is_finite() && tied(alt, dist[w]) {
                sigma[w] += sigma[v];
                preds[w].push(v);
            } else if alt < dist[w] {
                dist[w] = alt;
                sigma[w] = sigma[v];
                preds[w] = vec![v];
            }
        }
    }
    SingleSource {
        dist,
        sigma,
        preds,
        order,
    }
}

/// Shortest path lengths with arc length `1 / w`; `INFINITY` when unreachable.
pub fn shortest_path_lengths(adjacency: &Array2<f64>) -> Array2<f64> {
    let arcs = positive_arcs(adjacency, 1.0);
    let n = arcs.len();
    let mut d = Array2::from_elem((n, n), f64::INFINITY);
    for s in 0..n {
        for (t, v) in single_source(&arcs, s).dist.into_iter().enumerate() {
            d[[s, t]] = v;
        }
    }
    d
}

/// Sum over ordered pairs `s != v != t` of the fraction of shortest
/// `s -> t` paths through `v` (unnormalized).
pub fn betweenness_centrality(adjacency: &Array2<f64>) -> Vec<f64> {
    let arcs = positive_arcs(adjacency, 1.0);
    let n = arcs.len();
    (0..n)
        .into_par_iter()
        .map(|s| {
            let ss = single_source(&arcs, s);
            let mut delta = vec![0.0; n];
            let mut bc = vec![0.0; n];
            for &w in ss.order.iter().rev() {
                for &v in &ss.preds[w] {
                    delta[v] += ss.sigma[v] / ss.sigma[w] * (1.0 + delta[w]);
                }
                if w != s {
                    bc[w] += delta[w];
                }
            }
            bc
        })
        .collect::<Vec<_>>()
        .into_iter()
        // summed in source order so results do not depend on scheduling
        .fold(vec![0.0; n], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
}

/// Mean inverse shortest-path length over ordered pairs, with weights
/// divided by the largest positive weight first so that `E` lies in `[0, 1]`.
pub fn global_efficiency(adjacency: &Array2<f64>) -> f64 {
    let n = adjacency.nrows();
    if n < 2 {
        return 0.0;
    }
    let w_max = adjacency.iter().copied().fold(0.0, f64::max);
    if w_max <= 0.0 {
        return 0.0;
    }
    let arcs = positive_arcs(adjacency, w_max);
    let total: f64 = (0..n)
        .map(|s| {
            single_source(&arcs, s)
                .dist
                .iter()
                .enumerate()
                .filter(|&(t, d)| t != s && d.is_finite())
                .map(|(_, d)| 1.0 / d)
                .sum::<f64>()
        })
        .sum();
    total / (n * (n - 1)) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetricsReport {
    pub out_degree: Vec<usize>,
    pub in_degree: Vec<usize>,
    pub out_strength: Vec<f64>,
    pub abs_out_strength: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub total_strength: f64,
    pub global_efficiency: f64,
    /// Population standard deviation of out-degree across nodes.
    pub std_out_degree: f64,
}

pub fn node_metrics(network: &MeshNetwork) -> NodeMetricsReport {
    let a = &network.adjacency;
    let out_degree = out_degree(a);
    let deg: Vec<f64> = out_degree.iter().map(|&d| d as f64).collect();
    NodeMetricsReport {
        in_degree: in_degree(a),
        out_strength: out_strength(a, false),
        abs_out_strength: out_strength(a, true),
        betweenness: betweenness_centrality(a),
        total_strength: total_strength(a),
        global_efficiency: global_efficiency(a),
        std_out_degree: mean_std(&deg).1,
        out_degree,
    }
}

/// Node metrics of one (task, subband) group averaged over its sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandSummary {
    /// 1-based task label.
    pub task_label: usize,
    pub subband: Subband,
    pub n_sessions: usize,
    pub mean_out_degree: Vec<f64>,
    pub std_out_degree_sessions: Vec<f64>,
    pub mean_in_degree: Vec<f64>,
    pub mean_out_strength: Vec<f64>,
    pub mean_abs_out_strength: Vec<f64>,
    pub mean_betweenness: Vec<f64>,
    /// Standard deviation across nodes of `mean_out_degree`.
    pub std_out_degree: f64,
    pub total_strength: f64,
    pub global_efficiency: f64,
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows[0].len();
    (0..n)
        .map(|j| mean_std(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .unzip()
}

/// Group networks by (task, subband) and average their metrics.
pub fn subband_summary(networks: &[MeshNetwork]) -> Vec<SubbandSummary> {
    let reports: Vec<NodeMetricsReport> = networks.par_iter().map(node_metrics).collect();
    let mut groups: BTreeMap<(usize, Subband), Vec<&NodeMetricsReport>> = BTreeMap::new();
    for (net, rep) in networks.iter().zip(&reports) {
        groups.entry((net.meta.label, net.subband)).or_default().push(rep);
    }
    groups
        .into_iter()
        .map(|((label, subband), reps)| {
            let floats = |f: &dyn Fn(&NodeMetricsReport) -> Vec<f64>| -> Vec<Vec<f64>> {
                reps.iter().map(|r| f(r)).collect()
            };
            let (mean_out_degree, std_out_degree_sessions) =
                column_stats(&floats(&|r| r.out_degree.iter().map(|&d| d as f64).collect()));
            let (mean_in_degree, _) =
                column_stats(&floats(&|r| r.in_degree.iter().map(|&d| d as f64).collect()));
            let (mean_out_strength, _) = column_stats(&floats(&|r| r.out_strength.clone()));
            let (mean_abs_out_strength, _) = column_stats(&floats(&|r| r.abs_out_strength.clone()));
            let (mean_betweenness, _) = column_stats(&floats(&|r| r.betweenness.clone()));
            let scalar = |f: &dyn Fn(&NodeMetricsReport) -> f64| {
                mean_std(&reps.iter().map(|r| f(r)).collect::<Vec<_>>()).0
            };
            SubbandSummary {
                task_label: label + 1,
                subband,
                n_sessions: reps.len(),
                std_out_degree: mean_std(&mean_out_degree).1,
                total_strength: scalar(&|r| r.total_strength),
                global_efficiency: scalar(&|r| r.global_efficiency),
                mean_out_degree,
                std_out_degree_sessions,
                mean_in_degree,
                mean_out_strength,
                mean_abs_out_strength,
                mean_betweenness,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshMeta;
    use crate::synth::oracles::{allpairs_paths, enumerate_betweenness};
    use ndarray::array;
    use proptest::prelude::*;

    /// `arcs` as `(from, to, weight)`.
    fn digraph(n: usize, arcs: &[(usize, usize, f64)]) -> Array2<f64> {
        let mut a = Array2::zeros((n, n));
        for &(s, r, w) in arcs {
            a[[r, s]] = w;
        }
        a
    }

    fn complete(n: usize, w: f64) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(r, s)| if r == s { 0.0 } else { w })
    }

    #[test]
    fn star_out_degree() {
        let a = digraph(4, &[(0, 1, 0.5), (0, 2, 0.1), (0, 3, -0.2), (1, 0, 0.3)]);
        let d = out_degree(&a);
        assert_eq!(d[0], 3);
        assert_eq!(d.iter().sum::<usize>(), 4);
        assert_eq!(in_degree(&a), vec![1, 1, 1, 1]);
    }

    #[test]
    fn strength_sign_conventions() {
        let a = digraph(3, &[(0, 1, 0.5), (0, 2, -0.5), (1, 2, 0.7)]);
        assert_eq!(out_strength(&a, false), vec![0.0, 0.7, 0.0]);
        assert_eq!(out_strength(&a, true), vec![1.0, 0.7, 0.0]);
        assert!((total_strength(&a) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn path_graph_betweenness() {
        let a = digraph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(betweenness_centrality(&a), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn complete_unit_digraph() {
        let a = complete(6, 1.0);
        assert!(betweenness_centrality(&a).iter().all(|b| *b == 0.0));
        assert_eq!(global_efficiency(&a), 1.0);
        assert_eq!(betweenness_centrality(&complete(2, 0.4)), vec![0.0, 0.0]);
    }

    #[test]
    fn no_positive_arcs_means_zero_efficiency() {
        let a = digraph(3, &[(0, 1, -1.0), (1, 2, -0.3)]);
        assert_eq!(global_efficiency(&a), 0.0);
        assert_eq!(global_efficiency(&Array2::zeros((4, 4))), 0.0);
    }

    #[test]
    fn split_paths_share_credit() {
        // two equal routes 0 -> {1,2} -> 3
        let a = digraph(4, &[(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        assert_eq!(betweenness_centrality(&a), vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn three_cycle_distances() {
        let a = digraph(3, &[(0, 1, 1.0), (1, 2, 0.5), (2, 0, 0.25)]);
        let d = shortest_path_lengths(&a);
        let expect = array![[0.0, 1.0, 3.0], [6.0, 0.0, 2.0], [4.0, 5.0, 0.0]];
        assert_eq!(d, expect);
        assert_eq!(allpairs_paths(&a), expect);
    }

    fn summary_net(label: usize, a: Array2<f64>) -> MeshNetwork {
        MeshNetwork {
            adjacency: a,
            subband: Subband::Detail(2),
            meta: MeshMeta {
                subject_id: "s".into(),
                session: 0,
                label,
            },
            residual_variance: vec![],
        }
    }

    #[test]
    fn identical_group_has_zero_session_spread() {
        let a = digraph(3, &[(0, 1, 1.0), (1, 2, 0.5), (0, 2, 0.2)]);
        let s = subband_summary(&[summary_net(0, a.clone()), summary_net(0, a)]);
        assert_eq!(s.len(), 1);
        assert!(s[0].std_out_degree_sessions.iter().all(|v| *v == 0.0));
        assert_eq!(s[0].mean_out_degree, vec![2.0, 1.0, 0.0]);
        assert_eq!(s[0].task_label, 1);
    }

    #[test]
    fn two_session_group_is_midpoint() {
        let a = digraph(3, &[(0, 1, 1.0), (1, 2, 0.5)]);
        let b = digraph(3, &[(0, 1, 0.2), (2, 0, 0.5), (2, 1, 0.4)]);
        let s = &subband_summary(&[summary_net(3, a.clone()), summary_net(3, b.clone())])[0];
        let (sa, sb) = (out_strength(&a, false), out_strength(&b, false));
        for j in 0..3 {
            assert!((s.mean_out_strength[j] - (sa[j] + sb[j]) / 2.0).abs() < 1e-15);
        }
        assert_eq!(s.mean_out_degree, vec![1.0, 0.5, 1.0]);
        // two-pass population std across nodes of the mean vector
        let m = s.mean_out_degree.iter().sum::<f64>() / 3.0;
        let sd = (s.mean_out_degree.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!((s.std_out_degree - sd).abs() < 1e-15);
    }

    fn arb_digraph(max_n: usize) -> impl Strategy<Value = Array2<f64>> {
        (2..=max_n).prop_flat_map(|n| {
            proptest::collection::vec((0u8..3, 0.05f64..2.0), n * n).prop_map(move |cells| {
                Array2::from_shape_fn((n, n), |(r, s)| {
                    let (kind, w) = cells[r * n + s];
                    match (r == s, kind) {
                        (true, _) | (false, 0) => 0.0,
                        (false, 1) => w,
                        // a mix of negative arcs and small-integer weights
                        // that produce genuine ties
                        _ => {
                            if w < 0.5 {
                                -w
                            } else {
                                w.round()
                            }
                        }
                    }
                })
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn betweenness_matches_enumeration(a in arb_digraph(8)) {
            let fast = betweenness_centrality(&a);
            let slow = enumerate_betweenness(&a);
            for (x, y) in fast.iter().zip(&slow) {
                prop_assert!((x - y).abs() <= 1e-9, "{fast:?} vs {slow:?}");
            }
        }

        #[test]
        fn distances_match_relaxation(a in arb_digraph(8)) {
            let fast = shortest_path_lengths(&a);
            let slow = allpairs_paths(&a);
            for (x, y) in fast.iter().zip(slow.iter()) {
                prop_assert!(x == y || (x - y).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }

        #[test]
        fn scaling_keeps_betweenness(a in arb_digraph(7), alpha in 0.1f64..10.0) {
            let scaled = a.mapv(|w| if w > 0.0 { w * alpha } else { w });
            let (b0, b1) = (betweenness_centrality(&a), betweenness_centrality(&scaled));
            for (x, y) in b0.iter().zip(&b1) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            let (d0, d1) = (shortest_path_lengths(&a), shortest_path_lengths(&scaled));
            for (x, y) in d0.iter().zip(d1.iter()) {
                prop_assert!(x == y || (x / alpha - y).abs() <= 1e-10 * y.abs().max(1.0));
            }
        }

        #[test]
        fn removing_an_arc_never_raises_efficiency(a in arb_digraph(7), pick in 0usize..64) {
            let n = a.nrows();
            let positive: Vec<(usize, usize)> = (0..n)
                .flat_map(|r| (0..n).map(move |s| (r, s)))
                .filter(|&(r, s)| a[[r, s]] > 0.0)
                .collect();
            prop_assume!(!positive.is_empty());
            let (r, s) = positive[pick % positive.len()];
            let mut b = a.clone();
            b[[r, s]] = 0.0;
            // keep w_max fixed so both networks share a length scale
            let w_max = a.iter().copied().fold(0.0, f64::max);
            if b.iter().copied().fold(0.0, f64::max) < w_max {
                prop_assume!(false);
            }
            prop_assert!(global_efficiency(&b) <= global_efficiency(&a) + 1e-12);
        }

        #[test]
        fn efficiency_in_unit_interval(a in arb_digraph(8)) {
            let e = global_efficiency(&a);
            prop_assert!((0.0..=1.0).contains(&e));
        }
    }
}
