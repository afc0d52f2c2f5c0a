//! Slow reference implementations used to cross-check the fast paths.

use ndarray::Array2;

use crate::wavelet::WaveletFamily;

/// Gaussian elimination with partial pivoting; `None` if a pivot vanishes.
pub fn dense_ridge_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}

/// One periodized analysis step as an `n × n` matrix: lowpass rows first.
fn analysis_matrix(n: usize, family: &WaveletFamily) -> Array2<f64> {
    let mut w = Array2::zeros((n, n));
    for i in 0..n / 2 {
        for k in 0..family.len() {
            w[[i, (2 * i + k) % n]] += family.lowpass[k];
            w[[n / 2 + i, (2 * i + k) % n]] += family.highpass[k];
        }
    }
    w
}

/// Full multi-level transform as an explicit matrix. Output coefficients are
/// ordered `[a_L, d_L, d_{L-1}, ..., d_1]`.
pub fn matrix_dwt(n: usize, family: &WaveletFamily, levels: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::eye(n);
    for l in 0..levels {
        let m = n >> l;
        let mut step = Array2::<f64>::eye(n);
        step.slice_mut(ndarray::s![..m, ..m]).assign(&analysis_matrix(m, family));
        q = step.dot(&q);
    }
    q
}

/// All-pairs shortest path lengths by repeated relaxation over every
/// positive arc (`s -> r` with length `1 / A[r][s]`).
pub fn allpairs_paths(adjacency: &Array2<f64>) -> Array2<f64> {
    let n = adjacency.nrows();
    let mut d = Array2::from_elem((n, n), f64::INFINITY);
    for s in 0..n {
        d[[s, s]] = 0.0;
        for _ in 0..n {
            for u in 0..n {
                for v in 0..n {
                    let w = adjacency[[v, u]];
                    if u != v && w > 0.0 && d[[s, u]] + 1.0 / w < d[[s, v]] {
                        d[[s, v]] = d[[s, u]] + 1.0 / w;
                    }
                }
            }
        }
    }
    d
}

/// Betweenness by listing every simple path between every ordered pair.
pub fn enumerate_betweenness(adjacency: &Array2<f64>) -> Vec<f64> {
    let n = adjacency.nrows();
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let mut paths: Vec<(f64, Vec<usize>)> = Vec::new();
            let mut stack = vec![s];
            walk(adjacency, t, &mut stack, 0.0, &mut paths);
            let Some(best) = paths.iter().map(|p| p.0).min_by(f64::total_cmp) else {
                continue;
            };
            let shortest: Vec<&Vec<usize>> = paths
                .iter()
                .filter(|p| (p.0 - best).abs() <= 1e-12 * best)
                .map(|p| &p.1)
                .collect();
            for path in &shortest {
                for &v in &path[1..path.len() - 1] {
                    bc[v] += 1.0 / shortest.len() as f64;
                }
            }
        }
    }
    bc
}

fn walk(a: &Array2<f64>, target: usize, stack: &mut Vec<usize>, len: f64, out: &mut Vec<(f64, Vec<usize>)>) {
    let u = *stack.last().unwrap();
    if u == target {
        out.push((len, stack.clone()));
        return;
    }
    for v in 0..a.nrows() {
        let w = a[[v, u]];
        if w > 0.0 && !stack.contains(&v) {
            stack.push(v);
            walk(a, target, stack, len + 1.0 / w, out);
            stack.pop();
        }
    }
}

/// `[N11, N10, N01, N00]` for two oracle columns.
pub fn pair_contingency(a: &[u8], b: &[u8]) -> [usize; 4] {
    let mut c = [0; 4];
    for (&x, &y) in a.iter().zip(b) {
        c[match (x, y) {
            (1, 1) => 0,
            (1, 0) => 1,
            (0, 1) => 2,
            _ => 3,
        }] += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_ridge() {
        let (n, lambda, y) = (12.0, 3.0, 0.8);
        let w = dense_ridge_solve(&[vec![n + lambda]], &[n * y]).unwrap();
        assert!((w[0] - n * y / (n + lambda)).abs() < 1e-15);
    }

    #[test]
    fn singular_system_is_none() {
        assert!(dense_ridge_solve(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn transform_matrix_is_orthogonal() {
        for family in [WaveletFamily::haar(), WaveletFamily::daubechies4()] {
            let q = matrix_dwt(64, &family, 4);
            let qtq = q.t().dot(&q);
            let err = (&qtq - &Array2::<f64>::eye(64)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-10, "{err}");
        }
    }

    #[test]
    fn three_cycle_by_hand() {
        // 0 -> 1 (w 1), 1 -> 2 (w 0.5), 2 -> 0 (w 0.25): lengths 1, 2, 4
        let mut a = Array2::zeros((3, 3));
        a[[1, 0]] = 1.0;
        a[[2, 1]] = 0.5;
        a[[0, 2]] = 0.25;
        let d = allpairs_paths(&a);
        assert_eq!(d[[0, 2]], 3.0);
        assert_eq!(d[[1, 0]], 6.0);
        assert_eq!(d[[2, 1]], 5.0);
        assert_eq!(enumerate_betweenness(&a), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn contingency_counts() {
        assert_eq!(pair_contingency(&[1, 1, 0, 0, 1], &[1, 0, 1, 0, 1]), [2, 1, 1, 1]);
    }
}
