//! Reference oracles written against plain row-major `Vec<Vec<f64>>`
//! matrices, sharing no numerics with the library under test.

/// Row-major dense matrix.
pub type Dense = Vec<Vec<f64>>;

pub fn zeros(rows: usize, cols: usize) -> Dense {
    vec![vec![0.0; cols]; rows]
}

pub fn identity(n: usize) -> Dense {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn ncols(a: &Dense) -> usize {
    a.first().map_or(0, Vec::len)
}

pub fn transpose(a: &Dense) -> Dense {
    let (r, c) = (a.len(), ncols(a));
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (r, k, c) = (a.len(), ncols(a), ncols(b));
    assert_eq!(k, b.len(), "inner dimensions differ");
    let mut out = zeros(r, c);
    for i in 0..r {
        for p in 0..k {
            let aip = a[i][p];
            if aip == 0.0 {
                continue;
            }
            for j in 0..c {
                out[i][j] += aip * b[p][j];
            }
        }
    }
    out
}

pub fn sub(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        .collect()
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    sub(a, b).iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues are
/// returned descending; `vectors[k]` is the unit eigenvector of `values[k]`.
pub fn jacobi_eigen(a: &Dense) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Dense = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (a[i][j] + a[j][i])).collect())
        .collect();
    let mut v = identity(n);
    let scale = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (mkp, mkq) = (row[p], row[q]);
                    row[p] = c * mkp - s * mkq;
                    row[q] = s * mkp + c * mkq;
                }
                let (row_p, row_q) = (m[p].clone(), m[q].clone());
                m[p] = row_p.iter().zip(&row_q).map(|(a, b)| c * a - s * b).collect();
                m[q] = row_p.iter().zip(&row_q).map(|(a, b)| s * a + c * b).collect();
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&k| (0..n).map(|i| v[i][k]).collect()).collect();
    (values, vectors)
}

/// Singular values, descending, by one-sided Jacobi on the columns.
pub fn singular_values(a: &Dense) -> Vec<f64> {
    let tall = a.len() >= ncols(a);
    let mut cols = if tall { transpose(a) } else { a.clone() };
    let k = cols.len();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-16 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (cp, cq) = (cols[p].clone(), cols[q].clone());
                for i in 0..cp.len() {
                    cols[p][i] = c * cp[i] - s * cq[i];
                    cols[q][i] = s * cp[i] + c * cq[i];
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|x, y| y.total_cmp(x));
    sigma
}

pub fn spectral_norm(a: &Dense) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of the span of `columns` by twice-applied modified
/// Gram-Schmidt; columns whose residual falls below `drop` are skipped.
pub fn orthonormalize(columns: &[Vec<f64>], drop: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in columns {
        let mut v = col.clone();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= dot * qi);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > drop * norm0.max(1.0) {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Principal angles, ascending, between the Euclidean spans of two sets of
/// column vectors.
///
/// Angles whose cosine exceeds `1/√2` come from the sines, the singular
/// values of the part of the smaller basis orthogonal to the larger one, so
/// small angles keep full relative accuracy.
pub fn euclidean_principal_angles(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let mut qa = orthonormalize(a, 1e-12);
    let mut qb = orthonormalize(b, 1e-12);
    if qb.len() > qa.len() {
        std::mem::swap(&mut qa, &mut qb);
    }
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(x, y)| x * y).sum() };
    let c: Dense = qa.iter().map(|u| qb.iter().map(|v| dot(u, v)).collect()).collect();
    let cosines = singular_values(&c);
    let residual: Dense = qb
        .iter()
        .map(|v| {
            let mut r = v.clone();
            for u in &qa {
                let d = dot(u, &r);
                r.iter_mut().zip(u).for_each(|(x, ui)| *x -= d * ui);
            }
            r
        })
        .collect();
    let mut sines = singular_values(&transpose(&residual));
    sines.sort_by(f64::total_cmp);
    cosines
        .into_iter()
        .zip(sines)
        .take(qb.len())
        .map(|(c, s)| {
            if c * c > 0.5 {
                s.clamp(0.0, 1.0).asin()
            } else {
                c.clamp(0.0, 1.0).acos()
            }
        })
        .collect()
}

/// `M^{−1/2}` of a symmetric positive-definite matrix.
pub fn inverse_sqrt(m: &Dense) -> Dense {
    let (values, vectors) = jacobi_eigen(m);
    let n = m.len();
    let mut out = zeros(n, n);
    for (lambda, v) in values.iter().zip(&vectors) {
        assert!(*lambda > 0.0, "matrix is not positive definite");
        let w = 1.0 / lambda.sqrt();
        for i in 0..n {
            for j in 0..n {
                out[i][j] += w * v[i] * v[j];
            }
        }
    }
    out
}

/// `max |⟨u, v⟩|` over unit `u ∈ U`, `v ∈ W` for subspaces of dimension at
/// most 2, by exhaustive search over angle grids on both unit spheres.
///
/// `m_u`, `m_w` are the Gram matrices of the spanning sets and `m_cross`
/// their cross Gram matrix; each set must be linearly independent.
pub fn grid_top_cosine(m_u: &Dense, m_w: &Dense, m_cross: &Dense, step: f64) -> f64 {
    assert!(
        m_u.len() <= 2 && m_w.len() <= 2,
        "grid search supports dimension at most 2"
    );
    let c = matmul(&matmul(&inverse_sqrt(m_u), m_cross), &inverse_sqrt(m_w));
    let sphere = |dim: usize| -> Vec<Vec<f64>> {
        if dim == 1 {
            return vec![vec![1.0]];
        }
        let count = (std::f64::consts::PI / step).ceil() as usize + 1;
        (0..count)
            .map(|k| {
                let t = k as f64 * step;
                vec![t.cos(), t.sin()]
            })
            .collect()
    };
    let us = sphere(m_u.len());
    let ws = sphere(m_w.len());
    let mut best = 0.0f64;
    for u in &us {
        let cu: Vec<f64> = (0..ncols(&c))
            .map(|j| u.iter().enumerate().map(|(i, ui)| ui * c[i][j]).sum())
            .collect();
        for w in &ws {
            let dot: f64 = cu.iter().zip(w).map(|(a, b)| a * b).sum();
            best = best.max(dot.abs());
        }
    }
    best
}

/// `Aᵀ K B` with `K[i][j] = k(xa_i, xb_j)`, summed term by term.
pub fn kernel_cross_gram<K>(kernel: K, xa: &[Vec<f64>], wa: &Dense, xb: &[Vec<f64>], wb: &Dense) -> Dense
where
    K: Fn(&[f64], &[f64]) -> f64,
{
    let (p, q) = (ncols(wa), ncols(wb));
    let mut out = zeros(p, q);
    for (i, x) in xa.iter().enumerate() {
        for (j, y) in xb.iter().enumerate() {
            let kij = kernel(x, y);
            if kij == 0.0 {
                continue;
            }
            for a in 0..p {
                let wia = wa[i][a] * kij;
                if wia == 0.0 {
                    continue;
                }
                for b in 0..q {
                    out[a][b] += wia * wb[j][b];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 5.0]];
        let (values, vectors) = jacobi_eigen(&a);
        for (got, want) in values.iter().zip([5.0, 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-13);
        }
        for (lambda, v) in values.iter().zip(&vectors) {
            let av: Vec<f64> = a
                .iter()
                .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
                .collect();
            for (x, y) in av.iter().zip(v) {
                assert!((x - lambda * y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn singular_values_of_rotation_times_diagonal() {
        let (c, s) = (0.6, 0.8);
        let a = vec![vec![3.0 * c, -0.5 * s], vec![3.0 * s, 0.5 * c], vec![0.0, 0.0]];
        let sigma = singular_values(&a);
        assert!((sigma[0] - 3.0).abs() < 1e-14);
        assert!((sigma[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn angles_between_planes_in_three_space() {
        let t: f64 = 0.3;
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let b = vec![vec![1.0, 0.0, 0.0], vec![0.0, t.cos(), t.sin()]];
        let angles = euclidean_principal_angles(&a, &b);
        assert!(angles[0].abs() < 1e-15);
        assert!((angles[1] - t).abs() < 1e-14);
    }

    #[test]
    fn grid_matches_closed_form_for_planar_lines() {
        let t: f64 = 0.7;
        let m = vec![vec![1.0]];
        let cross = vec![vec![t.cos()]];
        assert!((grid_top_cosine(&m, &m, &cross, 1e-3) - t.cos()).abs() < 1e-15);
        let id = identity(2);
        let cross2 = vec![vec![0.2, 0.0], vec![0.0, 0.9]];
        assert!((grid_top_cosine(&id, &id, &cross2, 1e-3) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn orthonormalize_drops_dependent_columns() {
        let cols = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![0.0, 1.0]];
        assert_eq!(orthonormalize(&cols, 1e-12).len(), 2);
    }
}
