//! Enumeration oracle for the Coulomb gas of integer closed 3-forms on a tiny box.
//!
//! The charge lattice `{q in Z^C : d q = 0}` (C = active 3-cells) gets an integer basis from
//! unimodular column reduction of the restricted d matrix, is LLL-reduced in the energy
//! metric `<q, (-Delta)^{-1} q>`, and all points below an energy cutoff are enumerated with
//! the Fincke-Pohst recursion. The neglected weight above the cutoff R is bounded through a
//! smaller coupling c' < c:
//!   sum_{E > R} e^{-cE} <= e^{-(c-c')R} (Theta(c') - sum_{E <= R} e^{-c'E}),
//! with Theta(c') <= prod_i theta(c' |b*_i|^2) from the Gram-Schmidt norms of the basis
//! (a shifted one-dimensional theta sum never exceeds the unshifted one).

use std::collections::HashMap;
use std::sync::Arc;

use villain_core::Lattice;

/// Dense symmetric inverse by Gauss-Jordan with partial pivoting.
pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|r| r.clone()).collect();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap()).unwrap();
        m.swap(col, piv);
        inv.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-12, "singular matrix");
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..n {
            if r != col && m[r][col] != 0.0 {
                let f = m[r][col];
                for j in 0..n {
                    m[r][j] -= f * m[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a.signum() * a, a.signum(), 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// Integer basis of `{x in Z^cols : A x = 0}` via unimodular column operations.
pub fn integer_kernel(a: &[Vec<i64>], cols: usize) -> Vec<Vec<i64>> {
    let rows = a.len();
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let mut u: Vec<Vec<i128>> = (0..cols).map(|i| (0..cols).map(|j| (i == j) as i128).collect()).collect();
    // u stored as columns: u[c] is column c
    let mut pivot_col = 0;
    for r in 0..rows {
        if pivot_col == cols {
            break;
        }
        for c in pivot_col + 1..cols {
            if m[r][c] == 0 {
                continue;
            }
            let (a0, b0) = (m[r][pivot_col], m[r][c]);
            let (g, x, y) = ext_gcd(a0, b0);
            let (p, q) = (a0 / g, b0 / g);
            // [col_pivot, col_c] <- [x col_pivot + y col_c, -q col_pivot + p col_c]
            for row in m.iter_mut() {
                let (s, t) = (row[pivot_col], row[c]);
                row[pivot_col] = x * s + y * t;
                row[c] = -q * s + p * t;
            }
            let (s, t) = (u[pivot_col].clone(), u[c].clone());
            for i in 0..cols {
                u[pivot_col][i] = x * s[i] + y * t[i];
                u[c][i] = -q * s[i] + p * t[i];
            }
        }
        if m[r][pivot_col] != 0 {
            pivot_col += 1;
        }
    }
    let basis: Vec<Vec<i64>> = u[pivot_col..].iter().map(|c| c.iter().map(|&v| v as i64).collect()).collect();
    for b in &basis {
        for row in a {
            assert_eq!(row.iter().zip(b).map(|(x, y)| x * y).sum::<i64>(), 0);
        }
    }
    basis
}

fn metric(x: &[i64], y: &[i64], g: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, &a) in x.iter().enumerate() {
        if a == 0 {
            continue;
        }
        for (j, &b) in y.iter().enumerate() {
            if b != 0 {
                s += a as f64 * g[i][j] * b as f64;
            }
        }
    }
    s
}

/// LLL reduction (delta = 0.99) of integer vectors under the metric `g`.
pub fn lll(mut b: Vec<Vec<i64>>, g: &[Vec<f64>]) -> Vec<Vec<i64>> {
    let n = b.len();
    let gs = |b: &[Vec<i64>]| {
        let mut mu = vec![vec![0.0; n]; n];
        let mut bstar_norm = vec![0.0; n];
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                gram[i][j] = metric(&b[i], &b[j], g);
                gram[j][i] = gram[i][j];
            }
        }
        for i in 0..n {
            for j in 0..i {
                let mut v = gram[i][j];
                for k in 0..j {
                    v -= mu[j][k] * mu[i][k] * bstar_norm[k];
                }
                mu[i][j] = v / bstar_norm[j];
            }
            let mut v = gram[i][i];
            for k in 0..i {
                v -= mu[i][k] * mu[i][k] * bstar_norm[k];
            }
            bstar_norm[i] = v;
        }
        (mu, bstar_norm)
    };
    let mut k = 1;
    let mut guard = 0;
    while k < n {
        guard += 1;
        assert!(guard < 100_000, "LLL did not terminate");
        // size reduction against b[k-1], ..., b[0]
        for j in (0..k).rev() {
            let (mu, _) = gs(&b);
            let r = mu[k][j].round() as i64;
            if r != 0 {
                let bj = b[j].clone();
                for (x, y) in b[k].iter_mut().zip(&bj) {
                    *x -= r * y;
                }
            }
        }
        let (mu, bn) = gs(&b);
        if bn[k] >= (0.99 - mu[k][k - 1] * mu[k][k - 1]) * bn[k - 1] {
            k += 1;
        } else {
            b.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
    b
}

/// Enumerated charge law.
pub struct CoulombOracle {
    /// Active 3-cell indices in canonical order (the coordinates of a charge vector).
    pub cells: Vec<usize>,
    /// Normalized probability of each enumerated charge vector (restricted to active cells).
    pub probs: HashMap<Vec<i8>, f64>,
    /// Rigorous bound on the relative weight of charges above the energy cutoff.
    pub cutoff_tail_bound: f64,
    /// Weight of enumerated charges with some entry outside {-2..2}.
    pub outside_pm2_mass: f64,
    pub lambda_1: f64,
    pub dim: usize,
    pub cutoff: f64,
}

impl CoulombOracle {
    /// Law proportional to `exp(-c <q, (-Delta)^{-1} q>)` over closed integer 3-forms vanishing
    /// on boundary cells of `lattice`, enumerated up to energy `cutoff`.
    pub fn build(lattice: &Arc<Lattice>, c: f64, cutoff: f64) -> CoulombOracle {
        let k = 3;
        let active = |deg: usize| -> Vec<usize> { (0..lattice.count(deg)).filter(|&i| lattice.is_active(deg, i)).collect() };
        let cells = active(k);
        let faces = active(k - 1);
        let tops = active(k + 1);
        let pos: HashMap<usize, usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let nc = cells.len();
        // d from 2-forms to 3-forms, restricted: column per active face
        let d2 = lattice.d_matrix(k - 1);
        let mut dcols = vec![vec![0i64; nc]; faces.len()];
        for (r, &cell) in cells.iter().enumerate() {
            for (f, v) in d2.row(cell) {
                if let Ok(j) = faces.binary_search(&f) {
                    dcols[j][r] += v as i64;
                }
            }
        }
        let d3 = lattice.d_matrix(k);
        let d3rows: Vec<Vec<i64>> = tops
            .iter()
            .map(|&t| {
                let mut row = vec![0i64; nc];
                for (c, v) in d3.row(t) {
                    if let Some(&j) = pos.get(&c) {
                        row[j] += v as i64;
                    }
                }
                row
            })
            .collect();
        // -Delta = D2 D2^T + D3^T D3 on active 3-cells
        let mut neg_lap = vec![vec![0.0; nc]; nc];
        for col in &dcols {
            for i in 0..nc {
                if col[i] != 0 {
                    for j in 0..nc {
                        neg_lap[i][j] += (col[i] * col[j]) as f64;
                    }
                }
            }
        }
        for row in &d3rows {
            for i in 0..nc {
                if row[i] != 0 {
                    for j in 0..nc {
                        neg_lap[i][j] += (row[i] * row[j]) as f64;
                    }
                }
            }
        }
        let g = dense_inverse(&neg_lap);
        let basis = lll(integer_kernel(&d3rows, nc), &g);
        let dim = basis.len();
        let gram: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| metric(&basis[i], &basis[j], &g)).collect()).collect();
        // Cholesky gram = R^T R
        let mut r = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in i..dim {
                let mut s = gram[i][j];
                for t in 0..i {
                    s -= r[t][i] * r[t][j];
                }
                if i == j {
                    assert!(s > 0.0);
                    r[i][i] = s.sqrt();
                } else {
                    r[i][j] = s / r[i][i];
                }
            }
        }
        let mut points: Vec<(Vec<i64>, f64)> = Vec::new();
        let mut x = vec![0i64; dim];
        enumerate(&r, dim, cutoff, 0.0, &mut x, &mut points);
        let lambda_1 = points.iter().map(|p| p.1).filter(|&e| e > 1e-9).fold(f64::INFINITY, f64::min);
        let ratios: Vec<f64> = (1..40).map(|i| i as f64 / 40.0).collect();
        let mut partial = vec![0.0; ratios.len()];
        let mut probs = HashMap::new();
        let mut z = 0.0;
        let mut outside = 0.0;
        for (coef, e) in &points {
            let mut q = vec![0i64; nc];
            for (ci, b) in coef.iter().zip(&basis) {
                if *ci != 0 {
                    for (qv, bv) in q.iter_mut().zip(b) {
                        *qv += ci * bv;
                    }
                }
            }
            let w = (-c * e).exp();
            z += w;
            for (acc, t) in partial.iter_mut().zip(&ratios) {
                *acc += (-c * t * e).exp();
            }
            if q.iter().any(|v| v.abs() > 2) {
                outside += w;
            }
            let key: Vec<i8> = q.iter().map(|&v| i8::try_from(v).expect("charge fits in i8")).collect();
            *probs.entry(key).or_insert(0.0) += w;
        }
        probs.values_mut().for_each(|p| *p /= z);
        let theta1 = |a: f64| 1.0 + 2.0 * (1..200).map(|k| (-a * (k * k) as f64).exp()).sum::<f64>();
        let tail = ratios
            .iter()
            .zip(&partial)
            .map(|(t, s)| {
                let cp = c * t;
                let full: f64 = (0..dim).map(|i| theta1(cp * r[i][i] * r[i][i])).product();
                (-(c - cp) * cutoff).exp() * (full - s).max(0.0)
            })
            .fold(f64::INFINITY, f64::min);
        CoulombOracle { cells, probs, cutoff_tail_bound: tail / z, outside_pm2_mass: outside / z, lambda_1, dim, cutoff }
    }

    /// Bound on the total oracle error from truncation (energy cutoff plus the {-2..2} window).
    pub fn truncation_bound(&self) -> f64 {
        self.cutoff_tail_bound + self.outside_pm2_mass
    }

    /// Charge vector of a full 3-form restricted to the active cells.
    pub fn key(&self, q: &[i64]) -> Vec<i8> {
        self.cells.iter().map(|&c| q[c].clamp(-127, 127) as i8).collect()
    }

    /// Total-variation distance between the oracle and an empirical histogram.
    pub fn tv_distance(&self, counts: &HashMap<Vec<i8>, u64>) -> f64 {
        let n: u64 = counts.values().sum();
        let mut tv = 0.0;
        for (k, &p) in &self.probs {
            let e = counts.get(k).copied().unwrap_or(0) as f64 / n as f64;
            tv += (p - e).abs();
        }
        for (k, &c) in counts {
            if !self.probs.contains_key(k) {
                tv += c as f64 / n as f64;
            }
        }
        0.5 * tv
    }
}

fn enumerate(r: &[Vec<f64>], level: usize, bound: f64, partial: f64, x: &mut [i64], out: &mut Vec<(Vec<i64>, f64)>) {
    if level == 0 {
        out.push((x.to_vec(), partial));
        return;
    }
    let i = level - 1;
    let centre: f64 = -(i + 1..x.len()).map(|j| r[i][j] * x[j] as f64).sum::<f64>() / r[i][i];
    let rem = bound - partial;
    if rem < 0.0 {
        return;
    }
    let half = rem.sqrt() / r[i][i];
    let lo = (centre - half).ceil() as i64;
    let hi = (centre + half).floor() as i64;
    for v in lo..=hi {
        x[i] = v;
        let t = r[i][i] * (v as f64 - centre);
        enumerate(r, i, bound, partial + t * t, x, out);
    }
    x[i] = 0;
}
