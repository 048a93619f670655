use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice, LatticeSpec};

const PRIMES: [u64; 2] = [2_147_483_647, 1_000_000_007];

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1u64;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

/// `a - f * b` for sorted sparse rows mod p.
fn axpy_mod(a: &[(u32, u64)], f: u64, b: &[(u32, u64)], p: u64) -> Vec<(u32, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j].0 < a[i].0 {
            out.push((b[j].0, (p - f * b[j].1 % p) % p));
            j += 1;
        } else {
            let v = (a[i].1 + p - f * b[j].1 % p) % p;
            if v != 0 {
                out.push((a[i].0, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

/// Rank over F_p by incremental sparse echelon reduction.
pub fn rank_mod_p(rows: &[Vec<(u32, i64)>], ncols: usize, p: u64) -> usize {
    let mut pivots: Vec<Option<Vec<(u32, u64)>>> = vec![None; ncols];
    let mut rank = 0;
    for r in rows {
        let mut row: Vec<(u32, u64)> =
            r.iter().filter(|e| e.1 != 0).map(|&(c, v)| (c, v.rem_euclid(p as i64) as u64)).filter(|e| e.1 != 0).collect();
        row.sort_by_key(|e| e.0);
        while let Some(&(lead, val)) = row.first() {
            match &pivots[lead as usize] {
                Some(pr) => row = axpy_mod(&row, val, pr, p),
                None => {
                    let inv = pow_mod(val, p - 2, p);
                    row.iter_mut().for_each(|e| e.1 = e.1 * inv % p);
                    pivots[lead as usize] = Some(row);
                    rank += 1;
                    break;
                }
            }
        }
    }
    rank
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact rank over Q by fraction-free sparse reduction; `None` on integer overflow.
pub fn rank_rational(rows: &[Vec<(u32, i64)>], ncols: usize) -> Option<usize> {
    let mut pivots: Vec<Option<Vec<(u32, i64)>>> = vec![None; ncols];
    let mut rank = 0;
    for r in rows {
        let mut row: Vec<(u32, i64)> = r.iter().copied().filter(|e| e.1 != 0).collect();
        row.sort_by_key(|e| e.0);
        while let Some(&(lead, val)) = row.first() {
            match &pivots[lead as usize] {
                Some(pr) => {
                    let pv = pr[0].1;
                    let g = gcd(pv, val);
                    let (fa, fb) = (pv / g, val / g);
                    // row <- fa * row - fb * pr
                    let mut out = Vec::with_capacity(row.len() + pr.len());
                    let (mut i, mut j) = (0, 0);
                    while i < row.len() || j < pr.len() {
                        let (c, v) = if j == pr.len() || (i < row.len() && row[i].0 < pr[j].0) {
                            i += 1;
                            (row[i - 1].0, row[i - 1].1.checked_mul(fa)?)
                        } else if i == row.len() || pr[j].0 < row[i].0 {
                            j += 1;
                            (pr[j - 1].0, pr[j - 1].1.checked_mul(fb)?.checked_neg()?)
                        } else {
                            i += 1;
                            j += 1;
                            let v = row[i - 1].1.checked_mul(fa)?.checked_sub(pr[j - 1].1.checked_mul(fb)?)?;
                            (row[i - 1].0, v)
                        };
                        if v != 0 {
                            out.push((c, v));
                        }
                    }
                    let g = out.iter().fold(0, |g, e| gcd(g, e.1));
                    if g > 1 {
                        out.iter_mut().for_each(|e| e.1 /= g);
                    }
                    row = out;
                }
                None => {
                    let g = row.iter().fold(0, |g, e| gcd(g, e.1));
                    row.iter_mut().for_each(|e| e.1 /= g);
                    pivots[lead as usize] = Some(row);
                    rank += 1;
                    break;
                }
            }
        }
    }
    Some(rank)
}

/// Ranks of d restricted to the boundary-condition subspaces.
#[derive(Clone, Debug, Serialize)]
pub struct RankTable {
    pub n: usize,
    pub boundary: Boundary,
    /// `ranks[k]` = rank of d from k-forms to (k+1)-forms, `k = 0..n-1`.
    pub ranks: Vec<usize>,
    /// Number of cells carrying free values, per degree.
    pub active: Vec<usize>,
    /// Whether the exact rational elimination completed (otherwise two primes agreed).
    pub exact_rational: bool,
}

impl RankTable {
    /// `dim Omega^(k-1 -> k)`, the image of d in degree k.
    pub fn lower_dim(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.ranks[k - 1]
        }
    }

    /// `dim Omega^(k+1 -> k)`, the image of d* in degree k.
    pub fn upper_dim(&self, k: usize) -> usize {
        if k >= self.n {
            0
        } else {
            self.ranks[k]
        }
    }
}

pub fn rank_table(spec: &LatticeSpec) -> Result<RankTable> {
    let lat = Lattice::new(spec.clone());
    let n = lat.n();
    let active: Vec<usize> = (0..=n).map(|k| lat.active_count(k)).collect();
    let mut ranks = Vec::new();
    let mut exact_all = true;
    for k in 0..n {
        // relabel active columns
        let mut colmap = vec![u32::MAX; lat.count(k)];
        let mut next = 0u32;
        for (i, c) in colmap.iter_mut().enumerate() {
            if lat.is_active(k, i) {
                *c = next;
                next += 1;
            }
        }
        let dm = lat.d_matrix(k);
        let rows: Vec<Vec<(u32, i64)>> = (0..dm.rows())
            .filter(|&r| lat.is_active(k + 1, r))
            .map(|r| dm.row(r).filter(|&(c, _)| colmap[c] != u32::MAX).map(|(c, v)| (colmap[c], v as i64)).collect())
            .collect();
        let ncols = next as usize;
        let modular: Vec<usize> = PRIMES.iter().map(|&p| rank_mod_p(&rows, ncols, p)).collect();
        if modular[0] != modular[1] {
            return Err(Error::RankAmbiguity(format!("degree {k}: ranks {} and {} modulo two primes", modular[0], modular[1])));
        }
        match rank_rational(&rows, ncols) {
            Some(r) if r != modular[0] => {
                return Err(Error::RankAmbiguity(format!("degree {k}: rational rank {r}, modular rank {}", modular[0])));
            }
            Some(_) => {}
            None => exact_all = false,
        }
        ranks.push(modular[0]);
    }
    Ok(RankTable { n, boundary: spec.boundary(), ranks, active, exact_rational: exact_all })
}

/// Closed forms for `n = 4`: `[dim Omega^(0->1), dim Omega^(2->1), dim Omega^(3->2), dim Omega^(4->3)]`.
pub fn closed_form_ranks_4d(j: i64, boundary: Boundary) -> [usize; 4] {
    let (a, b, c) = (2 * j + 1, 2 * j, 2 * j - 1);
    let v = match boundary {
        Boundary::Free => [a.pow(4) - 1, a.pow(3) * (6 * j - 1) + 1, b.pow(3) * (6 * j + 4), b.pow(4)],
        Boundary::Zero => [c.pow(4), c.pow(3) * (6 * j + 1), b.pow(3) * (6 * j - 4) + 1, b.pow(4) - 1],
    };
    v.map(|x| x as usize)
}
