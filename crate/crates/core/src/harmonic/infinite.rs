//! Green function of the lattice Laplacian on Z^n via the heat-kernel representation
//! `G(0,x) = int_0^inf prod_i e^{-2t} I_{x_i}(2t) dt`, which is the Fourier integral
//! `(2 pi)^-n int e^{ik.x} / (2 sum_i (1 - cos k_i)) dk` after integrating out each `k_i`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; m];
    let mut ws = vec![0.0; m];
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, x);
                for k in 2..=m {
                    let q2 = ((2 * k - 1) as f64 * x * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = m as f64 * (x * q1 - q0) / (x * x - 1.0);
                ws[i] = 2.0 / ((1.0 - x * x) * dq * dq);
                break;
            }
        }
        xs[i] = x;
    }
    (xs, ws)
}

/// `e^{-z} I_k(z)` for `k = 0..=kmax` by normalized backward recurrence.
pub fn scaled_bessel_i(kmax: usize, z: f64) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = kmax + (9.0 * z.sqrt()) as usize + 40;
    let (mut above, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (0..=start).rev() {
        if k <= kmax {
            out[k] = cur;
        }
        norm += if k == 0 { cur } else { 2.0 * cur };
        // I_{k-1} = I_{k+1} + (2k/z) I_k
        let below = above + 2.0 * k as f64 / z * cur;
        above = cur;
        cur = below;
        if cur > 1e250 {
            let s = 1e-250;
            cur *= s;
            above *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Coefficients `c_m` of the large-z expansion `e^{-z} I_nu(z) = (2 pi z)^{-1/2} sum_m c_m z^{-m}`.
fn hankel_coeffs(nu: usize, terms: usize) -> Vec<f64> {
    let mu = 4.0 * (nu as f64).powi(2);
    let mut c = vec![1.0];
    for k in 1..terms {
        let prev = c[k - 1];
        let odd = (2 * k - 1) as f64;
        c.push(-prev * (mu - odd * odd) / (k as f64 * 8.0));
    }
    c
}

const PANEL_NODES: usize = 24;
const TAIL_TERMS: usize = 10;

fn integrand_panels(orders: &[usize], t_max: f64, split: usize, f: &mut dyn FnMut(f64, &[f64]) -> f64) -> f64 {
    let (xs, ws) = gauss_legendre(PANEL_NODES);
    let kmax = *orders.iter().max().unwrap();
    let mut edges = vec![0.0, 0.25, 0.5, 1.0];
    while *edges.last().unwrap() < t_max {
        let last = *edges.last().unwrap();
        edges.push((last * 2.0).min(t_max));
    }
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a0, b0) = (w[0], w[1]);
        let h = (b0 - a0) / split as f64;
        for s in 0..split {
            let a = a0 + h * s as f64;
            let b = a + h;
            for (x, wt) in xs.iter().zip(&ws) {
                let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let g = scaled_bessel_i(kmax, 2.0 * t);
                total += 0.5 * (b - a) * wt * f(t, &g);
            }
        }
    }
    total
}

/// `int_T^inf prod_i e^{-2t} I_{nu_i}(2t) dt` from the product of Hankel expansions.
fn analytic_tail(orders: &[usize], t: f64) -> f64 {
    let n = orders.len() as f64;
    let mut poly = vec![0.0; TAIL_TERMS];
    poly[0] = 1.0;
    for &nu in orders {
        let c = hankel_coeffs(nu, TAIL_TERMS);
        let mut next = vec![0.0; TAIL_TERMS];
        for i in 0..TAIL_TERMS {
            for j in 0..TAIL_TERMS - i {
                next[i + j] += poly[i] * c[j];
            }
        }
        poly = next;
    }
    // (4 pi t)^{-n/2} sum_m poly[m] (2t)^{-m}
    let pref = (4.0 * PI).powf(-n / 2.0);
    poly.iter()
        .enumerate()
        .map(|(m, c)| {
            let p = n / 2.0 + m as f64;
            pref * c * 2f64.powi(-(m as i32)) * t.powf(1.0 - p) / (p - 1.0)
        })
        .sum()
}

fn cutoff(orders: &[usize]) -> f64 {
    let nu = *orders.iter().max().unwrap() as f64;
    (40.0 * (nu * nu + 1.0)).max(400.0)
}

/// `G_{Z^n}(0, x)`; relative accuracy about 1e-10.
pub fn green_infinite_vertex(x: &[i64], n: usize) -> Result<f64> {
    if n < 3 || x.len() != n {
        return Err(Error::Quadrature(format!("need n >= 3 and a point of length n, got n={n}, len={}", x.len())));
    }
    let orders: Vec<usize> = x.iter().map(|v| v.unsigned_abs() as usize).collect();
    let t_max = cutoff(&orders);
    let tail = analytic_tail(&orders, t_max);
    let mut prev = f64::NAN;
    for split in [1usize, 2, 4, 8] {
        let body = integrand_panels(&orders, t_max, split, &mut |_, g| orders.iter().map(|&o| g[o]).product());
        let val = body + tail;
        if (val - prev).abs() <= 1e-11 * val.abs() {
            return Ok(val);
        }
        prev = val;
    }
    Err(Error::Quadrature(format!("no convergence for x = {x:?}")))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CgffDetail {
    pub value: f64,
    /// Truncation radius of the explicit sum.
    pub truncation: usize,
    /// `G(0,0) + 2 sum_{k=1..K} G(0, k e_1)`.
    pub partial_sum: f64,
    /// Estimated `2 sum_{k>K} G(0, k e_1)` from the measured `c / k^2` prefactor.
    pub tail: f64,
    /// Difference from the estimate with half the truncation radius.
    pub refinement_delta: f64,
}

/// `sum_{m > K} 1/m^2` by Euler-Maclaurin.
fn zeta2_tail(k: usize) -> f64 {
    let x = k as f64 + 0.5;
    // sum_{m>K} f(m) = int_{K+1/2}^inf f - f'(K+1/2)/24 + 7 f'''(K+1/2)/5760 ...
    1.0 / x - 1.0 / (12.0 * x.powi(3)) + 7.0 / (240.0 * x.powi(5))
}

fn line_terms(kmax: usize) -> Vec<f64> {
    // integrate G(0, k e_1) for all k simultaneously: integrand g_k(t) g_0(t)^3
    let orders = vec![kmax, 0, 0, 0];
    let t_max = cutoff(&orders);
    let mut vals = vec![0.0; kmax + 1];
    let (xs, ws) = gauss_legendre(PANEL_NODES);
    let mut edges = vec![0.0, 0.25, 0.5, 1.0];
    while *edges.last().unwrap() < t_max {
        let last = *edges.last().unwrap();
        edges.push((last * 2.0).min(t_max));
    }
    for w in edges.windows(2) {
        let (a0, b0) = (w[0], w[1]);
        let split = 2;
        let h = (b0 - a0) / split as f64;
        for s in 0..split {
            let a = a0 + h * s as f64;
            let b = a + h;
            for (x, wt) in xs.iter().zip(&ws) {
                let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let g = scaled_bessel_i(kmax, 2.0 * t);
                let g03 = g[0].powi(3);
                for k in 0..=kmax {
                    vals[k] += 0.5 * (b - a) * wt * g[k] * g03;
                }
            }
        }
    }
    for (k, v) in vals.iter_mut().enumerate() {
        *v += analytic_tail(&[k, 0, 0, 0], t_max);
    }
    vals
}

fn cgff_with(terms: &[f64], k: usize) -> (f64, f64) {
    let partial = terms[0] + 2.0 * terms[1..=k].iter().sum::<f64>();
    let c_hat = terms[k] * (k as f64).powi(2);
    (partial, 2.0 * c_hat * zeta2_tail(k))
}

pub fn c_gff_detail() -> CgffDetail {
    static CACHE: OnceLock<CgffDetail> = OnceLock::new();
    *CACHE.get_or_init(|| {
        let k = 128;
        let terms = line_terms(k);
        let (partial, tail) = cgff_with(&terms, k);
        let (p2, t2) = cgff_with(&terms, k / 2);
        CgffDetail {
            value: partial + tail,
            truncation: k,
            partial_sum: partial,
            tail,
            refinement_delta: (partial + tail) - (p2 + t2),
        }
    })
}

/// `C_GFF = sum_{k in Z} G_{Z^4}(0, k e_1)`.
pub fn c_gff() -> f64 {
    c_gff_detail().value
}

/// Per-term values `G_{Z^4}(0, k e_1)` for `k = 0..=kmax` (diagnostics).
pub fn c_gff_terms(kmax: usize) -> Vec<f64> {
    line_terms(kmax)
}
