//! Integer-valued Gaussian `P[X = k] ∝ exp(-beta/2 (k - a)^2)`.
//!
//! All quantities are computed over the window `|k - a| <= W` with
//! `W = ceil(sqrt(2 ln(1e15) / beta)) + 1`; the neglected mass is below 1e-13.

use std::f64::consts::PI;

use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IvgParams {
    pub a: f64,
    pub beta: f64,
}

impl IvgParams {
    pub fn new(a: f64, beta: f64) -> Self {
        assert!(beta > 0.0 && beta.is_finite(), "inverse temperature must be positive, got {beta}");
        assert!(a.is_finite(), "center must be finite");
        IvgParams { a, beta }
    }
}

pub fn window(beta: f64) -> f64 {
    (2.0 * (1e15f64).ln() / beta).sqrt().ceil() + 1.0
}

fn support(p: IvgParams) -> (i64, i64) {
    let w = window(p.beta);
    ((p.a - w).ceil() as i64, (p.a + w).floor() as i64)
}

/// Normalized weights over the window, starting at integer `lo`.
fn weights(p: IvgParams) -> (i64, Vec<f64>) {
    let (lo, hi) = support(p);
    let mut w: Vec<f64> = (lo..=hi)
        .map(|k| {
            let x = k as f64 - p.a;
            (-0.5 * p.beta * x * x).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    (lo, w)
}

pub fn ivg_pmf(p: IvgParams, k: i64) -> f64 {
    let (lo, w) = weights(p);
    if k < lo || k >= lo + w.len() as i64 {
        0.0
    } else {
        w[(k - lo) as usize]
    }
}

/// Mean, variance and third absolute central moment.
pub fn ivg_moments(p: IvgParams) -> (f64, f64, f64) {
    let (lo, w) = weights(p);
    // work with x = k - a to keep precision for tiny variances
    let xs: Vec<f64> = (0..w.len()).map(|i| (lo + i as i64) as f64 - p.a).collect();
    let mx: f64 = w.iter().zip(&xs).map(|(p, x)| p * x).sum();
    let var: f64 = w.iter().zip(&xs).map(|(p, x)| p * (x - mx) * (x - mx)).sum();
    let t3: f64 = w.iter().zip(&xs).map(|(p, x)| p * (x - mx).abs().powi(3)).sum();
    (mx + p.a, var, t3)
}

pub fn ivg_mean(p: IvgParams) -> f64 {
    ivg_moments(p).0
}

pub fn ivg_var(p: IvgParams) -> f64 {
    ivg_moments(p).1
}

pub fn ivg_t3(p: IvgParams) -> f64 {
    ivg_moments(p).2
}

/// Exact draw by inverse CDF over the window.
pub fn ivg_sample<R: Rng + ?Sized>(p: IvgParams, rng: &mut R) -> i64 {
    let (lo, hi) = support(p);
    let len = (hi - lo + 1) as usize;
    let mut buf = [0.0f64; 64];
    let mut heap;
    let w: &mut [f64] = if len <= 64 {
        &mut buf[..len]
    } else {
        heap = vec![0.0; len];
        &mut heap
    };
    let mut z = 0.0;
    for (i, slot) in w.iter_mut().enumerate() {
        let x = (lo + i as i64) as f64 - p.a;
        *slot = (-0.5 * p.beta * x * x).exp();
        z += *slot;
    }
    let u: f64 = rng.random::<f64>() * z;
    let mut acc = 0.0;
    for (i, &v) in w.iter().enumerate() {
        acc += v;
        if u < acc {
            return lo + i as i64;
        }
    }
    // u landed in the rounding slack at the top: return the last positive-weight point
    let last = w.iter().rposition(|&v| v > 0.0).unwrap_or(0);
    lo + last as i64
}

/// `M(beta)` together with the minimizing center in `[0, 1/2]`.
#[derive(Clone, Copy, Debug)]
pub struct ErrorM {
    pub value: f64,
    pub argmin: f64,
}

/// `M(beta) = (2 pi)^2 beta inf_{a in [0,1/2]} Var(a, (2 pi)^2 beta)`.
pub fn error_m(beta: f64) -> f64 {
    error_m_detail(beta).value
}

pub fn error_m_detail(beta: f64) -> ErrorM {
    let bh = (2.0 * PI).powi(2) * beta;
    let f = |a: f64| ivg_var(IvgParams::new(a, bh));
    let grid = 200;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..=grid {
        let v = f(0.5 * i as f64 / grid as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let h = 0.5 / grid as f64;
    let lo = (best_i as f64 * h - h).max(0.0);
    let hi = (best_i as f64 * h + h).min(0.5);
    let (a, v) = golden_min(f, lo, hi, 1e-10);
    let (a, v) = if v < best { (a, v) } else { (best_i as f64 * h, best) };
    ErrorM { value: bh * v, argmin: a }
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Grid lower bound on `K_beta = sup_{bh > beta, a} T(a,bh) / Var(a,bh)`, with `bh <= beta + 50`.
pub fn ratio_k(beta: f64) -> f64 {
    ratio_k_grid(beta, 100, 100)
}

/// `nb` points in `bh`, `na` points in `a in [0, 1/2]` (the ratio is 1-periodic and even in `a`).
pub fn ratio_k_grid(beta: f64, nb: usize, na: usize) -> f64 {
    let mut sup: f64 = 0.0;
    for ib in 0..=nb {
        let bh = beta + 50.0 * ib as f64 / nb as f64;
        for ia in 0..=na {
            let a = 0.5 * ia as f64 / na as f64;
            let (_, v, t) = ivg_moments(IvgParams::new(a, bh));
            if v > 0.0 {
                sup = sup.max(t / v);
            }
        }
    }
    sup
}
