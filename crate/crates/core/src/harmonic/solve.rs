use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{d, d_star, laplacian_raw, Form};
use crate::lattice::{Boundary, Lattice};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    /// Relative residual `||Delta f - rhs|| / ||rhs||`.
    pub tol: f64,
    /// Iteration cap; `None` means 10 times the number of cells.
    pub max_iter: Option<usize>,
    /// Jacobi (diagonal) preconditioning.
    pub preconditioner: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { tol: 1e-12, max_iter: None, preconditioner: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Projection {
    /// Onto the image of d: `d d* Delta^-1`.
    Lower,
    /// Onto the image of d*: `d* d Delta^-1`.
    Upper,
}

/// Whether the k-form Laplacian has the constants as kernel.
fn has_constant_kernel(lattice: &Lattice, k: usize) -> bool {
    match lattice.boundary() {
        Boundary::Free => k == 0,
        Boundary::Zero => k == lattice.n(),
    }
}

/// Diagonal of `-Delta` on k-forms: active faces plus cofaces.
fn neg_laplacian_diagonal(lattice: &Lattice, k: usize) -> Vec<f64> {
    let n = lattice.n();
    let mut diag = vec![0.0; lattice.count(k)];
    if k < n {
        let dt = lattice.d_transpose(k);
        for (i, v) in diag.iter_mut().enumerate() {
            *v += dt.row(i).count() as f64;
        }
    }
    if k >= 1 {
        let dm = lattice.d_matrix(k - 1);
        for (i, v) in diag.iter_mut().enumerate() {
            *v += dm.row(i).filter(|&(c, _)| lattice.is_active(k - 1, c)).count() as f64;
        }
    }
    for (i, v) in diag.iter_mut().enumerate() {
        if !lattice.is_active(k, i) || *v == 0.0 {
            *v = 1.0;
        }
    }
    diag
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `Delta f = rhs` on k-forms by conjugate gradients on `-Delta`.
///
/// Where the Laplacian has the constants as kernel (0-forms with free, top forms with
/// zero boundary conditions) the right-hand side must be neutral and the returned
/// solution has zero mean.
pub fn solve_poisson(k: usize, rhs: &Form<f64>, mode: Boundary, settings: &SolveSettings) -> Result<Form<f64>> {
    let lattice = rhs.lattice().clone();
    if rhs.degree() != k {
        return Err(Error::Mismatch(format!("rhs has degree {} but k = {k}", rhs.degree())));
    }
    if lattice.boundary() != mode {
        return Err(Error::Mismatch(format!("{mode} mode on a lattice with {} boundary", lattice.boundary())));
    }
    let x = solve_raw(&lattice, k, rhs.values(), settings)?;
    Ok(Form::from_raw(&lattice, k, x))
}

pub(crate) fn solve_raw(lattice: &Arc<Lattice>, k: usize, rhs: &[f64], settings: &SolveSettings) -> Result<Vec<f64>> {
    if settings.tol <= 0.0 {
        return Err(Error::Mismatch("tolerance must be positive".into()));
    }
    let len = rhs.len();
    let kernel = has_constant_kernel(lattice, k);
    // b = -rhs so that A = -Delta is positive definite
    let mut b: Vec<f64> = rhs.iter().map(|v| -v).collect();
    for (i, v) in b.iter_mut().enumerate() {
        if !lattice.is_active(k, i) {
            *v = 0.0;
        }
    }
    let bnorm = dot(&b, &b).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; len]);
    }
    if kernel {
        let s: f64 = b.iter().sum();
        if s.abs() > 1e-9 * bnorm * (len as f64).sqrt() {
            return Err(Error::Inconsistent(format!("right-hand side has nonzero total {s:e} in the kernel direction")));
        }
        remove_mean(&mut b);
    }
    let max_iter = settings.max_iter.unwrap_or(10 * len.max(10));
    let diag = settings.preconditioner.then(|| neg_laplacian_diagonal(lattice, k));
    let precond = |r: &[f64], z: &mut [f64]| match &diag {
        Some(dg) => z.iter_mut().zip(r).zip(dg).for_each(|((z, r), g)| *z = r / g),
        None => z.copy_from_slice(r),
    };
    let (mut s1, mut s2) = (Vec::new(), Vec::new());
    let mut apply = |x: &[f64], out: &mut [f64]| {
        laplacian_raw(lattice, k, x, out, &mut s1, &mut s2);
        out.iter_mut().for_each(|v| *v = -*v);
    };

    let mut x = vec![0.0; len];
    let mut r = b.clone();
    let mut z = vec![0.0; len];
    let mut ap = vec![0.0; len];
    let mut iter = 0usize;
    let target = settings.tol * bnorm;
    loop {
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iter < max_iter {
            if dot(&r, &r).sqrt() <= 0.5 * target {
                break;
            }
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
            iter += 1;
        }
        if kernel {
            remove_mean(&mut x);
        }
        // true residual
        apply(&x, &mut ap);
        r.iter_mut().zip(&b).zip(&ap).for_each(|((r, b), a)| *r = b - a);
        let res = dot(&r, &r).sqrt();
        if res <= target {
            return Ok(x);
        }
        if iter >= max_iter {
            return Err(Error::NoConvergence { iterations: iter, residual: res / bnorm });
        }
        iter += 1;
    }
}

/// Orthogonal projection onto the image of d (`Lower`) or of d* (`Upper`), `0 < k < n`.
pub fn project(k: usize, direction: Projection, f: &Form<f64>, mode: Boundary, settings: &SolveSettings) -> Result<Form<f64>> {
    let n = f.lattice().n();
    if k == 0 || k >= n || f.degree() != k {
        return Err(Error::Degree { k, n });
    }
    let g = solve_poisson(k, f, mode, settings)?;
    match direction {
        Projection::Lower => d(&d_star(&g, mode)?),
        Projection::Upper => d_star(&d(&g)?, mode),
    }
}
