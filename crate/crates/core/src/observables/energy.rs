//! Loop energies `||P 1_R||^2 = <(-Delta)^{-1} 1_gamma, 1_gamma>` and the spread of
//! `P 1_R = d (-Delta)^{-1} 1_gamma` over faces.

use std::sync::Arc;

use serde::Serialize;

use super::loops::RectLoop;
use super::plane::{PlaneGreen, PlaneSolution};
use crate::error::{Error, Result};
use crate::forms::inner;
use crate::harmonic::{solve_poisson, OneFormSpectral, SolveSettings};
use crate::lattice::{Lattice, LatticeSpec};

fn plane_source(pg: &PlaneGreen, lp: &RectLoop) -> Result<[Vec<f64>; 2]> {
    let (i1, i2) = lp.plane;
    let mut src = pg.zero_source();
    for (e, s) in lp.edges() {
        let block = if e.dirs == 1 << i1 { 0 } else { 1 };
        pg.add_source(&mut src, block, e.base[i1], e.base[i2], s as f64)?;
    }
    Ok(src)
}

/// Loop energy from the factorized direction-graph expansion. Needs only the box
/// description, so it scales to boxes that could not be stored as forms.
pub fn loop_energy(lp: &RectLoop, spec: &LatticeSpec, margin: i64) -> Result<f64> {
    lp.check_inside(spec, margin)?;
    let pg = PlaneGreen::new(spec, lp.plane, &lp.corner)?;
    Ok(pg.solve(&plane_source(&pg, lp)?, &[])?.energy)
}

#[derive(Clone, Debug)]
pub enum FullSolver {
    /// Separable eigenbasis of all direction graphs on the stored lattice.
    Spectral,
    /// Conjugate gradients on the full 1-form Laplacian.
    ConjugateGradient(SolveSettings),
}

/// Loop energy from a solve on the whole 1-form space of a stored lattice.
pub fn loop_energy_full(lp: &RectLoop, lattice: &Arc<Lattice>, solver: FullSolver) -> Result<f64> {
    let b = lp.boundary_form(lattice)?;
    match solver {
        FullSolver::Spectral => inner(&OneFormSpectral::new(lattice).solve_form(&b)?, &b),
        FullSolver::ConjugateGradient(settings) => {
            let u = solve_poisson(1, &b, lattice.boundary(), &settings)?;
            Ok(-inner(&u, &b)?)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SpreadSettings {
    /// Initial half-width (per transverse axis) of the slab where faces are evaluated.
    pub slab_radius: usize,
    /// The slab widens until the largest face value on its outer layer is below the
    /// threshold, up to this half-width.
    pub max_radius: usize,
}

impl Default for SpreadSettings {
    fn default() -> Self {
        SpreadSettings { slab_radius: 2, max_radius: 6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpreadProfile {
    pub threshold: f64,
    /// `||P 1_R||^2`.
    pub total: f64,
    /// `||(P 1_R) 1_{|P 1_R| < b}||^2`.
    pub truncated: f64,
    pub ratio: f64,
    pub slab_radius: usize,
    /// Energy carried by faces inside the slab.
    pub slab_energy: f64,
    /// Largest `|P 1_R|` on the outer layer of the slab; faces beyond it are smaller.
    pub shell_max: f64,
    /// Faces with `|P 1_R| >= b`.
    pub large_faces: usize,
    /// `(k, |P 1_R(f_k)|^2)` for faces of `R` in the middle column at distance `k` from the
    /// lower side.
    pub profile: Vec<(usize, f64)>,
}

struct SlabScan {
    energy: f64,
    large: f64,
    large_faces: usize,
    shell_max: f64,
}

fn scan_slab(pg: &PlaneGreen, sol: &PlaneSolution, r: i64, b: f64) -> SlabScan {
    let spec = pg.spec();
    let (i1, i2) = pg.plane();
    let (lo1, hi1, lo2, hi2) = (spec.lower()[i1], spec.upper()[i1], spec.lower()[i2], spec.upper()[i2]);
    let offsets = sol.offsets();
    let index_of = |off: &[i64]| offsets.iter().position(|o| o.as_slice() == off);
    let mut scan = SlabScan { energy: 0.0, large: 0.0, large_faces: 0, shell_max: 0.0 };
    let mut visit = |v: f64, on_shell: bool| {
        let v2 = v * v;
        scan.energy += v2;
        if v.abs() >= b {
            scan.large += v2;
            scan.large_faces += 1;
        }
        if on_shell {
            scan.shell_max = scan.shell_max.max(v.abs());
        }
    };
    let axes = pg.transverse_axes();
    let coord = |off: &[i64], t: usize| pg.anchor()[axes[t]] + off[t];
    for (oi, off) in offsets.iter().enumerate() {
        if (0..off.len()).any(|t| coord(off, t) < spec.lower()[axes[t]] || coord(off, t) > spec.upper()[axes[t]]) {
            continue;
        }
        let on_shell = off.iter().any(|d| d.abs() == r);
        // faces spanning the plane itself
        for x in lo1..hi1 {
            for y in lo2..hi2 {
                let v = sol.u(oi, 0, x, y) + sol.u(oi, 1, x + 1, y) - sol.u(oi, 0, x, y + 1) - sol.u(oi, 1, x, y);
                visit(v, on_shell);
            }
        }
        // faces spanning one plane direction and one transverse axis, based at this offset
        for t in 0..off.len() {
            if off[t] >= r || coord(off, t) >= spec.upper()[axes[t]] {
                continue;
            }
            let mut up = off.clone();
            up[t] += 1;
            let oj = index_of(&up).expect("slab offsets are a full cube");
            let shell = on_shell || up.iter().any(|d| d.abs() == r);
            for x in lo1..hi1 {
                for y in lo2..=hi2 {
                    visit(sol.u(oj, 0, x, y) - sol.u(oi, 0, x, y), shell);
                }
            }
            for x in lo1..=hi1 {
                for y in lo2..hi2 {
                    visit(sol.u(oj, 1, x, y) - sol.u(oi, 1, x, y), shell);
                }
            }
        }
    }
    scan
}

fn cube_offsets(dim: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                (-r..=r).map(move |d| {
                    let mut q = p.clone();
                    q.push(d);
                    q
                })
            })
            .collect();
    }
    out
}

/// Spread of `P 1_R` across faces with threshold `b`: the retained-energy ratio and the
/// distance profile from the lower side of `R`.
pub fn spread_profile(lp: &RectLoop, spec: &LatticeSpec, margin: i64, b: f64, settings: SpreadSettings) -> Result<SpreadProfile> {
    if b <= 0.0 {
        return Err(Error::Inconsistent("threshold must be positive".into()));
    }
    lp.check_inside(spec, margin)?;
    let pg = PlaneGreen::new(spec, lp.plane, &lp.corner)?;
    let src = plane_source(&pg, lp)?;
    let nt = pg.transverse_axes().len();
    let mut r = if nt == 0 { 0 } else { settings.slab_radius.max(1) };
    loop {
        let offsets = cube_offsets(nt, r as i64);
        let sol = pg.solve(&src, &offsets)?;
        let scan = scan_slab(&pg, &sol, r as i64, b);
        if nt == 0 || scan.shell_max < b || r >= settings.max_radius {
            if nt > 0 && scan.shell_max >= b {
                return Err(Error::Inconsistent(format!(
                    "face values on the slab boundary reach {:.3} >= {b} at half-width {r}",
                    scan.shell_max
                )));
            }
            let total = sol.energy;
            let truncated = total - scan.large;
            let centre = vec![0i64; nt];
            let oc = sol.offsets().iter().position(|o| *o == centre).expect("centre offset");
            let (i1, i2) = lp.plane;
            let x = lp.corner[i1] + (lp.l / 2) as i64;
            let profile = (0..=lp.h / 2)
                .map(|k| {
                    let y = lp.corner[i2] + k as i64;
                    let v = sol.u(oc, 0, x, y) + sol.u(oc, 1, x + 1, y) - sol.u(oc, 0, x, y + 1) - sol.u(oc, 1, x, y);
                    (k, v * v)
                })
                .collect();
            return Ok(SpreadProfile {
                threshold: b,
                total,
                truncated,
                ratio: truncated / total,
                slab_radius: r,
                slab_energy: scan.energy,
                shell_max: scan.shell_max,
                large_faces: scan.large_faces,
                profile,
            });
        }
        r += 1;
    }
}
