use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::Form;
use crate::lattice::{CellKey, Lattice, LatticeSpec};

/// Rectangle `R` in the plane `(i1, i2)` with lower corner `corner`, `l` cells along `i1`
/// and `h` cells along `i2`. Its boundary loop runs along `+i1`, `+i2`, `-i1`, `-i2`,
/// matching the orientation of the faces of `R`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectLoop {
    pub plane: (usize, usize),
    pub corner: Vec<i64>,
    pub l: usize,
    pub h: usize,
}

impl RectLoop {
    pub fn new(plane: (usize, usize), corner: Vec<i64>, l: usize, h: usize) -> Result<RectLoop> {
        let n = corner.len();
        if plane.0 >= plane.1 || plane.1 >= n {
            return Err(Error::Inconsistent(format!("plane {plane:?} must be an increasing pair of axes below {n}")));
        }
        if l == 0 || h == 0 {
            return Err(Error::Inconsistent("loop sides must be positive".into()));
        }
        Ok(RectLoop { plane, corner, l, h })
    }

    /// Loop centred at the origin; odd sides put the extra cell on the positive side.
    pub fn centred(n: usize, plane: (usize, usize), l: usize, h: usize) -> Result<RectLoop> {
        let mut corner = vec![0i64; n];
        if plane.1 < n {
            corner[plane.0] = -((l / 2) as i64);
            corner[plane.1] = -((h / 2) as i64);
        }
        RectLoop::new(plane, corner, l, h)
    }

    pub fn n(&self) -> usize {
        self.corner.len()
    }

    pub fn perimeter(&self) -> usize {
        2 * (self.l + self.h)
    }

    pub fn translated(&self, shift: &[i64]) -> RectLoop {
        let corner = self.corner.iter().zip(shift).map(|(c, s)| c + s).collect();
        RectLoop { corner, ..self.clone() }
    }

    /// Smallest lattice distance from `R` to the boundary of the box, over all axes.
    pub fn margin_in(&self, spec: &LatticeSpec) -> i64 {
        let (i1, i2) = self.plane;
        (0..self.n())
            .map(|a| {
                let lo = self.corner[a];
                let hi = lo
                    + if a == i1 {
                        self.l as i64
                    } else if a == i2 {
                        self.h as i64
                    } else {
                        0
                    };
                (lo - spec.lower()[a]).min(spec.upper()[a] - hi)
            })
            .min()
            .unwrap_or(0)
    }

    /// Errors unless `R` sits at least `margin` from the boundary.
    pub fn check_inside(&self, spec: &LatticeSpec, margin: i64) -> Result<()> {
        if spec.n() != self.n() {
            return Err(Error::Mismatch(format!("loop in dimension {} on a {}-dimensional box", self.n(), spec.n())));
        }
        let m = self.margin_in(spec);
        if m < margin {
            return Err(Error::OutsideBox(format!("loop {self:?} has margin {m} < {margin} in {spec}")));
        }
        Ok(())
    }

    /// Default margin: the longer side.
    pub fn default_margin(&self) -> i64 {
        self.l.max(self.h) as i64
    }

    /// Oriented edges of the loop with their signs.
    pub fn edges(&self) -> Vec<(CellKey, i8)> {
        let (i1, i2) = self.plane;
        let mut out = Vec::with_capacity(self.perimeter());
        let at = |d1: i64, d2: i64| {
            let mut b = self.corner.clone();
            b[i1] += d1;
            b[i2] += d2;
            b
        };
        for t in 0..self.l as i64 {
            out.push((CellKey::edge(at(t, 0), i1), 1));
            out.push((CellKey::edge(at(t, self.h as i64), i1), -1));
        }
        for s in 0..self.h as i64 {
            out.push((CellKey::edge(at(self.l as i64, s), i2), 1));
            out.push((CellKey::edge(at(0, s), i2), -1));
        }
        out
    }

    /// Faces of `R`, all positively oriented.
    pub fn faces(&self) -> Vec<CellKey> {
        let (i1, i2) = self.plane;
        let mut out = Vec::with_capacity(self.l * self.h);
        for t in 0..self.l as i64 {
            for s in 0..self.h as i64 {
                let mut b = self.corner.clone();
                b[i1] += t;
                b[i2] += s;
                out.push(CellKey::new(b, &[i1, i2]));
            }
        }
        out
    }

    /// The 1-form `1_gamma` (the boundary of `1_R`).
    pub fn boundary_form(&self, lattice: &Arc<Lattice>) -> Result<Form<f64>> {
        self.check_inside(lattice.spec(), 0)?;
        let mut f = Form::zeros(lattice, 1)?;
        for (e, s) in self.edges() {
            let idx = lattice.index_of(&e).ok_or_else(|| Error::OutsideBox(format!("{e:?}")))?;
            f.update(|v| v[idx] += s as f64);
        }
        Ok(f)
    }

    /// The 2-form `1_R`.
    pub fn indicator(&self, lattice: &Arc<Lattice>) -> Result<Form<f64>> {
        self.check_inside(lattice.spec(), 0)?;
        let mut f = Form::zeros(lattice, 2)?;
        for c in self.faces() {
            let idx = lattice.index_of(&c).ok_or_else(|| Error::OutsideBox(format!("{c:?}")))?;
            f.update(|v| v[idx] = 1.0);
        }
        Ok(f)
    }

    /// Canonical edge indices and signs, for repeated evaluation.
    pub fn edge_indices(&self, lattice: &Lattice) -> Result<Vec<(usize, f64)>> {
        self.check_inside(lattice.spec(), 0)?;
        self.edges()
            .into_iter()
            .map(|(e, s)| lattice.index_of(&e).map(|i| (i, s as f64)).ok_or_else(|| Error::OutsideBox(format!("{e:?}"))))
            .collect()
    }
}

/// `W = prod_{e in gamma} exp(i theta(e))` along the oriented loop.
pub fn wilson(theta: &Form<f64>, lp: &RectLoop) -> Result<Complex64> {
    if theta.degree() != 1 {
        return Err(Error::Degree { k: theta.degree(), n: theta.lattice().n() });
    }
    let idx = lp.edge_indices(theta.lattice())?;
    Ok(wilson_indexed(theta.values(), &idx))
}

pub(crate) fn wilson_indexed(theta: &[f64], idx: &[(usize, f64)]) -> Complex64 {
    let phase: f64 = idx.iter().map(|&(i, s)| s * theta[i]).sum();
    Complex64::from_polar(1.0, phase)
}
