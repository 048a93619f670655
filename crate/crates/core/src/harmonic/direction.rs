//! Direction graphs: on edges parallel to `e_i` the 1-form Laplacian acts as a vertex
//! Laplacian. Free boundary: vertices are the edges of Z^n parallel to `e_i` meeting the
//! box, and the two edges sticking out of the box along `e_i` are zero (Dirichlet);
//! transverse neighbours outside the box are absent (Neumann). Zero boundary: vertices are
//! the edges of the box, boundary edges are zero (Dirichlet across the transverse faces)
//! and neighbours beyond the box along `e_i` are absent (Neumann).
//!
//! Both graphs are products of paths, so their Green functions have closed-form
//! eigen-expansions, which [`OneFormSpectral`] uses as an exact fast solver.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::Form;
use crate::lattice::{Boundary, CellKey, Lattice, LatticeSpec};

#[derive(Clone, Debug)]
pub struct DirectionGraph {
    lattice: Arc<Lattice>,
    dir: usize,
    mode: Boundary,
    /// Vertex base-point ranges, inclusive.
    lo: Vec<i64>,
    hi: Vec<i64>,
    strides: Vec<usize>,
}

impl DirectionGraph {
    pub fn new(lattice: &Arc<Lattice>, dir: usize) -> Result<Self> {
        let n = lattice.n();
        if dir >= n {
            return Err(Error::Degree { k: dir, n });
        }
        let spec = lattice.spec();
        let mut lo = spec.lower().to_vec();
        let mut hi = spec.upper().to_vec();
        match lattice.boundary() {
            Boundary::Free => lo[dir] -= 1,
            Boundary::Zero => hi[dir] -= 1,
        }
        let mut strides = vec![1usize; n];
        for a in (0..n - 1).rev() {
            strides[a] = strides[a + 1] * (hi[a + 1] - lo[a + 1] + 1) as usize;
        }
        Ok(DirectionGraph { lattice: lattice.clone(), dir, mode: lattice.boundary(), lo, hi, strides })
    }

    pub fn direction(&self) -> usize {
        self.dir
    }

    pub fn vertex_count(&self) -> usize {
        self.strides[0] * (self.hi[0] - self.lo[0] + 1) as usize
    }

    pub fn vertex_index(&self, base: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..base.len() {
            if base[a] < self.lo[a] || base[a] > self.hi[a] {
                return None;
            }
            idx += (base[a] - self.lo[a]) as usize * self.strides[a];
        }
        Some(idx)
    }

    pub fn vertex_base(&self, mut idx: usize) -> Vec<i64> {
        let n = self.lo.len();
        let mut base = vec![0; n];
        for a in 0..n {
            base[a] = self.lo[a] + (idx / self.strides[a]) as i64;
            idx %= self.strides[a];
        }
        base
    }

    /// Boundary vertices carry the value 0.
    pub fn is_boundary_vertex(&self, base: &[i64]) -> bool {
        let spec = self.lattice.spec();
        match self.mode {
            Boundary::Free => base[self.dir] == self.lo[self.dir] || base[self.dir] == self.hi[self.dir],
            Boundary::Zero => (0..base.len())
                .any(|a| a != self.dir && (base[a] == spec.lower()[a] || base[a] == spec.upper()[a])),
        }
    }

    pub fn neighbours(&self, base: &[i64]) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        for a in 0..base.len() {
            for s in [-1i64, 1] {
                let mut y = base.to_vec();
                y[a] += s;
                if self.vertex_index(&y).is_some() {
                    out.push(y);
                }
            }
        }
        out
    }

    /// `(Delta u)(x) = sum_{y ~ x} (u(y) - u(x))` at interior vertices, with `u = 0` on boundary vertices.
    pub fn laplacian_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let x = self.vertex_base(i);
            if self.is_boundary_vertex(&x) {
                continue;
            }
            let val = |b: &[i64]| {
                if self.is_boundary_vertex(b) {
                    0.0
                } else {
                    u[self.vertex_index(b).unwrap()]
                }
            };
            let me = val(&x);
            *o = self.neighbours(&x).iter().map(|y| val(y) - me).sum();
        }
        out
    }

    /// The edge of the box corresponding to a vertex, if there is one.
    pub fn edge_of(&self, base: &[i64]) -> Option<CellKey> {
        let e = CellKey::edge(base.to_vec(), self.dir);
        self.lattice.index_of(&e).map(|_| e)
    }
}

/// Eigenpairs of `-Delta` on a path of `len` nodes (coordinates `first..first+len`).
#[derive(Clone, Debug)]
pub struct PathBasis {
    pub first: i64,
    pub len: usize,
    pub eigenvalues: Vec<f64>,
    /// Row-major `len x len`: `vectors[k * len + x]` is mode `k` at node `x`.
    pub vectors: Vec<f64>,
}

impl PathBasis {
    /// Zero values just outside both ends.
    pub fn dirichlet(first: i64, len: usize) -> Self {
        let m = (len + 1) as f64;
        let norm = (2.0 / m).sqrt();
        let eigenvalues = (1..=len).map(|k| 2.0 - 2.0 * (PI * k as f64 / m).cos()).collect();
        let mut vectors = vec![0.0; len * len];
        for k in 0..len {
            for x in 0..len {
                vectors[k * len + x] = norm * (PI * (k + 1) as f64 * (x + 1) as f64 / m).sin();
            }
        }
        PathBasis { first, len, eigenvalues, vectors }
    }

    /// End nodes have a single neighbour.
    pub fn neumann(first: i64, len: usize) -> Self {
        let m = len as f64;
        let eigenvalues = (0..len).map(|k| 2.0 - 2.0 * (PI * k as f64 / m).cos()).collect();
        let mut vectors = vec![0.0; len * len];
        for k in 0..len {
            let norm = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            for x in 0..len {
                vectors[k * len + x] = norm * (PI * k as f64 * (x as f64 + 0.5) / m).cos();
            }
        }
        PathBasis { first, len, eigenvalues, vectors }
    }

    #[inline]
    pub fn node(&self, coord: i64) -> Option<usize> {
        let o = coord - self.first;
        (o >= 0 && (o as usize) < self.len).then_some(o as usize)
    }

    #[inline]
    pub fn value(&self, k: usize, node: usize) -> f64 {
        self.vectors[k * self.len + node]
    }
}

/// Separable eigenbasis of one direction graph, restricted to its interior vertices.
#[derive(Clone, Debug)]
pub struct DirectionBasis {
    pub dir: usize,
    pub axes: Vec<PathBasis>,
}

impl DirectionBasis {
    pub fn new(lattice: &Lattice, dir: usize) -> Self {
        Self::from_spec(lattice.spec(), dir)
    }

    /// Same basis built from the box description alone; no cell tables are allocated.
    pub fn from_spec(spec: &LatticeSpec, dir: usize) -> Self {
        let axes = (0..spec.n())
            .map(|a| {
                let lo = spec.lower()[a];
                let side = (spec.upper()[a] - lo) as usize;
                match (spec.boundary(), a == dir) {
                    (Boundary::Free, true) => PathBasis::dirichlet(lo, side),
                    (Boundary::Free, false) => PathBasis::neumann(lo, side + 1),
                    (Boundary::Zero, true) => PathBasis::neumann(lo, side),
                    (Boundary::Zero, false) => PathBasis::dirichlet(lo + 1, side.saturating_sub(1)),
                }
            })
            .collect();
        DirectionBasis { dir, axes }
    }

    pub fn nodes(&self) -> usize {
        self.axes.iter().map(|p| p.len).product()
    }

    /// Green function between two interior vertices by full eigen-expansion.
    pub fn green(&self, x: &[i64], y: &[i64]) -> Option<f64> {
        let nx: Vec<usize> = x.iter().zip(&self.axes).map(|(&c, p)| p.node(c)).collect::<Option<_>>()?;
        let ny: Vec<usize> = y.iter().zip(&self.axes).map(|(&c, p)| p.node(c)).collect::<Option<_>>()?;
        let n = self.axes.len();
        // enumerate modes as a mixed-radix counter
        let mut k = vec![0usize; n];
        let mut total = 0.0;
        if self.nodes() == 0 {
            return None;
        }
        loop {
            let mut w = 1.0;
            let mut lam = 0.0;
            for a in 0..n {
                let p = &self.axes[a];
                w *= p.value(k[a], nx[a]) * p.value(k[a], ny[a]);
                lam += p.eigenvalues[k[a]];
            }
            total += w / lam;
            let mut a = n;
            loop {
                if a == 0 {
                    return Some(total);
                }
                a -= 1;
                k[a] += 1;
                if k[a] < self.axes[a].len {
                    break;
                }
                k[a] = 0;
            }
        }
    }
}

/// Applies `matrix` (row-major `len x len`) along `axis` of a row-major tensor with shape `dims`.
/// With `transpose`, applies the transpose.
fn mode_multiply(data: &mut [f64], dims: &[usize], axis: usize, matrix: &[f64], transpose: bool) {
    let len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut line = vec![0.0; len];
    let mut res = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for x in 0..len {
                line[x] = data[base + x * inner];
            }
            for r in 0..len {
                let mut acc = 0.0;
                if transpose {
                    for x in 0..len {
                        acc += matrix[x * len + r] * line[x];
                    }
                } else {
                    for x in 0..len {
                        acc += matrix[r * len + x] * line[x];
                    }
                }
                res[r] = acc;
            }
            for x in 0..len {
                data[base + x * inner] = res[x];
            }
        }
    }
}

/// Exact solver for the 1-form Laplacian via the separable direction-graph eigenbases.
#[derive(Clone, Debug)]
pub struct OneFormSpectral {
    lattice: Arc<Lattice>,
    bases: Vec<DirectionBasis>,
}

impl OneFormSpectral {
    pub fn new(lattice: &Arc<Lattice>) -> Self {
        let bases = (0..lattice.n()).map(|i| DirectionBasis::new(lattice, i)).collect();
        OneFormSpectral { lattice: lattice.clone(), bases }
    }

    pub fn basis(&self, dir: usize) -> &DirectionBasis {
        &self.bases[dir]
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// Returns `u = (-Delta)^{-1} b` for a 1-form `b` (values in canonical order),
    /// skipping directions where `b` vanishes.
    pub fn solve_neg(&self, b: &[f64]) -> Vec<f64> {
        let lat = &self.lattice;
        let mut out = vec![0.0; b.len()];
        let mut scratch = vec![0i64; lat.n()];
        for (dir, basis) in self.bases.iter().enumerate() {
            let range = lat.block(1, 1 << dir).expect("direction block");
            if b[range.clone()].iter().all(|&v| v == 0.0) || basis.nodes() == 0 {
                continue;
            }
            let dims: Vec<usize> = basis.axes.iter().map(|p| p.len).collect();
            let mut data = vec![0.0; basis.nodes()];
            let mut map = Vec::with_capacity(basis.nodes());
            for idx in range.clone() {
                lat.decode(1, idx, &mut scratch);
                let mut t = 0usize;
                let mut ok = true;
                for (a, p) in basis.axes.iter().enumerate() {
                    match p.node(scratch[a]) {
                        Some(nd) => t = t * p.len + nd,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    data[t] = b[idx];
                    map.push((idx, t));
                }
            }
            for (a, p) in basis.axes.iter().enumerate() {
                mode_multiply(&mut data, &dims, a, &p.vectors, false);
            }
            // divide by eigenvalue sums
            let n = dims.len();
            let mut k = vec![0usize; n];
            for v in data.iter_mut() {
                let lam: f64 = (0..n).map(|a| basis.axes[a].eigenvalues[k[a]]).sum();
                *v /= lam;
                for a in (0..n).rev() {
                    k[a] += 1;
                    if k[a] < dims[a] {
                        break;
                    }
                    k[a] = 0;
                }
            }
            for (a, p) in basis.axes.iter().enumerate() {
                mode_multiply(&mut data, &dims, a, &p.vectors, true);
            }
            for (idx, t) in map {
                out[idx] = data[t];
            }
        }
        out
    }

    /// `(-Delta)^{-1} f` as a form.
    pub fn solve_form(&self, f: &Form<f64>) -> Result<Form<f64>> {
        if f.degree() != 1 || !Arc::ptr_eq(f.lattice(), &self.lattice) && f.lattice().spec() != self.lattice.spec() {
            return Err(Error::Mismatch("spectral solver expects a 1-form on its lattice".into()));
        }
        Ok(Form::from_raw(&self.lattice, 1, self.solve_neg(f.values())))
    }
}
