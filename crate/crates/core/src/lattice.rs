//! Oriented cells of a box in Z^n, their canonical ordering and incidence.
//!
//! A k-cell is a base point `x` together with `k` increasing directions
//! `i_1 < ... < i_k`; it is the unit cube `x + [0,1]e_{i_1} + ... + [0,1]e_{i_k}`.
//! Cells of a given degree are ordered by direction set (lexicographic on the
//! sorted index list) and then by base point (lexicographic, axis 0 most
//! significant). Indices are computed in closed form.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::SparseOperator;

/// Largest supported dimension (direction sets are stored as bit masks).
pub const MAX_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Free,
    Zero,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Free => write!(f, "free"),
            Boundary::Zero => write!(f, "zero"),
        }
    }
}

/// Axis-aligned box `[lower_0, upper_0] x ... x [lower_{n-1}, upper_{n-1}]` in Z^n.
///
/// The usual case is the cube `[-j, j]^n`, built with [`LatticeSpec::new`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticeSpec {
    n: usize,
    lower: Vec<i64>,
    upper: Vec<i64>,
    boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(n: usize, j: i64, boundary: Boundary) -> Result<Self> {
        if j < 1 {
            return Err(Error::InvalidLattice(format!("half-side must be >= 1, got {j}")));
        }
        Self::cuboid(vec![-j; n], vec![j; n], boundary)
    }

    pub fn cuboid(lower: Vec<i64>, upper: Vec<i64>, boundary: Boundary) -> Result<Self> {
        let n = lower.len();
        if n < 2 || n > MAX_DIM {
            return Err(Error::InvalidLattice(format!("dimension must be in 2..={MAX_DIM}, got {n}")));
        }
        if upper.len() != n {
            return Err(Error::InvalidLattice("lower and upper corners differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| u <= l) {
            return Err(Error::InvalidLattice("every side must have length >= 1".into()));
        }
        Ok(LatticeSpec { n, lower, upper, boundary })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        LatticeSpec { boundary, ..self.clone() }
    }

    /// Half-side `j` when the box is the symmetric cube `[-j, j]^n`.
    pub fn half_side(&self) -> Option<i64> {
        let j = self.upper[0];
        (self.lower.iter().all(|&l| l == -j) && self.upper.iter().all(|&u| u == j)).then_some(j)
    }

    pub fn contains_point(&self, x: &[i64]) -> bool {
        x.len() == self.n && x.iter().enumerate().all(|(a, &v)| self.lower[a] <= v && v <= self.upper[a])
    }

    /// Number of points along axis `a`.
    pub fn points(&self, a: usize) -> usize {
        (self.upper[a] - self.lower[a] + 1) as usize
    }
}

impl fmt::Display for LatticeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.half_side() {
            Some(j) => write!(f, "[-{j},{j}]^{} ({})", self.n, self.boundary),
            None => {
                let sides: Vec<String> = (0..self.n).map(|a| format!("[{},{}]", self.lower[a], self.upper[a])).collect();
                write!(f, "{} ({})", sides.join("x"), self.boundary)
            }
        }
    }
}

/// An oriented k-cell. `dirs` is a bit mask of the spanned directions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub base: Vec<i64>,
    pub dirs: u32,
    pub sign: i8,
}

impl CellKey {
    pub fn new(base: Vec<i64>, dirs: &[usize]) -> Self {
        let mask = dirs.iter().fold(0u32, |m, &d| m | (1 << d));
        debug_assert_eq!(mask.count_ones() as usize, dirs.len(), "repeated direction");
        CellKey { base, dirs: mask, sign: 1 }
    }

    pub fn vertex(base: Vec<i64>) -> Self {
        CellKey { base, dirs: 0, sign: 1 }
    }

    pub fn edge(base: Vec<i64>, dir: usize) -> Self {
        CellKey { base, dirs: 1 << dir, sign: 1 }
    }

    pub fn degree(&self) -> usize {
        self.dirs.count_ones() as usize
    }

    pub fn dir_list(&self) -> Vec<usize> {
        mask_dirs(self.dirs)
    }

    pub fn negated(&self) -> Self {
        CellKey { sign: -self.sign, ..self.clone() }
    }

    pub fn positive(&self) -> Self {
        CellKey { sign: 1, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub cell: CellKey,
    pub coeff: i8,
}

pub fn mask_dirs(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask & (1 << b) != 0).collect()
}

/// Boundary of an oriented k-cell:
/// `sum_{eps in {0,1}} sum_{j=1..k} (-1)^(eps+j) (face without v_j, based at x + eps v_j)`.
pub fn boundary_of(cell: &CellKey) -> Result<Vec<Incidence>> {
    let k = cell.degree();
    if k == 0 {
        return Err(Error::Degree { k: 0, n: cell.base.len() });
    }
    let dirs = cell.dir_list();
    let mut out = Vec::with_capacity(2 * k);
    for (pos, &d) in dirs.iter().enumerate() {
        let jsign: i8 = if (pos + 1) % 2 == 0 { 1 } else { -1 };
        for eps in 0..2i64 {
            let mut base = cell.base.clone();
            base[d] += eps;
            let esign: i8 = if eps == 0 { 1 } else { -1 };
            out.push(Incidence {
                cell: CellKey { base, dirs: cell.dirs & !(1 << d), sign: 1 },
                coeff: jsign * esign * cell.sign,
            });
        }
    }
    Ok(out)
}

/// Coefficient of the face without direction `d` (at offset `eps`) in the
/// boundary of a positive cell with direction mask `dirs`.
#[inline]
pub fn face_coeff(dirs: u32, d: usize, eps: usize) -> i8 {
    let pos = (dirs & ((1u32 << d) - 1)).count_ones() as usize + 1;
    if (pos + eps) % 2 == 0 {
        1
    } else {
        -1
    }
}

#[derive(Debug)]
struct DegreeLayout {
    sets: Vec<u32>,
    offsets: Vec<usize>,
    extents: Vec<Vec<usize>>,
    strides: Vec<Vec<usize>>,
    set_of_mask: Vec<Option<usize>>,
}

impl DegreeLayout {
    fn new(spec: &LatticeSpec, k: usize) -> Self {
        let n = spec.n;
        let mut sets: Vec<u32> = Vec::new();
        combinations(n, k, &mut Vec::new(), 0, &mut sets);
        let mut offsets = vec![0];
        let mut extents = Vec::new();
        let mut strides = Vec::new();
        let mut set_of_mask = vec![None; 1 << n];
        for (s, &mask) in sets.iter().enumerate() {
            set_of_mask[mask as usize] = Some(s);
            let ext: Vec<usize> = (0..n)
                .map(|a| {
                    let side = (spec.upper[a] - spec.lower[a]) as usize;
                    if mask & (1 << a) != 0 {
                        side
                    } else {
                        side + 1
                    }
                })
                .collect();
            let mut st = vec![1usize; n];
            for a in (0..n.saturating_sub(1)).rev() {
                st[a] = st[a + 1] * ext[a + 1];
            }
            let count: usize = ext.iter().product();
            offsets.push(offsets.last().unwrap() + count);
            extents.push(ext);
            strides.push(st);
        }
        DegreeLayout { sets, offsets, extents, strides, set_of_mask }
    }

    fn count(&self) -> usize {
        *self.offsets.last().unwrap()
    }
}

fn combinations(n: usize, k: usize, cur: &mut Vec<usize>, start: usize, out: &mut Vec<u32>) {
    if cur.len() == k {
        out.push(cur.iter().fold(0u32, |m, &d| m | (1 << d)));
        return;
    }
    for d in start..n {
        cur.push(d);
        combinations(n, k, cur, d + 1, out);
        cur.pop();
    }
}

/// A finite box with its cell layout, boundary flags and cached operators.
/// Shared by reference (`Arc`) between forms, solvers and samplers.
pub struct Lattice {
    spec: LatticeSpec,
    layouts: Vec<DegreeLayout>,
    boundary_flags: Vec<Vec<bool>>,
    d_ops: Vec<OnceLock<SparseOperator>>,
    dt_ops: Vec<OnceLock<SparseOperator>>,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lattice({})", self.spec)
    }
}

impl Lattice {
    pub fn new(spec: LatticeSpec) -> Arc<Lattice> {
        let n = spec.n;
        let layouts: Vec<DegreeLayout> = (0..=n).map(|k| DegreeLayout::new(&spec, k)).collect();
        let mut lat = Lattice {
            spec,
            layouts,
            boundary_flags: Vec::new(),
            d_ops: (0..n).map(|_| OnceLock::new()).collect(),
            dt_ops: (0..n).map(|_| OnceLock::new()).collect(),
        };
        let mut base = vec![0i64; n];
        let flags: Vec<Vec<bool>> = (0..=n)
            .map(|k| {
                (0..lat.count(k))
                    .map(|idx| {
                        let mask = lat.decode(k, idx, &mut base);
                        lat.base_on_boundary(mask, &base)
                    })
                    .collect()
            })
            .collect();
        lat.boundary_flags = flags;
        Arc::new(lat)
    }

    pub fn from_cube(n: usize, j: i64, boundary: Boundary) -> Result<Arc<Lattice>> {
        Ok(Lattice::new(LatticeSpec::new(n, j, boundary)?))
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn boundary(&self) -> Boundary {
        self.spec.boundary
    }

    pub fn count(&self, k: usize) -> usize {
        self.layouts[k].count()
    }

    /// Direction masks of degree `k` in canonical order.
    pub fn dir_sets(&self, k: usize) -> &[u32] {
        &self.layouts[k].sets
    }

    /// Index range of the cells of degree `k` with direction mask `mask`.
    pub fn block(&self, k: usize, mask: u32) -> Option<std::ops::Range<usize>> {
        let l = &self.layouts[k];
        let s = (*l.set_of_mask.get(mask as usize)?)?;
        Some(l.offsets[s]..l.offsets[s + 1])
    }

    pub fn check_degree(&self, k: usize) -> Result<()> {
        if k > self.spec.n {
            Err(Error::Degree { k, n: self.spec.n })
        } else {
            Ok(())
        }
    }

    /// Index of a positive cell, `None` if it is not inside the box.
    pub fn index_from(&self, k: usize, mask: u32, base: &[i64]) -> Option<usize> {
        let l = &self.layouts[k];
        let s = (*l.set_of_mask.get(mask as usize)?)?;
        let ext = &l.extents[s];
        let st = &l.strides[s];
        let mut idx = l.offsets[s];
        for a in 0..self.spec.n {
            let off = base[a] - self.spec.lower[a];
            if off < 0 || off as usize >= ext[a] {
                return None;
            }
            idx += off as usize * st[a];
        }
        Some(idx)
    }

    pub fn index_of(&self, cell: &CellKey) -> Option<usize> {
        if cell.base.len() != self.spec.n {
            return None;
        }
        self.index_from(cell.degree(), cell.dirs, &cell.base)
    }

    /// Writes the base point of cell `idx` into `base` and returns its direction mask.
    pub fn decode(&self, k: usize, idx: usize, base: &mut [i64]) -> u32 {
        let l = &self.layouts[k];
        let s = l.offsets.partition_point(|&o| o <= idx) - 1;
        let mut rem = idx - l.offsets[s];
        for a in 0..self.spec.n {
            let st = l.strides[s][a];
            base[a] = self.spec.lower[a] + (rem / st) as i64;
            rem %= st;
        }
        l.sets[s]
    }

    pub fn cell(&self, k: usize, idx: usize) -> CellKey {
        let mut base = vec![0; self.spec.n];
        let dirs = self.decode(k, idx, &mut base);
        CellKey { base, dirs, sign: 1 }
    }

    pub fn enumerate_cells(&self, k: usize) -> Result<Vec<CellKey>> {
        self.check_degree(k)?;
        Ok((0..self.count(k)).map(|i| self.cell(k, i)).collect())
    }

    fn base_on_boundary(&self, mask: u32, base: &[i64]) -> bool {
        (0..self.spec.n)
            .any(|a| mask & (1 << a) == 0 && (base[a] == self.spec.lower[a] || base[a] == self.spec.upper[a]))
    }

    /// True when the cell lies inside the topological boundary of the box.
    /// For cubes with `j >= 1` this is the same as all corners lying on the boundary.
    pub fn is_boundary_cell(&self, cell: &CellKey) -> Result<bool> {
        let idx = self.index_of(cell).ok_or_else(|| Error::OutsideBox(format!("{cell:?}")))?;
        Ok(self.boundary_flags[cell.degree()][idx])
    }

    pub fn is_boundary_index(&self, k: usize, idx: usize) -> bool {
        self.boundary_flags[k][idx]
    }

    pub fn boundary_flags(&self, k: usize) -> &[bool] {
        &self.boundary_flags[k]
    }

    /// Whether a cell carries a free value under the box's boundary condition.
    #[inline]
    pub fn is_active(&self, k: usize, idx: usize) -> bool {
        self.spec.boundary == Boundary::Free || !self.boundary_flags[k][idx]
    }

    pub fn active_count(&self, k: usize) -> usize {
        (0..self.count(k)).filter(|&i| self.is_active(k, i)).count()
    }

    /// (k+1)-cells of the box containing `cell`, with the coefficient of `cell` in their boundary.
    pub fn coboundary_of(&self, cell: &CellKey) -> Result<Vec<Incidence>> {
        let k = cell.degree();
        if k >= self.spec.n {
            return Err(Error::Degree { k, n: self.spec.n });
        }
        if self.index_of(cell).is_none() {
            return Err(Error::OutsideBox(format!("{cell:?}")));
        }
        let mut out = Vec::new();
        for a in 0..self.spec.n {
            if cell.dirs & (1 << a) != 0 {
                continue;
            }
            let dirs = cell.dirs | (1 << a);
            for eps in 0..2usize {
                let mut base = cell.base.clone();
                base[a] -= eps as i64;
                if self.index_from(k + 1, dirs, &base).is_some() {
                    out.push(Incidence {
                        cell: CellKey { base, dirs, sign: 1 },
                        coeff: face_coeff(dirs, a, eps) * cell.sign,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Calls `f(face_index, coeff)` for each face in the boundary of positive cell `idx` of degree `k >= 1`.
    pub fn for_each_face(&self, k: usize, idx: usize, scratch: &mut [i64], mut f: impl FnMut(usize, i8)) {
        let mask = self.decode(k, idx, scratch);
        for d in 0..self.spec.n {
            if mask & (1 << d) == 0 {
                continue;
            }
            let fm = mask & !(1 << d);
            for eps in 0..2usize {
                scratch[d] += eps as i64;
                let fi = self.index_from(k - 1, fm, scratch).expect("face of a box cell lies in the box");
                scratch[d] -= eps as i64;
                f(fi, face_coeff(mask, d, eps));
            }
        }
    }

    /// Sparse matrix of d on k-forms (rows: (k+1)-cells, columns: k-cells). Cached.
    pub fn d_matrix(&self, k: usize) -> &SparseOperator {
        self.d_ops[k].get_or_init(|| {
            let rows = self.count(k + 1);
            let mut row_ptr = Vec::with_capacity(rows + 1);
            let mut cols = Vec::with_capacity(rows * 2 * (k + 1));
            let mut coeffs = Vec::with_capacity(rows * 2 * (k + 1));
            row_ptr.push(0);
            let mut scratch = vec![0i64; self.spec.n];
            for r in 0..rows {
                self.for_each_face(k + 1, r, &mut scratch, |c, s| {
                    cols.push(c as u32);
                    coeffs.push(s);
                });
                row_ptr.push(cols.len());
            }
            SparseOperator::from_csr(k, k + 1, self.count(k), row_ptr, cols, coeffs)
        })
    }

    /// Transpose of [`Lattice::d_matrix`] (rows: k-cells). Cached.
    pub fn d_transpose(&self, k: usize) -> &SparseOperator {
        self.dt_ops[k].get_or_init(|| self.d_matrix(k).transpose())
    }
}

/// Binomial coefficient.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// `binom(n,k) (2j+1)^(n-k) (2j)^k`.
pub fn cube_cell_count(n: usize, j: i64, k: usize) -> usize {
    binomial(n, k) * ((2 * j + 1) as usize).pow((n - k) as u32) * ((2 * j) as usize).pow(k as u32)
}
