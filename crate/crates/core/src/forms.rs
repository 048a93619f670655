//! k-forms on a box, the exterior derivative, codifferentials and Laplacians.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{face_coeff, Boundary, CellKey, Lattice};

/// Scalar payload of a form: `f64` or `i64`.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + AddAssign
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn from_coeff(c: i8) -> Self;
    fn to_f64(self) -> f64;
    fn is_zero(self) -> bool {
        self == Self::default()
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_coeff(c: i8) -> Self {
        c as f64
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for i64 {
    #[inline]
    fn from_coeff(c: i8) -> Self {
        c as i64
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Sparse integer matrix in compressed-row form with coefficients in {-1, +1}.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    from_degree: usize,
    to_degree: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    coeffs: Vec<i8>,
}

const PAR_ROWS: usize = 1 << 15;

impl SparseOperator {
    pub fn from_csr(
        from_degree: usize,
        to_degree: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        coeffs: Vec<i8>,
    ) -> Self {
        assert_eq!(cols.len(), coeffs.len());
        assert_eq!(*row_ptr.last().unwrap(), cols.len());
        SparseOperator { from_degree, to_degree, ncols, row_ptr, cols, coeffs }
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.ncols
    }

    pub fn from_degree(&self) -> usize {
        self.from_degree
    }

    pub fn to_degree(&self) -> usize {
        self.to_degree
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Entries `(col, coeff)` of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, i8)> + '_ {
        let s = self.row_ptr[r];
        let e = self.row_ptr[r + 1];
        self.cols[s..e].iter().zip(&self.coeffs[s..e]).map(|(&c, &v)| (c as usize, v))
    }

    /// All `(row, col, coeff)` triples.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        (0..self.rows()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    #[inline]
    fn row_dot<T: Scalar>(&self, r: usize, x: &[T]) -> T {
        let mut acc = T::default();
        for i in self.row_ptr[r]..self.row_ptr[r + 1] {
            let v = x[self.cols[i] as usize];
            if self.coeffs[i] > 0 {
                acc += v;
            } else {
                acc += -v;
            }
        }
        acc
    }

    pub fn apply_into<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(out.len(), self.rows());
        if out.len() >= PAR_ROWS {
            out.par_chunks_mut(4096).enumerate().for_each(|(ci, chunk)| {
                for (o, slot) in chunk.iter_mut().enumerate() {
                    *slot = self.row_dot(ci * 4096 + o, x);
                }
            });
        } else {
            for (r, slot) in out.iter_mut().enumerate() {
                *slot = self.row_dot(r, x);
            }
        }
    }

    pub fn apply<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); self.rows()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.cols {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut fill = counts;
        let mut cols = vec![0u32; self.cols.len()];
        let mut coeffs = vec![0i8; self.cols.len()];
        for r in 0..self.rows() {
            for (c, v) in self.row(r) {
                let p = fill[c];
                cols[p] = r as u32;
                coeffs[p] = v;
                fill[c] += 1;
            }
        }
        SparseOperator {
            from_degree: self.to_degree,
            to_degree: self.from_degree,
            ncols: self.rows(),
            row_ptr,
            cols,
            coeffs,
        }
    }
}

/// A k-form: one value per positive k-cell in canonical order.
/// Under zero boundary conditions boundary values are always 0.
#[derive(Clone)]
pub struct Form<T> {
    lattice: Arc<Lattice>,
    k: usize,
    values: Vec<T>,
}

impl<T: Scalar> Debug for Form<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Form(k={}, {:?}, {} values)", self.k, self.lattice.spec(), self.values.len())
    }
}

impl<T: Scalar> PartialEq for Form<T> {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.lattice.spec() == other.lattice.spec() && self.values == other.values
    }
}

impl<T: Scalar> Form<T> {
    pub fn zeros(lattice: &Arc<Lattice>, k: usize) -> Result<Self> {
        lattice.check_degree(k)?;
        Ok(Form { lattice: lattice.clone(), k, values: vec![T::default(); lattice.count(k)] })
    }

    /// Builds a form from values in canonical order; boundary entries are zeroed under zero boundary conditions.
    pub fn from_values(lattice: &Arc<Lattice>, k: usize, values: Vec<T>) -> Result<Self> {
        lattice.check_degree(k)?;
        if values.len() != lattice.count(k) {
            return Err(Error::Mismatch(format!("{} values for {} cells", values.len(), lattice.count(k))));
        }
        let mut f = Form { lattice: lattice.clone(), k, values };
        f.enforce_boundary();
        Ok(f)
    }

    pub fn from_fn(lattice: &Arc<Lattice>, k: usize, mut g: impl FnMut(usize) -> T) -> Result<Self> {
        lattice.check_degree(k)?;
        let values = (0..lattice.count(k)).map(&mut g).collect();
        Self::from_values(lattice, k, values)
    }

    /// Signed indicator of one oriented cell.
    pub fn indicator(lattice: &Arc<Lattice>, cell: &CellKey) -> Result<Self> {
        let mut f = Self::zeros(lattice, cell.degree())?;
        f.set(cell, T::from_coeff(1))?;
        Ok(f)
    }

    pub(crate) fn from_raw(lattice: &Arc<Lattice>, k: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), lattice.count(k));
        let mut f = Form { lattice: lattice.clone(), k, values };
        f.enforce_boundary();
        f
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mutates the raw values; the boundary invariant is restored afterwards.
    pub fn update(&mut self, f: impl FnOnce(&mut [T])) {
        f(&mut self.values);
        self.enforce_boundary();
    }

    pub(crate) fn values_mut_unchecked(&mut self) -> &mut [T] {
        &mut self.values
    }

    fn enforce_boundary(&mut self) {
        if self.lattice.boundary() == Boundary::Zero {
            for (v, &b) in self.values.iter_mut().zip(self.lattice.boundary_flags(self.k)) {
                if b {
                    *v = T::default();
                }
            }
        }
    }

    fn locate(&self, cell: &CellKey) -> Result<usize> {
        if cell.degree() != self.k {
            return Err(Error::Mismatch(format!("cell of degree {} for a {}-form", cell.degree(), self.k)));
        }
        self.lattice.index_of(cell).ok_or_else(|| Error::OutsideBox(format!("{cell:?}")))
    }

    /// Value at an oriented cell (negated for negative orientation).
    pub fn get(&self, cell: &CellKey) -> Result<T> {
        let v = self.values[self.locate(cell)?];
        Ok(if cell.sign < 0 { -v } else { v })
    }

    pub fn set(&mut self, cell: &CellKey, value: T) -> Result<()> {
        let idx = self.locate(cell)?;
        let value = if cell.sign < 0 { -value } else { value };
        if !self.lattice.is_active(self.k, idx) && !value.is_zero() {
            return Err(Error::BoundaryValue);
        }
        self.values[idx] = value;
        Ok(())
    }

    pub fn to_f64(&self) -> Form<f64> {
        Form { lattice: self.lattice.clone(), k: self.k, values: self.values.iter().map(|v| v.to_f64()).collect() }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.to_f64() * v.to_f64()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same(self, other)?;
        Ok(Form {
            lattice: self.lattice.clone(),
            k: self.k,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same(self, other)?;
        Ok(Form {
            lattice: self.lattice.clone(),
            k: self.k,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        Form { lattice: self.lattice.clone(), k: self.k, values: self.values.iter().map(|&v| v * s).collect() }
    }
}

fn check_same<A: Scalar, B: Scalar>(f1: &Form<A>, f2: &Form<B>) -> Result<()> {
    if f1.k != f2.k {
        return Err(Error::Mismatch(format!("degrees {} and {}", f1.k, f2.k)));
    }
    if !Arc::ptr_eq(&f1.lattice, &f2.lattice) && f1.lattice.spec() != f2.lattice.spec() {
        return Err(Error::Mismatch("forms live on different lattices".into()));
    }
    Ok(())
}

fn check_mode(lattice: &Lattice, mode: Boundary) -> Result<()> {
    if lattice.boundary() != mode {
        return Err(Error::Mismatch(format!("{mode} mode on a lattice with {} boundary", lattice.boundary())));
    }
    Ok(())
}

/// `sum_w f1(w) f2(w)` over positive cells.
pub fn inner<A: Scalar, B: Scalar>(f1: &Form<A>, f2: &Form<B>) -> Result<f64> {
    check_same(f1, f2)?;
    Ok(f1.values.iter().zip(&f2.values).map(|(a, b)| a.to_f64() * b.to_f64()).sum())
}

/// Exterior derivative `(df)(w) = sum_{v in dw} f(v)`.
pub fn d<T: Scalar>(f: &Form<T>) -> Result<Form<T>> {
    let n = f.lattice.n();
    if f.k >= n {
        return Err(Error::Degree { k: f.k + 1, n });
    }
    let values = f.lattice.d_matrix(f.k).apply(&f.values);
    Ok(Form::from_raw(&f.lattice, f.k + 1, values))
}

/// Codifferential `d* = -d^T`; under `Zero` the output is forced to 0 on boundary cells.
pub fn d_star<T: Scalar>(f: &Form<T>, mode: Boundary) -> Result<Form<T>> {
    check_mode(&f.lattice, mode)?;
    if f.k == 0 {
        return Err(Error::Degree { k: 0, n: f.lattice.n() });
    }
    let mut values = f.lattice.d_transpose(f.k - 1).apply(&f.values);
    for v in values.iter_mut() {
        *v = -*v;
    }
    Ok(Form::from_raw(&f.lattice, f.k - 1, values))
}

/// `Delta f = d d* f + d* d f` (ring variants under `Zero`).
pub fn laplacian_apply<T: Scalar>(f: &Form<T>, mode: Boundary) -> Result<Form<T>> {
    check_mode(&f.lattice, mode)?;
    let n = f.lattice.n();
    let mut out = vec![T::default(); f.values.len()];
    if f.k >= 1 {
        let a = d(&d_star(f, mode)?)?;
        for (o, v) in out.iter_mut().zip(a.values) {
            *o += v;
        }
    }
    if f.k < n {
        let b = d_star(&d(f)?, mode)?;
        for (o, v) in out.iter_mut().zip(b.values) {
            *o += v;
        }
    }
    Ok(Form::from_raw(&f.lattice, f.k, out))
}

/// Raw Laplacian on value slices, used by the solvers. `scratch_*` hold d f and d* f.
pub(crate) fn laplacian_raw(lattice: &Lattice, k: usize, x: &[f64], out: &mut [f64], lo: &mut Vec<f64>, hi: &mut Vec<f64>) {
    let n = lattice.n();
    let zero = lattice.boundary() == Boundary::Zero;
    out.iter_mut().for_each(|v| *v = 0.0);
    if k >= 1 {
        let dt = lattice.d_transpose(k - 1);
        lo.resize(dt.rows(), 0.0);
        dt.apply_into(x, lo);
        if zero {
            for (v, &b) in lo.iter_mut().zip(lattice.boundary_flags(k - 1)) {
                if b {
                    *v = 0.0;
                }
            }
        }
        // d(d* x) with d* = -d^T
        let dm = lattice.d_matrix(k - 1);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, s) in dm.row(r) {
                acc += s as f64 * lo[c];
            }
            *o -= acc;
        }
    }
    if k < n {
        let dm = lattice.d_matrix(k);
        hi.resize(dm.rows(), 0.0);
        dm.apply_into(x, hi);
        let dt = lattice.d_transpose(k);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, s) in dt.row(r) {
                acc += s as f64 * hi[c];
            }
            *o -= acc;
        }
    }
    if zero {
        for (v, &b) in out.iter_mut().zip(lattice.boundary_flags(k)) {
            if b {
                *v = 0.0;
            }
        }
    }
}

/// Deterministic integer preimage `n_q` with `d n_q = q` for a closed integer form `q`.
///
/// Cone construction: integrate `q` along the highest remaining axis starting from the
/// lower face, then recurse on a face of one dimension less (the lower face for free
/// boundary conditions, the upper face for zero boundary conditions). `q = 0` gives 0.
pub fn integer_preimage(q: &Form<i64>) -> Result<Form<i64>> {
    let lat = q.lattice.clone();
    if q.k == 0 {
        return Err(Error::Degree { k: 0, n: lat.n() });
    }
    if q.k < lat.n() && !d(q)?.is_zero() {
        return Err(Error::Inconsistent("dq != 0".into()));
    }
    let zero = lat.boundary() == Boundary::Zero;
    if zero && q.values.iter().zip(lat.boundary_flags(q.k)).any(|(&v, &b)| b && v != 0) {
        return Err(Error::Inconsistent("q does not vanish on boundary cells".into()));
    }
    let all_axes = (1u32 << lat.n()) - 1;
    let out = preimage_rec(&lat, &q.values, q.k - 1, all_axes, &mut Vec::new(), zero)?;
    let result = Form::from_raw(&lat, q.k - 1, out);
    if d(&result)?.values != q.values {
        return Err(Error::Inconsistent("q has no integer preimage with the required boundary values".into()));
    }
    Ok(result)
}

fn in_subbox(mask: u32, base: &[i64], active: u32, pins: &[(usize, i64)]) -> bool {
    mask & !active == 0 && pins.iter().all(|&(a, v)| base[a] == v)
}

fn preimage_rec(
    lat: &Lattice,
    q: &[i64],
    k: usize,
    active: u32,
    pins: &mut Vec<(usize, i64)>,
    zero: bool,
) -> Result<Vec<i64>> {
    let n = lat.n();
    let mut h = vec![0i64; lat.count(k)];
    if active == 0 {
        return Ok(h);
    }
    let a = 31 - active.leading_zeros() as usize;
    let lo = lat.spec().lower()[a];
    let hi = lat.spec().upper()[a];
    let mut base = vec![0i64; n];
    for idx in 0..lat.count(k) {
        let mask = lat.decode(k, idx, &mut base);
        if mask & (1 << a) != 0 || base[a] != lo || !in_subbox(mask, &base, active, pins) {
            continue;
        }
        let wmask = mask | (1 << a);
        let c1 = face_coeff(wmask, a, 1) as i64;
        let mut cur = idx;
        let mut acc = 0i64;
        for t in lo..hi {
            base[a] = t;
            let w = lat.index_from(k + 1, wmask, &base).expect("column cell inside box");
            acc = acc.checked_add(c1 * q[w]).expect("integer overflow in preimage");
            base[a] = t + 1;
            let next = lat.index_from(k, mask, &base).expect("column cell inside box");
            h[next] = acc;
            cur = next;
        }
        let _ = cur;
    }
    let rest = active & !(1 << a);
    if !zero {
        pins.push((a, lo));
        let g = preimage_rec(lat, q, k, rest, pins, zero)?;
        pins.pop();
        for idx in 0..lat.count(k) {
            if g[idx] == 0 {
                continue;
            }
            let mask = lat.decode(k, idx, &mut base);
            for t in lo..=hi {
                base[a] = t;
                let j = lat.index_from(k, mask, &base).expect("inside box");
                h[j] += g[idx];
            }
        }
    } else {
        // h restricted to the upper face is closed there and must be exact relative to its boundary.
        let mut top = vec![0i64; lat.count(k)];
        let mut any = false;
        for idx in 0..lat.count(k) {
            if h[idx] == 0 {
                continue;
            }
            let mask = lat.decode(k, idx, &mut base);
            if mask & (1 << a) == 0 && base[a] == hi {
                top[idx] = h[idx];
                any = true;
            }
        }
        if any {
            if k == 0 {
                return Err(Error::Inconsistent("q has no preimage vanishing on the boundary".into()));
            }
            pins.push((a, hi));
            let g = preimage_rec(lat, &top, k - 1, rest, pins, zero)?;
            pins.pop();
            let dg = lat.d_matrix(k - 1).apply(&g);
            for (hv, dv) in h.iter_mut().zip(dg) {
                *hv -= dv;
            }
        }
    }
    for idx in 0..lat.count(k) {
        if h[idx] != 0 {
            let mask = lat.decode(k, idx, &mut base);
            if !in_subbox(mask, &base, active, pins) {
                h[idx] = 0;
            }
        }
    }
    Ok(h)
}
