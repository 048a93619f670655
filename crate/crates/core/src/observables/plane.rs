//! Exact `(-Delta)^{-1}` for 1-form sources supported on a single coordinate plane.
//!
//! A source in the plane `(i1, i2)` at fixed transverse coordinates only touches the
//! direction graphs of `i1` and `i2`. In each direction graph the eigenbasis is a tensor
//! product of path bases, so for points whose transverse offset from the plane is `delta`
//!
//! `u(x) = sum_{k in plane} phi_k(x) B(k) S_delta(mu_k)`,
//! `S_delta(mu) = sum_{k_T} phi_{k_T}(c + delta) phi_{k_T}(c) / (mu + lambda_{k_T})`,
//!
//! with `B` the in-plane transform of the source. No cell tables are built, so boxes far
//! beyond what fits in memory as forms are cheap.

use crate::error::{Error, Result};
use crate::harmonic::{DirectionBasis, PathBasis};
use crate::lattice::LatticeSpec;

struct Block {
    px: PathBasis,
    py: PathBasis,
    transverse: Vec<PathBasis>,
}

impl Block {
    fn nx(&self) -> usize {
        self.px.len
    }

    fn ny(&self) -> usize {
        self.py.len
    }

    fn mu(&self, kx: usize, ky: usize) -> f64 {
        self.px.eigenvalues[kx] + self.py.eigenvalues[ky]
    }
}

pub struct PlaneGreen {
    spec: LatticeSpec,
    plane: (usize, usize),
    transverse_axes: Vec<usize>,
    anchor: Vec<i64>,
    blocks: [Block; 2],
}

/// `(-Delta)^{-1}` of a plane source, sampled on parallel planes at the requested offsets.
pub struct PlaneSolution {
    /// `<u, b>` for the source `b`.
    pub energy: f64,
    offsets: Vec<Vec<i64>>,
    grids: Vec<[Vec<f64>; 2]>,
    frames: [(i64, usize, i64, usize); 2],
}

impl PlaneSolution {
    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    /// `u` on the `block`-th plane direction at in-plane coordinates `(x, y)`; zero off the graph.
    pub fn u(&self, offset: usize, block: usize, x: i64, y: i64) -> f64 {
        let (fx, nx, fy, ny) = self.frames[block];
        let (ix, iy) = (x - fx, y - fy);
        if ix < 0 || iy < 0 || ix as usize >= nx || iy as usize >= ny {
            return 0.0;
        }
        self.grids[offset][block][ix as usize * ny + iy as usize]
    }
}

impl PlaneGreen {
    /// `anchor` fixes the transverse coordinates; its in-plane entries are ignored.
    pub fn new(spec: &LatticeSpec, plane: (usize, usize), anchor: &[i64]) -> Result<PlaneGreen> {
        let n = spec.n();
        if plane.0 >= plane.1 || plane.1 >= n || anchor.len() != n {
            return Err(Error::Inconsistent(format!("plane {plane:?} with anchor of length {} in dimension {n}", anchor.len())));
        }
        let transverse_axes: Vec<usize> = (0..n).filter(|&a| a != plane.0 && a != plane.1).collect();
        let block = |dir: usize| {
            let b = DirectionBasis::from_spec(spec, dir);
            Block {
                px: b.axes[plane.0].clone(),
                py: b.axes[plane.1].clone(),
                transverse: transverse_axes.iter().map(|&a| b.axes[a].clone()).collect(),
            }
        };
        let blocks = [block(plane.0), block(plane.1)];
        Ok(PlaneGreen { spec: spec.clone(), plane, transverse_axes, anchor: anchor.to_vec(), blocks })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn plane(&self) -> (usize, usize) {
        self.plane
    }

    pub fn anchor(&self) -> &[i64] {
        &self.anchor
    }

    pub fn transverse_axes(&self) -> &[usize] {
        &self.transverse_axes
    }

    /// In-plane node frame of a block: (first x, nx, first y, ny).
    pub fn frame(&self, block: usize) -> (i64, usize, i64, usize) {
        let b = &self.blocks[block];
        (b.px.first, b.nx(), b.py.first, b.ny())
    }

    /// Empty source grids: `grid[ix * ny + iy]` for each plane direction.
    pub fn zero_source(&self) -> [Vec<f64>; 2] {
        [vec![0.0; self.blocks[0].nx() * self.blocks[0].ny()], vec![0.0; self.blocks[1].nx() * self.blocks[1].ny()]]
    }

    /// Adds `value` on the edge of plane direction `block` based at in-plane `(x, y)`.
    /// Edges outside the direction graph carry no free value and are rejected.
    pub fn add_source(&self, src: &mut [Vec<f64>; 2], block: usize, x: i64, y: i64, value: f64) -> Result<()> {
        let b = &self.blocks[block];
        match (b.px.node(x), b.py.node(y)) {
            (Some(ix), Some(iy)) if self.anchor_is_interior(block) => {
                src[block][ix * b.ny() + iy] += value;
                Ok(())
            }
            _ => Err(Error::OutsideBox(format!("plane edge ({x}, {y}) in direction {block} is not free"))),
        }
    }

    fn anchor_is_interior(&self, block: usize) -> bool {
        self.blocks[block].transverse.iter().zip(&self.transverse_axes).all(|(p, &a)| p.node(self.anchor[a]).is_some())
    }

    /// Transverse spectral table: eigenvalue sums and, per offset, the weight
    /// `prod_t phi(c_t + delta_t) phi(c_t)`. Entries that vanish for every offset are dropped.
    fn transverse_table(&self, block: usize, offsets: &[Vec<i64>]) -> (Vec<f64>, Vec<f64>) {
        let b = &self.blocks[block];
        let nt = b.transverse.len();
        let noff = offsets.len();
        let total: usize = b.transverse.iter().map(|p| p.len).product();
        let mut lam = Vec::new();
        let mut w = Vec::new();
        if total == 0 {
            return (lam, w);
        }
        let mut k = vec![0usize; nt];
        let mut row = vec![0.0; noff];
        let mut scale = 0.0f64;
        for _ in 0..total {
            let l: f64 = (0..nt).map(|t| b.transverse[t].eigenvalues[k[t]]).sum();
            for (j, off) in offsets.iter().enumerate() {
                let mut prod = 1.0;
                for t in 0..nt {
                    let p = &b.transverse[t];
                    let c = self.anchor[self.transverse_axes[t]];
                    prod *= match (p.node(c), p.node(c + off[t])) {
                        (Some(a), Some(bn)) => p.value(k[t], a) * p.value(k[t], bn),
                        _ => 0.0,
                    };
                }
                row[j] = prod;
            }
            let m = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            scale = scale.max(m);
            if m > 1e-15 * scale {
                lam.push(l);
                w.extend_from_slice(&row);
            }
            for t in (0..nt).rev() {
                k[t] += 1;
                if k[t] < b.transverse[t].len {
                    break;
                }
                k[t] = 0;
            }
        }
        (lam, w)
    }

    fn forward(b: &Block, src: &[f64]) -> Vec<f64> {
        let (nx, ny) = (b.nx(), b.ny());
        let mut t = vec![0.0; nx * ny];
        for kx in 0..nx {
            let row = &b.px.vectors[kx * nx..(kx + 1) * nx];
            for (x, &phi) in row.iter().enumerate() {
                if phi == 0.0 {
                    continue;
                }
                let s = &src[x * ny..(x + 1) * ny];
                let out = &mut t[kx * ny..(kx + 1) * ny];
                for y in 0..ny {
                    out[y] += phi * s[y];
                }
            }
        }
        let mut hat = vec![0.0; nx * ny];
        for kx in 0..nx {
            let tr = &t[kx * ny..(kx + 1) * ny];
            for ky in 0..ny {
                let phi = &b.py.vectors[ky * ny..(ky + 1) * ny];
                hat[kx * ny + ky] = phi.iter().zip(tr).map(|(a, c)| a * c).sum();
            }
        }
        hat
    }

    fn inverse(b: &Block, hat: &[f64]) -> Vec<f64> {
        let (nx, ny) = (b.nx(), b.ny());
        // t[kx, y] = sum_ky phi_ky(y) hat[kx, ky]
        let mut t = vec![0.0; nx * ny];
        for kx in 0..nx {
            for ky in 0..ny {
                let h = hat[kx * ny + ky];
                if h == 0.0 {
                    continue;
                }
                let phi = &b.py.vectors[ky * ny..(ky + 1) * ny];
                let out = &mut t[kx * ny..(kx + 1) * ny];
                for y in 0..ny {
                    out[y] += h * phi[y];
                }
            }
        }
        let mut u = vec![0.0; nx * ny];
        for kx in 0..nx {
            let row = &b.px.vectors[kx * nx..(kx + 1) * nx];
            let tr = &t[kx * ny..(kx + 1) * ny];
            for (x, &phi) in row.iter().enumerate() {
                let out = &mut u[x * ny..(x + 1) * ny];
                for y in 0..ny {
                    out[y] += phi * tr[y];
                }
            }
        }
        u
    }

    /// Solves for the plane source `src`; `u` is returned on each requested transverse
    /// offset (one entry per transverse axis, in increasing axis order).
    pub fn solve(&self, src: &[Vec<f64>; 2], offsets: &[Vec<i64>]) -> Result<PlaneSolution> {
        let nt = self.transverse_axes.len();
        if offsets.iter().any(|o| o.len() != nt) {
            return Err(Error::Inconsistent(format!("offsets must have {nt} entries")));
        }
        // offset 0 first, for the energy
        let mut all = vec![vec![0i64; nt]];
        all.extend(offsets.iter().cloned());
        let noff = all.len();
        let mut energy = 0.0;
        let mut grids: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; offsets.len()];
        for (bi, b) in self.blocks.iter().enumerate() {
            let (nx, ny) = (b.nx(), b.ny());
            if src[bi].len() != nx * ny {
                return Err(Error::Mismatch("source grid has the wrong size".into()));
            }
            let hat = Self::forward(b, &src[bi]);
            let (lam, w) = if nt == 0 { (vec![0.0], vec![1.0; noff]) } else { self.transverse_table(bi, &all) };
            let mut s = vec![0.0; noff];
            let mut scaled: Vec<Vec<f64>> = vec![vec![0.0; nx * ny]; offsets.len()];
            for kx in 0..nx {
                for ky in 0..ny {
                    let h = hat[kx * ny + ky];
                    if h == 0.0 {
                        continue;
                    }
                    let mu = b.mu(kx, ky);
                    s.iter_mut().for_each(|v| *v = 0.0);
                    for (e, &l) in lam.iter().enumerate() {
                        let inv = 1.0 / (mu + l);
                        let we = &w[e * noff..(e + 1) * noff];
                        for j in 0..noff {
                            s[j] += we[j] * inv;
                        }
                    }
                    energy += h * h * s[0];
                    for j in 1..noff {
                        scaled[j - 1][kx * ny + ky] = h * s[j];
                    }
                }
            }
            for (j, sc) in scaled.iter().enumerate() {
                grids[j][bi] = Self::inverse(b, sc);
            }
        }
        let frames = [self.frame(0), self.frame(1)];
        Ok(PlaneSolution { energy, offsets: offsets.to_vec(), grids, frames })
    }
}
