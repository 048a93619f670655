//! Green functions, Poisson solves and orthogonal projections.

mod direction;
mod infinite;
mod rank;
mod solve;

use std::sync::Arc;

pub use direction::{DirectionBasis, DirectionGraph, OneFormSpectral, PathBasis};
pub use infinite::{c_gff, c_gff_detail, c_gff_terms, green_infinite_vertex, scaled_bessel_i, CgffDetail};
pub use rank::{closed_form_ranks_4d, rank_mod_p, rank_rational, rank_table, RankTable};
pub use solve::{project, solve_poisson, Projection, SolveSettings};
pub(crate) use solve::solve_raw;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, CellKey, Lattice};

/// `<delta_e, (-Delta)^{-1} delta_e'>` for two edges: zero across directions, otherwise the
/// Green function of the direction graph (zero on its boundary vertices).
pub fn green_one_form(e: &CellKey, e2: &CellKey, lattice: &Arc<Lattice>, mode: Boundary) -> Result<f64> {
    if lattice.boundary() != mode {
        return Err(Error::Mismatch(format!("{mode} mode on a lattice with {} boundary", lattice.boundary())));
    }
    for c in [e, e2] {
        if c.degree() != 1 {
            return Err(Error::Degree { k: c.degree(), n: lattice.n() });
        }
        if lattice.index_of(c).is_none() {
            return Err(Error::OutsideBox(format!("{c:?}")));
        }
    }
    if e.dirs != e2.dirs {
        return Ok(0.0);
    }
    let dir = e.dirs.trailing_zeros() as usize;
    let basis = DirectionBasis::new(lattice, dir);
    let sign = (e.sign * e2.sign) as f64;
    Ok(basis.green(&e.base, &e2.base).map_or(0.0, |g| sign * g))
}
