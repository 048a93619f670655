//! Measurements on Villain configurations: Wilson loops, loop energies and their spread,
//! characteristic functions of `m`, integer-Gaussian variance estimators, the energy
//! identity and free-energy derivatives, each reported with batch-means errors.

mod energy;
mod estimators;
mod loops;
mod plane;
mod report;

pub use energy::{loop_energy, loop_energy_full, spread_profile, FullSolver, SpreadProfile, SpreadSettings};
pub use estimators::*;
pub use loops::{wilson, RectLoop};
pub use plane::{PlaneGreen, PlaneSolution};
pub use report::{Comparison, MeasureReport, Tolerance, Verdict, SIGNAL_TO_NOISE};
