//! `describe`: what an experiment measures, against which targets, and how long it should take.

use crate::config::{Experiment, RunConfig};
use villain_core::lattice::cube_cell_count;

struct Plan {
    summary: &'static str,
    checks: &'static [(&'static str, &'static str, &'static str)],
}

fn plan(e: Experiment) -> Plan {
    match e {
        Experiment::CalculusCheck => Plan {
            summary: "Exact identities of the coboundary d and its adjoint on random integer and real forms.",
            checks: &[
                ("dd, dstar_dstar", "0", "exact (integer arithmetic)"),
                ("adjoint_integer", "<df,g> + <f,d*g> = 0", "exact"),
                ("adjoint_real", "<df,g> + <f,d*g> = 0", "|defect| <= 1e-12"),
                ("ring_d_boundary, ring_dstar_boundary", "no values on boundary cells (zero mode)", "exact"),
                ("boundary_of_boundary", "0 for every cell", "exact"),
            ],
        },
        Experiment::Green => Plan {
            summary: "Line constant c_gff, its truncation stability, the loop-energy slope and the Green power law.",
            checks: &[
                ("c_gff/truncation_stable", "change under halving the truncation = 0", "|change| <= 1e-6"),
                ("loop_energy_slope_<mode>", "2 c_gff from square loops of the given sides at margin = side", "within 3% relative"),
                ("green_exponent_n3, _n4", "-(n - 2) from a log-log fit over r in 5..20", "+- 0.05"),
            ],
        },
        Experiment::Ranks => Plan {
            summary: "Ranks of d in every degree by exact elimination, for both boundary modes; ranks.csv is the dimension table.",
            checks: &[
                ("d<k>_closed_form", "closed-form dimensions (4-dimensional boxes)", "exact"),
                ("k<k>_dimension_count", "lower + upper + constants = active cells", "exact"),
            ],
        },
        Experiment::Villain => Plan {
            summary: "Villain gauge chains (p = 1) at each beta; samples stream to samples-b<i>.csv with checkpoints for `resume`.",
            checks: &[
                ("villain_beta<b>", "energy density E|dtheta + 2 pi m|^2 per active face", "reported with batch-means s.e."),
                ("mean_phi_zero, mean_m_zero", "0 by the symmetry theta -> -theta", "null test, 3 s.e."),
            ],
        },
        Experiment::Decouple => Plan {
            summary: "Spin-wave / Coulomb-gas decomposition of every thinned sample.",
            checks: &[
                ("pythagoras_beta<b>/relative_defect", "|dtheta + 2 pi m|^2 = |rho|^2 + (2 pi)^2 Coulomb energy", "max relative defect <= 1e-8"),
                ("energy_identity_beta<b>/identity", "spin-wave part = dim / beta", "two-sided, 3 s.e."),
                ("independence_beta<b>/corr_*", "0 correlation between spin-wave and charge panels", "null test, 3 s.e. each"),
            ],
        },
        Experiment::Wilson => Plan {
            summary: "Square Wilson loops averaged over all placements at the margin (default: the loop side).",
            checks: &[
                ("spin_wave", "exp(-loop_energy / (2 beta))", "3 s.e. and 10% relative"),
                ("mcbryan_spencer", "E W <= exp(-loop_energy / (2 beta))", "one-sided, 3 s.e."),
                ("ginibre_positive", "E W >= 0", "null test, one-sided"),
                ("imaginary_zero", "Im E W = 0", "null test, 3 s.e."),
                ("decay_gap (value)", "-2 beta log E W - loop_energy, expected >= 0", "reported only"),
            ],
        },
        Experiment::FreeEnergy => Plan {
            summary: "Derivative of the free energy per active face, compared with the finite-size spin-wave floor.",
            checks: &[
                ("below_finite_size_floor", "-dim / (8 (2j)^4 beta) from exact ranks", "one-sided, 3 s.e."),
                ("spin_wave_asymptotic, asymptotic_bound (values)", "-(3/4)/(2 beta) and the bound with delta", "reported only"),
                ("free_energy_monotone/increase_*", "increasing in beta", "one-sided, 3 s.e."),
            ],
        },
        Experiment::CoulombSample => Plan {
            summary: "Charges q = dm of the Villain chain (gauge gas in 4D); support histogram in charge_support_b<i>.csv.",
            checks: &[
                ("charges_beta<b>", "E sum q^2", "reported with batch-means s.e."),
                ("closed", "dq = 0", "exact"),
                ("centre_charge_zero", "E q(c) = 0 at a central cell", "null test, 3 s.e."),
            ],
        },
        Experiment::IvgTable => Plan {
            summary: "Mean, variance and third moment of the shifted integer Gaussian, with error_M and K_beta.",
            checks: &[
                ("variance_lower_bound", "Var >= exp(-beta (1 - 2a) / 2) / 16 for beta > 10", "zero violations"),
                ("error_m_lower_bound", "error_M >= 2 beta exp(-(2 pi)^2 beta / 2) for beta in [1/3, 2]", "zero violations"),
            ],
        },
    }
}

/// Seconds per sweep per cell for the gauge chain, measured on one core.
const SWEEP_COST: f64 = 1.0e-7;

/// Rough single-thread runtime in seconds.
pub fn runtime_estimate(cfg: &RunConfig) -> f64 {
    let cells = |n: usize, j: i64| (cube_cell_count(n, j, 1) + cube_cell_count(n, j, 2)) as f64;
    match cfg.experiment {
        Experiment::CalculusCheck => cfg.lattice.as_ref().map_or(0.0, |l| 1e-6 * (0..=l.n).map(|k| cube_cell_count(l.n, l.j, k) as f64).sum::<f64>()),
        Experiment::Green => cfg.green.as_ref().map_or(1.0, |g| g.sides.iter().map(|&s| 2e-6 * (s as f64).powi(3) * 10.0).sum()),
        Experiment::Ranks => cfg.lattice.as_ref().map_or(0.0, |l| 1e-9 * (cube_cell_count(l.n, l.j, 1) as f64).powi(2)),
        Experiment::IvgTable => 0.1,
        _ => {
            let (Some(l), Some(c)) = (&cfg.lattice, &cfg.chain) else { return 0.0 };
            let sweeps = c.samples as f64 * c.thinning as f64 + c.burn_in.unwrap_or(200) as f64;
            let per_sample = match cfg.experiment {
                // decomposition solves cost about as much as a few sweeps
                Experiment::Decouple => 2.0 * SWEEP_COST * cells(l.n, l.j) * (l.j as f64).max(2.0) / 2.0,
                Experiment::FreeEnergy | Experiment::Villain | Experiment::CoulombSample => 0.0,
                _ => 0.1 * SWEEP_COST * cells(l.n, l.j),
            };
            let repeats = if cfg.experiment == Experiment::Wilson { cfg.wilson.as_ref().map_or(1, |w| w.sizes.len()) } else { 1 };
            let per_beta = (sweeps * SWEEP_COST * cells(l.n, l.j) + c.samples as f64 * per_sample) * repeats as f64;
            per_beta * cfg.betas().len() as f64
        }
    }
}

pub fn describe(cfg: &RunConfig) -> String {
    let p = plan(cfg.experiment);
    let mut s = format!("experiment: {}\n{}\n\nmeasurements (name / target / tolerance):\n", cfg.experiment, p.summary);
    for (name, target, tol) in p.checks {
        s.push_str(&format!("  - {name}\n      target:    {target}\n      tolerance: {tol}\n"));
    }
    s.push_str("\nverdicts: comparisons whose target is below 5 s.e. are inconclusive rather than passing.\n");
    s.push_str("exit status: 0 all pass, 1 any failure, 2 inconclusive without failures.\n");
    if let Some(l) = &cfg.lattice {
        s.push_str(&format!("\nbox: [-{0}, {0}]^{1}, {2} boundary\n", l.j, l.n, l.boundary));
    }
    if let Some(c) = &cfg.chain {
        s.push_str(&format!("chain: beta {:?}, {} samples, thinning {}\n", c.beta.values(), c.samples, c.thinning));
    }
    let t = runtime_estimate(cfg);
    s.push_str(&format!("estimated runtime (one thread): {}\n", human(t)));
    s.push_str(&format!("estimated memory: {} MiB\n", cfg.memory_estimate() >> 20));
    s
}

fn human(t: f64) -> String {
    if t < 1.0 {
        "under a second".into()
    } else if t < 120.0 {
        format!("about {t:.0} s")
    } else if t < 7200.0 {
        format!("about {:.0} min", t / 60.0)
    } else {
        format!("about {:.1} h", t / 3600.0)
    }
}
