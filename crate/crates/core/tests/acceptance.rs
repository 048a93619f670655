//! Acceptance suite: thirteen criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines appear in the test log; exits non-zero when any criterion fails.

mod common;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::coulomb::{dense_inverse, CoulombOracle};
use common::plaquette::{single_plaquette, two_plaquette};
use villain_core::decouple::{coulomb_sample, independence_report, pythagoras_defect, CoulombGas, Decomposer, IndependencePanel, Panel};
use villain_core::harmonic::{
    c_gff, c_gff_detail, closed_form_ranks_4d, green_infinite_vertex, green_one_form, project, rank_table, solve_poisson, DirectionGraph,
    Projection, SolveSettings,
};
use villain_core::ivgauss::{error_m, ivg_var, IvgParams};
use villain_core::lattice::{cube_cell_count, Incidence};
use villain_core::observables::*;
use villain_core::rng::CounterRng;
use villain_core::sampler::{wrap_angle, Chain, ChainConfig};
use villain_core::stats::batch_means;
use villain_core::{boundary_of, d, d_star, inner, Boundary, CellKey, Form, Lattice, LatticeSpec};

const TWO_PI: f64 = 2.0 * PI;

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Outcome {
        Outcome { pass: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn info(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }

    fn runtime(&mut self, start: Instant, limit_s: f64) {
        let t = start.elapsed().as_secs_f64();
        self.check(t < limit_s, format!("runtime {t:.1} s (limit {limit_s} s)"));
    }
}

fn modes() -> [Boundary; 2] {
    [Boundary::Free, Boundary::Zero]
}

fn random_int(lat: &Arc<Lattice>, k: usize, rng: &mut StdRng) -> Form<i64> {
    Form::from_fn(lat, k, |i| if lat.is_active(k, i) { rng.random_range(-5..=5) } else { 0 }).unwrap()
}

fn c1_calculus() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(11);
    let mut checks = 0usize;
    let mut bad = Vec::new();
    for n in 2..=4 {
        for j in 1..=2 {
            for mode in modes() {
                let lat = Lattice::from_cube(n, j, mode).unwrap();
                for k in 0..=n {
                    let f = random_int(&lat, k, &mut rng);
                    if k + 2 <= n {
                        checks += 1;
                        if !d(&d(&f).unwrap()).unwrap().is_zero() {
                            bad.push(format!("dd n={n} j={j} {mode:?} k={k}"));
                        }
                    }
                    if k >= 2 {
                        checks += 1;
                        if !d_star(&d_star(&f, mode).unwrap(), mode).unwrap().is_zero() {
                            bad.push(format!("d*d* n={n} j={j} {mode:?} k={k}"));
                        }
                    }
                    if k < n {
                        let g = random_int(&lat, k + 1, &mut rng);
                        checks += 1;
                        // integer values: the identity is exact in floating point
                        let lhs = inner(&d(&f).unwrap(), &g).unwrap();
                        let rhs = inner(&f, &d_star(&g, mode).unwrap()).unwrap();
                        if lhs + rhs != 0.0 {
                            bad.push(format!("adjoint n={n} j={j} {mode:?} k={k}: {lhs} vs {rhs}"));
                        }
                        // real-valued version to 1e-12
                        let fr = Form::from_fn(&lat, k, |i| if lat.is_active(k, i) { rng.random::<f64>() - 0.5 } else { 0.0 }).unwrap();
                        let gr = Form::from_fn(&lat, k + 1, |_| rng.random::<f64>() - 0.5).unwrap();
                        let (a, b) = (inner(&d(&fr).unwrap(), &gr).unwrap(), inner(&fr, &d_star(&gr, mode).unwrap()).unwrap());
                        checks += 1;
                        if (a + b).abs() > 1e-12 {
                            bad.push(format!("real adjoint n={n} j={j} {mode:?} k={k}: {:e}", a + b));
                        }
                        if mode == Boundary::Zero {
                            // ring variants: d keeps boundary values zero, d* output vanishes there
                            let df = d(&f).unwrap();
                            let dsg = d_star(&g, mode).unwrap();
                            checks += 2;
                            if df.values().iter().enumerate().any(|(i, v)| !lat.is_active(k + 1, i) && *v != 0) {
                                bad.push(format!("ring d n={n} j={j} k={k}"));
                            }
                            if dsg.values().iter().enumerate().any(|(i, v)| !lat.is_active(k, i) && *v != 0) {
                                bad.push(format!("ring d* n={n} j={j} k={k}"));
                            }
                        }
                    }
                }
                // boundary of a boundary cancels for every cell
                for k in 2..=n {
                    for cell in lat.enumerate_cells(k).unwrap() {
                        let mut acc: HashMap<CellKey, i64> = HashMap::new();
                        for Incidence { cell: face, coeff } in boundary_of(&cell).unwrap() {
                            for inc in boundary_of(&face).unwrap() {
                                *acc.entry(inc.cell).or_insert(0) += (coeff * inc.coeff) as i64;
                            }
                        }
                        checks += 1;
                        if acc.values().any(|&v| v != 0) {
                            bad.push(format!("boundary of boundary {cell:?}"));
                        }
                    }
                }
            }
        }
    }
    o.check(bad.is_empty(), format!("{checks} identities over n in 2..4, j in 1..2, both modes; violations: {bad:?}"));
    o.runtime(start, 10.0);
    o
}

fn c2_ranks() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    for j in [1i64, 2] {
        for mode in modes() {
            let spec = LatticeSpec::new(4, j, mode).unwrap();
            let t = rank_table(&spec).unwrap();
            let closed = closed_form_ranks_4d(j, mode);
            o.check(t.ranks == closed, format!("{mode:?} j={j}: ranks {:?}, closed forms {closed:?}, exact rational {}", t.ranks, t.exact_rational));
            // constants: kernel of d on 0-forms (Free) and of d* on top forms (Zero)
            let constants = |k: usize| usize::from((mode == Boundary::Free && k == 0) || (mode == Boundary::Zero && k == 4));
            let sums: Vec<usize> = (0..=4).map(|k| t.lower_dim(k) + t.upper_dim(k) + constants(k)).collect();
            o.check(
                sums == t.active,
                format!("{mode:?} j={j}: lower + upper + constants {sums:?} = active cells {:?} (all cells {:?})", t.active, (0..=4).map(|k| cube_cell_count(4, j, k)).collect::<Vec<_>>()),
            );
        }
    }
    let free1 = closed_form_ranks_4d(1, Boundary::Free);
    let zero1 = closed_form_ranks_4d(1, Boundary::Zero);
    o.check(free1[0] == 80 && free1[1] == 136 && zero1[0] == 1 && zero1[1] == 7, format!("j=1 spot values: Free {free1:?}, Zero {zero1:?}"));
    o.runtime(start, 60.0);
    o
}

fn c3_green() -> Outcome {
    let mut o = Outcome::new();
    // cross-direction entries from the full 1-form solve
    let settings = SolveSettings { tol: 1e-13, ..SolveSettings::default() };
    for mode in modes() {
        let lat = Lattice::from_cube(4, 2, mode).unwrap();
        let e = CellKey::edge(vec![0, 0, 0, 0], 2);
        let u = solve_poisson(1, &Form::indicator(&lat, &e).unwrap(), mode, &settings).unwrap().scale(-1.0);
        let (mut cross, mut same) = (0.0f64, 0.0f64);
        for (i, v) in u.values().iter().enumerate() {
            if !lat.is_active(1, i) {
                continue;
            }
            let c = lat.cell(1, i);
            if c.dirs == e.dirs {
                same = same.max((green_one_form(&e, &c, &lat, mode).unwrap() - v).abs());
            } else {
                cross = cross.max(v.abs());
            }
        }
        o.check(cross < 1e-10, format!("{mode:?} Λ2: max cross-direction entry {cross:.1e}"));
        o.check(same < 1e-10, format!("{mode:?} Λ2: same-direction vs full solve {same:.1e}"));
        // same-direction entries against dense inversion of the direction graph
        let g = DirectionGraph::new(&lat, 1).unwrap();
        let interior: Vec<usize> = (0..g.vertex_count()).filter(|&i| !g.is_boundary_vertex(&g.vertex_base(i))).collect();
        let m = interior.len();
        let mut a = vec![vec![0.0; m]; m];
        for (c, &v) in interior.iter().enumerate() {
            let mut x = vec![0.0; g.vertex_count()];
            x[v] = 1.0;
            let lx = g.laplacian_apply(&x);
            for (r, &w) in interior.iter().enumerate() {
                a[r][c] = -lx[w];
            }
        }
        let inv = dense_inverse(&a);
        let mut worst = 0.0f64;
        for r in (0..m).step_by(7) {
            for c in (0..m).step_by(5) {
                let (x, y) = (g.vertex_base(interior[r]), g.vertex_base(interior[c]));
                if let (Some(e1), Some(e2)) = (g.edge_of(&x), g.edge_of(&y)) {
                    worst = worst.max((green_one_form(&e1, &e2, &lat, mode).unwrap() - inv[r][c]).abs());
                }
            }
        }
        o.check(worst < 1e-10, format!("{mode:?} Λ2: same-direction vs dense direction-graph inverse {worst:.1e}"));
    }
    for n in [3usize, 4] {
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for r in 5..=20i64 {
            let mut x = vec![0i64; n];
            x[0] = r;
            lx.push((r as f64).ln());
            ly.push(green_infinite_vertex(&x, n).unwrap().ln());
        }
        let slope = fit(&lx, &ly).0;
        o.check((slope + (n as f64 - 2.0)).abs() <= 0.05, format!("n={n}: fitted exponent {slope:.4}, expected {}", -(n as f64 - 2.0)));
    }
    o
}

/// Least-squares slope and correlation.
fn fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (sxy / sxx, sxy / (sxx * syy).sqrt())
}

fn c4_cgff() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let det = c_gff_detail();
    o.check(det.refinement_delta.abs() < 1e-6, format!("c_gff = {:.9}, change under truncation halving {:.1e}", det.value, det.refinement_delta));
    for mode in modes() {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for l in [16usize, 24, 32] {
            let lp = RectLoop::centred(4, (0, 1), l, l).unwrap();
            let spec = LatticeSpec::new(4, (l + l.div_ceil(2)) as i64, mode).unwrap();
            xs.push((2 * l) as f64);
            ys.push(loop_energy(&lp, &spec, l as i64).unwrap());
        }
        let slope = fit(&xs, &ys).0;
        let rel = slope / (2.0 * c_gff()) - 1.0;
        o.check(rel.abs() < 0.03, format!("{mode:?}: energies {ys:.3?}, slope {slope:.5} vs 2 c_gff {:.5} ({:+.2}%)", 2.0 * c_gff(), 100.0 * rel));
    }
    o.runtime(start, 600.0);
    o
}

fn c5_ivgauss() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for ib in 1001..=4000 {
        let beta = ib as f64 * 0.01;
        for ia in 0..=50 {
            let a = ia as f64 * 0.01;
            let lhs = ivg_var(IvgParams::new(a, beta));
            let rhs = (-beta * (1.0 - 2.0 * a) / 2.0).exp() / 16.0;
            count += 1;
            worst = worst.min(lhs / rhs);
            if lhs < rhs {
                violations += 1;
            }
        }
    }
    o.check(violations == 0, format!("Var lower bound: {count} grid points, {violations} violations, min ratio {worst:.4}"));
    let (mut v2, mut w2) = (0, f64::INFINITY);
    for ib in 0..=167 {
        let beta = 1.0 / 3.0 + ib as f64 * 0.01;
        if beta > 2.0 + 1e-12 {
            break;
        }
        let m = error_m(beta);
        let rhs = 2.0 * beta * (-(TWO_PI * TWO_PI) * beta / 2.0).exp();
        w2 = w2.min(m / rhs);
        if m < rhs {
            v2 += 1;
        }
    }
    o.check(v2 == 0, format!("error_M lower bound on [1/3, 2]: {v2} violations, min ratio {w2:.4}"));
    o.runtime(start, 60.0);
    o
}

fn moment_check(o: &mut Outcome, label: &str, xs: &[f64], target: f64) {
    let e = batch_means(xs);
    let z = e.z(target);
    o.check(z.abs() <= 3.0, format!("{label}: mc {:.6} ± {:.1e}, oracle {target:.6}, z {z:+.2}", e.mean, e.se));
}

fn plaquette_series(upper: Vec<i64>, beta: f64, seed: u64, sweeps: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let lat = Lattice::new(LatticeSpec::cuboid(vec![0, 0], upper, Boundary::Free).unwrap());
    let faces = lat.count(2);
    let mut chain = Chain::new(&lat, 1, ChainConfig::new(beta, seed)).unwrap();
    chain.burn_in();
    let (mut phi, mut m) = (vec![Vec::with_capacity(sweeps); faces], vec![Vec::with_capacity(sweeps); faces]);
    chain.sample(sweeps, |s| {
        for (f, dt) in s.d_theta().into_iter().enumerate() {
            phi[f].push(wrap_angle(dt));
            m[f].push(s.m.values()[f] as f64);
        }
    });
    (phi, m)
}

fn c6_sampler() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let sweeps = 1_000_000;
    let pow = |xs: &[f64], p: i32| xs.iter().map(|x| x.powi(p)).collect::<Vec<_>>();
    for (i, beta) in [0.5, 1.0, 4.0].into_iter().enumerate() {
        let q = single_plaquette(beta);
        let (phi, m) = plaquette_series(vec![1, 1], beta, 500 + i as u64, sweeps);
        let p = &phi[0];
        let var_series: Vec<f64> = {
            let mean = batch_means(p).mean;
            p.iter().map(|x| (x - mean).powi(2)).collect()
        };
        moment_check(&mut o, &format!("one face β={beta} mean φ"), p, q.phi[0]);
        moment_check(&mut o, &format!("one face β={beta} var φ"), &var_series, q.phi[1] - q.phi[0].powi(2));
        moment_check(&mut o, &format!("one face β={beta} E φ^4"), &pow(p, 4), q.phi[2]);
        moment_check(&mut o, &format!("one face β={beta} mean m"), &m[0], q.m[0]);
        let t = two_plaquette(beta, -1.0);
        let (phi, m) = plaquette_series(vec![2, 1], beta, 600 + i as u64, sweeps);
        for f in 0..2 {
            let p = &phi[f];
            moment_check(&mut o, &format!("two faces β={beta} face {f} mean φ"), p, t.face.phi[0]);
            moment_check(&mut o, &format!("two faces β={beta} face {f} E φ^2"), &pow(p, 2), t.face.phi[1]);
            moment_check(&mut o, &format!("two faces β={beta} face {f} E φ^4"), &pow(p, 4), t.face.phi[2]);
            moment_check(&mut o, &format!("two faces β={beta} face {f} mean m"), &m[f], t.face.m[0]);
        }
    }
    o.runtime(start, 300.0);
    o
}

fn c7_decoupling() -> Outcome {
    let mut o = Outcome::new();
    let lat = Lattice::from_cube(4, 2, Boundary::Zero).unwrap();
    let dec = Decomposer::new(&lat, 1, &SolveSettings::default()).unwrap();
    // per-sample Pythagoras split and the independence panel at beta = 1
    let mut cfg = ChainConfig::new(1.0, 71);
    cfg.thinning = 2;
    let mut chain = Chain::new(&lat, 1, cfg).unwrap();
    chain.burn_in();
    let panel = IndependencePanel::new(&lat, 1);
    let (mut rho, mut q) = (Panel::new(panel.rho_names()), Panel::new(panel.q_names()));
    let mut worst = 0.0f64;
    let mut failure = None;
    chain.sample(100_000, |s| {
        let run = || -> villain_core::Result<(Vec<f64>, Vec<f64>, f64)> {
            let pair = dec.decompose(s)?;
            let ce = dec.coulomb_energy(&pair.q)?;
            let defect = pythagoras_defect(s, &pair, ce)?;
            let (r, qv) = panel.measure(&pair, ce);
            Ok((r, qv, defect))
        };
        match run() {
            Ok((r, qv, defect)) => {
                worst = worst.max(defect);
                rho.push(&r);
                q.push(&qv);
            }
            Err(e) => {
                failure.get_or_insert(e.to_string());
            }
        }
    });
    o.check(failure.is_none(), format!("decomposition errors: {failure:?}"));
    o.check(worst < 1e-8, format!("Pythagoras split: max relative defect {worst:.1e} over 1e5 samples"));
    let rep = independence_report(&rho, &q, panel.linear_rho());
    let outside: Vec<String> = rep
        .correlations
        .iter()
        .filter(|c| !c.within_3se)
        .map(|c| format!("{}~{} {:.4}±{:.4}", c.rho, c.q, c.estimate.mean, c.estimate.se))
        .collect();
    let zmax = rep
        .correlations
        .iter()
        .filter(|c| c.estimate.mean.is_finite() && c.estimate.se > 0.0)
        .map(|c| (c.estimate.mean / c.estimate.se).abs())
        .fold(0.0, f64::max);
    o.check(outside.is_empty(), format!("independence: {} correlations, max |z| {zmax:.2}, outside 3 s.e.: {outside:?}", rep.correlations.len()));
    for n in &rep.normality {
        o.info(format!("normality {}: skew {:+.4}, excess kurtosis {:+.4}, p {:.3}", n.name, n.skewness, n.excess_kurtosis, n.p_value));
    }
    for (i, beta) in [1.0, 4.0].into_iter().enumerate() {
        let mut chain = Chain::new(&lat, 1, ChainConfig::new(beta, 80 + i as u64)).unwrap();
        let r = energy_identity(&mut chain, &dec, 50_000).unwrap();
        let c = r.comparison("identity").unwrap();
        o.check(
            c.verdict == Verdict::Pass,
            format!(
                "β={beta}: E|dθ+2πm|² = {:.3} ± {:.3}; spin-wave part {:.3} ± {:.3} vs dim/β = {:.3} (z {:+.2}); Coulomb term {:.2e}",
                r.estimate.mean,
                r.estimate.se,
                c.estimate,
                c.se,
                c.target,
                c.z,
                r.get_value("coulomb_term").unwrap()
            ),
        );
    }
    o
}

fn c8_coulomb() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let lat = Lattice::from_cube(4, 1, Boundary::Zero).unwrap();
    let beta = 0.5;
    let oracle = CoulombOracle::build(&lat, TWO_PI * TWO_PI * beta / 2.0, 2.5);
    o.check(oracle.truncation_bound() < 1e-4, format!("oracle: {} charge states, truncation mass bound {:.2e}", oracle.probs.len(), oracle.truncation_bound()));
    let mut counts: HashMap<Vec<i8>, u64> = HashMap::new();
    coulomb_sample(&lat, CoulombGas::default_for(4), &ChainConfig::new(beta, 808), 1_000_000, |q| {
        *counts.entry(oracle.key(q.values())).or_insert(0) += 1;
    })
    .unwrap();
    let tv = oracle.tv_distance(&counts);
    o.check(tv < 0.02, format!("total variation {tv:.4} over 1e6 samples ({} distinct states seen)", counts.len()));
    o.runtime(start, 900.0);
    o
}

fn c9_gsw() -> Outcome {
    let mut o = Outcome::new();
    let beta = 1.0;
    let settings = SolveSettings { tol: 1e-12, ..SolveSettings::default() };
    let lat = Lattice::from_cube(4, 2, Boundary::Zero).unwrap();
    let dec = Decomposer::new(&lat, 1, &settings).unwrap();
    let face = |b: Vec<i64>, dirs: &[usize]| Form::<f64>::indicator(&lat, &CellKey::new(b, dirs)).unwrap();
    let rect = RectLoop::new((0, 1), vec![-1, -1, 0, 0], 2, 2).unwrap().indicator(&lat).unwrap();
    let exact = d(&Form::indicator(&lat, &CellKey::edge(vec![0, 0, 0, 0], 3)).unwrap()).unwrap();
    let coexact = d_star(&face(vec![0, 0, 0, 0], &[0, 1, 2]), Boundary::Zero).unwrap();
    let mut rng = StdRng::seed_from_u64(99);
    let smooth = Form::from_fn(&lat, 2, |i| if lat.is_active(2, i) { rng.random::<f64>() - 0.5 } else { 0.0 }).unwrap();
    let panel = [("bulk face", face(vec![0, 0, 0, 0], &[1, 2])), ("2x2 rectangle", rect), ("d of an edge", exact), ("d* of a cube", coexact), ("random", smooth)];
    let targets: Vec<f64> =
        panel.iter().map(|(_, f)| project(2, Projection::Lower, f, Boundary::Zero, &settings).unwrap().norm_sq() / beta).collect();
    let draws = 100_000;
    let mut sq = vec![Vec::with_capacity(draws); panel.len()];
    let mut stream = CounterRng::from_parts(9, 0, 0, 0, 0);
    for _ in 0..draws {
        let rho = dec.gsw_sample(beta, &mut stream).unwrap();
        for (s, (_, f)) in sq.iter_mut().zip(&panel) {
            s.push(inner(&rho, f).unwrap().powi(2));
        }
    }
    for (((name, f), s), t) in panel.iter().zip(&sq).zip(&targets) {
        let e = batch_means(s);
        // a form orthogonal to the exact subspace has Var = 0 identically: only solver roundoff remains
        let roundoff = 1e-20 * f.norm_sq();
        let (t, tol) = if *t <= roundoff { (0.0, Tolerance::Exact { eps: roundoff }) } else { (*t, Tolerance::TwoSided { z: 3.0 }) };
        let c = Comparison::evaluate(name, &e, t, tol, false);
        o.check(c.verdict == Verdict::Pass, format!("Var<ρ,f> for {name}: {:.5} ± {:.1e}, (1/β)|Pf|² = {t:.5}, z {:+.2}", e.mean, e.se, c.z));
    }
    // bulk face variance on a larger box against the self-dual value
    let big = Lattice::from_cube(4, 6, Boundary::Zero).unwrap();
    let bdec = Decomposer::new(&big, 1, &settings).unwrap();
    let f = big.index_of(&CellKey::new(vec![0, 0, 0, 0], &[0, 1])).unwrap();
    let draws = 8000;
    let mut xs = Vec::with_capacity(draws);
    let mut stream = CounterRng::from_parts(10, 0, 0, 0, 0);
    for _ in 0..draws {
        xs.push(bdec.gsw_sample(beta, &mut stream).unwrap().values()[f].powi(2));
    }
    let e = batch_means(&xs);
    let target = 1.0 / (2.0 * beta);
    let tol = 0.02 * target + 3.0 * e.se;
    o.check((e.mean - target).abs() <= tol, format!("Λ6 bulk face: Var ρ(f) = {:.4} ± {:.4} vs 1/(2β) = {target} (tolerance {tol:.4})", e.mean, e.se));
    o
}

fn c10_wilson() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let beta = 4.0;
    let lat = Lattice::from_cube(4, 8, Boundary::Zero).unwrap();
    let mut chain = Chain::new(&lat, 1, ChainConfig::new(beta, 1004)).unwrap();
    for (l, key, samples) in [(3usize, "spin_wave", 1000usize), (5, "mcbryan_spencer", 1000)] {
        let pos = loop_positions(lat.spec(), l, l, l as i64);
        let r = wilson_experiment(&mut chain, &pos, samples, None).unwrap();
        let c = r.comparison(key).unwrap();
        o.check(
            c.verdict == Verdict::Pass,
            format!(
                "{l}x{l} loop, {} placements: E W = {:.5} ± {:.1e}, exp(-E/2β) = {:.5} ({key}: z {:+.2}, {:+.2}%)",
                pos.len(),
                r.estimate.mean,
                r.estimate.se,
                c.target,
                c.z,
                100.0 * (r.estimate.mean / c.target - 1.0)
            ),
        );
        let im = r.comparison("imaginary_zero").unwrap();
        o.info(format!(
            "{l}x{l}: imaginary part {:.1e} ({}), positivity {}, decay gap {:+.2e}",
            im.estimate,
            im.verdict.as_str(),
            r.comparison("ginibre_positive").unwrap().verdict.as_str(),
            r.get_value("decay_gap").unwrap_or(f64::NAN)
        ));
    }
    o.runtime(start, 7200.0);
    o
}

fn c11_fourier() -> Outcome {
    let mut o = Outcome::new();
    let lat = Lattice::from_cube(4, 3, Boundary::Zero).unwrap();
    let mut h = Form::zeros(&lat, 2).unwrap();
    // ten bulk faces in different planes and positions
    let faces = [
        (vec![0, 0, 0, 0], [0, 1]),
        (vec![0, 0, 0, 0], [2, 3]),
        (vec![-1, 0, 0, 0], [0, 2]),
        (vec![0, -1, 0, 0], [1, 3]),
        (vec![0, 0, 1, 0], [0, 3]),
        (vec![1, 0, 0, -1], [1, 2]),
        (vec![-1, -1, 0, 0], [0, 1]),
        (vec![0, 1, -1, 0], [2, 3]),
        (vec![1, 1, 0, 0], [0, 2]),
        (vec![0, 0, -1, 1], [1, 3]),
    ];
    for (b, dirs) in faces {
        h.set(&CellKey::new(b, &dirs), 0.3).unwrap();
    }
    let mut chain = Chain::new(&lat, 1, ChainConfig::new(1.0, 1111)).unwrap();
    let r = fourier_m(&mut chain, &h, 20_000, None).unwrap();
    let c = r.comparison("modulus_below_bound").unwrap();
    o.check(
        c.verdict == Verdict::Pass,
        format!("β=1, 10 faces at 0.3: |E e^(i<m,h>)| = {:.6} ± {:.1e}, bound {:.9} (z {:+.2})", c.estimate, c.se, c.target, c.z),
    );
    o.info(format!(
        "b = {:.3}, K = {:.3}, inf Var = {:.2e}, underpowered = {}",
        r.get_value("b").unwrap(),
        r.get_value("k_beta").unwrap(),
        r.get_value("inf_var").unwrap(),
        r.underpowered
    ));
    o
}

fn c12_trapping() -> Outcome {
    let mut o = Outcome::new();
    let l = 128usize;
    for mode in modes() {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for h in [4usize, 8, 16, 32] {
            let m = l.max(h) as i64;
            let lp = RectLoop::new((0, 1), vec![0, 0, 0], l, h).unwrap();
            let spec = LatticeSpec::cuboid(vec![-m, -m, -m], vec![l as i64 + m, h as i64 + m, m], mode).unwrap();
            xs.push((h as f64).ln());
            ys.push(loop_energy(&lp, &spec, m).unwrap());
        }
        let (slope, r) = fit(&xs, &ys);
        o.check(slope > 0.0 && r >= 0.99, format!("{mode:?}, L={l}: energies {ys:.2?}, slope in log H {slope:.3}, correlation {r:.4}"));
    }
    o
}

fn c13_free_energy() -> Outcome {
    let mut o = Outcome::new();
    let samples = 5000;
    let run = |beta: f64, mode: Boundary, seed: u64| {
        let lat = Lattice::from_cube(4, 4, mode).unwrap();
        let mut chain = Chain::new(&lat, 1, ChainConfig::new(beta, seed)).unwrap();
        free_energy_derivative(&mut chain, samples, 0.5).unwrap()
    };
    let mut est = Vec::new();
    for (i, beta) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        let r = run(beta, Boundary::Zero, 130 + i as u64);
        if beta == 2.0 {
            let c = r.comparison("below_finite_size_floor").unwrap();
            o.check(
                c.verdict == Verdict::Pass,
                format!("β=2, j=4, Zero: estimate {:.5} ± {:.1e} vs finite-size floor {:.5} (z {:+.2})", c.estimate, c.se, c.target, c.z),
            );
            o.info(format!(
                "spin-wave asymptote {:.5}, asymptotic bound with δ=0.5 {:.5}",
                r.get_value("spin_wave_asymptotic").unwrap(),
                r.get_value("asymptotic_bound").unwrap()
            ));
        }
        est.push((beta, r.estimate));
    }
    for w in est.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        let z = (b.mean - a.mean) / a.se.hypot(b.se);
        o.check(z > 3.0, format!("monotone: β={} {:.5} < β={} {:.5} (z {z:.1})", w[0].0, a.mean, w[1].0, b.mean));
    }
    let free = run(2.0, Boundary::Free, 140);
    let zero = &est[1].1;
    let dims = (free.get_value("dim").unwrap(), closed_form_ranks_4d(4, Boundary::Zero)[1] as f64);
    o.info(format!(
        "Free vs Zero at β=2: {:.5} vs {:.5}, relative difference {:+.4} (rank ratio predicts {:+.4})",
        free.estimate.mean,
        zero.mean,
        free.estimate.mean / zero.mean - 1.0,
        dims.0 / dims.1 - 1.0
    ));
    o
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("exact calculus suite", c1_calculus),
        ("dimension table", c2_ranks),
        ("Green structure", c3_green),
        ("line constant and loop-energy slope", c4_cgff),
        ("integer-Gaussian bounds", c5_ivgauss),
        ("sampler exactness oracle", c6_sampler),
        ("decoupling identity", c7_decoupling),
        ("Coulomb law oracle", c8_coulomb),
        ("gradient spin-wave law", c9_gsw),
        ("Wilson regime check", c10_wilson),
        ("Fourier bound", c11_fourier),
        ("three-dimensional trapping", c12_trapping),
        ("free energy", c13_free_energy),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        println!("{} criterion {id:2}: {name} ({:.1} s)", if out.pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
        for l in &out.lines {
            println!("        {l}");
        }
        if !out.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
