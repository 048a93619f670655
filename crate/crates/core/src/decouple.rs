//! Spin-wave / Coulomb-gas decomposition of a Villain state:
//! `rho = d theta + 2 pi P m` with `P` the projection onto the image of d, and `q = d m`.
//! Per state, `|d theta + 2 pi m|^2 = |rho|^2 + (2 pi)^2 <q, (-Delta)^{-1} q>`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{d, d_star, inner, Form};
use crate::harmonic::{project, solve_raw, OneFormSpectral, Projection, SolveSettings};
use crate::lattice::{Boundary, Lattice};
use crate::sampler::{Chain, ChainConfig, VillainState};
use crate::stats::{batch_means, correlation, skew_kurtosis, Estimate};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Debug, PartialEq)]
pub struct DecoupledPair {
    /// Gradient spin-wave part, a real (p+1)-form.
    pub rho: Form<f64>,
    /// Coulomb charge `d m`, an integer (p+2)-form.
    pub q: Form<i64>,
}

/// Reusable solver state for decompositions on one lattice.
#[derive(Debug)]
pub struct Decomposer {
    lattice: Arc<Lattice>,
    p: usize,
    settings: SolveSettings,
    spectral: Option<OneFormSpectral>,
}

impl Decomposer {
    pub fn new(lattice: &Arc<Lattice>, p: usize, settings: &SolveSettings) -> Result<Self> {
        if p + 1 > lattice.n() {
            return Err(Error::Degree { k: p + 1, n: lattice.n() });
        }
        let spectral = (p == 1).then(|| OneFormSpectral::new(lattice));
        Ok(Decomposer { lattice: lattice.clone(), p, settings: settings.clone(), spectral })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Projection of a (p+1)-form onto the image of d: `d Delta^{-1} d* f`.
    pub fn lower_projection(&self, f: &Form<f64>) -> Result<Form<f64>> {
        self.check(f.degree() == self.p + 1, f.lattice())?;
        let mode = self.lattice.boundary();
        let ds = d_star(f, mode)?;
        let u = match &self.spectral {
            // Delta^{-1} = -(-Delta)^{-1}
            Some(sp) => sp.solve_neg(ds.values()).into_iter().map(|v| -v).collect(),
            None => solve_raw(&self.lattice, self.p, ds.values(), &self.settings)?,
        };
        d(&Form::from_raw(&self.lattice, self.p, u))
    }

    pub fn decompose(&self, state: &VillainState) -> Result<DecoupledPair> {
        if state.p != self.p {
            return Err(Error::Mismatch(format!("state has p = {}, decomposer p = {}", state.p, self.p)));
        }
        self.check(true, state.lattice())?;
        let q = if self.p + 2 <= self.lattice.n() { d(&state.m)? } else { Form::zeros(&self.lattice, self.p + 1)? };
        let pm = self.lower_projection(&state.m.to_f64())?;
        let dtheta = d(&state.theta)?;
        let rho = dtheta.add(&pm.scale(TWO_PI))?;
        Ok(DecoupledPair { rho, q })
    }

    /// `<q, (-Delta)^{-1} q>` by conjugate gradients on (p+2)-forms.
    pub fn coulomb_energy(&self, q: &Form<i64>) -> Result<f64> {
        self.check(q.degree() == self.p + 2, q.lattice())?;
        if q.is_zero() {
            return Ok(0.0);
        }
        let qf = q.to_f64();
        // solve_raw solves Delta u = rhs; with rhs = -q, u = (-Delta)^{-1} q
        let rhs: Vec<f64> = qf.values().iter().map(|v| -v).collect();
        let u = solve_raw(&self.lattice, self.p + 2, &rhs, &self.settings)?;
        Ok(qf.values().iter().zip(&u).map(|(a, b)| a * b).sum())
    }

    /// Gradient spin-wave draw: white noise of variance `1/beta` on active (p+1)-cells,
    /// projected onto the image of d.
    pub fn gsw_sample<R: Rng + ?Sized>(&self, beta: f64, rng: &mut R) -> Result<Form<f64>> {
        if !(beta > 0.0) {
            return Err(Error::Mismatch(format!("beta must be positive, got {beta}")));
        }
        let sd = 1.0 / beta.sqrt();
        let lat = &self.lattice;
        let k = self.p + 1;
        let w = Form::from_fn(lat, k, |i| if lat.is_active(k, i) { sd * rng.sample::<f64, _>(StandardNormal) } else { 0.0 })?;
        self.lower_projection(&w)
    }

    fn check(&self, degree_ok: bool, lattice: &Arc<Lattice>) -> Result<()> {
        if !degree_ok {
            return Err(Error::Mismatch("form degree does not match the decomposer".into()));
        }
        if lattice.spec() != self.lattice.spec() {
            return Err(Error::Mismatch(format!("form on {} but decomposer on {}", lattice.spec(), self.lattice.spec())));
        }
        Ok(())
    }
}

pub fn decompose(state: &VillainState, settings: &SolveSettings) -> Result<DecoupledPair> {
    Decomposer::new(state.lattice(), state.p, settings)?.decompose(state)
}

/// Same as [`decompose`] but through the generic projection `d d* Delta^{-1}` on (p+1)-forms.
pub fn decompose_by_projection(state: &VillainState, settings: &SolveSettings) -> Result<DecoupledPair> {
    let lat = state.lattice();
    let mode = lat.boundary();
    let k = state.p + 1;
    let pm = if k < lat.n() { project(k, Projection::Lower, &state.m.to_f64(), mode, settings)? } else {
        return Err(Error::Degree { k, n: lat.n() });
    };
    let rho = d(&state.theta)?.add(&pm.scale(TWO_PI))?;
    let q = if k + 1 <= lat.n() { d(&state.m)? } else { Form::zeros(lat, k)? };
    Ok(DecoupledPair { rho, q })
}

/// One gradient spin-wave 2-form draw on `lattice`, whose boundary condition must be `mode`.
pub fn gsw_sample<R: Rng + ?Sized>(lattice: &Arc<Lattice>, beta: f64, mode: Boundary, rng: &mut R, settings: &SolveSettings) -> Result<Form<f64>> {
    if lattice.boundary() != mode {
        return Err(Error::Mismatch(format!("{mode} mode on a lattice with {} boundary", lattice.boundary())));
    }
    Decomposer::new(lattice, 1, settings)?.gsw_sample(beta, rng)
}

/// Which Coulomb gas to sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoulombGas {
    /// Charges on n-cells: Villain on (n-2)-forms, `q = d m`.
    Classical,
    /// Charges on 3-cells from the gauge chain (p = 1).
    Gauge,
}

impl CoulombGas {
    /// Default for dimension n: the gauge gas in n = 4, the classical gas otherwise.
    pub fn default_for(n: usize) -> CoulombGas {
        if n == 4 {
            CoulombGas::Gauge
        } else {
            CoulombGas::Classical
        }
    }

    /// Degree of the underlying Villain angle field.
    pub fn villain_degree(self, n: usize) -> Result<usize> {
        match self {
            CoulombGas::Classical if n >= 2 => Ok(n - 2),
            CoulombGas::Gauge if n >= 3 => Ok(1),
            _ => Err(Error::Degree { k: 3, n }),
        }
    }
}

/// Runs the local Villain chain and calls `f` with `q = d m` after burn-in and every
/// `thinning` sweeps, `samples` times. The charges carry inverse temperature `(2 pi)^2 beta`.
pub fn coulomb_sample(lattice: &Arc<Lattice>, gas: CoulombGas, config: &ChainConfig, samples: usize, mut f: impl FnMut(&Form<i64>)) -> Result<()> {
    let p = gas.villain_degree(lattice.n())?;
    let mut chain = Chain::new(lattice, p, config.clone())?;
    chain.burn_in();
    let mut err = None;
    chain.sample(samples, |s| match d(&s.m) {
        Ok(q) => f(&q),
        Err(e) => err = Some(e),
    });
    err.map_or(Ok(()), Err)
}

/// Named series of functionals, one value per sample.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Panel {
    pub names: Vec<String>,
    pub series: Vec<Vec<f64>>,
}

impl Panel {
    pub fn new(names: Vec<String>) -> Panel {
        let series = vec![Vec::new(); names.len()];
        Panel { names, series }
    }

    pub fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.series.len());
        for (s, &v) in self.series.iter_mut().zip(values) {
            s.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.series.first().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed functionals of `rho` and `q` measured on every decomposed sample.
#[derive(Clone, Debug)]
pub struct IndependencePanel {
    rho_cells: Vec<usize>,
    rho_block: Vec<usize>,
    q_cells: Vec<usize>,
}

impl IndependencePanel {
    /// Picks up to three active (p+1)-cells and (p+2)-cells nearest the centre of the box.
    pub fn new(lattice: &Lattice, p: usize) -> IndependencePanel {
        let central = |k: usize, count: usize| -> Vec<usize> {
            if k > lattice.n() {
                return Vec::new();
            }
            let spec = lattice.spec();
            let mut base = vec![0i64; lattice.n()];
            let mut cells: Vec<(i64, usize)> = (0..lattice.count(k))
                .filter(|&i| lattice.is_active(k, i))
                .map(|i| {
                    lattice.decode(k, i, &mut base);
                    let dist: i64 = base.iter().enumerate().map(|(a, &x)| (2 * x + 1 - spec.lower()[a] - spec.upper()[a]).abs()).sum();
                    (dist, i)
                })
                .collect();
            cells.sort();
            cells.into_iter().take(count).map(|c| c.1).collect()
        };
        let rho_cells = central(p + 1, 3);
        let rho_block = central(p + 1, 8);
        let q_cells = central(p + 2, 3);
        IndependencePanel { rho_cells, rho_block, q_cells }
    }

    pub fn rho_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.rho_cells.iter().map(|c| format!("rho[{c}]")).collect();
        v.push("rho_block_sum".into());
        v.push("rho_norm_sq".into());
        v
    }

    pub fn q_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.q_cells.iter().map(|c| format!("q[{c}]")).collect();
        v.extend(self.q_cells.iter().map(|c| format!("q[{c}]^2")));
        v.push("q_abs_sum".into());
        v.push("coulomb_energy".into());
        v
    }

    /// Number of leading rho functionals that are linear (hence Gaussian).
    pub fn linear_rho(&self) -> usize {
        self.rho_cells.len() + 1
    }

    pub fn measure(&self, pair: &DecoupledPair, coulomb_energy: f64) -> (Vec<f64>, Vec<f64>) {
        let r = pair.rho.values();
        let q = pair.q.values();
        let mut rv: Vec<f64> = self.rho_cells.iter().map(|&c| r[c]).collect();
        rv.push(self.rho_block.iter().map(|&c| r[c]).sum());
        rv.push(pair.rho.norm_sq());
        let mut qv: Vec<f64> = self.q_cells.iter().map(|&c| q[c] as f64).collect();
        qv.extend(self.q_cells.iter().map(|&c| (q[c] * q[c]) as f64));
        qv.push(q.iter().map(|v| v.unsigned_abs() as f64).sum());
        qv.push(coulomb_energy);
        (rv, qv)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossCorrelation {
    pub rho: String,
    pub q: String,
    /// Batch-means correlation estimate (NaN mean when a series is constant).
    pub estimate: Estimate,
    pub within_3se: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalityCheck {
    pub name: String,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Jarque-Bera statistic scaled by the effective sample size.
    pub jarque_bera: f64,
    pub p_value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct IndependenceReport {
    pub samples: usize,
    pub correlations: Vec<CrossCorrelation>,
    pub normality: Vec<NormalityCheck>,
    pub underpowered: bool,
}

impl IndependenceReport {
    pub fn all_pass(&self) -> bool {
        self.correlations.iter().all(|c| c.within_3se) && self.normality.iter().all(|n| n.pass)
    }
}

/// Cross-correlations between every rho and q functional, and moment-based normality tests on
/// the first `linear_rho` rho functionals (1% level).
pub fn independence_report(rho: &Panel, q: &Panel, linear_rho: usize) -> IndependenceReport {
    let samples = rho.len().min(q.len());
    let mut underpowered = samples < 1000;
    let mut correlations = Vec::new();
    for (rn, rs) in rho.names.iter().zip(&rho.series) {
        for (qn, qs) in q.names.iter().zip(&q.series) {
            let est = correlation(&rs[..samples], &qs[..samples]);
            // a constant series (e.g. no charge ever seen) has nothing to correlate with
            let within = !est.mean.is_finite() || est.mean.abs() <= 3.0 * est.se;
            underpowered |= est.underpowered();
            correlations.push(CrossCorrelation { rho: rn.clone(), q: qn.clone(), estimate: est, within_3se: within });
        }
    }
    let normality = rho
        .names
        .iter()
        .zip(&rho.series)
        .take(linear_rho)
        .map(|(name, s)| {
            let (skew, kurt) = skew_kurtosis(s);
            let e = batch_means(s);
            let var = s.iter().map(|x| (x - e.mean).powi(2)).sum::<f64>() / s.len() as f64;
            let n_eff = if e.se > 0.0 { (var / (e.se * e.se)).min(s.len() as f64) } else { s.len() as f64 };
            let jb = n_eff / 6.0 * (skew * skew + kurt * kurt / 4.0);
            let p = (-jb / 2.0).exp();
            NormalityCheck { name: name.clone(), skewness: skew, excess_kurtosis: kurt, jarque_bera: jb, p_value: p, pass: p > 0.01 }
        })
        .collect();
    IndependenceReport { samples, correlations, normality, underpowered }
}

/// `|d theta + 2 pi m|^2 - |rho|^2 - (2 pi)^2 <q, (-Delta)^{-1} q>` relative to the first term.
pub fn pythagoras_defect(state: &VillainState, pair: &DecoupledPair, coulomb_energy: f64) -> Result<f64> {
    let total = state.energy();
    let rho2 = inner(&pair.rho, &pair.rho)?;
    let defect = total - rho2 - TWO_PI * TWO_PI * coulomb_energy;
    Ok(if total > 0.0 { defect.abs() / total } else { defect.abs() })
}
