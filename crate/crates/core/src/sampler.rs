//! Gibbs sampler for the joint Villain coupling `(theta, m)`.
//!
//! `theta` is a p-form with values in `[-pi, pi)` and `m` an integer (p+1)-form; the
//! target density is `exp(-beta/2 |d theta + 2 pi m|^2)`.
//!
//! One sweep redraws every active (p+1)-cell of `m` from its IV-Gaussian conditional and
//! then every active p-cell of `theta`, one colour class at a time. Colour classes are
//! keyed by (direction set, parity of the base point): two cells of one class never lie
//! in a common (p+1)-cell, so their conditionals are independent and are drawn in
//! parallel.
//!
//! Two theta moves are available. [`ThetaMove::Truncated`] draws `theta(c)` from the
//! Gaussian conditional truncated to `[-pi, pi)` with `m` held fixed. [`ThetaMove::Lifted`]
//! (the default) draws the unwrapped value `x = theta(c) + 2 pi K` from the untruncated
//! Gaussian, stores `theta(c) = x - 2 pi K` and shifts `m(F) += sigma(F, c) K` on every
//! (p+1)-cell containing `c`. This leaves `d theta + 2 pi m` unchanged except through `x`
//! and is an exact block update on `(theta(c), m(F) : F > c)`. It lets the chain cross
//! between winding sectors, which the truncated move essentially never does at large beta.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::forms::Form;
use crate::ivgauss::{ivg_sample, IvgParams};
use crate::lattice::Lattice;
use crate::rng::{mix64, CounterRng};
use crate::snapshot::{Checkpoint, FormPayload};
use crate::stats::{batch_means, Estimate};

const TWO_PI: f64 = 2.0 * PI;
/// Below this many cells per class the update runs on the calling thread.
const PAR_MIN: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThetaMove {
    #[default]
    Lifted,
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub beta: f64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub chain_id: u64,
    #[serde(default)]
    pub theta_move: ThetaMove,
}

impl ChainConfig {
    /// Default controls: burn-in of 50 sweeps per unit beta (at least 50), no thinning.
    pub fn new(beta: f64, seed: u64) -> Self {
        ChainConfig {
            beta,
            burn_in: (50.0 * beta).ceil().max(50.0) as u64,
            thinning: 1,
            seed,
            chain_id: 0,
            theta_move: ThetaMove::Lifted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Mismatch(format!("beta must be positive, got {}", self.beta)));
        }
        if self.thinning == 0 {
            return Err(Error::Mismatch("thinning must be at least 1".into()));
        }
        Ok(())
    }

    /// Hash of every field that influences the sample stream.
    pub fn hash(&self) -> u64 {
        let mv = match self.theta_move {
            ThetaMove::Lifted => 1,
            ThetaMove::Truncated => 2,
        };
        [self.beta.to_bits(), self.burn_in, self.thinning, self.seed, self.chain_id, mv]
            .iter()
            .fold(0x5EED_u64, |h, &v| mix64(h ^ v))
    }
}

/// Joint state of the coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct VillainState {
    pub p: usize,
    pub theta: Form<f64>,
    pub m: Form<i64>,
}

impl VillainState {
    /// The all-zero state.
    pub fn zero(lattice: &Arc<Lattice>, p: usize) -> Result<Self> {
        if p + 1 > lattice.n() {
            return Err(Error::Degree { k: p + 1, n: lattice.n() });
        }
        Ok(VillainState { p, theta: Form::zeros(lattice, p)?, m: Form::zeros(lattice, p + 1)? })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        self.theta.lattice()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.degree() != self.p || self.m.degree() != self.p + 1 {
            return Err(Error::Mismatch("state degrees inconsistent with p".into()));
        }
        if self.theta.lattice().spec() != self.m.lattice().spec() {
            return Err(Error::Mismatch("theta and m live on different boxes".into()));
        }
        if let Some(v) = self.theta.values().iter().find(|v| !(-PI..PI).contains(*v)) {
            return Err(Error::Mismatch(format!("theta value {v} outside [-pi, pi)")));
        }
        Ok(())
    }

    /// `d theta + 2 pi m` as raw values over (p+1)-cells.
    pub fn field_strength(&self) -> Vec<f64> {
        let dm = self.lattice().d_matrix(self.p);
        let mut out = dm.apply(self.theta.values());
        out.iter_mut().zip(self.m.values()).for_each(|(o, &m)| *o += TWO_PI * m as f64);
        out
    }

    /// `|d theta + 2 pi m|^2`.
    pub fn energy(&self) -> f64 {
        self.field_strength().iter().map(|v| v * v).sum()
    }

    /// `d theta` on each (p+1)-cell, computed from the stored representatives without wrapping.
    pub fn d_theta(&self) -> Vec<f64> {
        self.lattice().d_matrix(self.p).apply(self.theta.values())
    }
}

/// Wraps a real number to `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let (t, _) = wrap_with_turns(x);
    t
}

/// `(t, K)` with `x = t + 2 pi K`, `t` in `[-pi, pi)`.
fn wrap_with_turns(x: f64) -> (f64, i64) {
    let mut k = ((x + PI) / TWO_PI).floor();
    let mut t = x - TWO_PI * k;
    if t >= PI {
        t -= TWO_PI;
        k += 1.0;
    } else if t < -PI {
        t += TWO_PI;
        k -= 1.0;
    }
    (t, k as i64)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal restricted to `[a, b]` with `b <= 0` or `a <= 0 <= b`.
fn std_normal_interval<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let pa = std_normal_cdf(a);
    let pb = std_normal_cdf(b);
    if pb - pa > 1e-280 && pb > 0.0 {
        let u = pa + rng.random::<f64>() * (pb - pa);
        let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u);
        return z.clamp(a, b);
    }
    // deep lower tail: mirror to [-b, -a] and use exponential rejection from the near end
    let (lo, hi) = (-b, -a);
    loop {
        let e: f64 = -rng.random::<f64>().ln() / lo;
        let x = lo + e;
        if x <= hi && rng.random::<f64>() < (-0.5 * e * e).exp() {
            return -x;
        }
    }
}

/// `N(mu, sd^2)` conditioned on `[lo, hi]`.
pub fn truncated_normal<R: Rng + ?Sized>(mu: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let (a, b) = ((lo - mu) / sd, (hi - mu) / sd);
    let z = if a > 0.0 { -std_normal_interval(-b, -a, rng) } else { std_normal_interval(a, b, rng) };
    (mu + sd * z).clamp(lo, hi)
}

/// Precomputed colour classes for the p-cells.
#[derive(Debug)]
struct Colouring {
    classes: Vec<Vec<u32>>,
}

impl Colouring {
    fn new(lattice: &Lattice, p: usize) -> Colouring {
        let sets = lattice.dir_sets(p);
        let mut classes = vec![Vec::new(); 2 * sets.len()];
        let mut base = vec![0i64; lattice.n()];
        for idx in 0..lattice.count(p) {
            if !lattice.is_active(p, idx) {
                continue;
            }
            let mask = lattice.decode(p, idx, &mut base);
            let pos = sets.iter().position(|&s| s == mask).expect("mask is a listed direction set");
            let parity = base.iter().sum::<i64>().rem_euclid(2) as usize;
            classes[2 * pos + parity].push(idx as u32);
        }
        classes.retain(|c| !c.is_empty());
        Colouring { classes }
    }
}

/// A running Markov chain.
#[derive(Debug)]
pub struct Chain {
    config: ChainConfig,
    state: VillainState,
    sweeps: u64,
    colouring: Colouring,
}

/// Stream stages: 0 for m, 1 + class for theta.
const STAGE_M: u64 = 0;

impl Chain {
    pub fn new(lattice: &Arc<Lattice>, p: usize, config: ChainConfig) -> Result<Chain> {
        Self::from_state(VillainState::zero(lattice, p)?, config, 0)
    }

    pub fn from_state(state: VillainState, config: ChainConfig, sweeps: u64) -> Result<Chain> {
        config.validate()?;
        state.validate()?;
        let colouring = Colouring::new(state.lattice(), state.p);
        Ok(Chain { config, state, sweeps, colouring })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn state(&self) -> &VillainState {
        &self.state
    }

    pub fn into_state(self) -> VillainState {
        self.state
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweeps
    }

    pub fn colour_classes(&self) -> usize {
        self.colouring.classes.len()
    }

    fn stream(&self, stage: u64, cell: usize) -> CounterRng {
        CounterRng::from_parts(self.config.seed, self.config.chain_id, self.sweeps, stage, cell as u64)
    }

    /// Redraws every active (p+1)-cell of `m` from its IV-Gaussian conditional.
    pub fn resample_m(&mut self) {
        let lattice = self.state.lattice().clone();
        let k = self.state.p + 1;
        let dtheta = self.state.d_theta();
        let beta_m = TWO_PI * TWO_PI * self.config.beta;
        let (seed, chain, sweep) = (self.config.seed, self.config.chain_id, self.sweeps);
        let draw = |f: usize, mv: &mut i64| {
            if lattice.is_active(k, f) {
                let mut rng = CounterRng::from_parts(seed, chain, sweep, STAGE_M, f as u64);
                *mv = ivg_sample(IvgParams::new(-dtheta[f] / TWO_PI, beta_m), &mut rng);
            }
        };
        let values = self.state.m.values_mut_unchecked();
        if values.len() >= PAR_MIN {
            values.par_iter_mut().enumerate().with_min_len(1024).for_each(|(f, mv)| draw(f, mv));
        } else {
            values.iter_mut().enumerate().for_each(|(f, mv)| draw(f, mv));
        }
    }

    /// Redraws every active p-cell of `theta`, one colour class at a time.
    pub fn resample_theta(&mut self) {
        for class in 0..self.colouring.classes.len() {
            self.resample_class(class);
        }
    }

    fn resample_class(&mut self, class: usize) {
        let lattice = self.state.lattice().clone();
        let p = self.state.p;
        let dm = lattice.d_matrix(p);
        let dt = lattice.d_transpose(p);
        let beta = self.config.beta;
        let mv = self.config.theta_move;
        let theta = self.state.theta.values();
        let m = self.state.m.values();
        let stage = 1 + class as u64;
        let cells = &self.colouring.classes[class];

        let update = |&c: &u32| -> (u32, f64, i64) {
            let c = c as usize;
            let mut kappa = 0usize;
            let mut acc = 0.0;
            for (f, sigma) in dt.row(c) {
                // S_F without the contribution of c
                let mut s = TWO_PI * m[f] as f64;
                for (c2, s2) in dm.row(f) {
                    if c2 != c {
                        s += s2 as f64 * theta[c2];
                    }
                }
                acc += sigma as f64 * s;
                kappa += 1;
            }
            let mut rng = self.stream(stage, c);
            if kappa == 0 {
                return (c as u32, rng.random_range(-PI..PI), 0);
            }
            let mu = -acc / kappa as f64;
            let sd = 1.0 / (beta * kappa as f64).sqrt();
            match mv {
                ThetaMove::Lifted => {
                    let z: f64 = rng.sample(StandardNormal);
                    let (t, turns) = wrap_with_turns(mu + sd * z);
                    (c as u32, t, turns)
                }
                ThetaMove::Truncated => {
                    let mut t = truncated_normal(mu, sd, -PI, PI, &mut rng);
                    if t >= PI {
                        t = -PI;
                    }
                    (c as u32, t, 0)
                }
            }
        };
        let updates: Vec<(u32, f64, i64)> = if cells.len() >= PAR_MIN {
            cells.par_iter().with_min_len(512).map(update).collect()
        } else {
            cells.iter().map(update).collect()
        };

        let theta = self.state.theta.values_mut_unchecked();
        for &(c, t, _) in &updates {
            theta[c as usize] = t;
        }
        let m = self.state.m.values_mut_unchecked();
        for &(c, _, turns) in &updates {
            if turns != 0 {
                for (f, sigma) in dt.row(c as usize) {
                    m[f] += sigma as i64 * turns;
                }
            }
        }
    }

    /// One full sweep: m, then all theta colour classes.
    pub fn sweep(&mut self) {
        self.resample_m();
        self.resample_theta();
        self.sweeps += 1;
    }

    pub fn run_sweeps(&mut self, count: u64) {
        for _ in 0..count {
            self.sweep();
        }
    }

    pub fn burn_in(&mut self) {
        self.run_sweeps(self.config.burn_in);
    }

    /// Runs `count` thinned samples, calling `f` after each.
    pub fn sample(&mut self, count: usize, mut f: impl FnMut(&VillainState)) {
        for _ in 0..count {
            self.run_sweeps(self.config.thinning);
            f(&self.state);
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.config.hash(),
            sweep: self.sweeps,
            rng_counter: self.sweeps,
            forms: vec![FormPayload::Real(self.state.theta.clone()), FormPayload::Int(self.state.m.clone())],
        }
    }

    /// Restores a chain; the configuration must hash to the checkpoint's value.
    pub fn resume(config: ChainConfig, checkpoint: Checkpoint) -> Result<Chain> {
        if checkpoint.config_hash != config.hash() {
            return Err(Error::Snapshot("checkpoint was written with a different chain configuration".into()));
        }
        let mut it = checkpoint.forms.into_iter();
        let (Some(FormPayload::Real(theta)), Some(FormPayload::Int(m)), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Snapshot("checkpoint must hold a real theta form followed by an integer m form".into()));
        };
        let p = theta.degree();
        Self::from_state(VillainState { p, theta, m }, config, checkpoint.sweep)
    }
}

/// A measurement taken on each emitted state. Returns one value per name.
pub trait Observable: Sync {
    fn names(&self) -> Vec<String>;
    fn measure(&self, state: &VillainState) -> Result<Vec<f64>>;
}

/// Adapter turning a closure into an [`Observable`].
pub struct FnObservable<F> {
    names: Vec<String>,
    f: F,
}

impl<F: Fn(&VillainState) -> Result<Vec<f64>> + Sync> FnObservable<F> {
    pub fn new(names: &[&str], f: F) -> Self {
        FnObservable { names: names.iter().map(|s| s.to_string()).collect(), f }
    }
}

impl<F: Fn(&VillainState) -> Result<Vec<f64>> + Sync> Observable for FnObservable<F> {
    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn measure(&self, state: &VillainState) -> Result<Vec<f64>> {
        (self.f)(state)
    }
}

/// Built-in observable: `|d theta + 2 pi m|^2`.
pub struct EnergyObservable;

impl Observable for EnergyObservable {
    fn names(&self) -> Vec<String> {
        vec!["energy".into()]
    }

    fn measure(&self, state: &VillainState) -> Result<Vec<f64>> {
        Ok(vec![state.energy()])
    }
}

/// Measurement series of one chain. Failed measurements are recorded and stored as NaN.
#[derive(Clone, Debug, Serialize)]
pub struct ChainOutput {
    pub names: Vec<String>,
    pub series: Vec<Vec<f64>>,
    /// (sample index, message)
    pub failures: Vec<(u64, String)>,
    pub sweeps: u64,
}

impl ChainOutput {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.series[i].as_slice())
    }

    /// Batch-means estimate of a column, skipping failed samples.
    pub fn estimate(&self, name: &str) -> Option<Estimate> {
        let col: Vec<f64> = self.column(name)?.iter().copied().filter(|v| v.is_finite()).collect();
        Some(batch_means(&col))
    }
}

/// Burn-in, then `samples` thinned measurements of every observable.
pub fn run_chain(lattice: &Arc<Lattice>, p: usize, config: &ChainConfig, samples: usize, observables: &[&dyn Observable]) -> Result<ChainOutput> {
    let mut chain = Chain::new(lattice, p, config.clone())?;
    chain.burn_in();
    let mut out = collect(&mut chain, samples, observables);
    out.sweeps = chain.sweeps_done();
    Ok(out)
}

/// Takes `samples` measurements from an already running chain.
pub fn collect(chain: &mut Chain, samples: usize, observables: &[&dyn Observable]) -> ChainOutput {
    let widths: Vec<Vec<String>> = observables.iter().map(|o| o.names()).collect();
    let names: Vec<String> = widths.iter().flatten().cloned().collect();
    let mut series = vec![Vec::with_capacity(samples); names.len()];
    let mut failures = Vec::new();
    let mut index = 0u64;
    chain.sample(samples, |state| {
        let mut col = 0;
        for (o, w) in observables.iter().zip(&widths) {
            match o.measure(state) {
                Ok(v) if v.len() == w.len() => {
                    for x in v {
                        series[col].push(x);
                        col += 1;
                    }
                }
                res => {
                    let msg = match res {
                        Err(e) => e.to_string(),
                        Ok(v) => format!("{} values for {} names", v.len(), w.len()),
                    };
                    failures.push((index, msg));
                    for _ in 0..w.len() {
                        series[col].push(f64::NAN);
                        col += 1;
                    }
                }
            }
        }
        index += 1;
    });
    ChainOutput { names, series, failures, sweeps: chain.sweeps_done() }
}
