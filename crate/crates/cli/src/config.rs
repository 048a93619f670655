//! Run configuration: a TOML file with one table per concern. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use villain_core::lattice::cube_cell_count;
use villain_core::Boundary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CalculusCheck,
    Green,
    Ranks,
    Villain,
    Decouple,
    Wilson,
    FreeEnergy,
    CoulombSample,
    IvgTable,
}

impl Experiment {
    #[cfg(test)]
    pub const ALL: [Experiment; 9] = [
        Experiment::CalculusCheck,
        Experiment::Green,
        Experiment::Ranks,
        Experiment::Villain,
        Experiment::Decouple,
        Experiment::Wilson,
        Experiment::FreeEnergy,
        Experiment::CoulombSample,
        Experiment::IvgTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::CalculusCheck => "calculus-check",
            Experiment::Green => "green",
            Experiment::Ranks => "ranks",
            Experiment::Villain => "villain",
            Experiment::Decouple => "decouple",
            Experiment::Wilson => "wilson",
            Experiment::FreeEnergy => "free-energy",
            Experiment::CoulombSample => "coulomb-sample",
            Experiment::IvgTable => "ivg-table",
        }
    }

    /// Experiments that run a Markov chain and therefore need a `[chain]` table.
    pub fn needs_chain(self) -> bool {
        matches!(self, Experiment::Villain | Experiment::Decouple | Experiment::Wilson | Experiment::FreeEnergy | Experiment::CoulombSample)
    }

    /// Built-in example configuration, also shipped under `configs/`.
    pub fn example(self) -> &'static str {
        match self {
            Experiment::CalculusCheck => include_str!("../../../configs/calculus-check.toml"),
            Experiment::Green => include_str!("../../../configs/green.toml"),
            Experiment::Ranks => include_str!("../../../configs/ranks.toml"),
            Experiment::Villain => include_str!("../../../configs/villain.toml"),
            Experiment::Decouple => include_str!("../../../configs/decouple.toml"),
            Experiment::Wilson => include_str!("../../../configs/wilson.toml"),
            Experiment::FreeEnergy => include_str!("../../../configs/free-energy.toml"),
            Experiment::CoulombSample => include_str!("../../../configs/coulomb-sample.toml"),
            Experiment::IvgTable => include_str!("../../../configs/ivg-table.toml"),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single number or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; not part of the config hash since outputs do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wilson: Option<WilsonSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green: Option<GreenSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_energy: Option<FreeEnergySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ivg: Option<IvgSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub limits: LimitsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub n: usize,
    /// Half side: the box is `[-j, j]^n`.
    pub j: i64,
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub beta: OneOrMany,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default = "one")]
    pub thinning: u64,
    /// Samples between checkpoints; 0 disables checkpointing.
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WilsonSection {
    /// Side lengths of square loops.
    pub sizes: Vec<usize>,
    /// Distance to the boundary; defaults to the loop side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<i64>,
    #[serde(default)]
    pub allow_tight_margin: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSection {
    /// Loop sides for the slope fit; each box is sized so the margin equals the side.
    pub sides: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeEnergySection {
    #[serde(default = "half")]
    pub delta: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvgSection {
    pub betas: Vec<f64>,
    /// Step of the shift grid on `[0, 1/2]`.
    #[serde(default = "a_step")]
    pub a_step: f64,
}

fn a_step() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write the final chain states as form snapshots.
    #[serde(default = "yes")]
    pub snapshots: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: None, snapshots: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    /// Upper bound for the memory estimate; defaults to the available system memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_memory_mb: Option<u64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("config error: {}", e.message().trim()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Experiments that work on a box and therefore need a `[lattice]` table.
    fn needs_lattice(&self) -> bool {
        !matches!(self.experiment, Experiment::Green | Experiment::IvgTable)
    }

    pub fn lattice(&self) -> Result<&LatticeSection> {
        self.lattice.as_ref().ok_or_else(|| anyhow::anyhow!("config error: experiment `{}` needs a [lattice] table", self.experiment))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.needs_lattice() {
            if self.lattice.is_some() {
                bail!("config error: experiment `{}` takes no [lattice] table", self.experiment);
            }
            return self.validate_extras();
        }
        let l = self.lattice()?;
        if !(1..=6).contains(&l.n) {
            bail!("config error: key `lattice.n` must be between 1 and 6, got {}", l.n);
        }
        if l.j < 1 {
            bail!("config error: key `lattice.j` must be at least 1, got {}", l.j);
        }
        if self.experiment.needs_chain() {
            let Some(c) = &self.chain else { bail!("config error: experiment `{}` needs a [chain] table", self.experiment) };
            if c.beta.values().is_empty() || c.beta.values().iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                bail!("config error: key `chain.beta` must hold positive numbers");
            }
            if c.samples == 0 {
                bail!("config error: key `chain.samples` must be positive");
            }
            if c.thinning == 0 {
                bail!("config error: key `chain.thinning` must be at least 1");
            }
        }
        let needs_4 = matches!(self.experiment, Experiment::Decouple | Experiment::Wilson | Experiment::FreeEnergy);
        if needs_4 && l.n != 4 {
            bail!("config error: key `lattice.n` must be 4 for experiment `{}`", self.experiment);
        }
        if self.experiment == Experiment::Villain && l.n < 2 {
            bail!("config error: key `lattice.n` must be at least 2 for experiment `villain`");
        }
        if self.experiment == Experiment::Wilson {
            let Some(w) = &self.wilson else { bail!("config error: experiment `wilson` needs a [wilson] table") };
            if w.sizes.is_empty() || w.sizes.contains(&0) {
                bail!("config error: key `wilson.sizes` must hold positive loop sides");
            }
            for &s in &w.sizes {
                let margin = w.margin.unwrap_or(s as i64);
                if margin < s as i64 && !w.allow_tight_margin {
                    bail!("config error: key `wilson.margin` = {margin} is below the loop side {s}; set `wilson.allow_tight_margin = true` to override");
                }
                if 2 * margin + s as i64 > 2 * l.j {
                    bail!("config error: key `wilson.sizes`: a {s}x{s} loop at margin {margin} does not fit in [-{0}, {0}]^4", l.j);
                }
            }
        }
        self.validate_extras()
    }

    fn validate_extras(&self) -> Result<()> {
        if self.experiment == Experiment::Green {
            if let Some(g) = &self.green {
                if g.sides.len() < 2 || g.sides.contains(&0) {
                    bail!("config error: key `green.sides` needs at least two positive sides");
                }
            }
        }
        if let Some(f) = &self.free_energy {
            if !(f.delta > 0.0 && f.delta < 1.0) {
                bail!("config error: key `free_energy.delta` must lie in (0, 1)");
            }
        }
        if let Some(i) = &self.ivg {
            if i.betas.iter().any(|b| !(*b > 0.0)) {
                bail!("config error: key `ivg.betas` must hold positive numbers");
            }
            if !(i.a_step > 0.0 && i.a_step <= 0.5) {
                bail!("config error: key `ivg.a_step` must lie in (0, 1/2]");
            }
        }
        Ok(())
    }

    pub fn betas(&self) -> Vec<f64> {
        self.chain.as_ref().map(|c| c.beta.values()).unwrap_or_default()
    }

    /// Canonical TOML of everything that determines the numeric outputs.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        c.output.dir = None;
        toml::to_string(&c).expect("config serialises")
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Rough peak memory in bytes: cell storage, cached operators and solver work vectors.
    pub fn memory_estimate(&self) -> u64 {
        let Some(l) = &self.lattice else { return 0 };
        let (n, j) = (l.n, l.j);
        let cells: u64 = (0..=n).map(|k| cube_cell_count(n, j, k) as u64).sum();
        let per_cell = match self.experiment {
            Experiment::Decouple => 400,
            Experiment::Villain | Experiment::Wilson | Experiment::FreeEnergy | Experiment::CoulombSample => 160,
            Experiment::CalculusCheck => 200,
            Experiment::Green | Experiment::Ranks | Experiment::IvgTable => 120,
        };
        let chains = if self.experiment.needs_chain() { self.betas().len().min(self.threads.unwrap_or(1).max(1)) as u64 } else { 1 };
        let mut bytes = cells * per_cell * chains;
        if self.experiment == Experiment::Ranks {
            // exact elimination holds dense-ish rows
            bytes += cells * cells.min(4096) * 2;
        }
        bytes
    }

    pub fn preflight(&self) -> Result<()> {
        let need = self.memory_estimate();
        let limit = self.limits.max_memory_mb.map(|m| m << 20).or_else(available_memory);
        if let Some(limit) = limit {
            if need > limit {
                bail!("box too large: estimated {} MiB exceeds the limit of {} MiB", need >> 20, limit >> 20);
            }
        }
        Ok(())
    }
}

fn available_memory() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
