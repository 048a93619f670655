//! Measurement reports: an estimate with its batch-means error and a list of
//! comparisons, each carrying its own tolerance and verdict.

use serde::Serialize;

use crate::stats::{batch_means, Estimate};

/// Comparisons whose target is smaller than this many standard errors are not
/// decidable and are reported as inconclusive.
pub const SIGNAL_TO_NOISE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Fail dominates, then inconclusive.
    pub fn combine(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    /// |estimate - target| <= z * se
    TwoSided { z: f64 },
    /// estimate <= target + z * se
    AtMost { z: f64 },
    /// estimate >= target - z * se
    AtLeast { z: f64 },
    /// two-sided in standard errors and, separately, within a relative band
    TwoSidedRelative { z: f64, relative: f64 },
    /// |estimate - target| <= eps, for deterministic quantities
    Exact { eps: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub name: String,
    /// The estimate this comparison was made on, with its standard error.
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub tolerance: Tolerance,
    /// Signed distance to the target in standard errors (estimate - target) / se.
    pub z: f64,
    pub verdict: Verdict,
    /// Targets that vanish by symmetry are tested as null hypotheses and are exempt
    /// from the signal-to-noise rule.
    pub null_test: bool,
}

impl Comparison {
    pub fn evaluate(name: &str, est: &Estimate, target: f64, tolerance: Tolerance, null_test: bool) -> Comparison {
        let z = if est.se > 0.0 {
            (est.mean - target) / est.se
        } else if est.mean == target {
            0.0
        } else {
            (est.mean - target).signum() * f64::INFINITY
        };
        let resolved = |x: f64| x.abs() >= SIGNAL_TO_NOISE * est.se;
        let verdict = if !est.se.is_finite() || est.mean.is_nan() {
            Verdict::Inconclusive
        } else {
            let ok = match tolerance {
                Tolerance::TwoSided { z: zm } => z.abs() <= zm,
                Tolerance::AtMost { z: zm } => z <= zm,
                Tolerance::AtLeast { z: zm } => z >= -zm,
                Tolerance::TwoSidedRelative { z: zm, relative } => {
                    z.abs() <= zm && (est.mean - target).abs() <= relative * target.abs()
                }
                Tolerance::Exact { eps } => (est.mean - target).abs() <= eps,
            };
            // A passing one-sided lower bound is decided once the estimate itself is
            // resolved from zero; violations are never hidden.
            let decided = null_test
                || matches!(tolerance, Tolerance::Exact { .. })
                || resolved(target)
                || !ok && !matches!(tolerance, Tolerance::TwoSided { .. } | Tolerance::TwoSidedRelative { .. })
                || ok && matches!(tolerance, Tolerance::AtLeast { .. }) && resolved(est.mean) && est.mean > 0.0;
            match (decided, ok) {
                (false, _) => Verdict::Inconclusive,
                (true, true) => Verdict::Pass,
                (true, false) => Verdict::Fail,
            }
        };
        Comparison { name: name.to_string(), estimate: est.mean, se: est.se, target, tolerance, z, verdict, null_test }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureReport {
    pub name: String,
    pub estimate: Estimate,
    pub comparisons: Vec<Comparison>,
    /// Set when the available samples cannot resolve the quantity of interest.
    pub underpowered: bool,
    /// Imaginary part, for complex-valued observables.
    pub imaginary: Option<Estimate>,
    /// Auxiliary exact or derived numbers (bounds, energies, dimensions).
    pub values: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl MeasureReport {
    pub fn new(name: &str, estimate: Estimate) -> MeasureReport {
        MeasureReport {
            name: name.to_string(),
            estimate,
            comparisons: Vec::new(),
            underpowered: estimate.underpowered(),
            imaginary: None,
            values: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Report on a deterministic number: zero standard error, never underpowered.
    pub fn exact(name: &str, value: f64) -> MeasureReport {
        let mut r = MeasureReport::new(name, Estimate { mean: value, se: 0.0, n: 1, batches: 0 });
        r.underpowered = false;
        r
    }

    pub fn from_series(name: &str, xs: &[f64]) -> MeasureReport {
        MeasureReport::new(name, batch_means(xs))
    }

    pub fn compare(&mut self, name: &str, target: f64, tolerance: Tolerance) -> &Comparison {
        self.comparisons.push(Comparison::evaluate(name, &self.estimate, target, tolerance, false));
        self.comparisons.last().unwrap()
    }

    pub fn compare_null(&mut self, name: &str, target: f64, tolerance: Tolerance) -> &Comparison {
        self.comparisons.push(Comparison::evaluate(name, &self.estimate, target, tolerance, true));
        self.comparisons.last().unwrap()
    }

    /// Comparison made on a different estimate than the headline one, e.g. a paired difference.
    pub fn compare_estimate(&mut self, name: &str, est: &Estimate, target: f64, tolerance: Tolerance, null_test: bool) -> &Comparison {
        self.comparisons.push(Comparison::evaluate(name, est, target, tolerance, null_test));
        self.comparisons.last().unwrap()
    }

    pub fn value(&mut self, name: &str, v: f64) {
        self.values.push((name.to_string(), v));
    }

    pub fn get_value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn comparison(&self, name: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.name == name)
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Pass when every comparison passes; a report without comparisons is inconclusive.
    pub fn verdict(&self) -> Verdict {
        if self.comparisons.is_empty() {
            return Verdict::Inconclusive;
        }
        self.comparisons.iter().fold(Verdict::Pass, |v, c| v.combine(c.verdict))
    }

    /// One CSV row per comparison: name, estimate, se, target, margin, verdict.
    pub fn csv_rows(&self) -> Vec<[String; 6]> {
        if self.comparisons.is_empty() {
            let e = &self.estimate;
            return vec![[self.name.clone(), format!("{:.12e}", e.mean), format!("{:.6e}", e.se), String::new(), String::new(), Verdict::Inconclusive.as_str().into()]];
        }
        self.comparisons
            .iter()
            .map(|c| {
                [
                    format!("{}/{}", self.name, c.name),
                    format!("{:.12e}", c.estimate),
                    format!("{:.6e}", c.se),
                    format!("{:.12e}", c.target),
                    format!("{:.4}", c.z),
                    c.verdict.as_str().into(),
                ]
            })
            .collect()
    }
}
