//! Run configuration: a TOML file with `[problem]`, `[mesh]`, `[solver]`, and
//! `[output]` sections, overridable from the command line.

use std::ops::RangeInclusive;
use std::path::PathBuf;

use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemSection,
    pub mesh: MeshSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    /// `square`, `lshape-uniform`, or `lshape-graded`.
    pub name: String,
    pub beta: Option<f64>,
    pub sigma: Option<f64>,
    /// Drops the state constraint.
    pub unconstrained: bool,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            name: "square".into(),
            beta: None,
            sigma: None,
            unconstrained: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    /// Inclusive range `A..B`.
    pub levels: String,
    /// Grading exponent of `lshape-graded`.
    pub mu: f64,
    /// Export fields of this level instead of running a study.
    pub single: Option<usize>,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self {
            levels: "1..5".into(),
            mu: 0.6,
            single: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub c: Option<f64>,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { c: None, max_iter: 50 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Where `psi_s` references are stored; defaults to `<dir>/cache`.
    pub reference_cache: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "dgocp-out".into(),
            reference_cache: None,
        }
    }
}

impl OutputSection {
    pub fn cache_dir(&self) -> PathBuf {
        self.reference_cache.clone().unwrap_or_else(|| self.dir.join("cache"))
    }
}

pub fn parse_levels(s: &str) -> Result<RangeInclusive<usize>, String> {
    let bad = || format!("levels must look like A..B with A <= B, got '{s}'");
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<RangeInclusive<usize>, String> {
        let levels = parse_levels(&self.mesh.levels)?;
        if *levels.end() > 8 {
            return Err(format!("finest level {} is beyond what fits in memory", levels.end()));
        }
        if self.solver.max_iter == 0 {
            return Err("solver.max_iter must be at least 1".into());
        }
        if let Some(c) = self.solver.c {
            if c.is_nan() || c <= 0.0 {
                return Err(format!("solver.c must be positive, got {c}"));
            }
        }
        Ok(levels)
    }
}
