//! Run configuration: defaults, flat key=value files, and flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use conic::geometry::{DomainKind, DomainSpec, WeightSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Quick,
    Full,
}

impl Scale {
    pub fn pick<T>(self, full: T, quick: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainKind,
    pub d: usize,
    pub rho: f64,
    /// Overrides the weight family's default β when set.
    pub beta: Option<f64>,
    pub gamma: f64,
    pub mu: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub quad_tol: f64,
    pub residual_tol: f64,
    pub parseval_tol: f64,
    pub n_sweep: Vec<usize>,
    pub eps_sweep: Vec<f64>,
    pub theta_sweep: Vec<f64>,
    pub scale: Scale,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainKind::Surface,
            d: 2,
            rho: 0.0,
            beta: None,
            gamma: 0.5,
            mu: 0.5,
            seed: 20240601,
            out_dir: PathBuf::from("."),
            quad_tol: 1e-10,
            residual_tol: 1e-8,
            parseval_tol: 1e-6,
            n_sweep: vec![8, 16, 32],
            eps_sweep: vec![0.2, 0.1, 0.05],
            theta_sweep: (1..=6).map(|k| 2f64.powi(-k)).collect(),
            scale: Scale::Full,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.trim().parse().map_err(|_| CliError::Config(format!("bad value for {key}: {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

pub fn parse_domain(v: &str) -> CliResult<DomainKind> {
    match v.trim().to_ascii_lowercase().as_str() {
        "surface" => Ok(DomainKind::Surface),
        "solid" => Ok(DomainKind::Solid),
        other => Err(CliError::Config(format!("unknown domain {other:?} (surface or solid)"))),
    }
}

pub fn parse_scale(v: &str) -> CliResult<Scale> {
    match v.trim().to_ascii_lowercase().as_str() {
        "quick" => Ok(Scale::Quick),
        "full" => Ok(Scale::Full),
        other => Err(CliError::Config(format!("unknown scale {other:?} (quick or full)"))),
    }
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_kv(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> CliResult<()> {
        match key {
            "domain" => self.domain = parse_domain(v)?,
            "d" => self.d = parse(key, v)?,
            "rho" => self.rho = parse(key, v)?,
            "beta" => self.beta = Some(parse(key, v)?),
            "gamma" => self.gamma = parse(key, v)?,
            "mu" => self.mu = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "quad_tol" => self.quad_tol = parse(key, v)?,
            "residual_tol" => self.residual_tol = parse(key, v)?,
            "parseval_tol" => self.parseval_tol = parse(key, v)?,
            "n_sweep" => self.n_sweep = parse_list(key, v)?,
            "eps_sweep" => self.eps_sweep = parse_list(key, v)?,
            "theta_sweep" => self.theta_sweep = parse_list(key, v)?,
            "scale" => self.scale = parse_scale(v)?,
            other => return Err(CliError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let mut c = Self::default();
        for (k, v) in read_kv(path)? {
            c.set(&k, &v)?;
        }
        Ok(c)
    }

    pub fn validate(&self) -> CliResult<()> {
        for (name, v) in [("quad_tol", self.quad_tol), ("residual_tol", self.residual_tol), ("parseval_tol", self.parseval_tol)] {
            if !(v > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.d != 2 {
            return Err(CliError::Config(format!("only d = 2 is supported, got {}", self.d)));
        }
        if !(self.rho >= 0.0) {
            return Err(CliError::Config(format!("rho must be nonnegative, got {}", self.rho)));
        }
        if self.eps_sweep.iter().any(|e| !(*e > 0.0)) || self.theta_sweep.iter().any(|t| !(*t > 0.0)) {
            return Err(CliError::Config("sweep values must be positive".into()));
        }
        Ok(())
    }

    pub fn domain_spec(&self) -> CliResult<DomainSpec> {
        DomainSpec::new(self.domain, self.d, self.rho).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn weight(&self, dom: &DomainSpec) -> CliResult<WeightSpec> {
        let w = match (self.beta, dom.kind) {
            (Some(b), _) => WeightSpec::new(dom, b, self.gamma, if dom.kind == DomainKind::Solid { self.mu } else { 0.0 }),
            (None, DomainKind::Surface) => WeightSpec::surface(dom, self.gamma),
            (None, DomainKind::Solid) => WeightSpec::solid(dom, self.gamma, self.mu),
        };
        w.map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_file_overrides_defaults() {
        let dir = std::env::temp_dir().join(format!("conic-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("run.cfg");
        std::fs::write(&p, "# comment\ndomain = solid\nrho=0.5\nn_sweep = 4, 8\nseed=7\n").unwrap();
        let c = RunConfig::from_file(&p).unwrap();
        assert_eq!(c.domain, DomainKind::Solid);
        assert_eq!(c.rho, 0.5);
        assert_eq!(c.n_sweep, vec![4, 8]);
        assert_eq!(c.seed, 7);
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(matches!(RunConfig::from_file(&p), Err(CliError::Config(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn tolerances_must_be_positive() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        c.parseval_tol = 0.0;
        assert!(c.validate().is_err());
    }
}
