//! Run configuration: flat `key = value` files with the sections `[model]`,
//! `[grid]`, `[optimizer]` and `[sweep]`. Unknown sections and keys are
//! errors. `BP_SEED` overrides the optimizer seed.

use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridScheme;
use crate::minimize::{MinimizeConfig, Rho0Policy};
use crate::sweep::SweepConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub mu: f64,
    pub p: f64,
    /// Mass as a fraction of `c₀`.
    pub c_fraction: f64,
    pub relaxed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub nodes: usize,
    pub r_max: f64,
    pub scheme: GridScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    /// Number of dyadic masses `c₀·2^{−k}`.
    pub points: usize,
    pub n_starts: usize,
    pub warm_start: bool,
    pub record_time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub optimizer: MinimizeConfig,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection { mu: 1.0, p: 2.5, c_fraction: 0.5, relaxed: false },
            grid: GridSection { nodes: 2048, r_max: 160.0, scheme: GridScheme::Graded },
            optimizer: MinimizeConfig::default(),
            sweep: SweepSection { points: 6, n_starts: 8, warm_start: true, record_time: false },
        }
    }
}

fn parse<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse '{value}'")))
}

impl RunConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        for (section, props) in &ini {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Config(format!("key '{k}' outside any section")));
                }
                continue;
            };
            for (key, value) in props.iter() {
                cfg.set(section, key, value)?;
            }
        }
        cfg.optimizer.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_ini_str(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        match (section, key) {
            ("model", "mu") => self.model.mu = parse(section, key, v)?,
            ("model", "p") => self.model.p = parse(section, key, v)?,
            ("model", "c_fraction") => self.model.c_fraction = parse(section, key, v)?,
            ("model", "relaxed") => self.model.relaxed = parse(section, key, v)?,
            ("grid", "nodes") => self.grid.nodes = parse(section, key, v)?,
            ("grid", "r_max") => self.grid.r_max = parse(section, key, v)?,
            ("grid", "scheme") => self.grid.scheme = parse(section, key, v)?,
            ("optimizer", "max_iter") => self.optimizer.max_iter = parse(section, key, v)?,
            ("optimizer", "grad_tol") => self.optimizer.grad_tol = parse(section, key, v)?,
            ("optimizer", "step_init") => self.optimizer.step_init = Some(parse(section, key, v)?),
            ("optimizer", "armijo") => self.optimizer.armijo = parse(section, key, v)?,
            ("optimizer", "shrink") => self.optimizer.shrink = parse(section, key, v)?,
            ("optimizer", "rho0_policy") => self.optimizer.rho0_policy = v.trim().parse::<Rho0Policy>()?,
            ("optimizer", "seed") => self.optimizer.seed = parse(section, key, v)?,
            ("optimizer", "sigma_min") => self.optimizer.sigma_min = parse(section, key, v)?,
            ("sweep", "points") => self.sweep.points = parse(section, key, v)?,
            ("sweep", "n_starts") => self.sweep.n_starts = parse(section, key, v)?,
            ("sweep", "warm_start") => self.sweep.warm_start = parse(section, key, v)?,
            ("sweep", "record_time") => self.sweep.record_time = parse(section, key, v)?,
            ("model" | "grid" | "optimizer" | "sweep", _) => {
                return Err(Error::Config(format!("unknown key '{key}' in [{section}]")))
            }
            _ => return Err(Error::Config(format!("unknown section [{section}]"))),
        }
        Ok(())
    }

    /// Applies `BP_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var("BP_SEED") {
            self.optimizer.seed = parse("env", "BP_SEED", &seed)?;
        }
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            n_starts: self.sweep.n_starts,
            warm_start: self.sweep.warm_start,
            record_time: self.sweep.record_time,
            minimize: self.optimizer,
        }
    }
}

/// Thread cap from `BP_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("BP_THREADS") {
        Ok(v) => {
            let n: usize = parse("env", "BP_THREADS", &v)?;
            if n == 0 {
                return Err(Error::Config("BP_THREADS must be at least 1".into()));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}
