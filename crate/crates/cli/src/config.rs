//! Run configuration: a plain `key = value` file overlaid by command-line flags.
//!
//! The same format is used for manifests, so `--config out/manifest.txt`
//! replays a run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rsm_core::baselines::MlpTrainer;
use rsm_core::evaluation::DesignFamily;
use rsm_core::model::{ModelKind, ModelSettings};
use rsm_core::KernelSpec;

use crate::error::{CliError, Result};

/// Built-in synthetic data sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticSource {
    /// Normal- and cancer-cell combination surfaces as two datasets.
    Cells,
    Normal,
    Cancer,
    Quadratic,
    /// A Matérn 5/2 Gaussian-process draw.
    Gp,
}

impl FromStr for SyntheticSource {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "cells" | "both" => SyntheticSource::Cells,
            "normal" => SyntheticSource::Normal,
            "cancer" => SyntheticSource::Cancer,
            "quadratic" => SyntheticSource::Quadratic,
            "gp" => SyntheticSource::Gp,
            other => return Err(CliError::Config(format!("unknown synthetic source {other:?}"))),
        })
    }
}

impl std::fmt::Display for SyntheticSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SyntheticSource::Cells => "cells",
            SyntheticSource::Normal => "normal",
            SyntheticSource::Cancer => "cancer",
            SyntheticSource::Quadratic => "quadratic",
            SyntheticSource::Gp => "gp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Measured data CSV; when absent `synthetic` is used.
    pub data: Option<PathBuf>,
    /// Dose grid CSV; the built-in Table 1 grid when absent.
    pub grid: Option<PathBuf>,
    pub synthetic: SyntheticSource,
    /// Standard deviation of the Gaussian noise added to synthetic truth.
    pub noise: f64,
    pub models: Vec<ModelKind>,
    pub designs: Vec<DesignFamily>,
    pub kernel: KernelSpec,
    pub tau2: f64,
    pub seed: u64,
    pub replicates: usize,
    /// Network restarts (best of `restarts`).
    pub restarts: usize,
    pub kriging_restarts: usize,
    pub hill_starts: usize,
    pub mlp_trainer: MlpTrainer,
    pub out: PathBuf,
    /// Factor held fixed in contour grids (0-based).
    pub fixed_factor: usize,
    pub fixed_value: f64,
    pub resolution: usize,
    pub thetas: Vec<f64>,
    pub h_max: f64,
    pub points: usize,
    /// Parametric-bootstrap resamples for Kriging parameter SDs (0 = none).
    pub bootstrap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let settings = ModelSettings::default();
        RunConfig {
            data: None,
            grid: None,
            synthetic: SyntheticSource::Cells,
            noise: 0.02,
            models: ModelKind::ALL.to_vec(),
            designs: vec![
                DesignFamily::Full,
                DesignFamily::Random { n: 80 },
                DesignFamily::Random { n: 27 },
                DesignFamily::LevelSubset(vec![0, 4, 7]),
            ],
            kernel: settings.kernel,
            tau2: settings.kriging.tau2,
            seed: 1,
            replicates: 100,
            restarts: settings.mlp.restarts,
            kriging_restarts: settings.kriging.n_restarts,
            hill_starts: settings.hill.n_starts,
            mlp_trainer: settings.mlp.trainer,
            out: PathBuf::from("out"),
            fixed_factor: 2,
            fixed_value: 0.0,
            resolution: 101,
            thetas: vec![0.5, 1.0, 2.0],
            h_max: 3.0,
            points: 301,
            bootstrap: 0,
        }
    }
}

/// Keys in manifest order.
pub const KEYS: [&str; 23] = [
    "data",
    "grid",
    "synthetic",
    "noise",
    "models",
    "designs",
    "kernel",
    "tau2",
    "seed",
    "replicates",
    "restarts",
    "kriging_restarts",
    "hill_starts",
    "mlp_trainer",
    "out",
    "fixed_factor",
    "fixed_value",
    "resolution",
    "thetas",
    "h_max",
    "points",
    "bootstrap",
    "command",
];

fn list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(f).collect()
}

fn number<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?}")))
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn factor_index(v: &str) -> Result<usize> {
    let t = v.trim();
    if let Ok(i) = t.parse::<usize>() {
        return Ok(i);
    }
    match t.to_ascii_uppercase().as_str() {
        "A" => Ok(0),
        "B" => Ok(1),
        "C" => Ok(2),
        _ => Err(CliError::Config(format!("fixed_factor: expected A, B, C or an index, got {t:?}"))),
    }
}

impl RunConfig {
    /// Defaults overridden by `pairs`. Unknown keys are rejected.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = RunConfig::default();
        for (k, v) in pairs {
            let v = v.as_str();
            match k.as_str() {
                "data" => c.data = (!v.is_empty()).then(|| PathBuf::from(v)),
                "grid" => c.grid = (!v.is_empty()).then(|| PathBuf::from(v)),
                "synthetic" => c.synthetic = v.parse()?,
                "noise" => c.noise = number(k, v)?,
                "models" => c.models = list(v, |s| s.parse::<ModelKind>().map_err(CliError::from))?,
                "designs" => c.designs = list(v, |s| s.parse::<DesignFamily>().map_err(CliError::from))?,
                "kernel" => c.kernel = v.parse()?,
                "tau2" => c.tau2 = number(k, v)?,
                "seed" => c.seed = number(k, v)?,
                "replicates" => c.replicates = number(k, v)?,
                "restarts" => c.restarts = number(k, v)?,
                "kriging_restarts" => c.kriging_restarts = number(k, v)?,
                "hill_starts" => c.hill_starts = number(k, v)?,
                "mlp_trainer" => c.mlp_trainer = v.parse()?,
                "out" => c.out = PathBuf::from(v),
                "fixed_factor" => c.fixed_factor = factor_index(v)?,
                "fixed_value" => c.fixed_value = number(k, v)?,
                "resolution" => c.resolution = number(k, v)?,
                "thetas" => c.thetas = list(v, |s| number("thetas", s))?,
                "h_max" => c.h_max = number(k, v)?,
                "points" => c.points = number(k, v)?,
                "bootstrap" => c.bootstrap = number(k, v)?,
                "command" => {}
                other => return Err(CliError::Config(format!("unknown key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<BTreeMap<String, String>> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        parse_pairs(&text)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.designs.is_empty() {
            return bad("at least one design family is required".into());
        }
        if !(self.tau2 >= 0.0) || !self.tau2.is_finite() {
            return bad(format!("tau2 must be finite and >= 0, got {}", self.tau2));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise must be finite and >= 0, got {}", self.noise));
        }
        if self.replicates == 0 || self.restarts == 0 || self.kriging_restarts == 0 || self.hill_starts == 0 {
            return bad("replicates and restart counts must be positive".into());
        }
        if self.fixed_factor > 2 {
            return bad(format!("fixed_factor must be 0, 1 or 2, got {}", self.fixed_factor));
        }
        if !(0.0..=1.0).contains(&self.fixed_value) {
            return bad(format!("fixed_value must lie in [0, 1], got {}", self.fixed_value));
        }
        Ok(())
    }

    /// Model-fitting settings with this configuration's overrides applied.
    pub fn settings(&self) -> ModelSettings {
        let mut s = ModelSettings {
            kernel: self.kernel,
            ..ModelSettings::default()
        };
        s.kriging.tau2 = self.tau2;
        s.kriging.n_restarts = self.kriging_restarts;
        s.mlp.restarts = self.restarts;
        s.mlp.trainer = self.mlp_trainer;
        s.mlp.epochs = self.mlp_trainer.default_epochs();
        s.hill.n_starts = self.hill_starts;
        s
    }

    /// Every key with its resolved value, in a fixed order. Feeding this back
    /// through [`parse_pairs`] and [`RunConfig::from_pairs`] gives the same config.
    pub fn to_manifest(&self, command: &str) -> String {
        let join = |v: Vec<String>| v.join(",");
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let mut s = String::from("# rsm run manifest; replay with `rsm replay <this file>`\n");
        let values = [
            path(&self.data),
            path(&self.grid),
            self.synthetic.to_string(),
            self.noise.to_string(),
            join(self.models.iter().map(|m| m.key().to_string()).collect()),
            join(self.designs.iter().map(|d| d.to_string()).collect()),
            self.kernel.to_string(),
            self.tau2.to_string(),
            self.seed.to_string(),
            self.replicates.to_string(),
            self.restarts.to_string(),
            self.kriging_restarts.to_string(),
            self.hill_starts.to_string(),
            self.mlp_trainer.to_string(),
            self.out.display().to_string(),
            self.fixed_factor.to_string(),
            self.fixed_value.to_string(),
            self.resolution.to_string(),
            join(self.thetas.iter().map(|t| t.to_string()).collect()),
            self.h_max.to_string(),
            self.points.to_string(),
            self.bootstrap.to_string(),
            command.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let mut c = RunConfig::default();
        c.seed = 99;
        c.designs = vec![DesignFamily::Random { n: 12 }, DesignFamily::LevelSubset(vec![0, 7])];
        c.data = Some(PathBuf::from("x/data.csv"));
        c.thetas = vec![0.25, 4.0];
        let text = c.to_manifest("compare");
        let pairs = parse_pairs(&text).unwrap();
        assert_eq!(pairs["command"], "compare");
        assert_eq!(RunConfig::from_pairs(&pairs).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        let mut p = BTreeMap::new();
        p.insert("colour".to_string(), "red".to_string());
        assert!(matches!(RunConfig::from_pairs(&p), Err(CliError::Config(_))));
        let mut p = BTreeMap::new();
        p.insert("tau2".to_string(), "-1".to_string());
        assert!(RunConfig::from_pairs(&p).is_err());
        let mut p = BTreeMap::new();
        p.insert("fixed_factor".to_string(), "C".to_string());
        assert_eq!(RunConfig::from_pairs(&p).unwrap().fixed_factor, 2);
        assert!(parse_pairs("no equals sign").is_err());
    }
}
