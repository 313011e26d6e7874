//! Run settings: defaults, `key=value` configuration files and overrides.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::AnalysisConfig;
use crate::mixture::{EmOptions, InitStrategy, KappaRule};
use crate::rate::{RateConfig, RateUnit};

/// Every tunable of the pipeline in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub analysis: AnalysisConfig,
    pub em: EmOptions,
    pub rate: RateConfig,
    /// Rate grid in bits per vector.
    pub rate_min: f64,
    pub rate_max: f64,
    pub rate_step: f64,
    pub train_fraction: f64,
    pub gap_samples: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            analysis: AnalysisConfig::default(),
            em: EmOptions {
                components: 16,
                ..EmOptions::default()
            },
            rate: RateConfig::default(),
            rate_min: 20.0,
            rate_max: 60.0,
            rate_step: 1.0,
            train_fraction: 0.9,
            gap_samples: 100_000,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl Settings {
    pub const KEYS: [&'static str; 19] = [
        "window_ms",
        "step_ms",
        "lpc_order",
        "preemphasis",
        "window_kind",
        "components",
        "tol",
        "max_iter",
        "init",
        "restarts",
        "kappa_rule",
        "r_exponent",
        "c_mode",
        "entropy_mode",
        "rate_min",
        "rate_max",
        "rate_step",
        "train_fraction",
        "gap_samples",
    ];

    /// Sets one named value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "window_ms" => self.analysis.window_ms = parse(key, value)?,
            "step_ms" => self.analysis.step_ms = parse(key, value)?,
            "lpc_order" => self.analysis.lpc_order = parse(key, value)?,
            "preemphasis" => self.analysis.preemphasis = parse(key, value)?,
            "window_kind" => self.analysis.window_kind = value.parse()?,
            "components" => self.em.components = parse(key, value)?,
            "tol" => self.em.tol = parse(key, value)?,
            "max_iter" => self.em.max_iter = parse(key, value)?,
            "init" => {
                self.em.init = match value {
                    "kmeans" => InitStrategy::KMeans {
                        restarts: self.restarts().unwrap_or(10),
                    },
                    "random" => InitStrategy::RandomPoints,
                    _ => return Err(Error::Config(format!("unknown init `{value}`"))),
                }
            }
            "restarts" => {
                let restarts = parse(key, value)?;
                if let InitStrategy::KMeans { .. } = self.em.init {
                    self.em.init = InitStrategy::KMeans { restarts };
                }
            }
            "kappa_rule" => {
                self.em.kappa_rule = match value {
                    "ambient" => KappaRule::Ambient,
                    "sphere" => KappaRule::Sphere,
                    _ => return Err(Error::Config(format!("unknown kappa rule `{value}`"))),
                }
            }
            "r_exponent" => self.rate.r_exponent = parse(key, value)?,
            "c_mode" => self.rate.c_mode = value.parse()?,
            "entropy_mode" => self.rate.entropy_mode = value.parse()?,
            "rate_min" => self.rate_min = parse(key, value)?,
            "rate_max" => self.rate_max = parse(key, value)?,
            "rate_step" => self.rate_step = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "gap_samples" => self.gap_samples = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    fn restarts(&self) -> Option<usize> {
        match self.em.init {
            InitStrategy::KMeans { restarts } => Some(restarts),
            InitStrategy::RandomPoints => None,
        }
    }

    /// Applies `key=value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key=value", i + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.analysis.validate()?;
        self.rate.validate()?;
        if self.em.components == 0 {
            return Err(Error::Config("components must be at least 1".into()));
        }
        if !(self.em.tol >= 0.0) {
            return Err(Error::Config("tol must be nonnegative".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1]".into()));
        }
        if self.rate.rate_unit != RateUnit::Bits {
            return Err(Error::Config("rates are reported in bits".into()));
        }
        Ok(())
    }

    /// Snapshot of every value, for run manifests.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let a = &self.analysis;
        let init = match self.em.init {
            InitStrategy::KMeans { .. } => "kmeans",
            InitStrategy::RandomPoints => "random",
        };
        let kappa = match self.em.kappa_rule {
            KappaRule::Ambient => "ambient",
            KappaRule::Sphere => "sphere",
        };
        [
            ("window_ms", a.window_ms.to_string()),
            ("step_ms", a.step_ms.to_string()),
            ("lpc_order", a.lpc_order.to_string()),
            ("preemphasis", a.preemphasis.to_string()),
            ("window_kind", enum_name(&a.window_kind)),
            ("components", self.em.components.to_string()),
            ("tol", self.em.tol.to_string()),
            ("max_iter", self.em.max_iter.to_string()),
            ("init", init.to_string()),
            ("restarts", self.restarts().unwrap_or(0).to_string()),
            ("kappa_rule", kappa.to_string()),
            ("r_exponent", self.rate.r_exponent.to_string()),
            ("c_mode", enum_name(&self.rate.c_mode)),
            ("entropy_mode", enum_name(&self.rate.entropy_mode)),
            ("rate_min", self.rate_min.to_string()),
            ("rate_max", self.rate_max.to_string()),
            ("rate_step", self.rate_step.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("gap_samples", self.gap_samples.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Serde name of a unit enum variant.
fn enum_name<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
