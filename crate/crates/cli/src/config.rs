//! Experiment configuration: flat key-value files (JSON accepted as an
//! alternative), with command-line flags overriding file values.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use eigengame_core::baselines::UpdateRule;
use eigengame_core::dataset::FileFormat;
use eigengame_core::linalg::{SpectrumKind, SpectrumSpec};
use eigengame_core::Error as CoreError;
use serde::Deserialize;

#[derive(Debug, Clone)]
pub enum Problem {
    Spectrum { spec: SpectrumSpec, rotate: bool },
    Dataset { path: PathBuf, format: FileFormat },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub k: usize,
    pub rules: Vec<UpdateRule>,
    pub alphas: Vec<f64>,
    pub batch: usize,
    pub iters: u64,
    pub trials: usize,
    pub seed: u64,
    pub tol_rad: f64,
    /// Metric checkpoint cadence in iterations.
    pub cadence: u64,
    pub out_dir: PathBuf,
    pub centered: bool,
    /// Run on the full Gram operator instead of minibatch streams.
    pub full_batch: bool,
    /// Staleness bound for the decentralized rules (0 = synchronous).
    pub staleness: u64,
    /// Worker threads per decentralized run (0 = automatic).
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Spectrum {
                spec: SpectrumSpec::linear(50, 1000.0, 1.0),
                rotate: false,
            },
            k: 8,
            rules: vec![UpdateRule::EigengameR],
            alphas: vec![1e-4],
            batch: 64,
            iters: 10_000,
            trials: 1,
            seed: 0,
            tol_rad: std::f64::consts::PI / 8.0,
            cadence: 0, // 0 = iters/100
            out_dir: PathBuf::from("out"),
            centered: false,
            full_batch: true,
            staleness: 0,
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.trials < 1 {
            return Err(CoreError::Config("trials must be at least 1".into()));
        }
        if self.rules.is_empty() || self.alphas.is_empty() {
            return Err(CoreError::Config("rule and alpha sweeps must be non-empty".into()));
        }
        if !(self.tol_rad > 0.0 && self.tol_rad < std::f64::consts::FRAC_PI_2) {
            return Err(CoreError::Config(format!(
                "tolerance must lie in (0, pi/2), got {}",
                self.tol_rad
            )));
        }
        if self.k == 0 {
            return Err(CoreError::Config("k must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_cadence(&self) -> u64 {
        if self.cadence > 0 {
            self.cadence
        } else {
            (self.iters / 100).max(1)
        }
    }
}

/// Raw (all-optional) view used by both the flat and JSON parsers.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub problem: Option<String>,
    pub spectrum_kind: Option<String>,
    pub d: Option<usize>,
    pub lambda_max: Option<f64>,
    pub lambda_min: Option<f64>,
    pub bubble: Option<String>,
    pub rotate: Option<bool>,
    pub dataset_path: Option<String>,
    pub dataset_format: Option<String>,
    pub k: Option<usize>,
    pub rules: Option<String>,
    pub alpha: Option<String>,
    pub batch: Option<usize>,
    pub iters: Option<u64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub tol_rad: Option<f64>,
    pub cadence: Option<u64>,
    pub out: Option<String>,
    pub centered: Option<bool>,
    pub full_batch: Option<bool>,
    pub staleness: Option<u64>,
    pub threads: Option<usize>,
}

fn parse_bubble(s: &str) -> Result<(usize, usize), CoreError> {
    let parts: Vec<&str> = s.split(&[':', '-'][..]).collect();
    if parts.len() != 2 {
        return Err(CoreError::Config(format!("bubble range `{s}` must look like `lo:hi`")));
    }
    let lo = parts[0].trim().parse().map_err(|e| CoreError::Config(format!("bubble lo: {e}")))?;
    let hi = parts[1].trim().parse().map_err(|e| CoreError::Config(format!("bubble hi: {e}")))?;
    Ok((lo, hi))
}

impl RawConfig {
    /// Parses the flat `key = value` format; `#` starts a comment. Errors
    /// carry the offending line and field.
    pub fn from_flat(text: &str) -> Result<Self, CoreError> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| CoreError::Config(format!(
                "line {line_no}: expected `key = value`, got `{body}`"
            )))?;
            let key = key.trim();
            let value = value.trim().to_string();
            let fail = |e: String| CoreError::Config(format!("line {line_no}, field `{key}`: {e}"));
            match key {
                "problem" => raw.problem = Some(value),
                "spectrum.kind" | "spectrum_kind" => raw.spectrum_kind = Some(value),
                "spectrum.d" | "d" => raw.d = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "spectrum.lambda_max" | "lambda_max" => {
                    raw.lambda_max = Some(value.parse().map_err(|e| fail(format!("{e}")))?)
                }
                "spectrum.lambda_min" | "lambda_min" => {
                    raw.lambda_min = Some(value.parse().map_err(|e| fail(format!("{e}")))?)
                }
                "spectrum.bubble" | "bubble" => raw.bubble = Some(value),
                "rotate" => raw.rotate = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "dataset.path" => raw.dataset_path = Some(value),
                "dataset.format" => raw.dataset_format = Some(value),
                "k" => raw.k = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "rules" | "rule" => raw.rules = Some(value),
                "alpha" => raw.alpha = Some(value),
                "batch" => raw.batch = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "iters" => raw.iters = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "trials" => raw.trials = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "seed" => raw.seed = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "tol_rad" => raw.tol_rad = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "cadence" => raw.cadence = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "out" => raw.out = Some(value),
                "centered" => raw.centered = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "full_batch" => raw.full_batch = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "staleness" => raw.staleness = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                "threads" => raw.threads = Some(value.parse().map_err(|e| fail(format!("{e}")))?),
                other => return Err(CoreError::Config(format!("line {line_no}: unknown key `{other}`"))),
            }
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            serde_json::from_str(&text)
                .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))
        } else {
            Self::from_flat(&text)
        }
    }

    /// Folds this raw layer over `base`, replacing any fields that are set.
    pub fn apply(self, base: &mut ExperimentConfig) -> Result<(), CoreError> {
        // Problem selection first.
        let wants_dataset = matches!(self.problem.as_deref(), Some("dataset"))
            || (self.dataset_path.is_some() && self.problem.is_none());
        if wants_dataset {
            let path = self
                .dataset_path
                .as_ref()
                .ok_or_else(|| CoreError::Config("dataset problem needs dataset.path".into()))?;
            let format = match &self.dataset_format {
                Some(f) => FileFormat::from_str(f)?,
                None => FileFormat::Csv,
            };
            base.problem = Problem::Dataset { path: PathBuf::from(path), format };
            base.full_batch = false;
        }
        if self.problem.as_deref() == Some("spectrum")
            || self.spectrum_kind.is_some()
            || self.d.is_some()
        {
            let (mut spec, mut rotate) = match &base.problem {
                Problem::Spectrum { spec, rotate } => (spec.clone(), *rotate),
                _ => (SpectrumSpec::linear(50, 1000.0, 1.0), false),
            };
            if let Some(kind) = &self.spectrum_kind {
                spec.kind = match kind.to_ascii_lowercase().as_str() {
                    "linear" => SpectrumKind::Linear,
                    "exponential" | "exp" => SpectrumKind::Exponential,
                    "bubble" => SpectrumKind::Bubble,
                    other => {
                        return Err(CoreError::Config(format!("unknown spectrum kind `{other}`")))
                    }
                };
            }
            if let Some(d) = self.d {
                spec.d = d;
            }
            if let Some(v) = self.lambda_max {
                spec.lambda_max = v;
            }
            if let Some(v) = self.lambda_min {
                spec.lambda_min = v;
            }
            if let Some(b) = &self.bubble {
                spec.bubble_range = Some(parse_bubble(b)?);
                spec.kind = SpectrumKind::Bubble;
            }
            if let Some(r) = self.rotate {
                rotate = r;
            }
            base.problem = Problem::Spectrum { spec, rotate };
        }
        if let Some(k) = self.k {
            base.k = k;
        }
        if let Some(rules) = &self.rules {
            base.rules = rules
                .split(',')
                .map(|r| UpdateRule::from_str(r.trim()))
                .collect::<Result<Vec<_>, _>>()?;
        }
        if let Some(alpha) = &self.alpha {
            base.alphas = alpha
                .split(',')
                .map(|a| {
                    a.trim()
                        .parse::<f64>()
                        .map_err(|e| CoreError::Config(format!("alpha `{a}`: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
        }
        if let Some(v) = self.batch {
            base.batch = v;
        }
        if let Some(v) = self.iters {
            base.iters = v;
        }
        if let Some(v) = self.trials {
            base.trials = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        if let Some(v) = self.tol_rad {
            base.tol_rad = v;
        }
        if let Some(v) = self.cadence {
            base.cadence = v;
        }
        if let Some(v) = &self.out {
            base.out_dir = PathBuf::from(v);
        }
        if let Some(v) = self.centered {
            base.centered = v;
        }
        if let Some(v) = self.full_batch {
            base.full_batch = v;
        }
        if let Some(v) = self.staleness {
            base.staleness = v;
        }
        if let Some(v) = self.threads {
            base.threads = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_roundtrip() {
        let text = "\
# synthetic sweep
problem = spectrum
spectrum.kind = linear
spectrum.d = 50
spectrum.lambda_max = 1000
spectrum.lambda_min = 1
k = 8
rules = eigengame, oja
alpha = 1e-3, 1e-4
iters = 500
trials = 3
tol_rad = 0.3926990816987241
out = /tmp/exp
";
        let raw = RawConfig::from_flat(text).unwrap();
        let mut cfg = ExperimentConfig::default();
        raw.apply(&mut cfg).unwrap();
        assert_eq!(cfg.k, 8);
        assert_eq!(cfg.rules, vec![UpdateRule::Eigengame, UpdateRule::Oja]);
        assert_eq!(cfg.alphas, vec![1e-3, 1e-4]);
        assert_eq!(cfg.trials, 3);
        cfg.validate().unwrap();
    }

    #[test]
    fn flat_config_reports_line_and_field() {
        let err = RawConfig::from_flat("k = not_a_number\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("`k`"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RawConfig::from_flat("mystery = 3\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
    }

    #[test]
    fn json_config_accepted() {
        let raw: RawConfig = serde_json::from_str(r#"{"k": 4, "alpha": "1e-5", "iters": 100}"#).unwrap();
        let mut cfg = ExperimentConfig::default();
        raw.apply(&mut cfg).unwrap();
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.alphas, vec![1e-5]);
    }

    #[test]
    fn validation_rejects_bad_tolerance() {
        let mut cfg = ExperimentConfig::default();
        cfg.tol_rad = 2.0;
        assert!(cfg.validate().is_err());
    }
}
