//! JSON study documents.
//!
//! ```json
//! {
//!   "problem": {"L": 1.0, "drift_coeffs": [0, 1, 0, -1], "q": 2,
//!               "taming": {"alpha": 0.25, "theta": 1, "rho": 2, "beta1": 1, "beta2": 1},
//!               "initial": "zero"},
//!   "noise": {"s": 0.5005, "K": 127},
//!   "study": {"kind": "strong-rate", "T": 8, "grid": [[6, 6], [7, 6]], "reference": [12, 6],
//!             "samples": 500, "seed": 1, "stride": 1, "observable": "sin_quarter_pi_minus_sq_norm"}
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drift::{validate_params, DriftPolynomial, TamingParams};
use crate::error::{Result, SpdeError};
use crate::harness::{InitialCondition, Observable, Problem, Resolution, StudyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    StrongRate,
    WeakRate,
    Smoothing,
    Longtime,
    Equilibrate,
    TamingCheck,
    SpectrumCheck,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::StrongRate => "strong-rate",
            Kind::WeakRate => "weak-rate",
            Kind::Smoothing => "smoothing",
            Kind::Longtime => "longtime",
            Kind::Equilibrate => "equilibrate",
            Kind::TamingCheck => "taming-check",
            Kind::SpectrumCheck => "spectrum-check",
        }
    }

    /// Output table name, `<study_kind>.csv`.
    pub fn file_stem(self) -> &'static str {
        match self {
            Kind::StrongRate => "strong_rate",
            Kind::WeakRate => "weak_rate",
            Kind::Smoothing => "smoothing",
            Kind::Longtime => "longtime",
            Kind::Equilibrate => "equilibrate",
            Kind::TamingCheck => "taming_check",
            Kind::SpectrumCheck => "spectrum_check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LpExponent {
    Finite(f64),
    Infinite(Inf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inf {
    #[serde(rename = "inf")]
    Inf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamingSection {
    pub alpha: f64,
    pub theta: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(rename = "L")]
    pub length: f64,
    pub drift_coeffs: Vec<f64>,
    pub q: usize,
    pub taming: TamingSection,
    pub initial: InitialCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub s: f64,
    /// Defaults to the interior node count of the finest mesh.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub kind: Kind,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// `[m, l]` pairs: `τ = T/2^m`, `h = L/2^l`.
    pub grid: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<[u32; 2]>,
    pub samples: usize,
    pub seed: u64,
    pub stride: usize,
    pub observable: Observable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crn: Option<bool>,
    /// `[lower, upper]` bounds on the fitted order; `null` upper is open.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, Option<f64>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_conditions: Option<Vec<InitialCondition>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_multiplier: Option<f64>,
    /// Smoothing: `L^p` exponent, a number or `"inf"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<LpExponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub problem: ProblemSection,
    pub noise: NoiseSection,
    pub study: StudySection,
}

pub const DEFAULT_DATA_MODES: usize = 1024;

impl ConfigDocument {
    /// Parse and check the schema; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            SpdeError::config(if path == "." { "<document>".to_string() } else { path }, e.inner().to_string())
        })?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpdeError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn drift(&self) -> Result<DriftPolynomial> {
        let p = &self.problem;
        if p.drift_coeffs.len() != 2 * p.q {
            return Err(SpdeError::config(
                "problem.q",
                format!("{} drift coefficients do not give degree 2q-1 = {}", p.drift_coeffs.len(), 2 * p.q - 1),
            ));
        }
        DriftPolynomial::new(p.drift_coeffs.clone(), 1)
            .map_err(|e| SpdeError::config("problem.drift_coeffs", e.to_string()))
    }

    pub fn taming(&self) -> TamingParams {
        let t = &self.problem.taming;
        TamingParams { alpha: t.alpha, theta: t.theta, rho: t.rho, beta1: t.beta1, beta2: t.beta2 }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if !(p.length > 0.0) || !p.length.is_finite() {
            return Err(SpdeError::config("problem.L", "domain length must be positive"));
        }
        let drift = self.drift()?;
        validate_params(&drift, &self.taming(), 1).map_err(|e| SpdeError::config("problem.taming", e.to_string()))?;
        if !(self.noise.s >= 0.0) || !self.noise.s.is_finite() {
            return Err(SpdeError::config("noise.s", "spectral exponent must be finite and >= 0"));
        }
        if self.noise.k == Some(0) {
            return Err(SpdeError::config("noise.K", "need at least one mode"));
        }
        let s = &self.study;
        if !(s.horizon > 0.0) || !s.horizon.is_finite() {
            return Err(SpdeError::config("study.T", "horizon must be positive"));
        }
        if s.grid.is_empty() {
            return Err(SpdeError::config("study.grid", "grid is empty"));
        }
        for (i, r) in s.grid.iter().chain(s.reference.iter()).enumerate() {
            let field = if i < s.grid.len() { format!("study.grid[{i}]") } else { "study.reference".to_string() };
            if r[0] > 30 || r[1] == 0 || r[1] > 30 {
                return Err(SpdeError::config(field, "exponents must satisfy m <= 30 and 1 <= l <= 30"));
            }
        }
        if s.samples == 0 {
            return Err(SpdeError::config("study.samples", "need at least one sample"));
        }
        if matches!(s.kind, Kind::StrongRate | Kind::WeakRate) && s.reference.is_none() {
            return Err(SpdeError::config("study.reference", "rate studies need a reference resolution"));
        }
        if let Some(LpExponent::Finite(p)) = s.p {
            if !(p >= 2.0) {
                return Err(SpdeError::config("study.p", "p must lie in [2, inf]"));
            }
        }
        if let Some((lo, hi)) = s.window {
            if !lo.is_finite() || hi.is_some_and(|h| !(h >= lo)) {
                return Err(SpdeError::config("study.window", "window must be [lower, upper >= lower]"));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem {
            length: self.problem.length,
            drift: self.drift()?,
            taming: self.taming(),
            initial: self.problem.initial.clone(),
            noise_s: self.noise.s,
            noise_k: self.noise.k,
            gamma: self.noise.gamma,
        })
    }

    pub fn resolutions(&self) -> Vec<Resolution> {
        self.study.grid.iter().map(|r| Resolution::new(r[0], r[1])).collect()
    }

    /// Study configuration for the Monte Carlo drivers. For kinds without a
    /// reference resolution the first grid entry stands in.
    pub fn study_config(&self) -> Result<StudyConfig> {
        let s = &self.study;
        let grid = self.resolutions();
        let reference = s.reference.map(|r| Resolution::new(r[0], r[1])).unwrap_or(grid[0]);
        let mut cfg = StudyConfig::new(self.problem()?, grid, reference, s.horizon, s.samples, s.seed);
        cfg.stride = s.stride;
        cfg.observable = s.observable;
        cfg.crn = s.crn.unwrap_or(false);
        cfg.window = s.window;
        Ok(cfg)
    }

    pub fn p(&self) -> f64 {
        match self.study.p {
            None => 2.0,
            Some(LpExponent::Infinite(_)) => f64::INFINITY,
            Some(LpExponent::Finite(p)) => p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
      "problem": {"L": 1.0, "drift_coeffs": [0, 1, 0, -1], "q": 2,
                  "taming": {"alpha": 0.25, "theta": 1, "rho": 2, "beta1": 1, "beta2": 1},
                  "initial": {"modes": [[1, 2.0]]}},
      "noise": {"s": 0.5005},
      "study": {"kind": "strong-rate", "T": 1, "grid": [[3, 3], [4, 3], [5, 3]], "reference": [7, 3],
                "samples": 2, "seed": 9, "stride": 1, "observable": "sin_quarter_pi_minus_sq_norm"}
    }"#;

    fn field_of(text: &str) -> String {
        match ConfigDocument::from_json(text) {
            Err(SpdeError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_base_document() {
        let doc = ConfigDocument::from_json(BASE).unwrap();
        assert_eq!(doc.study.kind, Kind::StrongRate);
        assert_eq!(doc.problem.initial, InitialCondition::Modes(vec![(1, 2.0)]));
        let cfg = doc.study_config().unwrap();
        assert_eq!(cfg.reference, Resolution::new(7, 3));
    }

    #[test]
    fn unknown_key_names_its_path() {
        let text = BASE.replace("\"stride\": 1", "\"stride\": 1, \"strid\": 2");
        assert_eq!(field_of(&text), "study.strid");
        let text = BASE.replace("\"samples\": 2", "\"samples\": -2");
        assert_eq!(field_of(&text), "study.samples");
    }

    #[test]
    fn taming_constraint_is_a_config_error() {
        let text = BASE.replace("\"alpha\": 0.25", "\"alpha\": 1");
        assert_eq!(field_of(&text), "problem.taming");
    }

    #[test]
    fn q_must_match_coefficients() {
        let text = BASE.replace("\"q\": 2", "\"q\": 3");
        assert_eq!(field_of(&text), "problem.q");
    }

    #[test]
    fn rate_study_needs_reference() {
        let text = BASE.replace(", \"reference\": [7, 3]", "");
        assert_eq!(field_of(&text), "study.reference");
    }

    #[test]
    fn lp_exponent_forms() {
        let text = BASE.replace("\"stride\": 1", "\"stride\": 1, \"p\": \"inf\"");
        assert_eq!(ConfigDocument::from_json(&text).unwrap().p(), f64::INFINITY);
        let text = BASE.replace("\"stride\": 1", "\"stride\": 1, \"p\": 4");
        assert_eq!(ConfigDocument::from_json(&text).unwrap().p(), 4.0);
        let text = BASE.replace("\"stride\": 1", "\"stride\": 1, \"p\": 1.5");
        assert_eq!(field_of(&text), "study.p");
    }
}
