//! JSON model configuration.
//!
//! ```json
//! {
//!   "model": {
//!     "kind": "kim_omberg",
//!     "sigma": [[0.0436]],
//!     "nu0": [0.0788],
//!     "nu1": [0.836264],
//!     "b": 0.0226,
//!     "rho": [-0.935],
//!     "r0": 0.0014
//!   },
//!   "preferences": { "p": -1.0 }
//! }
//! ```
//!
//! Matrices are arrays of rows. `"kind"` is one of `linear`, `kim_omberg`,
//! `cir`; the field sets are those of [`LinearSpec`], [`KimOmbergSpec`] and
//! [`CirSpec`]. Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat_from_rows, mat_to_rows, Vector};
use crate::model::{CirModel, KimOmbergModel, LinearDiffusionModel, MarketModel, Preferences};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: ModelSpec,
    pub preferences: PreferencesSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencesSpec {
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear(LinearSpec),
    KimOmberg(KimOmbergSpec),
    Cir(CirSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub mu0: Vec<f64>,
    pub mu1: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub r0: f64,
    pub r1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KimOmbergSpec {
    pub sigma: Vec<Vec<f64>>,
    pub nu0: Vec<f64>,
    pub nu1: Vec<f64>,
    pub b: f64,
    pub rho: Vec<f64>,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirSpec {
    pub sigma: Vec<Vec<f64>>,
    pub nu0: Vec<f64>,
    pub nu1: Vec<f64>,
    pub b: f64,
    pub theta: f64,
    pub a: f64,
    pub rho: Vec<f64>,
    pub r0: f64,
    pub r1: f64,
}

impl ModelSpec {
    pub fn build(&self) -> Result<MarketModel> {
        let vec = |v: &[f64]| Vector::from_column_slice(v);
        match self {
            ModelSpec::Linear(s) => Ok(MarketModel::Linear(LinearDiffusionModel::new(
                vec(&s.mu0),
                mat_from_rows(&s.mu1)?,
                mat_from_rows(&s.sigma)?,
                mat_from_rows(&s.b)?,
                mat_from_rows(&s.a)?,
                mat_from_rows(&s.rho)?,
                s.r0,
                vec(&s.r1),
            )?)),
            ModelSpec::KimOmberg(s) => {
                Ok(MarketModel::KimOmberg(KimOmbergModel::new(mat_from_rows(&s.sigma)?, vec(&s.nu0), vec(&s.nu1), s.b, vec(&s.rho), s.r0)?))
            }
            ModelSpec::Cir(s) => Ok(MarketModel::Cir(CirModel::new(
                mat_from_rows(&s.sigma)?,
                vec(&s.nu0),
                vec(&s.nu1),
                s.b,
                s.theta,
                s.a,
                vec(&s.rho),
                s.r0,
                s.r1,
            )?)),
        }
    }

    pub fn from_model(model: &MarketModel) -> Self {
        let v = |x: &Vector| x.as_slice().to_vec();
        match model {
            MarketModel::Linear(m) => ModelSpec::Linear(LinearSpec {
                mu0: v(&m.mu0),
                mu1: mat_to_rows(&m.mu1),
                sigma: mat_to_rows(&m.sigma),
                b: mat_to_rows(&m.b),
                a: mat_to_rows(&m.a),
                rho: mat_to_rows(&m.rho),
                r0: m.r0,
                r1: v(&m.r1),
            }),
            MarketModel::KimOmberg(m) => ModelSpec::KimOmberg(KimOmbergSpec {
                sigma: mat_to_rows(&m.sigma),
                nu0: v(&m.nu0),
                nu1: v(&m.nu1),
                b: m.b,
                rho: v(&m.rho),
                r0: m.r0,
            }),
            MarketModel::Cir(m) => ModelSpec::Cir(CirSpec {
                sigma: mat_to_rows(&m.sigma),
                nu0: v(&m.nu0),
                nu1: v(&m.nu1),
                b: m.b,
                theta: m.theta,
                a: m.a,
                rho: v(&m.rho),
                r0: m.r0,
                r1: m.r1,
            }),
        }
    }
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn build(&self) -> Result<(MarketModel, Preferences)> {
        Ok((self.model.build()?, Preferences::new(self.preferences.p)?))
    }

    pub fn new(model: &MarketModel, prefs: &Preferences) -> Self {
        Self { model: ModelSpec::from_model(model), preferences: PreferencesSpec { p: prefs.p } }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KO: &str = r#"{
        "model": {"kind": "kim_omberg", "sigma": [[0.0436]], "nu0": [0.0788],
                  "nu1": [0.836264], "b": 0.0226, "rho": [-0.935], "r0": 0.0014},
        "preferences": {"p": -1.0}
    }"#;

    #[test]
    fn parses_kim_omberg() {
        let f = ModelFile::parse(KO).unwrap();
        let (model, prefs) = f.build().unwrap();
        assert_eq!(model.kind(), "kim_omberg");
        assert_eq!(prefs.q, 0.5);
    }

    #[test]
    fn rejects_unknown_keys() {
        let extra_top = KO.replace("\"preferences\"", "\"extra\": 1, \"preferences\"");
        assert!(ModelFile::parse(&extra_top).is_err());
        let extra_model = KO.replace("\"r0\": 0.0014", "\"r0\": 0.0014, \"r1\": 0.0");
        assert!(ModelFile::parse(&extra_model).is_err());
        let extra_prefs = KO.replace("\"p\": -1.0", "\"p\": -1.0, \"gamma\": 2.0");
        assert!(ModelFile::parse(&extra_prefs).is_err());
        let bad_kind = KO.replace("kim_omberg", "heston");
        assert!(ModelFile::parse(&bad_kind).is_err());
    }

    #[test]
    fn round_trips_linear() {
        let text = r#"{"model": {"kind": "linear", "mu0": [0.01, 0.02],
            "mu1": [[0.1, 0.0], [0.0, 0.2]], "sigma": [[0.2, 0.0], [0.05, 0.3]],
            "b": [[0.5, 0.1], [0.0, 0.4]], "a": [[1.0, 0.0], [0.0, 1.0]],
            "rho": [[-0.5, 0.1], [0.2, -0.3]], "r0": 0.001, "r1": [0.0, 0.01]},
            "preferences": {"p": -3.0}}"#;
        let f = ModelFile::parse(text).unwrap();
        let (model, prefs) = f.build().unwrap();
        let back = ModelFile::new(&model, &prefs);
        assert_eq!(back, f);
    }

    #[test]
    fn ragged_matrix_is_an_error() {
        let text = KO.replace("[[0.0436]]", "[[0.0436], [1.0, 2.0]]");
        let f = ModelFile::parse(&text).unwrap();
        assert!(f.build().is_err());
    }
}
