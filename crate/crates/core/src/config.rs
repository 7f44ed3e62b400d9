//! Model files and run configuration.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::model::{SiteModel, Vec3};

const DIMER_JSON: &str = include_str!("../data/dimer.json");
const FMO_STYLE_JSON: &str = include_str!("../data/fmo_style.json");

/// On-disk description of an aggregate and, optionally, its bath.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub name: Option<String>,
    pub energies_cm1: Vec<f64>,
    pub couplings_cm1: Vec<Vec<f64>>,
    pub dipoles: Vec<[f64; 3]>,
    pub disorder_sigma_cm1: Vec<f64>,
    #[serde(default)]
    pub bath: Option<BathSpec>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn site_model(&self) -> Result<SiteModel> {
        let n = self.energies_cm1.len();
        if self.couplings_cm1.len() != n || self.couplings_cm1.iter().any(|r| r.len() != n) {
            return Err(Error::validation(format!("couplings_cm1 must be a {n}x{n} matrix")));
        }
        let couplings = DMatrix::from_fn(n, n, |i, j| self.couplings_cm1[i][j]);
        let dipoles = self.dipoles.iter().map(|d| Vec3::new(d[0], d[1], d[2])).collect();
        SiteModel::new(self.energies_cm1.clone(), couplings, dipoles, self.disorder_sigma_cm1.clone())
    }

    pub fn from_site_model(model: &SiteModel, bath: Option<BathSpec>) -> Self {
        let n = model.n_sites();
        Self {
            name: None,
            energies_cm1: model.energies().to_vec(),
            couplings_cm1: (0..n).map(|i| (0..n).map(|j| model.couplings()[(i, j)]).collect()).collect(),
            dipoles: model.dipoles().iter().map(|d| [d.x, d.y, d.z]).collect(),
            disorder_sigma_cm1: model.disorder_sigma().to_vec(),
            bath,
        }
    }
}

pub fn bundled_dimer() -> ModelFile {
    ModelFile::from_json(DIMER_JSON).expect("bundled dimer parses")
}

pub fn bundled_fmo_style() -> ModelFile {
    ModelFile::from_json(FMO_STYLE_JSON).expect("bundled template parses")
}

/// Seven-site FMO-style template with illustrative couplings and dipoles.
pub fn fmo_style_model() -> SiteModel {
    bundled_fmo_style().site_model().expect("bundled template is valid")
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Applies `key.path=value` overrides to a JSON document. Values parse as
/// JSON when possible and fall back to plain strings; every key along the
/// path must already exist so typos are rejected.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut cur = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = cur
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not inside an object")))?;
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("override `{key}`: unknown key `{part}`")));
            }
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            cur = obj.get_mut(*part).unwrap();
        }
    }
    Ok(())
}
