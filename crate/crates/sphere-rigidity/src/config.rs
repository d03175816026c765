//! Run configuration: grid resolutions, truncation degrees, tolerances, seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::default_resolution;

/// Pass/fail tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Identities that hold exactly up to rounding.
    pub exact: f64,
    /// Identities evaluated by quadrature on non-polynomial integrands.
    pub quadrature: f64,
    /// Residuals of iterative solvers.
    pub solver: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { exact: 1e-10, quadrature: 1e-6, solver: 1e-8 }
    }
}

/// Per-dimension settings indexed by `n ∈ {2, 3, 4}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerDim {
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
}

impl PerDim {
    pub fn get(&self, n: usize) -> Result<usize> {
        match n {
            2 => Ok(self.n2),
            3 => Ok(self.n3),
            4 => Ok(self.n4),
            _ => Err(Error::UnsupportedDimension(n)),
        }
    }

    pub fn set(&mut self, n: usize, v: usize) -> Result<()> {
        match n {
            2 => self.n2 = v,
            3 => self.n3 = v,
            4 => self.n4 = v,
            _ => return Err(Error::UnsupportedDimension(n)),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub resolution: PerDim,
    pub kmax: PerDim,
    pub tolerances: Tolerances,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            resolution: PerDim { n2: default_resolution(2), n3: default_resolution(3), n4: default_resolution(4) },
            kmax: PerDim { n2: 8, n3: 8, n4: 6 },
            tolerances: Tolerances::default(),
            out_dir: PathBuf::from("out"),
            seed: 20240607,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [("exact", t.exact), ("quadrature", t.quadrature), ("solver", t.solver)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("tolerance `{name}` must be positive, got {v}")));
            }
        }
        for n in 2..=4 {
            if self.resolution.get(n)? == 0 {
                return Err(Error::InvalidParameter(format!("resolution for n = {n} must be positive")));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: Config = serde_json::from_str(s).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(c.tolerances.exact, 1e-10);
        assert_eq!(c.kmax.get(3).unwrap(), 8);
        assert_eq!(c.kmax.get(4).unwrap(), 6);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = Config::from_json_str(r#"{"seed": 7, "tolerances": {"exact": 1e-12}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.tolerances.exact, 1e-12);
        assert_eq!(c.tolerances.solver, 1e-8);
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(Config::from_json_str(r#"{"tolerances": {"exact": 0.0}}"#).is_err());
        assert!(Config::from_json_str("not json").is_err());
    }
}
