use serde::{Deserialize, Serialize};

use crate::dist::FiniteDist;
use crate::error::{Error, Result};

/// Search box for the Gaussian reproduction family `N(mu, sigma^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBounds {
    pub mu: (f64, f64),
    pub sigma: (f64, f64),
}

/// A labelled candidate reproduction distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub label: String,
    pub dist: FiniteDist,
}

/// A parameterized set of reproduction distributions `{Q_theta}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamFamily {
    /// `sigma = 0` is the point mass at `mu`.
    Gaussian(GaussianBounds),
    FiniteGrid { entries: Vec<GridEntry> },
}

/// A point of the parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Theta {
    Gaussian { mu: f64, sigma: f64 },
    Grid { index: usize, label: String },
}

impl ParamFamily {
    pub fn gaussian(mu: (f64, f64), sigma: (f64, f64)) -> Result<Self> {
        let ok = mu.0.is_finite()
            && mu.1.is_finite()
            && mu.0 <= mu.1
            && sigma.0.is_finite()
            && sigma.1.is_finite()
            && 0.0 <= sigma.0
            && sigma.0 <= sigma.1;
        if !ok {
            return Err(Error::InvalidFamily(format!(
                "bad gaussian bounds mu={mu:?} sigma={sigma:?}"
            )));
        }
        Ok(ParamFamily::Gaussian(GaussianBounds { mu, sigma }))
    }

    pub fn grid(entries: Vec<GridEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidFamily("grid family is empty".into()));
        }
        Ok(ParamFamily::FiniteGrid { entries })
    }

    /// Grid family from bare distributions, labelled by index.
    pub fn grid_from(dists: Vec<FiniteDist>) -> Result<Self> {
        Self::grid(
            dists
                .into_iter()
                .enumerate()
                .map(|(i, dist)| GridEntry { label: format!("q{i}"), dist })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ParamFamily::Gaussian(b) => Self::gaussian(b.mu, b.sigma).map(|_| ()),
            ParamFamily::FiniteGrid { entries } if entries.is_empty() => {
                Err(Error::InvalidFamily("grid family is empty".into()))
            }
            ParamFamily::FiniteGrid { .. } => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_checked() {
        assert!(ParamFamily::gaussian((-1.0, 1.0), (0.0, 2.0)).is_ok());
        assert!(ParamFamily::gaussian((-1.0, 1.0), (-0.5, 2.0)).is_err());
        assert!(ParamFamily::gaussian((1.0, -1.0), (0.0, 2.0)).is_err());
        assert!(ParamFamily::grid(vec![]).is_err());
    }

    #[test]
    fn grid_family_from_json() {
        let json = r#"{"kind":"finite-grid","entries":[{"label":"a","dist":{"symbols":[0,1],"probs":[0.5,0.5]}}]}"#;
        let fam: ParamFamily = serde_json::from_str(json).unwrap();
        assert!(matches!(fam, ParamFamily::FiniteGrid { ref entries } if entries.len() == 1));
    }
}
