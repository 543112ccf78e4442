//! Points in preference space and the distances between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in R^n: a user's preferences, a model position, or a target.
///
/// Components are always finite and there is at least one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct PreferenceVector {
    components: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    components: Vec<f64>,
    dim: usize,
}

impl TryFrom<RawVector> for PreferenceVector {
    type Error = Error;

    fn try_from(raw: RawVector) -> Result<Self> {
        if raw.dim != raw.components.len() {
            return Err(Error::InvalidVector(format!(
                "dim {} does not match {} components",
                raw.dim,
                raw.components.len()
            )));
        }
        PreferenceVector::new(raw.components)
    }
}

impl From<PreferenceVector> for RawVector {
    fn from(v: PreferenceVector) -> Self {
        RawVector {
            dim: v.components.len(),
            components: v.components,
        }
    }
}

impl PreferenceVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidVector("vector must have dim >= 1".into()));
        }
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "component {i} is not finite ({})",
                components[i]
            )));
        }
        Ok(Self { components })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    /// Builds a vector from components already known to be finite.
    pub(crate) fn from_finite(components: Vec<f64>) -> Self {
        debug_assert!(!components.is_empty());
        debug_assert!(components.iter().all(|c| c.is_finite()));
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    pub fn check_dim(&self, other: &PreferenceVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &PreferenceVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(dot(&self.components, &other.components))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.components, &self.components).sqrt()
    }
}

/// Euclidean distance between two vectors of equal dimension.
pub fn distance_l2(a: &PreferenceVector, b: &PreferenceVector) -> Result<f64> {
    a.check_dim(b)?;
    Ok(l2(&a.components, &b.components))
}

/// Manhattan distance between two vectors of equal dimension.
pub fn distance_l1(a: &PreferenceVector, b: &PreferenceVector) -> Result<f64> {
    a.check_dim(b)?;
    Ok(a.components
        .iter()
        .zip(&b.components)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> PreferenceVector {
        PreferenceVector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn l2_examples() {
        assert_eq!(distance_l2(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(distance_l2(&v(&[1.5, -2.0]), &v(&[1.5, -2.0])).unwrap(), 0.0);
        let d = distance_l2(&v(&[1.0, 1.0, 1.0]), &v(&[2.0, 3.0, 4.0])).unwrap();
        assert!((d - 14f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_dims_error() {
        let err = distance_l2(&v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, found: 2 }));
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(PreferenceVector::new(vec![]).is_err());
        assert!(PreferenceVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(PreferenceVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn json_layout_and_validation() {
        let json = serde_json::to_string(&v(&[0.5, 1.0])).unwrap();
        assert_eq!(json, r#"{"components":[0.5,1.0],"dim":2}"#);
        let bad = r#"{"components":[0.5,1.0],"dim":3}"#;
        assert!(serde_json::from_str::<PreferenceVector>(bad).is_err());
    }
}
