//! Categorical user features and the profiles built from them.

use crate::error::{Error, Result};

/// One categorical feature; a value's id is its index in `values`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDescriptor {
    pub name: String,
    pub values: Vec<String>,
}

impl FeatureDescriptor {
    pub fn new<S: Into<String>>(name: S, values: Vec<String>) -> Self {
        FeatureDescriptor {
            name: name.into(),
            values,
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn value_id(&self, label: &str) -> Option<u32> {
        self.values.iter().position(|v| v == label).map(|i| i as u32)
    }
}

/// Ordered list of the K user features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<FeatureDescriptor>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidDimensions(
                "a schema needs at least one feature".into(),
            ));
        }
        for f in &features {
            if f.values.is_empty() {
                return Err(Error::InvalidDimensions(format!(
                    "feature '{}' has an empty value domain",
                    f.name
                )));
            }
            if f.values.len() > u32::MAX as usize {
                return Err(Error::InvalidDimensions(format!(
                    "feature '{}' has too many values",
                    f.name
                )));
            }
        }
        Ok(FeatureSchema { features })
    }

    /// Schema with anonymous features of the given cardinalities.
    pub fn with_cardinalities(cards: &[usize]) -> Result<Self> {
        let features = cards
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                FeatureDescriptor::new(format!("f{}", k), (0..n).map(|v| v.to_string()).collect())
            })
            .collect();
        Self::new(features)
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn feature(&self, k: usize) -> &FeatureDescriptor {
        &self.features[k]
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.cardinality()).collect()
    }

    pub fn validate(&self, profile: &UserProfile) -> Result<()> {
        if profile.len() != self.features.len() {
            return Err(Error::LengthMismatch {
                expected: self.features.len(),
                found: profile.len(),
            });
        }
        for (k, (&v, f)) in profile.values().iter().zip(&self.features).enumerate() {
            if v as usize >= f.cardinality() {
                return Err(Error::UnknownFeatureValue { feature: k, value: v });
            }
        }
        Ok(())
    }
}

/// A user's value ids, one per feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UserProfile {
    values: Vec<u32>,
}

impl UserProfile {
    pub fn new(values: Vec<u32>) -> Self {
        UserProfile { values }
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<Vec<u32>> for UserProfile {
    fn from(values: Vec<u32>) -> Self {
        UserProfile::new(values)
    }
}
