//! Latent vectors for feature values and ad variants, user vector
//! composition, and scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layout::{IndexLayout, SlotOwner};
use crate::schema::{FeatureSchema, UserProfile};

/// Half-width of the uniform initialization band around 0.5.
pub const DEFAULT_INIT_SPREAD: f64 = 0.1;
pub const DEFAULT_BOUND: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    schema: FeatureSchema,
    layout: IndexLayout,
    // per feature: cardinality * d entries, row-major by value id
    feature_vectors: Vec<Vec<f64>>,
    // num_variants * D entries, row-major by variant id
    variant_vectors: Vec<f64>,
    num_variants: usize,
    bound: f64,
}

impl Model {
    /// Fresh model with every entry drawn from `U[0.5 - spread, 0.5 + spread]`.
    pub fn random(
        schema: FeatureSchema,
        layout: IndexLayout,
        num_variants: usize,
        spread: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            if spread > 0.0 {
                rng.gen_range(0.5 - spread..=0.5 + spread)
            } else {
                0.5
            }
        };
        let d = layout.feature_dim();
        let feature_vectors = schema
            .features()
            .iter()
            .map(|f| (0..f.cardinality() * d).map(|_| draw()).collect())
            .collect();
        let variant_vectors = (0..num_variants * layout.total_dim()).map(|_| draw()).collect();
        Self::from_parts(schema, layout, feature_vectors, variant_vectors, num_variants, DEFAULT_BOUND)
    }

    /// Model with every entry equal to `value`.
    pub fn constant(
        schema: FeatureSchema,
        layout: IndexLayout,
        num_variants: usize,
        value: f64,
    ) -> Result<Self> {
        let d = layout.feature_dim();
        let feature_vectors = schema
            .features()
            .iter()
            .map(|f| vec![value; f.cardinality() * d])
            .collect();
        let variant_vectors = vec![value; num_variants * layout.total_dim()];
        Self::from_parts(schema, layout, feature_vectors, variant_vectors, num_variants, DEFAULT_BOUND)
    }

    pub fn from_parts(
        schema: FeatureSchema,
        layout: IndexLayout,
        feature_vectors: Vec<Vec<f64>>,
        variant_vectors: Vec<f64>,
        num_variants: usize,
        bound: f64,
    ) -> Result<Self> {
        if schema.num_features() != layout.num_features() {
            return Err(Error::SchemaMismatch(format!(
                "schema has {} features but layout was built for {}",
                schema.num_features(),
                layout.num_features()
            )));
        }
        if num_variants == 0 {
            return Err(Error::InvalidDimensions("at least one ad variant is required".into()));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidConfig(format!("bound must be positive, got {}", bound)));
        }
        let d = layout.feature_dim();
        if feature_vectors.len() != schema.num_features() {
            return Err(Error::LengthMismatch {
                expected: schema.num_features(),
                found: feature_vectors.len(),
            });
        }
        for (f, v) in schema.features().iter().zip(&feature_vectors) {
            if v.len() != f.cardinality() * d {
                return Err(Error::LengthMismatch {
                    expected: f.cardinality() * d,
                    found: v.len(),
                });
            }
        }
        if variant_vectors.len() != num_variants * layout.total_dim() {
            return Err(Error::LengthMismatch {
                expected: num_variants * layout.total_dim(),
                found: variant_vectors.len(),
            });
        }
        let model = Model {
            schema,
            layout,
            feature_vectors,
            variant_vectors,
            num_variants,
            bound,
        };
        if !model.is_finite() {
            return Err(Error::InvalidConfig("model contains non-finite entries".into()));
        }
        Ok(model)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn num_variants(&self) -> usize {
        self.num_variants
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn set_bound(&mut self, bound: f64) -> Result<()> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidConfig(format!("bound must be positive, got {}", bound)));
        }
        self.bound = bound;
        Ok(())
    }

    pub fn feature_vector(&self, feature: usize, value: u32) -> Result<&[f64]> {
        let d = self.layout.feature_dim();
        let start = self.value_offset(feature, value)?;
        Ok(&self.feature_vectors[feature][start..start + d])
    }

    pub fn feature_vector_mut(&mut self, feature: usize, value: u32) -> Result<&mut [f64]> {
        let d = self.layout.feature_dim();
        let start = self.value_offset(feature, value)?;
        Ok(&mut self.feature_vectors[feature][start..start + d])
    }

    /// All value vectors of one feature, concatenated by value id.
    pub fn feature_family(&self, feature: usize) -> &[f64] {
        &self.feature_vectors[feature]
    }

    pub fn feature_family_mut(&mut self, feature: usize) -> &mut [f64] {
        &mut self.feature_vectors[feature]
    }

    pub fn variant_vector(&self, variant: usize) -> Result<&[f64]> {
        let dim = self.layout.total_dim();
        if variant >= self.num_variants {
            return Err(Error::UnknownVariant(variant));
        }
        Ok(&self.variant_vectors[variant * dim..(variant + 1) * dim])
    }

    pub fn variant_vector_mut(&mut self, variant: usize) -> Result<&mut [f64]> {
        let dim = self.layout.total_dim();
        if variant >= self.num_variants {
            return Err(Error::UnknownVariant(variant));
        }
        Ok(&mut self.variant_vectors[variant * dim..(variant + 1) * dim])
    }

    /// All variant vectors concatenated by variant id.
    pub fn variant_family(&self) -> &[f64] {
        &self.variant_vectors
    }

    pub fn variant_family_mut(&mut self) -> &mut [f64] {
        &mut self.variant_vectors
    }

    fn value_offset(&self, feature: usize, value: u32) -> Result<usize> {
        let card = self
            .schema
            .features()
            .get(feature)
            .map(|f| f.cardinality())
            .ok_or(Error::UnknownFeatureValue { feature, value })?;
        if value as usize >= card {
            return Err(Error::UnknownFeatureValue { feature, value });
        }
        Ok(value as usize * self.layout.feature_dim())
    }

    /// The user's value vectors, one slice per feature.
    pub(crate) fn profile_vectors(&self, profile: &UserProfile) -> Result<Vec<&[f64]>> {
        self.schema.validate(profile)?;
        let d = self.layout.feature_dim();
        Ok(profile
            .values()
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let start = v as usize * d;
                &self.feature_vectors[k][start..start + d]
            })
            .collect())
    }

    /// Element-wise product of the user's extended feature vectors.
    pub fn compose_user_vector(&self, profile: &UserProfile) -> Result<Vec<f64>> {
        let vectors = self.profile_vectors(profile)?;
        Ok(compose_from(&self.layout, &vectors))
    }

    pub fn score(&self, profile: &UserProfile, variant: usize) -> Result<f64> {
        let item = self.variant_vector(variant)?;
        let user = self.compose_user_vector(profile)?;
        Ok(dot(&user, item))
    }

    /// Scores of every variant for one user, indexed by variant id.
    pub fn scores(&self, profile: &UserProfile) -> Result<Vec<f64>> {
        let user = self.compose_user_vector(profile)?;
        Ok(self
            .variant_vectors
            .chunks_exact(self.layout.total_dim())
            .map(|item| dot(&user, item))
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.variant_vectors.iter().all(|x| x.is_finite())
            && self.feature_vectors.iter().flatten().all(|x| x.is_finite())
    }
}

pub(crate) fn compose_from(layout: &IndexLayout, vectors: &[&[f64]]) -> Vec<f64> {
    layout
        .owners()
        .iter()
        .map(|owner| match *owner {
            SlotOwner::Standalone { feature, pos } => vectors[feature][pos],
            SlotOwner::Pair {
                first,
                first_pos,
                second,
                second_pos,
            } => vectors[first][first_pos] * vectors[second][second_pos],
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Places a d-length value vector of feature `feature` into the full latent
/// space, filling every index the feature does not own with 1.
pub fn extend_feature_vector(v: &[f64], feature: usize, layout: &IndexLayout) -> Result<Vec<f64>> {
    if v.len() != layout.feature_dim() {
        return Err(Error::LengthMismatch {
            expected: layout.feature_dim(),
            found: v.len(),
        });
    }
    if feature >= layout.num_features() {
        return Err(Error::InvalidDimensions(format!("no feature {}", feature)));
    }
    let mut out = vec![1.0; layout.total_dim()];
    for (&idx, &x) in layout.feature_slots(feature).iter().zip(v) {
        out[idx] = x;
    }
    Ok(out)
}

/// Largest score magnitude for which the softmax click probability of every
/// pair stays within (0, 1]: `0.5 * ln(n_total / n_clicks)`.
pub fn score_bound(n_total: u64, n_clicks: u64) -> Result<f64> {
    if n_clicks == 0 || n_clicks > n_total {
        return Err(Error::InvalidCounts(format!(
            "need 0 < clicks <= total, got clicks={} total={}",
            n_clicks, n_total
        )));
    }
    Ok(0.5 * (n_total as f64 / n_clicks as f64).ln())
}
