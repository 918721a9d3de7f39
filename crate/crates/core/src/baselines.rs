//! Non-personalized baselines: decayed global popularity, and random order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ranking::{rank_by_score, RankingAlgorithm};
use crate::schema::UserProfile;
use crate::trainer::Observation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopularityConfig {
    pub decay_factor: f64,
    pub decay_cadence: u64,
    /// Pseudo-clicks every variant starts with.
    pub prior_clicks: f64,
    /// Pseudo-impressions every variant starts with.
    pub prior_impressions: f64,
}

impl Default for PopularityConfig {
    fn default() -> Self {
        PopularityConfig {
            decay_factor: 0.5,
            decay_cadence: 1_000_000,
            prior_clicks: 1.0,
            prior_impressions: 100.0,
        }
    }
}

impl PopularityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decay factor must lie in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.decay_cadence == 0 {
            return Err(Error::InvalidConfig("decay cadence must be at least 1".into()));
        }
        if !(self.prior_clicks >= 0.0 && self.prior_impressions > 0.0)
            || self.prior_clicks > self.prior_impressions
        {
            return Err(Error::InvalidConfig(
                "popularity prior needs 0 <= clicks <= impressions and impressions > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Ranks variants by decayed historical CTR.
///
/// The smoothing prior lives inside the accumulators and decays with them,
/// so scaling every accumulator by one factor never reorders variants.
#[derive(Debug, Clone, PartialEq)]
pub struct Popularity {
    clicks: Vec<f64>,
    impressions: Vec<f64>,
    since_decay: u64,
    config: PopularityConfig,
}

impl Popularity {
    pub fn new(num_variants: usize, config: PopularityConfig) -> Result<Self> {
        config.validate()?;
        if num_variants == 0 {
            return Err(Error::InvalidDimensions("at least one ad variant is required".into()));
        }
        Ok(Popularity {
            clicks: vec![config.prior_clicks; num_variants],
            impressions: vec![config.prior_impressions; num_variants],
            since_decay: 0,
            config,
        })
    }

    pub fn ctr(&self, variant: usize) -> f64 {
        self.clicks[variant] / self.impressions[variant]
    }

    pub fn ctrs(&self) -> Vec<f64> {
        (0..self.clicks.len()).map(|v| self.ctr(v)).collect()
    }

    pub fn clicks(&self) -> &[f64] {
        &self.clicks
    }

    pub fn impressions(&self) -> &[f64] {
        &self.impressions
    }

    /// Multiplies every accumulator by `factor`.
    pub fn decay(&mut self, factor: f64) {
        self.clicks.iter_mut().for_each(|c| *c *= factor);
        self.impressions.iter_mut().for_each(|i| *i *= factor);
    }

    pub fn ranking(&self) -> Vec<usize> {
        rank_by_score(&self.ctrs())
    }
}

impl RankingAlgorithm for Popularity {
    fn name(&self) -> &str {
        "popularity"
    }

    fn num_variants(&self) -> usize {
        self.clicks.len()
    }

    fn rank(&mut self, _profile: &UserProfile) -> Result<Vec<usize>> {
        Ok(self.ranking())
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        if obs.variant >= self.clicks.len() {
            return Err(Error::UnknownVariant(obs.variant));
        }
        self.impressions[obs.variant] += 1.0;
        if obs.click {
            self.clicks[obs.variant] += 1.0;
        }
        self.since_decay += 1;
        if self.since_decay == self.config.decay_cadence {
            self.since_decay = 0;
            self.decay(self.config.decay_factor);
        }
        Ok(())
    }
}

/// Ranks variants by a fresh uniform permutation on every request.
#[derive(Debug, Clone)]
pub struct RandomRanker {
    num_variants: usize,
    rng: ChaCha8Rng,
}

impl RandomRanker {
    pub fn new(num_variants: usize, seed: u64) -> Result<Self> {
        if num_variants == 0 {
            return Err(Error::InvalidDimensions("at least one ad variant is required".into()));
        }
        Ok(RandomRanker {
            num_variants,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

/// Expected MRR of a uniformly random ranking over `l` variants, `H_l / l`.
pub fn random_expected_mrr(l: usize) -> f64 {
    (1..=l).map(|r| 1.0 / r as f64).sum::<f64>() / l as f64
}

impl RankingAlgorithm for RandomRanker {
    fn name(&self) -> &str {
        "random"
    }

    fn num_variants(&self) -> usize {
        self.num_variants
    }

    fn rank(&mut self, _profile: &UserProfile) -> Result<Vec<usize>> {
        let mut ids: Vec<usize> = (0..self.num_variants).collect();
        ids.shuffle(&mut self.rng);
        Ok(ids)
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        if obs.variant >= self.num_variants {
            return Err(Error::UnknownVariant(obs.variant));
        }
        Ok(())
    }
}
