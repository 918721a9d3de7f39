//! The online recommender: a model plus the trainer state that drives it.

use crate::error::Result;
use crate::layout::IndexLayout;
use crate::model::{Model, DEFAULT_INIT_SPREAD};
use crate::ranking::{rank_by_score, RankingAlgorithm};
use crate::schema::{FeatureSchema, UserProfile};
use crate::trainer::{self, Observation, TrainerConfig, TrainerState};

/// Latent layout and initialization parameters for a fresh model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub standalone: usize,
    pub overlap: usize,
    pub bound: f64,
    pub init_spread: f64,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            standalone: 2,
            overlap: 4,
            bound: 1.0,
            init_spread: DEFAULT_INIT_SPREAD,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffSet {
    model: Model,
    state: TrainerState,
    config: TrainerConfig,
}

impl OffSet {
    pub fn new(
        schema: FeatureSchema,
        num_variants: usize,
        params: &ModelParams,
        config: TrainerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let layout = IndexLayout::build(
            schema.num_features(),
            params.standalone,
            params.overlap,
            params.seed,
        )?;
        let mut model = Model::random(schema, layout, num_variants, params.init_spread, params.seed)?;
        model.set_bound(params.bound)?;
        Ok(Self::from_parts(model, TrainerState::new(&config), config))
    }

    pub fn from_parts(model: Model, state: TrainerState, config: TrainerConfig) -> Self {
        OffSet { model, state, config }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn into_parts(self) -> (Model, TrainerState, TrainerConfig) {
        (self.model, self.state, self.config)
    }

    pub fn train(&mut self, obs: &Observation) -> Result<()> {
        trainer::update(&mut self.model, &mut self.state, obs, &self.config)
    }
}

impl RankingAlgorithm for OffSet {
    fn name(&self) -> &str {
        "offset"
    }

    fn num_variants(&self) -> usize {
        self.model.num_variants()
    }

    fn rank(&mut self, profile: &UserProfile) -> Result<Vec<usize>> {
        Ok(rank_by_score(&self.model.scores(profile)?))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        self.train(obs)
    }
}
