//! The contract shared by every algorithm the replay harness drives.

use crate::error::Result;
use crate::schema::UserProfile;
use crate::trainer::Observation;

pub trait RankingAlgorithm {
    fn name(&self) -> &str;

    fn num_variants(&self) -> usize;

    /// Every variant id, best first.
    fn rank(&mut self, profile: &UserProfile) -> Result<Vec<usize>>;

    fn observe(&mut self, obs: &Observation) -> Result<()>;
}

impl<T: RankingAlgorithm + ?Sized> RankingAlgorithm for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn num_variants(&self) -> usize {
        (**self).num_variants()
    }

    fn rank(&mut self, profile: &UserProfile) -> Result<Vec<usize>> {
        (**self).rank(profile)
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        (**self).observe(obs)
    }
}

/// Orders variant ids by descending score, ties by ascending id.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids
}

/// 1-based position of `variant` in a ranking.
pub fn rank_of(ranking: &[usize], variant: usize) -> Option<usize> {
    ranking.iter().position(|&v| v == variant).map(|p| p + 1)
}
