//! One-pass stochastic gradient ascent on the score. Clicks push the score
//! up and non-clicks push it down; `mu = -|C| / |NC|` is smoothed online and
//! either fixes the ratio of the two steps or supplies the click rate for
//! per-pair click probabilities.

use crate::error::{Error, Result};
use crate::layout::SlotOwner;
use crate::model::{compose_from, dot, Model};
use crate::schema::UserProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleMode {
    Off,
    LinfClip,
}

/// How the size of a step depends on the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Click steps `alpha`, non-click steps `alpha * mu`.
    ConstantRatio,
    /// Click steps `alpha * (1 - pc)`, non-click steps `-alpha * pc`, where
    /// `pc` is the pair's click probability under the current scores.
    ClickProbability,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub step_mode: StepMode,
    pub alpha: f64,
    pub gamma: f64,
    pub mu_update_cadence: u64,
    pub mu_initial: f64,
    pub rescale_mode: RescaleMode,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            step_mode: StepMode::ClickProbability,
            alpha: 0.05,
            gamma: 0.02,
            mu_update_cadence: 1000,
            mu_initial: -0.01,
            rescale_mode: RescaleMode::Off,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.mu_update_cadence == 0 {
            return Err(Error::InvalidConfig("mu update cadence must be at least 1".into()));
        }
        if !(self.mu_initial < 0.0 && self.mu_initial.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "initial mu must be negative, got {}",
                self.mu_initial
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerState {
    pub mu: f64,
    pub window_clicks: u64,
    pub window_nonclicks: u64,
    pub total_clicks: u64,
    pub total_impressions: u64,
    /// Log of the smoothed mean of `exp(score)` over impressions; negative
    /// infinity until the first click-probability step.
    pub log_norm: f64,
    /// Log-sum-exp of the scores seen in the current window.
    pub window_log_sum: f64,
}

impl TrainerState {
    pub fn new(cfg: &TrainerConfig) -> Self {
        TrainerState {
            mu: cfg.mu_initial,
            window_clicks: 0,
            window_nonclicks: 0,
            total_clicks: 0,
            total_impressions: 0,
            log_norm: f64::NEG_INFINITY,
            window_log_sum: f64::NEG_INFINITY,
        }
    }

    pub fn window_len(&self) -> u64 {
        self.window_clicks + self.window_nonclicks
    }

    /// Overall click rate implied by `mu`.
    pub fn click_rate(&self) -> f64 {
        -self.mu / (1.0 - self.mu)
    }

    /// Click probability of a pair with the given score, capped at 1.
    pub fn click_probability(&self, score: f64) -> f64 {
        if self.log_norm == f64::NEG_INFINITY {
            return self.click_rate();
        }
        (self.click_rate() * (score - self.log_norm).exp()).min(1.0)
    }

    fn record(&mut self, click: bool) {
        self.total_impressions += 1;
        if click {
            self.total_clicks += 1;
            self.window_clicks += 1;
        } else {
            self.window_nonclicks += 1;
        }
    }
}

/// One logged impression: who saw which variant, and whether they clicked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub timestamp: u64,
    pub profile: UserProfile,
    pub variant: usize,
    pub click: bool,
}

/// `-n_clicks / n_nonclicks`.
pub fn step_ratio(n_clicks: u64, n_nonclicks: u64) -> Result<f64> {
    if n_nonclicks == 0 {
        return Err(Error::InvalidCounts("step ratio needs at least one non-click".into()));
    }
    Ok(-(n_clicks as f64) / n_nonclicks as f64)
}

/// Smooths the current window's step ratio into `mu` and resets the window.
///
/// A window without non-clicks leaves `mu` untouched and reports
/// [`Error::EmptyWindow`]; the window is reset either way. The same holds when
/// the smoothed value would not stay negative, which only happens with
/// `gamma = 1` and a click-free window.
pub fn update_mu(state: &mut TrainerState, cfg: &TrainerConfig) -> Result<f64> {
    let window = step_ratio(state.window_clicks, state.window_nonclicks);
    state.window_clicks = 0;
    state.window_nonclicks = 0;
    let window = window.map_err(|_| Error::EmptyWindow)?;
    let next = cfg.gamma * window + (1.0 - cfg.gamma) * state.mu;
    if next >= 0.0 {
        return Err(Error::EmptyWindow);
    }
    state.mu = next;
    Ok(next)
}

/// Folds the window's mean `exp(score)` into the normalizer with weight
/// `gamma` and resets the window sum. Does nothing for an empty window.
pub fn refresh_normalizer(state: &mut TrainerState, cfg: &TrainerConfig, window_len: u64) {
    let sum = std::mem::replace(&mut state.window_log_sum, f64::NEG_INFINITY);
    if window_len == 0 || sum == f64::NEG_INFINITY {
        return;
    }
    let window = sum - (window_len as f64).ln();
    state.log_norm = if state.log_norm == f64::NEG_INFINITY || cfg.gamma == 1.0 {
        window
    } else {
        log_add_exp(cfg.gamma.ln() + window, (1.0 - cfg.gamma).ln() + state.log_norm)
    };
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Gradient of the score of (profile, variant) with respect to the variant
/// vector and each of the user's feature value vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub variant: Vec<f64>,
    pub features: Vec<Vec<f64>>,
}

pub fn score_gradient(model: &Model, profile: &UserProfile, variant: usize) -> Result<ScoreGradient> {
    let item = model.variant_vector(variant)?;
    let vectors = model.profile_vectors(profile)?;
    let layout = model.layout();
    let user = compose_from(layout, &vectors);

    let d = layout.feature_dim();
    let mut features = vec![vec![0.0; d]; layout.num_features()];
    for (idx, owner) in layout.owners().iter().enumerate() {
        match *owner {
            SlotOwner::Standalone { feature, pos } => features[feature][pos] = item[idx],
            SlotOwner::Pair {
                first,
                first_pos,
                second,
                second_pos,
            } => {
                features[first][first_pos] = item[idx] * vectors[second][second_pos];
                features[second][second_pos] = item[idx] * vectors[first][first_pos];
            }
        }
    }
    Ok(ScoreGradient {
        variant: user,
        features,
    })
}

/// One online step for one observation.
///
/// Every parameter moves along the score gradient by the step that
/// [`StepMode`] assigns to the observation. All gradients are taken at the
/// pre-update parameters. Every `mu_update_cadence` impressions `mu` and
/// the click-probability normalizer are refreshed and, in
/// [`RescaleMode::LinfClip`], the model rescaled.
pub fn update(
    model: &mut Model,
    state: &mut TrainerState,
    obs: &Observation,
    cfg: &TrainerConfig,
) -> Result<()> {
    let grad = score_gradient(model, &obs.profile, obs.variant)?;
    let step = match cfg.step_mode {
        StepMode::ConstantRatio => {
            if obs.click {
                cfg.alpha
            } else {
                cfg.alpha * state.mu
            }
        }
        StepMode::ClickProbability => {
            let score = dot(&grad.variant, model.variant_vector(obs.variant)?);
            if state.log_norm == f64::NEG_INFINITY {
                state.log_norm = score;
            }
            state.window_log_sum = log_add_exp(state.window_log_sum, score);
            let pc = state.click_probability(score);
            if obs.click {
                cfg.alpha * (1.0 - pc)
            } else {
                -cfg.alpha * pc
            }
        }
    };

    axpy(step, &grad.variant, model.variant_vector_mut(obs.variant)?);
    for (k, (&value, g)) in obs.profile.values().iter().zip(&grad.features).enumerate() {
        axpy(step, g, model.feature_vector_mut(k, value)?);
    }

    state.record(obs.click);
    if state.window_len() >= cfg.mu_update_cadence {
        refresh_normalizer(state, cfg, state.window_len());
        // a degenerate window keeps the previous mu
        let _ = update_mu(state, cfg);
        if cfg.rescale_mode == RescaleMode::LinfClip {
            rescale(model);
        }
    }
    Ok(())
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Scales each factor family whose max-norm exceeds the model bound back
/// down to it. A family is either all variant vectors or all value vectors
/// of one feature. Shrinking a feature family by `c` multiplies the variant
/// entries at that feature's slots by `1 / c`, so scores are untouched; the
/// variant family is clipped last and scales every score by one common
/// positive factor. Every user's ranking is therefore unchanged.
pub fn rescale(model: &mut Model) {
    let bound = model.bound();
    let layout = model.layout().clone();
    let dim = layout.total_dim();
    for k in 0..layout.num_features() {
        let factor = clip_factor(model.feature_family(k), bound);
        if factor < 1.0 {
            model.feature_family_mut(k).iter_mut().for_each(|x| *x *= factor);
            let slots = layout.feature_slots(k);
            for item in model.variant_family_mut().chunks_mut(dim) {
                for &idx in slots {
                    item[idx] /= factor;
                }
            }
        }
    }
    let factor = clip_factor(model.variant_family(), bound);
    if factor < 1.0 {
        model.variant_family_mut().iter_mut().for_each(|x| *x *= factor);
    }
}

fn clip_factor(family: &[f64], bound: f64) -> f64 {
    let max = family.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max > bound {
        bound / max
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::IndexLayout;
    use crate::schema::FeatureSchema;

    fn obs(profile: Vec<u32>, variant: usize, click: bool) -> Observation {
        Observation {
            timestamp: 1,
            profile: UserProfile::new(profile),
            variant,
            click,
        }
    }

    fn ratio() -> TrainerConfig {
        TrainerConfig { step_mode: StepMode::ConstantRatio, ..Default::default() }
    }

    fn scalar_model(u: f64, a: f64) -> Model {
        let schema = FeatureSchema::with_cardinalities(&[1]).unwrap();
        let layout = IndexLayout::build(1, 1, 0, 0).unwrap();
        Model::from_parts(schema, layout, vec![vec![u]], vec![a], 1, 1.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainerConfig::default().validate().is_ok());
        let bad = [
            TrainerConfig { alpha: 0.0, ..Default::default() },
            TrainerConfig { gamma: 0.0, ..Default::default() },
            TrainerConfig { gamma: 1.5, ..Default::default() },
            TrainerConfig { mu_update_cadence: 0, ..Default::default() },
            TrainerConfig { mu_initial: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{:?}", cfg);
        }
    }

    #[test]
    fn scalar_click_step() {
        let mut m = scalar_model(2.0, 3.0);
        let cfg = TrainerConfig { alpha: 0.1, ..ratio() };
        let mut st = TrainerState::new(&cfg);
        update(&mut m, &mut st, &obs(vec![0], 0, true), &cfg).unwrap();
        assert!((m.variant_vector(0).unwrap()[0] - 3.2).abs() < 1e-15);
        assert!((m.feature_vector(0, 0).unwrap()[0] - 2.3).abs() < 1e-15);
        assert_eq!(st.total_clicks, 1);
        assert_eq!(st.total_impressions, 1);
    }

    #[test]
    fn scalar_nonclick_step_uses_mu() {
        let mut m = scalar_model(2.0, 3.0);
        let cfg = TrainerConfig { alpha: 0.1, mu_initial: -0.5, ..ratio() };
        let mut st = TrainerState::new(&cfg);
        update(&mut m, &mut st, &obs(vec![0], 0, false), &cfg).unwrap();
        assert!((m.variant_vector(0).unwrap()[0] - (3.0 - 0.05 * 2.0)).abs() < 1e-15);
        assert!((m.feature_vector(0, 0).unwrap()[0] - (2.0 - 0.05 * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_leaves_model_unchanged() {
        let schema = FeatureSchema::with_cardinalities(&[2, 3]).unwrap();
        let layout = IndexLayout::build(2, 1, 2, 4).unwrap();
        let m0 = Model::random(schema, layout, 3, 0.1, 4).unwrap();
        let mut m = m0.clone();
        let cfg = TrainerConfig { alpha: 0.0, ..Default::default() };
        let mut st = TrainerState::new(&cfg);
        update(&mut m, &mut st, &obs(vec![1, 2], 2, true), &cfg).unwrap();
        assert_eq!(m, m0);
    }

    #[test]
    fn update_rejects_bad_observations_without_mutation() {
        let mut m = scalar_model(1.0, 1.0);
        let before = m.clone();
        let cfg = TrainerConfig::default();
        let mut st = TrainerState::new(&cfg);
        assert!(matches!(
            update(&mut m, &mut st, &obs(vec![0], 1, true), &cfg),
            Err(Error::UnknownVariant(1))
        ));
        assert!(matches!(
            update(&mut m, &mut st, &obs(vec![4], 0, true), &cfg),
            Err(Error::UnknownFeatureValue { .. })
        ));
        assert_eq!(m, before);
        assert_eq!(st.total_impressions, 0);
    }

    #[test]
    fn step_ratio_values() {
        assert_eq!(step_ratio(0, 10).unwrap(), 0.0);
        assert!((step_ratio(100, 900).unwrap() + 1.0 / 9.0).abs() < 1e-15);
        assert!((step_ratio(26_905, 7_973_095).unwrap() + 0.003375).abs() < 1e-6);
        assert!(matches!(step_ratio(3, 0), Err(Error::InvalidCounts(_))));
    }

    #[test]
    fn mu_fixed_point() {
        let cfg = TrainerConfig::default();
        let mut st = TrainerState { mu: -1.0 / 9.0, window_clicks: 100, window_nonclicks: 900, ..TrainerState::new(&cfg) };
        update_mu(&mut st, &cfg).unwrap();
        assert!((st.mu + 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(st.window_len(), 0);
    }

    #[test]
    fn mu_smoothing_arithmetic() {
        let cfg = TrainerConfig { gamma: 0.02, ..Default::default() };
        let mut st = TrainerState { mu: -0.1, window_clicks: 1, window_nonclicks: 5, ..TrainerState::new(&cfg) };
        update_mu(&mut st, &cfg).unwrap();
        assert!((st.mu + 0.102).abs() < 1e-15);
    }

    #[test]
    fn mu_converges_geometrically() {
        // constant click rate r = 0.01: 10 clicks per 1000 impressions
        let cfg = TrainerConfig::default();
        let mut st = TrainerState::new(&cfg);
        let target = -10.0 / 990.0;
        for n in 1..=500 {
            st.window_clicks = 10;
            st.window_nonclicks = 990;
            update_mu(&mut st, &cfg).unwrap();
            let closed = target + (cfg.mu_initial - target) * (1.0 - cfg.gamma).powi(n);
            assert!((st.mu - closed).abs() < 1e-12, "refresh {}: {} vs {}", n, st.mu, closed);
        }
        assert!((st.mu - target).abs() < 1e-6);
    }

    #[test]
    fn degenerate_windows_keep_mu() {
        let cfg = TrainerConfig::default();
        let mut st = TrainerState { window_clicks: 7, ..TrainerState::new(&cfg) };
        assert!(matches!(update_mu(&mut st, &cfg), Err(Error::EmptyWindow)));
        assert_eq!(st.mu, cfg.mu_initial);
        assert_eq!(st.window_len(), 0);
        assert!(matches!(update_mu(&mut st, &cfg), Err(Error::EmptyWindow)));

        let full = TrainerConfig { gamma: 1.0, ..Default::default() };
        let mut st = TrainerState { window_nonclicks: 10, ..TrainerState::new(&full) };
        assert!(update_mu(&mut st, &full).is_err());
        assert!(st.mu < 0.0);
    }

    #[test]
    fn refresh_happens_on_cadence() {
        let mut m = scalar_model(0.5, 0.5);
        let cfg = TrainerConfig { alpha: 1e-6, mu_update_cadence: 4, gamma: 0.5, ..ratio() };
        let mut st = TrainerState::new(&cfg);
        for i in 0..3 {
            update(&mut m, &mut st, &obs(vec![0], 0, i == 0), &cfg).unwrap();
        }
        assert_eq!(st.mu, cfg.mu_initial);
        update(&mut m, &mut st, &obs(vec![0], 0, false), &cfg).unwrap();
        assert!((st.mu - (0.5 * (-1.0 / 3.0) + 0.5 * cfg.mu_initial)).abs() < 1e-15);
        assert_eq!(st.window_len(), 0);
        assert_eq!(st.total_impressions, 4);
    }

    #[test]
    fn rescale_identity_below_bound() {
        let schema = FeatureSchema::with_cardinalities(&[2, 2]).unwrap();
        let layout = IndexLayout::build(2, 1, 1, 0).unwrap();
        let m0 = Model::random(schema, layout, 3, 0.3, 1).unwrap();
        let mut m = m0.clone();
        rescale(&mut m);
        assert_eq!(m, m0);
    }

    #[test]
    fn rescale_halves_variant_family() {
        let schema = FeatureSchema::with_cardinalities(&[2, 2]).unwrap();
        let layout = IndexLayout::build(2, 1, 1, 0).unwrap();
        let mut m = Model::random(schema, layout, 3, 0.3, 1).unwrap();
        m.variant_vector_mut(1).unwrap()[0] = 2.0;
        let before = m.clone();
        let p = UserProfile::new(vec![1, 0]);
        let s0 = before.scores(&p).unwrap();
        rescale(&mut m);
        for (a, b) in m.variant_family().iter().zip(before.variant_family()) {
            assert_eq!(*a, b * 0.5);
        }
        assert_eq!(m.feature_family(0), before.feature_family(0));
        let s1 = m.scores(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((s1[i] / s1[j] - s0[i] / s0[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_click_probability_step_uses_the_click_rate() {
        // before any refresh every pair is assumed to click at the overall rate
        let mut m = scalar_model(2.0, 3.0);
        let cfg = TrainerConfig { alpha: 0.1, mu_initial: -0.25, ..Default::default() };
        let mut st = TrainerState::new(&cfg);
        update(&mut m, &mut st, &obs(vec![0], 0, true), &cfg).unwrap();
        let step = 0.1 * (1.0 - 0.2);
        assert!((m.variant_vector(0).unwrap()[0] - (3.0 + step * 2.0)).abs() < 1e-15);
        assert!((m.feature_vector(0, 0).unwrap()[0] - (2.0 + step * 3.0)).abs() < 1e-15);
        assert_eq!(st.log_norm, 6.0);

        let mut m = scalar_model(2.0, 3.0);
        let mut st = TrainerState::new(&cfg);
        update(&mut m, &mut st, &obs(vec![0], 0, false), &cfg).unwrap();
        assert!((m.variant_vector(0).unwrap()[0] - (3.0 - 0.1 * 0.2 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn click_probability_tracks_relative_score() {
        let cfg = TrainerConfig { mu_initial: -0.01, ..Default::default() };
        let st = TrainerState { log_norm: 1.0, ..TrainerState::new(&cfg) };
        let rate = 0.01 / 1.01;
        assert!((st.click_probability(1.0) - rate).abs() < 1e-15);
        assert!((st.click_probability(1.0 + 2f64.ln()) - 2.0 * rate).abs() < 1e-15);
        assert_eq!(st.click_probability(100.0), 1.0);
    }

    #[test]
    fn normalizer_smoothing() {
        let cfg = TrainerConfig { gamma: 0.25, ..Default::default() };
        let mut st = TrainerState { log_norm: 0.0, ..TrainerState::new(&cfg) };
        // window scores ln 2 and ln 4: mean exp is 3
        st.window_log_sum = log_add_exp(2f64.ln(), 4f64.ln());
        refresh_normalizer(&mut st, &cfg, 2);
        assert!((st.log_norm.exp() - (0.25 * 3.0 + 0.75 * 1.0)).abs() < 1e-12);
        assert_eq!(st.window_log_sum, f64::NEG_INFINITY);

        let before = st.log_norm;
        refresh_normalizer(&mut st, &cfg, 0);
        assert_eq!(st.log_norm, before);
    }

    #[test]
    fn log_add_exp_is_stable() {
        assert!((log_add_exp(2f64.ln(), 3f64.ln()) - 5f64.ln()).abs() < 1e-15);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert_eq!(log_add_exp(1.5, f64::NEG_INFINITY), 1.5);
    }

    #[test]
    fn click_probability_steps_are_self_limiting() {
        // a pair that clicks at the overall rate keeps a bounded score
        let mut m = scalar_model(0.5, 0.5);
        let cfg = TrainerConfig { alpha: 0.05, mu_initial: -0.1 / 0.9, ..Default::default() };
        let mut st = TrainerState::new(&cfg);
        for t in 0..200_000u64 {
            update(&mut m, &mut st, &obs(vec![0], 0, t % 10 == 0), &cfg).unwrap();
        }
        let s = m.scores(&UserProfile::new(vec![0])).unwrap()[0];
        assert!(s.is_finite() && s.abs() < 10.0, "{}", s);
        assert!((st.click_probability(s) - 0.1).abs() < 0.05);
    }

    #[test]
    fn feature_clip_keeps_scores_up_to_a_common_factor() {
        let schema = FeatureSchema::with_cardinalities(&[3, 2, 2]).unwrap();
        let layout = IndexLayout::build(3, 2, 2, 5).unwrap();
        let mut m = Model::random(schema, layout, 4, 0.1, 2).unwrap();
        m.feature_vector_mut(0, 2).unwrap()[1] = 4.0;
        m.feature_vector_mut(2, 0).unwrap()[3] = -3.0;
        let before = m.clone();
        rescale(&mut m);
        for k in 0..3 {
            assert!(m.feature_family(k).iter().all(|x| x.abs() <= 1.0 + 1e-12));
        }
        assert!(m.variant_family().iter().all(|x| x.abs() <= 1.0 + 1e-12));
        let p = UserProfile::new(vec![2, 1, 0]);
        let (s0, s1) = (before.scores(&p).unwrap(), m.scores(&p).unwrap());
        let ratio = s1[0] / s0[0];
        assert!(ratio > 0.0);
        for (a, b) in s0.iter().zip(&s1) {
            assert!((b - ratio * a).abs() < 1e-12);
        }
    }
}
