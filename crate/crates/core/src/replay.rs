//! Temporal replay of a click log through ranking algorithms, scored by the
//! mean reciprocal rank of the clicked variant.
//!
//! Only clicks are scored. Every scored click is ranked by each algorithm
//! before any algorithm learns from it; every observation, scored or not,
//! is then fed to each algorithm's `observe`.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::ranking::{rank_of, RankingAlgorithm};
use crate::trainer::Observation;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Mean of a list of reciprocal ranks.
pub fn mrr(reciprocal_ranks: &[f64]) -> Result<f64> {
    if reciprocal_ranks.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(reciprocal_ranks.iter().sum::<f64>() / reciprocal_ranks.len() as f64)
}

/// Smallest MRR difference that Hoeffding's inequality deems significant
/// for two means of `n_clicks` values in [0, 1] at the given confidence.
pub fn hoeffding_gap(n_clicks: u64, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    if n_clicks == 0 {
        return Err(Error::InvalidCounts("significance gap needs at least one click".into()));
    }
    let eps = ((2.0 / (1.0 - confidence)).ln() / (2.0 * n_clicks as f64)).sqrt();
    Ok(2.0 * eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Warmup {
    Observations(u64),
    Clicks(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// A training log replayed for learning only, then a separate test log.
    TrainThenTest,
    /// A single log whose head is the warm-up.
    OnlineInterleaved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayProtocol {
    pub warmup: Warmup,
    pub mode: EvalMode,
    pub confidence: f64,
}

impl Default for ReplayProtocol {
    fn default() -> Self {
        ReplayProtocol {
            warmup: Warmup::Clicks(0),
            mode: EvalMode::OnlineInterleaved,
            confidence: DEFAULT_CONFIDENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmReport {
    pub name: String,
    pub clicks_scored: u64,
    /// `rank_histogram[r - 1]` counts scored clicks ranked at position r.
    pub rank_histogram: Vec<u64>,
    pub mrr: Option<f64>,
    pub significance_gap: Option<f64>,
    pub runtime: Duration,
}

impl AlgorithmReport {
    fn new(name: &str, num_variants: usize) -> Self {
        AlgorithmReport {
            name: name.to_string(),
            clicks_scored: 0,
            rank_histogram: vec![0; num_variants],
            mrr: None,
            significance_gap: None,
            runtime: Duration::ZERO,
        }
    }

    fn finalize(&mut self, confidence: f64) {
        self.mrr = histogram_mrr(&self.rank_histogram);
        self.significance_gap = hoeffding_gap(self.clicks_scored, confidence).ok();
    }
}

fn histogram_mrr(histogram: &[u64]) -> Option<f64> {
    let n: u64 = histogram.iter().sum();
    if n == 0 {
        return None;
    }
    let total: f64 = histogram
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / (i + 1) as f64)
        .sum();
    Some(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub train_observations: u64,
    pub warmup_observations: u64,
    pub test_observations: u64,
    pub test_clicks: u64,
    pub confidence: f64,
    pub algorithms: Vec<AlgorithmReport>,
}

impl ReplayReport {
    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| a.name == name)
    }

    /// Report of two consecutive replays, as if they had been one.
    pub fn merge(&self, later: &ReplayReport) -> Result<ReplayReport> {
        if self.algorithms.len() != later.algorithms.len()
            || self
                .algorithms
                .iter()
                .zip(&later.algorithms)
                .any(|(a, b)| a.name != b.name || a.rank_histogram.len() != b.rank_histogram.len())
        {
            return Err(Error::SchemaMismatch("reports cover different algorithms".into()));
        }
        let algorithms = self
            .algorithms
            .iter()
            .zip(&later.algorithms)
            .map(|(a, b)| {
                let mut merged = AlgorithmReport {
                    name: a.name.clone(),
                    clicks_scored: a.clicks_scored + b.clicks_scored,
                    rank_histogram: a
                        .rank_histogram
                        .iter()
                        .zip(&b.rank_histogram)
                        .map(|(x, y)| x + y)
                        .collect(),
                    mrr: None,
                    significance_gap: None,
                    runtime: a.runtime + b.runtime,
                };
                merged.finalize(self.confidence);
                merged
            })
            .collect();
        Ok(ReplayReport {
            train_observations: self.train_observations + later.train_observations,
            warmup_observations: self.warmup_observations + later.warmup_observations,
            test_observations: self.test_observations + later.test_observations,
            test_clicks: self.test_clicks + later.test_clicks,
            confidence: self.confidence,
            algorithms,
        })
    }

    /// Key-value text: run totals, then one section per algorithm.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "train_observations = {}", self.train_observations);
        let _ = writeln!(out, "warmup_observations = {}", self.warmup_observations);
        let _ = writeln!(out, "test_observations = {}", self.test_observations);
        let _ = writeln!(out, "test_clicks = {}", self.test_clicks);
        let _ = writeln!(out, "confidence = {}", self.confidence);
        for a in &self.algorithms {
            let _ = writeln!(out, "\n[{}]", a.name);
            let _ = writeln!(out, "mrr = {}", fmt_opt(a.mrr));
            let _ = writeln!(out, "clicks_scored = {}", a.clicks_scored);
            let _ = writeln!(out, "significance_gap = {}", fmt_opt(a.significance_gap));
            let _ = writeln!(out, "runtime_secs = {:.3}", a.runtime.as_secs_f64());
            let hist: Vec<String> = a.rank_histogram.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "rank_histogram = {}", hist.join(","));
        }
        out
    }

    /// Tab-separated (algorithm, mrr, clicks_scored, gap) table with header.
    pub fn to_table(&self) -> String {
        let mut out = String::from("algorithm\tmrr\tclicks_scored\tgap\n");
        for a in &self.algorithms {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                a.name,
                fmt_opt(a.mrr),
                a.clicks_scored,
                fmt_opt(a.significance_gap)
            );
        }
        out
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{:.6}", v))
}

/// Incremental replay driver. Feed training-only observations with
/// [`Replayer::train`] and the evaluated stream with [`Replayer::push`].
pub struct Replayer<'a> {
    algorithms: Vec<&'a mut dyn RankingAlgorithm>,
    reports: Vec<AlgorithmReport>,
    protocol: ReplayProtocol,
    num_variants: usize,
    last_timestamp: Option<u64>,
    in_test_phase: bool,
    warmup_seen: u64,
    warmup_done: bool,
    train_observations: u64,
    warmup_observations: u64,
    test_observations: u64,
    test_clicks: u64,
}

impl<'a> Replayer<'a> {
    pub fn new(algorithms: Vec<&'a mut dyn RankingAlgorithm>, protocol: ReplayProtocol) -> Result<Self> {
        if !(protocol.confidence > 0.0 && protocol.confidence < 1.0) {
            return Err(Error::InvalidConfidence(protocol.confidence));
        }
        let num_variants = algorithms
            .first()
            .map(|a| a.num_variants())
            .ok_or_else(|| Error::InvalidConfig("no algorithms to replay".into()))?;
        if algorithms.iter().any(|a| a.num_variants() != num_variants) {
            return Err(Error::SchemaMismatch(
                "algorithms disagree on the number of variants".into(),
            ));
        }
        let reports = algorithms
            .iter()
            .map(|a| AlgorithmReport::new(a.name(), num_variants))
            .collect();
        let warmup_done = matches!(protocol.warmup, Warmup::Observations(0) | Warmup::Clicks(0));
        Ok(Replayer {
            algorithms,
            reports,
            protocol,
            num_variants,
            last_timestamp: None,
            in_test_phase: false,
            warmup_seen: 0,
            warmup_done,
            train_observations: 0,
            warmup_observations: 0,
            test_observations: 0,
            test_clicks: 0,
        })
    }

    fn check(&mut self, obs: &Observation) -> Result<()> {
        if let Some(prev) = self.last_timestamp {
            if obs.timestamp < prev {
                return Err(Error::UnorderedLog {
                    previous: prev,
                    found: obs.timestamp,
                });
            }
        }
        if obs.variant >= self.num_variants {
            return Err(Error::UnknownVariant(obs.variant));
        }
        self.last_timestamp = Some(obs.timestamp);
        Ok(())
    }

    fn observe_all(&mut self, obs: &Observation) -> Result<()> {
        for (algo, report) in self.algorithms.iter_mut().zip(&mut self.reports) {
            let start = Instant::now();
            algo.observe(obs)?;
            report.runtime += start.elapsed();
        }
        Ok(())
    }

    /// Learning-only observation from a separate training log.
    pub fn train(&mut self, obs: &Observation) -> Result<()> {
        if self.in_test_phase {
            return Err(Error::InvalidConfig("training log fed after the test log started".into()));
        }
        self.check(obs)?;
        self.train_observations += 1;
        self.observe_all(obs)
    }

    /// Observation from the evaluated stream.
    pub fn push(&mut self, obs: &Observation) -> Result<()> {
        if !self.in_test_phase {
            // a separate test log restarts its timestamps
            self.in_test_phase = true;
            self.last_timestamp = None;
        }
        self.check(obs)?;

        if !self.warmup_done {
            self.warmup_observations += 1;
            self.warmup_seen += match self.protocol.warmup {
                Warmup::Observations(_) => 1,
                Warmup::Clicks(_) => obs.click as u64,
            };
            let quota = match self.protocol.warmup {
                Warmup::Observations(n) | Warmup::Clicks(n) => n,
            };
            self.warmup_done = self.warmup_seen >= quota;
            return self.observe_all(obs);
        }

        self.test_observations += 1;
        if obs.click {
            self.test_clicks += 1;
            for (algo, report) in self.algorithms.iter_mut().zip(&mut self.reports) {
                let start = Instant::now();
                let ranking = algo.rank(&obs.profile)?;
                report.runtime += start.elapsed();
                let r = rank_of(&ranking, obs.variant).ok_or_else(|| {
                    Error::SchemaMismatch(format!(
                        "{} did not rank variant {}",
                        algo.name(),
                        obs.variant
                    ))
                })?;
                report.rank_histogram[r - 1] += 1;
                report.clicks_scored += 1;
            }
        }
        self.observe_all(obs)
    }

    pub fn finish(mut self) -> ReplayReport {
        for r in &mut self.reports {
            r.finalize(self.protocol.confidence);
        }
        ReplayReport {
            train_observations: self.train_observations,
            warmup_observations: self.warmup_observations,
            test_observations: self.test_observations,
            test_clicks: self.test_clicks,
            confidence: self.protocol.confidence,
            algorithms: self.reports,
        }
    }
}

/// Replays one log under `protocol`.
pub fn replay<I>(
    log: I,
    algorithms: Vec<&mut dyn RankingAlgorithm>,
    protocol: ReplayProtocol,
) -> Result<ReplayReport>
where
    I: IntoIterator<Item = Observation>,
{
    let mut replayer = Replayer::new(algorithms, protocol)?;
    for obs in log {
        replayer.push(&obs)?;
    }
    Ok(replayer.finish())
}

/// Learns from every observation of `train`, then replays `test`.
pub fn replay_train_test<I, J>(
    train: I,
    test: J,
    algorithms: Vec<&mut dyn RankingAlgorithm>,
    protocol: ReplayProtocol,
) -> Result<ReplayReport>
where
    I: IntoIterator<Item = Observation>,
    J: IntoIterator<Item = Observation>,
{
    let mut replayer = Replayer::new(algorithms, protocol)?;
    for obs in train {
        replayer.train(&obs)?;
    }
    for obs in test {
        replayer.push(&obs)?;
    }
    Ok(replayer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{Popularity, PopularityConfig};
    use crate::schema::UserProfile;

    /// Ranks a fixed order regardless of the user.
    struct Fixed(Vec<usize>, Vec<u64>);

    impl RankingAlgorithm for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn num_variants(&self) -> usize {
            self.0.len()
        }
        fn rank(&mut self, _: &UserProfile) -> Result<Vec<usize>> {
            Ok(self.0.clone())
        }
        fn observe(&mut self, obs: &Observation) -> Result<()> {
            self.1.push(obs.timestamp);
            Ok(())
        }
    }

    fn obs(t: u64, variant: usize, click: bool) -> Observation {
        Observation {
            timestamp: t,
            profile: UserProfile::new(vec![0]),
            variant,
            click,
        }
    }

    #[test]
    fn mrr_arithmetic() {
        assert_eq!(mrr(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mrr(&[1.0, 0.25]).unwrap(), 0.625);
        let m = mrr(&[0.5, 1.0 / 3.0, 0.2]).unwrap();
        assert!((m - 0.3444).abs() < 1e-4);
        assert!(matches!(mrr(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn hoeffding_matches_published_gaps() {
        assert!((hoeffding_gap(26_905, 0.95).unwrap() - 0.016).abs() <= 0.001);
        assert!((hoeffding_gap(2_400, 0.95).unwrap() - 0.055).abs() <= 0.001);
        assert!((hoeffding_gap(900, 0.95).unwrap() - 0.091).abs() <= 0.001);
        assert!(matches!(hoeffding_gap(10, 1.0), Err(Error::InvalidConfidence(_))));
        assert!(matches!(hoeffding_gap(10, 0.0), Err(Error::InvalidConfidence(_))));
        assert!(hoeffding_gap(0, 0.95).is_err());
    }

    #[test]
    fn single_click_ranked_second() {
        let mut algo = Fixed(vec![4, 2, 0, 1, 3], vec![]);
        let report = replay(
            vec![obs(1, 1, false), obs(2, 2, true)],
            vec![&mut algo],
            ReplayProtocol::default(),
        )
        .unwrap();
        let a = &report.algorithms[0];
        assert_eq!(a.clicks_scored, 1);
        assert_eq!(a.mrr, Some(0.5));
        assert_eq!(a.rank_histogram, vec![0, 1, 0, 0, 0]);
        // every observation is learned from, scored or not
        assert_eq!(algo.1, vec![1, 2]);
    }

    #[test]
    fn no_clicks_is_flagged() {
        let mut algo = Fixed(vec![0, 1], vec![]);
        let report = replay(vec![obs(1, 0, false)], vec![&mut algo], ReplayProtocol::default()).unwrap();
        assert_eq!(report.algorithms[0].clicks_scored, 0);
        assert_eq!(report.algorithms[0].mrr, None);
        assert_eq!(report.algorithms[0].significance_gap, None);
        let empty = replay(Vec::new(), vec![&mut algo], ReplayProtocol::default()).unwrap();
        assert_eq!(empty.algorithms[0].clicks_scored, 0);
    }

    #[test]
    fn warmup_in_clicks_and_observations() {
        let log = vec![obs(1, 0, true), obs(2, 1, false), obs(3, 0, true), obs(4, 1, true)];
        let mut algo = Fixed(vec![0, 1], vec![]);
        let protocol = ReplayProtocol { warmup: Warmup::Clicks(2), ..Default::default() };
        let r = replay(log.clone(), vec![&mut algo], protocol).unwrap();
        assert_eq!(r.warmup_observations, 3);
        assert_eq!(r.algorithms[0].clicks_scored, 1);
        assert_eq!(r.algorithms[0].mrr, Some(0.5));

        let mut algo = Fixed(vec![0, 1], vec![]);
        let protocol = ReplayProtocol { warmup: Warmup::Observations(1), ..Default::default() };
        let r = replay(log, vec![&mut algo], protocol).unwrap();
        assert_eq!(r.warmup_observations, 1);
        assert_eq!(r.algorithms[0].clicks_scored, 2);
        assert_eq!(r.algorithms[0].mrr, Some(0.75));
    }

    #[test]
    fn rejects_unordered_and_unknown() {
        let mut algo = Fixed(vec![0, 1], vec![]);
        let err = replay(vec![obs(5, 0, false), obs(4, 0, false)], vec![&mut algo], ReplayProtocol::default());
        assert!(matches!(err, Err(Error::UnorderedLog { previous: 5, found: 4 })));
        let mut algo = Fixed(vec![0, 1], vec![]);
        let err = replay(vec![obs(1, 2, false)], vec![&mut algo], ReplayProtocol::default());
        assert!(matches!(err, Err(Error::UnknownVariant(2))));
        assert!(replay(Vec::new(), vec![], ReplayProtocol::default()).is_err());
    }

    #[test]
    fn test_log_may_restart_timestamps() {
        let mut algo = Fixed(vec![0, 1], vec![]);
        let r = replay_train_test(
            vec![obs(1, 0, true), obs(2, 0, false)],
            vec![obs(1, 1, true)],
            vec![&mut algo],
            ReplayProtocol { mode: EvalMode::TrainThenTest, ..Default::default() },
        )
        .unwrap();
        assert_eq!(r.train_observations, 2);
        assert_eq!(r.algorithms[0].mrr, Some(0.5));
    }

    #[test]
    fn algorithms_do_not_interfere() {
        let log: Vec<_> = (1..=200).map(|t| obs(t, (t % 3) as usize, t % 4 == 0)).collect();
        let mut a = Popularity::new(3, PopularityConfig::default()).unwrap();
        let mut b = Fixed(vec![2, 1, 0], vec![]);
        let both = replay(log.clone(), vec![&mut a, &mut b], ReplayProtocol::default()).unwrap();
        let mut a = Popularity::new(3, PopularityConfig::default()).unwrap();
        let alone = replay(log, vec![&mut a], ReplayProtocol::default()).unwrap();
        assert_eq!(both.algorithms[0].rank_histogram, alone.algorithms[0].rank_histogram);
        assert_eq!(both.algorithms[0].mrr, alone.algorithms[0].mrr);
    }

    #[test]
    fn merge_equals_whole() {
        let log: Vec<_> = (1..=300).map(|t| obs(t, (t * 7 % 5) as usize, t % 3 == 0)).collect();
        let mut whole = Popularity::new(5, PopularityConfig::default()).unwrap();
        let full = replay(log.clone(), vec![&mut whole], ReplayProtocol::default()).unwrap();
        let mut split = Popularity::new(5, PopularityConfig::default()).unwrap();
        let first = replay(log[..120].to_vec(), vec![&mut split], ReplayProtocol::default()).unwrap();
        let second = replay(log[120..].to_vec(), vec![&mut split], ReplayProtocol::default()).unwrap();
        let merged = first.merge(&second).unwrap();
        assert_eq!(merged.algorithms[0].mrr, full.algorithms[0].mrr);
        assert_eq!(merged.test_clicks, full.test_clicks);
    }

    #[test]
    fn report_rendering() {
        let mut algo = Fixed(vec![1, 0], vec![]);
        let r = replay(vec![obs(1, 0, true)], vec![&mut algo], ReplayProtocol::default()).unwrap();
        let table = r.to_table();
        assert!(table.starts_with("algorithm\tmrr\tclicks_scored\tgap\n"));
        assert!(table.contains("fixed\t0.500000\t1\t"));
        let text = r.to_text();
        assert!(text.contains("[fixed]"));
        assert!(text.contains("rank_histogram = 0,1"));
    }
}
