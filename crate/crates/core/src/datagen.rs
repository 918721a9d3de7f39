//! Synthetic click logs driven by accumulative CTR-lift rules.
//!
//! A simulated user has a birth year, a geo and a gender. Each impression
//! shows a uniformly drawn variant, and the click coin lands with the sum of
//! the lifts of every rule the (user, variant) pair satisfies.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::schema::{FeatureDescriptor, FeatureSchema, UserProfile};
use crate::trainer::Observation;

pub const US_STATES: [&str; 50] = [
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA", "HI", "ID", "IL", "IN", "IA",
    "KS", "KY", "LA", "ME", "MD", "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ",
    "NM", "NY", "NC", "ND", "OH", "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VT",
    "VA", "WA", "WV", "WI", "WY",
];

pub const GENDERS: [&str; 3] = ["male", "female", "unknown"];

/// Attribute domains of simulated users, and how birth years fold into the
/// categorical age feature the model sees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demographics {
    pub first_birth_year: u16,
    pub last_birth_year: u16,
    pub age_bucket_years: u16,
    pub geos: Vec<String>,
    pub genders: Vec<String>,
}

impl Default for Demographics {
    fn default() -> Self {
        Demographics {
            first_birth_year: 1930,
            last_birth_year: 2005,
            age_bucket_years: 10,
            geos: US_STATES.iter().map(|s| s.to_string()).collect(),
            genders: GENDERS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// One simulated user; `geo` and `gender` index into [`Demographics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Demographic {
    pub birth_year: u16,
    pub geo: u16,
    pub gender: u8,
}

impl Demographics {
    pub fn validate(&self) -> Result<()> {
        if self.first_birth_year > self.last_birth_year {
            return Err(Error::InvalidConfig("birth year range is empty".into()));
        }
        if self.age_bucket_years == 0 {
            return Err(Error::InvalidConfig("age bucket width must be positive".into()));
        }
        if self.geos.is_empty() || self.geos.len() > u16::MAX as usize {
            return Err(Error::InvalidConfig("geo domain must be non-empty".into()));
        }
        if self.genders.is_empty() || self.genders.len() > u8::MAX as usize {
            return Err(Error::InvalidConfig("gender domain must be non-empty".into()));
        }
        for label in self.geos.iter().chain(&self.genders) {
            if label.is_empty() || label.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(Error::InvalidConfig(format!("bad attribute label {:?}", label)));
            }
        }
        Ok(())
    }

    pub fn num_birth_years(&self) -> usize {
        (self.last_birth_year - self.first_birth_year) as usize + 1
    }

    pub fn num_age_buckets(&self) -> usize {
        (self.num_birth_years() - 1) / self.age_bucket_years as usize + 1
    }

    pub fn age_bucket(&self, birth_year: u16) -> Option<u32> {
        if birth_year < self.first_birth_year || birth_year > self.last_birth_year {
            return None;
        }
        Some(((birth_year - self.first_birth_year) / self.age_bucket_years) as u32)
    }

    /// The three model features: age bucket, geo, gender.
    pub fn schema(&self) -> FeatureSchema {
        let ages = (0..self.num_age_buckets())
            .map(|b| {
                let lo = self.first_birth_year as usize + b * self.age_bucket_years as usize;
                let hi = (lo + self.age_bucket_years as usize - 1).min(self.last_birth_year as usize);
                format!("{}-{}", lo, hi)
            })
            .collect();
        FeatureSchema::new(vec![
            FeatureDescriptor::new("age", ages),
            FeatureDescriptor::new("geo", self.geos.clone()),
            FeatureDescriptor::new("gender", self.genders.clone()),
        ])
        .expect("validated demographics have non-empty domains")
    }

    pub fn encode(&self, user: &Demographic) -> Result<UserProfile> {
        let age = self.age_bucket(user.birth_year).ok_or(Error::UnknownFeatureValue {
            feature: 0,
            value: user.birth_year as u32,
        })?;
        if user.geo as usize >= self.geos.len() {
            return Err(Error::UnknownFeatureValue { feature: 1, value: user.geo as u32 });
        }
        if user.gender as usize >= self.genders.len() {
            return Err(Error::UnknownFeatureValue { feature: 2, value: user.gender as u32 });
        }
        Ok(UserProfile::new(vec![age, user.geo as u32, user.gender as u32]))
    }

    pub fn geo_id(&self, label: &str) -> Option<u16> {
        self.geos.iter().position(|g| g == label).map(|i| i as u16)
    }

    pub fn gender_id(&self, label: &str) -> Option<u8> {
        self.genders.iter().position(|g| g == label).map(|i| i as u8)
    }

    /// Every user the domain admits.
    pub fn all_users(&self) -> impl Iterator<Item = Demographic> + '_ {
        (self.first_birth_year..=self.last_birth_year).flat_map(move |birth_year| {
            (0..self.geos.len()).flat_map(move |geo| {
                (0..self.genders.len()).map(move |gender| Demographic {
                    birth_year,
                    geo: geo as u16,
                    gender: gender as u8,
                })
            })
        })
    }
}

/// A CTR lift for every (user, variant) pair matching all given fields;
/// `None` matches everything.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub birth_years: Option<(u16, u16)>,
    pub geo: Option<String>,
    pub gender: Option<String>,
    pub variant: Option<usize>,
    pub lift: f64,
}

impl Rule {
    pub fn all(lift: f64) -> Self {
        Rule {
            birth_years: None,
            geo: None,
            gender: None,
            variant: None,
            lift,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub num_variants: usize,
}

/// Rules resolved against a [`Demographics`] domain for fast evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRules {
    rules: Vec<CompiledRule>,
    num_variants: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CompiledRule {
    birth_years: Option<(u16, u16)>,
    geo: Option<u16>,
    gender: Option<u8>,
    variant: Option<usize>,
    lift: f64,
}

impl CompiledRule {
    fn matches(&self, user: &Demographic, variant: usize) -> bool {
        self.birth_years
            .map_or(true, |(lo, hi)| (lo..=hi).contains(&user.birth_year))
            && self.geo.map_or(true, |g| g == user.geo)
            && self.gender.map_or(true, |g| g == user.gender)
            && self.variant.map_or(true, |v| v == variant)
    }
}

impl RuleSet {
    /// Resolves labels, checks each lift and that every pair's accumulated
    /// CTR is a probability.
    pub fn compile(&self, demo: &Demographics) -> Result<CompiledRules> {
        if self.num_variants == 0 {
            return Err(Error::InvalidConfig("a rule set needs at least one variant".into()));
        }
        let mut rules = Vec::with_capacity(self.rules.len());
        for (i, r) in self.rules.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.lift) {
                return Err(Error::InvalidConfig(format!("rule {}: lift {} outside [0, 1]", i, r.lift)));
            }
            if let Some((lo, hi)) = r.birth_years {
                if lo > hi {
                    return Err(Error::InvalidConfig(format!("rule {}: empty birth year range", i)));
                }
            }
            if let Some(v) = r.variant {
                if v >= self.num_variants {
                    return Err(Error::InvalidConfig(format!("rule {}: unknown variant {}", i, v)));
                }
            }
            let geo = match &r.geo {
                Some(label) => Some(demo.geo_id(label).ok_or_else(|| {
                    Error::InvalidConfig(format!("rule {}: unknown geo {:?}", i, label))
                })?),
                None => None,
            };
            let gender = match &r.gender {
                Some(label) => Some(demo.gender_id(label).ok_or_else(|| {
                    Error::InvalidConfig(format!("rule {}: unknown gender {:?}", i, label))
                })?),
                None => None,
            };
            rules.push(CompiledRule {
                birth_years: r.birth_years,
                geo,
                gender,
                variant: r.variant,
                lift: r.lift,
            });
        }
        let compiled = CompiledRules {
            rules,
            num_variants: self.num_variants,
        };
        for user in demo.all_users() {
            for v in 0..self.num_variants {
                let p = compiled.ctr(&user, v);
                if p > 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "accumulated CTR {} exceeds 1 for {:?} on variant {}",
                        p, user, v
                    )));
                }
            }
        }
        Ok(compiled)
    }
}

impl CompiledRules {
    pub fn num_variants(&self) -> usize {
        self.num_variants
    }

    /// Sum of the lifts of all rules matching (user, variant).
    pub fn ctr(&self, user: &Demographic, variant: usize) -> f64 {
        self.rules
            .iter()
            .filter(|r| r.matches(user, variant))
            .map(|r| r.lift)
            .sum()
    }
}

/// Click probability of (user, variant) under `rules`.
pub fn true_ctr(demo: &Demographics, rules: &RuleSet, user: &Demographic, variant: usize) -> Result<f64> {
    Ok(rules.compile(demo)?.ctr(user, variant))
}

fn campaign_rules(popular_variant: usize) -> RuleSet {
    let cell = |years: (u16, u16), geo: &str, variant: usize| Rule {
        birth_years: Some(years),
        geo: Some(geo.to_string()),
        gender: None,
        variant: Some(variant),
        lift: 0.30,
    };
    RuleSet {
        rules: vec![
            Rule::all(0.001),
            Rule {
                variant: Some(popular_variant),
                ..Rule::all(0.01)
            },
            cell((1980, 1989), "NY", 0),
            cell((1950, 1959), "NY", 1),
            cell((1980, 1989), "AZ", 1),
            cell((1950, 1959), "AZ", 0),
        ],
        num_variants: 5,
    }
}

/// The stable synthetic campaign: five variants, a 0.1% base CTR, variant 2
/// broadly popular, and four small (decade, state) audiences with a strong
/// preference for variant 0 or 1.
pub fn table2_stable_rules() -> RuleSet {
    campaign_rules(2)
}

/// The stable campaign after its trend shift: the broad +1% lift moves from
/// variant 2 to variant 3.
pub fn table2_trending_rules() -> RuleSet {
    campaign_rules(3)
}

/// Per-attribute sampling weights; `None` means uniform.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileDistribution {
    pub birth_year: Option<Vec<f64>>,
    pub geo: Option<Vec<f64>>,
    pub gender: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_samples: u64,
    pub demographics: Demographics,
    pub profile_distribution: ProfileDistribution,
    /// Samples with 0-based index at or past this use the post-switch rules.
    pub trend_switch: Option<u64>,
}

impl GeneratorConfig {
    pub fn new(seed: u64, n_samples: u64) -> Self {
        GeneratorConfig {
            seed,
            n_samples,
            demographics: Demographics::default(),
            profile_distribution: ProfileDistribution::default(),
            trend_switch: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.demographics.validate()?;
        if let Some(s) = self.trend_switch {
            if s < 1 || s > self.n_samples {
                return Err(Error::InvalidConfig(format!(
                    "trend switch {} outside [1, {}]",
                    s, self.n_samples
                )));
            }
        }
        Ok(())
    }
}

/// One generated impression, in raw attribute form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogRecord {
    pub timestamp: u64,
    pub user: Demographic,
    pub variant: usize,
    pub click: bool,
}

impl LogRecord {
    pub fn to_observation(&self, demo: &Demographics) -> Result<Observation> {
        Ok(Observation {
            timestamp: self.timestamp,
            profile: demo.encode(&self.user)?,
            variant: self.variant,
            click: self.click,
        })
    }
}

fn sampler(weights: &Option<Vec<f64>>, n: usize, what: &str) -> Result<WeightedIndex<f64>> {
    let w = match weights {
        Some(w) if w.len() != n => {
            return Err(Error::InvalidConfig(format!(
                "{} weights: expected {} entries, found {}",
                what,
                n,
                w.len()
            )))
        }
        Some(w) => w.clone(),
        None => vec![1.0; n],
    };
    WeightedIndex::new(w).map_err(|e| Error::InvalidConfig(format!("{} weights: {}", what, e)))
}

/// Deterministic stream of synthetic impressions.
pub struct Generator {
    rng: ChaCha8Rng,
    next_index: u64,
    n_samples: u64,
    trend_switch: Option<u64>,
    first_birth_year: u16,
    years: WeightedIndex<f64>,
    geos: WeightedIndex<f64>,
    genders: WeightedIndex<f64>,
    rules: CompiledRules,
    rules_after_switch: Option<CompiledRules>,
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generator")
            .field("next_index", &self.next_index)
            .field("n_samples", &self.n_samples)
            .finish()
    }
}

pub fn generate(
    cfg: &GeneratorConfig,
    rules: &RuleSet,
    rules_after_switch: Option<&RuleSet>,
) -> Result<Generator> {
    cfg.validate()?;
    let demo = &cfg.demographics;
    let rules = rules.compile(demo)?;
    let rules_after_switch = rules_after_switch.map(|r| r.compile(demo)).transpose()?;
    if let Some(after) = &rules_after_switch {
        if after.num_variants() != rules.num_variants() {
            return Err(Error::InvalidConfig(
                "rule sets before and after the switch disagree on the variant count".into(),
            ));
        }
    }
    if cfg.trend_switch.is_some() && rules_after_switch.is_none() {
        return Err(Error::InvalidConfig("a trend switch needs a second rule set".into()));
    }
    let dist = &cfg.profile_distribution;
    Ok(Generator {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        next_index: 0,
        n_samples: cfg.n_samples,
        trend_switch: cfg.trend_switch,
        first_birth_year: demo.first_birth_year,
        years: sampler(&dist.birth_year, demo.num_birth_years(), "birth year")?,
        geos: sampler(&dist.geo, demo.geos.len(), "geo")?,
        genders: sampler(&dist.gender, demo.genders.len(), "gender")?,
        rules,
        rules_after_switch,
    })
}

impl Generator {
    pub fn num_variants(&self) -> usize {
        self.rules.num_variants()
    }
}

impl Iterator for Generator {
    type Item = LogRecord;

    fn next(&mut self) -> Option<LogRecord> {
        if self.next_index >= self.n_samples {
            return None;
        }
        let index = self.next_index;
        self.next_index += 1;

        let user = Demographic {
            birth_year: self.first_birth_year + self.years.sample(&mut self.rng) as u16,
            geo: self.geos.sample(&mut self.rng) as u16,
            gender: self.genders.sample(&mut self.rng) as u8,
        };
        let variant = self.rng.gen_range(0..self.rules.num_variants());
        let rules = match (&self.rules_after_switch, self.trend_switch) {
            (Some(after), Some(switch)) if index >= switch => after,
            (Some(after), None) => after,
            _ => &self.rules,
        };
        let click = self.rng.gen::<f64>() < rules.ctr(&user, variant);
        Some(LogRecord {
            timestamp: index + 1,
            user,
            variant,
            click,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n_samples - self.next_index) as usize;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(demo: &Demographics, year: u16, geo: &str, gender: &str) -> Demographic {
        Demographic {
            birth_year: year,
            geo: demo.geo_id(geo).unwrap(),
            gender: demo.gender_id(gender).unwrap(),
        }
    }

    #[test]
    fn stable_rules_reproduce_worked_examples() {
        let demo = Demographics::default();
        let rules = table2_stable_rules();
        assert_eq!(rules.rules.len(), 6);
        assert_eq!(rules.num_variants, 5);
        let c = rules.compile(&demo).unwrap();
        let ca = user(&demo, 1970, "CA", "female");
        assert!((c.ctr(&ca, 0) - 0.001).abs() < 1e-15);
        assert!((c.ctr(&ca, 1) - 0.001).abs() < 1e-15);
        assert!((c.ctr(&ca, 2) - 0.011).abs() < 1e-15);
        let ny53 = user(&demo, 1953, "NY", "male");
        assert!((c.ctr(&ny53, 1) - 0.301).abs() < 1e-15);
        let ny85 = user(&demo, 1985, "NY", "unknown");
        assert!((c.ctr(&ny85, 0) - 0.301).abs() < 1e-15);
        let tx70 = user(&demo, 1970, "TX", "male");
        assert!((c.ctr(&tx70, 3) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn trending_rules_move_the_popular_variant() {
        let demo = Demographics::default();
        let rules = table2_trending_rules();
        assert_eq!(rules.rules.len(), 6);
        let ca = user(&demo, 1999, "CA", "male");
        assert!((true_ctr(&demo, &rules, &ca, 3).unwrap() - 0.011).abs() < 1e-15);
        assert!((true_ctr(&demo, &rules, &ca, 2).unwrap() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn empty_rules_give_zero() {
        let demo = Demographics::default();
        let rules = RuleSet { rules: vec![], num_variants: 3 };
        let u = user(&demo, 1960, "WY", "female");
        for v in 0..3 {
            assert_eq!(true_ctr(&demo, &rules, &u, v).unwrap(), 0.0);
        }
    }

    #[test]
    fn rejects_rules_summing_past_one() {
        let demo = Demographics::default();
        let rules = RuleSet {
            rules: vec![Rule::all(0.6), Rule { geo: Some("NY".into()), ..Rule::all(0.5) }],
            num_variants: 2,
        };
        assert!(matches!(rules.compile(&demo), Err(Error::InvalidConfig(_))));
        let unknown = RuleSet {
            rules: vec![Rule { geo: Some("XX".into()), ..Rule::all(0.1) }],
            num_variants: 2,
        };
        assert!(matches!(unknown.compile(&demo), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn age_buckets() {
        let demo = Demographics::default();
        assert_eq!(demo.num_birth_years(), 76);
        assert_eq!(demo.num_age_buckets(), 8);
        assert_eq!(demo.age_bucket(1930), Some(0));
        assert_eq!(demo.age_bucket(1989), Some(5));
        assert_eq!(demo.age_bucket(2005), Some(7));
        assert_eq!(demo.age_bucket(2006), None);
        let schema = demo.schema();
        assert_eq!(schema.cardinalities(), vec![8, 50, 3]);
        assert_eq!(schema.feature(0).values[7], "2000-2005");
    }

    #[test]
    fn empty_stream_and_determinism() {
        let rules = table2_stable_rules();
        assert_eq!(generate(&GeneratorConfig::new(1, 0), &rules, None).unwrap().count(), 0);
        let a: Vec<_> = generate(&GeneratorConfig::new(7, 2000), &rules, None).unwrap().collect();
        let b: Vec<_> = generate(&GeneratorConfig::new(7, 2000), &rules, None).unwrap().collect();
        let c: Vec<_> = generate(&GeneratorConfig::new(8, 2000), &rules, None).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().enumerate().all(|(i, r)| r.timestamp == i as u64 + 1));
    }

    #[test]
    fn trend_switch_validation() {
        let rules = table2_stable_rules();
        let mut cfg = GeneratorConfig::new(1, 10);
        cfg.trend_switch = Some(11);
        assert!(generate(&cfg, &rules, Some(&table2_trending_rules())).is_err());
        cfg.trend_switch = Some(5);
        assert!(generate(&cfg, &rules, None).is_err());
        assert!(generate(&cfg, &rules, Some(&table2_trending_rules())).is_ok());
    }

    #[test]
    fn weights_must_match_domain() {
        let mut cfg = GeneratorConfig::new(1, 10);
        cfg.profile_distribution.gender = Some(vec![1.0, 1.0]);
        assert!(generate(&cfg, &table2_stable_rules(), None).is_err());
        cfg.profile_distribution.gender = Some(vec![0.0, 0.0, 0.0]);
        assert!(generate(&cfg, &table2_stable_rules(), None).is_err());
    }
}
