//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use offset_core::baselines::PopularityConfig;
use offset_core::datagen::{
    table2_stable_rules, table2_trending_rules, Demographics, GeneratorConfig, ProfileDistribution, Rule, RuleSet,
};
use offset_core::replay::{EvalMode, ReplayProtocol, Warmup};
use offset_core::trainer::StepMode;
use offset_core::{ModelParams, RescaleMode, TrainerConfig};
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const PAPER_SYNTHETIC: &str = include_str!("../presets/paper-synthetic.toml");

pub const PRESETS: &[(&str, &str)] = &[("paper-synthetic", PAPER_SYNTHETIC)];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorSection,
    pub demographics: DemographicsSection,
    pub profile_distribution: ProfileSection,
    pub model: ModelSection,
    pub baselines: BaselinesSection,
    pub protocol: ProtocolSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub seed: u64,
    pub samples: u64,
    /// `table2_stable`, `table2_trending`, or a path to a rules file.
    pub rules: String,
    pub rules_after_switch: Option<String>,
    pub trend_switch: Option<u64>,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        GeneratorSection {
            seed: 1,
            samples: 8_000_000,
            rules: "table2_stable".into(),
            rules_after_switch: None,
            trend_switch: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicsSection {
    pub first_birth_year: u16,
    pub last_birth_year: u16,
    pub age_bucket_years: u16,
    pub geos: Option<Vec<String>>,
    pub genders: Option<Vec<String>>,
}

impl Default for DemographicsSection {
    fn default() -> Self {
        let d = Demographics::default();
        DemographicsSection {
            first_birth_year: d.first_birth_year,
            last_birth_year: d.last_birth_year,
            age_bucket_years: d.age_bucket_years,
            geos: None,
            genders: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub birth_year: Option<Vec<f64>>,
    pub geo: Option<Vec<f64>>,
    pub gender: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleSetting {
    Off,
    LinfClip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSetting {
    ConstantRatio,
    ClickProbability,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub standalone: usize,
    pub overlap: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub mu_update_cadence: u64,
    pub mu_initial: f64,
    pub bound: f64,
    pub init_spread: f64,
    pub rescale: RescaleSetting,
    pub step: StepSetting,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::default();
        let t = TrainerConfig::default();
        ModelSection {
            standalone: p.standalone,
            overlap: p.overlap,
            alpha: t.alpha,
            gamma: t.gamma,
            mu_update_cadence: t.mu_update_cadence,
            mu_initial: t.mu_initial,
            bound: p.bound,
            init_spread: p.init_spread,
            rescale: RescaleSetting::Off,
            step: StepSetting::ClickProbability,
            seed: p.seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesSection {
    /// Any of `popularity` and `random`.
    pub enabled: Vec<String>,
    pub decay_factor: f64,
    pub decay_cadence: u64,
    pub prior_clicks: f64,
    pub prior_impressions: f64,
    pub random_seed: u64,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        let p = PopularityConfig::default();
        BaselinesSection {
            enabled: vec!["popularity".into(), "random".into()],
            decay_factor: p.decay_factor,
            decay_cadence: p.decay_cadence,
            prior_clicks: p.prior_clicks,
            prior_impressions: p.prior_impressions,
            random_seed: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSetting {
    TrainThenTest,
    Online,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub mode: ModeSetting,
    pub warmup_clicks: Option<u64>,
    pub warmup_observations: Option<u64>,
    pub confidence: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            mode: ModeSetting::Online,
            warmup_clicks: None,
            warmup_observations: None,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub log_out: Option<PathBuf>,
    pub log_in: Option<PathBuf>,
    pub train_log: Option<PathBuf>,
    pub test_log: Option<PathBuf>,
    pub snapshot_in: Option<PathBuf>,
    pub snapshot_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
    pub table_out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {}", origin, e)))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!("unknown preset {:?}; known presets: {}", name, known.join(", ")))
        })?;
        Self::parse(text, &format!("preset {}", name))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        if let Some(dir) = path.parent() {
            cfg.anchor(dir);
        }
        Ok(cfg)
    }

    fn anchor(&mut self, dir: &Path) {
        let rules = |r: &mut String| {
            if !is_builtin_rules(r) {
                *r = dir.join(&*r).display().to_string();
            }
        };
        rules(&mut self.generator.rules);
        if let Some(r) = self.generator.rules_after_switch.as_mut() {
            rules(r);
        }
        let p = &mut self.paths;
        for path in [
            &mut p.log_out,
            &mut p.log_in,
            &mut p.train_log,
            &mut p.test_log,
            &mut p.snapshot_in,
            &mut p.snapshot_out,
            &mut p.report_out,
            &mut p.table_out,
        ]
        .into_iter()
        .flatten()
        {
            *path = dir.join(&*path);
        }
    }

    pub fn demographics(&self) -> Demographics {
        let d = &self.demographics;
        let base = Demographics::default();
        Demographics {
            first_birth_year: d.first_birth_year,
            last_birth_year: d.last_birth_year,
            age_bucket_years: d.age_bucket_years,
            geos: d.geos.clone().unwrap_or(base.geos),
            genders: d.genders.clone().unwrap_or(base.genders),
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let p = &self.profile_distribution;
        GeneratorConfig {
            seed: self.generator.seed,
            n_samples: self.generator.samples,
            demographics: self.demographics(),
            profile_distribution: ProfileDistribution {
                birth_year: p.birth_year.clone(),
                geo: p.geo.clone(),
                gender: p.gender.clone(),
            },
            trend_switch: self.generator.trend_switch,
        }
    }

    /// Rules before and after the trend switch.
    pub fn rule_sets(&self) -> Result<(RuleSet, Option<RuleSet>)> {
        let before = resolve_rules(&self.generator.rules)?;
        let after = self
            .generator
            .rules_after_switch
            .as_deref()
            .map(resolve_rules)
            .transpose()?;
        Ok((before, after))
    }

    pub fn model_params(&self) -> ModelParams {
        let m = &self.model;
        ModelParams {
            standalone: m.standalone,
            overlap: m.overlap,
            bound: m.bound,
            init_spread: m.init_spread,
            seed: m.seed,
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let m = &self.model;
        TrainerConfig {
            step_mode: match m.step {
                StepSetting::ConstantRatio => StepMode::ConstantRatio,
                StepSetting::ClickProbability => StepMode::ClickProbability,
            },
            alpha: m.alpha,
            gamma: m.gamma,
            mu_update_cadence: m.mu_update_cadence,
            mu_initial: m.mu_initial,
            rescale_mode: match m.rescale {
                RescaleSetting::Off => RescaleMode::Off,
                RescaleSetting::LinfClip => RescaleMode::LinfClip,
            },
        }
    }

    pub fn popularity_config(&self) -> PopularityConfig {
        let b = &self.baselines;
        PopularityConfig {
            decay_factor: b.decay_factor,
            decay_cadence: b.decay_cadence,
            prior_clicks: b.prior_clicks,
            prior_impressions: b.prior_impressions,
        }
    }

    pub fn protocol(&self) -> Result<ReplayProtocol> {
        let p = &self.protocol;
        let warmup = match (p.warmup_clicks, p.warmup_observations) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "protocol: set at most one of warmup_clicks and warmup_observations".into(),
                ))
            }
            (Some(c), None) => Warmup::Clicks(c),
            (None, Some(o)) => Warmup::Observations(o),
            (None, None) => Warmup::Clicks(0),
        };
        Ok(ReplayProtocol {
            warmup,
            mode: match p.mode {
                ModeSetting::TrainThenTest => EvalMode::TrainThenTest,
                ModeSetting::Online => EvalMode::OnlineInterleaved,
            },
            confidence: p.confidence,
        })
    }

    pub fn validate_baselines(&self) -> Result<()> {
        for name in &self.baselines.enabled {
            if name != "popularity" && name != "random" {
                return Err(CliError::Config(format!(
                    "baselines.enabled: unknown baseline {:?} (expected popularity or random)",
                    name
                )));
            }
        }
        Ok(())
    }
}

/// On-disk rules file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    variants: usize,
    #[serde(default, rename = "rule")]
    rules: Vec<RuleEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    birth_years: Option<(u16, u16)>,
    geo: Option<String>,
    gender: Option<String>,
    variant: Option<usize>,
    lift: f64,
}

pub fn parse_rules(text: &str, origin: &str) -> Result<RuleSet> {
    let file: RulesFile = toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {}", origin, e)))?;
    Ok(RuleSet {
        num_variants: file.variants,
        rules: file
            .rules
            .into_iter()
            .map(|r| Rule {
                birth_years: r.birth_years,
                geo: r.geo,
                gender: r.gender,
                variant: r.variant,
                lift: r.lift,
            })
            .collect(),
    })
}

fn is_builtin_rules(name: &str) -> bool {
    matches!(name, "table2_stable" | "table2_trending")
}

fn resolve_rules(name: &str) -> Result<RuleSet> {
    match name {
        "table2_stable" => Ok(table2_stable_rules()),
        "table2_trending" => Ok(table2_trending_rules()),
        path => {
            let path = Path::new(path);
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_rules(&text, &path.display().to_string())
        }
    }
}
