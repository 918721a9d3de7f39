//! Stable or trending synthetic campaign: train on one log, replay another.
//!
//! cargo run --release -p offset-core --example synthetic_mrr -- [stable|trending] [alpha] [pc|ratio] [off|clip] [s] [o] [n]

use std::env;
use std::time::Instant;

use offset_core::baselines::{Popularity, PopularityConfig, RandomRanker};
use offset_core::datagen::{generate, table2_stable_rules, table2_trending_rules, GeneratorConfig};
use offset_core::replay::{replay_train_test, EvalMode, ReplayProtocol, Warmup};
use offset_core::trainer::StepMode;
use offset_core::{ModelParams, OffSet, RankingAlgorithm, RescaleMode, TrainerConfig};

fn main() -> offset_core::Result<()> {
    let args: Vec<String> = env::args().collect();
    let trending = args.get(1).map_or(false, |a| a == "trending");
    let alpha: f64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(0.05);
    let step_mode = match args.get(3).map(String::as_str) {
        Some("ratio") => StepMode::ConstantRatio,
        _ => StepMode::ClickProbability,
    };
    let rescale = match args.get(4).map(String::as_str) {
        Some("clip") => RescaleMode::LinfClip,
        _ => RescaleMode::Off,
    };
    let standalone = args.get(5).and_then(|a| a.parse().ok()).unwrap_or(2);
    let overlap = args.get(6).and_then(|a| a.parse().ok()).unwrap_or(4);
    let n: u64 = args.get(7).and_then(|a| a.parse().ok()).unwrap_or(8_000_000);

    let stable = table2_stable_rules();
    let shifted = table2_trending_rules();
    let mut train_cfg = GeneratorConfig::new(1, n);
    let test_cfg = GeneratorConfig::new(2, n);
    let demo = train_cfg.demographics.clone();
    let (train, test) = if trending {
        train_cfg.trend_switch = Some(n / 2);
        (
            generate(&train_cfg, &stable, Some(&shifted))?,
            generate(&test_cfg, &shifted, None)?,
        )
    } else {
        (generate(&train_cfg, &stable, None)?, generate(&test_cfg, &stable, None)?)
    };

    let config = TrainerConfig { alpha, rescale_mode: rescale, step_mode, ..Default::default() };
    let params = ModelParams { standalone, overlap, ..Default::default() };
    let mut offset = OffSet::new(demo.schema(), 5, &params, config)?;
    let mut popularity = Popularity::new(5, PopularityConfig::default())?;
    let mut random = RandomRanker::new(5, 3)?;

    let start = Instant::now();
    let encode = |r: offset_core::datagen::LogRecord| r.to_observation(&demo).expect("generated users are in range");
    let algorithms: Vec<&mut dyn RankingAlgorithm> = vec![&mut offset, &mut popularity, &mut random];
    let protocol = ReplayProtocol {
        warmup: Warmup::Observations(0),
        mode: EvalMode::TrainThenTest,
        ..Default::default()
    };
    let report = replay_train_test(train.map(encode), test.map(encode), algorithms, protocol)?;
    print!("{}", report.to_table());
    println!(
        "elapsed {:.1}s, mu {:.5}, finite {}",
        start.elapsed().as_secs_f64(),
        offset.state().mu,
        offset.model().is_finite()
    );
    for (year, geo) in [(1985, "NY"), (1955, "NY"), (1985, "AZ"), (1955, "AZ"), (1985, "CA"), (1955, "TX")] {
        let user = offset_core::datagen::Demographic {
            birth_year: year,
            geo: demo.geo_id(geo).unwrap(),
            gender: 0,
        };
        let profile = demo.encode(&user)?;
        let scores = offset.model().scores(&profile)?;
        let ranking = offset.rank(&profile)?;
        println!("{} {}: {:?} {:?}", year, geo, ranking, scores.iter().map(|s| format!("{:.3e}", s)).collect::<Vec<_>>());
    }
    Ok(())
}
