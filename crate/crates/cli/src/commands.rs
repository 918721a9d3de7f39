use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use offset_core::baselines::{Popularity, RandomRanker};
use offset_core::datagen::{generate, Demographics};
use offset_core::logfile::{LogHeader, LogReader, LogWriter};
use offset_core::replay::{EvalMode, ReplayReport, Replayer};
use offset_core::trainer::StepMode;
use offset_core::{snapshot, OffSet, RankingAlgorithm, RescaleMode};

use crate::cli::{ConfigArgs, GenerateArgs, InspectArgs, ReplayArgs};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path),
        (None, Some(name)) => ExperimentConfig::preset(name),
        (None, None) => Ok(ExperimentConfig::default()),
    }
}

fn core(path: Option<&Path>) -> impl Fn(offset_core::Error) -> CliError + '_ {
    move |e| CliError::from_core(e, path)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn require_input(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

fn require_output_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        )),
        _ => Ok(()),
    }
}

#[derive(Default, Clone)]
struct CtrTally {
    impressions: Vec<u64>,
    clicks: Vec<u64>,
}

impl CtrTally {
    fn new(variants: usize) -> Self {
        CtrTally {
            impressions: vec![0; variants],
            clicks: vec![0; variants],
        }
    }

    fn add(&mut self, variant: usize, click: bool) {
        self.impressions[variant] += 1;
        self.clicks[variant] += u64::from(click);
    }

    fn write(&self, out: &mut dyn Write, label: &str) -> std::io::Result<()> {
        let n: u64 = self.impressions.iter().sum();
        let c: u64 = self.clicks.iter().sum();
        writeln!(out, "{}: {} impressions, {} clicks, ctr {:.5}", label, n, c, ratio(c, n))?;
        writeln!(out, "variant\timpressions\tclicks\tctr")?;
        for (v, (&i, &c)) in self.impressions.iter().zip(&self.clicks).enumerate() {
            writeln!(out, "{}\t{}\t{}\t{:.5}", v, i, c, ratio(c, i))?;
        }
        Ok(())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn generate_cmd(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    let g = &mut cfg.generator;
    if let Some(seed) = args.seed {
        g.seed = seed;
    }
    if let Some(n) = args.samples {
        g.samples = n;
    }
    if let Some(rules) = &args.rules {
        g.rules = rules.clone();
    }
    if let Some(rules) = &args.switch_rules {
        g.rules_after_switch = Some(rules.clone());
    }
    if let Some(at) = args.trend_switch {
        g.trend_switch = Some(at);
    }
    let path = args
        .out
        .clone()
        .or_else(|| cfg.paths.log_out.clone())
        .ok_or_else(|| CliError::Config("no output log: pass --out or set paths.log_out".into()))?;
    require_output_dir(&path)?;

    let (rules, after) = cfg.rule_sets()?;
    let gen_cfg = cfg.generator_config();
    let stream = generate(&gen_cfg, &rules, after.as_ref()).map_err(core(None))?;
    let variants = stream.num_variants();
    let header = LogHeader {
        num_variants: variants,
        demographics: gen_cfg.demographics.clone(),
    };
    let mut writer = LogWriter::new(create(&path)?, header).map_err(core(Some(&path)))?;
    let switch = gen_cfg.trend_switch;
    let mut phases = vec![CtrTally::new(variants); if switch.is_some() { 2 } else { 1 }];
    for (i, rec) in stream.enumerate() {
        writer.write(&rec).map_err(core(Some(&path)))?;
        let phase = usize::from(switch.map_or(false, |s| i as u64 >= s));
        phases[phase].add(rec.variant, rec.click);
    }
    writer
        .finish()
        .map_err(core(Some(&path)))?
        .flush()
        .map_err(|e| CliError::io(&path, e))?;

    let io = |e| CliError::io(Path::new("<stdout>"), e);
    writeln!(out, "wrote {} samples to {}", gen_cfg.n_samples, path.display()).map_err(io)?;
    if phases.len() == 2 {
        phases[0].write(out, "before switch").map_err(io)?;
        phases[1].write(out, "after switch").map_err(io)?;
    } else {
        phases[0].write(out, "log").map_err(io)?;
    }
    Ok(())
}

struct OpenLog {
    path: PathBuf,
    reader: LogReader<BufReader<File>>,
}

fn open_log(path: &Path) -> Result<OpenLog> {
    let reader = LogReader::new(open(path)?).map_err(core(Some(path)))?;
    Ok(OpenLog {
        path: path.to_path_buf(),
        reader,
    })
}

fn feed<R: BufRead>(
    log: &mut LogReader<R>,
    path: &Path,
    demo: &Demographics,
    mut step: impl FnMut(&offset_core::Observation) -> offset_core::Result<()>,
) -> Result<()> {
    for rec in log {
        let rec = rec.map_err(core(Some(path)))?;
        let obs = rec.to_observation(demo).map_err(core(Some(path)))?;
        step(&obs).map_err(core(Some(path)))?;
    }
    Ok(())
}

pub fn replay_cmd(args: &ReplayArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    cfg.validate_baselines()?;
    if let Some(alpha) = args.alpha {
        cfg.model.alpha = alpha;
    }
    if let Some(seed) = args.seed {
        cfg.model.seed = seed;
    }
    let mut protocol = cfg.protocol()?;
    let paths = &cfg.paths;
    let (train_path, test_path) = if let Some(log) = &args.log {
        protocol.mode = EvalMode::OnlineInterleaved;
        (None, log.clone())
    } else if let (Some(train), Some(test)) = (&args.train, &args.test) {
        protocol.mode = EvalMode::TrainThenTest;
        (Some(train.clone()), test.clone())
    } else {
        match protocol.mode {
            EvalMode::OnlineInterleaved => (
                None,
                paths.log_in.clone().ok_or_else(|| {
                    CliError::Config("online replay needs --log or paths.log_in".into())
                })?,
            ),
            EvalMode::TrainThenTest => match (&paths.train_log, &paths.test_log) {
                (Some(train), Some(test)) => (Some(train.clone()), test.clone()),
                _ => {
                    return Err(CliError::Config(
                        "train-then-test replay needs --train and --test or paths.train_log and paths.test_log".into(),
                    ))
                }
            },
        }
    };
    let snapshot_in = args.snapshot_in.clone().or_else(|| paths.snapshot_in.clone());
    let snapshot_out = args.snapshot_out.clone().or_else(|| paths.snapshot_out.clone());
    let report_out = args.report.clone().or_else(|| paths.report_out.clone());
    let table_out = args.table.clone().or_else(|| paths.table_out.clone());

    for p in train_path.iter().chain([&test_path]).chain(&snapshot_in) {
        require_input(p)?;
    }
    for p in snapshot_out.iter().chain(&report_out).chain(&table_out) {
        require_output_dir(p)?;
    }

    let mut train = train_path.as_deref().map(open_log).transpose()?;
    let mut test = open_log(&test_path)?;
    let header = test.reader.header().clone();
    if let Some(t) = &train {
        if t.reader.header() != &header {
            return Err(CliError::Data(format!(
                "{} and {} were written with different schemas",
                t.path.display(),
                test.path.display()
            )));
        }
    }
    let demo = header.demographics.clone();
    let schema = demo.schema();

    let mut offset = match &snapshot_in {
        Some(path) => {
            let model = snapshot::load(open(path)?).map_err(core(Some(path)))?;
            if model.model().schema() != &schema || model.model().num_variants() != header.num_variants {
                return Err(CliError::Data(format!(
                    "{} does not match the log schema ({} variants, features {:?})",
                    path.display(),
                    header.num_variants,
                    schema.cardinalities()
                )));
            }
            model
        }
        None => OffSet::new(schema, header.num_variants, &cfg.model_params(), cfg.trainer_config())
            .map_err(core(None))?,
    };
    let enabled = |name: &str| cfg.baselines.enabled.iter().any(|b| b == name);
    let mut popularity = if enabled("popularity") {
        Some(Popularity::new(header.num_variants, cfg.popularity_config()).map_err(core(None))?)
    } else {
        None
    };
    let mut random = if enabled("random") {
        Some(RandomRanker::new(header.num_variants, cfg.baselines.random_seed).map_err(core(None))?)
    } else {
        None
    };

    let mut algorithms: Vec<&mut dyn RankingAlgorithm> = vec![&mut offset];
    if let Some(p) = popularity.as_mut() {
        algorithms.push(p);
    }
    if let Some(r) = random.as_mut() {
        algorithms.push(r);
    }
    let mut replayer = Replayer::new(algorithms, protocol).map_err(core(None))?;
    if let Some(t) = train.as_mut() {
        feed(&mut t.reader, &t.path, &demo, |o| replayer.train(o))?;
    }
    feed(&mut test.reader, &test.path, &demo, |o| replayer.push(o))?;
    let report = replayer.finish();

    write_outputs(&report, report_out.as_deref(), table_out.as_deref(), out)?;
    if let Some(path) = &snapshot_out {
        let mut w = create(path)?;
        snapshot::save(&offset, &mut w).map_err(core(Some(path)))?;
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

fn write_outputs(report: &ReplayReport, report_out: Option<&Path>, table_out: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let io = |e| CliError::io(Path::new("<stdout>"), e);
    out.write_all(report.to_table().as_bytes()).map_err(io)?;
    if report.algorithms.iter().all(|a| a.clicks_scored == 0) {
        eprintln!("warning: no clicks were scored; mrr is undefined");
    }
    if let Some(path) = report_out {
        std::fs::write(path, report.to_text()).map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = table_out {
        std::fs::write(path, report.to_table()).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

pub fn inspect_cmd(args: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let path = &args.snapshot;
    let offset = snapshot::load(open(path)?).map_err(core(Some(path)))?;
    let (model, state, cfg) = (offset.model(), offset.state(), offset.config());
    let layout = model.layout();
    let schema = model.schema();

    let mut text = String::new();
    let mut line = |s: String| {
        text.push_str(&s);
        text.push('\n');
    };
    let features: Vec<String> = schema
        .features()
        .iter()
        .map(|f| format!("{}:{}", f.name, f.cardinality()))
        .collect();
    line(format!("features = {}", features.join(" ")));
    line(format!("variants = {}", model.num_variants()));
    line(format!(
        "layout = standalone {} overlap {} total_dim {} feature_dim {} seed {}",
        layout.standalone_dim(),
        layout.overlap_dim(),
        layout.total_dim(),
        layout.feature_dim(),
        layout.seed()
    ));
    line(format!("bound = {}", model.bound()));
    line(format!(
        "step_mode = {}",
        match cfg.step_mode {
            StepMode::ConstantRatio => "constant_ratio",
            StepMode::ClickProbability => "click_probability",
        }
    ));
    line(format!(
        "rescale = {}",
        match cfg.rescale_mode {
            RescaleMode::Off => "off",
            RescaleMode::LinfClip => "linf_clip",
        }
    ));
    line(format!("alpha = {}", cfg.alpha));
    line(format!("gamma = {}", cfg.gamma));
    line(format!("mu_update_cadence = {}", cfg.mu_update_cadence));
    line(format!("mu_initial = {}", cfg.mu_initial));
    line(format!("mu = {}", state.mu));
    line(format!("total_impressions = {}", state.total_impressions));
    line(format!("total_clicks = {}", state.total_clicks));
    line(format!("window_clicks = {}", state.window_clicks));
    line(format!("window_nonclicks = {}", state.window_nonclicks));
    line("family\tvectors\tmax_abs\tmean_l2".into());
    let dim = layout.total_dim();
    line(family_norms("variants", model.variant_family(), dim));
    for (k, f) in schema.features().iter().enumerate() {
        line(family_norms(&f.name, model.feature_family(k), layout.feature_dim()));
    }
    out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn family_norms(name: &str, family: &[f64], width: usize) -> String {
    let max = family.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let count = if width == 0 { 0 } else { family.len() / width };
    let mean_l2 = if count == 0 {
        0.0
    } else {
        family
            .chunks(width)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum::<f64>()
            / count as f64
    };
    format!("{}\t{}\t{:.6}\t{:.6}", name, count, max, mean_l2)
}
