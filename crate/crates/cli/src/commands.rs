use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use sleep_hhmm::evaluation::{
    dummy_classifier, read_reference_csv, read_reference_jsonl, reference_from_episodes, write_reference_csv,
    write_reference_jsonl, BinaryImpute, DummyStrategy, EvalReport, GmmClassifier, KMeansClassifier, Predictions,
    ReferenceDay, ReferenceSet, ScoringRules,
};
use sleep_hhmm::hhmm::{ChannelNames, HhmmParams, ModelFile, ObservationSequence, Supervision};
use sleep_hhmm::indicators::{
    asleep_states, daily_indicators, predict_days, weekly_from_days, write_daily_csv, write_weekly_csv, DayRecord,
    Episode,
};
use sleep_hhmm::model_selection::{fit_cell, sweep};
use sleep_hhmm::preprocessing::{
    build_day_vectors, filter_sequences, read_day_vectors, read_records, write_day_vectors, write_records_csv,
    write_records_jsonl, DayVector, RecordFormat, RunReport,
};
use sleep_hhmm::synthdata::simulate_cohort;

use crate::config::RunConfig;
use crate::CliError;

pub struct Context {
    pub cfg: RunConfig,
    pub fixed_clock: bool,
}

impl Context {
    fn generated_at(&self) -> String {
        if self.fixed_clock {
            "1970-01-01T00:00:00Z".to_string()
        } else {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        }
    }

    fn out_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let dir = flag
            .or_else(|| self.cfg.paths.out_dir.clone())
            .ok_or_else(|| CliError::Usage("no output directory (--out-dir or paths.out_dir)".into()))?;
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Flag, then config key, then `default_name` inside the output directory.
    fn path(&self, flag: Option<PathBuf>, configured: &Option<PathBuf>, default_name: Option<&str>, what: &str) -> Result<PathBuf, CliError> {
        if let Some(p) = flag.or_else(|| configured.clone()) {
            return Ok(p);
        }
        match (default_name, &self.cfg.paths.out_dir) {
            (Some(name), Some(dir)) => {
                fs::create_dir_all(dir)?;
                Ok(dir.join(name))
            }
            _ => Err(CliError::Usage(format!("no {what} path given"))),
        }
    }

    fn zone_lookup(&self) -> Result<impl Fn(&str) -> Tz, CliError> {
        let (default, per) = self.cfg.preprocess.zones()?;
        Ok(move |s: &str| per.get(s).copied().unwrap_or(default))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_days(path: &Path) -> Result<Vec<DayVector>, CliError> {
    let days = read_day_vectors(open(path)?)?;
    if days.is_empty() {
        return Err(CliError::Data(format!("{} holds no day vectors", path.display())));
    }
    Ok(days)
}

#[derive(Serialize)]
struct PreprocessReport<'a> {
    generated_at: String,
    filter: &'a str,
    #[serde(flatten)]
    counts: &'a RunReport,
}

pub fn preprocess(
    ctx: Context,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    report: Option<PathBuf>,
    filter: Option<String>,
    timezone: Option<String>,
) -> Result<(), CliError> {
    let mut ctx = ctx;
    if let Some(f) = filter {
        ctx.cfg.preprocess.filter = f;
    }
    if let Some(tz) = timezone {
        ctx.cfg.preprocess.timezone = tz;
    }
    let mode = ctx.cfg.preprocess.filter_mode()?;
    let input = ctx.path(input, &ctx.cfg.paths.raw, None, "raw input")?;
    let output = ctx.path(output, &ctx.cfg.paths.days, Some("days.jsonl"), "day vector output")?;
    let report_path = match report {
        Some(p) => p,
        None => output.with_extension("report.json"),
    };
    let zones = ctx.zone_lookup()?;

    let batch = read_records(open(&input)?, RecordFormat::from_path(&input))?;
    let rows = batch.records.len() + batch.rejected.total();
    if batch.records.is_empty() {
        return Err(CliError::Data(format!("{} contains no usable records", input.display())));
    }
    let rejected_fraction = batch.rejected.total() as f64 / rows as f64;
    if rejected_fraction > ctx.cfg.preprocess.max_rejected_fraction {
        return Err(CliError::Data(format!(
            "{} of {rows} rows rejected, above the tolerated fraction {}",
            batch.rejected.total(),
            ctx.cfg.preprocess.max_rejected_fraction
        )));
    }
    let (days, mut run) = build_day_vectors(&batch.records, zones)?;
    run.rejected = batch.rejected;
    run.records_read = rows;
    let kept = match mode {
        Some(m) => filter_sequences(days, m, &ctx.cfg.preprocess.thresholds).0,
        None => days,
    };
    run.days_kept = kept.len();
    run.days_dropped = run.days_built - kept.len();

    let mut w = create(&output)?;
    write_day_vectors(&kept, &mut w)?;
    w.flush()?;
    write_json(
        &report_path,
        &PreprocessReport {
            generated_at: ctx.generated_at(),
            filter: &ctx.cfg.preprocess.filter,
            counts: &run,
        },
    )?;
    println!(
        "preprocess: {} records, {} rejected, {} days built, {} kept, {} dropped -> {}",
        run.records_read - run.rejected.total(),
        run.rejected.total(),
        run.days_built,
        run.days_kept,
        run.days_dropped,
        output.display()
    );
    Ok(())
}

fn sequences(days: &[DayVector]) -> Vec<ObservationSequence> {
    days.iter().map(|d| d.sequence.clone()).collect()
}

fn parse_supervision(s: &str) -> Result<Supervision, CliError> {
    s.parse().map_err(|e: sleep_hhmm::Error| CliError::Usage(e.to_string()))
}

pub fn train(
    ctx: Context,
    input: Option<PathBuf>,
    model: Option<PathBuf>,
    states: Option<usize>,
    supervision: Option<String>,
    restarts: Option<usize>,
) -> Result<(), CliError> {
    let input = ctx.path(input, &ctx.cfg.paths.days, Some("days.jsonl"), "day vector input")?;
    let model_path = ctx.path(model, &ctx.cfg.paths.model, Some("model.json"), "model output")?;
    let fit = &ctx.cfg.fit;
    let n_states = states.unwrap_or(fit.n_states);
    let supervision = match supervision {
        Some(s) => parse_supervision(&s)?,
        None => fit.supervision,
    };
    let restarts = restarts.unwrap_or(fit.restarts);
    let days = load_days(&input)?;
    let seqs = sequences(&days);
    let (out, seed) = fit_cell(&seqs, n_states, supervision, &fit.fit_config(ctx.cfg.seed), restarts)
        .map_err(|(e, _)| CliError::from(e))?;
    ModelFile::new(&out.params, ChannelNames::default()).write(&model_path)?;
    println!(
        "train: {} states ({supervision}), {} days, loglik {:.4} after {} iterations{}, seed {seed} -> {}",
        n_states,
        days.len(),
        out.final_loglik(),
        out.loglik_trace.len() - 1,
        if out.converged { "" } else { " (not converged)" },
        model_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepJson<'a> {
    generated_at: String,
    n_observations: usize,
    best_by_bic: BTreeMap<String, usize>,
    rows: &'a [sleep_hhmm::model_selection::SweepRow],
}

#[allow(clippy::too_many_arguments)]
pub fn select(
    ctx: Context,
    input: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    min_states: Option<usize>,
    max_states: Option<usize>,
    configs: Option<String>,
    restarts: Option<usize>,
) -> Result<(), CliError> {
    let input = ctx.path(input, &ctx.cfg.paths.days, Some("days.jsonl"), "day vector input")?;
    let dir = ctx.out_dir(out_dir)?;
    let lo = min_states.unwrap_or(ctx.cfg.sweep.min_states);
    let hi = max_states.unwrap_or(ctx.cfg.sweep.max_states);
    if lo == 0 || lo > hi {
        return Err(CliError::Usage(format!("empty state range {lo}..={hi}")));
    }
    let configs = match configs {
        Some(list) => list.split(',').map(|s| parse_supervision(s.trim())).collect::<Result<Vec<_>, _>>()?,
        None => ctx.cfg.sweep.configs.clone(),
    };
    let days = load_days(&input)?;
    let report = sweep(
        &sequences(&days),
        lo..=hi,
        &configs,
        &ctx.cfg.fit.fit_config(ctx.cfg.seed),
        restarts.unwrap_or(ctx.cfg.fit.restarts),
    )?;
    let mut w = create(&dir.join("sweep.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let best: BTreeMap<String, usize> = configs
        .iter()
        .filter_map(|c| report.best_by_bic(Some(*c)).map(|r| (c.to_string(), r.n_states)))
        .collect();
    write_json(
        &dir.join("sweep.json"),
        &SweepJson {
            generated_at: ctx.generated_at(),
            n_observations: report.n_observations,
            best_by_bic: best.clone(),
            rows: &report.rows,
        },
    )?;
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    let summary: Vec<String> = best.iter().map(|(c, n)| format!("{c}={n}")).collect();
    println!(
        "select: {} fits ({failed} failed), best by BIC {} -> {}",
        report.rows.len(),
        summary.join(" "),
        dir.display()
    );
    Ok(())
}

/// One decoded day in the predictions file.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionLine {
    pub subject_id: String,
    pub date: NaiveDate,
    pub path: Vec<usize>,
    pub binary: Vec<u8>,
    pub episode: Option<Episode>,
}

fn resolve_asleep(ctx: &Context, params: &HhmmParams) -> Result<Vec<usize>, CliError> {
    let explicit = &ctx.cfg.indicators.asleep_states;
    if explicit.is_empty() {
        return Ok(asleep_states(params, ctx.cfg.indicators.fallback_asleep)?);
    }
    if let Some(&bad) = explicit.iter().find(|&&s| s >= params.n_states()) {
        return Err(CliError::Usage(format!("asleep state {bad} does not exist in a {}-state model", params.n_states())));
    }
    Ok(explicit.clone())
}

pub fn predict(ctx: Context, model: Option<PathBuf>, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<(), CliError> {
    let model_path = ctx.path(model, &ctx.cfg.paths.model, Some("model.json"), "model")?;
    let input = ctx.path(input, &ctx.cfg.paths.days, Some("days.jsonl"), "day vector input")?;
    let output = ctx.path(output, &ctx.cfg.paths.predictions, Some("predictions.jsonl"), "predictions output")?;
    let params = ModelFile::read(&model_path)?.params()?;
    let days = load_days(&input)?;
    if let Some(d) = days
        .iter()
        .find(|d| d.sequence.n_continuous() != params.n_continuous() || d.sequence.n_discrete() != params.n_discrete())
    {
        return Err(CliError::Data(format!(
            "day {} {} has a channel layout the model does not match",
            d.subject_id, d.date
        )));
    }
    let asleep = resolve_asleep(&ctx, &params)?;
    let preds = predict_days(&params, &days, &asleep, ctx.cfg.indicators.merge_gap)?;
    let mut w = create(&output)?;
    let mut with_sleep = 0;
    for (d, p) in days.iter().zip(preds) {
        with_sleep += usize::from(p.episode.is_some());
        let line = PredictionLine {
            subject_id: d.subject_id.clone(),
            date: d.date,
            path: p.path,
            binary: p.binary,
            episode: p.episode,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    println!(
        "predict: {} days decoded, {with_sleep} with a main sleep episode, asleep states {asleep:?} -> {}",
        days.len(),
        output.display()
    );
    Ok(())
}

fn load_predictions(path: &Path) -> Result<Vec<PredictionLine>, CliError> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{} holds no predictions", path.display())));
    }
    Ok(out)
}

pub fn indicators(ctx: Context, input: Option<PathBuf>, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let input = ctx.path(input, &ctx.cfg.paths.predictions, Some("predictions.jsonl"), "predictions input")?;
    let dir = ctx.out_dir(out_dir)?;
    let preds = load_predictions(&input)?;
    let cal = &ctx.cfg.indicators.calendar;
    let days: Vec<DayRecord> = preds
        .iter()
        .map(|p| DayRecord {
            subject_id: p.subject_id.clone(),
            date: p.date,
            day_type: cal.classify(p.date),
            indicators: p.episode.map(daily_indicators),
        })
        .collect();
    let weeks = weekly_from_days(&days);
    let mut w = create(&dir.join("daily.csv"))?;
    write_daily_csv(&days, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("weekly.csv"))?;
    write_weekly_csv(&weeks, &mut w)?;
    w.flush()?;
    let accepted = weeks.iter().filter(|w| w.result.is_ok()).count();
    println!(
        "indicators: {} days ({} with sleep), {accepted} of {} weeks accepted -> {}",
        days.len(),
        days.iter().filter(|d| d.indicators.is_some()).count(),
        weeks.len(),
        dir.display()
    );
    Ok(())
}

fn load_reference(ctx: &Context, path: &Path) -> Result<ReferenceSet, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(read_reference_csv(open(path)?, ctx.cfg.indicators.merge_gap)?),
        _ => {
            let episodes = read_reference_jsonl(open(path)?)?;
            Ok(reference_from_episodes(&episodes, ctx.zone_lookup()?)?)
        }
    }
}

fn baseline_predictions(
    ctx: &Context,
    eval_days: &[DayVector],
    train_days: &[DayVector],
    reference: &ReferenceSet,
) -> Result<Vec<(String, Predictions)>, CliError> {
    let key = |d: &DayVector| (d.subject_id.clone(), d.date);
    let train = sequences(train_days);
    let seed = ctx.cfg.seed;
    let mut out = Vec::new();

    let uniform: Predictions = eval_days
        .iter()
        .enumerate()
        .map(|(i, d)| Ok((key(d), dummy_classifier(DummyStrategy::Uniform, &[], d.sequence.len(), seed.wrapping_add(i as u64))?)))
        .collect::<Result<_, CliError>>()?;
    out.push(("dummy_uniform".to_string(), uniform));

    let train_labels: Vec<u8> = train_days
        .iter()
        .filter_map(|d| reference.get(&key(d)))
        .flat_map(|r| r.labels.iter().flatten().copied())
        .collect();
    if !train_labels.is_empty() {
        let mf: Predictions = eval_days
            .iter()
            .map(|d| Ok((key(d), dummy_classifier(DummyStrategy::MostFrequent, &train_labels, d.sequence.len(), seed)?)))
            .collect::<Result<_, CliError>>()?;
        out.push(("dummy_most_frequent".to_string(), mf));
    }

    for (suffix, imp) in [("zeros", BinaryImpute::Zeros), ("most_frequent", BinaryImpute::MostFrequent)] {
        let km = KMeansClassifier::fit(&train, imp, seed)?;
        let gmm = GmmClassifier::fit(&train, imp, seed)?;
        let mut kp = Predictions::new();
        let mut gp = Predictions::new();
        for d in eval_days {
            kp.insert(key(d), km.predict(&d.sequence)?);
            gp.insert(key(d), gmm.predict(&d.sequence)?);
        }
        out.push((format!("kmeans_{suffix}"), kp));
        out.push((format!("gmm_{suffix}"), gp));
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalJson<'a> {
    generated_at: String,
    #[serde(flatten)]
    report: &'a EvalReport,
}

pub fn evaluate(
    ctx: Context,
    predictions: Option<PathBuf>,
    labels: Option<PathBuf>,
    days: Option<PathBuf>,
    train_days: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    no_baselines: bool,
) -> Result<(), CliError> {
    let pred_path = ctx.path(predictions, &ctx.cfg.paths.predictions, Some("predictions.jsonl"), "predictions input")?;
    let label_path = ctx.path(labels, &ctx.cfg.paths.labels, None, "reference labels")?;
    let dir = ctx.out_dir(out_dir)?;
    let reference = load_reference(&ctx, &label_path)?;
    let hhmm: Predictions = load_predictions(&pred_path)?
        .into_iter()
        .map(|p| ((p.subject_id, p.date), p.binary))
        .collect();
    let mut methods = vec![("hhmm".to_string(), hhmm)];

    let days_path = days.or_else(|| ctx.cfg.paths.days.clone());
    if ctx.cfg.evaluate.baselines && !no_baselines {
        if let Some(p) = &days_path {
            let eval_days = load_days(p)?;
            let train = match train_days.or_else(|| ctx.cfg.paths.train_days.clone()) {
                Some(tp) => load_days(&tp)?,
                None => eval_days.clone(),
            };
            methods.extend(baseline_predictions(&ctx, &eval_days, &train, &reference)?);
        }
    }

    let rules = ScoringRules {
        calendar: ctx.cfg.indicators.calendar.clone(),
        merge_gap: ctx.cfg.indicators.merge_gap,
    };
    let report = EvalReport::build(&methods, &reference, &rules)?;
    write_json(
        &dir.join("eval.json"),
        &EvalJson {
            generated_at: ctx.generated_at(),
            report: &report,
        },
    )?;
    let mut w = create(&dir.join("eval.csv"))?;
    report.write_summary_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("eval_indicators.csv"))?;
    report.write_indicator_csv(&mut w)?;
    w.flush()?;
    let h = report.method("hhmm").expect("hhmm is always scored");
    let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "evaluate: {} sequences, hhmm accuracy {} sensitivity {} specificity {}, {} methods -> {}",
        h.n_sequences,
        f(h.accuracy.mean),
        f(h.sensitivity.mean),
        f(h.specificity.mean),
        report.methods.len(),
        dir.display()
    );
    Ok(())
}

pub fn simulate(
    ctx: Context,
    out_dir: Option<PathBuf>,
    subjects: Option<usize>,
    days: Option<usize>,
    format: Option<String>,
) -> Result<(), CliError> {
    let dir = ctx.out_dir(out_dir)?;
    let sim = &ctx.cfg.simulate;
    let n_subjects = subjects.unwrap_or(sim.subjects);
    let n_days = days.unwrap_or(sim.days);
    let format = format.unwrap_or_else(|| sim.format.clone());
    if n_subjects == 0 {
        return Err(CliError::Usage("need at least one subject".into()));
    }
    let mut scenario = sim.scenario.clone();
    scenario.seed = ctx.cfg.seed;
    let cohort = simulate_cohort(&scenario, n_subjects, n_days)?;

    let records: Vec<_> = cohort.iter().flat_map(|s| s.records.iter().cloned()).collect();
    let records_path = match format.as_str() {
        "csv" => {
            let p = dir.join("records.csv");
            let mut w = create(&p)?;
            write_records_csv(&records, &mut w)?;
            w.flush()?;
            p
        }
        "jsonl" => {
            let p = dir.join("records.jsonl");
            let mut w = create(&p)?;
            write_records_jsonl(&records, &mut w)?;
            w.flush()?;
            p
        }
        other => return Err(CliError::Usage(format!("unknown record format {other:?}"))),
    };

    let episodes: Vec<_> = cohort.iter().flat_map(|s| s.episodes.iter().cloned()).collect();
    let mut w = create(&dir.join("truth_episodes.jsonl"))?;
    write_reference_jsonl(&episodes, &mut w)?;
    w.flush()?;

    let mut grid = ReferenceSet::new();
    let mut daily = Vec::new();
    for s in &cohort {
        for t in &s.truth {
            grid.insert(
                (s.subject_id.clone(), t.date),
                ReferenceDay {
                    labels: t.binary.iter().map(|&b| Some(b)).collect(),
                    indicators: Some(t.indicators),
                },
            );
            daily.push(DayRecord {
                subject_id: s.subject_id.clone(),
                date: t.date,
                day_type: scenario.calendar.classify(t.date),
                indicators: Some(t.indicators),
            });
        }
    }
    let mut w = create(&dir.join("truth_slots.csv"))?;
    write_reference_csv(&grid, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("truth_daily.csv"))?;
    write_daily_csv(&daily, &mut w)?;
    w.flush()?;
    println!(
        "simulate: {n_subjects} subjects x {n_days} days, {} records -> {}",
        records.len(),
        records_path.display()
    );
    Ok(())
}
