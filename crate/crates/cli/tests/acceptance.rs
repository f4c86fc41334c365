//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/common/mod.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono_tz::Tz;
use rand::Rng;
use sleep_hhmm::evaluation::{
    indicator_errors, reference_from_episodes, BinaryImpute, EvalReport, GmmClassifier, Predictions, ScoringRules,
};
use sleep_hhmm::hhmm::{
    fit_baum_welch, impute, initialize, log_forward, path_log_score, sample_many, viterbi, viterbi_with_score,
    FitConfig, HhmmParams, ObservationSequence, Supervision,
};
use sleep_hhmm::indicators::{
    asleep_states, daily_indicators, predict_days, weekly_indicators, DailyIndicators, DayCalendar, DayType,
};
use sleep_hhmm::model_selection::{aic, bic, fit_cell, sweep};
use sleep_hhmm::preprocessing::{
    binarize_steps, build_day_vectors, clean_actigraphy, filter_sequences, merge_usage, min_max_normalize, passes,
    remove_outliers, signal_mode, DayFlags, DayVector, FilterMode, MissingThresholds, RawRecord,
};
use sleep_hhmm::synthdata::{simulate_cohort, subject_id, Missingness, SubjectScenario};

type Outcome = Result<String, String>;

fn semi2() -> Supervision {
    Supervision::SemiSupervised { silent_states: 2 }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn three_state() -> HhmmParams {
    let disc_probs = vec![
        vec![vec![0.95, 0.05], vec![0.6, 0.4], vec![0.2, 0.8]],
        vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.3, 0.7]],
    ];
    HhmmParams {
        pi: vec![0.5, 0.3, 0.2],
        transitions: vec![vec![0.9, 0.07, 0.03], vec![0.05, 0.85, 0.1], vec![0.1, 0.1, 0.8]],
        means: vec![vec![0.1, 0.1], vec![0.5, 0.6], vec![0.9, 0.2]],
        covariances: vec![
            vec![vec![0.004, 0.001], vec![0.001, 0.004]],
            vec![vec![0.006, 0.0], vec![0.0, 0.005]],
            vec![vec![0.005, -0.001], vec![-0.001, 0.004]],
        ],
        frozen: HhmmParams::unfrozen_mask(&disc_probs),
        disc_probs,
        fully_missing: Default::default(),
    }
}

/// Two silent states (no steps, no usage) and two active ones.
fn four_state() -> HhmmParams {
    let disc_probs = vec![
        vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.6, 0.4], vec![0.3, 0.7]],
        vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.5], vec![0.2, 0.8]],
    ];
    let mut p = HhmmParams {
        pi: vec![0.1, 0.1, 0.4, 0.4],
        transitions: vec![
            vec![0.9, 0.06, 0.02, 0.02],
            vec![0.06, 0.9, 0.02, 0.02],
            vec![0.02, 0.02, 0.88, 0.08],
            vec![0.02, 0.02, 0.08, 0.88],
        ],
        means: vec![vec![0.05, 0.05], vec![0.25, 0.1], vec![0.5, 0.6], vec![0.85, 0.3]],
        covariances: vec![vec![vec![0.003, 0.0], vec![0.0, 0.003]]; 4],
        frozen: HhmmParams::unfrozen_mask(&disc_probs),
        disc_probs,
        fully_missing: Default::default(),
    };
    p.freeze_silent_state(0);
    p.freeze_silent_state(1);
    p
}

fn sampled(params: &HhmmParams, count: usize, len: usize, seed: u64) -> Vec<ObservationSequence> {
    sample_many(params, count, len, seed).unwrap().into_iter().map(|(s, _)| s).collect()
}

fn mask_cells(seqs: &mut [ObservationSequence], rate: f64, seed: u64) {
    let mut r = oracle::rng(seed);
    for s in seqs {
        for t in 0..s.len() {
            for m in 0..s.n_continuous() {
                if r.random::<f64>() < rate {
                    s.set_continuous(t, m, None).unwrap();
                }
            }
            for m in 0..s.n_discrete() {
                if r.random::<f64>() < rate {
                    s.set_discrete(t, m, None);
                }
            }
        }
    }
}

/// Fitted-state index for each true state, by nearest means over all
/// permutations.
fn align(truth: &HhmmParams, fitted: &HhmmParams) -> Vec<usize> {
    let n = truth.n_states();
    oracle::all_paths(n, n)
        .into_iter()
        .filter(|p| {
            let mut q = p.clone();
            q.sort();
            q.dedup();
            q.len() == n
        })
        .map(|perm| {
            let cost: f64 = (0..n)
                .map(|i| {
                    truth.means[i]
                        .iter()
                        .zip(&fitted.means[perm[i]])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum();
            (cost, perm)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
        .1
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let instances = 240;
    for case in 0..instances {
        let mut r = oracle::rng(case);
        let n = r.random_range(1..=3);
        let len = r.random_range(1..=8);
        let mc = r.random_range(0..=2);
        let p = oracle::random_params(n, mc, &mut r);
        let miss = if case % 3 == 0 { 0.25 } else { 0.0 };
        let seq = oracle::random_sequence(len, mc, miss, &mut r);
        let e = oracle::enumerate(&p, &seq);
        let (_, ll) = log_forward(&p, &seq).unwrap();
        let (path, score) = viterbi_with_score(&p, &seq).unwrap();
        let rescored = path_log_score(&p, &seq, &path).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        let errs = [rel(ll, e.likelihood.ln()), rel(score, e.best_prob.ln()), rel(rescored, e.best_prob.ln())];
        for (what, err) in ["loglik", "viterbi score", "viterbi path score"].iter().zip(errs) {
            worst = worst.max(err);
            if err > 1e-9 {
                failures.push(format!("case {case} {what} rel err {err:.2e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "{instances} instances, worst relative error {worst:.1e}, {}",
        secs(elapsed)
    );
    if !failures.is_empty() {
        return Err(format!("{detail}; {}", failures[..failures.len().min(3)].join("; ")));
    }
    check(elapsed < Duration::from_secs(30), detail)
}

fn em_monotonicity() -> Outcome {
    let truth = three_state();
    let mut runs = 0;
    let mut worst_drop: f64 = 0.0;
    let mut problems = Vec::new();
    for init_seed in 0..50u64 {
        let miss = if init_seed % 2 == 0 { 0.0 } else { 0.2 };
        let n = 2 + (init_seed % 3) as usize;
        let mut seqs = sampled(&truth, 10, 96, 500 + init_seed);
        mask_cells(&mut seqs, miss, 900 + init_seed);
        let config = FitConfig {
            max_iters: 60,
            ..FitConfig::default()
        };
        let outcome = initialize(&seqs, n, Supervision::Unsupervised, config.cov_floor, init_seed)
            .and_then(|init| fit_baum_welch(&init, &seqs, &config));
        match outcome {
            Ok(out) => {
                runs += 1;
                for w in out.loglik_trace.windows(2) {
                    worst_drop = worst_drop.max(w[0] - w[1]);
                }
            }
            Err(e) => problems.push(format!("init {init_seed}: {e}")),
        }
    }
    let detail = format!(
        "{runs}/50 fits (half with 20% missing cells), largest step decrease {worst_drop:.1e}"
    );
    if !problems.is_empty() {
        return Err(format!("{detail}; {}", problems.join("; ")));
    }
    check(worst_drop <= 1e-8, detail)
}

fn parameter_recovery() -> Outcome {
    let start = Instant::now();
    let truth = three_state();
    let mut hits = 0;
    let mut errs = Vec::new();
    for seed in 0..10u64 {
        let seqs = sampled(&truth, 200, 144, 7000 + seed);
        let fit = FitConfig {
            seed,
            ..FitConfig::default()
        };
        let Ok((out, _)) = fit_cell(&seqs, 3, Supervision::Unsupervised, &fit, 1) else {
            errs.push(f64::NAN);
            continue;
        };
        let perm = align(&truth, &out.params);
        let mut a_err: f64 = 0.0;
        let mut mu_err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                a_err = a_err.max((truth.transitions[i][j] - out.params.transitions[perm[i]][perm[j]]).abs());
            }
            for m in 0..2 {
                mu_err = mu_err.max((truth.means[i][m] - out.params.means[perm[i]][m]).abs());
            }
        }
        errs.push(a_err.max(mu_err));
        hits += usize::from(a_err <= 0.05 && mu_err <= 0.05);
    }
    let elapsed = start.elapsed();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    check(
        hits >= 8 && elapsed < Duration::from_secs(300),
        format!("{hits}/10 seeds recovered, worst max-abs error {worst:.4}, {}", secs(elapsed)),
    )
}

fn constraint_preservation() -> Outcome {
    let truth = three_state();
    let mut seqs = sampled(&truth, 40, 144, 23);
    mask_cells(&mut seqs, 0.1, 8);
    let init = initialize(&seqs, 4, semi2(), 1e-6, 2).map_err(|e| e.to_string())?;
    // One EM iteration per call so that exact convergence cannot end the run early.
    let step = FitConfig {
        max_iters: 1,
        ..FitConfig::default()
    };
    let mut params = init.clone();
    let mut iterations = 0;
    for _ in 0..100 {
        params = fit_baum_welch(&params, &seqs, &step).map_err(|e| e.to_string())?.params;
        iterations += 1;
    }
    let exact = (0..2).all(|m| {
        (0..2).all(|q| {
            params.disc_probs[m][q][1].to_bits() == 0f64.to_bits()
                && params.disc_probs[m][q][0].to_bits() == 1f64.to_bits()
        })
    }) && params.frozen == init.frozen;
    let mut active_slots = 0;
    let mut violations = 0;
    for s in &seqs {
        let path = viterbi(&params, s).map_err(|e| e.to_string())?;
        for (t, &q) in path.iter().enumerate() {
            if (0..2).any(|m| s.discrete_value(t, m) == Some(1)) {
                active_slots += 1;
                violations += usize::from(q < 2);
            }
        }
    }
    check(
        exact && iterations == 100 && violations == 0,
        format!(
            "{iterations} iterations, frozen entries bit-exact: {exact}, silent states decoded at {violations} of {active_slots} active slots"
        ),
    )
}

fn imputation() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut r = oracle::rng(10_000 + case);
        let p = oracle::random_params(1, 2, &mut r);
        let (mu, s) = (&p.means[0], &p.covariances[0]);
        let hidden = (case % 2) as usize;
        let shown = 1 - hidden;
        let x = -2.0 + 4.0 * r.random::<f64>();
        let mut row = vec![None, None];
        row[shown] = Some(x);
        let seq = ObservationSequence::from_rows(2, 1, &[row], &[vec![Some(0)]]).unwrap();
        let filled = impute(&p, &seq, &[vec![1.0]]).map_err(|e| e.to_string())?;
        let expected = mu[hidden] + s[hidden][shown] / s[shown][shown] * (x - mu[shown]);
        worst = worst.max((filled.continuous_value(0, hidden).unwrap() - expected).abs());
        if filled.continuous_value(0, shown) != Some(x) {
            return Err(format!("case {case}: observed value changed"));
        }
    }
    let mut r = oracle::rng(77);
    let mut diag = oracle::random_params(1, 2, &mut r);
    diag.covariances[0][0][1] = 0.0;
    diag.covariances[0][1][0] = 0.0;
    let seq = ObservationSequence::from_rows(2, 1, &[vec![Some(1.7), None]], &[vec![None]]).unwrap();
    let filled = impute(&diag, &seq, &[vec![1.0]]).map_err(|e| e.to_string())?;
    let diag_exact = filled.continuous_value(0, 1).map(f64::to_bits) == Some(diag.means[0][1].to_bits());
    check(
        worst <= 1e-9 && diag_exact,
        format!("100 cases, worst abs error {worst:.1e}, diagonal case returns the mean exactly: {diag_exact}"),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let scenario = SubjectScenario::default();
    let cohort = simulate_cohort(&scenario, 30, 20).map_err(|e| e.to_string())?;
    let records: Vec<RawRecord> = cohort.iter().flat_map(|s| s.records.iter().cloned()).collect();
    let episodes: Vec<_> = cohort.iter().flat_map(|s| s.episodes.iter().cloned()).collect();
    let (days, _) = build_day_vectors(&records, |_| Tz::UTC).map_err(|e| e.to_string())?;
    let train_ids: Vec<String> = (0..15).map(subject_id).collect();
    let (train_days, test_days): (Vec<_>, Vec<_>) = days.into_iter().partition(|d| train_ids.contains(&d.subject_id));
    let th = MissingThresholds::default();
    let (train, _) = filter_sequences(train_days, FilterMode::Train, &th);
    let (test, _) = filter_sequences(test_days, FilterMode::EvalComplete, &th);
    let seqs: Vec<_> = train.iter().map(|d| d.sequence.clone()).collect();

    let (out, _) = fit_cell(&seqs, 6, semi2(), &FitConfig::default(), 1).map_err(|(e, _)| e.to_string())?;
    let asleep = asleep_states(&out.params, 2).map_err(|e| e.to_string())?;
    let preds = predict_days(&out.params, &test, &asleep, 3).map_err(|e| e.to_string())?;
    let key = |d: &DayVector| (d.subject_id.clone(), d.date);
    let hhmm: Predictions = test.iter().zip(preds).map(|(d, p)| (key(d), p.binary)).collect();
    let gmm_model = GmmClassifier::fit(&seqs, BinaryImpute::Zeros, 0).map_err(|e| e.to_string())?;
    let gmm: Predictions = test
        .iter()
        .map(|d| Ok((key(d), gmm_model.predict(&d.sequence)?)))
        .collect::<sleep_hhmm::Result<_>>()
        .map_err(|e| e.to_string())?;

    let reference = reference_from_episodes(&episodes, |_| Tz::UTC).map_err(|e| e.to_string())?;
    let rules = ScoringRules {
        calendar: DayCalendar::default(),
        merge_gap: 3,
    };
    let report = EvalReport::build(&[("hhmm".into(), hhmm), ("gmm".into(), gmm)], &reference, &rules)
        .map_err(|e| e.to_string())?;
    let h = report.method("hhmm").unwrap();
    let g = report.method("gmm").unwrap();
    let (acc, sens, spec) = (
        h.accuracy.mean.unwrap_or(0.0),
        h.sensitivity.mean.unwrap_or(0.0),
        h.specificity.mean.unwrap_or(0.0),
    );
    let gacc = g.accuracy.mean.unwrap_or(1.0);
    check(
        acc >= 0.95 && sens >= 0.90 && spec >= 0.90 && acc > gacc,
        format!(
            "{} train / {} test days, hhmm accuracy {acc:.4} sensitivity {sens:.4} specificity {spec:.4}, gmm accuracy {gacc:.4}, {}",
            train.len(),
            test.len(),
            secs(start.elapsed())
        ),
    )
}

fn indicator_arithmetic() -> Outcome {
    let mut scenario = SubjectScenario {
        jitter_minutes: 0.0,
        missingness: Missingness::uniform(0.0),
        ..SubjectScenario::default()
    };
    // Resting levels are exact so they stay the mode of each day.
    let e = &mut scenario.emissions;
    e.actigraphy_asleep.sd = 0.0;
    e.light_asleep.sd = 0.0;
    e.actigraphy_awake.sd = 0.01;
    e.light_awake.sd = 0.01;
    let cohort = simulate_cohort(&scenario, 3, 8).map_err(|e| e.to_string())?;
    let records: Vec<RawRecord> = cohort.iter().flat_map(|s| s.records.iter().cloned()).collect();
    let (days, _) = build_day_vectors(&records, |_| Tz::UTC).map_err(|e| e.to_string())?;
    let (days, _) = filter_sequences(days, FilterMode::EvalComplete, &MissingThresholds::default());
    let seqs: Vec<_> = days.iter().map(|d| d.sequence.clone()).collect();
    // One sleep level, so one silent state.
    let semi1 = Supervision::SemiSupervised { silent_states: 1 };
    let (out, _) = fit_cell(&seqs, 3, semi1, &FitConfig::default(), 1).map_err(|(e, _)| e.to_string())?;
    let asleep = asleep_states(&out.params, 1).map_err(|e| e.to_string())?;
    let preds = predict_days(&out.params, &days, &asleep, 3).map_err(|e| e.to_string())?;
    let mut decoded: Vec<DailyIndicators> = preds.iter().filter_map(|p| p.episode.map(daily_indicators)).collect();
    // 03:30 is 810 minutes after the 14:00 window start.
    let exact = decoded.len() == days.len() && decoded.iter().all(|d| d.spt == 480.0 && d.cm == 810.0);
    decoded.dedup();

    let work = DailyIndicators {
        start: 570.0,
        end: 1050.0,
        spt: 480.0,
        cm: 810.0,
    };
    let free = DailyIndicators {
        start: 660.0,
        end: 1140.0,
        spt: 480.0,
        cm: 900.0,
    };
    let mut week = vec![(DayType::Working, work); 4];
    week.extend([(DayType::Free, free); 2]);
    let sj = weekly_indicators(&week).map(|w| w.sj).map_err(|e| format!("{e:?}"))?;

    let pairs: Vec<(f64, f64)> = [570.0, 1050.0, 480.0, 810.0].iter().map(|&x| (x, x)).collect();
    let zero = indicator_errors(&pairs).map(|s| s.rmse == 0.0 && s.mae == 0.0).unwrap_or(false);
    check(
        exact && sj == 90.0 && zero,
        format!(
            "{} decoded days all SPT 480 / CM 03:30: {exact} (distinct {:?}), weekly SJ {sj} min, identical lists give zero error: {zero}",
            days.len(),
            decoded.iter().map(|d| (d.spt, d.cm)).collect::<Vec<_>>()
        ),
    )
}

fn model_selection() -> Outcome {
    let start = Instant::now();
    let truth = four_state();
    let mut picks = Vec::new();
    let mut mismatches = 0;
    let mut rows = 0;
    for seed in 0..10u64 {
        let seqs = sampled(&truth, 20, 144, 1000 + seed);
        let fit = FitConfig {
            seed,
            ..FitConfig::default()
        };
        let report = sweep(&seqs, 3..=10, &[semi2()], &fit, 3).map_err(|e| e.to_string())?;
        picks.push(report.best_by_bic(None).map_or(0, |r| r.n_states));
        for r in &report.rows {
            rows += 1;
            let (Some(ll), Some(k)) = (r.loglik, r.n_free_params) else {
                mismatches += 1;
                continue;
            };
            let b = bic(ll, k, report.n_observations).map_err(|e| e.to_string())?;
            if r.bic.map(f64::to_bits) != Some(b.to_bits()) || r.aic.map(f64::to_bits) != Some(aic(ll, k).to_bits()) {
                mismatches += 1;
            }
        }
    }
    let hits = picks.iter().filter(|&&n| n == 4).count();
    check(
        hits >= 6 && mismatches == 0,
        format!(
            "BIC picked 4 states in {hits}/10 seeds (picks {picks:?}), {mismatches} of {rows} rows fail the exact recompute, {}",
            secs(start.elapsed())
        ),
    )
}

fn fixture_day(missing: [usize; 4]) -> DayVector {
    let cont: Vec<Vec<Option<f64>>> = (0..144)
        .map(|t| vec![(t >= missing[0]).then_some(0.5), (t >= missing[1]).then_some(0.5)])
        .collect();
    let disc: Vec<Vec<Option<u8>>> = (0..144)
        .map(|t| vec![(t >= missing[2]).then_some(1), (t >= missing[3]).then_some(0)])
        .collect();
    DayVector {
        subject_id: "f".into(),
        date: chrono::NaiveDate::from_ymd_opt(2024, 3, 4).unwrap(),
        sequence: ObservationSequence::from_rows(2, 2, &cont, &disc).unwrap(),
        flags: DayFlags::default(),
    }
}

fn preprocessing_fixtures() -> Outcome {
    let some = |v: &[f64]| v.iter().map(|&x| Some(x)).collect::<Vec<_>>();
    let mut failed = Vec::new();

    // Nineteen zeros and one 100: mean 5, sd sqrt(475) ~ 21.8, so 100 is 95 > 65.4 away.
    let mut spike = some(&[0.0; 19]);
    spike.push(Some(100.0));
    let mut expected = some(&[0.0; 19]);
    expected.push(None);
    if remove_outliers(&spike) != expected {
        failed.push("3-sigma rejection");
    }
    // Mode 2 is subtracted, -1 is dismissed, the rest spans [0, 3].
    let raw = some(&[2.0, 2.0, 2.0, 3.0, 5.0, 1.0]);
    if signal_mode(&raw) != Some(2.0) || signal_mode(&some(&[4.0, 1.0, 4.0, 1.0])) != Some(1.0) {
        failed.push("mode");
    }
    let cleaned = clean_actigraphy(&raw).values;
    if cleaned != vec![Some(0.0), Some(0.0), Some(0.0), Some(1.0 / 3.0), Some(1.0), None] {
        failed.push("mode-bias removal and negative dismissal");
    }
    if min_max_normalize(&[Some(2.0), Some(4.0), None, Some(6.0)]) != vec![Some(0.0), Some(0.5), None, Some(1.0)]
        || min_max_normalize(&some(&[3.0, 3.0])) != some(&[0.0, 0.0])
    {
        failed.push("min-max range");
    }
    let (steps, negatives) = binarize_steps(&[Some(0.0), Some(5.0), Some(-3.0), None, Some(0.4)]);
    if steps != vec![Some(0), Some(1), None, None, Some(1)] || negatives != 1 {
        failed.push("steps binarization");
    }
    let vals = [Some(0u8), Some(1), None];
    let (mut a, mut u, mut want) = (Vec::new(), Vec::new(), Vec::new());
    for x in vals {
        for y in vals {
            a.push(x);
            u.push(y);
            want.push(match (x, y) {
                (None, None) => None,
                (Some(p), None) | (None, Some(p)) => Some(p),
                (Some(p), Some(q)) => Some(p | q),
            });
        }
    }
    if merge_usage(&a, &u).ok() != Some(want) {
        failed.push("usage OR truth table");
    }

    let th = MissingThresholds::default();
    let mut boundary_ok = true;
    for ch in [0, 2, 3] {
        for (n, keep) in [(28, true), (29, false)] {
            let mut m = [0; 4];
            m[ch] = n;
            boundary_ok &= passes(&fixture_day(m), FilterMode::Train, &th) == keep;
        }
    }
    boundary_ok &= passes(&fixture_day([0, 43, 0, 0]), FilterMode::Train, &th);
    boundary_ok &= !passes(&fixture_day([0, 44, 0, 0]), FilterMode::Train, &th);
    if !boundary_ok {
        failed.push("20%/30% filters at 144 slots");
    }
    check(
        failed.is_empty(),
        if failed.is_empty() {
            "3-sigma, mode, bias, negatives, min-max, steps, OR table (9 cases), 28/29 and 43/44 slot boundaries".into()
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn run_pipeline(dir: &Path) -> Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_sleephmm");
    let d = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--out-dir".into(), d("sim"), "--subjects".into(), "3".into(), "--days".into(), "8".into()],
        vec!["preprocess".into(), "--input".into(), d("sim/records.csv"), "--output".into(), d("days.jsonl")],
        vec!["train".into(), "--input".into(), d("days.jsonl"), "--model".into(), d("model.json"), "--states".into(), "4".into()],
        vec!["select".into(), "--input".into(), d("days.jsonl"), "--out-dir".into(), d("sweep"), "--min-states".into(), "3".into(), "--max-states".into(), "4".into()],
        vec!["predict".into(), "--model".into(), d("model.json"), "--input".into(), d("days.jsonl"), "--output".into(), d("pred.jsonl")],
        vec!["indicators".into(), "--input".into(), d("pred.jsonl"), "--out-dir".into(), d("ind")],
        vec!["evaluate".into(), "--predictions".into(), d("pred.jsonl"), "--labels".into(), d("sim/truth_episodes.jsonl"), "--days".into(), d("days.jsonl"), "--out-dir".into(), d("eval")],
    ];
    for args in steps {
        let out = Command::new(bin)
            .args(["--fixed-clock", "--seed", "11"])
            .args(&args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(rel, std::fs::read(&path).unwrap());
        }
    }
}

fn determinism() -> Outcome {
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_pipeline(dir.path())?;
        let mut files = BTreeMap::new();
        collect_files(dir.path(), dir.path(), &mut files);
        trees.push(files);
    }
    let differing: Vec<&String> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    check(
        differing.is_empty() && trees[0].len() == trees[1].len() && trees[0].len() >= 12,
        format!("{} output files compared, differing: {differing:?}", trees[0].len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("EM monotonicity", em_monotonicity),
        ("parameter recovery", parameter_recovery),
        ("constraint preservation", constraint_preservation),
        ("imputation correctness", imputation),
        ("end-to-end synthetic SAR", end_to_end),
        ("indicator arithmetic", indicator_arithmetic),
        ("model selection", model_selection),
        ("preprocessing fixtures", preprocessing_fixtures),
        ("determinism", determinism),
    ];
    // ACCEPTANCE_ONLY=4,7 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failures = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
