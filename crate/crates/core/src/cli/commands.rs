use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{CliError, RunConfig};
use crate::error_model::{build_error_table, rank_label_members};
use crate::ingest::{
    load_forecasts, load_observations, slice_scenario, synthesize_dataset, write_forecasts,
    write_observations, Dataset, SynthConfig,
};
use crate::kv::{KvMap, KvWriter};
use crate::pipeline::{evaluate, forecast_origin, HourForecast};
use crate::qrf::{oob_coverage, Forest};
use crate::scoring::{
    interval_coverage, mae_median, mean_by_lead_bin, write_aggregates, write_score_records,
    ScoreRecord, INTERVALS,
};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    finish(w)
}

fn load_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    let forecasts = load_forecasts(&config.forecasts)?;
    let observations = load_observations(&config.observations)?;
    let site = config
        .observations
        .file_stem()
        .map_or_else(|| "site".to_string(), |s| s.to_string_lossy().into_owned());
    log::info!(
        "loaded {} forecasts and {} observations",
        forecasts.len(),
        observations.len()
    );
    Ok(Dataset::new(site, forecasts, observations))
}

/// Writes a synthetic dataset to the configured forecast and observation
/// paths.
pub fn cmd_generate(config: &RunConfig) -> Result<(), CliError> {
    let synth = match &config.synth_config {
        Some(p) => SynthConfig::from_kv(&KvMap::read(p)?)?,
        None => SynthConfig::default(),
    };
    let ds = synthesize_dataset(&synth, config.seed)?;
    let mut w = create(&config.forecasts)?;
    write_forecasts(&mut w, &ds.forecasts)?;
    finish(w)?;
    let mut w = create(&config.observations)?;
    write_observations(&mut w, &ds.observations)?;
    finish(w)?;
    log::info!(
        "wrote {} forecasts and {} observations",
        ds.forecasts.len(),
        ds.observations.len()
    );
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub save: Option<PathBuf>,
    pub error_table: bool,
}

/// Trains one forest, on the window before `origin` when one is given and
/// on the whole dataset otherwise, then writes the forest and its
/// out-of-bag coverage.
pub fn cmd_train(config: &RunConfig, opts: &TrainOptions) -> Result<(), CliError> {
    let ds = load_dataset(config)?;
    let train = match config.origin {
        Some(origin) => slice_scenario(&ds, &config.pipeline.window(origin))?.0,
        None => ds,
    };
    let train = Dataset {
        forecasts: rank_label_members(&train.forecasts),
        ..train
    };
    let table = build_error_table(&train)?;
    if opts.error_table {
        let mut w = create(&config.out_path("error_table.csv"))?;
        table.write_csv(&mut w)?;
        finish(w)?;
    }

    let t = Instant::now();
    let forest = Forest::train(&table, &config.pipeline.forest)?;
    let train_secs = t.elapsed().as_secs_f64();
    log::info!(
        "trained {} trees on {} rows in {train_secs:.3} s",
        forest.trees().len(),
        table.len()
    );
    let save = opts
        .save
        .clone()
        .unwrap_or_else(|| config.out_path("forest.json"));
    let w = create(&save)?;
    forest.write_json(w)?;

    let t = Instant::now();
    let cov = oob_coverage(&forest, &table, &INTERVALS)?;
    let oob_secs = t.elapsed().as_secs_f64();
    write_text(&config.out_path("oob_coverage.csv"), &cov.to_csv())?;

    let mut s = KvWriter::default();
    s.push("rows", table.len());
    s.push("labels", table.label_set.len());
    s.push("skipped_no_observation", table.skipped_no_observation);
    s.push("num_trees", forest.trees().len());
    s.push("sample_count", config.pipeline.forest.sample_count);
    s.push("forest_seed", config.pipeline.forest.seed);
    s.push("oob_skipped_always_in_bag", cov.skipped_always_in_bag);
    let overall = cov.overall();
    if let Some(c) = overall.coverage() {
        for (w, v) in INTERVALS.iter().zip(c) {
            s.push(format!("oob_coverage{}", (w * 100.0).round()), v);
        }
    }
    s.push("train_seconds", format!("{train_secs:.3}"));
    s.push("oob_seconds", format!("{oob_secs:.3}"));
    s.push("forest_file", save.display());
    write_text(&config.out_path("train_summary.txt"), &s.render())
}

fn bound(h: &HourForecast, p: f64) -> f64 {
    h.combined
        .quantiles
        .value_at(p)
        .unwrap_or_else(|| h.cdf.quantile(p).expect("probability inside (0, 1)"))
}

/// Forecast products for one origin: quantiles, 80% and 95% intervals,
/// simulated outcomes, threshold probabilities and CDF probes per hour.
pub fn cmd_forecast(config: &RunConfig) -> Result<(), CliError> {
    let origin = config
        .origin
        .ok_or_else(|| CliError::Usage("forecast needs --origin".into()))?;
    let ds = load_dataset(config)?;
    let run = forecast_origin(&ds, origin, &config.pipeline)?;

    let mut q = create(&config.out_path("forecast_quantiles.csv"))?;
    let mut iv = create(&config.out_path("forecast_intervals.csv"))?;
    let mut sm = create(&config.out_path("forecast_samples.csv"))?;
    let mut pb = create(&config.out_path("forecast_prob_below.csv"))?;
    let mut cd = create(&config.out_path("forecast_cdf.csv"))?;
    writeln!(q, "valid_time,lead_hours,level,value_degC")?;
    writeln!(
        iv,
        "valid_time,lead_hours,contributing,median,lower80,upper80,lower95,upper95"
    )?;
    writeln!(sm, "valid_time,lead_hours,draw,value_degC")?;
    writeln!(pb, "valid_time,lead_hours,threshold,prob_below,prob_below_sampled")?;
    writeln!(cd, "valid_time,lead_hours,value_degC,cdf")?;

    let thr = config.threshold;
    for h in &run.hours {
        let c = &h.combined;
        let (vt, lead) = (c.valid_time, c.lead_hours);
        for (level, value) in c.quantiles.iter() {
            writeln!(q, "{vt},{lead},{level},{value}")?;
        }
        writeln!(
            iv,
            "{vt},{lead},{},{},{},{},{},{}",
            c.contributing_count,
            bound(h, 0.5),
            bound(h, 0.1),
            bound(h, 0.9),
            bound(h, 0.025),
            bound(h, 0.975)
        )?;
        let draws = h.cdf.sample(config.samples, config.seed.wrapping_add(lead as u64));
        for (i, x) in draws.iter().enumerate() {
            writeln!(sm, "{vt},{lead},{i},{x}")?;
        }
        let sampled = draws.iter().filter(|&&x| x < thr).count() as f64 / draws.len() as f64;
        writeln!(pb, "{vt},{lead},{thr},{},{sampled}", h.cdf.prob_below(thr))?;
        let (lo, hi) = match h.cdf.point_mass() {
            Some(x) => (x - 1.0, x + 1.0),
            None => (h.cdf.quantile(0.001)?, h.cdf.quantile(0.999)?),
        };
        for k in 0..=100 {
            let x = lo + (hi - lo) * k as f64 / 100.0;
            writeln!(cd, "{vt},{lead},{x},{}", h.cdf.cdf(x))?;
        }
    }
    for w in [q, iv, sm, pb, cd] {
        finish(w)?;
    }

    let mut s = KvWriter::default();
    s.push("origin", origin);
    s.push("hours", run.hours.len());
    s.push("train_rows", run.table.len());
    s.push("skipped_no_observation", run.table.skipped_no_observation);
    s.push("skipped_unknown_label", run.skipped_unknown_label);
    s.push("threshold", thr);
    s.push("samples_per_hour", config.samples);
    s.push("train_seconds", format!("{:.3}", run.timings.train.as_secs_f64()));
    write_text(&config.out_path("forecast_summary.txt"), &s.render())
}

fn push_overall(s: &mut KvWriter, prefix: &str, records: &[ScoreRecord]) -> Result<(), CliError> {
    let err = |e: crate::scoring::ScoringError| CliError::Data(e.to_string());
    if prefix.is_empty() {
        for w in INTERVALS {
            s.push(
                format!("coverage{}", (w * 100.0).round()),
                interval_coverage(records, w).map_err(err)?,
            );
        }
    }
    s.push(format!("{prefix}mae_median"), mae_median(records).map_err(err)?);
    let crps: Vec<f64> = records.iter().map(|r| r.crps).collect();
    s.push(format!("{prefix}crps_mean"), crps.iter().sum::<f64>() / crps.len() as f64);
    let logs: Vec<f64> = records.iter().filter_map(|r| r.log_score).collect();
    s.push(format!("{prefix}log_score_n"), logs.len());
    if !logs.is_empty() {
        s.push(
            format!("{prefix}log_score_mean"),
            logs.iter().sum::<f64>() / logs.len() as f64,
        );
    }
    for (start, m) in mean_by_lead_bin(records, 24, |r| Some(r.crps)) {
        s.push(format!("{prefix}crps_lead_bin_{start:03}"), m.mean);
    }
    Ok(())
}

/// Scores `n_scenarios` random origins and writes per-scenario score files,
/// per-lead aggregates, a summary and stage timings.
pub fn cmd_evaluate(config: &RunConfig) -> Result<(), CliError> {
    let ds = load_dataset(config)?;
    let t = Instant::now();
    let report = evaluate(&ds, &config.pipeline, config.n_scenarios, config.seed)?;
    let elapsed = t.elapsed().as_secs_f64();

    let mut index = create(&config.out_path("scenarios.csv"))?;
    writeln!(
        index,
        "scenario,origin,forest_seed,train_rows,skipped_no_observation,skipped_unknown_label,unobserved_hours,latest_training_observation,leakage_free"
    )?;
    for s in &report.scenarios {
        let base = format!("scenarios/scenario_{:03}", s.index);
        let mut w = create(&config.out_path(format!("{base}_scores.csv")))?;
        write_score_records(&mut w, &s.records)?;
        finish(w)?;
        let mut w = create(&config.out_path(format!("{base}_nwp_scores.csv")))?;
        write_score_records(&mut w, &s.raw_records)?;
        finish(w)?;
        writeln!(
            index,
            "{},{},{},{},{},{},{},{},{}",
            s.index,
            s.origin,
            s.forest_seed,
            s.train_rows,
            s.skipped_no_observation,
            s.skipped_unknown_label,
            s.unobserved_hours,
            s.latest_training_observation
                .map_or_else(String::new, |t| t.to_string()),
            s.leakage_free()
        )?;
    }
    finish(index)?;

    let mut w = create(&config.out_path("aggregates.csv"))?;
    write_aggregates(&mut w, &report.aggregates, "", true)?;
    write_aggregates(&mut w, &report.raw_aggregates, "nwp_", false)?;
    finish(w)?;

    let records = report.all_records();
    let raw = report.all_raw_records();
    let leaks = report.scenarios.iter().filter(|s| !s.leakage_free()).count();
    let mut s = KvWriter::default();
    s.push("site_id", &ds.site_id);
    s.push("n_scenarios", report.scenarios.len());
    s.push("seed", config.seed);
    s.push("records", records.len());
    s.push("lead_aggregates", report.aggregates.len());
    push_overall(&mut s, "", &records)?;
    push_overall(&mut s, "nwp_", &raw)?;
    s.push("leakage_violations", leaks);
    s.push(
        "skipped_unknown_label",
        report.scenarios.iter().map(|s| s.skipped_unknown_label).sum::<usize>(),
    );
    s.push(
        "unobserved_hours",
        report.scenarios.iter().map(|s| s.unobserved_hours).sum::<usize>(),
    );
    write_text(&config.out_path("summary.txt"), &s.render())?;

    let tm = &report.timings;
    let mut t = KvWriter::default();
    t.push("wall_seconds", format!("{elapsed:.3}"));
    t.push("slice_seconds", format!("{:.3}", tm.slice.as_secs_f64()));
    t.push("error_table_seconds", format!("{:.3}", tm.error_table.as_secs_f64()));
    t.push("train_seconds", format!("{:.3}", tm.train.as_secs_f64()));
    t.push("predict_seconds", format!("{:.3}", tm.predict.as_secs_f64()));
    t.push("score_seconds", format!("{:.3}", tm.score.as_secs_f64()));
    write_text(&config.out_path("timings.txt"), &t.render())?;

    if leaks > 0 {
        return Err(CliError::Numerical(format!(
            "{leaks} scenarios trained on observations at or after their origin"
        )));
    }
    log::info!("evaluated {} scenarios in {elapsed:.1} s", report.scenarios.len());
    Ok(())
}
