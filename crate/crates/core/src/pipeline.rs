//! End-to-end runs: slice a scenario, learn the error model, turn each
//! current forecast into a distribution, combine per hour, and score.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::combine::{combine_timestep, standard_grid, CombineError, CombinedForecast, QuantileVector};
use crate::dist::PiecewiseCdf;
use crate::error_model::{
    build_error_table, rank_label_members, to_probabilistic, ErrorModelError, ErrorTable,
};
use crate::ingest::{slice_scenario, Dataset, IngestError, ScenarioWindow};
use crate::qrf::{CovariateVector, Forest, ForestConfig, QrfError};
use crate::scoring::{aggregate_by_lead, LeadAggregate, ScoreRecord};
use crate::time::HourStamp;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    ErrorModel(#[from] ErrorModelError),
    #[error(transparent)]
    Qrf(#[from] QrfError),
    #[error(transparent)]
    Combine(#[from] CombineError),
    #[error("only {rows} training rows, need at least {min}")]
    InsufficientTraining { rows: usize, min: usize },
    #[error("dataset too short: {0}")]
    DatasetTooShort(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub forest: ForestConfig,
    pub train_days: u32,
    pub horizon_hours: u32,
    /// Probability levels shared by every per-model forecast.
    pub levels: Vec<f64>,
    pub min_train_rows: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            forest: ForestConfig::default(),
            train_days: 14,
            horizon_hours: 168,
            levels: standard_grid(),
            min_train_rows: 1000,
        }
    }
}

impl PipelineConfig {
    pub fn window(&self, origin: HourStamp) -> ScenarioWindow {
        ScenarioWindow {
            origin,
            train_days: self.train_days,
            horizon_hours: self.horizon_hours,
        }
    }
}

/// Wall-clock time spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub slice: Duration,
    pub error_table: Duration,
    pub train: Duration,
    pub predict: Duration,
    pub score: Duration,
}

impl StageTimings {
    fn add(&mut self, other: &StageTimings) {
        self.slice += other.slice;
        self.error_table += other.error_table;
        self.train += other.train;
        self.predict += other.predict;
        self.score += other.score;
    }
}

/// The combined forecast for one hour and its distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct HourForecast {
    pub combined: CombinedForecast,
    pub cdf: PiecewiseCdf,
}

/// Products of one forecast origin.
#[derive(Debug, Clone)]
pub struct OriginForecast {
    pub origin: HourStamp,
    /// Hours `origin + 1 ..= origin + horizon` that some model covers.
    pub hours: Vec<HourForecast>,
    pub forest: Forest,
    pub table: ErrorTable,
    /// Rank-labelled current forecasts and the observations in the horizon.
    pub eval: Dataset,
    /// Current forecasts whose label the forest never saw.
    pub skipped_unknown_label: usize,
    pub timings: StageTimings,
}

/// Trains on the window before `origin` and forecasts the hours after it.
pub fn forecast_origin(
    dataset: &Dataset,
    origin: HourStamp,
    config: &PipelineConfig,
) -> Result<OriginForecast, PipelineError> {
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let (train, eval) = slice_scenario(dataset, &config.window(origin))?;
    let train = Dataset {
        forecasts: rank_label_members(&train.forecasts),
        ..train
    };
    let eval = Dataset {
        forecasts: rank_label_members(&eval.forecasts),
        ..eval
    };
    timings.slice = t.elapsed();

    let t = Instant::now();
    let table = build_error_table(&train)?;
    if table.len() < config.min_train_rows {
        return Err(PipelineError::InsufficientTraining {
            rows: table.len(),
            min: config.min_train_rows,
        });
    }
    timings.error_table = t.elapsed();

    let t = Instant::now();
    let forest = Forest::train(&table, &config.forest)?;
    timings.train = t.elapsed();

    let t = Instant::now();
    let horizon_end = origin.add_hours(config.horizon_hours as i64);
    let mut cache: HashMap<CovariateVector, QuantileVector> = HashMap::new();
    let mut by_hour: BTreeMap<HourStamp, Vec<_>> = BTreeMap::new();
    let mut skipped_unknown_label = 0;
    for f in &eval.forecasts {
        if f.valid_time <= origin || f.valid_time > horizon_end {
            continue;
        }
        let x = CovariateVector::new(f.lead_hours(), f.label());
        if !forest.knows_label(&x.model_label) {
            skipped_unknown_label += 1;
            continue;
        }
        let q = match cache.get(&x) {
            Some(q) => q,
            None => {
                let q = forest.predict_quantiles(&x, &config.levels)?;
                cache.entry(x).or_insert(q)
            }
        };
        by_hour
            .entry(f.valid_time)
            .or_default()
            .push(to_probabilistic(f, q)?);
    }
    let hours = by_hour
        .into_iter()
        .map(|(valid, forecasts)| {
            let lead = valid.hours_since(origin) as u32;
            let combined = combine_timestep(&forecasts, lead)?;
            let cdf = PiecewiseCdf::from_quantiles(&combined.quantiles);
            Ok(HourForecast { combined, cdf })
        })
        .collect::<Result<Vec<_>, CombineError>>()?;
    timings.predict = t.elapsed();

    Ok(OriginForecast {
        origin,
        hours,
        forest,
        table,
        eval,
        skipped_unknown_label,
        timings,
    })
}

/// Scores of one evaluation scenario.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub index: usize,
    pub origin: HourStamp,
    pub forest_seed: u64,
    /// Post-processed forecast scores, one per observed hour.
    pub records: Vec<ScoreRecord>,
    /// Raw-forecast comparator scores for the same hours.
    pub raw_records: Vec<ScoreRecord>,
    pub train_rows: usize,
    pub skipped_no_observation: usize,
    pub skipped_unknown_label: usize,
    /// Forecast hours without an observation to score against.
    pub unobserved_hours: usize,
    /// Latest observation time used in training.
    pub latest_training_observation: Option<HourStamp>,
    pub timings: StageTimings,
}

impl ScenarioResult {
    /// True when every training observation predates the origin.
    pub fn leakage_free(&self) -> bool {
        self.latest_training_observation
            .is_none_or(|t| t < self.origin)
    }
}

/// Runs one scenario at `origin`, training with `forest_seed`.
pub fn run_scenario(
    dataset: &Dataset,
    index: usize,
    origin: HourStamp,
    forest_seed: u64,
    config: &PipelineConfig,
) -> Result<ScenarioResult, PipelineError> {
    let mut cfg = config.clone();
    cfg.forest.seed = forest_seed;
    let run = forecast_origin(dataset, origin, &cfg)?;

    let t = Instant::now();
    let mut raw: BTreeMap<HourStamp, Vec<f64>> = BTreeMap::new();
    for f in &run.eval.forecasts {
        raw.entry(f.valid_time).or_default().push(f.value);
    }
    let mut records = Vec::with_capacity(run.hours.len());
    let mut raw_records = Vec::with_capacity(run.hours.len());
    let mut unobserved_hours = 0;
    for h in &run.hours {
        let c = &h.combined;
        let Some(y) = run.eval.observation_at(c.valid_time) else {
            unobserved_hours += 1;
            continue;
        };
        records.push(ScoreRecord::for_forecast(
            c.valid_time,
            c.lead_hours,
            &c.quantiles,
            &h.cdf,
            y,
        ));
        let values = &raw[&c.valid_time];
        raw_records.push(
            ScoreRecord::for_raw_ensemble(c.valid_time, c.lead_hours, values, y)
                .expect("hour has forecasts"),
        );
    }
    let mut timings = run.timings;
    timings.score = t.elapsed();

    Ok(ScenarioResult {
        index,
        origin,
        forest_seed,
        records,
        raw_records,
        train_rows: run.table.len(),
        skipped_no_observation: run.table.skipped_no_observation,
        skipped_unknown_label: run.skipped_unknown_label,
        unobserved_hours,
        latest_training_observation: run.table.latest_observation,
        timings,
    })
}

/// Earliest and latest admissible origins: a full training window of
/// observations before, a full horizon of observations after.
pub fn admissible_origins(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<(HourStamp, HourStamp), PipelineError> {
    let (first, last) = dataset
        .observation_span()
        .ok_or_else(|| PipelineError::DatasetTooShort("no observations".into()))?;
    let lo = first.add_hours(config.train_days as i64 * 24);
    let hi = last.add_hours(-(config.horizon_hours as i64));
    if lo > hi {
        return Err(PipelineError::DatasetTooShort(format!(
            "observations span {first} to {last}, but {} training days plus a {} h horizon are needed",
            config.train_days, config.horizon_hours
        )));
    }
    Ok((lo, hi))
}

/// Draws `n` origins uniformly with replacement from the admissible range,
/// each with its own forest seed, all from one generator seeded with `seed`.
pub fn draw_origins(
    dataset: &Dataset,
    n: usize,
    config: &PipelineConfig,
    seed: u64,
) -> Result<Vec<(HourStamp, u64)>, PipelineError> {
    let (lo, hi) = admissible_origins(dataset, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let origin = HourStamp::from_hours(rng.random_range(lo.hours()..=hi.hours()));
            (origin, rng.random::<u64>())
        })
        .collect())
}

/// Scores and aggregates of a multi-scenario evaluation.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub scenarios: Vec<ScenarioResult>,
    pub aggregates: Vec<LeadAggregate>,
    pub raw_aggregates: Vec<LeadAggregate>,
    pub timings: StageTimings,
}

impl EvaluationReport {
    pub fn all_records(&self) -> Vec<ScoreRecord> {
        self.scenarios
            .iter()
            .flat_map(|s| s.records.iter().cloned())
            .collect()
    }

    pub fn all_raw_records(&self) -> Vec<ScoreRecord> {
        self.scenarios
            .iter()
            .flat_map(|s| s.raw_records.iter().cloned())
            .collect()
    }
}

/// Runs `n_scenarios` scenarios in parallel on the current rayon pool.
pub fn evaluate(
    dataset: &Dataset,
    config: &PipelineConfig,
    n_scenarios: usize,
    seed: u64,
) -> Result<EvaluationReport, PipelineError> {
    let origins = draw_origins(dataset, n_scenarios, config, seed)?;
    let scenarios = origins
        .par_iter()
        .enumerate()
        .map(|(i, &(origin, forest_seed))| {
            let r = run_scenario(dataset, i, origin, forest_seed, config);
            if let Ok(s) = &r {
                log::debug!("scenario {i} at {origin}: {} hours scored", s.records.len());
            }
            r
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut timings = StageTimings::default();
    for s in &scenarios {
        timings.add(&s.timings);
    }
    let mut report = EvaluationReport {
        scenarios,
        aggregates: Vec::new(),
        raw_aggregates: Vec::new(),
        timings,
    };
    report.aggregates = aggregate_by_lead(&report.all_records());
    report.raw_aggregates = aggregate_by_lead(&report.all_raw_records());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synthesize_dataset, SynthConfig};

    fn small() -> (Dataset, PipelineConfig) {
        let synth = SynthConfig {
            span_days: 24,
            ..SynthConfig::default()
        };
        let ds = synthesize_dataset(&synth, 3).unwrap();
        let cfg = PipelineConfig {
            forest: ForestConfig {
                num_trees: 20,
                ..ForestConfig::default()
            },
            train_days: 7,
            horizon_hours: 48,
            ..PipelineConfig::default()
        };
        (ds, cfg)
    }

    #[test]
    fn forecast_covers_every_hour_of_the_horizon() {
        let (ds, cfg) = small();
        let origin = ds.observations[0].valid_time.add_hours(10 * 24);
        let run = forecast_origin(&ds, origin, &cfg).unwrap();
        let leads: Vec<u32> = run.hours.iter().map(|h| h.combined.lead_hours).collect();
        assert_eq!(leads, (1..=48).collect::<Vec<_>>());
        assert_eq!(run.skipped_unknown_label, 0);
        for h in &run.hours {
            assert_eq!(h.combined.quantiles.levels(), cfg.levels.as_slice());
            assert!(h.combined.contributing_count >= 1);
        }
    }

    #[test]
    fn scenario_has_no_leakage_and_scores_every_observed_hour() {
        let (ds, cfg) = small();
        let origin = ds.observations[0].valid_time.add_hours(12 * 24 + 5);
        let s = run_scenario(&ds, 0, origin, 9, &cfg).unwrap();
        assert!(s.leakage_free());
        assert!(s.latest_training_observation.unwrap() < origin);
        assert_eq!(s.records.len() + s.unobserved_hours, 48);
        assert_eq!(s.records.len(), s.raw_records.len());
        for r in &s.records {
            assert!(r.crps >= 0.0 && r.abs_error_median >= 0.0);
        }
    }

    #[test]
    fn origins_are_seeded_and_admissible() {
        let (ds, cfg) = small();
        let a = draw_origins(&ds, 30, &cfg, 5).unwrap();
        assert_eq!(a, draw_origins(&ds, 30, &cfg, 5).unwrap());
        let (lo, hi) = admissible_origins(&ds, &cfg).unwrap();
        assert!(a.iter().all(|(o, _)| *o >= lo && *o <= hi));
        let long = PipelineConfig {
            train_days: 30,
            ..cfg
        };
        assert!(matches!(
            draw_origins(&ds, 1, &long, 5),
            Err(PipelineError::DatasetTooShort(_))
        ));
    }

    #[test]
    fn too_little_training_data_is_an_error() {
        let (ds, mut cfg) = small();
        cfg.min_train_rows = 10_000_000;
        let origin = ds.observations[0].valid_time.add_hours(10 * 24);
        assert!(matches!(
            forecast_origin(&ds, origin, &cfg),
            Err(PipelineError::InsufficientTraining { .. })
        ));
    }
}
