use std::collections::HashMap;

use super::{Dataset, IngestError};
use crate::time::HourStamp;

/// A forecast origin with the training window before it and the evaluation
/// horizon after it.
///
/// Training covers valid times in `[origin - train_days, origin)`, evaluation
/// covers `[origin, origin + horizon_hours]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioWindow {
    pub origin: HourStamp,
    pub train_days: u32,
    pub horizon_hours: u32,
}

impl ScenarioWindow {
    pub fn new(origin: HourStamp) -> Self {
        ScenarioWindow {
            origin,
            train_days: 14,
            horizon_hours: 168,
        }
    }

    pub fn train_start(&self) -> HourStamp {
        self.origin.add_hours(-(self.train_days as i64) * 24)
    }

    pub fn horizon_end(&self) -> HourStamp {
        self.origin.add_hours(self.horizon_hours as i64)
    }
}

/// Splits a dataset into a training part and an evaluation part.
///
/// The training part holds every forecast and observation with a valid time
/// inside the training window (and therefore initialised before the origin).
/// The evaluation part holds, per model, only the latest run initialised at
/// or before the origin, restricted to the evaluation window, together with
/// the observations in that window.
///
/// The dataset covers the window when its first observation is no later
/// than the training start and some record reaches the origin.
pub fn slice_scenario(
    dataset: &Dataset,
    window: &ScenarioWindow,
) -> Result<(Dataset, Dataset), IngestError> {
    if window.train_days == 0 || window.horizon_hours == 0 {
        return Err(IngestError::WindowNotCovered(
            "train_days and horizon_hours must be positive".into(),
        ));
    }
    let origin = window.origin;
    let train_start = window.train_start();
    let horizon_end = window.horizon_end();

    let (first_obs, last_obs) = dataset
        .observation_span()
        .ok_or_else(|| IngestError::WindowNotCovered("dataset has no observations".into()))?;
    if first_obs > train_start {
        return Err(IngestError::WindowNotCovered(format!(
            "training starts {train_start} but first observation is {first_obs}"
        )));
    }
    let last_forecast = dataset.forecasts.iter().map(|f| f.valid_time).max();
    if last_obs.max(last_forecast.unwrap_or(last_obs)) < origin {
        return Err(IngestError::WindowNotCovered(format!(
            "dataset ends before origin {origin}"
        )));
    }

    let in_train = |t: HourStamp| t >= train_start && t < origin;
    let train_forecasts = dataset
        .forecasts
        .iter()
        .filter(|f| in_train(f.valid_time) && f.init_time < origin)
        .cloned()
        .collect();
    let train_obs = dataset
        .observations
        .iter()
        .filter(|o| in_train(o.valid_time))
        .copied()
        .collect();

    let mut current_run: HashMap<&str, HourStamp> = HashMap::new();
    for f in &dataset.forecasts {
        if f.init_time <= origin {
            let e = current_run.entry(f.model_id.as_str()).or_insert(f.init_time);
            if f.init_time > *e {
                *e = f.init_time;
            }
        }
    }
    let in_eval = |t: HourStamp| t >= origin && t <= horizon_end;
    let eval_forecasts = dataset
        .forecasts
        .iter()
        .filter(|f| {
            current_run.get(f.model_id.as_str()) == Some(&f.init_time) && in_eval(f.valid_time)
        })
        .cloned()
        .collect();
    let eval_obs = dataset
        .observations
        .iter()
        .filter(|o| in_eval(o.valid_time))
        .copied()
        .collect();

    Ok((
        Dataset::new(dataset.site_id.clone(), train_forecasts, train_obs),
        Dataset::new(dataset.site_id.clone(), eval_forecasts, eval_obs),
    ))
}
