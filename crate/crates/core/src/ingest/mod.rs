//! Forecast and observation data: CSV loading, scenario slicing, and a
//! synthetic data generator for desk-scale experiments.

mod csv_io;
mod scenario;
mod synth;

pub use csv_io::{
    load_forecasts, load_observations, read_forecasts, read_observations, write_forecasts,
    write_observations,
};
pub use scenario::{slice_scenario, ScenarioWindow};
pub use synth::{synthesize_dataset, ModelSpec, SynthConfig};

use crate::time::HourStamp;

/// Longest supported forecast lead time, in hours.
pub const MAX_LEAD_HOURS: u32 = 168;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("line {line}: negative lead time (valid {valid} before init {init})")]
    NegativeLead {
        line: u64,
        init: HourStamp,
        valid: HourStamp,
    },
    #[error("line {line}: lead of {lead} h is outside [0, {MAX_LEAD_HOURS}]")]
    LeadOutOfRange { line: u64, lead: i64 },
    #[error("line {line}: duplicate observation at {valid}")]
    DuplicateObservation { line: u64, valid: HourStamp },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("scenario window not covered by dataset: {0}")]
    WindowNotCovered(String),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
}

/// One deterministic forecast value for one model, member, run and valid hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub model_id: String,
    /// Ensemble member index; `None` for deterministic models.
    pub member: Option<u32>,
    pub init_time: HourStamp,
    pub valid_time: HourStamp,
    /// Surface temperature, °C.
    pub value: f64,
    /// Per-timestep rank among the members of this run, once assigned by
    /// [`crate::error_model::rank_label_members`].
    pub rank: Option<u32>,
}

impl ForecastRecord {
    pub fn lead_hours(&self) -> u32 {
        self.valid_time.hours_since(self.init_time) as u32
    }

    /// Covariate label: the model id, or `<model_id>_r<rank>` for a
    /// rank-labelled ensemble member.
    pub fn label(&self) -> String {
        match self.rank {
            Some(r) => format!("{}_r{}", self.model_id, r),
            None => self.model_id.clone(),
        }
    }

    fn sort_key(&self) -> (&str, Option<u32>, HourStamp, HourStamp) {
        (&self.model_id, self.member, self.init_time, self.valid_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub valid_time: HourStamp,
    /// Surface temperature, °C.
    pub value: f64,
}

/// Forecasts and observations for one site.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub site_id: String,
    /// Sorted by (model_id, member, init_time, valid_time).
    pub forecasts: Vec<ForecastRecord>,
    /// Sorted by valid_time, one per hour.
    pub observations: Vec<ObservationRecord>,
}

impl Dataset {
    pub fn new(
        site_id: impl Into<String>,
        mut forecasts: Vec<ForecastRecord>,
        mut observations: Vec<ObservationRecord>,
    ) -> Self {
        sort_forecasts(&mut forecasts);
        observations.sort_by_key(|o| o.valid_time);
        Dataset {
            site_id: site_id.into(),
            forecasts,
            observations,
        }
    }

    pub fn observation_at(&self, t: HourStamp) -> Option<f64> {
        self.observations
            .binary_search_by_key(&t, |o| o.valid_time)
            .ok()
            .map(|i| self.observations[i].value)
    }

    /// Earliest and latest observation time.
    pub fn observation_span(&self) -> Option<(HourStamp, HourStamp)> {
        Some((
            self.observations.first()?.valid_time,
            self.observations.last()?.valid_time,
        ))
    }
}

pub(crate) fn sort_forecasts(records: &mut [ForecastRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}
