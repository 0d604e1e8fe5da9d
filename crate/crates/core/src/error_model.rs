//! Forecast errors (observation minus forecast) as QRF training data, rank
//! labelling of exchangeable ensemble members, and the conversion of a
//! deterministic forecast into a probabilistic one by adding an error
//! distribution.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use crate::combine::{CombineError, QuantileVector};
use crate::ingest::{Dataset, ForecastRecord};
use crate::time::HourStamp;

#[derive(Debug, thiserror::Error)]
pub enum ErrorModelError {
    #[error("no forecast in the training data has a matching observation")]
    EmptyTable,
    #[error("non-finite error for {label} at lead {lead_hours}")]
    NonFinite { label: String, lead_hours: u32 },
    #[error(transparent)]
    Quantiles(#[from] CombineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One training row: covariates and the observed error.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    pub lead_hours: u32,
    pub model_label: String,
    /// Observation minus forecast, °C.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorSample>,
    /// Distinct labels, sorted.
    pub label_set: Vec<String>,
    /// Forecasts dropped because no observation exists at their valid time.
    pub skipped_no_observation: usize,
    /// Latest observation time used by any row.
    pub latest_observation: Option<HourStamp>,
}

impl ErrorTable {
    /// Builds a table from rows, deriving the label set.
    pub fn from_rows(rows: Vec<ErrorSample>) -> Result<Self, ErrorModelError> {
        if rows.is_empty() {
            return Err(ErrorModelError::EmptyTable);
        }
        if let Some(r) = rows.iter().find(|r| !r.error.is_finite()) {
            return Err(ErrorModelError::NonFinite {
                label: r.model_label.clone(),
                lead_hours: r.lead_hours,
            });
        }
        let label_set: BTreeSet<&str> = rows.iter().map(|r| r.model_label.as_str()).collect();
        let label_set = label_set.into_iter().map(str::to_string).collect();
        Ok(ErrorTable {
            rows,
            label_set,
            skipped_no_observation: 0,
            latest_observation: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dumps the table as `lead_hours,model_label,error_degC`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ErrorModelError> {
        writeln!(w, "lead_hours,model_label,error_degC")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.lead_hours, r.model_label, r.error)?;
        }
        Ok(())
    }
}

/// A forecast turned into a distribution: forecast value plus error quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticForecast {
    pub model_label: String,
    pub valid_time: HourStamp,
    pub lead_hours: u32,
    pub quantiles: QuantileVector,
}

/// Assigns each ensemble member its rank within its (model, run, valid hour)
/// group, so the forest sees `<model>_r1 .. <model>_rN` as distinct models.
///
/// Ranks are 1-based in ascending value; ties go to the lower member index.
/// Deterministic records pass through. Output order matches input order.
pub fn rank_label_members(records: &[ForecastRecord]) -> Vec<ForecastRecord> {
    let mut groups: HashMap<(&str, HourStamp, HourStamp), Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.member.is_some() {
            groups
                .entry((r.model_id.as_str(), r.init_time, r.valid_time))
                .or_default()
                .push(i);
        }
    }
    let mut out = records.to_vec();
    for members in groups.values_mut() {
        members.sort_by(|&a, &b| {
            records[a]
                .value
                .total_cmp(&records[b].value)
                .then(records[a].member.cmp(&records[b].member))
        });
        for (rank, &i) in members.iter().enumerate() {
            out[i].rank = Some(rank as u32 + 1);
        }
    }
    out
}

/// Pairs every forecast with the observation at its valid time and records
/// `observation - forecast`. Forecasts without an observation are counted
/// and skipped. Covariate labels come from [`ForecastRecord::label`], so rank
/// labelling must already have been applied.
pub fn build_error_table(train: &Dataset) -> Result<ErrorTable, ErrorModelError> {
    let mut rows = Vec::with_capacity(train.forecasts.len());
    let mut skipped = 0;
    let mut latest: Option<HourStamp> = None;
    for f in &train.forecasts {
        match train.observation_at(f.valid_time) {
            Some(y) => {
                rows.push(ErrorSample {
                    lead_hours: f.lead_hours(),
                    model_label: f.label(),
                    error: y - f.value,
                });
                latest = latest.max(Some(f.valid_time));
            }
            None => skipped += 1,
        }
    }
    let mut table = ErrorTable::from_rows(rows)?;
    table.skipped_no_observation = skipped;
    table.latest_observation = latest;
    Ok(table)
}

/// Adds the conditional error quantiles to the forecast value, level by level.
pub fn to_probabilistic(
    forecast: &ForecastRecord,
    error_quantiles: &QuantileVector,
) -> Result<ProbabilisticForecast, ErrorModelError> {
    let values = error_quantiles
        .values()
        .iter()
        .map(|e| forecast.value + e)
        .collect();
    let quantiles = QuantileVector::new(error_quantiles.levels().to_vec(), values)?;
    Ok(ProbabilisticForecast {
        model_label: forecast.label(),
        valid_time: forecast.valid_time,
        lead_hours: forecast.lead_hours(),
        quantiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ObservationRecord;

    fn rec(model: &str, member: Option<u32>, valid: i64, value: f64) -> ForecastRecord {
        ForecastRecord {
            model_id: model.into(),
            member,
            init_time: HourStamp::from_hours(0),
            valid_time: HourStamp::from_hours(valid),
            value,
            rank: None,
        }
    }

    fn labels(recs: &[ForecastRecord]) -> Vec<String> {
        recs.iter().map(ForecastRecord::label).collect()
    }

    #[test]
    fn ranks_follow_values() {
        let recs = vec![
            rec("enuk", Some(0), 1, 2.0),
            rec("enuk", Some(1), 1, 1.0),
            rec("enuk", Some(2), 1, 3.0),
            rec("glm", None, 1, 9.0),
        ];
        let out = rank_label_members(&recs);
        assert_eq!(labels(&out), vec!["enuk_r2", "enuk_r1", "enuk_r3", "glm"]);
    }

    #[test]
    fn twelve_members_get_twelve_labels() {
        let recs: Vec<_> = (0..12)
            .map(|k| rec("enuk", Some(k), 1, ((k * 7) % 12) as f64))
            .collect();
        let mut l = labels(&rank_label_members(&recs));
        l.sort();
        l.dedup();
        assert_eq!(l.len(), 12);
    }

    #[test]
    fn ties_break_by_member_index() {
        let recs = vec![rec("enuk", Some(5), 1, 1.0), rec("enuk", Some(2), 1, 1.0)];
        assert_eq!(labels(&rank_label_members(&recs)), vec!["enuk_r2", "enuk_r1"]);
    }

    #[test]
    fn singleton_group_gets_rank_one() {
        let out = rank_label_members(&[rec("enuk", Some(3), 1, 1.0)]);
        assert_eq!(out[0].label(), "enuk_r1");
    }

    fn dataset(forecasts: Vec<ForecastRecord>, obs: &[(i64, f64)]) -> Dataset {
        Dataset::new(
            "s",
            forecasts,
            obs.iter()
                .map(|&(t, v)| ObservationRecord {
                    valid_time: HourStamp::from_hours(t),
                    value: v,
                })
                .collect(),
        )
    }

    #[test]
    fn error_is_observation_minus_forecast() {
        let ds = dataset(
            vec![rec("glm", None, 1, 5.0), rec("ukv", None, 2, 3.5)],
            &[(1, 3.5), (2, 3.5)],
        );
        let t = build_error_table(&ds).unwrap();
        let errs: Vec<f64> = t.rows.iter().map(|r| r.error).collect();
        assert_eq!(errs, vec![-1.5, 0.0]);
    }

    #[test]
    fn one_row_per_forecast_and_missing_obs_are_counted() {
        let ds = dataset(
            vec![
                rec("glm", None, 1, 1.0),
                rec("ukv", None, 1, 2.0),
                rec("eur", None, 1, 3.0),
                rec("eur", None, 2, 3.0),
            ],
            &[(1, 0.0)],
        );
        let t = build_error_table(&ds).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.skipped_no_observation, 1);
        assert_eq!(t.label_set, vec!["eur", "glm", "ukv"]);
        assert_eq!(t.latest_observation, Some(HourStamp::from_hours(1)));

        let ds = dataset(vec![rec("glm", None, 2, 1.0)], &[(1, 0.0)]);
        assert!(matches!(build_error_table(&ds), Err(ErrorModelError::EmptyTable)));
    }

    #[test]
    fn probabilistic_is_a_shift() {
        let q = QuantileVector::new(vec![0.25, 0.5, 0.75], vec![-1.0, 0.0, 1.0]).unwrap();
        let p = to_probabilistic(&rec("glm", None, 4, 10.0), &q).unwrap();
        assert_eq!(p.quantiles.values(), &[9.0, 10.0, 11.0]);
        assert_eq!(p.quantiles.levels(), q.levels());
        assert_eq!(p.lead_hours, 4);

        let zero = QuantileVector::new(vec![0.25, 0.5, 0.75], vec![0.0; 3]).unwrap();
        let p = to_probabilistic(&rec("glm", None, 4, 10.0), &zero).unwrap();
        assert_eq!(p.quantiles.value_at(0.5), Some(10.0));
    }
}
