//! Quantile vectors and their combination by quantile averaging
//! (Vincentization): level by level, the combined quantile is the mean of
//! the input quantiles.

use serde::{Deserialize, Serialize};

use crate::error_model::ProbabilisticForecast;
use crate::time::HourStamp;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CombineError {
    #[error("quantile vector: {0}")]
    Invalid(String),
    #[error("nothing to combine")]
    Empty,
    #[error("input {index} has different probability levels")]
    MismatchedLevels { index: usize },
    #[error("input {index} is valid at {found}, expected {expected}")]
    MismatchedValidTime {
        index: usize,
        expected: HourStamp,
        found: HourStamp,
    },
}

/// Paired probability levels and values.
///
/// Levels are strictly increasing inside (0, 1); values are finite and
/// non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileVector {
    levels: Vec<f64>,
    values: Vec<f64>,
}

impl QuantileVector {
    pub fn new(levels: Vec<f64>, values: Vec<f64>) -> Result<Self, CombineError> {
        check_levels(&levels)?;
        if values.len() != levels.len() {
            return Err(CombineError::Invalid(format!(
                "{} levels but {} values",
                levels.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CombineError::Invalid(format!("non-finite value {v}")));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(CombineError::Invalid(format!(
                "values decrease between levels {} and {}",
                levels[i],
                levels[i + 1]
            )));
        }
        Ok(QuantileVector { levels, values })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.levels.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at an exact level on this vector's grid.
    pub fn value_at(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .map(|i| self.values[i])
    }

    /// Same levels, every value shifted by `c`.
    pub fn shifted(&self, c: f64) -> QuantileVector {
        QuantileVector {
            levels: self.levels.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}

/// Checks that levels are non-empty, strictly increasing and inside (0, 1).
pub fn check_levels(levels: &[f64]) -> Result<(), CombineError> {
    if levels.is_empty() {
        return Err(CombineError::Invalid("no levels".into()));
    }
    if let Some(l) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(CombineError::Invalid(format!("level {l} outside (0, 1)")));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CombineError::Invalid(
            "levels not strictly increasing".into(),
        ));
    }
    Ok(())
}

/// The shared level grid: 0.01, 0.02, ..., 0.99 plus the 95% interval
/// endpoints 0.025 and 0.975, sorted (101 levels). Every central 50/80/90/95%
/// interval endpoint lies exactly on it.
pub fn standard_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
    grid.extend([0.025, 0.975]);
    grid.sort_by(f64::total_cmp);
    grid
}

/// Level-by-level arithmetic mean of quantile vectors sharing one grid.
pub fn vincentize(inputs: &[QuantileVector]) -> Result<QuantileVector, CombineError> {
    let first = inputs.first().ok_or(CombineError::Empty)?;
    if let Some(index) = inputs.iter().position(|q| q.levels != first.levels) {
        return Err(CombineError::MismatchedLevels { index });
    }
    let n = inputs.len() as f64;
    let mut values = vec![0.0; first.len()];
    for q in inputs {
        for (acc, v) in values.iter_mut().zip(&q.values) {
            *acc += v;
        }
    }
    for v in &mut values {
        *v /= n;
    }
    Ok(QuantileVector {
        levels: first.levels.clone(),
        values,
    })
}

/// The combined forecast for one valid hour.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedForecast {
    pub valid_time: HourStamp,
    /// Hours ahead of the forecast origin.
    pub lead_hours: u32,
    pub quantiles: QuantileVector,
    pub contributing_count: usize,
}

/// Vincentizes every per-model forecast available for one valid hour.
///
/// Works for any number of contributors; long-range hours may have one.
pub fn combine_timestep(
    forecasts: &[ProbabilisticForecast],
    lead_hours: u32,
) -> Result<CombinedForecast, CombineError> {
    let first = forecasts.first().ok_or(CombineError::Empty)?;
    if let Some((index, f)) = forecasts
        .iter()
        .enumerate()
        .find(|(_, f)| f.valid_time != first.valid_time)
    {
        return Err(CombineError::MismatchedValidTime {
            index,
            expected: first.valid_time,
            found: f.valid_time,
        });
    }
    let quantiles: Vec<QuantileVector> = forecasts.iter().map(|f| f.quantiles.clone()).collect();
    Ok(CombinedForecast {
        valid_time: first.valid_time,
        lead_hours,
        quantiles: vincentize(&quantiles)?,
        contributing_count: forecasts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qv(values: &[f64]) -> QuantileVector {
        QuantileVector::new(vec![0.25, 0.5, 0.75], values.to_vec()).unwrap()
    }

    #[test]
    fn per_level_mean() {
        let out = vincentize(&[qv(&[1.0, 2.0, 3.0]), qv(&[3.0, 4.0, 5.0])]).unwrap();
        assert_eq!(out.values(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn copies_are_idempotent() {
        let q = qv(&[-1.5, 0.25, 7.0]);
        let out = vincentize(&vec![q.clone(); 5]).unwrap();
        assert_eq!(out, q);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        assert_eq!(vincentize(&[]), Err(CombineError::Empty));
        let other = QuantileVector::new(vec![0.1, 0.5, 0.9], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(
            vincentize(&[qv(&[1.0, 2.0, 3.0]), other]),
            Err(CombineError::MismatchedLevels { index: 1 })
        );
    }

    #[test]
    fn quantile_vector_invariants() {
        assert!(QuantileVector::new(vec![0.5, 0.25], vec![0.0, 1.0]).is_err());
        assert!(QuantileVector::new(vec![0.0, 0.5], vec![0.0, 1.0]).is_err());
        assert!(QuantileVector::new(vec![0.25, 0.5], vec![1.0, 0.0]).is_err());
        assert!(QuantileVector::new(vec![0.25, 0.5], vec![1.0]).is_err());
        assert!(QuantileVector::new(vec![0.25, 0.5], vec![1.0, f64::NAN]).is_err());
        assert!(QuantileVector::new(vec![0.25, 0.5], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn grid_contains_interval_endpoints() {
        let g = standard_grid();
        assert_eq!(g.len(), 101);
        check_levels(&g).unwrap();
        for w in [0.5, 0.8, 0.9, 0.95] {
            let lo: f64 = (1.0 - w) / 2.0;
            let hi: f64 = (1.0 + w) / 2.0;
            assert!(g.iter().any(|&l| (l - lo).abs() < 1e-12), "{lo}");
            assert!(g.iter().any(|&l| (l - hi).abs() < 1e-12), "{hi}");
        }
    }

    fn pf(t: i64, values: &[f64]) -> ProbabilisticForecast {
        ProbabilisticForecast {
            model_label: "m".into(),
            valid_time: HourStamp::from_hours(t),
            lead_hours: 3,
            quantiles: qv(values),
        }
    }

    #[test]
    fn timestep_counts_contributors() {
        let single = combine_timestep(&[pf(5, &[1.0, 2.0, 3.0])], 1).unwrap();
        assert_eq!(single.quantiles.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(single.contributing_count, 1);

        let seven: Vec<_> = (0..7).map(|i| pf(5, &[i as f64, 10.0, 20.0])).collect();
        let c = combine_timestep(&seven, 4).unwrap();
        assert_eq!(c.contributing_count, 7);
        assert_eq!(c.lead_hours, 4);
        assert_eq!(c.quantiles.values()[0], 3.0);

        assert!(matches!(
            combine_timestep(&[pf(5, &[1.0, 2.0, 3.0]), pf(6, &[1.0, 2.0, 3.0])], 1),
            Err(CombineError::MismatchedValidTime { index: 1, .. })
        ));
        assert_eq!(combine_timestep(&[], 1), Err(CombineError::Empty));
    }
}
