//! Proper scores and calibration metrics, per forecast hour and aggregated
//! by lead hour.

use std::collections::BTreeMap;
use std::io::Write;

use crate::combine::QuantileVector;
use crate::dist::{DistError, PiecewiseCdf};
use crate::time::HourStamp;

/// Central interval widths tracked for coverage.
pub const INTERVALS: [f64; 4] = [0.5, 0.8, 0.9, 0.95];

pub const SCORE_HEADER: &str =
    "valid_time,lead_hours,crps,log_score,abs_err_median,hit50,hit80,hit90,hit95";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("no records to score")]
    Empty,
    #[error("interval width {0} is not tracked")]
    UnknownInterval(f64),
    #[error("interval width {0} is outside (0, 1)")]
    InvalidWidth(f64),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Scores of one forecast hour against its observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub valid_time: HourStamp,
    pub lead_hours: u32,
    pub crps: f64,
    /// Negative log predictive density, nats; absent where no density exists.
    pub log_score: Option<f64>,
    pub abs_error_median: f64,
    /// Hits for the widths in [`INTERVALS`]; absent for forecasts without
    /// interval bounds.
    pub interval_hits: Option<[bool; 4]>,
}

impl ScoreRecord {
    /// Scores a post-processed forecast. Interval bounds and the median are
    /// read from the quantile vector when it carries the level, else from
    /// the distribution.
    pub fn for_forecast(
        valid_time: HourStamp,
        lead_hours: u32,
        q: &QuantileVector,
        d: &PiecewiseCdf,
        y: f64,
    ) -> ScoreRecord {
        let at = |p: f64| {
            q.value_at(p)
                .unwrap_or_else(|| d.quantile(p).expect("level inside (0, 1)"))
        };
        let mut hits = [false; 4];
        for (h, w) in hits.iter_mut().zip(INTERVALS) {
            *h = at((1.0 - w) / 2.0) <= y && y <= at((1.0 + w) / 2.0);
        }
        ScoreRecord {
            valid_time,
            lead_hours,
            crps: d.crps(y),
            log_score: log_score(d, y).ok(),
            abs_error_median: (y - at(0.5)).abs(),
            interval_hits: Some(hits),
        }
    }

    /// Scores the raw forecasts available for one hour as an ensemble.
    pub fn for_raw_ensemble(
        valid_time: HourStamp,
        lead_hours: u32,
        values: &[f64],
        y: f64,
    ) -> Result<ScoreRecord, ScoringError> {
        if values.is_empty() {
            return Err(ScoringError::Empty);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(ScoreRecord {
            valid_time,
            lead_hours,
            crps: ensemble_crps(&sorted, y),
            log_score: kde_log_score(&sorted, y),
            abs_error_median: (y - median_sorted(&sorted)).abs(),
            interval_hits: None,
        })
    }
}

pub fn crps(d: &PiecewiseCdf, y: f64) -> f64 {
    d.crps(y)
}

/// Monte Carlo CRPS with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// `E|X - y| - E|X - X'| / 2` from `n` seeded draws, using the unbiased
/// pairwise mean over distinct draws.
pub fn crps_mc(d: &PiecewiseCdf, y: f64, n: usize, seed: u64) -> Result<McEstimate, ScoringError> {
    if n < 2 {
        return Err(DistError::SampleCount { min: 2, got: n }.into());
    }
    if let Some(c) = d.point_mass() {
        return Ok(McEstimate {
            value: (y - c).abs(),
            std_error: 0.0,
        });
    }
    let mut xs = d.sample(n, seed);
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let total: f64 = xs.iter().sum();

    let mut prefix = 0.0;
    let mut pair_sum = 0.0;
    let mut abs_y = Vec::with_capacity(n);
    let mut centred = Vec::with_capacity(n);
    for (i, &x) in xs.iter().enumerate() {
        let i_f = i as f64;
        let below = x * i_f - prefix;
        let above = (total - prefix - x) - x * (nf - i_f - 1.0);
        pair_sum += below;
        prefix += x;
        let e_y = (x - y).abs();
        abs_y.push(e_y);
        // mean distance to the other draws, estimating E|x - X'|
        centred.push(e_y - (below + above) / (nf - 1.0));
    }
    let mean_y = abs_y.iter().sum::<f64>() / nf;
    let mean_pair = 2.0 * pair_sum / (nf * (nf - 1.0));
    let m = centred.iter().sum::<f64>() / nf;
    let var = centred.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(McEstimate {
        value: mean_y - 0.5 * mean_pair,
        std_error: (var / nf).sqrt(),
    })
}

/// Negative log density at `y`.
pub fn log_score(d: &PiecewiseCdf, y: f64) -> Result<f64, DistError> {
    d.log_density(y).map(|l| -l)
}

/// Pinball loss per level of `q`.
pub fn quantile_score(q: &QuantileVector, y: f64) -> Vec<f64> {
    q.iter().map(|(tau, v)| pinball(tau, v, y)).collect()
}

fn pinball(tau: f64, q: f64, y: f64) -> f64 {
    let u = y - q;
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

/// Interval score of the central interval of the given width, with
/// `alpha = 1 - width`.
pub fn interval_score(d: &PiecewiseCdf, y: f64, width: f64) -> Result<f64, ScoringError> {
    if !(width > 0.0 && width < 1.0) {
        return Err(ScoringError::InvalidWidth(width));
    }
    let alpha = 1.0 - width;
    let lo = d.quantile(alpha / 2.0)?;
    let hi = d.quantile(1.0 - alpha / 2.0)?;
    let mut s = hi - lo;
    if y < lo {
        s += 2.0 / alpha * (lo - y);
    }
    if y > hi {
        s += 2.0 / alpha * (y - hi);
    }
    Ok(s)
}

fn interval_index(width: f64) -> Result<usize, ScoringError> {
    INTERVALS
        .iter()
        .position(|&w| (w - width).abs() < 1e-12)
        .ok_or(ScoringError::UnknownInterval(width))
}

/// Fraction of records whose observation fell inside the central interval.
/// Records without interval bounds are ignored.
pub fn interval_coverage(records: &[ScoreRecord], width: f64) -> Result<f64, ScoringError> {
    let k = interval_index(width)?;
    let hits: Vec<bool> = records
        .iter()
        .filter_map(|r| r.interval_hits.map(|h| h[k]))
        .collect();
    if hits.is_empty() {
        return Err(ScoringError::Empty);
    }
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

pub fn mae_median(records: &[ScoreRecord]) -> Result<f64, ScoringError> {
    if records.is_empty() {
        return Err(ScoringError::Empty);
    }
    Ok(sorted_mean(records.iter().map(|r| r.abs_error_median).collect()))
}

/// Empirical-ensemble CRPS, `mean|x - y| - sum|x_i - x_j| / (2 m²)`, over
/// sorted values.
pub fn ensemble_crps(sorted: &[f64], y: f64) -> f64 {
    let m = sorted.len() as f64;
    let mean_abs = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
    let pairs: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - m + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    mean_abs - pairs / (2.0 * m * m)
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Gaussian kernel density log score with the normal-reference bandwidth
/// `0.9 min(sd, IQR/1.34) m^(-1/5)`. Absent for fewer than two values.
pub fn kde_log_score(sorted: &[f64], y: f64) -> Option<f64> {
    let m = sorted.len();
    if m < 2 {
        return None;
    }
    let h = kde_bandwidth(sorted);
    let ln_norm = -(h.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln() + (m as f64).ln());
    let exps: Vec<f64> = sorted
        .iter()
        .map(|x| -0.5 * ((y - x) / h).powi(2))
        .collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + exps.iter().map(|e| (e - top).exp()).sum::<f64>().ln();
    Some(-(ln_norm + lse))
}

fn kde_bandwidth(sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / m;
    let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let iqr = type7_quantile(sorted, 0.75) - type7_quantile(sorted, 0.25);
    let mut lo = sd.min(iqr / 1.34);
    if lo.is_nan() || lo <= 0.0 {
        lo = [sd, sorted[0].abs(), 1.0]
            .into_iter()
            .find(|v| *v > 0.0)
            .expect("1.0 is positive");
    }
    0.9 * lo * m.powf(-0.2)
}

fn type7_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

/// Mean, sample standard deviation and count of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// Absent for fewer than two values.
    pub sd: Option<f64>,
    pub n: usize,
}

impl MetricSummary {
    /// Summarises values after sorting them, so the result does not depend
    /// on input order.
    pub fn from_values(mut values: Vec<f64>) -> Option<MetricSummary> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n >= 2).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Some(MetricSummary { mean, sd, n })
    }
}

fn sorted_mean(values: Vec<f64>) -> f64 {
    MetricSummary::from_values(values).map_or(f64::NAN, |s| s.mean)
}

/// Metrics for one lead hour across scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadAggregate {
    pub lead_hours: u32,
    /// `(metric name, summary)`, in a fixed order: `crps`, `log_score`,
    /// `abs_err_median`, then `cov50` .. `cov95`. Metrics with no values
    /// are left out.
    pub metrics: Vec<(&'static str, MetricSummary)>,
}

impl LeadAggregate {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|(n, _)| *n == name).map(|(_, s)| s)
    }
}

const COVERAGE_NAMES: [&str; 4] = ["cov50", "cov80", "cov90", "cov95"];

/// Groups records by lead hour, in increasing lead order.
pub fn aggregate_by_lead(records: &[ScoreRecord]) -> Vec<LeadAggregate> {
    let mut groups: BTreeMap<u32, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.lead_hours).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(lead_hours, rs)| {
            let mut metrics = Vec::new();
            let mut add = |name: &'static str, values: Vec<f64>| {
                if let Some(s) = MetricSummary::from_values(values) {
                    metrics.push((name, s));
                }
            };
            add("crps", rs.iter().map(|r| r.crps).collect());
            add("log_score", rs.iter().filter_map(|r| r.log_score).collect());
            add("abs_err_median", rs.iter().map(|r| r.abs_error_median).collect());
            for (k, name) in COVERAGE_NAMES.iter().enumerate() {
                add(
                    name,
                    rs.iter()
                        .filter_map(|r| r.interval_hits.map(|h| h[k] as u8 as f64))
                        .collect(),
                );
            }
            LeadAggregate {
                lead_hours,
                metrics,
            }
        })
        .collect()
}

/// Start of the lead bin `[k*width, (k+1)*width)` holding `lead`. The final
/// lead hour (168) joins the bin below it rather than forming its own.
pub fn lead_bin_start(lead: u32, width: u32) -> u32 {
    let start = lead / width * width;
    if lead == crate::ingest::MAX_LEAD_HOURS && start == lead && start > 0 {
        start - width
    } else {
        start
    }
}

/// Summary of one metric per lead bin, keyed by bin start.
pub fn mean_by_lead_bin(
    records: &[ScoreRecord],
    width: u32,
    metric: impl Fn(&ScoreRecord) -> Option<f64>,
) -> Vec<(u32, MetricSummary)> {
    let mut bins: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(v) = metric(r) {
            bins.entry(lead_bin_start(r.lead_hours, width))
                .or_default()
                .push(v);
        }
    }
    bins.into_iter()
        .filter_map(|(k, v)| MetricSummary::from_values(v).map(|s| (k, s)))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes records under [`SCORE_HEADER`]; absent values are empty fields.
pub fn write_score_records<W: Write>(mut w: W, records: &[ScoreRecord]) -> std::io::Result<()> {
    writeln!(w, "{SCORE_HEADER}")?;
    for r in records {
        let hits = match r.interval_hits {
            Some(h) => h.map(|b| (b as u8).to_string()).join(","),
            None => ",,,".to_string(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.valid_time,
            r.lead_hours,
            r.crps,
            opt(r.log_score),
            r.abs_error_median,
            hits
        )?;
    }
    Ok(())
}

/// Writes `lead_hours,metric,mean,sd,n` rows; `prefix` is prepended to each
/// metric name.
pub fn write_aggregates<W: Write>(
    mut w: W,
    aggregates: &[LeadAggregate],
    prefix: &str,
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(w, "lead_hours,metric,mean,sd,n")?;
    }
    for a in aggregates {
        for (name, s) in &a.metrics {
            writeln!(
                w,
                "{},{prefix}{name},{},{},{}",
                a.lead_hours,
                s.mean,
                opt(s.sd),
                s.n
            )?;
        }
    }
    Ok(())
}
