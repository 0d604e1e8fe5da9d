//! Synthetic single-site datasets.
//!
//! Observations follow a seasonal and diurnal cycle plus an AR(1) residual.
//! Every model forecast is the observation plus a lead-dependent bias plus
//! lead-dependent noise. The noise mixes a component shared by all models at
//! a valid hour (itself AR(1) in time) with an independent one, so that model
//! errors are correlated the way real NWP errors are. The ensemble model
//! adds exchangeable member perturbations on top of its run.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, ForecastRecord, IngestError, ObservationRecord, MAX_LEAD_HOURS};
use crate::kv::{KvError, KvMap};
use crate::time::HourStamp;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub id: String,
    pub init_cycle_hours: u32,
    pub init_offset_hours: u32,
    pub max_lead_hours: u32,
    /// Bias scale, °C; the bias grows from a quarter of this at lead 0.
    pub bias_amplitude: f64,
    /// Growth of the noise standard deviation per day of lead, °C.
    pub noise_growth: f64,
    pub ensemble_members: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub site_id: String,
    pub start: HourStamp,
    pub span_days: u32,
    pub models: Vec<ModelSpec>,
    /// Noise standard deviation at lead 0, °C.
    pub base_noise: f64,
    /// Correlation of each forecast error with the shared error component.
    pub shared_error_fraction: f64,
    /// Hourly AR(1) coefficient of the shared error component.
    pub error_memory: f64,
    /// Relative amplitude of the diurnal modulation of the error scale.
    pub diurnal_error_amplitude: f64,
    /// Member perturbation, as a fraction of the run's noise scale.
    pub member_spread: f64,
    pub mean_temp: f64,
    pub seasonal_amplitude: f64,
    pub diurnal_amplitude: f64,
    pub obs_ar_coefficient: f64,
    pub obs_ar_noise: f64,
}

impl Default for SynthConfig {
    /// 90 days, seven models: two global, two European, one UK
    /// high-resolution, a 12-member UK ensemble and a six-hour nowcast.
    fn default() -> Self {
        let m = |id: &str, cycle, offset, lead, bias, growth, members| ModelSpec {
            id: id.to_string(),
            init_cycle_hours: cycle,
            init_offset_hours: offset,
            max_lead_hours: lead,
            bias_amplitude: bias,
            noise_growth: growth,
            ensemble_members: members,
        };
        SynthConfig {
            site_id: "synthetic".into(),
            start: HourStamp::from_hours(438_288), // 2020-01-01T00:00Z
            span_days: 90,
            models: vec![
                m("glu", 12, 6, 168, 0.8, 0.32, 1),
                m("glm", 12, 0, 168, -0.6, 0.30, 1),
                m("eur_eu", 12, 0, 120, 0.5, 0.30, 1),
                m("eur_uk", 12, 6, 120, -0.4, 0.28, 1),
                m("ukv", 3, 0, 54, 0.3, 0.30, 1),
                m("enuk", 6, 0, 36, -0.5, 0.30, 12),
                m("pvrn", 1, 0, 6, 0.2, 0.35, 1),
            ],
            base_noise: 0.6,
            shared_error_fraction: 0.9,
            error_memory: 0.8,
            diurnal_error_amplitude: 0.2,
            member_spread: 0.5,
            mean_temp: 6.0,
            seasonal_amplitude: 5.0,
            diurnal_amplitude: 4.0,
            obs_ar_coefficient: 0.95,
            obs_ar_noise: 0.4,
        }
    }
}

pub const SYNTH_KEYS: &[&str] = &[
    "site_id",
    "start",
    "span_days",
    "models",
    "init_cycle_hours",
    "init_offset_hours",
    "max_lead_hours",
    "bias_amplitude",
    "noise_growth",
    "ensemble_members",
    "base_noise",
    "shared_error_fraction",
    "error_memory",
    "diurnal_error_amplitude",
    "member_spread",
    "mean_temp",
    "seasonal_amplitude",
    "diurnal_amplitude",
    "obs_ar_coefficient",
    "obs_ar_noise",
];

impl SynthConfig {
    /// Builds a config from a key/value file, starting from the defaults.
    ///
    /// Per-model keys (`init_cycle_hours`, `init_offset_hours`,
    /// `max_lead_hours`, `bias_amplitude`, `noise_growth`,
    /// `ensemble_members`) are comma lists aligned with `models`. When
    /// `models` is given, every per-model list except `init_offset_hours`
    /// must be given too.
    pub fn from_kv(kv: &KvMap) -> Result<Self, IngestError> {
        let wrap = |e: KvError| IngestError::InvalidConfig(e.to_string());
        kv.check_keys(SYNTH_KEYS).map_err(wrap)?;
        let mut c = SynthConfig::default();
        if let Some(v) = kv.get_str("site_id") {
            c.site_id = v.to_string();
        }
        if let Some(v) = kv.get_str("start") {
            c.start = v
                .parse()
                .map_err(|e| IngestError::InvalidConfig(format!("start: {e}")))?;
        }
        macro_rules! scalar {
            ($($field:ident),*) => {$(
                if let Some(v) = kv.get(stringify!($field)).map_err(wrap)? {
                    c.$field = v;
                }
            )*};
        }
        scalar!(
            span_days,
            base_noise,
            shared_error_fraction,
            error_memory,
            diurnal_error_amplitude,
            member_spread,
            mean_temp,
            seasonal_amplitude,
            diurnal_amplitude,
            obs_ar_coefficient,
            obs_ar_noise
        );

        if let Some(ids) = kv.get_list::<String>("models").map_err(wrap)? {
            let need = |key: &str| -> Result<(), IngestError> {
                if kv.get_str(key).is_none() {
                    return Err(IngestError::InvalidConfig(format!(
                        "`models` given without `{key}`"
                    )));
                }
                Ok(())
            };
            for key in [
                "init_cycle_hours",
                "max_lead_hours",
                "bias_amplitude",
                "noise_growth",
                "ensemble_members",
            ] {
                need(key)?;
            }
            c.models = ids
                .into_iter()
                .map(|id| ModelSpec {
                    id,
                    init_cycle_hours: 0,
                    init_offset_hours: 0,
                    max_lead_hours: 0,
                    bias_amplitude: 0.0,
                    noise_growth: 0.0,
                    ensemble_members: 1,
                })
                .collect();
        }
        macro_rules! per_model {
            ($key:ident, $ty:ty) => {
                if let Some(list) = kv.get_list::<$ty>(stringify!($key)).map_err(wrap)? {
                    if list.len() != c.models.len() {
                        return Err(IngestError::InvalidConfig(format!(
                            "`{}` has {} entries for {} models",
                            stringify!($key),
                            list.len(),
                            c.models.len()
                        )));
                    }
                    kv_set_list(&mut c.models, &list, |m, v| m.$key = v);
                }
            };
        }
        per_model!(init_cycle_hours, u32);
        per_model!(init_offset_hours, u32);
        per_model!(max_lead_hours, u32);
        per_model!(bias_amplitude, f64);
        per_model!(noise_growth, f64);
        per_model!(ensemble_members, u32);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::InvalidConfig(m));
        if self.span_days == 0 {
            return bad("span_days must be positive".into());
        }
        if self.models.is_empty() {
            return bad("model roster is empty".into());
        }
        for m in &self.models {
            if m.id.is_empty() {
                return bad("empty model id".into());
            }
            if m.init_cycle_hours == 0 {
                return bad(format!("{}: init_cycle_hours must be positive", m.id));
            }
            if m.max_lead_hours > MAX_LEAD_HOURS {
                return bad(format!("{}: max_lead_hours above {MAX_LEAD_HOURS}", m.id));
            }
            if m.ensemble_members == 0 {
                return bad(format!("{}: ensemble_members must be at least 1", m.id));
            }
            if m.noise_growth < 0.0 || !m.noise_growth.is_finite() || !m.bias_amplitude.is_finite()
            {
                return bad(format!("{}: bad noise/bias parameters", m.id));
            }
        }
        let mut ids: Vec<_> = self.models.iter().map(|m| &m.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.models.len() {
            return bad("duplicate model ids".into());
        }
        if !(0.0..=1.0).contains(&self.shared_error_fraction) {
            return bad("shared_error_fraction must be in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.error_memory.abs())
            || !(0.0..1.0).contains(&self.obs_ar_coefficient.abs())
        {
            return bad("AR coefficients must lie in (-1, 1)".into());
        }
        if self.base_noise < 0.0 || self.member_spread < 0.0 || self.obs_ar_noise < 0.0 {
            return bad("noise scales must be non-negative".into());
        }
        Ok(())
    }
}

fn kv_set_list<T: Copy>(models: &mut [ModelSpec], values: &[T], set: impl Fn(&mut ModelSpec, T)) {
    for (m, &v) in models.iter_mut().zip(values) {
        set(m, v);
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Generates a dataset; identical `(config, seed)` give identical output.
pub fn synthesize_dataset(config: &SynthConfig, seed: u64) -> Result<Dataset, IngestError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_hours = config.span_days as i64 * 24;
    let start = config.start;

    let mut obs = Vec::with_capacity(n_hours as usize);
    let mut residual = 0.0;
    let resid_sd = config.obs_ar_noise / (1.0 - config.obs_ar_coefficient.powi(2)).sqrt();
    for i in 0..n_hours {
        let t = start.add_hours(i);
        let e: f64 = rng.sample(StandardNormal);
        residual = if i == 0 {
            resid_sd * e
        } else {
            config.obs_ar_coefficient * residual + config.obs_ar_noise * e
        };
        let day_of_year = (t.day() as f64 + 10.0).rem_euclid(365.25);
        let seasonal = -config.seasonal_amplitude * (2.0 * PI * day_of_year / 365.25).cos();
        let diurnal =
            config.diurnal_amplitude * (2.0 * PI * (t.hour_of_day() as f64 - 9.0) / 24.0).sin();
        obs.push(ObservationRecord {
            valid_time: t,
            value: round2(config.mean_temp + seasonal + diurnal + residual),
        });
    }

    // shared error component, unit variance
    let phi = config.error_memory;
    let innov = (1.0 - phi * phi).sqrt();
    let mut shared = Vec::with_capacity(n_hours as usize);
    let mut z: f64 = rng.sample(StandardNormal);
    for _ in 0..n_hours {
        shared.push(z);
        let e: f64 = rng.sample(StandardNormal);
        z = phi * z + innov * e;
    }

    let rho = config.shared_error_fraction;
    let indep = (1.0 - rho * rho).sqrt();
    let mut forecasts = Vec::new();
    for m in &config.models {
        let cycle = m.init_cycle_hours as i64;
        let offset = m.init_offset_hours as i64 % cycle;
        // first init such that its forecasts can reach the start
        let earliest = start.hours() - m.max_lead_hours as i64;
        let mut init = earliest - (earliest - offset).rem_euclid(cycle);
        if init < earliest {
            init += cycle;
        }
        let end = start.hours() + n_hours;
        while init < end {
            let members = m.ensemble_members;
            for lead in 0..=m.max_lead_hours as i64 {
                let valid = init + lead;
                let idx = valid - start.hours();
                if idx < 0 || idx >= n_hours {
                    continue;
                }
                let v = HourStamp::from_hours(valid);
                let y = obs[idx as usize].value;
                let leadf = lead as f64;
                let bias = m.bias_amplitude * (0.25 + leadf / 168.0)
                    + 0.3 * m.bias_amplitude * (2.0 * PI * leadf / 24.0).sin();
                let modulation = 1.0
                    + config.diurnal_error_amplitude
                        * (2.0 * PI * (v.hour_of_day() as f64 - 14.0) / 24.0).cos();
                let scale = (config.base_noise + m.noise_growth * leadf / 24.0) * modulation;
                let e: f64 = rng.sample(StandardNormal);
                let run_value = y + bias + scale * (rho * shared[idx as usize] + indep * e);
                if members == 1 {
                    forecasts.push(ForecastRecord {
                        model_id: m.id.clone(),
                        member: None,
                        init_time: HourStamp::from_hours(init),
                        valid_time: v,
                        value: round2(run_value),
                        rank: None,
                    });
                } else {
                    for k in 0..members {
                        let u: f64 = rng.sample(StandardNormal);
                        forecasts.push(ForecastRecord {
                            model_id: m.id.clone(),
                            member: Some(k),
                            init_time: HourStamp::from_hours(init),
                            valid_time: v,
                            value: round2(run_value + config.member_spread * scale * u),
                            rank: None,
                        });
                    }
                }
            }
            init += cycle;
        }
    }
    Ok(Dataset::new(config.site_id.clone(), forecasts, obs))
}
