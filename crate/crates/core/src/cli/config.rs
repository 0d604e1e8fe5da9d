use std::path::{Path, PathBuf};

use clap::Args;

use super::CliError;
use crate::combine::{check_levels, standard_grid};
use crate::kv::KvMap;
use crate::pipeline::PipelineConfig;
use crate::qrf::ForestConfig;
use crate::time::HourStamp;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QPOST_OUT_DIR";

/// Flags shared by every subcommand. Each may also be set in the
/// `--config` file under the same name with underscores.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// Flat `key = value` file providing defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [env: QPOST_OUT_DIR, default: out]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Forecast CSV [default: <out-dir>/forecasts.csv]
    #[arg(long, global = true)]
    pub forecasts: Option<PathBuf>,
    /// Observation CSV [default: <out-dir>/observations.csv]
    #[arg(long, global = true)]
    pub observations: Option<PathBuf>,
    /// Worker threads for scenarios and tree growing [default: all cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Master seed: synthesis, scenario origins and sampling [default: 1]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Forecast origin, e.g. 2020-02-01T00:00Z
    #[arg(long, global = true)]
    pub origin: Option<HourStamp>,
    /// Trees per forest [default: 250]
    #[arg(long, global = true)]
    pub num_trees: Option<usize>,
    /// Covariates tried per split, 1 or 2 [default: 1]
    #[arg(long, global = true)]
    pub mtry: Option<usize>,
    /// Smallest child node [default: 1]
    #[arg(long, global = true)]
    pub min_node_size: Option<usize>,
    /// Rows drawn per tree [default: 128]
    #[arg(long, global = true)]
    pub sample_count: Option<usize>,
    /// Forest seed for `train` and `forecast` [default: 1]
    #[arg(long, global = true)]
    pub forest_seed: Option<u64>,
    /// Draw rows with replacement
    #[arg(long, global = true)]
    pub replace: Option<bool>,
    /// Training window, days [default: 14]
    #[arg(long, global = true)]
    pub train_days: Option<u32>,
    /// Forecast horizon, hours [default: 168]
    #[arg(long, global = true)]
    pub horizon_hours: Option<u32>,
    /// Comma-separated probability levels [default: 0.01..0.99 plus 0.025, 0.975]
    #[arg(long, global = true, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Fewest error rows a scenario may train on [default: 1000]
    #[arg(long, global = true)]
    pub min_train_rows: Option<usize>,
    /// Scenarios drawn by `evaluate` [default: 200]
    #[arg(long, global = true)]
    pub n_scenarios: Option<usize>,
    /// Threshold for probability queries, °C [default: 0]
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Draws per hour for simulated outcomes [default: 1000]
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Synthesis config file for `generate`
    #[arg(long, global = true)]
    pub synth_config: Option<PathBuf>,
}

const RUN_KEYS: &[&str] = &[
    "out_dir",
    "forecasts",
    "observations",
    "jobs",
    "seed",
    "origin",
    "num_trees",
    "mtry",
    "min_node_size",
    "sample_count",
    "forest_seed",
    "replace",
    "train_days",
    "horizon_hours",
    "levels",
    "min_train_rows",
    "n_scenarios",
    "threshold",
    "samples",
    "synth_config",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub forecasts: PathBuf,
    pub observations: PathBuf,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    pub seed: u64,
    pub origin: Option<HourStamp>,
    pub pipeline: PipelineConfig,
    pub n_scenarios: usize,
    pub threshold: f64,
    pub samples: usize,
    pub synth_config: Option<PathBuf>,
}

impl RunConfig {
    /// Resolves flags over the config file over the environment over
    /// built-in defaults.
    pub fn resolve(flags: &RunFlags, env_out_dir: Option<PathBuf>) -> Result<RunConfig, CliError> {
        let kv = match &flags.config {
            Some(p) => KvMap::read(p)?,
            None => KvMap::default(),
        };
        kv.check_keys(RUN_KEYS)?;

        macro_rules! pick {
            ($field:ident) => {
                match &flags.$field {
                    Some(v) => Some(v.clone()),
                    None => kv.get(stringify!($field))?,
                }
            };
        }
        let path = |flag: &Option<PathBuf>, key: &str| -> Option<PathBuf> {
            flag.clone().or_else(|| kv.get_str(key).map(PathBuf::from))
        };

        let out_dir = path(&flags.out_dir, "out_dir")
            .or(env_out_dir)
            .unwrap_or_else(|| PathBuf::from("out"));
        let forecasts =
            path(&flags.forecasts, "forecasts").unwrap_or_else(|| out_dir.join("forecasts.csv"));
        let observations = path(&flags.observations, "observations")
            .unwrap_or_else(|| out_dir.join("observations.csv"));

        let defaults = PipelineConfig::default();
        let forest = ForestConfig {
            num_trees: pick!(num_trees).unwrap_or(defaults.forest.num_trees),
            mtry: pick!(mtry).unwrap_or(defaults.forest.mtry),
            min_node_size: pick!(min_node_size).unwrap_or(defaults.forest.min_node_size),
            sample_count: pick!(sample_count).unwrap_or(defaults.forest.sample_count),
            seed: pick!(forest_seed).unwrap_or(defaults.forest.seed),
            replace: pick!(replace).unwrap_or(defaults.forest.replace),
        };
        let levels = match &flags.levels {
            Some(l) => l.clone(),
            None => kv.get_list("levels")?.unwrap_or_else(standard_grid),
        };
        check_levels(&levels).map_err(|e| CliError::Usage(e.to_string()))?;
        let pipeline = PipelineConfig {
            forest,
            train_days: pick!(train_days).unwrap_or(defaults.train_days),
            horizon_hours: pick!(horizon_hours).unwrap_or(defaults.horizon_hours),
            levels,
            min_train_rows: pick!(min_train_rows).unwrap_or(defaults.min_train_rows),
        };

        let config = RunConfig {
            forecasts,
            observations,
            out_dir,
            jobs: pick!(jobs),
            seed: pick!(seed).unwrap_or(1),
            origin: pick!(origin),
            pipeline,
            n_scenarios: pick!(n_scenarios).unwrap_or(200),
            threshold: pick!(threshold).unwrap_or(0.0),
            samples: pick!(samples).unwrap_or(1000),
            synth_config: path(&flags.synth_config, "synth_config"),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.n_scenarios == 0 {
            return usage("n_scenarios must be at least 1");
        }
        if self.jobs == Some(0) {
            return usage("jobs must be at least 1");
        }
        if self.samples == 0 {
            return usage("samples must be at least 1");
        }
        if !self.threshold.is_finite() {
            return usage("threshold must be finite");
        }
        if self.pipeline.train_days == 0 || self.pipeline.horizon_hours == 0 {
            return usage("train_days and horizon_hours must be positive");
        }
        if self.pipeline.horizon_hours > crate::ingest::MAX_LEAD_HOURS {
            return usage("horizon_hours cannot exceed 168");
        }
        // row count is checked later against the actual table
        self.pipeline
            .forest
            .validate(usize::MAX)
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn out_path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&RunFlags::default(), None).unwrap();
        assert_eq!(c.out_dir, PathBuf::from("out"));
        assert_eq!(c.forecasts, PathBuf::from("out/forecasts.csv"));
        assert_eq!(c.n_scenarios, 200);
        assert_eq!(c.pipeline, PipelineConfig::default());
        assert_eq!(c.threshold, 0.0);
        assert_eq!(c.samples, 1000);
    }

    #[test]
    fn flags_beat_file_beats_env() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "n_scenarios = 7\nnum_trees = 12\nout_dir = from_file\nlevels = 0.1, 0.5, 0.9").unwrap();
        let flags = RunFlags {
            config: Some(f.path().to_path_buf()),
            num_trees: Some(30),
            ..RunFlags::default()
        };
        let c = RunConfig::resolve(&flags, Some("from_env".into())).unwrap();
        assert_eq!(c.n_scenarios, 7);
        assert_eq!(c.pipeline.forest.num_trees, 30);
        assert_eq!(c.out_dir, PathBuf::from("from_file"));
        assert_eq!(c.pipeline.levels, vec![0.1, 0.5, 0.9]);

        let c = RunConfig::resolve(&RunFlags::default(), Some("from_env".into())).unwrap();
        assert_eq!(c.out_dir, PathBuf::from("from_env"));
    }

    #[test]
    fn rejects_bad_values() {
        let flags = RunFlags {
            n_scenarios: Some(0),
            ..RunFlags::default()
        };
        assert!(matches!(RunConfig::resolve(&flags, None), Err(CliError::Usage(_))));
        let flags = RunFlags {
            levels: Some(vec![0.5, 0.2]),
            ..RunFlags::default()
        };
        assert!(RunConfig::resolve(&flags, None).is_err());

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "bogus = 1").unwrap();
        let flags = RunFlags {
            config: Some(f.path().to_path_buf()),
            ..RunFlags::default()
        };
        let err = RunConfig::resolve(&flags, None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
