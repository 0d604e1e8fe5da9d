//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use qpost::combine::{standard_grid, vincentize, QuantileVector};
use qpost::dist::PiecewiseCdf;
use qpost::error_model::{build_error_table, rank_label_members, ErrorSample, ErrorTable};
use qpost::ingest::{slice_scenario, synthesize_dataset, Dataset, SynthConfig};
use qpost::pipeline::{evaluate, EvaluationReport, PipelineConfig};
use qpost::qrf::{oob_coverage, CovariateVector, Forest, ForestConfig};
use qpost::scoring::{crps_mc, interval_coverage, mean_by_lead_bin, INTERVALS};

const DATA_SEED: u64 = 42;
const EVAL_SEED: u64 = 7;
const N_SCENARIOS: usize = 50;

struct Gate {
    failures: usize,
}

impl Gate {
    fn report(&mut self, id: u32, pass: bool, what: &str, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id}: {tag}  {what}  [{detail}]");
        if !pass {
            self.failures += 1;
        }
    }
}

fn training_table(ds: &Dataset, origin: qpost::time::HourStamp, cfg: &PipelineConfig) -> ErrorTable {
    let (train, _) = slice_scenario(ds, &cfg.window(origin)).expect("window covered");
    let train = Dataset {
        forecasts: rank_label_members(&train.forecasts),
        ..train
    };
    build_error_table(&train).expect("non-empty table")
}

fn criterion_1(gate: &mut Gate, report: &EvaluationReport, secs: f64) {
    let records = report.all_records();
    let c95 = interval_coverage(&records, 0.95).unwrap();
    let c80 = interval_coverage(&records, 0.8).unwrap();
    gate.report(
        1,
        (0.92..=0.98).contains(&c95) && (0.75..=0.85).contains(&c80) && secs < 300.0,
        "50-scenario coverage: 95% in [0.92, 0.98], 80% in [0.75, 0.85], < 5 min",
        format!(
            "cov95={c95:.4} cov80={c80:.4} records={} runtime={secs:.1}s",
            records.len()
        ),
    );
}

fn criterion_2(gate: &mut Gate, ds: &Dataset, report: &EvaluationReport, cfg: &PipelineConfig) {
    let s = &report.scenarios[0];
    let table = training_table(ds, s.origin, cfg);
    let forest = Forest::train(
        &table,
        &ForestConfig {
            seed: s.forest_seed,
            ..cfg.forest
        },
    )
    .unwrap();
    let cov = oob_coverage(&forest, &table, &INTERVALS).unwrap();
    let mut worst: f64 = 0.0;
    let mut cells = 0;
    for cell in cov.binned(24).values() {
        if let Some(c) = cell.coverage() {
            for (v, w) in c.iter().zip(INTERVALS) {
                worst = worst.max((v - w).abs());
                cells += 1;
            }
        }
    }
    gate.report(
        2,
        cells == 7 * 4 && worst <= 0.05,
        "OOB coverage per 24 h lead bin within 5 points of nominal (50/80/90/95)",
        format!(
            "rows={} bins x intervals={cells} max |dev|={:.2} pp",
            table.len(),
            worst * 100.0
        ),
    );
}

fn criterion_3(gate: &mut Gate, ds: &Dataset) {
    let cfg = PipelineConfig {
        train_days: 21,
        ..PipelineConfig::default()
    };
    let origin = ds.observations[0].valid_time.add_hours(22 * 24);
    let mut rows = training_table(ds, origin, &cfg).rows;
    rows.truncate(50_000);
    let table = ErrorTable::from_rows(rows).unwrap();
    let config = ForestConfig {
        num_trees: 250,
        sample_count: 128,
        min_node_size: 1,
        ..ForestConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let forest = pool.install(|| Forest::train(&table, &config)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    gate.report(
        3,
        table.len() == 50_000 && forest.trees().len() == 250 && secs < 10.0,
        "250 trees, 128-row subsamples, 50,000 rows, single thread, < 10 s",
        format!("rows={} time={secs:.3}s", table.len()),
    );
}

fn criterion_4(gate: &mut Gate) {
    let grid = standard_grid();
    let q = |mu: f64, sd: f64| {
        let n = Normal::new(mu, sd).unwrap();
        QuantileVector::new(grid.clone(), grid.iter().map(|&p| n.inverse_cdf(p)).collect()).unwrap()
    };
    let combined = vincentize(&[q(0.0, 1.0), q(2.0, 3.0)]).unwrap();
    let target = q(1.0, 2.0);
    let worst = combined
        .values()
        .iter()
        .zip(target.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    gate.report(
        4,
        worst <= 1e-9,
        "Vincentized N(0,1) and N(2,3) match N(1,2) per level within 1e-9",
        format!("levels={} max |dev|={worst:.2e}", grid.len()),
    );
}

fn criterion_5(gate: &mut Gate) {
    let l = [1e-10, 0.5, 1.0 - 1e-10];
    let uniform = PiecewiseCdf::from_quantiles(&QuantileVector::new(l.to_vec(), l.to_vec()).unwrap());
    let u_err = (uniform.crps(0.0) - 1.0 / 3.0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_z: f64 = 0.0;
    for i in 0..50 {
        let d = PiecewiseCdf::from_quantiles(&common::random_quantiles(&mut rng));
        let y = d.quantile(rng.random_range(0.001..0.999)).unwrap() + rng.random_range(-1.0..1.0);
        let mc = crps_mc(&d, y, 1_000_000, 1000 + i).unwrap();
        worst_z = worst_z.max((d.crps(y) - mc.value).abs() / mc.std_error);
    }

    let mut point_exact = true;
    for _ in 0..100 {
        let c: f64 = rng.random_range(-20.0..20.0);
        let y: f64 = rng.random_range(-20.0..20.0);
        let d = PiecewiseCdf::from_quantiles(&QuantileVector::new(vec![0.1, 0.9], vec![c, c]).unwrap());
        point_exact &= d.crps(y) == (y - c).abs();
    }
    gate.report(
        5,
        u_err <= 1e-9 && worst_z <= 4.0 && point_exact,
        "CRPS: uniform at 0 is 1/3 (1e-9); closed form vs MC(1e6) within 4 SE on 50; point mass exact",
        format!("uniform |dev|={u_err:.2e} max z={worst_z:.2} point mass exact={point_exact}"),
    );
}

fn criterion_6(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut mass_dev, mut trip_dev, mut ks_max): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..100 {
        let d = PiecewiseCdf::from_quantiles(&common::random_quantiles(&mut rng));
        let lo = d.lower_tail();
        let hi = d.upper_tail();
        let mass = common::integrate_density(&d, 20_000, 40.0) + common::tail_remainder(&d, 40.0);
        mass_dev = mass_dev.max((mass - 1.0).abs());

        for k in 1..1000 {
            let p = k as f64 / 1000.0;
            trip_dev = trip_dev.max((d.cdf(d.quantile(p).unwrap()) - p).abs());
        }
        let (a, b) = (lo.boundary - 5.0 / lo.rate, hi.boundary + 5.0 / hi.rate);
        for k in 0..=1000 {
            let x = a + (b - a) * k as f64 / 1000.0;
            trip_dev = trip_dev.max((d.quantile(d.cdf(x)).unwrap() - x).abs());
        }

        let mut s = d.sample(100_000, 600 + i);
        ks_max = ks_max.max(common::ks_statistic(&mut s, |x| d.cdf(x)));
    }
    gate.report(
        6,
        mass_dev <= 1e-6 && trip_dev <= 1e-9 && ks_max < 0.01,
        "100 random distributions: unit mass (1e-6), round trips (1e-9), KS of 1e5 draws < 0.01",
        format!("max mass dev={mass_dev:.2e} max round-trip dev={trip_dev:.2e} max KS={ks_max:.4}"),
    );
}

fn criterion_7(gate: &mut Gate, ds: &Dataset, report: &EvaluationReport, cfg: &PipelineConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // every (lead, label) combination is in every tree's sample: a 128-row
    // grid under the default config, and a full grid sampled whole
    let constants = [("glm", 1.25), ("ukv", -0.5), ("enuk_r3", 3.0), ("pvrn", 0.0)];
    let grid_table = |leads: &[u32]| {
        let rows = leads
            .iter()
            .flat_map(|&lead| {
                constants.iter().map(move |&(label, e)| ErrorSample {
                    lead_hours: lead,
                    model_label: label.into(),
                    error: e,
                })
            })
            .collect();
        ErrorTable::from_rows(rows).unwrap()
    };
    let coarse: Vec<u32> = (0..32).map(|i| i * 168 / 31).collect();
    let full: Vec<u32> = (0..=168).collect();
    let grid = standard_grid();
    let mut recovered = true;
    for (leads, sample_count) in [(&coarse, 128), (&full, 4 * 169)] {
        let config = ForestConfig {
            sample_count,
            ..ForestConfig::default()
        };
        let det = Forest::train(&grid_table(leads), &config).unwrap();
        for (label, e) in constants {
            for lead in 0..=168 {
                let q = det
                    .predict_quantiles(&CovariateVector::new(lead, label), &grid)
                    .unwrap();
                recovered &= q.values().iter().all(|&v| v == e);
            }
        }
    }

    let table = training_table(ds, report.scenarios[0].origin, cfg);
    let forest = Forest::train(&table, &cfg.forest).unwrap();
    let labels = table.label_set.clone();
    let (mut weight_dev, mut monotone): (f64, bool) = (0.0, true);
    for _ in 0..1000 {
        let x = CovariateVector::new(
            rng.random_range(0..=168),
            labels[rng.random_range(0..labels.len())].clone(),
        );
        let w = forest.predict_weights(&x);
        weight_dev = weight_dev.max((w.iter().sum::<f64>() - 1.0).abs());
        let q = forest.predict_quantiles(&x, &grid).unwrap();
        monotone &= q.values().windows(2).all(|p| p[0] <= p[1]);
    }

    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let again = single.install(|| Forest::train(&table, &cfg.forest)).unwrap();
    let probe = CovariateVector::new(30, labels[0].clone());
    let a = forest.predict_quantiles(&probe, &grid).unwrap();
    let b = again.predict_quantiles(&probe, &grid).unwrap();
    let identical = forest == again
        && a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());

    gate.report(
        7,
        recovered && weight_dev <= 1e-12 && monotone && identical,
        "QRF: constant errors recovered exactly; weights sum to 1 (1e-12); monotone; reproducible",
        format!(
            "recovered={recovered} max |sum w - 1|={weight_dev:.1e} monotone={monotone} bit-identical={identical}"
        ),
    );
}

fn criterion_8(gate: &mut Gate, report: &EvaluationReport) {
    let post = mean_by_lead_bin(&report.all_records(), 24, |r| Some(r.crps));
    let raw = mean_by_lead_bin(&report.all_raw_records(), 24, |r| Some(r.crps));
    let avg = |bins: &[(u32, qpost::scoring::MetricSummary)]| {
        bins.iter().map(|(_, s)| s.mean).sum::<f64>() / bins.len() as f64
    };
    let (p, r) = (avg(&post), avg(&raw));
    let first = post.first().map(|(_, s)| s.mean).unwrap_or(f64::NAN);
    let last = post
        .iter()
        .find(|(start, _)| *start == 144)
        .map(|(_, s)| s.mean)
        .unwrap_or(f64::NAN);
    gate.report(
        8,
        post.len() == 7 && p <= r && last > first,
        "mean CRPS post-processed <= raw ensemble over lead bins; CRPS[144,168] > CRPS[0,24]",
        format!("post={p:.4} raw={r:.4} bin0={first:.4} bin144={last:.4}"),
    );
}

fn criterion_9(gate: &mut Gate, ds: &Dataset, report: &EvaluationReport, cfg: &PipelineConfig) {
    let mut violations = 0;
    for s in &report.scenarios {
        let (train, _) = slice_scenario(ds, &cfg.window(s.origin)).unwrap();
        let late_obs = train.observations.iter().any(|o| o.valid_time >= s.origin);
        let late_fc = train.forecasts.iter().any(|f| f.valid_time >= s.origin);
        if late_obs || late_fc || !s.leakage_free() {
            violations += 1;
        }
    }
    gate.report(
        9,
        violations == 0,
        "no training observation at or after the scenario origin",
        format!("scenarios={} violations={violations}", report.scenarios.len()),
    );
}

fn main() -> ExitCode {
    let mut gate = Gate { failures: 0 };
    let ds = synthesize_dataset(&SynthConfig::default(), DATA_SEED).unwrap();
    let cfg = PipelineConfig::default();

    let t = Instant::now();
    let report = evaluate(&ds, &cfg, N_SCENARIOS, EVAL_SEED).unwrap();
    let secs = t.elapsed().as_secs_f64();

    criterion_1(&mut gate, &report, secs);
    criterion_2(&mut gate, &ds, &report, &cfg);
    criterion_3(&mut gate, &ds);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate, &ds, &report, &cfg);
    criterion_8(&mut gate, &report);
    criterion_9(&mut gate, &ds, &report, &cfg);

    if gate.failures == 0 {
        println!("acceptance: all 9 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 9 criteria fail", gate.failures);
        ExitCode::FAILURE
    }
}
