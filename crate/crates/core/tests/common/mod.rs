#![allow(dead_code)]

use qpost::combine::QuantileVector;
use qpost::dist::PiecewiseCdf;
use rand::Rng;

/// A random quantile vector: up to 30 distinct levels and non-decreasing
/// values with at least two distinct; roughly one later increment in ten
/// is zero.
pub fn random_quantiles<R: Rng>(rng: &mut R) -> QuantileVector {
    let k = rng.random_range(3..=30);
    let mut levels: Vec<f64> = (0..k).map(|_| rng.random_range(0.005..0.995)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut x: f64 = rng.random_range(-10.0..10.0);
    let values = levels
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let v = x;
            if i == 0 || rng.random_bool(0.9) {
                x += rng.random_range(0.01..2.0);
            }
            v
        })
        .collect();
    QuantileVector::new(levels, values).expect("valid by construction")
}

/// Composite Simpson integral of the density over the knots plus `efolds`
/// e-foldings of each tail, with every knot a breakpoint and `n` intervals
/// per tail. Segment ends are evaluated one ulp inside the segment so that
/// density jumps at knots are not straddled.
pub fn integrate_density(d: &PiecewiseCdf, n: usize, efolds: f64) -> f64 {
    let lo = d.lower_tail();
    let hi = d.upper_tail();
    let mut breaks = vec![lo.boundary - efolds / lo.rate];
    breaks.extend(d.knots().map(|(x, _)| x));
    breaks.push(hi.boundary + efolds / hi.rate);
    let last = breaks.len() - 2;
    let f = |x: f64| d.density(x).expect("non-degenerate");
    let mut total = 0.0;
    for (i, w) in breaks.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        // interior densities are flat, so two intervals are exact there
        let m = if i == 0 || i == last { n + n % 2 } else { 2 };
        let h = (b - a) / m as f64;
        let mut s = f(a.next_up()) + f(b.next_down());
        for j in 1..m {
            s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * j as f64);
        }
        total += s * h / 3.0;
    }
    total
}

/// Mass beyond `efolds` e-foldings of both tails.
pub fn tail_remainder(d: &PiecewiseCdf, efolds: f64) -> f64 {
    (d.lower_tail().probability + 1.0 - d.upper_tail().probability) * (-efolds).exp()
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
