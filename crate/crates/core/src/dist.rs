//! Full predictive distributions built from quantile vectors: a CDF that is
//! linear between the quantiles, with exponential tails whose density meets
//! the outermost linear segments continuously.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::combine::QuantileVector;

/// Tail rate used when the segment next to a tail has no usable slope:
/// the tail then has a mean distance of this many °C from its boundary.
const FALLBACK_TAIL_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistError {
    #[error("distribution is a point mass at {0}; density is undefined")]
    Degenerate(f64),
    #[error("probability {0} is outside (0, 1)")]
    Probability(f64),
    #[error("sample count must be at least {min}, got {got}")]
    SampleCount { min: usize, got: usize },
}

/// One exponential tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tail {
    /// Knot value where the tail starts, °C.
    pub boundary: f64,
    /// Cumulative probability at the boundary.
    pub probability: f64,
    /// Decay rate, 1/°C.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCdf {
    xs: Vec<f64>,
    ps: Vec<f64>,
    lower: Tail,
    upper: Tail,
}

impl PiecewiseCdf {
    /// Builds the distribution from a quantile vector.
    ///
    /// Runs of equal values collapse to one knot carrying the highest level
    /// of the run. When every value is equal the result is a point mass.
    pub fn from_quantiles(q: &QuantileVector) -> PiecewiseCdf {
        let mut xs: Vec<f64> = Vec::with_capacity(q.len());
        let mut ps: Vec<f64> = Vec::with_capacity(q.len());
        for (p, x) in q.iter() {
            if xs.last() == Some(&x) {
                *ps.last_mut().expect("paired") = p;
            } else {
                xs.push(x);
                ps.push(p);
            }
        }
        let k = xs.len() - 1;
        let rate = |mass: f64, dx: f64, dp: f64| {
            let r = dp / dx / mass;
            if dx > 0.0 && r.is_finite() && r > 0.0 {
                r
            } else {
                1.0 / FALLBACK_TAIL_WIDTH
            }
        };
        let (lower_rate, upper_rate) = if k == 0 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            (
                rate(ps[0], xs[1] - xs[0], ps[1] - ps[0]),
                rate(1.0 - ps[k], xs[k] - xs[k - 1], ps[k] - ps[k - 1]),
            )
        };
        PiecewiseCdf {
            lower: Tail {
                boundary: xs[0],
                probability: ps[0],
                rate: lower_rate,
            },
            upper: Tail {
                boundary: xs[k],
                probability: ps[k],
                rate: upper_rate,
            },
            xs,
            ps,
        }
    }

    /// `(value, cumulative probability)` knots.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ps.iter().copied())
    }

    pub fn lower_tail(&self) -> Tail {
        self.lower
    }

    pub fn upper_tail(&self) -> Tail {
        self.upper
    }

    /// The location of a point-mass distribution.
    pub fn point_mass(&self) -> Option<f64> {
        (self.xs.len() == 1).then_some(self.xs[0])
    }

    pub fn is_degenerate(&self) -> bool {
        self.xs.len() == 1
    }

    fn last(&self) -> usize {
        self.xs.len() - 1
    }

    /// Index `i` of the segment `[x_i, x_{i+1})` holding `x`, for `x` inside
    /// the knot range.
    fn segment(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&v| v <= x);
        (i.max(1) - 1).min(self.last() - 1)
    }

    fn lower_log_cdf(&self, x: f64) -> f64 {
        self.lower.probability.ln() + self.lower.rate * (x - self.lower.boundary)
    }

    fn upper_log_sf(&self, x: f64) -> f64 {
        (1.0 - self.upper.probability).ln() - self.upper.rate * (x - self.upper.boundary)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if let Some(c) = self.point_mass() {
            return if x >= c { 1.0 } else { 0.0 };
        }
        if x < self.xs[0] {
            self.lower_log_cdf(x).exp()
        } else if x >= self.xs[self.last()] {
            if x == self.xs[self.last()] {
                return self.ps[self.last()];
            }
            -self.upper_log_sf(x).exp_m1()
        } else {
            let i = self.segment(x);
            let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
            self.ps[i] + t * (self.ps[i + 1] - self.ps[i])
        }
    }

    /// Inverse of [`PiecewiseCdf::cdf`] on `(0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::Probability(p));
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        if let Some(c) = self.point_mass() {
            return c;
        }
        let k = self.last();
        if p < self.ps[0] {
            self.lower.boundary + (p / self.lower.probability).ln() / self.lower.rate
        } else if p > self.ps[k] {
            self.upper.boundary
                - ((1.0 - p) / (1.0 - self.upper.probability)).ln() / self.upper.rate
        } else {
            let i = (self.ps.partition_point(|&q| q <= p).max(1) - 1).min(k - 1);
            let t = (p - self.ps[i]) / (self.ps[i + 1] - self.ps[i]);
            self.xs[i] + t * (self.xs[i + 1] - self.xs[i])
        }
    }

    /// Natural log of the density at `x`.
    pub fn log_density(&self, x: f64) -> Result<f64, DistError> {
        if let Some(c) = self.point_mass() {
            return Err(DistError::Degenerate(c));
        }
        let k = self.last();
        Ok(if x < self.xs[0] {
            self.lower_log_cdf(x) + self.lower.rate.ln()
        } else if x >= self.xs[k] {
            self.upper_log_sf(x) + self.upper.rate.ln()
        } else {
            let i = self.segment(x);
            ((self.ps[i + 1] - self.ps[i]) / (self.xs[i + 1] - self.xs[i])).ln()
        })
    }

    /// Density at `x`: the segment slope inside the knots, exponential outside.
    pub fn density(&self, x: f64) -> Result<f64, DistError> {
        self.log_density(x).map(f64::exp)
    }

    /// `n` inverse-transform draws from a generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| self.quantile_unchecked(rng.sample(Open01)))
            .collect()
    }

    /// `P(X < threshold)`; equal to the CDF since the distribution is
    /// continuous (a point mass at the threshold counts as not below).
    pub fn prob_below(&self, threshold: f64) -> f64 {
        match self.point_mass() {
            Some(c) => (c < threshold) as u8 as f64,
            None => self.cdf(threshold),
        }
    }

    /// Fraction of `n` seeded draws strictly below `threshold`.
    pub fn prob_below_sampled(&self, threshold: f64, n: usize, seed: u64) -> Result<f64, DistError> {
        if n == 0 {
            return Err(DistError::SampleCount { min: 1, got: 0 });
        }
        let below = self.sample(n, seed).iter().filter(|&&x| x < threshold).count();
        Ok(below as f64 / n as f64)
    }

    /// Continuous ranked probability score, `∫ (F(x) - 1{x >= y})² dx`,
    /// integrated exactly piece by piece.
    pub fn crps(&self, y: f64) -> f64 {
        if let Some(c) = self.point_mass() {
            return (y - c).abs();
        }
        let k = self.last();
        let mut total = 0.0;

        // lower tail, F = p0 exp(λ (x - x0)) on (-inf, x0]
        let Tail {
            boundary: x0,
            probability: p0,
            rate: lam,
        } = self.lower;
        let c = y.min(x0);
        let fc = self.cdf(c);
        total += fc * fc / (2.0 * lam);
        if y < x0 {
            total += (x0 - c) - 2.0 * (p0 - fc) / lam + (p0 * p0 - fc * fc) / (2.0 * lam);
        }

        for i in 0..k {
            let (u, v) = (self.xs[i], self.xs[i + 1]);
            let (fu, fv) = (self.ps[i], self.ps[i + 1]);
            let c = y.clamp(u, v);
            let fc = fu + (c - u) / (v - u) * (fv - fu);
            total += linear_square_integral(c - u, fu, fc);
            total += linear_square_integral(v - c, 1.0 - fc, 1.0 - fv);
        }

        // upper tail, 1 - F = g0 exp(-μ (x - xk)) on [xk, inf)
        let xk = self.upper.boundary;
        let g0 = 1.0 - self.upper.probability;
        let mu = self.upper.rate;
        let c = y.max(xk);
        let gc = (self.upper_log_sf(c)).exp();
        if y > xk {
            total += (c - xk) - 2.0 * (g0 - gc) / mu + (g0 * g0 - gc * gc) / (2.0 * mu);
        }
        total += gc * gc / (2.0 * mu);
        total
    }
}

/// `∫ f²` over an interval of width `w` on which `f` runs linearly from `a`
/// to `b`.
fn linear_square_integral(w: f64, a: f64, b: f64) -> f64 {
    w * (a * a + a * b + b * b) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qv(levels: &[f64], values: &[f64]) -> QuantileVector {
        QuantileVector::new(levels.to_vec(), values.to_vec()).unwrap()
    }

    fn three() -> PiecewiseCdf {
        PiecewiseCdf::from_quantiles(&qv(&[0.025, 0.5, 0.975], &[-1.0, 0.0, 1.0]))
    }

    fn uniform() -> PiecewiseCdf {
        let l = [1e-10, 0.5, 1.0 - 1e-10];
        PiecewiseCdf::from_quantiles(&qv(&l, &l))
    }

    #[test]
    fn knots_are_hit_exactly() {
        let d = three();
        assert_eq!(d.cdf(0.0), 0.5);
        assert_eq!(d.cdf(-1.0), 0.025);
        assert_eq!(d.cdf(1.0), 0.975);
        assert_eq!(d.quantile(0.025).unwrap(), -1.0);
        assert_eq!(d.quantile(0.5).unwrap(), 0.0);
        assert!(d.cdf(-1.0 - 40.0 / d.lower_tail().rate) < 1e-18);
        assert!(d.cdf(-1e6) >= 0.0);
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());
    }

    #[test]
    fn tail_density_matches_adjacent_slope() {
        let d = three();
        let slope = 0.475;
        assert!((d.density(-1.0).unwrap() - slope).abs() < 1e-12);
        assert!((d.density(-1.0 - 1e-12).unwrap() - slope).abs() < 1e-9);
        assert!((d.density(1.0 - 1e-12).unwrap() - slope).abs() < 1e-12);
        assert!((d.density(1.0).unwrap() - slope).abs() < 1e-12);
        assert!((d.lower_tail().rate - slope / 0.025).abs() < 1e-12);
    }

    #[test]
    fn interior_density_is_segment_slope() {
        let d = PiecewiseCdf::from_quantiles(&qv(&[0.2, 0.4, 0.6, 0.8], &[-1.0, 0.0, 1.0, 2.0]));
        for x in [0.0, 0.3, 0.999] {
            assert!((d.density(x).unwrap() - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_values_collapse_to_highest_level() {
        let d = PiecewiseCdf::from_quantiles(&qv(&[0.1, 0.5, 0.9], &[0.0, 0.0, 1.0]));
        let knots: Vec<_> = d.knots().collect();
        assert_eq!(knots, vec![(0.0, 0.5), (1.0, 0.9)]);
        assert_eq!(d.cdf(0.0), 0.5);
    }

    #[test]
    fn point_mass_behaviour() {
        let d = PiecewiseCdf::from_quantiles(&qv(&[0.1, 0.5, 0.9], &[2.0, 2.0, 2.0]));
        assert_eq!(d.point_mass(), Some(2.0));
        assert_eq!(d.cdf(1.999), 0.0);
        assert_eq!(d.cdf(2.0), 1.0);
        assert_eq!(d.sample(5, 3), vec![2.0; 5]);
        assert_eq!(d.crps(2.0), 0.0);
        assert_eq!(d.crps(3.5), 1.5);
        assert!(matches!(d.density(2.0), Err(DistError::Degenerate(_))));
        assert_eq!(d.prob_below(2.0), 0.0);
        assert_eq!(d.prob_below(2.1), 1.0);
    }

    #[test]
    fn uniform_crps_and_log_score() {
        let d = uniform();
        assert!((d.crps(0.0) - 1.0 / 3.0).abs() < 1e-9);
        assert!((d.crps(0.5) - 1.0 / 12.0).abs() < 1e-9);
        assert!(d.log_density(0.5).unwrap().abs() < 1e-9);
    }

    #[test]
    fn far_tail_log_density_is_linear() {
        let d = three();
        let a = d.log_density(-50.0).unwrap();
        let b = d.log_density(-60.0).unwrap();
        let c = d.log_density(-70.0).unwrap();
        assert!(a.is_finite() && c.is_finite());
        assert!(((a - b) - (b - c)).abs() < 1e-9);
        assert!(((a - b) - 10.0 * d.lower_tail().rate).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_seeded() {
        let d = three();
        assert_eq!(d.sample(100, 7), d.sample(100, 7));
        assert_ne!(d.sample(100, 7), d.sample(100, 8));
        let s = d.sample(1000, 11);
        let frac = s.iter().filter(|&&x| x <= 0.0).count() as f64 / 1000.0;
        assert!((frac - 0.5).abs() < 0.05);
    }

    #[test]
    fn prob_below_examples() {
        let d = three();
        assert_eq!(d.prob_below(0.0), 0.5);
        let shifted = PiecewiseCdf::from_quantiles(&qv(&[0.025, 0.5, 0.975], &[50.0, 51.0, 52.0]));
        assert!(shifted.prob_below(0.0) < 1e-300);
        assert!(d.prob_below_sampled(0.0, 0, 1).is_err());
    }

    #[test]
    fn zero_width_segment_uses_fallback_rate() {
        // a knot pair closer than floating point can separate meaningfully
        let d = PiecewiseCdf::from_quantiles(&qv(&[0.1, 0.9], &[0.0, f64::MIN_POSITIVE]));
        assert_eq!(d.lower_tail().rate, 1.0 / FALLBACK_TAIL_WIDTH);
        assert_eq!(d.upper_tail().rate, 1.0 / FALLBACK_TAIL_WIDTH);
        assert!((d.cdf(-FALLBACK_TAIL_WIDTH) - 0.1 * (-1.0f64).exp()).abs() < 1e-15);
    }
}
