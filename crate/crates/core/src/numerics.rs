//! Special functions, quadrature, bracketed root finding and the random
//! number plumbing shared by the samplers and estimators.

use std::f64::consts::PI;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Point2, Segment, Window};

/// Counter-based generator. Streams derived from the same master seed with
/// different indices never overlap.
pub type Rng = ChaCha8Rng;

/// Generator for replication `stream` of a study seeded with `seed`.
pub fn rng_for(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, e.g. the seed of one stage inside a fit.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Neumaier-compensated sum; the result does not depend on how the input was
/// produced, only on its order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

const SERIES_LIMIT: f64 = 15.0;

/// Modified Bessel function of the first kind, order 0.
pub fn bessel_i0(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("bessel_i0 needs x >= 0, got {x}")));
    }
    Ok(if x <= SERIES_LIMIT {
        bessel_series(0, x)
    } else {
        bessel_asymptotic_scaled(0, x) * x.exp()
    })
}

/// `exp(-x)·I₀(x)`, finite for every `x ≥ 0`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        bessel_series(0, x) * (-x).exp()
    } else {
        bessel_asymptotic_scaled(0, x)
    }
}

/// `exp(-x)·I₂(x)`.
pub fn bessel_i2e(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        bessel_series(2, x) * (-x).exp()
    } else {
        bessel_asymptotic_scaled(2, x)
    }
}

/// Power series Σ (x/2)^{2k+n} / (k! (k+n)!), summed until the terms vanish.
fn bessel_series(order: u32, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = (0.5 * x).powi(order as i32);
    for k in 1..=order {
        term /= k as f64;
    }
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + order) as f64);
        sum += term;
        if term <= sum * 1e-17 || k > 500 {
            break;
        }
    }
    sum
}

/// Hankel expansion of `exp(-x) I_n(x)` for large `x`.
fn bessel_asymptotic_scaled(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order as f64).powi(2);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..80 {
        let kf = k as f64;
        let next = -term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Composite Simpson rule with `panels` (even) sub-intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> Result<f64> {
    if panels == 0 || panels % 2 != 0 {
        return Err(Error::invalid(format!(
            "Simpson rule needs an even positive panel count, got {panels}"
        )));
    }
    if !(a < b) {
        return Err(Error::invalid(format!(
            "Simpson rule needs a < b, got [{a}, {b}]"
        )));
    }
    let h = (b - a) / panels as f64;
    let odd = compensated_sum((1..panels).step_by(2).map(|i| f(a + i as f64 * h)));
    let even = compensated_sum((2..panels).step_by(2).map(|i| f(a + i as f64 * h)));
    Ok(h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even))
}

/// Trapezoid rule on equally spaced samples with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (compensated_sum(values.iter().copied()) - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Root of a continuous function on a sign-changing bracket.
///
/// False-position steps with the Illinois modification, falling back to
/// bisection whenever the secant step does not shrink the bracket enough.
/// Stops once the bracket is narrower than `tol` or `f` vanishes exactly.
pub fn solve_scalar<F: FnMut(f64) -> f64>(mut f: F, bracket: (f64, f64), tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let tol = tol.max(f64::EPSILON * (lo.abs() + hi.abs()));
    let mut side = 0i8;
    for _ in 0..200 {
        let width = hi - lo;
        if width <= tol {
            break;
        }
        let secant = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let guard = 0.05 * width;
        let x = if secant.is_finite() && secant > lo + guard && secant < hi - guard {
            secant
        } else {
            0.5 * (lo + hi)
        };
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if f_lo.abs() < f_hi.abs() { lo } else { hi })
}

/// Equally spaced evaluation grid including both end points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl Grid1D {
    pub const DEFAULT_COUNT: usize = 100;

    pub fn new(lower: f64, upper: f64, count: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::invalid(format!(
                "grid bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        if count < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        Ok(Self {
            lower,
            upper,
            count,
        })
    }

    /// Directions `[0, π]`; the last point duplicates the first.
    pub fn directions(count: usize) -> Self {
        Self {
            lower: 0.0,
            upper: PI,
            count,
        }
    }

    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.count - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.upper
        } else {
            self.lower + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.point(i))
    }

    /// Index of the cell containing `x` and the fractional position inside
    /// it; `x` is clamped to the grid.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let t = ((x - self.lower) / self.step()).clamp(0.0, (self.count - 1) as f64);
        let i = (t.floor() as usize).min(self.count - 2);
        (i, t - i as f64)
    }
}

/// Length law of uniformly placed test segments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LengthSpec {
    Fixed(f64),
    /// Uniform on `[0, upper]`.
    Uniform(f64),
}

impl LengthSpec {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            LengthSpec::Fixed(r) => r,
            LengthSpec::Uniform(upper) => {
                // (0, upper]; a zero length is not a segment
                upper * (1.0 - rng.random::<f64>())
            }
        }
    }

    /// Lebesgue measure of the length range (1 for a fixed length).
    pub fn measure(&self) -> f64 {
        match *self {
            LengthSpec::Fixed(_) => 1.0,
            LengthSpec::Uniform(upper) => upper,
        }
    }
}

pub fn uniform_point(window: &Window, rng: &mut Rng) -> Point2 {
    match window {
        Window::Rect(w) => Point2::new(
            w.origin.x + w.width * rng.random::<f64>(),
            w.origin.y + w.height * rng.random::<f64>(),
        ),
        Window::Disk(d) => {
            let rad = d.radius() * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            Point2::new(rad * theta.cos(), rad * theta.sin())
        }
    }
}

pub fn uniform_segment(window: &Window, lengths: LengthSpec, rng: &mut Rng) -> Segment {
    let center = uniform_point(window, rng);
    let direction = PI * rng.random::<f64>();
    let length = lengths.sample(rng);
    Segment::new(center, length, direction)
}

/// `n` independent segments with centers uniform in `window` and directions
/// uniform on `[0, π)`.
pub fn uniform_segments(
    n: usize,
    window: &Window,
    lengths: LengthSpec,
    rng: &mut Rng,
) -> Configuration {
    (0..n)
        .map(|_| uniform_segment(window, lengths, rng))
        .collect()
}

/// Lebesgue volume of the segment space `window × lengths × [0, π)`.
pub fn segment_space_volume(window: &Window, lengths: LengthSpec) -> f64 {
    window.area() * lengths.measure() * PI
}

/// Type-7 empirical quantile of sorted data (linear interpolation between
/// order statistics, `h = (n-1)p`).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample mean and (n−1) standard deviation; the deviation is 0 for a
/// single observation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DiskWindow, RectWindow};

    /// Defining series summed independently, in the naive order.
    fn i0_series_oracle(x: f64) -> f64 {
        let mut s = 0.0;
        let mut fact = 1.0;
        for k in 0..200 {
            if k > 0 {
                fact *= k as f64;
            }
            let t = (x * x / 4.0).powi(k) / (fact * fact);
            s += t;
            if t < 1e-300 {
                break;
            }
        }
        s
    }

    #[test]
    fn bessel_values() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        let v = bessel_i0(1.0).unwrap();
        assert!((v - 1.266_065_877_752_008_4).abs() < 1e-14, "{v}");
        assert!(bessel_i0(-1.0).is_err());
        for i in 0..=200 {
            let x = i as f64 * 0.1;
            let o = i0_series_oracle(x);
            let got = bessel_i0(x).unwrap();
            assert!(((got - o) / o).abs() < 1e-12, "x={x} got={got} oracle={o}");
        }
        let mut prev = 0.0;
        for i in 0..400 {
            let v = bessel_i0(i as f64 * 0.1).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn scaled_bessel_consistent() {
        for &x in &[0.5f64, 3.0, 14.9, 15.1, 40.0, 700.0] {
            let direct = bessel_series(0, x.min(300.0)) * (-x.min(300.0)).exp();
            if x < 300.0 {
                assert!(((bessel_i0e(x) - direct) / direct).abs() < 1e-10, "x={x}");
            }
            assert!(bessel_i0e(x).is_finite() && bessel_i0e(x) > 0.0);
        }
        // I2(2) = 0.688948447698738
        assert!((bessel_i2e(2.0) * 2f64.exp() - 0.688_948_447_698_738).abs() < 1e-12);
        let (a, b) = (bessel_i2e(14.99), bessel_i2e(15.01));
        assert!((a - b).abs() / a < 1e-3);
    }

    #[test]
    fn simpson_examples() {
        for m in [2, 4, 10, 100] {
            let v = simpson(|x| x * x, 0.0, 1.0, m).unwrap();
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
            let c = simpson(|x| x * x * x - x, -1.0, 2.0, m).unwrap();
            assert!((c - 2.25).abs() < 1e-13);
        }
        // error bound (b−a) h⁴ max|f⁗| / 180
        let bound = PI * (PI / 100.0).powi(4) / 180.0;
        assert!((simpson(f64::sin, 0.0, PI, 100).unwrap() - 2.0).abs() < bound);
        assert!(simpson(f64::sin, 0.0, PI, 3).is_err());
        assert!(simpson(f64::sin, 1.0, 0.0, 4).is_err());
    }

    #[test]
    fn simpson_fourth_order() {
        let exact = 1f64.exp() - 1.0;
        let e1 = (simpson(f64::exp, 0.0, 1.0, 8).unwrap() - exact).abs();
        let e2 = (simpson(f64::exp, 0.0, 1.0, 16).unwrap() - exact).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 3.9, "order {order}");
    }

    #[test]
    fn solver_examples() {
        let r = solve_scalar(|x| x - 1.0, (0.0, 2.0), 1e-12).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = solve_scalar(|x| x.exp() - 2.0, (0.0, 2.0), 1e-12).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-11);
        assert!(matches!(
            solve_scalar(|x| x * x + 1.0, (-1.0, 1.0), 1e-9),
            Err(Error::Bracket { .. })
        ));
        // piecewise-constant function: converges to the jump
        let r = solve_scalar(|x| if x < 0.3 { -1.0 } else { 1.0 }, (0.0, 1.0), 1e-10).unwrap();
        assert!((r - 0.3).abs() < 1e-9);
    }

    #[test]
    fn rng_streams_reproducible() {
        let mut a = rng_for(7, 3);
        let mut b = rng_for(7, 3);
        let mut c = rng_for(7, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.random()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.random()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.random()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn uniform_segments_statistics() {
        let mut rng = rng_for(11, 0);
        let w = Window::Rect(RectWindow::new(Point2::new(1.0, -2.0), 2.0, 1.0).unwrap());
        assert!(uniform_segments(0, &w, LengthSpec::Fixed(0.1), &mut rng).is_empty());

        let n = 100_000;
        let x = uniform_segments(n, &w, LengthSpec::Fixed(0.1), &mut rng);
        let mx = x.iter().map(|s| s.center.x).sum::<f64>() / n as f64;
        let my = x.iter().map(|s| s.center.y).sum::<f64>() / n as f64;
        let se_x = 2.0 / 12f64.sqrt() / (n as f64).sqrt();
        let se_y = 1.0 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mx - 2.0).abs() < 3.0 * se_x);
        assert!((my + 1.5).abs() < 3.0 * se_y);

        // chi-square on 10 direction bins; 1% critical value with 9 df is 21.666
        let mut bins = [0usize; 10];
        for s in x.iter() {
            bins[((s.direction / PI * 10.0) as usize).min(9)] += 1;
        }
        let e = n as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 21.666, "chi2 {chi2}");

        let d = Window::Disk(DiskWindow::new(1.0).unwrap());
        let y = uniform_segments(20_000, &d, LengthSpec::Uniform(1.0), &mut rng);
        assert!(y
            .iter()
            .all(|s| s.center.norm() <= 0.5 && s.length > 0.0 && s.length <= 1.0));
        // P(|y| <= R/2) = 1/4
        let inner = y.iter().filter(|s| s.center.norm() <= 0.25).count() as f64 / 20_000.0;
        assert!((inner - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / 20_000.0).sqrt());
    }

    #[test]
    fn quantiles_and_moments() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&v, 0.0), 1.0);
        assert_eq!(quantile_type7(&v, 1.0), 4.0);
        assert!((quantile_type7(&v, 0.05) - 1.15).abs() < 1e-12);
        assert!((quantile_type7(&v, 0.95) - 3.85).abs() < 1e-12);
        assert_eq!(mean_sd(&[5.0]), (5.0, 0.0));
        let (m, s) = mean_sd(&v);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_locate() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        assert_eq!(g.point(10), 1.0);
        assert_eq!(g.locate(1.0), (9, 1.0));
        let (i, t) = g.locate(0.35);
        assert_eq!(i, 3);
        assert!((t - 0.5).abs() < 1e-12);
        assert!(Grid1D::new(1.0, 1.0, 5).is_err());
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
    }
}
