//! Takacs–Fiksel fit of the Gibbs directional model.
//!
//! With test functions `q = N_x(u)` and `q = 1` the innovation equations read
//!
//! ```text
//! Σ_{u∈x} N_x(u) = (π|B|C/J) Σᵢ f_X(φᵢ) N_x(uᵢ) e^{aN_x(uᵢ)} / β(a, r, C, φᵢ)
//! n(x)           = (π|B|C/J) Σᵢ f_X(φᵢ)         e^{aN_x(uᵢ)} / β(a, r, C, φᵢ)
//! ```
//!
//! over `J` uniform test segments `uᵢ`. For fixed `a` the second equation is
//! increasing in `C`, so it is solved for `C` first; `a` is then found from
//! the ratio of the two equations.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Configuration, RectWindow, Segment, Window};
use crate::kde::{circular_kde, CircularKdeParams};
use crate::models::{j_integral, reference_direction_from_palm, DensityGrid};
use crate::numerics::{
    compensated_sum, rng_for, solve_scalar, uniform_segment, Grid1D, LengthSpec,
};
use crate::parallel;

#[derive(Clone, Debug, PartialEq)]
pub struct TfConfig {
    /// Number of Monte Carlo test segments.
    pub test_segments: usize,
    pub grid_points: usize,
    pub a_bracket: (f64, f64),
    pub a_tol: f64,
    /// Relative tolerance of the inner solve for `C`.
    pub c_tol: f64,
    /// Kernel concentration; `None` selects it by the plug-in rule.
    pub kappa: Option<f64>,
    pub seed: u64,
}

impl Default for TfConfig {
    fn default() -> Self {
        Self {
            test_segments: 10_000,
            grid_points: Grid1D::DEFAULT_COUNT,
            a_bracket: (-10.0, 0.0),
            a_tol: 1e-8,
            c_tol: 1e-12,
            kappa: None,
            seed: 0,
        }
    }
}

impl TfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.test_segments == 0 {
            return Err(Error::invalid("test segment count must be at least 1"));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("direction grid needs at least 2 points"));
        }
        let (lo, hi) = self.a_bracket;
        if !(lo < hi && hi <= 0.0 && lo.is_finite()) {
            return Err(Error::invalid(format!(
                "a bracket must be a nonempty subset of (-inf, 0], got [{lo}, {hi}]"
            )));
        }
        if !(self.a_tol > 0.0 && self.c_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TfResult {
    pub c: f64,
    pub a: f64,
    pub tau: f64,
    pub kappa: f64,
    pub f_x_hat: DensityGrid,
    pub g_hat: DensityGrid,
    /// Residuals of the hit-count and unit equations at the solution,
    /// relative to their left-hand sides.
    pub residual_hits: f64,
    pub residual_unit: f64,
    /// The data favour no inhibition: the ratio equation has no root inside
    /// the bracket and `a` was set to its upper end.
    pub at_boundary: bool,
}

/// `β(a, r, C, φ) = exp((e^a − 1) r² C J(φ))`.
pub fn beta_factor(a: f64, r: f64, c: f64, phi: f64, f_x: &DensityGrid) -> f64 {
    (a.exp_m1() * r * r * c * j_integral(phi, f_x)).exp()
}

/// Per-test-segment quantities that do not depend on `(a, C)`.
struct TestTerms {
    f: Vec<f64>,
    hits: Vec<f64>,
    j: Vec<f64>,
    /// `π|B|/J`
    weight: f64,
}

impl TestTerms {
    /// `Σ f e^{aN}/β` and `Σ f N e^{aN}/β`, both scaled by a common factor
    /// `e^{-m}`, returned with `m`. The exponent can exceed the float range
    /// for strongly negative `a` at the upper end of the `C` bracket.
    fn scaled_sums(&self, a: f64, c: f64, r: f64) -> (f64, f64, f64) {
        let k = a.exp_m1() * r * r * c;
        let e: Vec<f64> = (0..self.f.len())
            .map(|i| self.f[i].ln() + a * self.hits[i] - k * self.j[i])
            .collect();
        let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return (0.0, 0.0, 0.0);
        }
        let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
        let s0 = compensated_sum(w.iter().copied());
        let s1 = compensated_sum(w.iter().zip(&self.hits).map(|(w, h)| w * h));
        (m, s0, s1)
    }

    /// Unscaled sums; only used where they are known to be finite.
    fn sums(&self, a: f64, c: f64, r: f64) -> (f64, f64) {
        let (m, s0, s1) = self.scaled_sums(a, c, r);
        (m.exp() * s0, m.exp() * s1)
    }

    /// Mean hit count of the model weights, `Σ f N e^{aN}/β / Σ f e^{aN}/β`.
    fn mean_hits(&self, a: f64, c: f64, r: f64) -> f64 {
        let (_, s0, s1) = self.scaled_sums(a, c, r);
        s1 / s0
    }

    /// Solves the unit equation for `C` at fixed `a`.
    fn solve_c(&self, a: f64, r: f64, n: f64, tol: f64) -> Result<f64> {
        // β ≤ 1 on a ≤ 0, so the root lies below the β = 1 solution
        let s_free = compensated_sum(
            self.f
                .iter()
                .zip(&self.hits)
                .map(|(f, h)| f * (a * h).exp()),
        );
        if !(s_free > 0.0) {
            return Err(Error::ZeroDenominator("unit equation"));
        }
        let upper = n / (self.weight * s_free);
        if a == 0.0 {
            return Ok(upper);
        }
        // in logs: ln(π|B|C/J) + ln Σ f e^{aN}/β − ln n, increasing in C
        let resid = |c: f64| {
            let (m, s0, _) = self.scaled_sums(a, c, r);
            (self.weight * c).ln() + m + s0.ln() - n.ln()
        };
        let mut lo = upper * 1e-6;
        while resid(lo) > 0.0 {
            lo *= 1e-6;
            if lo < f64::MIN_POSITIVE {
                return Err(Error::ZeroDenominator("unit equation"));
            }
        }
        // widened slightly so rounding cannot push the root outside
        let hi = upper * (1.0 + 1e-9);
        solve_scalar(resid, (lo, hi), tol * upper)
    }
}

/// Fits `(C, a, τ)` and the reference direction density to a realization of
/// fixed-length segments in `window`.
pub fn tf_fit(
    x: &Configuration,
    r: f64,
    window: &RectWindow,
    config: &TfConfig,
) -> Result<TfResult> {
    config.validate()?;
    if x.is_empty() {
        return Err(Error::EmptySample("Takacs-Fiksel fit"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!(
            "segment length must be positive, got {r}"
        )));
    }
    let grid = Grid1D::directions(config.grid_points);
    let angles: Vec<f64> = x.iter().map(|s| s.direction).collect();
    let kp = match config.kappa {
        Some(k) => CircularKdeParams::new(k)?,
        None => CircularKdeParams::rule_of_thumb(&angles)?,
    };
    let f_x_hat = circular_kde(&angles, kp, grid)?;

    let mut rng = rng_for(config.seed, 0);
    let win = Window::Rect(*window);
    let tests: Vec<Segment> = (0..config.test_segments)
        .map(|_| uniform_segment(&win, LengthSpec::Fixed(r), &mut rng))
        .collect();
    let terms = TestTerms {
        f: tests.iter().map(|u| f_x_hat.eval(u.direction)).collect(),
        hits: parallel::map_slice(&tests, |u| x.hit_count(u) as f64),
        j: parallel::map_slice(&tests, |u| j_integral(u.direction, &f_x_hat)),
        weight: PI * window.area() / config.test_segments as f64,
    };

    let n = x.len() as f64;
    let lhs_hits = 2.0 * x.total_intersections() as f64;
    let observed_mean = lhs_hits / n;
    // ratio equation: observed mean hit count against its model counterpart
    let ratio = |a: f64| -> Result<f64> {
        let c = terms.solve_c(a, r, n, config.c_tol)?;
        Ok(observed_mean - terms.mean_hits(a, c, r))
    };

    let (lo, hi) = config.a_bracket;
    let g_hi = ratio(hi)?;
    let (a, at_boundary) = if g_hi >= 0.0 {
        (hi, true)
    } else {
        let g_lo = ratio(lo)?;
        if g_lo < 0.0 {
            return Err(non_convergence(
                &ratio,
                lo,
                hi,
                Error::Bracket {
                    lo,
                    hi,
                    f_lo: g_lo,
                    f_hi: g_hi,
                },
            ));
        }
        let mut failure = None;
        let root = solve_scalar(
            |a| match ratio(a) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            (lo, hi),
            config.a_tol,
        );
        if let Some(e) = failure {
            return Err(non_convergence(&ratio, lo, hi, e));
        }
        (root.map_err(|e| non_convergence(&ratio, lo, hi, e))?, false)
    };

    let c = terms.solve_c(a, r, n, config.c_tol)?;
    let (s0, s1) = terms.sums(a, c, r);
    let residual_unit = (n - terms.weight * c * s0) / n;
    let residual_hits = if lhs_hits > 0.0 {
        (lhs_hits - terms.weight * c * s1) / lhs_hits
    } else {
        -terms.weight * c * s1
    };

    // τ = C ∫ f_X/β dφ, integrated with the same test directions
    let k = a.exp_m1() * r * r * c;
    let inv_beta_sum =
        compensated_sum((0..tests.len()).map(|i| terms.f[i] * (-k * terms.j[i]).exp()));
    let tau = PI * c * inv_beta_sum / tests.len() as f64;
    let g_hat = reference_direction_from_palm(&f_x_hat, c, a, tau, r)?;

    Ok(TfResult {
        c,
        a,
        tau,
        kappa: kp.kappa,
        f_x_hat,
        g_hat,
        residual_hits,
        residual_unit,
        at_boundary,
    })
}

fn non_convergence<F>(ratio: &F, lo: f64, hi: f64, source: Error) -> Error
where
    F: Fn(f64) -> Result<f64>,
{
    let residual_curve = (0..=40)
        .map(|i| {
            let a = lo + (hi - lo) * i as f64 / 40.0;
            (a, ratio(a).unwrap_or(f64::NAN))
        })
        .collect();
    Error::NonConvergence {
        stage: "takacs-fiksel interaction parameter",
        source: Box::new(source),
        residual_curve,
    }
}
