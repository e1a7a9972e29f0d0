//! Kernel estimators of observed mark densities.
//!
//! Directions are axial, so the circular estimator works on doubled angles:
//! the kernel is `exp(κ cos 2(φ−φᵢ)) / (π I₀(κ))`, a density on `[0, π)`.
//! Lengths on `[0, L]` use Chen's beta kernel, which has no mass outside the
//! support.

use std::f64::consts::PI;
use std::io::Write;

use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::models::DensityGrid;
use crate::numerics::{bessel_i0e, bessel_i2e, compensated_sum, trapezoid, Grid1D};
use crate::parallel;

/// Concentration of the von Mises kernel on the doubled-angle circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircularKdeParams {
    pub kappa: f64,
}

/// Smallest concentration returned by the plug-in rule.
const MIN_KAPPA: f64 = 1e-3;

/// Inverse of `A(κ) = I₁(κ)/I₀(κ)` (Fisher's piecewise approximation).
fn a1_inverse(r: f64) -> f64 {
    if r < 0.53 {
        2.0 * r + r.powi(3) + 5.0 * r.powi(5) / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        1.0 / (r.powi(3) - 4.0 * r * r + 3.0 * r)
    }
}

impl CircularKdeParams {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel concentration must be positive, got {kappa}"
            )));
        }
        Ok(Self { kappa })
    }

    /// Plug-in concentration for a von Mises reference fitted to the doubled
    /// angles: `ν = [3 n κ̂² I₂(2κ̂) / (4 √π I₀(κ̂)²)]^{2/5}`.
    pub fn rule_of_thumb(angles: &[f64]) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::EmptySample("circular bandwidth selection"));
        }
        let n = angles.len() as f64;
        let c = compensated_sum(angles.iter().map(|p| (2.0 * p).cos())) / n;
        let s = compensated_sum(angles.iter().map(|p| (2.0 * p).sin())) / n;
        let rbar = c.hypot(s).min(0.999_999);
        let k = a1_inverse(rbar);
        // I₂(2k)/I₀(k)² with the exponential factors cancelled
        let ratio = bessel_i2e(2.0 * k) / bessel_i0e(k).powi(2);
        let nu = (3.0 * n * k * k * ratio / (4.0 * PI.sqrt())).powf(0.4);
        Ok(Self {
            kappa: nu.max(MIN_KAPPA),
        })
    }
}

/// Axial von Mises kernel centred at `center`.
#[inline]
pub fn vm_kernel(phi: f64, center: f64, kappa: f64) -> f64 {
    (kappa * ((2.0 * (phi - center)).cos() - 1.0)).exp() / (PI * bessel_i0e(kappa))
}

pub fn circular_kde(
    angles: &[f64],
    params: CircularKdeParams,
    grid: Grid1D,
) -> Result<DensityGrid> {
    if angles.is_empty() {
        return Err(Error::EmptySample("circular kernel estimate"));
    }
    let n = angles.len() as f64;
    let values = parallel::map_indexed(grid.count, |k| {
        let phi = grid.point(k);
        compensated_sum(angles.iter().map(|&a| vm_kernel(phi, a, params.kappa))) / n
    });
    DensityGrid::from_raw(grid, values, true)
}

/// Beta-kernel smoothing parameter on the unit-scaled support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaKdeParams {
    pub bandwidth: f64,
    pub upper: f64,
}

impl BetaKdeParams {
    pub fn new(bandwidth: f64, upper: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite() && upper > 0.0 && upper.is_finite()) {
            return Err(Error::invalid(format!(
                "beta kernel needs positive bandwidth and support, got ({bandwidth}, {upper})"
            )));
        }
        Ok(Self { bandwidth, upper })
    }

    /// `h = c · n^{-2/5}`.
    pub fn rule_of_thumb(n: usize, upper: f64, c: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySample("beta bandwidth selection"));
        }
        Self::new(c * (n as f64).powf(-0.4), upper)
    }
}

/// Beta kernel shape at one evaluation point: `Beta(x/h + 1, (1−x)/h + 1)`
/// evaluated at the (scaled) data.
#[derive(Clone, Copy, Debug)]
struct BetaShape {
    am1: f64,
    bm1: f64,
    log_norm: f64,
}

impl BetaShape {
    fn at(x: f64, params: BetaKdeParams) -> Self {
        let t = (x / params.upper).clamp(0.0, 1.0);
        let am1 = t / params.bandwidth;
        let bm1 = (1.0 - t) / params.bandwidth;
        Self {
            am1,
            bm1,
            log_norm: ln_beta(am1 + 1.0, bm1 + 1.0) + params.upper.ln(),
        }
    }

    #[inline]
    fn eval(&self, data_scaled: f64) -> f64 {
        let lt = if self.am1 == 0.0 {
            0.0
        } else {
            self.am1 * data_scaled.ln()
        };
        let lu = if self.bm1 == 0.0 {
            0.0
        } else {
            self.bm1 * (1.0 - data_scaled).ln()
        };
        (lt + lu - self.log_norm).exp()
    }
}

fn scaled_lengths(lengths: &[f64], upper: f64) -> Result<Vec<f64>> {
    lengths
        .iter()
        .map(|&r| {
            if (0.0..=upper).contains(&r) {
                Ok(r / upper)
            } else {
                Err(Error::OutsideSupport { value: r, upper })
            }
        })
        .collect()
}

pub fn beta_kde(lengths: &[f64], params: BetaKdeParams, grid: Grid1D) -> Result<DensityGrid> {
    if lengths.is_empty() {
        return Err(Error::EmptySample("beta kernel estimate"));
    }
    let t = scaled_lengths(lengths, params.upper)?;
    let n = t.len() as f64;
    let values = parallel::map_indexed(grid.count, |k| {
        let shape = BetaShape::at(grid.point(k), params);
        compensated_sum(t.iter().map(|&ti| shape.eval(ti))) / n
    });
    DensityGrid::from_raw(grid, values, false)
}

/// Bivariate length–direction density on `[0, L] × [0, π]`, stored row-major
/// with the length index outermost; bilinear interpolation, periodic in φ.
#[derive(Clone, Debug, PartialEq)]
pub struct BivariateGrid {
    pub r_grid: Grid1D,
    pub phi_grid: Grid1D,
    pub values: Vec<f64>,
}

impl BivariateGrid {
    #[inline]
    pub fn at(&self, i_r: usize, i_phi: usize) -> f64 {
        self.values[i_r * self.phi_grid.count + i_phi]
    }

    pub fn integral(&self) -> f64 {
        let rows: Vec<f64> = (0..self.r_grid.count)
            .map(|i| {
                trapezoid(
                    &self.values[i * self.phi_grid.count..(i + 1) * self.phi_grid.count],
                    self.phi_grid.step(),
                )
            })
            .collect();
        trapezoid(&rows, self.r_grid.step())
    }

    fn normalize(&mut self) -> Result<()> {
        let total = self.integral();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::ZeroDenominator("bivariate density normalisation"));
        }
        for v in self.values.iter_mut() {
            *v /= total;
        }
        Ok(())
    }

    pub fn eval(&self, r: f64, phi: f64) -> f64 {
        if r < self.r_grid.lower || r > self.r_grid.upper {
            return 0.0;
        }
        let period = self.phi_grid.upper - self.phi_grid.lower;
        let phi = self.phi_grid.lower + (phi - self.phi_grid.lower).rem_euclid(period);
        let (i, s) = self.r_grid.locate(r);
        let (j, t) = self.phi_grid.locate(phi);
        let v00 = self.at(i, j);
        let v01 = self.at(i, j + 1);
        let v10 = self.at(i + 1, j);
        let v11 = self.at(i + 1, j + 1);
        (1.0 - s) * ((1.0 - t) * v00 + t * v01) + s * ((1.0 - t) * v10 + t * v11)
    }

    /// Length marginal `∫ f(r, φ) dφ` on the length grid.
    pub fn marginal_r(&self) -> Vec<f64> {
        (0..self.r_grid.count)
            .map(|i| {
                trapezoid(
                    &self.values[i * self.phi_grid.count..(i + 1) * self.phi_grid.count],
                    self.phi_grid.step(),
                )
            })
            .collect()
    }

    /// CSV with header `r,phi,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,phi,value")?;
        for i in 0..self.r_grid.count {
            let r = self.r_grid.point(i);
            for j in 0..self.phi_grid.count {
                writeln!(w, "{},{},{}", r, self.phi_grid.point(j), self.at(i, j))?;
            }
        }
        Ok(())
    }
}

/// Product-kernel estimate `(1/n) Σ K_β(r; rᵢ) K_vM(φ; φᵢ)` from
/// `(length, direction)` pairs.
pub fn product_kde(
    samples: &[(f64, f64)],
    beta: BetaKdeParams,
    circ: CircularKdeParams,
    r_grid: Grid1D,
    phi_grid: Grid1D,
) -> Result<BivariateGrid> {
    if samples.is_empty() {
        return Err(Error::EmptySample("product kernel estimate"));
    }
    let lengths: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let t = scaled_lengths(&lengths, beta.upper)?;
    let n = samples.len();
    // kernel weights of every observation at every length grid point
    let kr: Vec<Vec<f64>> = parallel::map_indexed(r_grid.count, |a| {
        let shape = BetaShape::at(r_grid.point(a), beta);
        t.iter().map(|&ti| shape.eval(ti)).collect()
    });
    let kp: Vec<Vec<f64>> = parallel::map_indexed(phi_grid.count, |b| {
        let phi = phi_grid.point(b);
        samples
            .iter()
            .map(|s| vm_kernel(phi, s.1, circ.kappa))
            .collect()
    });
    let rows = parallel::map_indexed(r_grid.count, |a| {
        let wr = &kr[a];
        (0..phi_grid.count)
            .map(|b| compensated_sum(wr.iter().zip(&kp[b]).map(|(x, y)| x * y)) / n as f64)
            .collect::<Vec<f64>>()
    });
    let mut out = BivariateGrid {
        r_grid,
        phi_grid,
        values: rows.into_iter().flatten().collect(),
    };
    out.normalize()?;
    Ok(out)
}
