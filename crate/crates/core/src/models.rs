//! Model parameter bundles, reference densities and conditional intensities.
//!
//! Conditional intensities are expressed with respect to plain Lebesgue
//! measure on the segment space (`dy dφ` for the directional model,
//! `dy dr dφ` for the length model). The normalising constants of the
//! process densities are never needed.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::Rng as _;
use rand_distr::Distribution;
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::geometry::{axial, Configuration, DiskWindow, Point2, RectWindow, Segment, Window};
use crate::numerics::{
    bessel_i0e, compensated_sum, trapezoid, uniform_segment, Grid1D, LengthSpec, Rng,
};
use crate::parallel;

/// von Mises law on the axial circle `[0, π)`:
/// `g(φ) = exp(κ cos 2(φ−μ)) / (π I₀(κ))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VonMisesAxial {
    pub mu: f64,
    pub kappa: f64,
}

impl VonMisesAxial {
    pub fn new(mu: f64, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite() && mu.is_finite()) {
            return Err(Error::invalid(format!(
                "von Mises needs finite mu and kappa >= 0, got ({mu}, {kappa})"
            )));
        }
        Ok(Self { mu, kappa })
    }

    pub fn pdf(&self, phi: f64) -> f64 {
        let c = (2.0 * (phi - self.mu)).cos();
        (self.kappa * (c - 1.0)).exp() / (PI * bessel_i0e(self.kappa))
    }

    pub fn sup(&self) -> f64 {
        1.0 / (PI * bessel_i0e(self.kappa))
    }

    /// Best–Fisher rejection sampler on the doubled angle.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        if self.kappa < 1e-8 {
            return PI * rng.random::<f64>();
        }
        let k = self.kappa;
        let t = 1.0 + (1.0 + 4.0 * k * k).sqrt();
        let rho = (t - (2.0 * t).sqrt()) / (2.0 * k);
        let r = (1.0 + rho * rho) / (2.0 * rho);
        loop {
            let z = (PI * rng.random::<f64>()).cos();
            let f = (1.0 + r * z) / (r + z);
            let c = k * (r - f);
            let u2: f64 = rng.random();
            if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
                let theta = f.clamp(-1.0, 1.0).acos();
                let theta = if rng.random::<bool>() { theta } else { -theta };
                return axial(self.mu + 0.5 * theta);
            }
        }
    }
}

/// Beta law rescaled to `[0, upper]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledBeta {
    pub alpha: f64,
    pub beta: f64,
    pub upper: f64,
}

#[inline]
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

impl ScaledBeta {
    pub fn new(alpha: f64, beta: f64, upper: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && upper > 0.0)
            || !(alpha.is_finite() && beta.is_finite() && upper.is_finite())
        {
            return Err(Error::invalid(format!(
                "scaled beta needs positive finite parameters, got ({alpha}, {beta}, {upper})"
            )));
        }
        Ok(Self { alpha, beta, upper })
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if !(0.0..=self.upper).contains(&r) {
            return 0.0;
        }
        let t = r / self.upper;
        let log = xlogy(self.alpha - 1.0, t) + xlogy(self.beta - 1.0, 1.0 - t)
            - ln_beta(self.alpha, self.beta);
        log.exp() / self.upper
    }

    /// Supremum of the density, `None` when it is unbounded.
    pub fn sup(&self) -> Option<f64> {
        if self.alpha < 1.0 || self.beta < 1.0 {
            return None;
        }
        let s = self.alpha + self.beta - 2.0;
        if s <= 0.0 {
            return Some(1.0 / self.upper);
        }
        Some(self.pdf(self.upper * (self.alpha - 1.0) / s))
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let d = rand_distr::Beta::new(self.alpha, self.beta).expect("validated parameters");
        self.upper * d.sample(rng)
    }
}

/// A density tabulated on an equally spaced grid, linearly interpolated.
///
/// Periodic grids span one full period with the last point repeating the
/// first.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub periodic: bool,
}

impl DensityGrid {
    pub fn new(grid: Grid1D, values: Vec<f64>, periodic: bool) -> Result<Self> {
        if values.len() != grid.count {
            return Err(Error::invalid(format!(
                "grid has {} points but {} values",
                grid.count,
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "density values must be finite and nonnegative",
            ));
        }
        Ok(Self {
            grid,
            values,
            periodic,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Grid1D, periodic: bool, f: F) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect(), periodic)
    }

    /// Builds a density from raw values: negatives are clipped to 0 and the
    /// result is rescaled to unit trapezoid integral.
    pub fn from_raw(grid: Grid1D, mut values: Vec<f64>, periodic: bool) -> Result<Self> {
        for v in values.iter_mut() {
            if v.is_nan() || *v < 0.0 {
                *v = 0.0;
            }
        }
        Self::new(grid, values, periodic)?.normalized()
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.step())
    }

    pub fn normalized(mut self) -> Result<Self> {
        let total = self.integral();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::ZeroDenominator("density normalisation"));
        }
        for v in self.values.iter_mut() {
            *v /= total;
        }
        Ok(self)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let x = if self.periodic {
            g.lower + (x - g.lower).rem_euclid(g.upper - g.lower)
        } else if x < g.lower || x > g.upper {
            return 0.0;
        } else {
            x
        };
        let (i, t) = g.locate(x);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.points().zip(self.values.iter().copied())
    }

    /// CSV with header `x,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.points() {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, periodic: bool) -> Result<Self> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: "missing field".into(),
                })?
                .trim()
                .parse()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("{e}"),
                })
            };
            xs.push(parse(it.next())?);
            vs.push(parse(it.next())?);
        }
        if xs.len() < 2 {
            return Err(Error::EmptySample("density grid CSV"));
        }
        let grid = Grid1D::new(xs[0], xs[xs.len() - 1], xs.len())?;
        Self::new(grid, vs, periodic)
    }
}

/// Reference direction density of the directional model.
#[derive(Clone, Debug, PartialEq)]
pub enum DirectionLaw {
    VonMises(VonMisesAxial),
    Tabulated(DensityGrid),
}

impl DirectionLaw {
    pub fn uniform() -> Self {
        DirectionLaw::VonMises(VonMisesAxial {
            mu: 0.0,
            kappa: 0.0,
        })
    }

    pub fn pdf(&self, phi: f64) -> f64 {
        match self {
            DirectionLaw::VonMises(v) => v.pdf(phi),
            DirectionLaw::Tabulated(g) => g.eval(phi),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            DirectionLaw::VonMises(v) => v.sup(),
            DirectionLaw::Tabulated(g) => g.max(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            DirectionLaw::VonMises(v) => v.sample(rng),
            DirectionLaw::Tabulated(g) => {
                let sup = g.max();
                loop {
                    let phi = PI * rng.random::<f64>();
                    if rng.random::<f64>() * sup <= g.eval(phi) {
                        return phi;
                    }
                }
            }
        }
    }
}

/// Reference length density of the length model.
#[derive(Clone, Debug, PartialEq)]
pub enum LengthLaw {
    Beta(ScaledBeta),
    Tabulated(DensityGrid),
}

impl LengthLaw {
    pub fn pdf(&self, r: f64) -> f64 {
        match self {
            LengthLaw::Beta(b) => b.pdf(r),
            LengthLaw::Tabulated(g) => g.eval(r),
        }
    }

    pub fn sup(&self) -> Option<f64> {
        match self {
            LengthLaw::Beta(b) => b.sup(),
            LengthLaw::Tabulated(g) => Some(g.max()),
        }
    }

    /// Upper end of the support.
    pub fn upper(&self) -> f64 {
        match self {
            LengthLaw::Beta(b) => b.upper,
            LengthLaw::Tabulated(g) => g.grid.upper,
        }
    }
}

/// Gibbs segment process with fixed length, intersection inhibition and a
/// reference direction density; centers live in a rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsDirectionalModel {
    pub tau: f64,
    pub a: f64,
    pub length: f64,
    pub direction: DirectionLaw,
    pub window: RectWindow,
}

impl GibbsDirectionalModel {
    pub fn new(
        tau: f64,
        a: f64,
        length: f64,
        direction: DirectionLaw,
        window: RectWindow,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        if !(a <= 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!(
                "interaction parameter a must be finite and <= 0, got {a}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid(format!(
                "segment length must be positive, got {length}"
            )));
        }
        Ok(Self {
            tau,
            a,
            length,
            direction,
            window,
        })
    }

    /// λ*(x, u) = τ g(φ_u) exp(a N_x(u)).
    pub fn conditional_intensity(&self, x: &Configuration, u: &Segment) -> f64 {
        let base = self.tau * self.direction.pdf(u.direction);
        if self.a == 0.0 {
            return base;
        }
        base * (self.a * x.hit_count(u) as f64).exp()
    }

    /// Lebesgue measure of `window × [0, π)`.
    pub fn space_volume(&self) -> f64 {
        PI * self.window.area()
    }
}

/// Inhomogeneous Poisson segment process in a disk with a reference length
/// density and a distance tilt `exp(b d(u))`.
#[derive(Clone, Debug, PartialEq)]
pub struct InhomogLengthModel {
    pub tau: f64,
    pub b: f64,
    pub disk: DiskWindow,
    pub lengths: LengthLaw,
}

impl InhomogLengthModel {
    pub fn new(tau: f64, b: f64, disk: DiskWindow, lengths: LengthLaw) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        if !b.is_finite() {
            return Err(Error::invalid("b must be finite"));
        }
        if (lengths.upper() - disk.diameter).abs() > 1e-12 * disk.diameter {
            return Err(Error::invalid(
                "reference length density must be supported on [0, e_a]",
            ));
        }
        Ok(Self {
            tau,
            b,
            disk,
            lengths,
        })
    }

    /// Intensity function `τ f₁(r) exp(b d(u))` for contained segments, 0
    /// otherwise.
    pub fn intensity(&self, u: &Segment) -> f64 {
        if !u.contained_in_disk(&self.disk) {
            return 0.0;
        }
        self.tau * self.lengths.pdf(u.length) * (self.b * u.max_norm_distance(&self.disk)).exp()
    }

    /// λ*(x, u) = 1[x ∪ {u} ⊂ B] τ f₁(r_u) exp(b d(u)).
    pub fn conditional_intensity(&self, x: &Configuration, u: &Segment) -> f64 {
        if !x.all_in_disk(&self.disk) {
            return 0.0;
        }
        self.intensity(u)
    }

    /// Lebesgue measure of `B × [0, e_a] × [0, π)`, i.e. `π² e_a³ / 4`.
    pub fn space_volume(&self) -> f64 {
        PI * PI * self.disk.diameter.powi(3) / 4.0
    }
}

/// Sufficient statistics `(n, N, D)` of a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SufficientStats {
    pub n: usize,
    pub intersections: usize,
    pub distance_sum: f64,
}

impl SufficientStats {
    /// `disk` is needed for `D`; without it `D` is reported as 0.
    pub fn of(x: &Configuration, disk: Option<&DiskWindow>) -> Self {
        Self {
            n: x.len(),
            intersections: x.total_intersections(),
            distance_sum: disk.map_or(0.0, |d| x.distance_sum(d)),
        }
    }
}

/// Poisson expectation of `exp(a N_x(u))` for a Poisson process whose
/// intensity integrates to `intensity_mass` over the segments hitting `u`.
pub fn interaction_factor(a: f64, intensity_mass: f64) -> f64 {
    (a.exp_m1() * intensity_mass).exp()
}

/// `J(φ) = ∫₀^π |sin(φ−β)| f(β) dβ` for a direction density tabulated on
/// `[0, π]`. The interpolant is piecewise linear, so each panel is
/// integrated in closed form.
pub fn j_integral(phi: f64, f: &DensityGrid) -> f64 {
    let g = &f.grid;
    let phi = axial(phi);
    // ∫ sin(β−φ)(p + qβ) dβ = −(p + qβ) cos(β−φ) + q sin(β−φ)
    let prim =
        |p: f64, q: f64, beta: f64| -(p + q * beta) * (beta - phi).cos() + q * (beta - phi).sin();
    let mut parts = Vec::with_capacity(g.count);
    for k in 0..g.count - 1 {
        let (b0, b1) = (g.point(k), g.point(k + 1));
        let q = (f.values[k + 1] - f.values[k]) / (b1 - b0);
        let p = f.values[k] - q * b0;
        let mut piece = |lo: f64, hi: f64| {
            let sign = ((0.5 * (lo + hi)) - phi).sin().signum();
            parts.push(sign * (prim(p, q, hi) - prim(p, q, lo)));
        };
        if phi > b0 && phi < b1 {
            piece(b0, phi);
            piece(phi, b1);
        } else {
            piece(b0, b1);
        }
    }
    compensated_sum(parts)
}

/// Reference direction density recovered from the observed direction density
/// `f_x`: `g(φ) ∝ C f_X(φ) / (τ exp((e^a − 1) C r² J(φ)))`.
pub fn reference_direction_from_palm(
    f_x: &DensityGrid,
    c: f64,
    a: f64,
    tau: f64,
    length: f64,
) -> Result<DensityGrid> {
    if !(c > 0.0 && tau > 0.0 && a <= 0.0) {
        return Err(Error::invalid(format!(
            "need C > 0, tau > 0, a <= 0; got ({c}, {tau}, {a})"
        )));
    }
    let values = parallel::map_indexed(f_x.grid.count, |k| {
        let phi = f_x.grid.point(k);
        let beta = (a.exp_m1() * c * length * length * j_integral(phi, f_x)).exp();
        c * f_x.values[k] / (tau * beta)
    });
    DensityGrid::from_raw(f_x.grid, values, f_x.periodic)
}

/// Reference length density recovered from the Palm length–direction
/// density at center `y`: `f₁(r) ∝ f_X^{(y)}(r, φ) exp(−b d(u))` with
/// `u = (y, r, φ)`. Lengths whose segment leaves the disk get 0.
pub fn reference_length_from_palm<F>(
    palm: F,
    b: f64,
    phi: f64,
    y: Point2,
    disk: &DiskWindow,
    grid: Grid1D,
) -> Result<DensityGrid>
where
    F: Fn(f64, f64) -> f64,
{
    let values = grid
        .points()
        .map(|r| {
            let u = Segment::new(y, r, phi);
            if !u.contained_in_disk(disk) {
                return 0.0;
            }
            palm(r, phi) * (-b * u.max_norm_distance(disk)).exp()
        })
        .collect();
    DensityGrid::from_raw(grid, values, false)
}

/// Papangelou conditional intensity of a segment model with respect to
/// Lebesgue measure on its segment space.
pub trait ConditionalIntensity: Sync {
    /// Whether `x` has positive density at all.
    fn admits(&self, _x: &Configuration) -> bool {
        true
    }

    /// λ*(x, u) for an admissible `x`.
    fn intensity_admitted(&self, x: &Configuration, u: &Segment) -> f64;

    fn intensity(&self, x: &Configuration, u: &Segment) -> f64 {
        if self.admits(x) {
            self.intensity_admitted(x, u)
        } else {
            0.0
        }
    }

    /// Center window and length law spanning the segment space.
    fn segment_space(&self) -> (Window, LengthSpec);
}

impl ConditionalIntensity for GibbsDirectionalModel {
    fn intensity_admitted(&self, x: &Configuration, u: &Segment) -> f64 {
        self.conditional_intensity(x, u)
    }

    fn segment_space(&self) -> (Window, LengthSpec) {
        (Window::Rect(self.window), LengthSpec::Fixed(self.length))
    }
}

impl ConditionalIntensity for InhomogLengthModel {
    fn admits(&self, x: &Configuration) -> bool {
        x.all_in_disk(&self.disk)
    }

    fn intensity_admitted(&self, _x: &Configuration, u: &Segment) -> f64 {
        self.intensity(u)
    }

    fn segment_space(&self) -> (Window, LengthSpec) {
        (
            Window::Disk(self.disk),
            LengthSpec::Uniform(self.disk.diameter),
        )
    }
}

/// Test functions for the innovation diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    /// `q ≡ 1`
    Unit,
    /// `q(u, x) = N_x(u)`
    Hits,
}

impl TestFunction {
    pub fn eval(&self, u: &Segment, x: &Configuration) -> f64 {
        match self {
            TestFunction::Unit => 1.0,
            TestFunction::Hits => x.hit_count(u) as f64,
        }
    }
}

/// Empirical innovation `Σ_{u∈x} q(u, x∖u) − ∫ λ*(x, u) q(u, x) du`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnzResidual {
    pub value: f64,
    pub sum_term: f64,
    pub integral: f64,
    /// Monte Carlo standard error of `integral`.
    pub mc_se: f64,
    /// Monte Carlo estimate of `∫ λ* q² du`, the innovation variance of a
    /// Poisson model.
    pub variance_proxy: f64,
}

impl GnzResidual {
    /// Standardised residual using the Poisson innovation variance plus the
    /// Monte Carlo error.
    pub fn z_score(&self) -> f64 {
        let var = self.variance_proxy + self.mc_se * self.mc_se;
        if var > 0.0 {
            self.value / var.sqrt()
        } else {
            0.0
        }
    }
}

pub fn gnz_residual<M: ConditionalIntensity + ?Sized>(
    x: &Configuration,
    q: TestFunction,
    model: &M,
    j_mc: usize,
    rng: &mut Rng,
) -> Result<GnzResidual> {
    if j_mc == 0 {
        return Err(Error::invalid(
            "gnz_residual needs at least one Monte Carlo segment",
        ));
    }
    let sum_term = match q {
        TestFunction::Unit => x.len() as f64,
        TestFunction::Hits => 2.0 * x.total_intersections() as f64,
    };
    let (window, lengths) = model.segment_space();
    let volume = crate::numerics::segment_space_volume(&window, lengths);
    let tests: Vec<Segment> = (0..j_mc)
        .map(|_| uniform_segment(&window, lengths, rng))
        .collect();
    let admissible = model.admits(x);
    let terms = parallel::map_slice(&tests, |u| {
        if !admissible {
            return 0.0;
        }
        let lam = model.intensity_admitted(x, u);
        if lam == 0.0 {
            0.0
        } else {
            lam * q.eval(u, x)
        }
    });
    let n = j_mc as f64;
    let mean = compensated_sum(terms.iter().copied()) / n;
    let var = if j_mc > 1 {
        compensated_sum(terms.iter().map(|t| (t - mean).powi(2))) / (n - 1.0)
    } else {
        0.0
    };
    let integral = volume * mean;
    // ∫ λ* q² = ∫ (λ* q) q; q is recomputed only for the Hits case
    let second = match q {
        TestFunction::Unit => integral,
        TestFunction::Hits => {
            let sq = parallel::map_indexed(j_mc, |i| {
                if terms[i] == 0.0 {
                    0.0
                } else {
                    terms[i] * q.eval(&tests[i], x)
                }
            });
            volume * compensated_sum(sq) / n
        }
    };
    Ok(GnzResidual {
        value: sum_term - integral,
        sum_term,
        integral,
        mc_se: volume * (var / n).sqrt(),
        variance_proxy: second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rng_for, simpson};

    #[test]
    fn von_mises_values() {
        let uni = VonMisesAxial::new(0.0, 0.0).unwrap();
        for &p in &[0.0, 0.7, 2.0, 3.1] {
            assert!((uni.pdf(p) - 1.0 / PI).abs() < 1e-15);
        }
        let vm = VonMisesAxial::new(0.0, 1.0).unwrap();
        let expected = 1f64.exp() / (PI * 1.266_065_877_752_008_4);
        assert!((vm.pdf(0.0) - expected).abs() < 1e-14);
        assert!((vm.pdf(0.0) - 0.683_42).abs() < 1e-5);
        assert!((vm.pdf(0.3) - vm.pdf(0.3 + PI)).abs() < 1e-14);
        for &(mu, k) in &[(0.0, 1.0), (1.0, 5.0), (2.5, 0.3), (0.0, 40.0)] {
            let d = VonMisesAxial::new(mu, k).unwrap();
            let i = simpson(|p| d.pdf(p), 0.0, PI, 2000).unwrap();
            assert!((i - 1.0).abs() < 1e-8, "mu={mu} k={k} integral={i}");
        }
        assert!(VonMisesAxial::new(0.0, -1.0).is_err());
    }

    #[test]
    fn von_mises_sampler_matches_density() {
        let vm = VonMisesAxial::new(0.4, 1.0).unwrap();
        let mut rng = rng_for(1, 1);
        let n = 50_000;
        let mut bins = [0usize; 10];
        for _ in 0..n {
            let p = vm.sample(&mut rng);
            assert!((0.0..PI).contains(&p));
            bins[((p / PI * 10.0) as usize).min(9)] += 1;
        }
        let mut chi2 = 0.0;
        for (k, &o) in bins.iter().enumerate() {
            let lo = k as f64 * PI / 10.0;
            let p = simpson(|x| vm.pdf(x), lo, lo + PI / 10.0, 100).unwrap();
            let e = p * n as f64;
            chi2 += (o as f64 - e).powi(2) / e;
        }
        assert!(chi2 < 21.666, "chi2 {chi2}");
    }

    #[test]
    fn scaled_beta_values() {
        let u = ScaledBeta::new(1.0, 1.0, 2.0).unwrap();
        assert!((u.pdf(0.0) - 0.5).abs() < 1e-14 && (u.pdf(1.3) - 0.5).abs() < 1e-14);
        let b = ScaledBeta::new(2.0, 4.0, 1.0).unwrap();
        assert!((b.pdf(0.25) - 2.109375).abs() < 1e-12);
        assert!((b.sup().unwrap() - 2.109375).abs() < 1e-12);
        assert_eq!(b.pdf(-0.1), 0.0);
        assert_eq!(b.pdf(1.1), 0.0);
        for &(a, bb, l) in &[(2.0, 4.0, 1.0), (1.0, 1.0, 3.0), (3.5, 1.5, 0.5)] {
            let d = ScaledBeta::new(a, bb, l).unwrap();
            // r = L sin²θ removes the endpoint singularities of the derivative
            let i = simpson(
                |t: f64| d.pdf(l * t.sin().powi(2)) * 2.0 * l * t.sin() * t.cos(),
                0.0,
                PI / 2.0,
                4000,
            )
            .unwrap();
            assert!((i - 1.0).abs() < 1e-8, "{a},{bb},{l}: {i}");
        }
        assert!(ScaledBeta::new(0.5, 2.0, 1.0).unwrap().sup().is_none());
    }

    #[test]
    fn density_grid_basics() {
        let g = Grid1D::directions(100);
        let d = DensityGrid::from_fn(g, true, |_| 2.0)
            .unwrap()
            .normalized()
            .unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        assert!((d.eval(0.5) - 1.0 / PI).abs() < 1e-12);
        assert!((d.eval(-0.5) - d.eval(PI - 0.5)).abs() < 1e-12);
        let lin = DensityGrid::from_fn(Grid1D::new(0.0, 1.0, 11).unwrap(), false, |x| x).unwrap();
        assert!((lin.eval(0.35) - 0.35).abs() < 1e-12);
        assert_eq!(lin.eval(1.5), 0.0);
        assert!(DensityGrid::new(g, vec![-1.0; 100], true).is_err());
        let clipped = DensityGrid::from_raw(
            Grid1D::new(0.0, 1.0, 3).unwrap(),
            vec![-1.0, 1.0, 1.0],
            false,
        )
        .unwrap();
        assert_eq!(clipped.values[0], 0.0);
        assert!((clipped.integral() - 1.0).abs() < 1e-12);

        let mut buf = Vec::new();
        lin.write_csv(&mut buf).unwrap();
        let back = DensityGrid::read_csv(&buf[..], false).unwrap();
        assert_eq!(back.values, lin.values);
    }

    fn study_model(a: f64) -> GibbsDirectionalModel {
        GibbsDirectionalModel::new(
            1000.0,
            a,
            0.12,
            DirectionLaw::VonMises(VonMisesAxial::new(0.0, 1.0).unwrap()),
            RectWindow::unit_square(),
        )
        .unwrap()
    }

    #[test]
    fn gibbs_intensity_laws() {
        let m = study_model(-0.5);
        let u = Segment::new(Point2::new(0.5, 0.5), 0.12, 0.0);
        let empty = Configuration::default();
        let base = 1000.0 * m.direction.pdf(0.0);
        assert!((m.conditional_intensity(&empty, &u) - base).abs() < 1e-12);

        let crossing: Vec<Segment> = (0..3)
            .map(|i| Segment::new(Point2::new(0.47 + 0.03 * i as f64, 0.5), 0.12, PI / 2.0))
            .collect();
        let mut x = Configuration::default();
        let mut prev = m.conditional_intensity(&x, &u);
        for v in crossing {
            x.segments.push(v);
            let cur = m.conditional_intensity(&x, &u);
            assert!((cur / prev - (-0.5f64).exp()).abs() < 1e-12);
            prev = cur;
        }
        let free = study_model(0.0);
        assert!((free.conditional_intensity(&x, &u) - base).abs() < 1e-12);
    }

    #[test]
    fn inhomog_intensity_values() {
        let disk = DiskWindow::new(1.0).unwrap();
        let beta = ScaledBeta::new(2.0, 4.0, 1.0).unwrap();
        let m = InhomogLengthModel::new(900.0, 3.0, disk, LengthLaw::Beta(beta)).unwrap();
        let inside = Segment::new(Point2::ORIGIN, 0.5, 0.3);
        let expected = 900.0 * beta.pdf(0.5) * 0.75f64.exp();
        assert!(
            (m.conditional_intensity(&Configuration::default(), &inside) - expected).abs() < 1e-9
        );
        let outside = Segment::new(Point2::new(0.4, 0.0), 0.5, 0.0);
        assert_eq!(
            m.conditional_intensity(&Configuration::default(), &inside.rotate(0.0)),
            expected
        );
        assert_eq!(m.intensity(&outside), 0.0);
        let bad = Configuration::new(vec![outside]);
        assert_eq!(m.conditional_intensity(&bad, &inside), 0.0);
        let flat = InhomogLengthModel::new(900.0, 0.0, disk, LengthLaw::Beta(beta)).unwrap();
        assert!((flat.intensity(&inside) - 900.0 * beta.pdf(0.5)).abs() < 1e-9);
    }

    #[test]
    fn interaction_factor_limits() {
        assert_eq!(interaction_factor(0.0, 3.7), 1.0);
        assert!((interaction_factor(-800.0, 1.3) - (-1.3f64).exp()).abs() < 1e-15);
    }

    /// Trapezoid oracle with 10⁴ sub-intervals on the grid interpolant.
    fn j_oracle(phi: f64, f: &dyn Fn(f64) -> f64) -> f64 {
        let n = 10_000;
        let h = PI / n as f64;
        let vals: Vec<f64> = (0..=n)
            .map(|i| {
                let b = i as f64 * h;
                (phi - b).sin().abs() * f(b)
            })
            .collect();
        trapezoid(&vals, h)
    }

    #[test]
    fn j_integral_values() {
        let g = Grid1D::directions(100);
        let uni = DensityGrid::from_fn(g, true, |_| 1.0 / PI).unwrap();
        for &phi in &[0.0, 0.4, 1.5, 3.0] {
            assert!((j_integral(phi, &uni) - 2.0 / PI).abs() < 1e-12);
        }
        // narrow triangle around β₀ approximates a point mass
        let b0 = 1.0;
        let fine = Grid1D::directions(20_001);
        let spike = DensityGrid::from_fn(fine, true, |b| (1.0 - (b - b0).abs() / 1e-3).max(0.0))
            .unwrap()
            .normalized()
            .unwrap();
        for &phi in &[0.2, 2.0] {
            assert!((j_integral(phi, &spike) - (phi - b0).sin().abs()).abs() < 1e-5);
        }
        let vm = VonMisesAxial::new(0.0, 1.0).unwrap();
        let grid = DensityGrid::from_fn(g, true, |p| vm.pdf(p)).unwrap();
        for &phi in &[0.0, 0.3, 1.2, 2.9] {
            let interp = j_oracle(phi, &|b| grid.eval(b));
            assert!((j_integral(phi, &grid) - interp).abs() < 1e-6);
            let exact = j_oracle(phi, &|b| vm.pdf(b));
            assert!((j_integral(phi, &grid) - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn direction_recovery_identities() {
        let g = Grid1D::directions(100);
        let vm = VonMisesAxial::new(0.2, 2.0).unwrap();
        let f = DensityGrid::from_fn(g, true, |p| vm.pdf(p))
            .unwrap()
            .normalized()
            .unwrap();
        let same = reference_direction_from_palm(&f, 350.0, 0.0, 1000.0, 0.12).unwrap();
        for (a, b) in same.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let short = reference_direction_from_palm(&f, 350.0, -3.0, 1000.0, 1e-5).unwrap();
        for (a, b) in short.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-6);
        }
        let inhibited = reference_direction_from_palm(&f, 350.0, -0.5, 1000.0, 0.12).unwrap();
        assert!((inhibited.integral() - 1.0).abs() < 1e-9);
        // inhibition depletes observed directions across the mode, so the
        // reference density puts less weight on the mode than f_X does
        assert!(inhibited.eval(0.2) < f.eval(0.2));
        assert!(inhibited.eval(0.2 + PI / 2.0) > f.eval(0.2 + PI / 2.0));
    }

    #[test]
    fn length_recovery_identities() {
        let disk = DiskWindow::new(1.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 100).unwrap();
        let beta = ScaledBeta::new(2.0, 4.0, 1.0).unwrap();
        let y = Point2::new(0.0, 0.1);
        let palm = |r: f64, _phi: f64| beta.pdf(r);
        let f1 = reference_length_from_palm(palm, 0.0, 0.0, y, &disk, grid).unwrap();
        let rmax = 2.0 * (0.25f64 - 0.01).sqrt();
        let direct = DensityGrid::from_raw(
            grid,
            grid.points()
                .map(|r| if r <= rmax { beta.pdf(r) } else { 0.0 })
                .collect(),
            false,
        )
        .unwrap();
        for (a, b) in f1.values.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-12);
        }
        // a palm density tilted by exp(b d) is untilted again
        let b = 3.0;
        let tilted = |r: f64, phi: f64| {
            beta.pdf(r) * (b * Segment::new(y, r, phi).max_norm_distance(&disk)).exp()
        };
        let rec = reference_length_from_palm(tilted, b, 0.0, y, &disk, grid).unwrap();
        for (a, c) in rec.values.iter().zip(&direct.values) {
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn gnz_empty_configuration() {
        let m = study_model(-0.5);
        let mut rng = rng_for(3, 0);
        let r = gnz_residual(
            &Configuration::default(),
            TestFunction::Unit,
            &m,
            2000,
            &mut rng,
        )
        .unwrap();
        assert_eq!(r.sum_term, 0.0);
        // ∫ τ g(φ) dy dφ = τ |B| = 1000
        assert!((r.value + 1000.0).abs() < 5.0 * r.mc_se + 1e-9);
        assert!(r.value < 0.0);
    }

    #[test]
    fn gnz_hits_sum_term() {
        let m = study_model(-0.5);
        let mut rng = rng_for(5, 0);
        let x = crate::numerics::uniform_segments(
            60,
            &Window::Rect(m.window),
            LengthSpec::Fixed(0.12),
            &mut rng,
        );
        let r = gnz_residual(&x, TestFunction::Hits, &m, 10, &mut rng).unwrap();
        assert_eq!(r.sum_term, 2.0 * x.total_intersections() as f64);
        let direct: usize = x.iter().map(|u| x.hit_count(u)).sum();
        assert_eq!(r.sum_term, direct as f64);
    }

    #[test]
    fn sufficient_stats() {
        let disk = DiskWindow::new(1.0).unwrap();
        let x = Configuration::new(vec![
            Segment::new(Point2::ORIGIN, 0.5, 0.0),
            Segment::new(Point2::ORIGIN, 0.5, PI / 2.0),
        ]);
        let s = SufficientStats::of(&x, Some(&disk));
        assert_eq!((s.n, s.intersections), (2, 1));
        assert!((s.distance_sum - 0.5).abs() < 1e-15);
    }
}
