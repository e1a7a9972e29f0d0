//! Exact Poisson samplers and the birth–death–move Metropolis–Hastings chain
//! for the directional Gibbs model.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Segment, Window};
use crate::models::{DirectionLaw, GibbsDirectionalModel, InhomogLengthModel};
use crate::numerics::{rng_for, uniform_point, uniform_segment, LengthSpec, Rng};

fn poisson_count(mean: f64, rng: &mut Rng) -> usize {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as usize)
        .unwrap_or(0)
}

/// Unit-rate reference process: `Poisson(|B|)` segments, centers uniform in
/// the window, directions uniform.
pub fn sample_poisson_reference(
    window: &Window,
    lengths: LengthSpec,
    rng: &mut Rng,
) -> Configuration {
    let n = poisson_count(window.area(), rng);
    (0..n)
        .map(|_| uniform_segment(window, lengths, rng))
        .collect()
}

/// Poisson segment process with intensity `rate · g(φ)` with respect to
/// `dy dφ` (so `rate · |B|` segments on average).
pub fn sample_poisson(
    window: &Window,
    rate: f64,
    direction: &DirectionLaw,
    lengths: LengthSpec,
    rng: &mut Rng,
) -> Configuration {
    let n = poisson_count(rate * window.area(), rng);
    (0..n)
        .map(|_| {
            let c = uniform_point(window, rng);
            let phi = direction.sample(rng);
            let r = lengths.sample(rng);
            Segment::new(c, r, phi)
        })
        .collect()
}

/// Settings of the birth–death–move chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub p_birth: f64,
    pub p_death: f64,
    pub p_move: f64,
    /// Standard deviation of the Gaussian center displacement; `None` uses
    /// half the segment length.
    pub move_sigma_center: Option<f64>,
    pub move_sigma_direction: f64,
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            burn_in: 50_000,
            p_birth: 1.0 / 3.0,
            p_death: 1.0 / 3.0,
            p_move: 1.0 / 3.0,
            move_sigma_center: None,
            move_sigma_direction: 0.2,
            trace_every: 1000,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let p = [self.p_birth, self.p_death, self.p_move];
        if p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "proposal probabilities must be nonnegative and sum to 1",
            ));
        }
        if self.p_birth == 0.0 || self.p_death == 0.0 {
            return Err(Error::invalid(
                "birth and death proposals are both required",
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.move_sigma_direction > 0.0) || self.move_sigma_center.is_some_and(|s| !(s > 0.0))
        {
            return Err(Error::invalid("move scales must be positive"));
        }
        Ok(())
    }
}

/// Hastings ratio of adding `u` to a configuration with `n` segments, where
/// `lambda = λ*(x, u)` and `volume` is the Lebesgue mass of the proposal
/// space.
pub fn birth_ratio(lambda: f64, volume: f64, n: usize, p_birth: f64, p_death: f64) -> f64 {
    lambda * volume * p_death / ((n + 1) as f64 * p_birth)
}

/// Hastings ratio of deleting `ξ` from a configuration with `n` segments,
/// where `lambda = λ*(x∖ξ, ξ)`.
pub fn death_ratio(lambda: f64, volume: f64, n: usize, p_birth: f64, p_death: f64) -> f64 {
    n as f64 * p_birth / (lambda * volume * p_death)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub proposed: usize,
    pub accepted: usize,
}

impl MoveStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TracePoint {
    pub iteration: usize,
    pub n: usize,
    pub intersections: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub birth: MoveStats,
    pub death: MoveStats,
    pub moves: MoveStats,
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRun {
    pub configuration: Configuration,
    pub diagnostics: ChainDiagnostics,
}

fn hits_excluding(x: &[Segment], u: &Segment, skip: usize) -> usize {
    x.iter()
        .enumerate()
        .filter(|(j, v)| *j != skip && u.intersects(v))
        .count()
}

/// Approximate draw from the directional Gibbs model by birth–death–move
/// Metropolis–Hastings, started from its `a = 0` Poisson reduction.
pub fn sample_gibbs(model: &GibbsDirectionalModel, chain: &ChainConfig) -> Result<ChainRun> {
    chain.validate()?;
    let mut rng = rng_for(chain.seed, 0);
    let window = Window::Rect(model.window);
    let volume = model.space_volume();
    let lengths = LengthSpec::Fixed(model.length);
    let a = model.a;
    let g = &model.direction;

    let mut x = sample_poisson(&window, model.tau, g, lengths, &mut rng).segments;
    let mut total = Configuration::new(x.clone()).total_intersections();

    let sigma_c = chain.move_sigma_center.unwrap_or(0.5 * model.length);
    let step_c = Normal::new(0.0, sigma_c).expect("positive scale");
    let step_d = Normal::new(0.0, chain.move_sigma_direction).expect("positive scale");

    let mut diag = ChainDiagnostics::default();
    let trace_every = chain.trace_every.max(1);
    let tilt = |k: usize| if a == 0.0 { 1.0 } else { (a * k as f64).exp() };

    for it in 0..chain.iterations {
        let kind: f64 = rng.random();
        if kind < chain.p_birth {
            diag.birth.proposed += 1;
            let u = uniform_segment(&window, lengths, &mut rng);
            let k = hits_excluding(&x, &u, usize::MAX);
            let lam = model.tau * g.pdf(u.direction) * tilt(k);
            let ratio = birth_ratio(lam, volume, x.len(), chain.p_birth, chain.p_death);
            if rng.random::<f64>() < ratio {
                x.push(u);
                total += k;
                diag.birth.accepted += 1;
            }
        } else if kind < chain.p_birth + chain.p_death {
            diag.death.proposed += 1;
            if !x.is_empty() {
                let i = rng.random_range(0..x.len());
                let k = hits_excluding(&x, &x[i], i);
                let lam = model.tau * g.pdf(x[i].direction) * tilt(k);
                let ratio = death_ratio(lam, volume, x.len(), chain.p_birth, chain.p_death);
                if rng.random::<f64>() < ratio {
                    x.swap_remove(i);
                    total -= k;
                    diag.death.accepted += 1;
                }
            }
        } else {
            diag.moves.proposed += 1;
            if !x.is_empty() {
                let i = rng.random_range(0..x.len());
                let old = x[i];
                let mut c = old.center;
                c.x += step_c.sample(&mut rng);
                c.y += step_c.sample(&mut rng);
                let phi = old.direction + step_d.sample(&mut rng);
                if window.contains(c) {
                    let new = Segment::new(c, old.length, phi);
                    let k_old = hits_excluding(&x, &old, i);
                    let k_new = hits_excluding(&x, &new, i);
                    let ratio =
                        g.pdf(new.direction) / g.pdf(old.direction) * tilt(k_new) / tilt(k_old);
                    if rng.random::<f64>() < ratio {
                        x[i] = new;
                        total = total + k_new - k_old;
                        diag.moves.accepted += 1;
                    }
                }
            }
        }
        if (it + 1) % trace_every == 0 {
            diag.trace.push(TracePoint {
                iteration: it + 1,
                n: x.len(),
                intersections: total,
            });
        }
    }

    Ok(ChainRun {
        configuration: Configuration::new(x),
        diagnostics: diag,
    })
}

/// Exact draw from the length model by thinning a homogeneous Poisson
/// process on `B × [0, e_a] × [0, π)` whose rate dominates the intensity.
pub fn sample_inhomog(model: &InhomogLengthModel, rng: &mut Rng) -> Result<Configuration> {
    let sup_f = model.lengths.sup().ok_or_else(|| {
        Error::invalid("reference length density is unbounded; thinning needs a finite supremum")
    })?;
    // d(u) ∈ [0, 1/2] for contained segments
    let bound = model.tau * sup_f * (0.5 * model.b.max(0.0)).exp();
    let window = Window::Disk(model.disk);
    let lengths = LengthSpec::Uniform(model.disk.diameter);
    let n = poisson_count(bound * model.space_volume(), rng);
    let mut out = Vec::new();
    for _ in 0..n {
        let u = uniform_segment(&window, lengths, rng);
        let accept: f64 = rng.random();
        let rho = model.intensity(&u);
        if rho > 0.0 && accept * bound < rho {
            out.push(u);
        }
    }
    Ok(Configuration::new(out))
}

/// Mean number of points of the length model, `∫ρ`, by plain Monte Carlo.
pub fn inhomog_total_mass(model: &InhomogLengthModel, samples: usize, rng: &mut Rng) -> f64 {
    let window = Window::Disk(model.disk);
    let lengths = LengthSpec::Uniform(model.disk.diameter);
    let sum = crate::numerics::compensated_sum(
        (0..samples).map(|_| model.intensity(&uniform_segment(&window, lengths, rng))),
    );
    model.space_volume() * sum / samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DiskWindow, Point2, RectWindow};
    use crate::models::{LengthLaw, ScaledBeta, VonMisesAxial};
    use std::f64::consts::PI;

    #[test]
    fn reference_process_counts() {
        let w = Window::Rect(RectWindow::unit_square());
        let mut rng = rng_for(21, 0);
        let reps = 10_000;
        let mut total = 0usize;
        let mut xs = Vec::new();
        let mut phis = Vec::new();
        for _ in 0..reps {
            let x = sample_poisson_reference(&w, LengthSpec::Fixed(0.1), &mut rng);
            total += x.len();
            for s in x.iter() {
                xs.push(s.center.x);
                phis.push(s.direction);
            }
        }
        let mean = total as f64 / reps as f64;
        assert!(
            (mean - 1.0).abs() < 3.0 * (1.0 / reps as f64).sqrt(),
            "mean {mean}"
        );
        // marks independent of centers
        let n = xs.len() as f64;
        let (mx, mp) = (xs.iter().sum::<f64>() / n, phis.iter().sum::<f64>() / n);
        let cov: f64 = xs
            .iter()
            .zip(&phis)
            .map(|(a, b)| (a - mx) * (b - mp))
            .sum::<f64>()
            / n;
        let sx = (xs.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sp = (phis.iter().map(|b| (b - mp).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sx * sp);
        assert!(corr.abs() < 3.0 / n.sqrt(), "corr {corr}");

        let flat = Window::Rect(RectWindow {
            origin: Point2::ORIGIN,
            width: 0.0,
            height: 1.0,
        });
        for _ in 0..100 {
            assert!(sample_poisson_reference(&flat, LengthSpec::Fixed(0.1), &mut rng).is_empty());
        }
    }

    #[test]
    fn ratios_are_reciprocal() {
        let third = 1.0 / 3.0;
        let b = birth_ratio(2.5, 3.0, 4, third, third);
        assert!((b - 2.5 * 3.0 / 5.0).abs() < 1e-15);
        let d = death_ratio(2.5, 3.0, 5, third, third);
        assert!((b * d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_built_birth_ratio() {
        // two parallel horizontal segments; the candidate crosses both
        let model = GibbsDirectionalModel::new(
            50.0,
            -0.7,
            0.2,
            DirectionLaw::VonMises(VonMisesAxial::new(0.0, 1.0).unwrap()),
            RectWindow::unit_square(),
        )
        .unwrap();
        let x = Configuration::new(vec![
            Segment::new(Point2::new(0.5, 0.45), 0.2, 0.0),
            Segment::new(Point2::new(0.5, 0.55), 0.2, 0.0),
        ]);
        let u = Segment::new(Point2::new(0.5, 0.5), 0.2, PI / 2.0);
        let lam = model.conditional_intensity(&x, &u);
        let expected = 50.0 * model.direction.pdf(PI / 2.0) * (-1.4f64).exp();
        assert!((lam - expected).abs() < 1e-12);
        let third = 1.0 / 3.0;
        let ratio = birth_ratio(lam, model.space_volume(), x.len(), third, third);
        assert!((ratio - expected * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn chain_reproducible_and_valid() {
        let model = GibbsDirectionalModel::new(
            200.0,
            -1.0,
            0.1,
            DirectionLaw::VonMises(VonMisesAxial::new(0.0, 1.0).unwrap()),
            RectWindow::unit_square(),
        )
        .unwrap();
        let chain = ChainConfig {
            iterations: 20_000,
            burn_in: 5_000,
            seed: 9,
            ..Default::default()
        };
        let a = sample_gibbs(&model, &chain).unwrap();
        let b = sample_gibbs(&model, &chain).unwrap();
        assert_eq!(a, b);
        let x = &a.configuration;
        assert!(x.iter().all(|s| model.window.contains(s.center)));
        let last = a.diagnostics.trace.last().unwrap();
        assert_eq!(last.n, x.len());
        assert_eq!(last.intersections, x.total_intersections());
        assert_eq!(a.diagnostics.trace.len(), 20);
        assert!(a.diagnostics.moves.rate() > 0.0);

        let bad = ChainConfig {
            burn_in: 30_000,
            ..chain.clone()
        };
        assert!(sample_gibbs(&model, &bad).is_err());
        let bad = ChainConfig {
            p_move: 0.5,
            ..chain
        };
        assert!(sample_gibbs(&model, &bad).is_err());
    }

    #[test]
    fn inhibition_reduces_intersections() {
        let run = |a: f64| {
            let model = GibbsDirectionalModel::new(
                1000.0,
                a,
                0.12,
                DirectionLaw::VonMises(VonMisesAxial::new(0.0, 1.0).unwrap()),
                RectWindow::unit_square(),
            )
            .unwrap();
            let mut n = 0.0;
            for s in 0..4 {
                let chain = ChainConfig {
                    seed: 100 + s,
                    ..Default::default()
                };
                n += sample_gibbs(&model, &chain)
                    .unwrap()
                    .configuration
                    .total_intersections() as f64;
            }
            n / 4.0
        };
        assert!(run(-3.0) < run(-0.5));
    }

    fn beta_model(tau: f64, b: f64) -> InhomogLengthModel {
        InhomogLengthModel::new(
            tau,
            b,
            DiskWindow::new(1.0).unwrap(),
            LengthLaw::Beta(ScaledBeta::new(2.0, 4.0, 1.0).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn inhomog_segments_inside_and_tilted() {
        let mut rng = rng_for(4, 0);
        let hi = sample_inhomog(&beta_model(3.0, 10.0), &mut rng).unwrap();
        let lo = sample_inhomog(&beta_model(4000.0, -10.0), &mut rng).unwrap();
        let disk = DiskWindow::new(1.0).unwrap();
        assert!(hi.all_in_disk(&disk) && lo.all_in_disk(&disk));
        let md = |x: &Configuration| x.distance_sum(&disk) / x.len() as f64;
        assert!(md(&hi) > md(&lo));
    }

    #[test]
    fn inhomog_uniform_is_pure_containment() {
        // b = 0 and uniform lengths: every proposal inside the disk is kept
        let m = InhomogLengthModel::new(
            20.0,
            0.0,
            DiskWindow::new(1.0).unwrap(),
            LengthLaw::Beta(ScaledBeta::new(1.0, 1.0, 1.0).unwrap()),
        )
        .unwrap();
        let mut rng = rng_for(8, 0);
        let mut kept = 0usize;
        let reps = 400;
        for _ in 0..reps {
            kept += sample_inhomog(&m, &mut rng).unwrap().len();
        }
        // expected count = τ · (fraction of uniform segments contained) · vol(Y)
        let mut rng2 = rng_for(8, 1);
        let mass = inhomog_total_mass(&m, 200_000, &mut rng2);
        let mean = kept as f64 / reps as f64;
        assert!(
            (mean - mass).abs() < 3.0 * (mass / reps as f64).sqrt() + 0.01 * mass,
            "{mean} vs {mass}"
        );
    }

    #[test]
    fn unbounded_length_density_rejected() {
        let m = InhomogLengthModel::new(
            10.0,
            0.0,
            DiskWindow::new(1.0).unwrap(),
            LengthLaw::Beta(ScaledBeta::new(0.5, 2.0, 1.0).unwrap()),
        )
        .unwrap();
        assert!(sample_inhomog(&m, &mut rng_for(0, 0)).is_err());
    }
}
