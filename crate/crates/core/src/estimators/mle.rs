//! Maximum likelihood fit of the inhomogeneous length model.
//!
//! Centers are grouped into `k` annuli of width `Δ = e_a/(2k)`. Within an
//! annulus the process is approximately rotation invariant, so each segment
//! is rotated until its center lies on the positive second axis and a
//! length–direction Palm density `f^{(j)}` is estimated per class. The
//! reference length density is `f₁(r) = C_j f^{(j)}(r, φ) e^{−b d(u)}`, which
//! ties the class constants `C_j` to `b` and leaves a single equation in `b`
//! for the likelihood score.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::geometry::{axial, Configuration, DiskWindow, Point2, Segment, Window};
use crate::kde::{product_kde, BetaKdeParams, BivariateGrid, CircularKdeParams};
use crate::models::DensityGrid;
use crate::numerics::{
    compensated_sum, rng_for, simpson, solve_scalar, uniform_segment, Grid1D, LengthSpec,
};
use crate::parallel;

#[derive(Clone, Debug, PartialEq)]
pub struct MleConfig {
    /// Number of center classes.
    pub classes: usize,
    /// Simpson panels over the longest chord of a class.
    pub panels: usize,
    pub mc_segments: usize,
    /// One-based classes averaged in the reference length estimate.
    pub f1_classes: Vec<usize>,
    pub phi_fixed: f64,
    /// Beta kernel bandwidth constant `c` in `h = c n^{-2/5}`.
    pub bandwidth_c: f64,
    /// Direction kernel concentration; `None` selects it per class by the
    /// plug-in rule, which oversmooths here because the rotated directions
    /// of a class are close to uniform even though the joint law is not.
    pub kappa: Option<f64>,
    pub grid_points: usize,
    pub b_bracket: (f64, f64),
    pub b_tol: f64,
    pub seed: u64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            classes: 6,
            panels: 100,
            mc_segments: 1_000_000,
            f1_classes: vec![1, 2, 3, 4],
            phi_fixed: 0.0,
            bandwidth_c: 0.1,
            kappa: Some(5.0),
            grid_points: Grid1D::DEFAULT_COUNT,
            b_bracket: (-20.0, 20.0),
            b_tol: 1e-9,
            seed: 0,
        }
    }
}

impl MleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("at least 2 classes are needed"));
        }
        if self.panels == 0 || self.panels % 2 != 0 {
            return Err(Error::invalid(format!(
                "Simpson panel count must be even and positive, got {}",
                self.panels
            )));
        }
        if self.mc_segments == 0 {
            return Err(Error::invalid("Monte Carlo sample size must be at least 1"));
        }
        if self.f1_classes.is_empty() || self.f1_classes.iter().any(|&j| j == 0 || j > self.classes)
        {
            return Err(Error::invalid(format!(
                "reference classes {:?} outside 1..={}",
                self.f1_classes, self.classes
            )));
        }
        if !(self.bandwidth_c > 0.0) || self.grid_points < 2 {
            return Err(Error::invalid(
                "bandwidth constant must be positive and grids need 2 points",
            ));
        }
        if !(self.b_bracket.0 < self.b_bracket.1) || !(self.b_tol > 0.0) {
            return Err(Error::invalid(
                "b bracket must be nonempty and tolerance positive",
            ));
        }
        Ok(())
    }

    fn class_width(&self, disk: &DiskWindow) -> f64 {
        disk.diameter / (2.0 * self.classes as f64)
    }
}

/// Segments of one center class, rotated into the reference frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSample {
    /// One-based class index.
    pub class: usize,
    /// Representative center distance `(j − ½)Δ`.
    pub mid: f64,
    /// Longest chord through the inner boundary, `2√((e_a/2)² − ((j−1)Δ)²)`.
    pub longest: f64,
    pub segments: Vec<Segment>,
}

impl ClassSample {
    pub fn marks(&self) -> Vec<(f64, f64)> {
        self.segments
            .iter()
            .map(|s| (s.length, s.direction))
            .collect()
    }
}

/// One-based class of a center at distance `norm`: `(j−1)Δ < norm ≤ jΔ`,
/// with the origin in class 1.
pub fn class_of(norm: f64, width: f64, classes: usize) -> usize {
    ((norm / width).ceil() as usize).clamp(1, classes)
}

/// Rotation taking the center of `u` onto the positive second axis.
fn to_reference_frame(u: &Segment) -> Segment {
    let c = u.center;
    if c.norm() == 0.0 {
        return *u;
    }
    u.rotate(FRAC_PI_2 - c.y.atan2(c.x))
}

pub fn mle_partition(x: &Configuration, disk: &DiskWindow, config: &MleConfig) -> Vec<ClassSample> {
    let width = config.class_width(disk);
    let mut out: Vec<ClassSample> = (1..=config.classes)
        .map(|j| {
            let inner = (j - 1) as f64 * width;
            ClassSample {
                class: j,
                mid: inner + 0.5 * width,
                longest: 2.0 * (disk.radius().powi(2) - inner * inner).max(0.0).sqrt(),
                segments: Vec::new(),
            }
        })
        .collect();
    for u in x.iter() {
        let j = class_of(u.center.norm(), width, config.classes);
        out[j - 1].segments.push(to_reference_frame(u));
    }
    out
}

/// Longest segment with center `y` and direction `phi` inside the disk.
pub fn max_length_at(y: Point2, phi: f64, disk: &DiskWindow) -> f64 {
    let along = (y.x * phi.cos() + y.y * phi.sin()).abs();
    let disc = along * along - y.norm_sq() + disk.radius().powi(2);
    if disc <= 0.0 {
        return 0.0;
    }
    (2.0 * (disc.sqrt() - along)).max(0.0)
}

/// `C_j(b) = 1 / ∫₀^{r_max} f^{(j)}(r, φ) e^{−b d(u)} dr` by composite Simpson
/// with step close to `l_j / m`.
pub fn mle_c_of_b(
    palm: &BivariateGrid,
    class: &ClassSample,
    b: f64,
    disk: &DiskWindow,
    config: &MleConfig,
) -> Result<f64> {
    let phi = config.phi_fixed;
    let y = Point2::new(0.0, class.mid);
    let r_max = max_length_at(y, phi, disk);
    if !(r_max > 0.0 && class.longest > 0.0) {
        return Err(Error::DegenerateClass {
            class: class.class,
            reason: "no admissible length at the class center",
        });
    }
    let half = (r_max * config.panels as f64 / (2.0 * class.longest))
        .ceil()
        .max(1.0) as usize;
    let integral = simpson(
        |r| palm.eval(r, phi) * (-b * Segment::new(y, r, phi).max_norm_distance(disk)).exp(),
        0.0,
        r_max,
        2 * half,
    )?;
    if !(integral > 0.0 && integral.is_finite()) {
        return Err(Error::DegenerateClass {
            class: class.class,
            reason: "normalising integral vanishes",
        });
    }
    Ok(1.0 / integral)
}

/// Per-class Monte Carlo sums over uniform segments contained in the disk:
/// `S_j = Σ f^{(j)}(r̄, φ̄)` and `T_j = Σ d(ū) f^{(j)}(r̄, φ̄)`.
#[derive(Clone, Debug, PartialEq)]
pub struct McSummary {
    pub drawn: usize,
    pub contained: usize,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

const MC_CHUNK: usize = 1 << 16;

pub fn mc_summary(palms: &[BivariateGrid], disk: &DiskWindow, config: &MleConfig) -> McSummary {
    let window = Window::Disk(*disk);
    let lengths = LengthSpec::Uniform(disk.diameter);
    let width = config.class_width(disk);
    let chunks = config.mc_segments.div_ceil(MC_CHUNK);
    // every chunk owns its own stream so the draw does not depend on the split
    let per_chunk = parallel::map_indexed(chunks, |c| {
        let mut rng = rng_for(config.seed, 1 + c as u64);
        let count = MC_CHUNK.min(config.mc_segments - c * MC_CHUNK);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let u = uniform_segment(&window, lengths, &mut rng);
            if !u.contained_in_disk(disk) {
                continue;
            }
            let j = class_of(u.center.norm(), width, config.classes);
            let v = to_reference_frame(&u);
            out.push((
                j,
                palms[j - 1].eval(v.length, v.direction),
                u.max_norm_distance(disk),
            ));
        }
        out
    });
    let mut s_terms = vec![Vec::new(); config.classes];
    let mut t_terms = vec![Vec::new(); config.classes];
    let mut contained = 0;
    for (j, f, d) in per_chunk.into_iter().flatten() {
        s_terms[j - 1].push(f);
        t_terms[j - 1].push(d * f);
        contained += 1;
    }
    McSummary {
        drawn: config.mc_segments,
        contained,
        s: s_terms.into_iter().map(compensated_sum).collect(),
        t: t_terms.into_iter().map(compensated_sum).collect(),
    }
}

fn c_all(
    palms: &[BivariateGrid],
    classes: &[ClassSample],
    b: f64,
    disk: &DiskWindow,
    config: &MleConfig,
) -> Result<Vec<f64>> {
    palms
        .iter()
        .zip(classes)
        .map(|(p, c)| mle_c_of_b(p, c, b, disk, config))
        .collect()
}

/// Root in `b` of `D/n = Σ C_j(b) T_j / Σ C_j(b) S_j`.
pub fn mle_solve_b(
    stats: (usize, f64),
    palms: &[BivariateGrid],
    classes: &[ClassSample],
    mc: &McSummary,
    disk: &DiskWindow,
    config: &MleConfig,
) -> Result<f64> {
    let (n, d_sum) = stats;
    if n == 0 {
        return Err(Error::EmptySample("length model score equation"));
    }
    let target = d_sum / n as f64;
    let resid = |b: f64| -> Result<f64> {
        let c = c_all(palms, classes, b, disk, config)?;
        let num = compensated_sum(c.iter().zip(&mc.t).map(|(c, t)| c * t));
        let den = compensated_sum(c.iter().zip(&mc.s).map(|(c, s)| c * s));
        if !(den > 0.0) {
            return Err(Error::ZeroDenominator("Monte Carlo score sum"));
        }
        Ok(target - num / den)
    };
    let (lo, hi) = config.b_bracket;
    let curve = || -> Vec<(f64, f64)> {
        (0..=40)
            .map(|i| {
                let b = lo + (hi - lo) * i as f64 / 40.0;
                (b, resid(b).unwrap_or(f64::NAN))
            })
            .collect()
    };
    let mut failure = None;
    let root = solve_scalar(
        |b| match resid(b) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        (lo, hi),
        config.b_tol,
    );
    match (failure, root) {
        (None, Ok(b)) => Ok(b),
        (Some(e), _) | (None, Err(e)) => Err(Error::NonConvergence {
            stage: "length model score equation",
            source: Box::new(e),
            residual_curve: curve(),
        }),
    }
}

/// `(τ̂_count, τ̂_dist)` from the count and distance equations.
pub fn mle_tau(
    stats: (usize, f64),
    c: &[f64],
    mc: &McSummary,
    disk: &DiskWindow,
) -> Result<(f64, f64)> {
    let (n, d_sum) = stats;
    let scale = 4.0 * mc.drawn as f64 / (PI * PI * disk.diameter.powi(3));
    let den_s = compensated_sum(c.iter().zip(&mc.s).map(|(c, s)| c * s));
    let den_t = compensated_sum(c.iter().zip(&mc.t).map(|(c, t)| c * t));
    if !(den_s > 0.0 && den_t > 0.0) {
        return Err(Error::ZeroDenominator("intensity equations"));
    }
    Ok((scale * n as f64 / den_s, scale * d_sum / den_t))
}

#[derive(Clone, Debug)]
pub struct MleResult {
    pub b: f64,
    pub tau: f64,
    pub tau_dist: f64,
    pub c: Vec<f64>,
    pub f1_hat: DensityGrid,
    pub palms: Vec<BivariateGrid>,
    pub class_counts: Vec<usize>,
    pub mc_contained: usize,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ (Error::NonConvergence { .. } | Error::DegenerateClass { .. }) => e,
        other => Error::InvalidParameter(format!("{name}: {other}")),
    })
}

/// Fits `(b, τ)` and the reference length density to segments observed in
/// `disk`.
pub fn mle_fit(x: &Configuration, disk: &DiskWindow, config: &MleConfig) -> Result<MleResult> {
    config.validate()?;
    if x.is_empty() {
        return Err(Error::EmptySample("length model fit"));
    }
    if !x.all_in_disk(disk) {
        return Err(Error::invalid("all segments must lie inside the disk"));
    }
    let classes = mle_partition(x, disk, config);
    let r_grid = Grid1D::new(0.0, disk.diameter, config.grid_points)?;
    let phi_grid = Grid1D::directions(config.grid_points);
    let mut palms = Vec::with_capacity(classes.len());
    for cls in &classes {
        if cls.segments.is_empty() {
            return Err(Error::DegenerateClass {
                class: cls.class,
                reason: "no observed segments",
            });
        }
        let marks = cls.marks();
        let bp = stage(
            "length bandwidth",
            BetaKdeParams::rule_of_thumb(marks.len(), disk.diameter, config.bandwidth_c),
        )?;
        let cp = match config.kappa {
            Some(k) => CircularKdeParams::new(k)?,
            None => {
                let dirs: Vec<f64> = marks.iter().map(|m| m.1).collect();
                CircularKdeParams::rule_of_thumb(&dirs)?
            }
        };
        palms.push(stage(
            "palm density",
            product_kde(&marks, bp, cp, r_grid, phi_grid),
        )?);
    }

    let mc = mc_summary(&palms, disk, config);
    let stats = (x.len(), x.distance_sum(disk));
    let b = mle_solve_b(stats, &palms, &classes, &mc, disk, config)?;
    let c = c_all(&palms, &classes, b, disk, config)?;
    let (tau, tau_dist) = mle_tau(stats, &c, &mc, disk)?;

    let mut acc = vec![0.0; r_grid.count];
    for &j in &config.f1_classes {
        let palm = &palms[j - 1];
        let y = Point2::new(0.0, classes[j - 1].mid);
        let f1 = stage(
            "reference length recovery",
            crate::models::reference_length_from_palm(
                |r, p| palm.eval(r, p),
                b,
                config.phi_fixed,
                y,
                disk,
                r_grid,
            ),
        )?;
        for (a, v) in acc.iter_mut().zip(&f1.values) {
            *a += v;
        }
    }
    let f1_hat = DensityGrid::from_raw(r_grid, acc, false)?;

    Ok(MleResult {
        b,
        tau,
        tau_dist,
        c,
        f1_hat,
        palms,
        class_counts: classes.iter().map(|c| c.segments.len()).collect(),
        mc_contained: mc.contained,
    })
}

/// Direction of `u` expressed in the reference frame of its center.
pub fn reference_direction(u: &Segment) -> f64 {
    axial(to_reference_frame(u).direction)
}
