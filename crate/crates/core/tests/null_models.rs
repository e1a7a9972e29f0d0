//! Oracles with a known answer: exact Poisson data for both fitting
//! pipelines, and the inhomogeneous sampler's intensity on sub-annuli.

use segproc::estimators::{mle_fit, tf_fit, MleConfig, TfConfig};
use segproc::geometry::{DiskWindow, RectWindow, Segment};
use segproc::models::{DirectionLaw, InhomogLengthModel, LengthLaw, ScaledBeta, VonMisesAxial};
use segproc::numerics::{derive_seed, mean_sd, rng_for, uniform_segment, LengthSpec};
use segproc::samplers::{sample_inhomog, sample_poisson};
use segproc::{Configuration, Window};

fn length_model(tau: f64, b: f64, alpha: f64, beta: f64) -> InhomogLengthModel {
    let disk = DiskWindow::new(1.0).unwrap();
    InhomogLengthModel::new(
        tau,
        b,
        disk,
        LengthLaw::Beta(ScaledBeta::new(alpha, beta, 1.0).unwrap()),
    )
    .unwrap()
}

#[test]
fn tf_recovers_zero_interaction_on_poisson_data() {
    let window = RectWindow::unit_square();
    let law = DirectionLaw::VonMises(VonMisesAxial::new(0.0, 1.0).unwrap());
    let a: Vec<f64> = (0..50)
        .map(|i| {
            let mut rng = rng_for(derive_seed(2024, i), 0);
            let x = sample_poisson(
                &Window::Rect(window),
                1000.0,
                &law,
                LengthSpec::Fixed(0.12),
                &mut rng,
            );
            let cfg = TfConfig {
                seed: derive_seed(2024, 1000 + i),
                ..TfConfig::default()
            };
            tf_fit(&x, 0.12, &window, &cfg).unwrap().a
        })
        .collect();
    let (mean, sd) = mean_sd(&a);
    assert!(mean.abs() < 3.0 * sd, "mean {mean}, sd {sd}");
    assert!(a.iter().all(|&v| v <= 0.0));
}

fn fit_null(alpha: f64, beta: f64, reps: u64) -> Vec<segproc::estimators::MleResult> {
    let model = length_model(900.0, 0.0, alpha, beta);
    (0..reps)
        .map(|i| {
            let mut rng = rng_for(derive_seed(77, i), 0);
            let x = sample_inhomog(&model, &mut rng).unwrap();
            let cfg = MleConfig {
                seed: derive_seed(77, 1000 + i),
                ..MleConfig::default()
            };
            mle_fit(&x, &model.disk, &cfg).unwrap()
        })
        .collect()
}

#[test]
fn mle_recovers_zero_tilt_on_untilted_data() {
    let b: Vec<f64> = fit_null(2.0, 4.0, 30).iter().map(|f| f.b).collect();
    let (mean, sd) = mean_sd(&b);
    assert!(mean.abs() < 3.0 * sd, "mean {mean}, sd {sd}");
}

#[test]
#[ignore = "unattainable: f1_hat vanishes at the longest chord by construction, and the truncated class normalisation biases b"]
fn mle_uniform_lengths_recovered() {
    let fits = fit_null(1.0, 1.0, 60);
    let grid = fits[0].f1_hat.grid;
    let sup = grid
        .points()
        .enumerate()
        .map(|(i, _)| {
            let m = fits.iter().map(|f| f.f1_hat.values[i]).sum::<f64>() / fits.len() as f64;
            (m - 1.0).abs()
        })
        .fold(0.0, f64::max);
    assert!(sup < 0.15, "sup distance {sup}");
}

fn annulus(u: &Segment, edges: &[f64]) -> Option<usize> {
    let r = u.center.norm();
    edges.windows(2).position(|w| w[0] <= r && r < w[1])
}

#[test]
fn inhomogeneous_counts_match_intensity_on_annuli() {
    let model = length_model(900.0, 3.0, 2.0, 4.0);
    let edges = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let k = edges.len() - 1;

    // ∫ρ over each annulus by Monte Carlo over the segment space
    let space = Window::Disk(model.disk);
    let lengths = LengthSpec::Uniform(1.0);
    let m = 2_000_000;
    let mut rng = rng_for(5, 0);
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for _ in 0..m {
        let u = uniform_segment(&space, lengths, &mut rng);
        if let Some(j) = annulus(&u, &edges) {
            let v = model.intensity(&u);
            sum[j] += v;
            sq[j] += v * v;
        }
    }
    let vol = model.space_volume();
    let expected: Vec<f64> = sum.iter().map(|s| vol * s / m as f64).collect();
    let mc_se: Vec<f64> = (0..k)
        .map(|j| {
            let mean = sum[j] / m as f64;
            vol * ((sq[j] / m as f64 - mean * mean) / m as f64).sqrt()
        })
        .collect();

    let reps = 200;
    let counts: Vec<Vec<f64>> = (0..reps)
        .map(|i| {
            let mut rng = rng_for(derive_seed(6, i), 0);
            let x: Configuration = sample_inhomog(&model, &mut rng).unwrap();
            let mut c = vec![0.0; k];
            for u in x.iter() {
                if let Some(j) = annulus(u, &edges) {
                    c[j] += 1.0;
                }
            }
            c
        })
        .collect();
    for j in 0..k {
        let col: Vec<f64> = counts.iter().map(|c| c[j]).collect();
        let (mean, sd) = mean_sd(&col);
        let se = (sd * sd / reps as f64 + mc_se[j] * mc_se[j]).sqrt();
        assert!(
            (mean - expected[j]).abs() < 3.0 * se,
            "annulus {j}: {mean} vs {} (se {se})",
            expected[j]
        );
    }
}
