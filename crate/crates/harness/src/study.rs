//! Simulate–fit pipelines and replication studies.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use segproc::estimators::{mle_fit, tf_fit, MleConfig, MleResult, TfConfig, TfResult};
use segproc::geometry::Configuration;
use segproc::models::DensityGrid;
use segproc::numerics::{derive_seed, mean_sd, quantile_type7, rng_for, Grid1D};
use segproc::parallel;
use segproc::samplers::{sample_gibbs, sample_inhomog, ChainConfig, ChainDiagnostics};
use segproc::Error;

use crate::config::{GibbsSpec, InhomogSpec, ModelSpec, StudySpec};

/// Seed tags of the independent streams inside one replication.
const TAG_SIMULATE: u64 = 1;
const TAG_FIT: u64 = 2;

pub fn replication_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}

pub struct Simulated {
    pub configuration: Configuration,
    pub diagnostics: Option<ChainDiagnostics>,
}

pub fn simulate(model: &ModelSpec, seed: u64) -> Result<Simulated> {
    let seed = derive_seed(seed, TAG_SIMULATE);
    match model {
        ModelSpec::Gibbs(g) => {
            let run = sample_gibbs(
                &g.model()?,
                &ChainConfig {
                    seed,
                    ..g.chain.clone()
                },
            )?;
            Ok(Simulated {
                configuration: run.configuration,
                diagnostics: Some(run.diagnostics),
            })
        }
        ModelSpec::Inhomog(m) => {
            let mut rng = rng_for(seed, 0);
            let configuration = sample_inhomog(&m.model()?, &mut rng)?;
            Ok(Simulated {
                configuration,
                diagnostics: None,
            })
        }
    }
}

pub fn fit_tf(x: &Configuration, g: &GibbsSpec, seed: u64) -> segproc::Result<TfResult> {
    tf_fit(
        x,
        g.length,
        &g.window,
        &TfConfig {
            seed: derive_seed(seed, TAG_FIT),
            ..g.tf.clone()
        },
    )
}

pub fn fit_mle(x: &Configuration, m: &InhomogSpec, seed: u64) -> segproc::Result<MleResult> {
    let disk = segproc::geometry::DiskWindow::new(m.diameter)?;
    mle_fit(
        x,
        &disk,
        &MleConfig {
            seed: derive_seed(seed, TAG_FIT),
            ..m.mle.clone()
        },
    )
}

/// Scalar estimates of one fit, in a fixed column order.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimates {
    pub names: Vec<&'static str>,
    pub values: Vec<f64>,
}

/// Estimated densities of one fit, by name.
pub type Densities = Vec<(&'static str, DensityGrid)>;

pub fn tf_outputs(fit: &TfResult) -> (Estimates, Densities) {
    let est = Estimates {
        names: vec![
            "a",
            "tau",
            "c",
            "kappa",
            "at_boundary",
            "residual_hits",
            "residual_unit",
        ],
        values: vec![
            fit.a,
            fit.tau,
            fit.c,
            fit.kappa,
            if fit.at_boundary { 1.0 } else { 0.0 },
            fit.residual_hits,
            fit.residual_unit,
        ],
    };
    (
        est,
        vec![
            ("f_x_hat", fit.f_x_hat.clone()),
            ("g_hat", fit.g_hat.clone()),
        ],
    )
}

pub const PALM_NAMES: [&str; 12] = [
    "palm_length_class_1",
    "palm_length_class_2",
    "palm_length_class_3",
    "palm_length_class_4",
    "palm_length_class_5",
    "palm_length_class_6",
    "palm_length_class_7",
    "palm_length_class_8",
    "palm_length_class_9",
    "palm_length_class_10",
    "palm_length_class_11",
    "palm_length_class_12",
];

pub fn mle_outputs(fit: &MleResult) -> Result<(Estimates, Densities)> {
    let mut names = vec!["b", "tau", "tau_dist", "mc_contained"];
    let mut values = vec![fit.b, fit.tau, fit.tau_dist, fit.mc_contained as f64];
    const C_NAMES: [&str; 12] = [
        "c_1", "c_2", "c_3", "c_4", "c_5", "c_6", "c_7", "c_8", "c_9", "c_10", "c_11", "c_12",
    ];
    const N_NAMES: [&str; 12] = [
        "n_1", "n_2", "n_3", "n_4", "n_5", "n_6", "n_7", "n_8", "n_9", "n_10", "n_11", "n_12",
    ];
    for (j, c) in fit.c.iter().enumerate().take(12) {
        names.push(C_NAMES[j]);
        values.push(*c);
    }
    for (j, n) in fit.class_counts.iter().enumerate().take(12) {
        names.push(N_NAMES[j]);
        values.push(*n as f64);
    }
    let mut dens = vec![("f1_hat", fit.f1_hat.clone())];
    for (j, p) in fit.palms.iter().enumerate().take(12) {
        dens.push((
            PALM_NAMES[j],
            DensityGrid::from_raw(p.r_grid, p.marginal_r(), false)?,
        ));
    }
    Ok((Estimates { names, values }, dens))
}

/// True value of each summarised parameter.
pub fn summary_parameters(model: &ModelSpec) -> Vec<(&'static str, f64)> {
    match model {
        ModelSpec::Gibbs(g) => vec![("a", g.a), ("tau", g.tau)],
        ModelSpec::Inhomog(m) => vec![("b", m.b), ("tau", m.tau), ("tau_dist", m.tau)],
    }
}

/// True reference density of an envelope, where known.
pub fn true_density(model: &ModelSpec, name: &str) -> Result<Option<Box<dyn Fn(f64) -> f64>>> {
    Ok(match (model, name) {
        (ModelSpec::Gibbs(g), "g_hat") => {
            let vm = segproc::models::VonMisesAxial::new(g.mu, g.kappa)?;
            Some(Box::new(move |p| vm.pdf(p)))
        }
        (ModelSpec::Inhomog(m), "f1_hat") => {
            let b = m.lengths()?;
            Some(Box::new(move |r| b.pdf(r)))
        }
        _ => None,
    })
}

pub fn write_csv<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

pub fn write_estimates(path: &Path, est: &Estimates) -> Result<()> {
    write_csv(path, |w| {
        writeln!(w, "parameter,value")?;
        for (n, v) in est.names.iter().zip(&est.values) {
            writeln!(w, "{n},{v}")?;
        }
        Ok(())
    })
}

pub fn write_residual_curve(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    write_csv(path, |w| {
        writeln!(w, "parameter,residual")?;
        for (x, r) in curve {
            writeln!(w, "{x},{r}")?;
        }
        Ok(())
    })
}

pub fn write_trace(path: &Path, diag: &ChainDiagnostics) -> Result<()> {
    write_csv(path, |w| {
        writeln!(w, "iteration,n,intersections")?;
        for t in &diag.trace {
            writeln!(w, "{},{},{}", t.iteration, t.n, t.intersections)?;
        }
        Ok(())
    })
}

#[derive(Clone, Debug)]
pub struct ReplicationOutput {
    pub estimates: Estimates,
    pub densities: Densities,
}

/// Outcome of one replication; failures keep the full error text.
pub type ReplicationResult = std::result::Result<ReplicationOutput, String>;

fn run_replication(spec: &StudySpec, index: usize, dir: &Path) -> Result<ReplicationResult> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let seed = replication_seed(spec.seed, index);
    let sim = simulate(&spec.model, seed)?;
    write_csv(&dir.join("realization.csv"), |w| {
        sim.configuration.write_csv(w)
    })?;
    if let Some(d) = &sim.diagnostics {
        write_trace(&dir.join("trace.csv"), d)?;
    }
    let fitted = match &spec.model {
        ModelSpec::Gibbs(g) => fit_tf(&sim.configuration, g, seed).map(|f| tf_outputs(&f)),
        ModelSpec::Inhomog(m) => fit_mle(&sim.configuration, m, seed)
            .map(|f| mle_outputs(&f))
            .and_then(|r| r.map_err(|e| Error::InvalidParameter(e.to_string()))),
    };
    match fitted {
        Ok((estimates, densities)) => {
            write_estimates(&dir.join("fit.csv"), &estimates)?;
            for (name, d) in &densities {
                write_csv(&dir.join(format!("{name}.csv")), |w| d.write_csv(w))?;
            }
            Ok(Ok(ReplicationOutput {
                estimates,
                densities,
            }))
        }
        Err(e) => {
            if let Error::NonConvergence { residual_curve, .. } = &e {
                write_residual_curve(&dir.join("residual_curve.csv"), residual_curve)?;
            }
            let msg = error_chain(&e);
            write_csv(&dir.join("error.txt"), |w| writeln!(w, "{msg}"))?;
            Ok(Err(msg))
        }
    }
}

pub fn error_chain(e: &(dyn std::error::Error + 'static)) -> String {
    let mut msg = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        let t = s.to_string();
        if !msg.contains(&t) {
            msg.push_str(": ");
            msg.push_str(&t);
        }
        src = s.source();
    }
    msg
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub parameter: &'static str,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeTable {
    pub name: &'static str,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

impl EnvelopeTable {
    /// Grid points where `lower ≤ truth ≤ upper`.
    pub fn coverage(&self) -> Option<usize> {
        let t = self.truth.as_ref()?;
        Some(
            (0..t.len())
                .filter(|&i| self.lower[i] <= t[i] && t[i] <= self.upper[i])
                .count(),
        )
    }
}

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub out_dir: PathBuf,
    pub summary: Vec<SummaryRow>,
    pub envelopes: Vec<EnvelopeTable>,
    /// Successful replications as `(index, estimates)`.
    pub estimates: Vec<(usize, Estimates)>,
    pub failures: Vec<(usize, String)>,
}

impl StudyReport {
    pub fn row(&self, parameter: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.parameter == parameter)
    }

    pub fn envelope(&self, name: &str) -> Option<&EnvelopeTable> {
        self.envelopes.iter().find(|e| e.name == name)
    }
}

/// Summary of one parameter column; the sd uses the `n − 1` divisor.
pub fn summarise(parameter: &'static str, truth: f64, values: &[f64]) -> SummaryRow {
    let (mean, sd) = mean_sd(values);
    let cv = if mean != 0.0 {
        sd / mean.abs()
    } else {
        f64::NAN
    };
    SummaryRow {
        parameter,
        truth,
        mean,
        sd,
        cv,
    }
}

/// Pointwise mean and type-7 5% / 95% quantiles.
pub fn envelope(
    name: &'static str,
    grids: &[&DensityGrid],
    truth: Option<&dyn Fn(f64) -> f64>,
) -> EnvelopeTable {
    let grid: Grid1D = grids[0].grid;
    let x: Vec<f64> = grid.points().collect();
    let mut mean = Vec::with_capacity(x.len());
    let mut lower = Vec::with_capacity(x.len());
    let mut upper = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut col: Vec<f64> = grids.iter().map(|g| g.values[i]).collect();
        mean.push(mean_sd(&col).0);
        col.sort_by(f64::total_cmp);
        lower.push(quantile_type7(&col, 0.05));
        upper.push(quantile_type7(&col, 0.95));
    }
    EnvelopeTable {
        name,
        truth: truth.map(|f| x.iter().map(|&p| f(p)).collect()),
        x,
        mean,
        lower,
        upper,
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(path, |w| {
        writeln!(w, "parameter,true,mean,sd,cv")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.parameter, r.truth, r.mean, r.sd, r.cv
            )?;
        }
        Ok(())
    })
}

pub fn write_envelope(path: &Path, e: &EnvelopeTable) -> Result<()> {
    write_csv(path, |w| {
        match &e.truth {
            Some(_) => writeln!(w, "x,mean,lower,upper,true")?,
            None => writeln!(w, "x,mean,lower,upper")?,
        }
        for i in 0..e.x.len() {
            write!(w, "{},{},{},{}", e.x[i], e.mean[i], e.lower[i], e.upper[i])?;
            if let Some(t) = &e.truth {
                write!(w, ",{}", t[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Runs `spec.replications` independent simulate–fit pipelines on up to
/// `jobs` threads and writes per-replication files, `estimates.csv`,
/// `summary.csv`, `failures.csv` and `envelope_<name>.csv` under `out`.
pub fn run_study(spec: &StudySpec, out: &Path, jobs: usize) -> Result<StudyReport> {
    spec.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let results: Vec<Result<ReplicationResult>> = parallel::with_jobs(jobs, || {
        parallel::map_indexed(spec.replications, |i| {
            run_replication(spec, i, &out.join(format!("replication_{i}")))
        })
    });

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r.with_context(|| format!("replication {i}"))? {
            Ok(o) => ok.push((i, o)),
            Err(msg) => failures.push((i, msg)),
        }
    }
    write_csv(&out.join("failures.csv"), |w| {
        writeln!(w, "replication,error")?;
        for (i, m) in &failures {
            writeln!(w, "{i},\"{}\"", m.replace('"', "'"))?;
        }
        Ok(())
    })?;
    if failures.len() * 10 > spec.replications {
        bail!(
            "{} of {} replications failed (more than 10%); first failure: replication {}: {}",
            failures.len(),
            spec.replications,
            failures[0].0,
            failures[0].1
        );
    }
    if ok.is_empty() {
        bail!("no successful replications");
    }

    let names = ok[0].1.estimates.names.clone();
    write_csv(&out.join("estimates.csv"), |w| {
        writeln!(w, "replication,{}", names.join(","))?;
        for (i, o) in &ok {
            let vals: Vec<String> = o.estimates.values.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{}", vals.join(","))?;
        }
        Ok(())
    })?;

    let summary: Vec<SummaryRow> = summary_parameters(&spec.model)
        .into_iter()
        .map(|(p, truth)| {
            let k = names
                .iter()
                .position(|n| *n == p)
                .expect("summary parameter is estimated");
            let col: Vec<f64> = ok.iter().map(|(_, o)| o.estimates.values[k]).collect();
            summarise(p, truth, &col)
        })
        .collect();
    write_summary(&out.join("summary.csv"), &summary)?;

    let mut envelopes = Vec::new();
    for (k, (name, _)) in ok[0].1.densities.iter().enumerate() {
        let grids: Vec<&DensityGrid> = ok.iter().map(|(_, o)| &o.densities[k].1).collect();
        let truth = true_density(&spec.model, name)?;
        let env = envelope(name, &grids, truth.as_deref());
        write_envelope(&out.join(format!("envelope_{name}.csv")), &env)?;
        envelopes.push(env);
    }

    Ok(StudyReport {
        out_dir: out.to_path_buf(),
        summary,
        envelopes,
        estimates: ok.into_iter().map(|(i, o)| (i, o.estimates)).collect(),
        failures,
    })
}
