use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use segproc::geometry::Configuration;
use segproc::models::{SufficientStats, TestFunction};
use segproc_harness::config::{ModelSpec, RawConfig, StudySpec};
use segproc_harness::residuals::{parse_test_function, residual_check, write_residuals};
use segproc_harness::study::{self, error_chain};

#[derive(Parser)]
#[command(
    name = "segproc",
    version,
    about = "Simulate and fit planar segment processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key–value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one realization of the configured model.
    Simulate(Common),
    /// Takacs–Fiksel fit of the directional Gibbs model to a realization.
    FitTf {
        #[command(flatten)]
        common: Common,
        /// Realization CSV (`cx,cy,r,phi`).
        #[arg(long)]
        input: PathBuf,
    },
    /// Maximum likelihood fit of the inhomogeneous length model.
    FitMle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Replication study: simulate and fit repeatedly, summarise.
    Study {
        #[command(flatten)]
        common: Common,
        /// 20 replications regardless of the config.
        #[arg(long)]
        quick: bool,
        /// Overrides `replications` in the config.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Innovation residuals of the configured (true) model on a realization.
    Residuals {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// `unit`, `hits` or `both`.
        #[arg(long, default_value = "both")]
        test_function: String,
        /// Monte Carlo segments; defaults to `residual_segments` from the config.
        #[arg(long)]
        segments: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::FitTf { .. } => "fit-tf",
            Command::FitMle { .. } => "fit-mle",
            Command::Study { .. } => "study",
            Command::Residuals { .. } => "residuals",
        }
    }
}

fn load_spec(common: &Common, default_model: Option<&str>) -> Result<StudySpec> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    if let Some(m) = default_model {
        if common.config.is_none() {
            raw.set("model", m);
        }
    }
    if let Some(s) = common.seed {
        raw.set("seed", s);
    }
    StudySpec::from_raw(raw)
}

fn read_configuration(path: &Path) -> Result<Configuration> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Configuration::read_csv(BufReader::new(f))
        .with_context(|| format!("reading {}", path.display()))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(c) => {
            let spec = load_spec(c, None)?;
            prepare_out(&c.out)?;
            let sim =
                segproc::parallel::with_jobs(c.jobs, || study::simulate(&spec.model, spec.seed))?;
            study::write_csv(&c.out.join("realization.csv"), |w| {
                sim.configuration.write_csv(w)
            })?;
            if let Some(d) = &sim.diagnostics {
                study::write_trace(&c.out.join("trace.csv"), d)?;
            }
            let disk = match &spec.model {
                ModelSpec::Inhomog(m) => Some(m.disk()?),
                ModelSpec::Gibbs(_) => None,
            };
            let s = SufficientStats::of(&sim.configuration, disk.as_ref());
            study::write_csv(&c.out.join("stats.csv"), |w| {
                writeln!(w, "n,intersections,distance_sum")?;
                writeln!(w, "{},{},{}", s.n, s.intersections, s.distance_sum)
            })?;
        }
        Command::FitTf { common, input } => {
            let spec = load_spec(common, Some("gibbs-directional"))?;
            let ModelSpec::Gibbs(g) = &spec.model else {
                bail!("fit-tf needs model = gibbs-directional");
            };
            let x = read_configuration(input)?;
            prepare_out(&common.out)?;
            let fit =
                segproc::parallel::with_jobs(common.jobs, || study::fit_tf(&x, g, spec.seed))?;
            let (est, dens) = study::tf_outputs(&fit);
            study::write_estimates(&common.out.join("fit.csv"), &est)?;
            for (name, d) in &dens {
                study::write_csv(&common.out.join(format!("{name}.csv")), |w| d.write_csv(w))?;
            }
        }
        Command::FitMle { common, input } => {
            let spec = load_spec(common, Some("inhomog-length"))?;
            let ModelSpec::Inhomog(m) = &spec.model else {
                bail!("fit-mle needs model = inhomog-length");
            };
            let x = read_configuration(input)?;
            prepare_out(&common.out)?;
            let fit =
                segproc::parallel::with_jobs(common.jobs, || study::fit_mle(&x, m, spec.seed))?;
            let (est, dens) = study::mle_outputs(&fit)?;
            study::write_estimates(&common.out.join("fit.csv"), &est)?;
            for (name, d) in &dens {
                study::write_csv(&common.out.join(format!("{name}.csv")), |w| d.write_csv(w))?;
            }
            for (j, p) in fit.palms.iter().enumerate() {
                study::write_csv(&common.out.join(format!("palm_class_{}.csv", j + 1)), |w| {
                    p.write_csv(w)
                })?;
            }
        }
        Command::Study {
            common,
            quick,
            replications,
        } => {
            let mut spec = load_spec(common, None)?;
            if let Some(k) = replications {
                spec.replications = *k;
            }
            if *quick {
                spec.replications = 20;
            }
            let report = study::run_study(&spec, &common.out, common.jobs)?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "parameter,true,mean,sd,cv")?;
            for r in &report.summary {
                writeln!(
                    stdout,
                    "{},{},{},{},{}",
                    r.parameter, r.truth, r.mean, r.sd, r.cv
                )?;
            }
            if !report.failures.is_empty() {
                eprintln!(
                    "{} replication(s) failed; see failures.csv",
                    report.failures.len()
                );
            }
        }
        Command::Residuals {
            common,
            input,
            test_function,
            segments,
        } => {
            let spec = load_spec(common, None)?;
            let x = read_configuration(input)?;
            prepare_out(&common.out)?;
            let qs: Vec<TestFunction> = if test_function == "both" {
                vec![TestFunction::Unit, TestFunction::Hits]
            } else {
                vec![parse_test_function(test_function)?]
            };
            let j = segments.unwrap_or(spec.residual_segments);
            let rows = segproc::parallel::with_jobs(common.jobs, || {
                qs.iter()
                    .map(|&q| residual_check(&x, &spec.model, q, j, spec.seed).map(|r| (q, r)))
                    .collect::<Result<Vec<_>>>()
            })?;
            write_residuals(&common.out.join("residuals.csv"), &rows)?;
        }
    }
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(se) = cause.downcast_ref::<segproc::Error>() {
            return match se {
                segproc::Error::InvalidParameter(_) => "invalid_parameter",
                segproc::Error::EmptySample(_) => "empty_sample",
                segproc::Error::OutsideSupport { .. } => "outside_support",
                segproc::Error::Bracket { .. } => "bracket",
                segproc::Error::NonConvergence { .. } => "non_convergence",
                segproc::Error::DegenerateClass { .. } => "degenerate_class",
                segproc::Error::ZeroDenominator(_) => "zero_denominator",
                segproc::Error::Parse { .. } => "parse",
                segproc::Error::Io(_) => "io",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "error"
}

fn residual_curve(e: &anyhow::Error) -> Option<&[(f64, f64)]> {
    e.chain()
        .find_map(|c| match c.downcast_ref::<segproc::Error>() {
            Some(segproc::Error::NonConvergence { residual_curve, .. }) => {
                Some(residual_curve.as_slice())
            }
            _ => None,
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut report = serde_json::json!({
                "status": "error",
                "command": cli.command.name(),
                "kind": error_kind(&e),
                "message": error_chain(e.as_ref()),
            });
            if let Some(curve) = residual_curve(&e) {
                report["residual_curve"] = serde_json::json!(curve);
            }
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
