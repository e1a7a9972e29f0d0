//! Flat `key = value` study configuration.
//!
//! ```text
//! # weak inhibition
//! model = gibbs-directional
//! replications = 100
//! tau = 1000
//! a = -0.5
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.
//!
//! Keys for `model = gibbs-directional`: `tau a length kappa mu window_x
//! window_y window_width window_height iterations burn_in move_sigma_direction
//! trace_every test_segments a_lower a_upper kde_kappa grid_points`.
//!
//! Keys for `model = inhomog-length`: `tau b alpha beta diameter mc_segments
//! classes panels f1_classes phi_fixed bandwidth_c kde_kappa b_lower b_upper
//! grid_points`.
//!
//! Common keys: `model replications seed residual_segments`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use segproc::estimators::{MleConfig, TfConfig};
use segproc::geometry::{DiskWindow, Point2, RectWindow};
use segproc::models::{
    DirectionLaw, GibbsDirectionalModel, InhomogLengthModel, LengthLaw, ScaledBeta, VonMisesAxial,
};
use segproc::samplers::ChainConfig;

/// Raw entries in file order, with their line numbers.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| {
                anyhow!("line {line_no}: expected `key = value`, got `{content}`")
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                bail!("line {line_no}: empty key");
            }
            if let Some((_, prev)) = entries.insert(k.clone(), (v, line_no)) {
                bail!("line {line_no}: key `{k}` already set on line {prev}");
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("line {line}: bad value `{v}` for `{key}`: {e}")),
        }
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn finish(self) -> Result<()> {
        if let Some((k, (_, line))) = self.entries.into_iter().next() {
            bail!("line {line}: unknown key `{k}`");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    GibbsDirectional,
    InhomogLength,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gibbs-directional" => Ok(Self::GibbsDirectional),
            "inhomog-length" => Ok(Self::InhomogLength),
            other => Err(format!(
                "unknown model `{other}` (expected gibbs-directional or inhomog-length)"
            )),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GibbsDirectional => "gibbs-directional",
            Self::InhomogLength => "inhomog-length",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsSpec {
    pub tau: f64,
    pub a: f64,
    pub length: f64,
    pub kappa: f64,
    pub mu: f64,
    pub window: RectWindow,
    /// Seed field is ignored; each replication derives its own.
    pub chain: ChainConfig,
    pub tf: TfConfig,
}

impl GibbsSpec {
    pub fn model(&self) -> Result<GibbsDirectionalModel> {
        let law = DirectionLaw::VonMises(VonMisesAxial::new(self.mu, self.kappa)?);
        Ok(GibbsDirectionalModel::new(
            self.tau,
            self.a,
            self.length,
            law,
            self.window,
        )?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InhomogSpec {
    pub tau: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub diameter: f64,
    pub mle: MleConfig,
}

impl InhomogSpec {
    pub fn disk(&self) -> Result<DiskWindow> {
        Ok(DiskWindow::new(self.diameter)?)
    }

    pub fn lengths(&self) -> Result<ScaledBeta> {
        Ok(ScaledBeta::new(self.alpha, self.beta, self.diameter)?)
    }

    pub fn model(&self) -> Result<InhomogLengthModel> {
        Ok(InhomogLengthModel::new(
            self.tau,
            self.b,
            self.disk()?,
            LengthLaw::Beta(self.lengths()?),
        )?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Gibbs(GibbsSpec),
    Inhomog(InhomogSpec),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Gibbs(_) => ModelKind::GibbsDirectional,
            Self::Inhomog(_) => ModelKind::InhomogLength,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudySpec {
    pub model: ModelSpec,
    pub replications: usize,
    pub seed: u64,
    /// Monte Carlo segments for innovation diagnostics.
    pub residual_segments: usize,
}

fn parse_list(v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| anyhow!("bad class list `{v}`: {e}"))
        })
        .collect()
}

impl StudySpec {
    pub fn from_raw(mut raw: RawConfig) -> Result<Self> {
        let kind: ModelKind = raw.take_or("model", ModelKind::GibbsDirectional)?;
        let model = match kind {
            ModelKind::GibbsDirectional => {
                let dc = ChainConfig::default();
                let dt = TfConfig::default();
                let origin =
                    Point2::new(raw.take_or("window_x", 0.0)?, raw.take_or("window_y", 0.0)?);
                let window = RectWindow::new(
                    origin,
                    raw.take_or("window_width", 1.0)?,
                    raw.take_or("window_height", 1.0)?,
                )?;
                ModelSpec::Gibbs(GibbsSpec {
                    tau: raw.take_or("tau", 1000.0)?,
                    a: raw.take_or("a", -0.5)?,
                    length: raw.take_or("length", 0.12)?,
                    kappa: raw.take_or("kappa", 1.0)?,
                    mu: raw.take_or("mu", 0.0)?,
                    window,
                    chain: ChainConfig {
                        iterations: raw.take_or("iterations", dc.iterations)?,
                        burn_in: raw.take_or("burn_in", dc.burn_in)?,
                        move_sigma_direction: raw
                            .take_or("move_sigma_direction", dc.move_sigma_direction)?,
                        trace_every: raw.take_or("trace_every", dc.trace_every)?,
                        ..dc
                    },
                    tf: TfConfig {
                        test_segments: raw.take_or("test_segments", dt.test_segments)?,
                        a_bracket: (
                            raw.take_or("a_lower", dt.a_bracket.0)?,
                            raw.take_or("a_upper", dt.a_bracket.1)?,
                        ),
                        kappa: raw.take("kde_kappa")?.or(dt.kappa),
                        grid_points: raw.take_or("grid_points", dt.grid_points)?,
                        ..dt
                    },
                })
            }
            ModelKind::InhomogLength => {
                let dm = MleConfig::default();
                let f1_classes = match raw.take::<String>("f1_classes")? {
                    Some(v) => parse_list(&v)?,
                    None => dm.f1_classes.clone(),
                };
                ModelSpec::Inhomog(InhomogSpec {
                    tau: raw.take_or("tau", 900.0)?,
                    b: raw.take_or("b", 3.0)?,
                    alpha: raw.take_or("alpha", 2.0)?,
                    beta: raw.take_or("beta", 4.0)?,
                    diameter: raw.take_or("diameter", 1.0)?,
                    mle: MleConfig {
                        classes: raw.take_or("classes", dm.classes)?,
                        panels: raw.take_or("panels", dm.panels)?,
                        mc_segments: raw.take_or("mc_segments", dm.mc_segments)?,
                        f1_classes,
                        phi_fixed: raw.take_or("phi_fixed", dm.phi_fixed)?,
                        bandwidth_c: raw.take_or("bandwidth_c", dm.bandwidth_c)?,
                        kappa: raw.take("kde_kappa")?.or(dm.kappa),
                        grid_points: raw.take_or("grid_points", dm.grid_points)?,
                        b_bracket: (
                            raw.take_or("b_lower", dm.b_bracket.0)?,
                            raw.take_or("b_upper", dm.b_bracket.1)?,
                        ),
                        ..dm
                    },
                })
            }
        };
        let spec = StudySpec {
            model,
            replications: raw.take_or("replications", 1)?,
            seed: raw.take_or("seed", 0)?,
            residual_segments: raw.take_or("residual_segments", 10_000)?,
        };
        raw.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if self.residual_segments == 0 {
            bail!("residual_segments must be at least 1");
        }
        match &self.model {
            ModelSpec::Gibbs(g) => {
                g.model()?;
                g.chain.validate()?;
                g.tf.validate()?;
            }
            ModelSpec::Inhomog(m) => {
                m.model()?;
                m.mle.validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let spec = StudySpec::parse(
            "model = gibbs-directional\n# comment\na = -3   # strong\nreplications = 7\n",
        )
        .unwrap();
        assert_eq!(spec.replications, 7);
        match spec.model {
            ModelSpec::Gibbs(g) => {
                assert_eq!(g.a, -3.0);
                assert_eq!(g.tau, 1000.0);
                assert_eq!(g.tf.test_segments, 10_000);
            }
            _ => panic!("wrong model"),
        }
        let spec = StudySpec::parse("model = inhomog-length\nf1_classes = 1, 2\n").unwrap();
        match spec.model {
            ModelSpec::Inhomog(m) => {
                assert_eq!(m.mle.f1_classes, vec![1, 2]);
                assert_eq!(
                    m.mle,
                    MleConfig {
                        f1_classes: vec![1, 2],
                        ..MleConfig::default()
                    }
                );
            }
            _ => panic!("wrong model"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StudySpec::parse("tua = 3\n")
            .unwrap_err()
            .to_string()
            .contains("unknown key `tua`"));
        assert!(StudySpec::parse("a 3\n").is_err());
        assert!(StudySpec::parse("a = x\n")
            .unwrap_err()
            .to_string()
            .contains("line 1"));
        assert!(StudySpec::parse("a = 1\n").is_err());
        assert!(StudySpec::parse("a = -1\na = -2\n").is_err());
        assert!(StudySpec::parse("model = other\n").is_err());
        assert!(StudySpec::parse("replications = 0\n").is_err());
        // keys of the other model are unknown
        assert!(StudySpec::parse("model = inhomog-length\na = -1\n").is_err());
    }
}
