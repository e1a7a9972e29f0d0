//! Innovation diagnostics of a fully specified model.

use std::io::Write;
use std::path::Path;

use anyhow::Result;
use segproc::geometry::Configuration;
use segproc::models::{gnz_residual, GnzResidual, TestFunction};
use segproc::numerics::rng_for;

use crate::config::ModelSpec;
use crate::study::write_csv;

pub fn parse_test_function(s: &str) -> Result<TestFunction> {
    match s {
        "unit" => Ok(TestFunction::Unit),
        "hits" => Ok(TestFunction::Hits),
        other => anyhow::bail!("unknown test function `{other}` (expected unit or hits)"),
    }
}

pub fn test_function_name(q: TestFunction) -> &'static str {
    match q {
        TestFunction::Unit => "unit",
        TestFunction::Hits => "hits",
    }
}

pub fn residual_check(
    x: &Configuration,
    model: &ModelSpec,
    q: TestFunction,
    j_mc: usize,
    seed: u64,
) -> Result<GnzResidual> {
    let mut rng = rng_for(seed, 0);
    Ok(match model {
        ModelSpec::Gibbs(g) => gnz_residual(x, q, &g.model()?, j_mc, &mut rng)?,
        ModelSpec::Inhomog(m) => gnz_residual(x, q, &m.model()?, j_mc, &mut rng)?,
    })
}

pub fn write_residuals(path: &Path, rows: &[(TestFunction, GnzResidual)]) -> Result<()> {
    write_csv(path, |w| {
        writeln!(
            w,
            "test_function,value,sum_term,integral,mc_se,variance_proxy,z"
        )?;
        for (q, r) in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                test_function_name(*q),
                r.value,
                r.sum_term,
                r.integral,
                r.mc_se,
                r.variance_proxy,
                r.z_score()
            )?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::StudySpec;

    #[test]
    fn empty_configuration_has_negative_unit_residual() {
        let spec = StudySpec::parse("tau = 50\n").unwrap();
        let r = residual_check(
            &Configuration::default(),
            &spec.model,
            TestFunction::Unit,
            2000,
            3,
        )
        .unwrap();
        assert_eq!(r.sum_term, 0.0);
        assert!(r.value < 0.0);
        assert!((r.value + r.integral).abs() < 1e-12);
        // without segments λ* = τ g(φ), whose integral is τ|B| = 50
        assert!(
            (r.integral - 50.0).abs() < 4.0 * r.mc_se,
            "{} ± {}",
            r.integral,
            r.mc_se
        );
    }
}
