//! Named scenarios used by the command line runner and the test suites.

use std::collections::BTreeMap;

use crate::discretization::MassKind;
use crate::error::{Result, SimError};
use crate::model::{
    CompareConfig, FieldSpec, Forcing, InitialSpec, MaterialLaw, MaterialSpec, Mode, OmegaRateInit, PotentialSpec,
    ScalarLaw, ScenarioSpec, StrongConfig, TimeProfile, Tolerances,
};

/// Names of the five scenarios of the standard weak suite.
pub const STANDARD_SUITE: [&str; 5] = ["logarithmic", "indicator_box", "quadratic", "strong_damage", "robin_loaded"];

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn base(name: &str, potential: &str, pot_params: &[(&str, f64)], chi0: FieldSpec) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        mode: Mode::Weak,
        nodes: 201,
        length: 1.0,
        final_time: 1.0,
        steps: 400,
        output_every: 1,
        mass: MassKind::Consistent,
        material: MaterialLaw::default().into(),
        potential: PotentialSpec { preset: potential.to_string(), params: params(pot_params) },
        initial: InitialSpec { u0: FieldSpec::cosine(0.0, 0.3, 1), v0: FieldSpec::default(), chi0 },
        forcing: Forcing::none(),
        tolerances: Tolerances::default(),
        strong: StrongConfig::default(),
        compare: CompareConfig::default(),
        seed: 0,
    }
}

/// Scenario by name.
///
/// Weak suite: `logarithmic`, `indicator_box`, `quadratic`, `strong_damage`,
/// `robin_loaded`. Others: `zero_data`, `stationary`, `linear_regime`,
/// `smooth_strong`, `compare`.
pub fn scenario(name: &str) -> Result<ScenarioSpec> {
    let sine_body = Forcing::body(FieldSpec::cosine(0.0, 1.0, 1), TimeProfile::sine(1.0, 1.0));
    let spec = match name {
        "logarithmic" => ScenarioSpec {
            forcing: sine_body,
            ..base(name, "logarithmic", &[("c1", 1.0), ("c2", 0.0), ("c3", 0.0)], FieldSpec::cosine(0.5, 0.3, 1))
        },
        "indicator_box" => ScenarioSpec {
            initial: InitialSpec {
                u0: FieldSpec::cosine(0.0, 0.5, 1),
                v0: FieldSpec::default(),
                chi0: FieldSpec::cosine(0.8, 0.2, 1),
            },
            ..base(name, "indicator_box", &[("ell", 1.0)], FieldSpec::default())
        },
        "quadratic" => ScenarioSpec {
            forcing: sine_body,
            ..base(name, "quadratic", &[("k", 1.0), ("ell", 0.0)], FieldSpec::cosine(0.7, 0.2, 2))
        },
        "strong_damage" => {
            let mut s = base(name, "quadratic", &[("k", 1.0), ("ell", 0.5)], FieldSpec::cosine(0.8, 0.15, 1));
            s.material.c = 20.0;
            s.initial.u0 = FieldSpec::cosine(0.0, 0.5, 1);
            s
        }
        "robin_loaded" => {
            let mut s = base(name, "smooth_double_well", &[("c", 1.0)], FieldSpec::cosine(0.85, 0.1, 1));
            s.material.gamma1 = 0.5;
            s.material.gamma2 = 2.0;
            s.forcing.g_right = TimeProfile::sine(1.0, 1.0);
            s
        }
        "zero_data" => {
            let mut s = base(name, "indicator_box", &[], FieldSpec::constant(1.0));
            s.initial.u0 = FieldSpec::default();
            s.nodes = 41;
            s.steps = 40;
            s
        }
        "stationary" => {
            let mut s = base(name, "indicator_box", &[], FieldSpec::constant(1.0));
            s.initial.u0 = FieldSpec::default();
            s
        }
        "linear_regime" => {
            let mut s = base(name, "quadratic", &[("k", 1.0), ("ell", 0.0)], FieldSpec::cosine(0.5, 0.02, 1));
            s.material = MaterialSpec {
                a: ScalarLaw::constant(1.0),
                b: ScalarLaw::constant(1.0),
                b_floor: Some(1.0),
                ..MaterialLaw::default().into()
            };
            s.initial.u0 = FieldSpec::Sum {
                parts: vec![FieldSpec::cosine(0.0, 0.2, 1), FieldSpec::cosine(0.0, 0.05, 2)],
            };
            s
        }
        "smooth_strong" => {
            let mut s = base(name, "quadratic", &[("k", 0.0), ("ell", 0.0), ("slope", 0.5)], FieldSpec::constant(1.0));
            s.mode = Mode::Strong;
            s.nodes = 101;
            s.steps = 40;
            s.final_time = 0.5;
            s.strong = StrongConfig { modes: 12, rung: 2, omega_rate0: OmegaRateInit::QuasiStatic, ..StrongConfig::default() };
            s
        }
        "compare" => {
            let mut s = base(name, "quadratic", &[("k", 0.0), ("ell", 0.0), ("slope", 0.5)], FieldSpec::constant(1.0));
            s.mode = Mode::Compare;
            s.nodes = 21;
            s.steps = 20;
            s.final_time = 0.5;
            s.strong = StrongConfig { modes: 20, rung: 5, omega_rate0: OmegaRateInit::QuasiStatic, ..StrongConfig::default() };
            s
        }
        other => return Err(SimError::UnknownPreset(other.to_string())),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for name in STANDARD_SUITE.iter().chain(&["zero_data", "stationary", "linear_regime", "smooth_strong", "compare"]) {
            let cfg = scenario(name).unwrap().resolve().unwrap();
            assert_eq!(cfg.hypothesis1, *name != "linear_regime", "{name}");
        }
        assert!(scenario("nope").is_err());
    }
}
