//! Scenario configuration: mesh and time grid, constitutive data, initial
//! data, forcing and solver tolerances.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize};

use super::{make_potential, validate_material, default_grid, MaterialLaw, PotentialSplit, ScalarLaw};
use crate::discretization::{build_mesh, MassKind, Mesh1D};
use crate::error::{invalid, Result};
use crate::quadrature;

/// Spatial profile sampled at the mesh nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    /// `offset + amplitude·cos(mode·π·x/L)`.
    Cosine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        #[serde(default = "default_mode")]
        mode: u32,
    },
    Linear {
        #[serde(default)]
        offset: f64,
        slope: f64,
    },
    Nodal { values: Vec<f64> },
    Sum { parts: Vec<FieldSpec> },
}

fn default_mode() -> u32 {
    1
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant { value: 0.0 }
    }
}

impl FieldSpec {
    pub fn constant(value: f64) -> Self {
        FieldSpec::Constant { value }
    }

    pub fn cosine(offset: f64, amplitude: f64, mode: u32) -> Self {
        FieldSpec::Cosine { offset, amplitude, mode }
    }

    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match self {
            FieldSpec::Constant { value } => *value,
            FieldSpec::Cosine { offset, amplitude, mode } => {
                offset + amplitude * (f64::from(*mode) * std::f64::consts::PI * x / length).cos()
            }
            FieldSpec::Linear { offset, slope } => offset + slope * x,
            FieldSpec::Nodal { .. } => f64::NAN,
            FieldSpec::Sum { parts } => parts.iter().map(|p| p.eval(x, length)).sum(),
        }
    }

    pub fn sample(&self, mesh: &Mesh1D) -> Result<Vec<f64>> {
        match self {
            FieldSpec::Nodal { values } => {
                if values.len() != mesh.n {
                    return Err(invalid(format!(
                        "nodal field has {} values, mesh has {} nodes",
                        values.len(),
                        mesh.n
                    )));
                }
                Ok(values.clone())
            }
            FieldSpec::Sum { parts } => {
                let mut out = vec![0.0; mesh.n];
                for p in parts {
                    for (o, v) in out.iter_mut().zip(p.sample(mesh)?) {
                        *o += v;
                    }
                }
                Ok(out)
            }
            _ => Ok(mesh.nodes.iter().map(|&x| self.eval(x, mesh.length)).collect()),
        }
    }
}

/// Scalar function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeProfile {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `offset + slope·t`.
    Linear {
        #[serde(default)]
        offset: f64,
        slope: f64,
    },
    /// `amplitude·sin(2π·frequency·t + phase)`.
    Sine {
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default = "unit")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Samples linearly interpolated in `t`, constant outside the table.
    Table { times: Vec<f64>, values: Vec<f64> },
}

fn unit() -> f64 {
    1.0
}

impl TimeProfile {
    pub fn sine(amplitude: f64, frequency: f64) -> Self {
        TimeProfile::Sine { amplitude, frequency, phase: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeProfile::Zero => true,
            TimeProfile::Constant { value } => *value == 0.0,
            TimeProfile::Linear { offset, slope } => *offset == 0.0 && *slope == 0.0,
            TimeProfile::Sine { amplitude, .. } => *amplitude == 0.0,
            TimeProfile::Table { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let TimeProfile::Table { times, values } = self {
            if times.is_empty() || times.len() != values.len() {
                return Err(invalid("time table needs equally many (nonzero) times and values"));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("time table must have strictly increasing times"));
            }
            if times.iter().chain(values).any(|v| !v.is_finite()) {
                return Err(invalid("time table contains non-finite entries"));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Zero => 0.0,
            TimeProfile::Constant { value } => *value,
            TimeProfile::Linear { offset, slope } => offset + slope * t,
            TimeProfile::Sine { amplitude, frequency, phase } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin()
            }
            TimeProfile::Table { times, values } => {
                let i = times.partition_point(|&s| s <= t);
                if i == 0 {
                    values[0]
                } else if i == times.len() {
                    values[times.len() - 1]
                } else {
                    let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
                    values[i - 1] + w * (values[i] - values[i - 1])
                }
            }
        }
    }

    /// Points where the profile is not smooth.
    pub fn breaks(&self) -> &[f64] {
        match self {
            TimeProfile::Table { times, .. } => times,
            _ => &[],
        }
    }

    /// `∫_a^b` of the profile; exact for tables since Gauss–Legendre
    /// integrates each linear piece exactly.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        match self {
            TimeProfile::Zero => Ok(0.0),
            TimeProfile::Constant { value } => Ok(value * (b - a)),
            _ => quadrature::integrate_with_breaks(&|t| self.value(t), a, b, self.breaks(), 1e-14),
        }
    }
}

/// Body force `f(x, t) = space(x)·time(t)` and boundary data `g` at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Forcing {
    pub body_space: FieldSpec,
    pub body_time: TimeProfile,
    pub g_left: TimeProfile,
    pub g_right: TimeProfile,
}

impl Forcing {
    pub fn none() -> Self {
        Forcing { body_space: FieldSpec::constant(1.0), ..Forcing::default() }
    }

    pub fn body(space: FieldSpec, time: TimeProfile) -> Self {
        Forcing { body_space: space, body_time: time, ..Forcing::default() }
    }

    pub fn boundary_is_zero(&self) -> bool {
        self.g_left.is_zero() && self.g_right.is_zero()
    }

    pub fn validate(&self) -> Result<()> {
        self.body_time.validate()?;
        self.g_left.validate()?;
        self.g_right.validate()
    }
}

/// Solver and check tolerances; each can be overridden by key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// KKT residual of the damage subproblem.
    pub inner: f64,
    /// Relative residual of the momentum solve.
    pub lin: f64,
    /// Slack allowed on `χ_t ≤ 0` before a state counts as infeasible.
    pub mono: f64,
    pub vi: f64,
    /// Residual of the elliptic `ω ↦ χ` solve.
    pub ell: f64,
    /// Stage residual of the strong time stepper.
    pub ode: f64,
    pub eig: f64,
    /// Slack of the discrete energy inequality; `None` means `inner × K`.
    pub edi: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            inner: 1e-11,
            lin: 1e-12,
            mono: 1e-10,
            vi: 1e-9,
            ell: 1e-10,
            ode: 1e-10,
            eig: crate::discretization::TOL_EIG,
            edi: None,
        }
    }
}

impl Tolerances {
    pub fn edi_for(&self, steps: usize) -> f64 {
        self.edi.unwrap_or(self.inner * steps as f64)
    }

    /// Applies `key = value`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(invalid(format!("tolerance `{key}` must be positive, got {value}")));
        }
        let slot = match key.trim_start_matches("tol_") {
            "inner" => &mut self.inner,
            "lin" => &mut self.lin,
            "mono" => &mut self.mono,
            "vi" => &mut self.vi,
            "ell" => &mut self.ell,
            "ode" => &mut self.ode,
            "eig" => &mut self.eig,
            "edi" => {
                self.edi = Some(value);
                return Ok(());
            }
            other => return Err(invalid(format!("unknown tolerance `{other}`"))),
        };
        *slot = value;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Weak,
    Strong,
    Compare,
}

/// Initial value of `ω_t` for the strong scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaRateInit {
    #[default]
    Zero,
    /// `ω_t(0)` chosen so that the `ν`-term starts at rest.
    QuasiStatic,
    Field { field: FieldSpec },
}

/// Parameters of the regularized strong scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrongConfig {
    /// Number of nonconstant eigenmodes.
    pub modes: usize,
    /// Schedule rung `n`: `δ = 2^{−n}`, `ν = 2^{−4n}`.
    pub rung: u32,
    pub delta: Option<f64>,
    pub nu: Option<f64>,
    /// Substeps of the strong integrator per time step.
    pub substeps: usize,
    pub omega_rate0: OmegaRateInit,
    pub psi_max: f64,
    /// Exponent used for the exploratory horizon estimate.
    pub beta: f64,
}

impl Default for StrongConfig {
    fn default() -> Self {
        StrongConfig {
            modes: 16,
            rung: 2,
            delta: None,
            nu: None,
            substeps: 1,
            omega_rate0: OmegaRateInit::Zero,
            psi_max: 1e6,
            beta: 5.0,
        }
    }
}

/// Which run stands in for the strong solution in compare mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Mesh and step refinement factor of the reference run.
    pub refinement: usize,
    pub reference: ReferenceKind,
    pub c_rei: f64,
    /// Perturbation added to `χ₀` of the compared run.
    pub chi0_perturbation: Option<FieldSpec>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { refinement: 4, reference: ReferenceKind::Strong, c_rei: 1.0, chi0_perturbation: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub preset: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub u0: FieldSpec,
    #[serde(default)]
    pub v0: FieldSpec,
    pub chi0: FieldSpec,
}

/// Material section of a scenario file: `a` and `b` may be preset names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    #[serde(deserialize_with = "law_or_preset")]
    pub a: ScalarLaw,
    #[serde(deserialize_with = "law_or_preset")]
    pub b: ScalarLaw,
    pub b_floor: Option<f64>,
    #[serde(rename = "C", alias = "c", default = "unit")]
    pub c: f64,
    #[serde(rename = "V", alias = "v", default = "unit")]
    pub v: f64,
    #[serde(default = "unit")]
    pub growth_p: f64,
    #[serde(default = "unit")]
    pub growth_q: f64,
    #[serde(default = "unit")]
    pub gamma0: f64,
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub gamma2: f64,
}

impl From<MaterialLaw> for MaterialSpec {
    fn from(m: MaterialLaw) -> Self {
        MaterialSpec {
            a: m.a,
            b: m.b,
            b_floor: Some(m.b_floor),
            c: m.c,
            v: m.v,
            growth_p: m.growth_p,
            growth_q: m.growth_q,
            gamma0: m.gamma0,
            gamma1: m.gamma1,
            gamma2: m.gamma2,
        }
    }
}

impl MaterialSpec {
    /// Resolves the law; a missing `b_floor` defaults to the minimum of `b`
    /// over the default grid.
    pub fn resolve(&self) -> MaterialLaw {
        let b_floor = self
            .b_floor
            .unwrap_or_else(|| default_grid().iter().map(|&r| self.b.value(r)).fold(f64::INFINITY, f64::min));
        MaterialLaw {
            a: self.a,
            b: self.b,
            b_floor,
            c: self.c,
            v: self.v,
            growth_p: self.growth_p,
            growth_q: self.growth_q,
            gamma0: self.gamma0,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
        }
    }
}

/// Named scalar laws accepted in scenario files.
pub fn scalar_law_preset(name: &str) -> Result<ScalarLaw> {
    match name {
        "quadratic_plus" => Ok(ScalarLaw::quadratic_plus()),
        "cubic_plus" => Ok(ScalarLaw::PositivePartPower { scale: 1.0, power: 3.0, offset: 0.0 }),
        "identity" => Ok(ScalarLaw::Identity),
        "one" => Ok(ScalarLaw::constant(1.0)),
        other => Err(crate::error::SimError::UnknownPreset(other.to_string())),
    }
}

fn law_or_preset<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ScalarLaw, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Name(String),
        Law(ScalarLaw),
    }
    match Repr::deserialize(d)? {
        Repr::Number(v) => Ok(ScalarLaw::constant(v)),
        Repr::Name(n) => scalar_law_preset(&n).map_err(serde::de::Error::custom),
        Repr::Law(l) => Ok(l),
    }
}

fn default_output_every() -> usize {
    1
}

/// Scenario as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    /// Node count `N`.
    pub nodes: usize,
    #[serde(default = "unit")]
    pub length: f64,
    pub final_time: f64,
    /// Step count `K`.
    pub steps: usize,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default)]
    pub mass: MassKind,
    pub material: MaterialSpec,
    pub potential: PotentialSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub forcing: Forcing,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub strong: StrongConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    pub mesh: Mesh1D,
    pub mass: MassKind,
    pub final_time: f64,
    pub steps: usize,
    pub output_every: usize,
    pub material: MaterialLaw,
    pub potential_name: String,
    pub potential: PotentialSplit,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub chi0: Vec<f64>,
    pub forcing: Forcing,
    pub tolerances: Tolerances,
    pub strong: StrongConfig,
    pub compare: CompareConfig,
    pub seed: u64,
    /// Whether the first structural hypothesis holds on the default grid.
    pub hypothesis1: bool,
}

impl ScenarioSpec {
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        if self.steps < 1 {
            return Err(invalid("step count K must be at least 1"));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(invalid(format!("final time must be positive, got {}", self.final_time)));
        }
        if self.output_every < 1 {
            return Err(invalid("output_every must be at least 1"));
        }
        if !(self.length > 0.0) {
            return Err(invalid(format!("domain length must be positive, got {}", self.length)));
        }
        let mesh = build_mesh(self.nodes, self.length)?;
        let material = self.material.resolve();
        if !(material.c > 0.0 && material.v > 0.0) {
            return Err(invalid("C and V must be positive"));
        }
        if !(material.gamma0 > 0.0 && material.gamma1 >= 0.0 && material.gamma2 >= 0.0) {
            return Err(invalid("Robin coefficients need gamma0 > 0 and gamma1, gamma2 ≥ 0"));
        }
        if !(material.b_floor > 0.0) {
            return Err(invalid(format!("b_floor must be positive, got {}", material.b_floor)));
        }
        let potential = make_potential(&self.potential.preset, &self.potential.params)?;
        self.forcing.validate()?;
        let u0 = self.initial.u0.sample(&mesh)?;
        let v0 = self.initial.v0.sample(&mesh)?;
        let chi0 = self.initial.chi0.sample(&mesh)?;
        for (i, &c) in chi0.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(invalid(format!("chi0 = {c} at node {i} lies outside [0, 1]")));
            }
            let (lo, hi) = potential.domain();
            let outside = if potential.open_domain() { c <= lo || c >= hi } else { c < lo || c > hi };
            if outside {
                return Err(invalid(format!("chi0 = {c} at node {i} lies outside the potential domain")));
            }
        }
        if u0.iter().chain(&v0).any(|v| !v.is_finite()) {
            return Err(invalid("initial displacement or velocity is not finite"));
        }
        let hypothesis1 = validate_material(&material, &default_grid())?.hypothesis1();
        Ok(ScenarioConfig {
            name: self.name.clone(),
            mode: self.mode,
            mesh,
            mass: self.mass,
            final_time: self.final_time,
            steps: self.steps,
            output_every: self.output_every,
            material,
            potential_name: self.potential.preset.clone(),
            potential,
            u0,
            v0,
            chi0,
            forcing: self.forcing.clone(),
            tolerances: self.tolerances,
            strong: self.strong.clone(),
            compare: self.compare.clone(),
            seed: self.seed,
            hypothesis1,
        })
    }
}

impl ScenarioConfig {
    pub fn tau(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    /// Nodal body force `f(x, t)`.
    pub fn body_force(&self, t: f64) -> Vec<f64> {
        let s = self.forcing.body_time.value(t);
        self.mesh.nodes.iter().map(|&x| s * self.forcing.body_space.eval(x, self.mesh.length)).collect()
    }

    /// Space profile of the body force sampled on the mesh.
    pub fn body_space(&self) -> Result<Vec<f64>> {
        self.forcing.body_space.sample(&self.mesh)
    }

    /// Rejects boundary configurations other than homogeneous Neumann.
    pub fn check_strong_admissible(&self) -> Result<()> {
        if !self.material.is_homogeneous_neumann() {
            return Err(invalid(format!(
                "strong mode needs homogeneous Neumann data (gamma1 = gamma2 = 0), got gamma = ({}, {}, {})",
                self.material.gamma0, self.material.gamma1, self.material.gamma2
            )));
        }
        if !self.forcing.boundary_is_zero() {
            return Err(invalid("strong mode needs zero boundary forcing g"));
        }
        Ok(())
    }
}
