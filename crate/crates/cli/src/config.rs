//! TOML run configuration and its resolution into toolkit objects.
//!
//! Methods, sequences, index sets, families and systems can be defined once
//! under `[methods.<name>]` (etc.) and referenced by name, or written inline.
//! Built-in names (`abel`, `evens`, `eta`, ...) need no definition.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pstat_core::domain::{Domain, Grid};
use pstat_core::function::FunctionHandle;
use pstat_core::korovkin::{ExperimentSettings, JRange, KorovkinSystem, DEFAULT_EPSILONS};
use pstat_core::operators::DiscreteOperatorFamily;
use pstat_core::rth::DerivativeSource;
use pstat_core::sequence::{IndexSet, Sequence};
use pstat_core::summability::{EvalSchedule, PowerSeriesMethod, Radius};

use crate::error::CliError;

/// Name lookups deeper than this are treated as a reference cycle.
const MAX_REF_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ref<T> {
    Name(String),
    Inline(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum MethodDef {
    Abel,
    Borel,
    Logarithmic,
    ZeroOne,
    Table { name: String, coefficients: Vec<f64> },
    Periodic {
        name: String,
        pattern: Vec<f64>,
        /// Radius of convergence; omitted means 1.
        radius: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SetDef {
    All,
    Empty,
    Evens,
    Odds,
    Squares,
    Cubes,
    Primes,
    Residue { modulus: usize, residue: usize },
    Range { lo: usize, hi: usize },
    Explicit { members: Vec<usize> },
    Complement { set: Box<Ref<SetDef>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SequenceDef {
    Constant { value: f64 },
    Alternating,
    /// `j` on even indices, 0 on odd ones.
    Eta,
    Values { values: Vec<f64>, tail: f64 },
    Indicator { set: Ref<SetDef> },
    Combination {
        alpha: f64,
        x: Box<Ref<SequenceDef>>,
        beta: f64,
        y: Box<Ref<SequenceDef>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum FamilyDef {
    Bernstein {
        j_min: usize,
        j_max: usize,
        #[serde(default, skip_serializing_if = "is_false")]
        zero_at_origin: bool,
        /// Multiplies operator `j` by `1 + eta_j`.
        eta: Option<Ref<SequenceDef>>,
    },
    Fejer {
        j_min: usize,
        j_max: usize,
        quadrature: Option<usize>,
        #[serde(default, skip_serializing_if = "is_false")]
        zero_at_origin: bool,
        eta: Option<Ref<SequenceDef>>,
    },
}

fn is_false(b: &bool) -> bool {
    !b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DomainDef {
    Interval { a: f64, b: f64 },
    Circle,
}

impl From<DomainDef> for Domain {
    fn from(d: DomainDef) -> Self {
        match d {
            DomainDef::Interval { a, b } => Domain::Interval { a, b },
            DomainDef::Circle => Domain::Circle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum FunctionDef {
    Constant { value: f64 },
    Monomial { k: usize },
    Polynomial { coefficients: Vec<f64> },
    AbsShift { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SystemDef {
    Algebraic { domain: Option<DomainDef> },
    Trig,
    Custom {
        domain: DomainDef,
        tests: Vec<Ref<FunctionDef>>,
        coefficients: Vec<Ref<FunctionDef>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDef {
    pub abscissae: Option<Vec<f64>>,
    pub trunc_tol: Option<f64>,
    pub limit_tol: Option<f64>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDef {
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Table,
    Document,
    #[default]
    Both,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDef {
    pub dir: Option<String>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityJob {
    pub method: Ref<MethodDef>,
    pub set: Ref<SetDef>,
    pub schedule: Option<ScheduleDef>,
    /// Asserted final density.
    pub expect: Option<f64>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PStatJob {
    pub method: Ref<MethodDef>,
    pub sequence: Ref<SequenceDef>,
    pub limit: f64,
    pub epsilons: Option<Vec<f64>>,
    pub schedule: Option<ScheduleDef>,
    /// Asserted verdict, `true` when omitted.
    pub expect: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeJob {
    pub method: Ref<MethodDef>,
    pub sequence: Ref<SequenceDef>,
    pub limit: f64,
    pub k_max: Option<usize>,
    pub horizon: Option<usize>,
    pub schedule: Option<ScheduleDef>,
    /// Asserted completion of the ladder, `true` when omitted.
    pub expect_complete: Option<bool>,
}

/// Shared by `korovkin`, `periodic` and `rth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentJob {
    pub method: Ref<MethodDef>,
    pub family: Option<Ref<FamilyDef>>,
    pub system: Option<Ref<SystemDef>>,
    #[serde(default)]
    pub targets: Vec<Ref<FunctionDef>>,
    pub j_range: JRange,
    pub epsilons: Option<Vec<f64>>,
    pub schedule: Option<ScheduleDef>,
    pub grid: Option<GridDef>,
    pub boundedness_set: Option<Ref<SetDef>>,
    pub z_points: Option<[f64; 2]>,
    /// `rth` only.
    pub order: Option<usize>,
    pub derivatives: Option<DerivativeSource>,
    /// Asserted conclusion flag, `true` when omitted.
    pub expect_conclusion: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "is_default")]
    pub output: OutputDef,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub methods: BTreeMap<String, MethodDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sets: BTreeMap<String, SetDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sequences: BTreeMap<String, SequenceDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub families: BTreeMap<String, FamilyDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub systems: BTreeMap<String, SystemDef>,
    pub density: Option<DensityJob>,
    pub pstat: Option<PStatJob>,
    pub decompose: Option<DecomposeJob>,
    pub korovkin: Option<ExperimentJob>,
    pub periodic: Option<ExperimentJob>,
    pub rth: Option<ExperimentJob>,
}

fn is_default(o: &OutputDef) -> bool {
    *o == OutputDef::default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.inner().message().trim().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolver(&self) -> Resolver<'_> {
        Resolver { config: self }
    }
}

/// Turns references into toolkit objects.
pub struct Resolver<'a> {
    config: &'a RunConfig,
}

fn unknown(kind: &str, name: &str) -> CliError {
    CliError::Resolve(format!("unknown {kind} `{name}`"))
}

fn too_deep(kind: &str) -> CliError {
    CliError::Resolve(format!("{kind} references nest too deeply (cycle?)"))
}

impl Resolver<'_> {
    pub fn method(&self, r: &Ref<MethodDef>) -> Result<PowerSeriesMethod, CliError> {
        let def = match r {
            Ref::Inline(def) => def.clone(),
            Ref::Name(name) => match self.config.methods.get(name) {
                Some(def) => def.clone(),
                None => builtin_method(name).ok_or_else(|| unknown("method", name))?,
            },
        };
        Ok(match def {
            MethodDef::Abel => PowerSeriesMethod::abel(),
            MethodDef::Borel => PowerSeriesMethod::borel(),
            MethodDef::Logarithmic => PowerSeriesMethod::logarithmic(),
            MethodDef::ZeroOne => PowerSeriesMethod::zero_one(),
            MethodDef::Table { name, coefficients } => {
                PowerSeriesMethod::from_table(name, coefficients)?
            }
            MethodDef::Periodic {
                name,
                pattern,
                radius,
            } => PowerSeriesMethod::periodic(name, pattern, Radius::Finite(radius.unwrap_or(1.0)))?,
        })
    }

    pub fn set(&self, r: &Ref<SetDef>) -> Result<IndexSet, CliError> {
        self.set_at(r, 0)
    }

    fn set_at(&self, r: &Ref<SetDef>, depth: usize) -> Result<IndexSet, CliError> {
        if depth > MAX_REF_DEPTH {
            return Err(too_deep("set"));
        }
        let (def, name) = match r {
            Ref::Inline(def) => (def.clone(), None),
            Ref::Name(name) => match self.config.sets.get(name) {
                Some(def) => (def.clone(), Some(name)),
                None => (builtin_set(name).ok_or_else(|| unknown("set", name))?, None),
            },
        };
        let set = match def {
            SetDef::All => IndexSet::all(),
            SetDef::Empty => IndexSet::empty(),
            SetDef::Evens => IndexSet::evens(),
            SetDef::Odds => IndexSet::odds(),
            SetDef::Squares => IndexSet::squares(),
            SetDef::Cubes => IndexSet::cubes(),
            SetDef::Primes => IndexSet::primes(),
            SetDef::Residue { modulus, residue } => {
                if modulus == 0 || residue >= modulus {
                    return Err(CliError::Resolve(format!(
                        "residue {residue} mod {modulus} is not a residue class"
                    )));
                }
                IndexSet::residue_class(modulus, residue)
            }
            SetDef::Range { lo, hi } => IndexSet::range(lo, hi),
            SetDef::Explicit { members } => IndexSet::explicit(members),
            SetDef::Complement { set } => self.set_at(&set, depth + 1)?.complement(),
        };
        Ok(match name {
            Some(name) => set.relabel(name.clone()),
            None => set,
        })
    }

    pub fn sequence(&self, r: &Ref<SequenceDef>) -> Result<Sequence, CliError> {
        self.sequence_at(r, 0)
    }

    fn sequence_at(&self, r: &Ref<SequenceDef>, depth: usize) -> Result<Sequence, CliError> {
        if depth > MAX_REF_DEPTH {
            return Err(too_deep("sequence"));
        }
        let def = match r {
            Ref::Inline(def) => def.clone(),
            Ref::Name(name) => match self.config.sequences.get(name) {
                Some(def) => def.clone(),
                None => builtin_sequence(name).ok_or_else(|| unknown("sequence", name))?,
            },
        };
        Ok(match def {
            SequenceDef::Constant { value } => Sequence::constant(value),
            SequenceDef::Alternating => Sequence::alternating(),
            SequenceDef::Eta => Sequence::even_index_ramp(),
            SequenceDef::Values { values, tail } => Sequence::from_values("values", values, tail),
            SequenceDef::Indicator { set } => self.set_at(&set, depth + 1)?.indicator(),
            SequenceDef::Combination { alpha, x, beta, y } => Sequence::linear_combination(
                alpha,
                &self.sequence_at(&x, depth + 1)?,
                beta,
                &self.sequence_at(&y, depth + 1)?,
            ),
        })
    }

    pub fn family(&self, r: &Ref<FamilyDef>) -> Result<DiscreteOperatorFamily, CliError> {
        let (def, name) = match r {
            Ref::Inline(def) => (def.clone(), None),
            Ref::Name(name) => (
                self.config
                    .families
                    .get(name)
                    .cloned()
                    .ok_or_else(|| unknown("family", name))?,
                Some(name.clone()),
            ),
        };
        let (base, zero_at_origin, eta) = match def {
            FamilyDef::Bernstein {
                j_min,
                j_max,
                zero_at_origin,
                eta,
            } => (DiscreteOperatorFamily::bernstein(j_min, j_max)?, zero_at_origin, eta),
            FamilyDef::Fejer {
                j_min,
                j_max,
                quadrature,
                zero_at_origin,
                eta,
            } => (
                DiscreteOperatorFamily::fejer(j_min, j_max, quadrature)?,
                zero_at_origin,
                eta,
            ),
        };
        let base = if zero_at_origin {
            base.with_zero_at_origin()
        } else {
            base
        };
        let family = match eta {
            Some(eta) => base.perturb(self.sequence(&eta)?)?,
            None => base,
        };
        Ok(match name {
            Some(name) => family.relabel(name),
            None => family,
        })
    }

    pub fn system(&self, r: &Ref<SystemDef>) -> Result<KorovkinSystem, CliError> {
        let def = match r {
            Ref::Inline(def) => def.clone(),
            Ref::Name(name) => match self.config.systems.get(name) {
                Some(def) => def.clone(),
                None => builtin_system(name).ok_or_else(|| unknown("system", name))?,
            },
        };
        Ok(match def {
            SystemDef::Algebraic { domain } => {
                KorovkinSystem::algebraic(domain.map_or(Domain::UNIT, Domain::from))?
            }
            SystemDef::Trig => KorovkinSystem::trig(),
            SystemDef::Custom {
                domain,
                tests,
                coefficients,
            } => {
                let domain = Domain::from(domain);
                let resolve = |list: &[Ref<FunctionDef>]| -> Result<Vec<_>, CliError> {
                    list.iter().map(|f| self.function(f, domain)).collect()
                };
                KorovkinSystem::new("custom", domain, resolve(&tests)?, resolve(&coefficients)?)?
            }
        })
    }

    /// Built-in functions by name; constants are flagged periodic on the circle.
    pub fn function(&self, r: &Ref<FunctionDef>, domain: Domain) -> Result<FunctionHandle, CliError> {
        let f = match r {
            Ref::Name(name) => match name.as_str() {
                "sin" => FunctionHandle::sin(),
                "cos" => FunctionHandle::cos(),
                "exp" => FunctionHandle::exp(),
                "sqrt" => FunctionHandle::sqrt(),
                "sin_pi" => FunctionHandle::sin_pi(),
                "triangle_wave" => FunctionHandle::triangle_wave(),
                "kinked_quadratic" => FunctionHandle::kinked_quadratic(),
                "abs_half" => FunctionHandle::abs_shift(0.5),
                _ => return Err(unknown("function", name)),
            },
            Ref::Inline(def) => match def {
                FunctionDef::Constant { value } => FunctionHandle::constant(*value),
                FunctionDef::Monomial { k } => FunctionHandle::monomial(*k),
                FunctionDef::Polynomial { coefficients } => {
                    FunctionHandle::polynomial("polynomial", coefficients.clone())
                }
                FunctionDef::AbsShift { c } => FunctionHandle::abs_shift(*c),
            },
        };
        let constant = matches!(r, Ref::Inline(FunctionDef::Constant { .. }));
        Ok(if domain.is_circle() && constant {
            f.periodic()
        } else {
            f
        })
    }

    pub fn schedule(
        &self,
        method: &PowerSeriesMethod,
        def: Option<&ScheduleDef>,
    ) -> Result<EvalSchedule, CliError> {
        let default = EvalSchedule::default_for(method);
        let Some(def) = def else {
            return Ok(default);
        };
        let schedule = EvalSchedule::new(
            def.abscissae.clone().unwrap_or(default.abscissae),
            def.trunc_tol.unwrap_or(default.trunc_tol),
            def.limit_tol.unwrap_or(default.limit_tol),
            def.horizon.unwrap_or(default.horizon),
        )?;
        schedule.validate_for(method)?;
        Ok(schedule)
    }

    pub fn grid(&self, domain: Domain, def: Option<&GridDef>) -> Result<Grid, CliError> {
        let points = def.and_then(|g| g.points).unwrap_or(domain.default_points());
        Ok(Grid::uniform(domain, points)?)
    }

    pub fn settings(&self, job: &ExperimentJob) -> Result<ExperimentSettings, CliError> {
        Ok(ExperimentSettings {
            j_range: job.j_range.clone(),
            epsilons: job.epsilons.clone().unwrap_or(DEFAULT_EPSILONS.to_vec()),
            boundedness_set: job.boundedness_set.as_ref().map(|s| self.set(s)).transpose()?,
            z_points: job.z_points.map(|[s, t]| (s, t)),
        })
    }

    pub fn derivative_source(&self, job: &ExperimentJob) -> DerivativeSource {
        job.derivatives.unwrap_or(DerivativeSource::Analytic)
    }
}

fn builtin_method(name: &str) -> Option<MethodDef> {
    Some(match name {
        "abel" => MethodDef::Abel,
        "borel" => MethodDef::Borel,
        "logarithmic" => MethodDef::Logarithmic,
        "zero_one" => MethodDef::ZeroOne,
        _ => return None,
    })
}

fn builtin_set(name: &str) -> Option<SetDef> {
    Some(match name {
        "all" => SetDef::All,
        "empty" => SetDef::Empty,
        "evens" => SetDef::Evens,
        "odds" => SetDef::Odds,
        "squares" => SetDef::Squares,
        "cubes" => SetDef::Cubes,
        "primes" => SetDef::Primes,
        _ => return None,
    })
}

fn builtin_sequence(name: &str) -> Option<SequenceDef> {
    Some(match name {
        "alternating" => SequenceDef::Alternating,
        "eta" => SequenceDef::Eta,
        _ => return None,
    })
}

fn builtin_system(name: &str) -> Option<SystemDef> {
    Some(match name {
        "algebraic" => SystemDef::Algebraic { domain: None },
        "trig" => SystemDef::Trig,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[sequences.noise]
kind = "combination"
alpha = 1.0
x = "eta"
beta = -0.5
y = { kind = "indicator", set = "squares" }

[families.perturbed]
kind = "bernstein"
j_min = 1
j_max = 101
zero_at_origin = true
eta = "eta"

[korovkin]
method = "zero_one"
family = "perturbed"
system = "algebraic"
targets = ["sin_pi", { kind = "abs_shift", c = 0.25 }]
j_range = { kind = "linear", start = 0, end = 101, step = 1 }
z_points = [0.0, 1.0]

[density]
method = { kind = "periodic", name = "p", pattern = [0, 1] }
set = "evens"
expect = 0
"#;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn resolves_references() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let r = cfg.resolver();
        let fam = r.family(&Ref::Name("perturbed".into())).unwrap();
        assert_eq!(fam.scale_factor(100), 101.0);
        let x = r.sequence(&Ref::Name("noise".into())).unwrap();
        assert_eq!(x.value(4), 3.5);
        assert_eq!(x.value(3), 0.0);
        let m = r.method(&cfg.density.as_ref().unwrap().method).unwrap();
        assert_eq!(m.coefficient(3), 1.0);
    }

    #[test]
    fn errors_name_the_key() {
        let err = RunConfig::parse("[density]\nmethod = \"abel\"\nsett = \"evens\"\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("sett"), "{text}");
        let err = RunConfig::parse("[pstat]\nmethod = \"abel\"\nsequence = \"eta\"\nlimit = \"zero\"\n")
            .unwrap_err();
        assert!(err.to_string().contains("pstat.limit"), "{err}");
    }

    #[test]
    fn reference_cycles_are_caught() {
        let cfg = RunConfig::parse(
            "[sets.a]\nkind = \"complement\"\nset = \"b\"\n[sets.b]\nkind = \"complement\"\nset = \"a\"\n",
        )
        .unwrap();
        assert!(cfg.resolver().set(&Ref::Name("a".into())).is_err());
    }
}
