//! Run configuration: defaults per task, JSON merge, canonical hashing.

use std::fmt;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use hardylab::problems::Profile;
use hardylab::{ChartKind, DomainSpec, MeshParams, QuotientProblem, ScalarField, SolverParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Version string mixed into every cache key.
pub const CODE_VERSION: &str = concat!("hardylab-cli ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Mu,
    Sweep,
    LambdaStar,
    ScalingBound,
    ImprovedHardy,
    ExteriorScan,
    BarrierCheck,
    MeshInfo,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Mu => "mu",
            Task::Sweep => "sweep",
            Task::LambdaStar => "lambda-star",
            Task::ScalingBound => "scaling-bound",
            Task::ImprovedHardy => "improved-hardy",
            Task::ExteriorScan => "exterior-scan",
            Task::BarrierCheck => "barrier-check",
            Task::MeshInfo => "mesh-info",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sweep axes; each task reads the ones it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub k: Vec<f64>,
}

/// Task-specific scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskOptions {
    pub eps_detect: f64,
    pub bisect_tol: f64,
    pub bracket: [f64; 2],
    pub chart: ChartKind,
    pub distance_term: bool,
    pub profile: Profile,
    pub hole_radius: f64,
    /// Mesh size relative to the domain radius (improved-hardy, exterior-scan).
    pub h_rel: f64,
    pub grid: usize,
}

impl Default for TaskOptions {
    fn default() -> Self {
        Self {
            eps_detect: 0.02,
            bisect_tol: 1e-3,
            bracket: [0.0, 10.0],
            chart: ChartKind::SphereExterior,
            distance_term: true,
            profile: Profile::Bubble,
            hole_radius: 1.0,
            h_rel: 0.2,
            grid: 64,
        }
    }
}

/// Everything a run depends on. The quotient-problem fields are flattened into
/// the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Task,
    pub domain: DomainSpec,
    pub n: usize,
    pub lambda: f64,
    pub p: ScalarField,
    pub q: ScalarField,
    pub eta: ScalarField,
    pub mesh: MeshParams,
    pub solver: SolverParams,
    pub sweep: Axes,
    pub options: TaskOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "yes")]
    pub cache: bool,
    #[serde(default)]
    pub verbosity: i8,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    /// Defaults for `task`; every field is explicit so the canonical form
    /// does not depend on how a value was supplied.
    pub fn defaults(task: Task) -> Self {
        let mut c = Self {
            subcommand: task,
            domain: DomainSpec::half_disk(0.5),
            n: 2,
            lambda: 0.0,
            p: ScalarField::one(),
            q: ScalarField::one(),
            eta: ScalarField::r2(),
            mesh: MeshParams::new(0.12, 2.0, 3),
            solver: SolverParams::default(),
            sweep: Axes::default(),
            options: TaskOptions::default(),
            out: None,
            cache: true,
            verbosity: 0,
        };
        match task {
            Task::Sweep => c.sweep.lambda = vec![-10.0, 0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            Task::LambdaStar => {}
            Task::ScalingBound => c.sweep.eps = vec![0.4, 0.2, 0.1, 0.05, 0.025],
            Task::ImprovedHardy => {
                c.sweep.r = vec![0.1, 0.05];
                c.mesh.refinements = 4;
            }
            Task::ExteriorScan => {
                c.sweep.r = vec![0.3, 0.8, 2.0, 5.0, 12.0];
                c.mesh = MeshParams::new(0.125, 1.0, 3);
                c.options.h_rel = 0.125;
            }
            Task::BarrierCheck => {
                c.lambda = 1.0;
                c.sweep.a = vec![-0.99, -0.9, -0.75, -0.6, -0.51];
                c.sweep.k = vec![1.0];
                c.sweep.r = vec![0.4, 0.2, 0.1, 0.05];
                c.options.chart = ChartKind::SphereInterior;
            }
            Task::Mu | Task::MeshInfo => {}
        }
        c
    }

    /// Parses a JSON config, filling keys it omits from the task defaults.
    pub fn from_json(text: &str, expected: Option<Task>) -> Result<Self> {
        let user: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let Value::Object(map) = &user else { bail!("config must be a JSON object") };
        let task: Task = match map.get("subcommand") {
            Some(v) => serde_json::from_value(v.clone()).context("invalid value for field `subcommand`")?,
            None => expected.context("config lacks the field `subcommand`")?,
        };
        if let Some(e) = expected {
            if e != task {
                bail!("config is for `{task}` but the command is `{e}` (field `subcommand`)");
            }
        }
        let mut base = serde_json::to_value(Self::defaults(task))?;
        merge(&mut base, user);
        let cfg: Self = serde_json::from_value(base).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn problem(&self) -> QuotientProblem {
        QuotientProblem {
            domain: self.domain.clone(),
            n: self.n,
            lambda: self.lambda,
            p: self.p,
            q: self.q,
            eta: self.eta,
            mesh: self.mesh.clone(),
            solver: self.solver.clone(),
        }
    }

    /// Checks that do not need any numerics.
    pub fn validate(&self) -> Result<()> {
        self.domain.validate().context("invalid value for field `domain`")?;
        if !(self.mesh.h > 0.0) {
            bail!("invalid value for field `mesh.h`: {} must be positive", self.mesh.h);
        }
        if !(self.mesh.beta >= 0.0) {
            bail!("invalid value for field `mesh.beta`: {} must be non-negative", self.mesh.beta);
        }
        if !(self.solver.tol > 0.0) {
            bail!("invalid value for field `solver.tol`: must be positive");
        }
        if self.n != 2 {
            bail!("invalid value for field `n`: meshed runs are planar (2), got {}", self.n);
        }
        let need = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                bail!("field `sweep.{name}` must not be empty for `{}`", self.subcommand);
            }
            if v.iter().any(|x| !x.is_finite()) {
                bail!("field `sweep.{name}` holds a non-finite value");
            }
            Ok(())
        };
        match self.subcommand {
            Task::Sweep => need("lambda", &self.sweep.lambda)?,
            Task::ScalingBound => need("eps", &self.sweep.eps)?,
            Task::ImprovedHardy | Task::ExteriorScan => need("r", &self.sweep.r)?,
            Task::BarrierCheck => {
                need("a", &self.sweep.a)?;
                need("k", &self.sweep.k)?;
                need("r", &self.sweep.r)?;
            }
            Task::Mu | Task::LambdaStar | Task::MeshInfo => {}
        }
        Ok(())
    }

    /// The fields that determine results, serialized with sorted keys.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.cache = true;
        c.verbosity = 0;
        // serde_json maps are ordered by key, so this is independent of the
        // order in which the user wrote the keys.
        let v = serde_json::to_value(&c).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical config and [`CODE_VERSION`], hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(CODE_VERSION.as_bytes());
        h.update(b"\n");
        h.update(self.canonical().as_bytes());
        hex::encode(h.finalize())
    }
}

/// Recursive object merge; non-object values in `over` replace those in `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // Tagged enums are replaced whole: their variants have different fields.
                    Some(slot) if k != "domain" && k != "profile" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// `one`, `r2`, `1+r2`, `1+x1` or a constant.
pub fn parse_field(name: &str, s: &str) -> Result<ScalarField> {
    Ok(match s.trim() {
        "one" | "1" => ScalarField::one(),
        "r2" => ScalarField::r2(),
        "1+r2" | "one_plus_r2" => ScalarField::one_plus_r2(),
        "1+x1" | "one_plus_x1" => ScalarField::one_plus_x1(),
        other => match other.parse::<f64>() {
            Ok(c) => ScalarField::constant(c),
            Err(_) => bail!("invalid value for field `{name}`: '{s}' (expected one, r2, 1+r2, 1+x1 or a number)"),
        },
    })
}

pub fn parse_chart(s: &str) -> Result<ChartKind> {
    serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|_| {
        anyhow::anyhow!("invalid value for field `chart`: '{s}' (expected plane, sphere_exterior or sphere_interior)")
    })
}

/// Builds a domain from its kind name and the shape flags.
pub fn parse_domain(kind: &str, r: f64, theta: Option<f64>, chart: Option<ChartKind>, hole: f64) -> Result<DomainSpec> {
    Ok(match kind.replace('-', "_").as_str() {
        "half_disk" => DomainSpec::half_disk(r),
        "sector" => DomainSpec::sector(theta.context("domain `sector` needs --theta")?, r),
        "fermi_half_ball" => DomainSpec::fermi_half_ball(chart.unwrap_or(ChartKind::SphereExterior), r),
        "exterior_cap" => DomainSpec::ExteriorCap { r, hole_radius: hole },
        other => bail!(
            "invalid value for field `domain`: unknown kind '{other}' (expected half_disk, sector, fermi_half_ball or exterior_cap)"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order_and_presentation_fields() {
        let a = RunConfig::from_json(r#"{"subcommand":"mu","lambda":1.5,"mesh":{"h":0.2,"refinements":1}}"#, None).unwrap();
        let b = RunConfig::from_json(
            r#"{"mesh":{"refinements":1,"h":0.2},"cache":false,"lambda":1.5,"subcommand":"mu","verbosity":2}"#,
            None,
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_json(r#"{"subcommand":"mu","lambda":1.25,"mesh":{"h":0.2,"refinements":1}}"#, None).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_json(r#"{"subcommand":"mu","lamda":1.0}"#, None).unwrap_err();
        assert!(format!("{e:#}").contains("lamda"));
        assert!(RunConfig::from_json(r#"{"subcommand":"mu","mesh":{"h":0.1,"bogus":1}}"#, None).is_err());
    }

    #[test]
    fn serialization_round_trips() {
        for t in [Task::Mu, Task::Sweep, Task::BarrierCheck, Task::ExteriorScan, Task::ImprovedHardy] {
            let c = RunConfig::defaults(t);
            let text = serde_json::to_string(&c).unwrap();
            assert_eq!(RunConfig::from_json(&text, Some(t)).unwrap(), c);
        }
    }

    #[test]
    fn bad_domain_names_the_field() {
        let e = parse_domain("disk", 0.5, None, None, 1.0).unwrap_err();
        assert!(e.to_string().contains("`domain`"));
        assert!(parse_field("p", "2.5").unwrap().is_constant());
        assert!(parse_field("q", "x").is_err());
    }
}
