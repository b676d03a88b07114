//! JSON problem files (`"version": 1`) and control files.
//!
//! Nonlinear dynamics are only reachable by name (`{"catalog": "..."}`);
//! everything else in a file is linear in the state.

use std::path::Path;
use std::sync::Arc;

use delaypmp_core::fde::{ControlSet, ControlledProblem, Dynamics, TerminalFn};
use delaypmp_core::problems::{self, DensityTerm, LinearDynamics, LinearSpec, PolyMat};
use delaypmp_core::{Mesh, PiecewiseFn};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub version: u32,
    pub name: String,
    /// State dimension `n`.
    pub n: usize,
    /// Control dimension `d`.
    pub d: usize,
    pub horizon: f64,
    pub delay: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakpoints: Vec<f64>,
    pub dynamics: DynamicsConfig,
    pub history: HistoryConfig,
    pub controls: ControlsConfig,
    pub terminal: Vec<TerminalConfig>,
    #[serde(default)]
    pub n_ineq: usize,
    #[serde(default)]
    pub n_eq: usize,
    /// Piecewise-constant reference control: `[t, value]` pieces, first at 0.
    pub reference: Vec<(f64, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsConfig {
    Catalog(String),
    Linear(LinearConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
    #[serde(default)]
    pub density: Vec<DensityConfig>,
    /// `B(t) = sum_p t^p B_p`, each `n x d` row-major.
    pub control: Vec<Vec<f64>>,
    /// `c(t) = sum_p t^p c_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<Vec<f64>>>,
}

/// `A(t) phi(-delay)` with `A(t) = sum_p t^p coeffs[p]` (`n x n` row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub delay: f64,
    pub coeffs: Vec<Vec<f64>>,
}

/// `t^t_power theta^theta_power matrix` inside `int_{-r}^0 C(t, theta) phi(theta) dtheta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(default)]
    pub t_power: u32,
    #[serde(default)]
    pub theta_power: u32,
    pub matrix: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryConfig {
    Constant(Vec<f64>),
    /// `phi(theta) = sum_p theta^p c_p`.
    Polynomial(Vec<Vec<f64>>),
    /// `[theta, value]` samples, linearly interpolated; must cover `[-r, 0]`.
    Samples(Vec<(f64, Vec<f64>)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlsConfig {
    Finite(Vec<Vec<f64>>),
    Box { lower: Vec<f64>, upper: Vec<f64>, grid: usize },
}

/// `g(x) = constant + linear . x + x^T quadratic x / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    #[serde(default)]
    pub constant: f64,
    pub linear: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<Vec<f64>>,
}

/// A problem ready to run, with its reference control.
#[derive(Clone, Debug)]
pub struct Loaded {
    /// Catalog name or file path.
    pub source: String,
    pub problem: ControlledProblem,
    pub reference: PiecewiseFn,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn check_len(what: &str, v: &[f64], want: usize) -> Result<(), CliError> {
    if v.len() != want {
        return Err(CliError::Config(format!("{what}: expected {want} entries, found {}", v.len())));
    }
    Ok(())
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<ProblemConfig, CliError> {
        let cfg: ProblemConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("schema: {e}")))?;
        if cfg.version != VERSION {
            return Err(CliError::Config(format!("unsupported version {} (expected {VERSION})", cfg.version)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ProblemConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        ProblemConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn mesh(&self, h: Option<f64>) -> Result<Mesh, CliError> {
        let mesh = Mesh::new(self.horizon, self.delay, h.unwrap_or(self.h)).map_err(config_err)?;
        mesh.with_breakpoints(&self.breakpoints).map_err(config_err)
    }

    fn dynamics(&self, mesh: &Mesh) -> Result<Arc<dyn Dynamics>, CliError> {
        let (n, d) = (self.n, self.d);
        match &self.dynamics {
            DynamicsConfig::Catalog(name) => {
                let dyn_ = problems::nonlinear_dynamics(name, mesh).map_err(config_err)?;
                if dyn_.state_dim() != n || dyn_.control_dim() != d {
                    return Err(CliError::Config(format!(
                        "dynamics {name} has n = {}, d = {}",
                        dyn_.state_dim(),
                        dyn_.control_dim()
                    )));
                }
                Ok(dyn_)
            }
            DynamicsConfig::Linear(l) => {
                let poly = |rows, cols, coeffs: &Vec<Vec<f64>>| PolyMat { rows, cols, coeffs: coeffs.clone() };
                let spec = LinearSpec {
                    n,
                    d,
                    atoms: l.atoms.iter().map(|a| (a.delay, poly(n, n, &a.coeffs))).collect(),
                    density: l
                        .density
                        .iter()
                        .map(|t| DensityTerm { t_power: t.t_power, theta_power: t.theta_power, matrix: t.matrix.clone() })
                        .collect(),
                    control: poly(n, d, &l.control),
                    drift: l.drift.as_ref().map(|c| poly(n, 1, c)),
                };
                Ok(Arc::new(LinearDynamics::new(spec, mesh).map_err(config_err)?))
            }
        }
    }

    fn history(&self, mesh: &Mesh) -> Result<PiecewiseFn, CliError> {
        let n = self.n;
        let m = mesh.delay_steps() as i64;
        let h = mesh.h();
        let mut values = Vec::with_capacity((m as usize + 1) * n);
        let mut slopes = Vec::with_capacity((m as usize + 1) * n);
        match &self.history {
            HistoryConfig::Constant(v) => {
                check_len("history constant", v, n)?;
                for _ in -m..=0 {
                    values.extend_from_slice(v);
                    slopes.extend(std::iter::repeat(0.0).take(n));
                }
            }
            HistoryConfig::Polynomial(c) => {
                for (p, cp) in c.iter().enumerate() {
                    check_len(&format!("history polynomial coefficient {p}"), cp, n)?;
                }
                for i in -m..=0 {
                    let th = i as f64 * h;
                    for j in 0..n {
                        let (mut v, mut dv) = (0.0, 0.0);
                        for cp in c.iter().rev() {
                            dv = dv * th + v;
                            v = v * th + cp[j];
                        }
                        values.push(v);
                        slopes.push(dv);
                    }
                }
            }
            HistoryConfig::Samples(s) => {
                if s.len() < 2 || s.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(CliError::Config("history samples need at least two increasing thetas".into()));
                }
                if s[0].0 > -self.delay + 1e-12 || s[s.len() - 1].0 < -1e-12 {
                    return Err(CliError::Config("history samples must cover [-r, 0]".into()));
                }
                for (th, v) in s {
                    check_len(&format!("history sample at theta = {th}"), v, n)?;
                }
                for i in -m..=0 {
                    let th = i as f64 * h;
                    let k = s.windows(2).position(|w| th <= w[1].0 + 1e-12).unwrap_or(s.len() - 2);
                    let (a, b) = (&s[k], &s[k + 1]);
                    let w = ((th - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
                    for j in 0..n {
                        values.push(a.1[j] + w * (b.1[j] - a.1[j]));
                    }
                }
                // The interpolant has kinks; leave slopes to the solver.
                return Ok(PiecewiseFn::from_nodes(h, -m, n, values));
            }
        }
        let left = slopes.clone();
        Ok(PiecewiseFn::from_nodes(h, -m, n, values).with_slopes(slopes, left))
    }

    fn controls(&self) -> Result<ControlSet, CliError> {
        Ok(match &self.controls {
            ControlsConfig::Finite(v) => {
                if v.is_empty() {
                    return Err(CliError::Config("controls: finite set is empty".into()));
                }
                for u in v {
                    check_len("control value", u, self.d)?;
                }
                ControlSet::Finite(v.clone())
            }
            ControlsConfig::Box { lower, upper, grid } => {
                check_len("controls box lower", lower, self.d)?;
                check_len("controls box upper", upper, self.d)?;
                if lower.iter().zip(upper).any(|(a, b)| a > b) || *grid == 0 {
                    return Err(CliError::Config("controls box: need lower <= upper and grid >= 1".into()));
                }
                ControlSet::Box { lower: lower.clone(), upper: upper.clone(), grid: *grid }
            }
        })
    }

    fn terminal(&self) -> Result<Vec<TerminalFn>, CliError> {
        self.terminal
            .iter()
            .enumerate()
            .map(|(j, g)| {
                check_len(&format!("terminal[{j}].linear"), &g.linear, self.n)?;
                Ok(match &g.quadratic {
                    None => TerminalFn::Affine { constant: g.constant, linear: g.linear.clone() },
                    Some(q) => {
                        check_len(&format!("terminal[{j}].quadratic"), q, self.n * self.n)?;
                        TerminalFn::Quadratic { constant: g.constant, linear: g.linear.clone(), quadratic: q.clone() }
                    }
                })
            })
            .collect()
    }

    /// Builds the problem, with `h` overriding the file's step.
    pub fn build(&self, source: &str, h: Option<f64>) -> Result<Loaded, CliError> {
        let mesh = self.mesh(h)?;
        let problem = ControlledProblem {
            name: self.name.clone(),
            dynamics: self.dynamics(&mesh)?,
            history: self.history(&mesh)?,
            controls: self.controls()?,
            terminal: self.terminal()?,
            n_ineq: self.n_ineq,
            n_eq: self.n_eq,
            mesh,
        };
        problem.validate().map_err(config_err)?;
        let reference = pieces_control(&problem.mesh, &self.reference, self.d)?;
        Ok(Loaded { source: source.to_string(), problem, reference })
    }
}

fn pieces_control(mesh: &Mesh, pieces: &[(f64, Vec<f64>)], d: usize) -> Result<PiecewiseFn, CliError> {
    for (t, v) in pieces {
        check_len(&format!("control piece at t = {t}"), v, d)?;
    }
    PiecewiseFn::piecewise_constant(mesh, pieces).map_err(config_err)
}

/// `--problem`: a catalog name, else a path to a JSON file.
pub fn load_problem(spec: &str, h: Option<f64>) -> Result<Loaded, CliError> {
    if let Some(e) = problems::by_name(spec) {
        let problem = e.problem(h).map_err(config_err)?;
        let reference = e.reference_control(&problem.mesh).map_err(config_err)?;
        return Ok(Loaded { source: spec.to_string(), problem, reference });
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{spec} is neither a catalog problem ({}) nor a file",
            problems::names().join(", ")
        )));
    }
    ProblemConfig::load(path)?.build(spec, h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlFile {
    pub version: u32,
    pub pieces: Vec<(f64, Vec<f64>)>,
}

/// `--control`: `reference`, `const:v1,v2,...`, or a control file.
pub fn load_control(spec: &str, loaded: &Loaded) -> Result<PiecewiseFn, CliError> {
    let p = &loaded.problem;
    if spec == "reference" {
        return Ok(loaded.reference.clone());
    }
    if let Some(vals) = spec.strip_prefix("const:") {
        let v = parse_list(vals)?;
        check_len("constant control", &v, p.control_dim())?;
        return Ok(p.constant_control(&v));
    }
    let text = std::fs::read_to_string(spec).map_err(|e| CliError::Config(format!("control {spec}: {e}")))?;
    let file: ControlFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("control {spec}: schema: {e}")))?;
    if file.version != VERSION {
        return Err(CliError::Config(format!("control {spec}: unsupported version {}", file.version)));
    }
    pieces_control(&p.mesh, &file.pieces, p.control_dim())
}

/// Comma-separated floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::Config(format!("not a number: {x:?}"))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaFile {
    pub version: u32,
    pub lambda: Vec<f64>,
}

/// Where `check-pmp` takes its multipliers from.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaSource {
    Given(Vec<f64>),
    Search,
}

/// `--lambda`: `search`, a comma list, or a JSON file `{"version": 1, "lambda": [...]}`.
pub fn load_lambda(spec: Option<&str>, len: usize) -> Result<LambdaSource, CliError> {
    let v = match spec {
        None => {
            let mut e = vec![0.0; len];
            e[0] = 1.0;
            e
        }
        Some("search") => return Ok(LambdaSource::Search),
        Some(s) if Path::new(s).exists() => {
            let text = std::fs::read_to_string(s).map_err(|e| CliError::Config(format!("lambda {s}: {e}")))?;
            let f: LambdaFile =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("lambda {s}: schema: {e}")))?;
            f.lambda
        }
        Some(s) => parse_list(s)?,
    };
    check_len("lambda (1 + n_i + n_e)", &v, len)?;
    Ok(LambdaSource::Given(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FEEDBACK: &str = r#"{
        "version": 1,
        "name": "feedback_file",
        "n": 1, "d": 1,
        "horizon": 2.0, "delay": 1.0, "h": 0.01,
        "dynamics": {"linear": {"atoms": [{"delay": 1.0, "coeffs": [[1.0]]}], "control": [[1.0]]}},
        "history": {"constant": [0.0]},
        "controls": {"box": {"lower": [-1.0], "upper": [1.0], "grid": 21}},
        "terminal": [{"linear": [1.0]}],
        "reference": [[0.0, [1.0]]]
    }"#;

    #[test]
    fn file_matches_catalog_problem() {
        let cfg = ProblemConfig::from_json(FEEDBACK).unwrap();
        let a = cfg.build("file", None).unwrap();
        let b = load_problem("scalar_delay_feedback", Some(0.01)).unwrap();
        let xa = delaypmp_core::fde::solve(&a.problem, &a.reference).unwrap();
        let xb = delaypmp_core::fde::solve(&b.problem, &b.reference).unwrap();
        assert_eq!(xa.terminal(), xb.terminal());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut cfg = ProblemConfig::from_json(FEEDBACK).unwrap();
        cfg.h = 0.1 / 3.0 * 0.3;
        cfg.history = HistoryConfig::Polynomial(vec![vec![0.1], vec![1.0 / 3.0]]);
        let again = ProblemConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn misaligned_delay_is_rejected() {
        let text = FEEDBACK.replace(r#""delay": 1.0, "h": 0.01"#, r#""delay": 0.3, "h": 0.04"#);
        let cfg = ProblemConfig::from_json(&text).unwrap();
        let err = cfg.build("file", None).unwrap_err();
        assert!(err.to_string().contains("r/h not integer"), "{err}");
        // 0.3 / 0.02 = 15 is fine as far as r is concerned.
        let cfg = ProblemConfig::from_json(&text.replace(r#""h": 0.04"#, r#""h": 0.02"#)).unwrap();
        assert!(cfg.mesh(None).is_ok());
    }

    #[test]
    fn unknown_fields_and_versions_fail() {
        let err = ProblemConfig::from_json(&FEEDBACK.replace(r#""n": 1"#, r#""n": 1, "m": 2"#)).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        let err = ProblemConfig::from_json(&FEEDBACK.replace(r#""version": 1"#, r#""version": 2"#)).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }
}
