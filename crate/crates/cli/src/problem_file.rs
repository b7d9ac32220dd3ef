//! TOML problem files: a textual serialization of [`OcpProblem`].

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use ocp_relax::polyalg::{parse_poly, PolyError, Polynomial, VariableBlock};
use ocp_relax::problem::{OcpProblem, ProblemError, SemialgebraicSet, TargetSet, TimeMode};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("problem file does not parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("in `{field}`: {source}")]
    Poly { field: String, source: PolyError },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Solver-related settings a problem file may carry; command-line flags
/// override them.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOptions {
    #[serde(default)]
    pub add_ball_constraint: bool,
    pub r_min: Option<u32>,
    pub r_max: Option<u32>,
    pub tol: Option<f64>,
    pub certificate_threshold: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    variables: Variables,
    dynamics: Dynamics,
    cost: Cost,
    sets: Sets,
    initial: Initial,
    time: Time,
    #[serde(default)]
    options: FileOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Variables {
    n: usize,
    m: usize,
    state_names: Option<Vec<String>>,
    control_names: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Dynamics {
    f: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Cost {
    h: String,
    #[serde(rename = "H", default)]
    big_h: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetSection {
    #[serde(default)]
    inequalities: Vec<String>,
    #[serde(rename = "box")]
    bounds: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    point: Option<Vec<f64>>,
    #[serde(default)]
    inequalities: Vec<String>,
    #[serde(rename = "box")]
    bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Sets {
    x: SetSection,
    u: SetSection,
    k: TargetSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Initial {
    x0: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Time {
    /// "fixed", "free", or "free-homogeneous".
    mode: String,
    /// The horizon `T` (fixed) or its upper bound `T0` (free).
    horizon: f64,
}

/// A parsed and validated problem together with its file-level options.
#[derive(Debug)]
pub struct LoadedProblem {
    pub problem: OcpProblem,
    pub options: FileOptions,
}

/// Read, parse, and validate a TOML problem file.
pub fn load(path: &Path) -> Result<LoadedProblem, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ProblemFile = toml::from_str(&text)?;
    build(file)
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn build(file: ProblemFile) -> Result<LoadedProblem, LoadError> {
    let n = file.variables.n;
    let m = file.variables.m;
    let state_names = file
        .variables
        .state_names
        .unwrap_or_else(|| (1..=n).map(|i| format!("x{i}")).collect());
    let control_names = file
        .variables
        .control_names
        .unwrap_or_else(|| (1..=m).map(|j| format!("u{j}")).collect());
    if state_names.len() != n || control_names.len() != m {
        return Err(LoadError::Invalid(format!(
            "expected {n} state and {m} control names, got {} and {}",
            state_names.len(),
            control_names.len()
        )));
    }
    let mut names = vec!["t".to_string()];
    names.extend(state_names);
    names.extend(control_names);
    for name in &names[1..] {
        if !valid_name(name) {
            return Err(LoadError::Invalid(format!("invalid variable name `{name}`")));
        }
    }
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != names.len() {
        return Err(LoadError::Invalid("variable names must be distinct (and none may be `t`)".into()));
    }
    let block = Arc::new(VariableBlock { has_time: true, n, m, names });

    let poly = |field: &str, text: &str| -> Result<Polynomial, LoadError> {
        parse_poly(text, &block).map_err(|source| LoadError::Poly {
            field: field.to_string(),
            source,
        })
    };

    if file.dynamics.f.len() != n {
        return Err(LoadError::Invalid(format!(
            "dynamics lists {} components for {n} states",
            file.dynamics.f.len()
        )));
    }
    let f = file
        .dynamics
        .f
        .iter()
        .enumerate()
        .map(|(k, s)| poly(&format!("dynamics.f[{k}]"), s))
        .collect::<Result<Vec<_>, _>>()?;

    let h = poly("cost.h", &file.cost.h)?;
    let big_h = match &file.cost.big_h {
        Some(s) => poly("cost.H", s)?,
        None => Polynomial::zero(block.clone()),
    };
    for j in 0..m {
        if !big_h.independent_of(block.control_index(j)) {
            return Err(LoadError::Invalid(
                "terminal cost H must be a function of the state only".into(),
            ));
        }
    }
    if !big_h.independent_of(0) {
        return Err(LoadError::Invalid(
            "terminal cost H must be a function of the state only".into(),
        ));
    }

    let parse_set = |label: &str, section: &SetSection, dim: usize| -> Result<SemialgebraicSet, LoadError> {
        if section.bounds.len() != dim {
            return Err(LoadError::Invalid(format!(
                "sets.{label}.box lists {} intervals for dimension {dim}",
                section.bounds.len()
            )));
        }
        let inequalities = section
            .inequalities
            .iter()
            .enumerate()
            .map(|(j, s)| poly(&format!("sets.{label}.inequalities[{j}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SemialgebraicSet::new(
            dim,
            inequalities,
            section.bounds.iter().map(|&[lo, hi]| (lo, hi)).collect(),
        ))
    };

    let x_set = parse_set("x", &file.sets.x, n)?;
    let u_set = parse_set("u", &file.sets.u, m)?;

    let k_set = match (&file.sets.k.point, &file.sets.k.bounds) {
        (Some(point), None) => {
            if !file.sets.k.inequalities.is_empty() {
                return Err(LoadError::Invalid(
                    "sets.k must give either a point or inequalities with a box, not both".into(),
                ));
            }
            if point.len() != n {
                return Err(LoadError::Invalid(format!(
                    "sets.k.point has {} coordinates for dimension {n}",
                    point.len()
                )));
            }
            TargetSet::Point(point.clone())
        }
        (None, Some(_)) => {
            let section = SetSection {
                inequalities: file.sets.k.inequalities.clone(),
                bounds: file.sets.k.bounds.clone().unwrap(),
            };
            TargetSet::Set(parse_set("k", &section, n)?)
        }
        _ => {
            return Err(LoadError::Invalid(
                "sets.k needs exactly one of `point` or a `box` (with optional inequalities)".into(),
            ))
        }
    };

    let time = match file.time.mode.as_str() {
        "fixed" => TimeMode::FixedHorizon(file.time.horizon),
        "free" => TimeMode::FreeHorizon(file.time.horizon),
        "free-homogeneous" => TimeMode::FreeHomogeneous(file.time.horizon),
        other => {
            return Err(LoadError::Invalid(format!(
                "time.mode `{other}` is not one of fixed, free, free-homogeneous"
            )))
        }
    };

    let problem = OcpProblem {
        n,
        m,
        block,
        f,
        h,
        big_h,
        x_set,
        u_set,
        k_set,
        x0: file.initial.x0,
        time,
        add_ball_constraint: file.options.add_ball_constraint,
    };
    problem.validate()?;
    Ok(LoadedProblem { problem, options: file.options })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn load_str(text: &str) -> Result<LoadedProblem, LoadError> {
        let mut file = tempfile_path();
        write!(file.1, "{text}").unwrap();
        load(&file.0)
    }

    fn tempfile_path() -> (std::path::PathBuf, std::fs::File) {
        let dir = std::env::temp_dir();
        let path = dir.join(format!(
            "ocprelax-test-{}-{:?}.toml",
            std::process::id(),
            std::thread::current().id()
        ));
        let file = std::fs::File::create(&path).unwrap();
        (path, file)
    }

    const DOUBLE_INTEGRATOR: &str = r#"
[variables]
n = 2
m = 1

[dynamics]
f = ["x2", "u1"]

[cost]
h = "1"

[sets.x]
inequalities = ["x2 + 1"]
box = [[-3, 3], [-1, 2]]

[sets.u]
box = [[-1, 1]]

[sets.k]
point = [0, 0]

[initial]
x0 = [1, 0]

[time]
mode = "free-homogeneous"
horizon = 6.0
"#;

    #[test]
    fn loads_double_integrator() {
        let loaded = load_str(DOUBLE_INTEGRATOR).unwrap();
        assert_eq!(loaded.problem.n, 2);
        assert_eq!(loaded.problem.m, 1);
        assert!(matches!(loaded.problem.k_set, TargetSet::Point(_)));
        assert_eq!(loaded.problem.time, TimeMode::FreeHomogeneous(6.0));
        assert!(!loaded.options.add_ball_constraint);
    }

    #[test]
    fn rejects_control_in_terminal_cost() {
        let text = DOUBLE_INTEGRATOR.replace("h = \"1\"", "h = \"1\"\nH = \"u1\"");
        match load_str(&text) {
            Err(LoadError::Invalid(msg)) => assert!(msg.contains("state only")),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_variable_with_position() {
        let text = DOUBLE_INTEGRATOR.replace("f = [\"x2\", \"u1\"]", "f = [\"x3\", \"u1\"]");
        match load_str(&text) {
            Err(LoadError::Poly { field, .. }) => assert_eq!(field, "dynamics.f[0]"),
            other => panic!("expected polynomial error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let text = DOUBLE_INTEGRATOR.replace("box = [[-3, 3], [-1, 2]]", "box = [[-3, 3]]");
        assert!(matches!(load_str(&text), Err(LoadError::Invalid(_))));
    }

    #[test]
    fn custom_names_parse_in_polynomials() {
        let text = DOUBLE_INTEGRATOR
            .replace("m = 1", "m = 1\nstate_names = [\"pos\", \"vel\"]\ncontrol_names = [\"a\"]")
            .replace("f = [\"x2\", \"u1\"]", "f = [\"vel\", \"a\"]")
            .replace("inequalities = [\"x2 + 1\"]", "inequalities = [\"vel + 1\"]");
        let loaded = load_str(&text).unwrap();
        assert_eq!(loaded.problem.block.names[1], "pos");
    }
}
