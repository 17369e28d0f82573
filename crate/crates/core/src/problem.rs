//! JSON problem files (`"format": 1`) and machine-readable reports.
//!
//! Complex numbers are `{"re": .., "im": ..}` (a bare number is read as a
//! real value); matrices are row-major nested arrays. Output objects use
//! sorted keys so identical inputs give byte-identical files.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMat, RankDecision, C64, DEFAULT_RANK_TOL};
use crate::model::{DelayAtom, DirectionOperator, LinearRfde, ParametrizedFamily};
use crate::spectral::{JordanSpec, SpectralBases};
use crate::synthesis::DEFAULT_GRID;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
enum JsonComplex {
    Real(f64),
    Pair {
        re: f64,
        #[serde(default)]
        im: f64,
    },
}

impl From<JsonComplex> for C64 {
    fn from(z: JsonComplex) -> C64 {
        match z {
            JsonComplex::Real(x) => c64(x, 0.0),
            JsonComplex::Pair { re, im } => c64(re, im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonAtom {
    tau: f64,
    coeff: Vec<Vec<JsonComplex>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDirection {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    atoms: Vec<JsonAtom>,
    #[serde(default)]
    derivative_atoms: Vec<JsonAtom>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonProblem {
    format: u64,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    tau_max: Option<f64>,
    atoms: Vec<JsonAtom>,
    #[serde(default)]
    lambdas: Vec<JsonComplex>,
    #[serde(default)]
    real: Option<bool>,
    #[serde(default)]
    directions: Option<Vec<JsonDirection>>,
    #[serde(default)]
    rank_tol: Option<f64>,
    #[serde(default)]
    grid: Option<usize>,
    // written by `synthesize`, ignored on input
    #[serde(default)]
    #[allow(dead_code)]
    synthesis: Option<Value>,
    #[serde(default)]
    #[allow(dead_code)]
    comment: Option<Value>,
}

/// A validated problem file.
#[derive(Clone, Debug)]
pub struct Problem {
    pub rfde: LinearRfde,
    pub lambdas: Vec<C64>,
    /// Present iff the file has a `directions` array (possibly empty).
    pub family: Option<ParametrizedFamily>,
    pub real: bool,
    pub rank_tol: f64,
    pub grid: usize,
}

fn to_matrix(rows: &[Vec<JsonComplex>], n: usize, path: &str) -> Result<CMat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        let got: Vec<usize> = rows.iter().map(|r| r.len()).collect();
        return Err(Error::Parse(format!("{path}: expected a {n}x{n} matrix, got rows of lengths {got:?}")));
    }
    Ok(CMat::from_fn(n, n, |i, j| rows[i][j].into()))
}

fn to_atoms(atoms: &[JsonAtom], n: usize, path: &str) -> Result<Vec<DelayAtom>> {
    atoms
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let p = format!("{path}[{k}]");
            if !a.tau.is_finite() || a.tau < 0.0 {
                return Err(Error::Parse(format!("{p}.tau must be finite and nonnegative, got {}", a.tau)));
            }
            Ok(DelayAtom::new(a.tau, to_matrix(&a.coeff, n, &format!("{p}.coeff"))?))
        })
        .collect()
}

pub fn parse_problem_str(text: &str) -> Result<Problem> {
    let raw: JsonProblem = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if raw.format != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported format {}, expected {FORMAT_VERSION}", raw.format)));
    }
    if raw.atoms.is_empty() {
        return Err(Error::Parse("atoms: at least one delay atom is required".into()));
    }
    let n = raw.n.unwrap_or(raw.atoms[0].coeff.len());
    if n == 0 {
        return Err(Error::Parse("n must be positive".into()));
    }
    let atoms = to_atoms(&raw.atoms, n, "atoms")?;
    let rfde = LinearRfde::new(atoms, raw.tau_max).map_err(|e| Error::Parse(e.to_string()))?;
    let real = raw.real.unwrap_or_else(|| rfde.is_real());
    if real && !rfde.is_real() {
        return Err(Error::Parse("real: true but the atoms have complex entries".into()));
    }
    let rank_tol = raw.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::Parse(format!("rank_tol must lie in (0, 1), got {rank_tol}")));
    }
    let grid = raw.grid.unwrap_or(DEFAULT_GRID);
    if grid < 2 {
        return Err(Error::Parse(format!("grid must be at least 2, got {grid}")));
    }
    let family = match raw.directions {
        None => None,
        Some(dirs) => {
            let mut ops = vec![];
            let mut names = vec![];
            for (k, d) in dirs.iter().enumerate() {
                let p = format!("directions[{k}]");
                ops.push(DirectionOperator::new(
                    to_atoms(&d.atoms, n, &format!("{p}.atoms"))?,
                    to_atoms(&d.derivative_atoms, n, &format!("{p}.derivative_atoms"))?,
                ));
                names.push(d.name.clone().unwrap_or_else(|| format!("alpha_{}", k + 1)));
            }
            Some(ParametrizedFamily::new(rfde.clone(), ops, real)?.with_names(names)?)
        }
    };
    Ok(Problem { rfde, lambdas: raw.lambdas.into_iter().map(Into::into).collect(), family, real, rank_tol, grid })
}

pub fn parse_problem(path: &std::path::Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path)?;
    parse_problem_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn complex_json(z: C64) -> Value {
    json!({"re": z.re, "im": z.im})
}

pub fn matrix_json(m: &CMat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| complex_json(m[(i, j)])).collect())).collect())
}

fn atoms_json(atoms: &[DelayAtom]) -> Value {
    Value::Array(atoms.iter().map(|a| json!({"tau": a.tau, "coeff": matrix_json(&a.coeff)})).collect())
}

pub fn direction_json(name: &str, d: &DirectionOperator) -> Value {
    let mut v = json!({"name": name, "atoms": atoms_json(&d.atoms)});
    if !d.derivative_atoms.is_empty() {
        v["derivative_atoms"] = atoms_json(&d.derivative_atoms);
    }
    v
}

/// Problem file for `base` with the given directions; readable by `parse_problem`.
pub fn problem_json(
    base: &LinearRfde,
    lambdas: &[C64],
    names: &[String],
    directions: &[DirectionOperator],
    real: bool,
    rank_tol: f64,
    grid: usize,
) -> Value {
    json!({
        "format": FORMAT_VERSION,
        "n": base.n(),
        "tau_max": base.tau_max(),
        "atoms": atoms_json(base.atoms()),
        "lambdas": Value::Array(lambdas.iter().map(|&z| complex_json(z)).collect()),
        "real": real,
        "rank_tol": rank_tol,
        "grid": grid,
        "directions": Value::Array(names.iter().zip(directions).map(|(n, d)| direction_json(n, d)).collect()),
    })
}

pub fn decisions_json(decisions: &[RankDecision]) -> Value {
    serde_json::to_value(decisions).unwrap_or(Value::Null)
}

pub fn spec_json(spec: &JordanSpec) -> Value {
    json!({
        "eigenvalues": Value::Array(spec.eigenvalues.iter().map(|&z| complex_json(z)).collect()),
        "block_sizes": spec.block_sizes,
        "c": spec.c(),
        "delta": spec.delta(),
    })
}

pub fn bases_json(bases: &SpectralBases) -> Value {
    json!({
        "spec": spec_json(&bases.spec),
        "B": matrix_json(&bases.b),
        "phi0": matrix_json(&bases.phi0),
        "psi_star0": matrix_json(&bases.psi_star0),
        "psi0": matrix_json(&bases.psi0),
        "gram": matrix_json(&bases.gram),
        "gram_condition": bases.gram_condition,
        "tau_max": bases.tau_max,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Any serializable report as a JSON value.
pub fn report_json<T: Serialize>(r: &T) -> Value {
    serde_json::to_value(r).unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = r#"{"format": 1, "atoms": [{"tau": 0, "coeff": [[1]]}, {"tau": 1, "coeff": [[-1]]}], "lambdas": [0]}"#;

    #[test]
    fn example1_parses_with_defaults() {
        let p = parse_problem_str(EX1).unwrap();
        assert_eq!(p.rfde.n(), 1);
        assert_eq!(p.rfde.atoms().len(), 2);
        assert_eq!(p.lambdas, vec![c64(0.0, 0.0)]);
        assert_eq!((p.rank_tol, p.grid), (1e-8, 64));
        assert!(p.real && p.family.is_none());
    }

    #[test]
    fn empty_atoms_rejected() {
        assert!(matches!(parse_problem_str(r#"{"format": 1, "atoms": []}"#), Err(Error::Parse(_))));
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let e = parse_problem_str("{\n\"format\": 1,\n\"atoms\": [{\"tau\": \"x\"}]}").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn dimension_mismatch_names_the_path() {
        let text = r#"{"format": 1, "atoms": [{"tau": 0, "coeff": [[1, 0], [0]]}]}"#;
        let e = parse_problem_str(text).unwrap_err().to_string();
        assert!(e.contains("atoms[0].coeff"), "{e}");
    }

    #[test]
    fn complex_pairs_and_round_trip() {
        let text = r#"{"format": 1, "atoms": [{"tau": 0, "coeff": [[{"re": 1, "im": 2}]]}],
            "directions": [{"name": "a", "atoms": [{"tau": 0.5, "coeff": [[3]]}]}]}"#;
        let p = parse_problem_str(text).unwrap();
        assert!(!p.real);
        assert_eq!(p.rfde.atoms()[0].coeff[(0, 0)], c64(1.0, 2.0));
        let f = p.family.unwrap();
        let out = problem_json(&p.rfde, &p.lambdas, &f.names, &f.directions, p.real, p.rank_tol, p.grid);
        let again = parse_problem_str(&to_pretty(&out)).unwrap();
        assert_eq!(again.family.unwrap(), f);
    }
}
