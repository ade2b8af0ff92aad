//! Config documents: canonical JSON and a TOML rendering of the same tree.
//!
//! ```toml
//! name = "put"
//! [domain]
//! lower = 0.0
//! upper = "inf"
//! x0 = 1.0
//! [horizon]
//! kind = "perpetual"      # or "finite" with T = ...
//! window = 1.0
//! [coefficients]
//! mu = "0.05*x"           # number, expression, {t, x, values} or {file}
//! sigma = "0.3*x"
//! flow = 0.0
//! discount = 0.05
//! [payoff]
//! branch_a = "1 - x"
//! branch_b = 0.0
//! x_c = 1.0               # optional; number or expression in t
//! [grid]
//! nt = 0
//! nx = 1600
//! spacing = "log"         # uniform | log | custom (with nodes = [...])
//! x_min = 0.01
//! x_max = 100.0
//! [[actions]]             # optional; each entry overrides base fields
//! name = "fast"
//! sigma = "2*x*(1-x)"
//! [closure]               # optional edge values replacing v = g
//! upper = "1.5*x - 0.6"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, Table};
use crate::grid::{GridSpec, Spacing};
use crate::problem::{Action, Closure, Coefficients, Domain, Horizon, StoppingPayoff, StoppingProblem};
use crate::solver::SolverSettings;

pub const FORMAT_TAG: &str = "stopflow/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocFormat {
    Json,
    Toml,
}

impl DocFormat {
    /// JSON documents start with `{`; anything else is read as TOML.
    pub fn sniff(text: &str) -> DocFormat {
        if text.trim_start().starts_with('{') {
            DocFormat::Json
        } else {
            DocFormat::Toml
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Bound {
    Number(f64),
    Text(String),
}

impl Bound {
    fn value(&self, field: &str) -> Result<f64> {
        match self {
            Bound::Number(v) => Ok(*v),
            Bound::Text(s) => match s.trim() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => other
                    .parse()
                    .map_err(|_| Error::Config(format!("{field}: expected a number or \"inf\", got {other:?}"))),
            },
        }
    }

    fn from(v: f64) -> Bound {
        if v == f64::INFINITY {
            Bound::Text("inf".into())
        } else if v == f64::NEG_INFINITY {
            Bound::Text("-inf".into())
        } else {
            Bound::Number(v)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum FieldDoc {
    Number(f64),
    Expr(String),
    Table { t: Vec<f64>, x: Vec<f64>, values: Vec<Vec<f64>> },
    File { file: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainDoc {
    lower: Bound,
    upper: Bound,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonDoc {
    kind: String,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsDoc {
    mu: FieldDoc,
    sigma: FieldDoc,
    flow: FieldDoc,
    discount: FieldDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PayoffDoc {
    branch_a: FieldDoc,
    branch_b: FieldDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_c: Option<FieldDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<FieldDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<FieldDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow: Option<FieldDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    discount: Option<FieldDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    nt: usize,
    nx: usize,
    #[serde(default = "uniform")]
    spacing: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<f64>>,
}

fn uniform() -> String {
    "uniform".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    format: Option<String>,
    #[serde(default)]
    name: String,
    domain: DomainDoc,
    horizon: HorizonDoc,
    coefficients: CoefficientsDoc,
    payoff: PayoffDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    actions: Vec<ActionDoc>,
    grid: GridDoc,
    #[serde(default, skip_serializing_if = "ClosureDoc::is_empty")]
    closure: ClosureDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solver: Option<SolverSettings>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClosureDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<FieldDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<FieldDoc>,
}

impl ClosureDoc {
    fn is_empty(&self) -> bool {
        self.lower.is_none() && self.upper.is_none()
    }
}

/// A parsed document: the problem plus optional solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub problem: StoppingProblem,
    pub settings: Option<SolverSettings>,
}

/// Parses and validates a problem document.
pub fn parse_problem(text: &str) -> Result<StoppingProblem> {
    Ok(parse_config(text, None)?.problem)
}

/// Parses a document; relative table paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<Config> {
    let doc: Document = match DocFormat::sniff(text) {
        DocFormat::Json => serde_json::from_str(text).map_err(|e| Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?,
        DocFormat::Toml => toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            Error::Syntax {
                line,
                column,
                message: e.message().to_string(),
            }
        })?,
    };
    if let Some(tag) = &doc.format {
        if tag != FORMAT_TAG {
            return Err(Error::Config(format!("unsupported format tag {tag:?}")));
        }
    }
    let problem = build(&doc, base_dir)?;
    problem.validate()?;
    if let Some(s) = &doc.solver {
        s.validate()?;
    }
    Ok(Config {
        problem,
        settings: doc.solver,
    })
}

pub fn read_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path.parent())
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|p| p + 1).unwrap_or(0) + 1;
    (line, column)
}

fn field(doc: &FieldDoc, name: &str, base: Option<&Path>) -> Result<CoefficientField> {
    let with_name = |e: Error| match e {
        Error::Syntax { line, column, message } => Error::Syntax {
            line,
            column,
            message: format!("in {name}: {message}"),
        },
        Error::Config(m) => Error::Config(format!("{name}: {m}")),
        e => e,
    };
    match doc {
        FieldDoc::Number(v) => Ok(CoefficientField::constant(*v)),
        FieldDoc::Expr(s) => CoefficientField::parse(s).map_err(with_name),
        FieldDoc::Table { t, x, values } => {
            if values.len() != t.len() || values.iter().any(|r| r.len() != x.len()) {
                return Err(Error::Config(format!(
                    "{name}: table values must have {} rows of {} samples",
                    t.len(),
                    x.len()
                )));
            }
            let flat = values.iter().flatten().copied().collect();
            Ok(CoefficientField::table(Table::new(t.clone(), x.clone(), flat).map_err(with_name)?))
        }
        FieldDoc::File { file } => {
            let mut path = PathBuf::from(file);
            if path.is_relative() {
                if let Some(b) = base {
                    path = b.join(path);
                }
            }
            read_table_csv(&path).map_err(with_name)
        }
    }
}

/// Reads a long-format CSV table with columns `t,x,value`.
pub fn read_table_csv(path: &Path) -> Result<CoefficientField> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    let mut t: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut x: Vec<f64> = rows.iter().map(|r| r.1).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    x.sort_by(f64::total_cmp);
    x.dedup();
    if rows.len() != t.len() * x.len() {
        return Err(Error::Config(format!(
            "table {} is not a full t-by-x grid",
            path.display()
        )));
    }
    let mut values = vec![f64::NAN; rows.len()];
    for (tt, xx, v) in rows {
        let i = t.partition_point(|&s| s < tt);
        let j = x.partition_point(|&s| s < xx);
        values[i * x.len() + j] = v;
    }
    Ok(CoefficientField::table(Table::new(t, x, values)?))
}

fn build(doc: &Document, base: Option<&Path>) -> Result<StoppingProblem> {
    let domain = Domain::new(doc.domain.lower.value("domain.lower")?, doc.domain.upper.value("domain.upper")?);
    let horizon = match doc.horizon.kind.as_str() {
        "finite" => Horizon::Finite(
            doc.horizon
                .t
                .ok_or_else(|| Error::Config("horizon.T is required for a finite horizon".into()))?,
        ),
        "perpetual" => Horizon::Perpetual {
            window: doc.horizon.window.unwrap_or(1.0),
        },
        other => return Err(Error::Config(format!("horizon.kind must be finite or perpetual, got {other:?}"))),
    };
    let c = &doc.coefficients;
    let coefficients = Coefficients {
        mu: field(&c.mu, "coefficients.mu", base)?,
        sigma: field(&c.sigma, "coefficients.sigma", base)?,
        flow: field(&c.flow, "coefficients.flow", base)?,
        discount: field(&c.discount, "coefficients.discount", base)?,
    };
    let mut payoff = StoppingPayoff::new(
        field(&doc.payoff.branch_a, "payoff.branch_a", base)?,
        field(&doc.payoff.branch_b, "payoff.branch_b", base)?,
    );
    if let Some(xc) = &doc.payoff.x_c {
        payoff.crossing = Some(field(xc, "payoff.x_c", base)?);
    }
    let mut actions = Vec::with_capacity(doc.actions.len());
    for a in &doc.actions {
        let over = |f: &Option<FieldDoc>, base_field: &CoefficientField, key: &str| -> Result<CoefficientField> {
            match f {
                Some(d) => field(d, &format!("actions.{}.{key}", a.name), base),
                None => Ok(base_field.clone()),
            }
        };
        actions.push(Action {
            name: a.name.clone(),
            coefficients: Coefficients {
                mu: over(&a.mu, &coefficients.mu, "mu")?,
                sigma: over(&a.sigma, &coefficients.sigma, "sigma")?,
                flow: over(&a.flow, &coefficients.flow, "flow")?,
                discount: over(&a.discount, &coefficients.discount, "discount")?,
            },
        });
    }
    let g = &doc.grid;
    let spacing = match g.spacing.as_str() {
        "uniform" => Spacing::Uniform,
        "log" => Spacing::Log,
        "custom" => Spacing::Custom(
            g.nodes
                .clone()
                .ok_or_else(|| Error::Config("grid.nodes is required for custom spacing".into()))?,
        ),
        other => return Err(Error::Config(format!("grid.spacing must be uniform, log or custom, got {other:?}"))),
    };
    Ok(StoppingProblem {
        name: doc.name.clone(),
        domain,
        horizon,
        coefficients,
        payoff,
        actions,
        grid: GridSpec {
            nt: g.nt,
            nx: g.nx,
            spacing,
            x_min: g.x_min,
            x_max: g.x_max,
            margin: g.margin,
        },
        x0: doc.domain.x0,
        closure: Closure {
            lower: doc.closure.lower.as_ref().map(|f| field(f, "closure.lower", base)).transpose()?,
            upper: doc.closure.upper.as_ref().map(|f| field(f, "closure.upper", base)).transpose()?,
        },
    })
}

fn field_doc(f: &CoefficientField) -> FieldDoc {
    match f {
        CoefficientField::Constant(v) => FieldDoc::Number(*v),
        CoefficientField::Expression(e) => FieldDoc::Expr(e.expr().to_string()),
        CoefficientField::Tabulated(t) => FieldDoc::Table {
            t: t.t_nodes().to_vec(),
            x: t.x_nodes().to_vec(),
            values: t.values().chunks(t.x_nodes().len()).map(|r| r.to_vec()).collect(),
        },
    }
}

fn document(problem: &StoppingProblem, settings: Option<&SolverSettings>) -> Document {
    let c = &problem.coefficients;
    let (kind, t, window) = match problem.horizon {
        Horizon::Finite(t) => ("finite", Some(t), None),
        Horizon::Perpetual { window } => ("perpetual", None, Some(window)),
    };
    let diff = |a: &CoefficientField, b: &CoefficientField| (a != b).then(|| field_doc(a));
    Document {
        format: Some(FORMAT_TAG.into()),
        name: problem.name.clone(),
        domain: DomainDoc {
            lower: Bound::from(problem.domain.lower),
            upper: Bound::from(problem.domain.upper),
            x0: problem.x0,
        },
        horizon: HorizonDoc {
            kind: kind.into(),
            t,
            window,
        },
        coefficients: CoefficientsDoc {
            mu: field_doc(&c.mu),
            sigma: field_doc(&c.sigma),
            flow: field_doc(&c.flow),
            discount: field_doc(&c.discount),
        },
        payoff: PayoffDoc {
            branch_a: field_doc(&problem.payoff.branch_a),
            branch_b: field_doc(&problem.payoff.branch_b),
            x_c: problem.payoff.crossing.as_ref().map(field_doc),
        },
        actions: problem
            .actions
            .iter()
            .map(|a| ActionDoc {
                name: a.name.clone(),
                mu: diff(&a.coefficients.mu, &c.mu),
                sigma: diff(&a.coefficients.sigma, &c.sigma),
                flow: diff(&a.coefficients.flow, &c.flow),
                discount: diff(&a.coefficients.discount, &c.discount),
            })
            .collect(),
        grid: GridDoc {
            nt: problem.grid.nt,
            nx: problem.grid.nx,
            spacing: problem.grid.spacing.name().into(),
            x_min: problem.grid.x_min,
            x_max: problem.grid.x_max,
            margin: problem.grid.margin,
            nodes: match &problem.grid.spacing {
                Spacing::Custom(v) => Some(v.clone()),
                _ => None,
            },
        },
        closure: ClosureDoc {
            lower: problem.closure.lower.as_ref().map(field_doc),
            upper: problem.closure.upper.as_ref().map(field_doc),
        },
        solver: settings.copied(),
    }
}

/// Canonical JSON rendering.
pub fn to_json(problem: &StoppingProblem, settings: Option<&SolverSettings>) -> String {
    serde_json::to_string_pretty(&document(problem, settings)).expect("document serialises")
}

/// Human-oriented TOML rendering of the same tree.
pub fn to_toml(problem: &StoppingProblem, settings: Option<&SolverSettings>) -> Result<String> {
    toml::to_string(&document(problem, settings)).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const PUT: &str = r#"{
        "name": "put",
        "domain": {"lower": 0, "upper": "inf", "x0": 1.0},
        "horizon": {"kind": "perpetual", "window": 1.0},
        "coefficients": {"mu": "0.05*x", "sigma": "0.3*x", "flow": 0, "discount": 0.05},
        "payoff": {"branch_a": "1 - x", "branch_b": 0, "x_c": 1.0},
        "grid": {"nt": 0, "nx": 200, "spacing": "log", "x_min": 0.01, "x_max": 100.0}
    }"#;

    #[test]
    fn put_document_maps_fields() {
        let p = parse_problem(PUT).unwrap();
        assert_eq!(p.coefficients.mu.eval(0.0, 2.0), 0.1);
        assert_eq!(p.coefficients.sigma.eval(0.0, 2.0), 0.6);
        assert_eq!(p.payoff.value(0.0, 0.25), 0.75);
        assert_eq!(p.payoff.value(0.0, 1.5), 0.0);
        assert_eq!(p.domain.upper, f64::INFINITY);
    }

    #[test]
    fn zero_sigma_names_the_field() {
        let doc = PUT.replace("\"0.3*x\"", "\"0\"");
        let err = parse_problem(&doc).unwrap_err();
        match err {
            Error::Invariant { field, .. } => assert_eq!(field, "sigma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_syntax_error_has_position() {
        let err = parse_problem("{\n  \"name\": ,\n}").unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn toml_rendering_round_trips() {
        let p = parse_problem(PUT).unwrap();
        let text = to_toml(&p, None).unwrap();
        let q = parse_problem(&text).unwrap();
        assert_eq!(p, q);
        let json = to_json(&q, None);
        assert_eq!(parse_problem(&json).unwrap(), p);
    }

    #[test]
    fn toml_syntax_error_has_position() {
        let err = parse_problem("name = \"x\"\n[domain\nlower = 0").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn actions_inherit_base_fields() {
        let doc = PUT.replace(
            "\"grid\"",
            "\"actions\": [{\"name\": \"a\"}, {\"name\": \"b\", \"flow\": \"-0.01\"}], \"grid\"",
        );
        let p = parse_problem(&doc).unwrap();
        assert_eq!(p.actions.len(), 2);
        assert_eq!(p.actions[0].coefficients, p.coefficients);
        assert_eq!(p.actions[1].coefficients.flow.eval(0.0, 1.0), -0.01);
    }
}
