//! JSON model files. The schema is documented in `docs/model-format.md`.
//!
//! Parents, design terms and coefficient sources are written by variable
//! name; discrete values by label. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagram::{DiagramSpec, Domain, Evidence, InfluenceDiagram, Node, Value, VariableId};
use crate::distribution::{Coefficients, Distribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub variables: Vec<VariableEntry>,
    pub nodes: Vec<NodeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub evidence: BTreeMap<String, EvidenceValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableEntry {
    pub id: usize,
    pub name: String,
    pub domain: DomainEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainEntry {
    Discrete { labels: Vec<String> },
    ContinuousPositive {
        #[serde(default)]
        lower: f64,
    },
    Interval { lower: f64, upper: f64 },
    Vector { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub variable: String,
    #[serde(default)]
    pub parents: Vec<String>,
    pub dist: DistEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientsEntry {
    Fixed(Vec<f64>),
    /// Name of a vector-valued parent holding the weights.
    Parent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistEntry {
    Cpt {
        rows: Vec<Vec<f64>>,
    },
    ShiftedExponential {
        rate: Vec<f64>,
        shift: Vec<f64>,
    },
    TwoPhase {
        rate0: Vec<f64>,
        rate1: Vec<f64>,
        shift: Vec<f64>,
        gate: Vec<bool>,
    },
    GaussianLinear {
        coefficients: CoefficientsEntry,
        /// Each term is a list of parent names whose values are multiplied.
        terms: Vec<Vec<String>>,
        sigma: f64,
    },
    GaussianPrior {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    SurvivalTransition {
        rate: f64,
        step: f64,
        knots: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvidenceValue {
    Label(String),
    Number(f64),
    Vector(Vec<f64>),
}

fn bad<T>(msg: String) -> Result<T> {
    Err(Error::ModelFile(msg))
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serialises")
    }

    /// Resolves names into an unvalidated diagram.
    pub fn to_spec(&self) -> Result<DiagramSpec> {
        let mut ids = BTreeMap::new();
        let mut names = BTreeMap::new();
        for (pos, v) in self.variables.iter().enumerate() {
            if ids.insert(v.id, pos).is_some() {
                return bad(format!("variable id {} is used twice", v.id));
            }
            if names.insert(v.name.as_str(), pos).is_some() {
                return bad(format!("variable name `{}` is used twice", v.name));
            }
        }
        let lookup = |name: &str, what: &str| -> Result<usize> {
            names
                .get(name)
                .copied()
                .ok_or_else(|| Error::ModelFile(format!("{what} refers to unknown variable `{name}`")))
        };
        let mut entries: Vec<Option<&NodeEntry>> = vec![None; self.variables.len()];
        for node in &self.nodes {
            let pos = lookup(&node.variable, "node")?;
            if entries[pos].replace(node).is_some() {
                return bad(format!("variable `{}` has two node entries", node.variable));
            }
        }
        let mut spec = DiagramSpec::new();
        for (pos, v) in self.variables.iter().enumerate() {
            let Some(node) = entries[pos] else {
                return bad(format!("variable `{}` has no node entry", v.name));
            };
            let what = format!("node `{}`", v.name);
            let parents = node
                .parents
                .iter()
                .map(|p| lookup(p, &what).map(VariableId))
                .collect::<Result<Vec<_>>>()?;
            let position = |name: &str| -> Result<usize> {
                node.parents
                    .iter()
                    .position(|p| p == name)
                    .ok_or_else(|| Error::ModelFile(format!("{what}: `{name}` is not a parent")))
            };
            let dist = match &node.dist {
                DistEntry::Cpt { rows } => Distribution::Cpt { rows: rows.clone() },
                DistEntry::ShiftedExponential { rate, shift } => Distribution::ShiftedExponential {
                    rate: rate.clone(),
                    shift: shift.clone(),
                },
                DistEntry::TwoPhase {
                    rate0,
                    rate1,
                    shift,
                    gate,
                } => Distribution::TwoPhase {
                    rate0: rate0.clone(),
                    rate1: rate1.clone(),
                    shift: shift.clone(),
                    gate: gate.clone(),
                },
                DistEntry::GaussianLinear {
                    coefficients,
                    terms,
                    sigma,
                } => Distribution::GaussianLinear {
                    coefficients: match coefficients {
                        CoefficientsEntry::Fixed(w) => Coefficients::Fixed(w.clone()),
                        CoefficientsEntry::Parent(name) => Coefficients::Parent(position(name)?),
                    },
                    terms: terms
                        .iter()
                        .map(|t| t.iter().map(|name| position(name)).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?,
                    sigma: *sigma,
                },
                DistEntry::GaussianPrior { mean, cov } => Distribution::GaussianPrior {
                    mean: mean.clone(),
                    cov: cov.clone(),
                },
                DistEntry::SurvivalTransition { rate, step, knots } => Distribution::SurvivalTransition {
                    rate: *rate,
                    step: *step,
                    knots: knots.clone(),
                },
            };
            spec.nodes.push(Node {
                name: v.name.clone(),
                domain: match &v.domain {
                    DomainEntry::Discrete { labels } => Domain::Discrete { labels: labels.clone() },
                    DomainEntry::ContinuousPositive { lower } => Domain::ContinuousPositive { lower: *lower },
                    DomainEntry::Interval { lower, upper } => Domain::Interval {
                        lower: *lower,
                        upper: *upper,
                    },
                    DomainEntry::Vector { dim } => Domain::Vector { dim: *dim },
                },
                parents,
                dist,
            });
        }
        if let Some(chain) = &self.chain {
            spec.chain = Some(
                chain
                    .iter()
                    .map(|name| lookup(name, "chain").map(VariableId))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(spec)
    }

    /// Evidence listed in the file, checked against a built diagram.
    pub fn evidence(&self, d: &InfluenceDiagram) -> Result<Evidence> {
        let mut e = Evidence::new();
        for (name, value) in &self.evidence {
            let id = d.id(name)?;
            e.observe(d, id, evidence_value(d, id, value)?)?;
        }
        Ok(e)
    }

    /// Inverse of `to_spec` plus `evidence`.
    pub fn from_diagram(d: &InfluenceDiagram, evidence: &Evidence) -> Self {
        let name = |id: VariableId| d.name(id).to_string();
        let variables = d
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| VariableEntry {
                id: i,
                name: n.name.clone(),
                domain: match &n.domain {
                    Domain::Discrete { labels } => DomainEntry::Discrete { labels: labels.clone() },
                    Domain::ContinuousPositive { lower } => DomainEntry::ContinuousPositive { lower: *lower },
                    Domain::Interval { lower, upper } => DomainEntry::Interval {
                        lower: *lower,
                        upper: *upper,
                    },
                    Domain::Vector { dim } => DomainEntry::Vector { dim: *dim },
                },
            })
            .collect();
        let nodes = d
            .nodes()
            .iter()
            .map(|n| {
                let parent = |k: usize| name(n.parents[k]);
                let dist = match &n.dist {
                    Distribution::Cpt { rows } => DistEntry::Cpt { rows: rows.clone() },
                    Distribution::ShiftedExponential { rate, shift } => DistEntry::ShiftedExponential {
                        rate: rate.clone(),
                        shift: shift.clone(),
                    },
                    Distribution::TwoPhase {
                        rate0,
                        rate1,
                        shift,
                        gate,
                    } => DistEntry::TwoPhase {
                        rate0: rate0.clone(),
                        rate1: rate1.clone(),
                        shift: shift.clone(),
                        gate: gate.clone(),
                    },
                    Distribution::GaussianLinear {
                        coefficients,
                        terms,
                        sigma,
                    } => DistEntry::GaussianLinear {
                        coefficients: match coefficients {
                            Coefficients::Fixed(w) => CoefficientsEntry::Fixed(w.clone()),
                            Coefficients::Parent(k) => CoefficientsEntry::Parent(parent(*k)),
                        },
                        terms: terms.iter().map(|t| t.iter().map(|&k| parent(k)).collect()).collect(),
                        sigma: *sigma,
                    },
                    Distribution::GaussianPrior { mean, cov } => DistEntry::GaussianPrior {
                        mean: mean.clone(),
                        cov: cov.clone(),
                    },
                    Distribution::SurvivalTransition { rate, step, knots } => DistEntry::SurvivalTransition {
                        rate: *rate,
                        step: *step,
                        knots: knots.clone(),
                    },
                };
                NodeEntry {
                    variable: n.name.clone(),
                    parents: n.parents.iter().map(|&p| name(p)).collect(),
                    dist,
                }
            })
            .collect();
        let evidence = evidence
            .iter()
            .map(|(id, v)| {
                let value = match v {
                    Value::State(_) => EvidenceValue::Label(d.format_value(id, v)),
                    Value::Real(x) => EvidenceValue::Number(*x),
                    Value::Vector(x) => EvidenceValue::Vector(x.clone()),
                };
                (name(id), value)
            })
            .collect();
        ModelFile {
            variables,
            nodes,
            chain: d.chain().map(|c| c.iter().map(|&id| name(id)).collect()),
            evidence,
        }
    }
}

fn evidence_value(d: &InfluenceDiagram, id: VariableId, value: &EvidenceValue) -> Result<Value> {
    let domain = &d.node(id)?.domain;
    let out_of_domain = |v: String| Error::OutOfDomain {
        node: d.name(id).to_string(),
        value: v,
    };
    match (domain, value) {
        (Domain::Discrete { .. }, EvidenceValue::Label(l)) => {
            domain.state(l).map(Value::State).ok_or_else(|| out_of_domain(format!("`{l}`")))
        }
        (Domain::Discrete { .. }, EvidenceValue::Number(x)) => {
            let label = format!("{x}");
            domain.state(&label).map(Value::State).ok_or_else(|| out_of_domain(label))
        }
        (Domain::Vector { .. }, EvidenceValue::Vector(v)) => Ok(Value::Vector(v.clone())),
        (_, EvidenceValue::Number(x)) if domain.is_scalar_continuous() => Ok(Value::Real(*x)),
        (_, EvidenceValue::Label(l)) if domain.is_scalar_continuous() => l
            .trim()
            .parse::<f64>()
            .map(Value::Real)
            .map_err(|_| out_of_domain(format!("`{l}` (expected a number)"))),
        (_, v) => Err(out_of_domain(format!("{v:?}"))),
    }
}

/// Reads a model file and builds the validated diagram and its evidence.
pub fn load_model(path: &Path) -> Result<(InfluenceDiagram, Evidence)> {
    let file = ModelFile::load(path)?;
    let d = file.to_spec()?.build()?;
    let e = file.evidence(&d)?;
    Ok((d, e))
}

/// Parses command-line evidence: comma-separated `Var=value` pairs.
/// Discrete values are labels, continuous values decimals, vectors
/// semicolon-separated inside brackets, e.g. `alpha=[0.5;0.7;0.2]`.
pub fn parse_evidence(d: &InfluenceDiagram, text: &str, into: &mut Evidence) -> Result<()> {
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let bad_token = |why: &str| Error::Argument(format!("evidence token `{token}`: {why}"));
        let (name, raw) = token.split_once('=').ok_or_else(|| bad_token("expected Var=value"))?;
        let (name, raw) = (name.trim(), raw.trim());
        let id = d.id(name).map_err(|_| bad_token("unknown variable"))?;
        let value = if let Some(inner) = raw.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let v = inner
                .split(';')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad_token("vector entries must be numbers"))?;
            EvidenceValue::Vector(v)
        } else {
            EvidenceValue::Label(raw.to_string())
        };
        let value = evidence_value(d, id, &value).map_err(|e| bad_token(&e.to_string()))?;
        into.observe(d, id, value).map_err(|e| bad_token(&e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "variables": [
            {"id": 0, "name": "A", "domain": {"kind": "discrete", "labels": ["x", "y"]}},
            {"id": 1, "name": "T", "domain": {"kind": "continuous_positive"}}
        ],
        "nodes": [
            {"variable": "A", "dist": {"kind": "cpt", "rows": [[0.3, 0.7]]}},
            {"variable": "T", "parents": ["A"],
             "dist": {"kind": "shifted_exponential", "rate": [1.0, 2.0], "shift": [0.0, 0.5]}}
        ],
        "evidence": {"T": 1.5}
    }"#;

    #[test]
    fn parses_and_builds() {
        let file = ModelFile::from_json(SMALL).unwrap();
        let d = file.to_spec().unwrap().build().unwrap();
        let e = file.evidence(&d).unwrap();
        assert_eq!(e.get(d.id("T").unwrap()), Some(&Value::Real(1.5)));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = SMALL.replace("\"rows\"", "\"rows\": [[1.0]], \"extra\"");
        assert!(ModelFile::from_json(&text).is_err());
        let text = SMALL.replace("\"evidence\"", "\"comment\": 1, \"evidence\"");
        assert!(ModelFile::from_json(&text).is_err());
    }

    #[test]
    fn unnormalized_row_named() {
        let text = SMALL.replace("[[0.3, 0.7]]", "[[0.3, 0.6]]");
        let spec = ModelFile::from_json(&text).unwrap().to_spec().unwrap();
        match spec.build() {
            Err(Error::Invalid(report)) => assert!(report.to_string().contains("A: row 0")),
            other => panic!("expected invalid, got {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let file = ModelFile::from_json(SMALL).unwrap();
        let d = file.to_spec().unwrap().build().unwrap();
        let e = file.evidence(&d).unwrap();
        let again = ModelFile::from_diagram(&d, &e);
        assert_eq!(ModelFile::from_json(&again.to_json()).unwrap(), again);
        assert_eq!(again.to_spec().unwrap(), d.to_spec());
    }

    #[test]
    fn cli_evidence_names_bad_token() {
        let file = ModelFile::from_json(SMALL).unwrap();
        let d = file.to_spec().unwrap().build().unwrap();
        let mut e = Evidence::new();
        let err = parse_evidence(&d, "A=x, T=abc", &mut e).unwrap_err().to_string();
        assert!(err.contains("T=abc"), "{err}");
        let err = parse_evidence(&d, "B=1", &mut Evidence::new()).unwrap_err().to_string();
        assert!(err.contains("B=1"), "{err}");
        let err = parse_evidence(&d, "A", &mut Evidence::new()).unwrap_err().to_string();
        assert!(err.contains("`A`"), "{err}");
    }

    #[test]
    fn unknown_parent_is_an_error() {
        let text = SMALL.replace("\"parents\": [\"A\"]", "\"parents\": [\"Z\"]");
        let err = ModelFile::from_json(&text).unwrap().to_spec().unwrap_err();
        assert!(err.to_string().contains("`Z`"));
    }
}
