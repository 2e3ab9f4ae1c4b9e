//! Exact posteriors for small all-discrete diagrams by full enumeration.

use crate::diagram::{joint_density, Configuration, Evidence, InfluenceDiagram, Value};
use crate::error::{Error, Result};

pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    /// Probability of the evidence.
    pub p_evidence: f64,
    /// Posterior marginal of every node, indexed by node id.
    pub marginals: Vec<Vec<f64>>,
}

/// Enumerates every joint configuration consistent with the evidence and
/// marginalises. Observed nodes get a point mass at their value.
pub fn enumeration_oracle(d: &InfluenceDiagram, evidence: &Evidence) -> Result<ExactPosterior> {
    let mut sizes = Vec::with_capacity(d.len());
    for node in d.nodes() {
        let size = node
            .domain
            .size()
            .ok_or_else(|| Error::Argument(format!("enumeration needs discrete nodes; `{}` is not", node.name)))?;
        sizes.push(size);
    }
    let total: u128 = sizes.iter().map(|&s| s as u128).product();
    if total > ENUMERATION_CAP {
        return Err(Error::TooLarge(total));
    }
    let fixed: Vec<Option<usize>> = d
        .ids()
        .map(|id| evidence.get(id).and_then(Value::state))
        .collect();

    let mut marginals: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut p_evidence = 0.0;
    let mut states: Vec<usize> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
    loop {
        let p = joint_density(d, &Configuration::from_states(&states))?;
        if p > 0.0 {
            p_evidence += p;
            for (v, &s) in states.iter().enumerate() {
                marginals[v][s] += p;
            }
        }
        // odometer over the free nodes, last node fastest
        let mut v = states.len();
        loop {
            if v == 0 {
                return finish(p_evidence, marginals);
            }
            v -= 1;
            if fixed[v].is_some() {
                continue;
            }
            states[v] += 1;
            if states[v] < sizes[v] {
                break;
            }
            states[v] = 0;
        }
    }
}

fn finish(p_evidence: f64, mut marginals: Vec<Vec<f64>>) -> Result<ExactPosterior> {
    if !(p_evidence > 0.0) {
        return Err(Error::Contradictory("the evidence has probability zero".into()));
    }
    for row in &mut marginals {
        row.iter_mut().for_each(|x| *x /= p_evidence);
    }
    Ok(ExactPosterior { p_evidence, marginals })
}
