//! Post-transplant infection model: a three-step chain over five clinical
//! states plus the pad, and the observed time from the initial state to
//! fever.
//!
//! States: 1 no virus, 2 virus A incubating, 3 virus B incubating,
//! 4 replication without fever, 5 fever detected, `*` pad after absorption.
//! `T_obs = T_0 + u * T_1` with `u = 1` iff `X_1 < 5`.

use serde::{Deserialize, Serialize};

use crate::diagram::{Domain, DiagramSpec, InfluenceDiagram};
use crate::distribution::{self, Distribution, ROW_TOLERANCE};
use crate::error::{Error, Result};

pub const DEFAULTS_JSON: &str = include_str!("../../fixtures/infection_defaults.json");

/// Index of state `5` (fever) in the default labelling.
pub const FEVER: usize = 4;

/// Jumps the clinical semantics allow, as `(from, to)` state indices.
const ALLOWED: [(usize, usize); 8] = [(0, 4), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4), (4, 5), (5, 5)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfectionParams {
    pub states: Vec<String>,
    pub prior: Vec<f64>,
    /// `transition[i][j] = p(X_{k+1} = j | X_k = i)`.
    pub transition: Vec<Vec<f64>>,
    /// First-sojourn rate per `(x0, x1)`.
    pub rate0: Vec<Vec<f64>>,
    /// First-sojourn shift (months) per `(x0, x1)`.
    pub shift: Vec<Vec<f64>>,
    /// Second-sojourn rate per `x1`.
    pub rate1: Vec<f64>,
}

impl Default for InfectionParams {
    fn default() -> Self {
        serde_json::from_str(DEFAULTS_JSON).expect("bundled infection defaults parse")
    }
}

impl InfectionParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.check()?;
        Ok(p)
    }

    fn n(&self) -> usize {
        self.states.len()
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ModelFile(format!("infection parameters: {msg}")));
        if self.states != ["1", "2", "3", "4", "5", "*"] {
            return bad("states must be 1, 2, 3, 4, 5, *".into());
        }
        let n = self.n();
        let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if self.prior.len() != n || !square(&self.transition) || !square(&self.rate0) || !square(&self.shift) || self.rate1.len() != n {
            return bad(format!("tables must be {n} wide"));
        }
        let rows = std::iter::once(&self.prior).chain(&self.transition);
        for (r, row) in rows.enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return bad(format!("probability row {r} is not normalised"));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if self.transition[i][j] != 0.0 && !ALLOWED.contains(&(i, j)) {
                    return bad(format!(
                        "jump {} -> {} is structurally forbidden and must be exactly 0",
                        self.states[i], self.states[j]
                    ));
                }
                if !(self.rate0[i][j] > 0.0) || !(self.shift[i][j] >= 0.0) {
                    return bad(format!("sojourn parameters for ({i}, {j}) out of range"));
                }
            }
        }
        if self.rate1.iter().any(|r| !(*r > 0.0)) {
            return bad("rate1 must be positive".into());
        }
        Ok(())
    }

    /// `u = 1` iff `X_1` is one of the states 1-4.
    pub fn gate(&self, x1: usize) -> bool {
        x1 < FEVER
    }
}

pub fn build_infection_model(p: &InfectionParams) -> Result<InfluenceDiagram> {
    p.check()?;
    let n = p.n();
    let domain = || Domain::discrete(p.states.iter().cloned());
    let mut s = DiagramSpec::new();
    let x0 = s.add("X0", domain(), &[], Distribution::Cpt { rows: vec![p.prior.clone()] });
    let x1 = s.add("X1", domain(), &[x0], Distribution::Cpt { rows: p.transition.clone() });
    let x2 = s.add("X2", domain(), &[x1], Distribution::Cpt { rows: p.transition.clone() });
    let tuples = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
    let mut rate0 = Vec::new();
    let mut rate1 = Vec::new();
    let mut shift = Vec::new();
    let mut gate = Vec::new();
    for (i, j) in tuples {
        rate0.push(p.rate0[i][j]);
        rate1.push(p.rate1[j]);
        shift.push(p.shift[i][j]);
        gate.push(p.gate(j));
    }
    s.add(
        "T_obs",
        Domain::ContinuousPositive { lower: 0.0 },
        &[x0, x1],
        Distribution::TwoPhase {
            rate0,
            rate1,
            shift,
            gate,
        },
    );
    s.chain = Some(vec![x0, x1, x2]);
    s.build()
}

/// Closed-form density of the observed time to fever.
pub fn tobs_density(p: &InfectionParams, t: f64, x0: usize, x1: usize) -> Result<f64> {
    let n = p.n();
    if x0 >= n || x1 >= n || p.transition[x0][x1] == 0.0 {
        return Err(Error::Argument(format!(
            "jump {} -> {} has zero probability",
            p.states.get(x0).map_or("?", String::as_str),
            p.states.get(x1).map_or("?", String::as_str)
        )));
    }
    let (l0, a0) = (p.rate0[x0][x1], p.shift[x0][x1]);
    Ok(if p.gate(x1) {
        distribution::two_phase_pdf(t, l0, p.rate1[x1], a0)
    } else {
        distribution::shifted_exponential_pdf(t, l0, a0)
    })
}

/// Exact posterior over `X_0` given `T_obs = t_obs`, by summing over every
/// `(x0, x1, x2)` path.
pub fn infection_posterior_oracle(p: &InfectionParams, t_obs: f64) -> Result<Vec<f64>> {
    p.check()?;
    let n = p.n();
    let mut post = vec![0.0; n];
    for (x0, slot) in post.iter_mut().enumerate() {
        for x1 in 0..n {
            for x2 in 0..n {
                let path = p.prior[x0] * p.transition[x0][x1] * p.transition[x1][x2];
                if path > 0.0 {
                    *slot += path * tobs_density(p, t_obs, x0, x1)?;
                }
            }
        }
    }
    let total: f64 = post.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Contradictory(format!("T_obs = {t_obs} has zero density under every path")));
    }
    post.iter_mut().for_each(|x| *x /= total);
    Ok(post)
}
