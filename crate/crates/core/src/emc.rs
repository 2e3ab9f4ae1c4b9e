//! Embedded Markov chain of a diagram viewed as a chain of binary
//! constraints, and the arc-consistency revisions that shrink its domains.
//!
//! Links are numbered from 1: link `i` joins `X_{i-1}` (predecessor) to
//! `X_i` (successor). Two values are compatible iff the stored transition
//! probability is strictly positive.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::diagram::{InfluenceDiagram, Node, VariableId};
use crate::distribution::Distribution;
use crate::error::{Error, Result};

/// Direction(s) in which a revision pass deletes unsupported values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Revision {
    /// Only predecessor values lacking a compatible successor are deleted.
    #[default]
    Literal,
    /// Both directions (AC-3 over both arcs of every link).
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emc {
    vars: Vec<VariableId>,
    names: Vec<String>,
    labels: Vec<Vec<String>>,
    domains: Vec<Vec<bool>>,
    /// `links[i - 1][h][k] = p(X_i = k | X_{i-1} = h)` over full domains.
    links: Vec<Vec<Vec<f64>>>,
    infeasible: bool,
}

/// Values deleted from each chain variable, as state indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Deletions {
    pub per_var: Vec<Vec<usize>>,
}

impl Deletions {
    fn new(n: usize) -> Self {
        Deletions {
            per_var: vec![Vec::new(); n],
        }
    }

    pub fn total(&self) -> usize {
        self.per_var.iter().map(Vec::len).sum()
    }

    fn absorb(&mut self, pos: usize, states: Vec<usize>) {
        self.per_var[pos].extend(states);
        self.per_var[pos].sort_unstable();
    }
}

/// Bipartite compatibility graph of one link restricted to current domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityGraph {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl CompatibilityGraph {
    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.left.len() * self.right.len()
    }
}

pub(crate) fn check_chain(nodes: &[Node], chain: &[VariableId]) -> Result<()> {
    if chain.is_empty() {
        return Err(Error::NotAChain("no variables listed".into()));
    }
    for (k, id) in chain.iter().enumerate() {
        let node = nodes
            .get(id.0)
            .ok_or_else(|| Error::NotAChain(format!("variable index {} does not exist", id.0)))?;
        if !node.domain.is_discrete() {
            return Err(Error::NotAChain(format!("`{}` is not discrete", node.name)));
        }
        if chain[..k].contains(id) {
            return Err(Error::NotAChain(format!("`{}` listed twice", node.name)));
        }
        if k == 0 {
            continue;
        }
        let prev = chain[k - 1];
        let ok = node.parents == [prev] && matches!(node.dist, Distribution::Cpt { .. });
        if !ok {
            return Err(Error::NotAChain(format!(
                "`{}` must have a transition table whose only parent is `{}`",
                node.name, nodes[prev.0].name
            )));
        }
    }
    Ok(())
}

/// Builds the chain over `chain_vars` with full domains.
pub fn extract_emc(d: &InfluenceDiagram, chain_vars: &[VariableId]) -> Result<Emc> {
    check_chain(d.nodes(), chain_vars)?;
    let nodes = d.nodes();
    let links = chain_vars
        .iter()
        .skip(1)
        .map(|id| match &nodes[id.0].dist {
            Distribution::Cpt { rows } => rows.clone(),
            _ => unreachable!("checked above"),
        })
        .collect();
    Ok(Emc {
        vars: chain_vars.to_vec(),
        names: chain_vars.iter().map(|id| nodes[id.0].name.clone()).collect(),
        labels: chain_vars
            .iter()
            .map(|id| nodes[id.0].domain.labels().to_vec())
            .collect(),
        domains: chain_vars
            .iter()
            .map(|id| vec![true; nodes[id.0].domain.size().unwrap_or(0)])
            .collect(),
        links,
        infeasible: false,
    })
}

impl Emc {
    /// Chain over explicit transition matrices, for tests and tools.
    pub fn from_matrices(labels: Vec<Vec<String>>, links: Vec<Vec<Vec<f64>>>) -> Result<Emc> {
        if links.len() + 1 != labels.len() {
            return Err(Error::NotAChain("need one matrix per adjacent pair".into()));
        }
        for (i, m) in links.iter().enumerate() {
            let ok = m.len() == labels[i].len() && m.iter().all(|r| r.len() == labels[i + 1].len());
            if !ok {
                return Err(Error::NotAChain(format!("matrix {} has the wrong shape", i + 1)));
            }
        }
        Ok(Emc {
            vars: (0..labels.len()).map(VariableId).collect(),
            names: (0..labels.len()).map(|i| format!("X{i}")).collect(),
            domains: labels.iter().map(|l| vec![true; l.len()]).collect(),
            labels,
            links,
            infeasible: false,
        })
    }

    pub fn vars(&self) -> &[VariableId] {
        &self.vars
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self, pos: usize) -> &[String] {
        &self.labels[pos]
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn is_infeasible(&self) -> bool {
        self.infeasible
    }

    pub fn position(&self, id: VariableId) -> Option<usize> {
        self.vars.iter().position(|&v| v == id)
    }

    /// Current domain of the variable at chain position `pos`.
    pub fn domain(&self, pos: usize) -> Vec<usize> {
        self.domains[pos]
            .iter()
            .enumerate()
            .filter_map(|(s, &keep)| keep.then_some(s))
            .collect()
    }

    pub fn domain_mask(&self, pos: usize) -> &[bool] {
        &self.domains[pos]
    }

    pub fn domain_labels(&self, pos: usize) -> Vec<&str> {
        self.domain(pos)
            .into_iter()
            .map(|s| self.labels[pos][s].as_str())
            .collect()
    }

    fn check_link(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.links.len() {
            return Err(Error::Argument(format!(
                "link {i} does not exist (chain has {} links)",
                self.links.len()
            )));
        }
        Ok(())
    }

    fn positive(&self, i: usize, h: usize, k: usize) -> bool {
        self.links[i - 1][h][k] > 0.0
    }

    pub fn compatible(&self, i: usize, h: usize, k: usize) -> Result<bool> {
        self.check_link(i)?;
        for (pos, s) in [(i - 1, h), (i, k)] {
            if !self.domains[pos].get(s).copied().unwrap_or(false) {
                return Err(Error::OutOfDomain {
                    node: self.names[pos].clone(),
                    value: self.labels[pos].get(s).cloned().unwrap_or_else(|| s.to_string()),
                });
            }
        }
        Ok(self.positive(i, h, k))
    }

    fn refresh_infeasible(&mut self) {
        self.infeasible = self.domains.iter().any(|d| !d.iter().any(|&b| b));
    }

    /// Deletes every value of `X_{i-1}` with no compatible value left in `X_i`.
    pub fn revise_l(&mut self, i: usize) -> Vec<usize> {
        assert!(i >= 1 && i <= self.links.len(), "link {i} out of range");
        let mut deleted = Vec::new();
        for h in 0..self.domains[i - 1].len() {
            if !self.domains[i - 1][h] {
                continue;
            }
            let supported = (0..self.domains[i].len()).any(|k| self.domains[i][k] && self.positive(i, h, k));
            if !supported {
                self.domains[i - 1][h] = false;
                deleted.push(h);
            }
        }
        self.refresh_infeasible();
        deleted
    }

    /// Mirror of [`Emc::revise_l`]: deletes values of `X_i` that no current
    /// value of `X_{i-1}` can reach.
    pub fn revise_l_forward(&mut self, i: usize) -> Vec<usize> {
        assert!(i >= 1 && i <= self.links.len(), "link {i} out of range");
        let mut deleted = Vec::new();
        for k in 0..self.domains[i].len() {
            if !self.domains[i][k] {
                continue;
            }
            let supported =
                (0..self.domains[i - 1].len()).any(|h| self.domains[i - 1][h] && self.positive(i, h, k));
            if !supported {
                self.domains[i][k] = false;
                deleted.push(k);
            }
        }
        self.refresh_infeasible();
        deleted
    }

    /// Repeats passes over every link until nothing changes.
    pub fn revise_g(&mut self) -> Deletions {
        self.revise_with(Revision::Literal)
    }

    pub fn revise_with(&mut self, mode: Revision) -> Deletions {
        let order: Vec<usize> = (1..=self.links.len()).collect();
        self.revise_ordered(mode, &order)
    }

    /// Fixed-point revision visiting links in the given order each pass.
    pub fn revise_ordered(&mut self, mode: Revision, order: &[usize]) -> Deletions {
        let mut deletions = Deletions::new(self.vars.len());
        let cap = 1 + self.domains.iter().map(Vec::len).sum::<usize>();
        let mut passes = 0;
        loop {
            passes += 1;
            assert!(passes <= cap, "revision exceeded {cap} passes");
            let mut changed = false;
            for &i in order {
                let back = self.revise_l(i);
                changed |= !back.is_empty();
                deletions.absorb(i - 1, back);
                if mode == Revision::Bidirectional {
                    let fwd = self.revise_l_forward(i);
                    changed |= !fwd.is_empty();
                    deletions.absorb(i, fwd);
                }
            }
            if !changed {
                break;
            }
        }
        deletions
    }

    /// Removes states from the variable at chain position `pos`.
    pub fn exclude(&mut self, pos: usize, states: &[usize]) -> Result<Vec<usize>> {
        let mut deleted = Vec::new();
        for &s in states {
            let slot = self.domains[pos].get_mut(s).ok_or_else(|| Error::OutOfDomain {
                node: self.names[pos].clone(),
                value: s.to_string(),
            })?;
            if *slot {
                *slot = false;
                deleted.push(s);
            }
        }
        self.refresh_infeasible();
        Ok(deleted)
    }

    /// Keeps only `states` in the domain of the variable at `pos`.
    pub fn restrict(&mut self, pos: usize, states: &[usize]) -> Result<Vec<usize>> {
        let others: Vec<usize> = (0..self.domains[pos].len())
            .filter(|s| !states.contains(s))
            .collect();
        for &s in states {
            if s >= self.domains[pos].len() {
                return Err(Error::OutOfDomain {
                    node: self.names[pos].clone(),
                    value: s.to_string(),
                });
            }
        }
        self.exclude(pos, &others)
    }

    pub fn compatibility_graph(&self, i: usize) -> Result<CompatibilityGraph> {
        self.check_link(i)?;
        let left = self.domain(i - 1);
        let right = self.domain(i);
        let edges = left
            .iter()
            .flat_map(|&h| right.iter().map(move |&k| (h, k)))
            .filter(|&(h, k)| self.positive(i, h, k))
            .collect();
        Ok(CompatibilityGraph { left, right, edges })
    }

    /// True iff every pair of current values across link `i` is compatible.
    pub fn is_completely_connected(&self, i: usize) -> Result<bool> {
        Ok(self.compatibility_graph(i)?.is_complete())
    }

    /// Complete connectivity of every link; on a bare chain this is exactly
    /// the condition for single-site Gibbs sampling to reach every
    /// positive-probability configuration.
    pub fn gibbs_reachability_ok(&self) -> bool {
        (1..=self.links.len()).all(|i| self.is_completely_connected(i).unwrap_or(false))
    }

    /// Graphviz rendering of every link's compatibility graph.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph emc {\n  rankdir=LR;\n");
        for (pos, name) in self.names.iter().enumerate() {
            let _ = writeln!(out, "  subgraph cluster_{pos} {{\n    label=\"{name}\";");
            for s in self.domain(pos) {
                let _ = writeln!(out, "    \"{name}={}\";", self.labels[pos][s]);
            }
            out.push_str("  }\n");
        }
        for i in 1..=self.links.len() {
            let g = self.compatibility_graph(i).expect("link exists");
            for (h, k) in g.edges {
                let _ = writeln!(
                    out,
                    "  \"{}={}\" -- \"{}={}\";",
                    self.names[i - 1],
                    self.labels[i - 1][h],
                    self.names[i],
                    self.labels[i][k]
                );
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Applies a-priori exclusions to every listed variable, then revises.
pub fn global_revise(
    e: &Emc,
    exclusions: &BTreeMap<VariableId, Vec<usize>>,
    mode: Revision,
) -> Result<Emc> {
    let mut out = e.clone();
    for (id, states) in exclusions {
        let pos = out
            .position(*id)
            .ok_or_else(|| Error::NotAChain(format!("variable {id} is not on the chain")))?;
        out.exclude(pos, states)?;
    }
    out.revise_with(mode);
    Ok(out)
}
