//! Influence diagrams: variables, per-node conditionals, evidence and
//! configurations, plus the read-only queries every sampler builds on.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use crate::distribution::{self, Coefficients, Distribution, ALIVE, DEAD, ROW_TOLERANCE};
use crate::error::{Error, Result};

/// Dense index of a variable inside one diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId(pub usize);

impl VariableId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Label of the absorbing pad state.
pub const PAD: &str = "*";

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Ordered state labels; the pad `*`, if present, comes last.
    Discrete { labels: Vec<String> },
    /// Reals `t >= lower`.
    ContinuousPositive { lower: f64 },
    /// Open interval `(lower, upper)`.
    Interval { lower: f64, upper: f64 },
    /// Unconstrained real vector of fixed dimension.
    Vector { dim: usize },
}

impl Domain {
    pub fn discrete<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        Domain::Discrete {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::Discrete { .. })
    }

    pub fn is_scalar_continuous(&self) -> bool {
        matches!(self, Domain::ContinuousPositive { .. } | Domain::Interval { .. })
    }

    /// Number of discrete states; `None` for continuous domains.
    pub fn size(&self) -> Option<usize> {
        match self {
            Domain::Discrete { labels } => Some(labels.len()),
            _ => None,
        }
    }

    pub fn labels(&self) -> &[String] {
        match self {
            Domain::Discrete { labels } => labels,
            _ => &[],
        }
    }

    pub fn state(&self, label: &str) -> Option<usize> {
        self.labels().iter().position(|l| l == label)
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (Domain::Discrete { labels }, Value::State(i)) => *i < labels.len(),
            (Domain::ContinuousPositive { lower }, Value::Real(t)) => t.is_finite() && *t >= *lower,
            (Domain::Interval { lower, upper }, Value::Real(t)) => *t > *lower && *t < *upper,
            (Domain::Vector { dim }, Value::Vector(v)) => {
                v.len() == *dim && v.iter().all(|x| x.is_finite())
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    State(usize),
    Real(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn state(&self) -> Option<usize> {
        match self {
            Value::State(s) => Some(*s),
            _ => None,
        }
    }

    pub fn real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Value::Vector(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub domain: Domain,
    pub parents: Vec<VariableId>,
    pub dist: Distribution,
}

/// A diagram as written by a user or a builder, before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagramSpec {
    pub nodes: Vec<Node>,
    /// Variables forming the embedded chain, in causal order.
    pub chain: Option<Vec<VariableId>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Cycle { nodes: Vec<String> },
    DanglingParent { node: String, parent: usize },
    DuplicateName { name: String },
    BadDomain { node: String, reason: String },
    NotNormalized { node: String, row: usize, sum: String },
    BadParameter { node: String, reason: String },
    Structure { node: String, reason: String },
    Chain { reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { nodes } => write!(f, "cycle through {}", nodes.join(" -> ")),
            Violation::DanglingParent { node, parent } => {
                write!(f, "{node}: parent index {parent} does not exist")
            }
            Violation::DuplicateName { name } => write!(f, "duplicate variable name `{name}`"),
            Violation::BadDomain { node, reason } => write!(f, "{node}: bad domain: {reason}"),
            Violation::NotNormalized { node, row, sum } => {
                write!(f, "{node}: row {row} sums to {sum}, not 1")
            }
            Violation::BadParameter { node, reason } => write!(f, "{node}: {reason}"),
            Violation::Structure { node, reason } => write!(f, "{node}: {reason}"),
            Violation::Chain { reason } => write!(f, "chain: {reason}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Non-fatal findings, e.g. point-mass rows on non-leaf nodes.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// A validated, immutable influence diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceDiagram {
    nodes: Vec<Node>,
    children: Vec<Vec<VariableId>>,
    order: Vec<VariableId>,
    chain: Option<Vec<VariableId>>,
    /// Numeric reading of each discrete label (parsed, else the state index).
    numeric: Vec<Vec<f64>>,
    strides: Vec<Vec<usize>>,
    warnings: Vec<String>,
}

impl DiagramSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a node and returns its id.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        domain: Domain,
        parents: &[VariableId],
        dist: Distribution,
    ) -> VariableId {
        self.nodes.push(Node {
            name: name.into(),
            domain,
            parents: parents.to_vec(),
            dist,
        });
        VariableId(self.nodes.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<VariableId> {
        self.nodes.iter().position(|n| n.name == name).map(VariableId)
    }

    pub fn build(self) -> Result<InfluenceDiagram> {
        let report = validate_diagram(&self);
        if !report.is_ok() {
            return Err(Error::Invalid(report));
        }
        let n = self.nodes.len();
        let mut children = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            for p in &node.parents {
                children[p.0].push(VariableId(i));
            }
        }
        let order = kahn(&self.nodes).expect("validated diagram is acyclic");
        let numeric = self
            .nodes
            .iter()
            .map(|node| {
                node.domain
                    .labels()
                    .iter()
                    .enumerate()
                    .map(|(i, l)| l.parse::<f64>().unwrap_or(i as f64))
                    .collect()
            })
            .collect();
        let strides = self
            .nodes
            .iter()
            .map(|node| {
                let mut strides = vec![0; node.parents.len()];
                let mut acc = 1;
                for (k, p) in node.parents.iter().enumerate().rev() {
                    strides[k] = acc;
                    acc *= self.nodes[p.0].domain.size().unwrap_or(1);
                }
                strides
            })
            .collect();
        Ok(InfluenceDiagram {
            nodes: self.nodes,
            children,
            order,
            chain: self.chain,
            numeric,
            strides,
            warnings: report.warnings,
        })
    }
}

fn tuple_count(nodes: &[Node], parents: &[VariableId]) -> Option<usize> {
    parents
        .iter()
        .map(|p| nodes.get(p.0).and_then(|n| n.domain.size()))
        .try_fold(1usize, |acc, s| s.map(|s| acc * s))
}

/// Kahn's algorithm with ties broken by smallest index; `None` on a cycle.
fn kahn(nodes: &[Node]) -> Option<Vec<VariableId>> {
    let n = nodes.len();
    let mut indegree: Vec<usize> = nodes.iter().map(|node| node.parents.len()).collect();
    let mut children = vec![Vec::new(); n];
    for (i, node) in nodes.iter().enumerate() {
        for p in &node.parents {
            children[p.0].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(VariableId(i));
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Lists every reason the diagram cannot be used; empty iff it is usable.
pub fn validate_diagram(d: &DiagramSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let nodes = &d.nodes;
    let n = nodes.len();

    let mut seen = BTreeSet::new();
    for node in nodes {
        if !seen.insert(node.name.as_str()) {
            report.violations.push(Violation::DuplicateName {
                name: node.name.clone(),
            });
        }
    }

    let mut dangling = false;
    for node in nodes {
        for p in &node.parents {
            if p.0 >= n {
                dangling = true;
                report.violations.push(Violation::DanglingParent {
                    node: node.name.clone(),
                    parent: p.0,
                });
            }
        }
        let distinct: BTreeSet<_> = node.parents.iter().collect();
        if distinct.len() != node.parents.len() {
            report.violations.push(Violation::Structure {
                node: node.name.clone(),
                reason: "repeated parent".into(),
            });
        }
        check_domain(node, &mut report);
    }
    if dangling {
        return report;
    }

    if kahn(nodes).is_none() {
        report.violations.push(Violation::Cycle {
            nodes: cycle_members(nodes),
        });
    }

    let mut has_children = vec![false; n];
    for node in nodes {
        for p in &node.parents {
            has_children[p.0] = true;
        }
    }
    for (i, node) in nodes.iter().enumerate() {
        check_distribution(nodes, node, has_children[i], &mut report);
    }

    if let Some(chain) = &d.chain {
        if report.violations.is_empty() {
            if let Err(e) = crate::emc::check_chain(nodes, chain) {
                report.violations.push(Violation::Chain {
                    reason: e.to_string(),
                });
            }
        }
    }
    report
}

/// Names of nodes left over after repeatedly stripping sources and sinks.
fn cycle_members(nodes: &[Node]) -> Vec<String> {
    let n = nodes.len();
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let has_parent = nodes[i].parents.iter().any(|p| alive[p.0]);
            let has_child = (0..n).any(|j| alive[j] && nodes[j].parents.iter().any(|p| p.0 == i));
            if !has_parent || !has_child {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n)
        .filter(|&i| alive[i])
        .map(|i| nodes[i].name.clone())
        .collect()
}

fn check_domain(node: &Node, report: &mut ValidationReport) {
    let bad = |reason: &str| Violation::BadDomain {
        node: node.name.clone(),
        reason: reason.to_string(),
    };
    match &node.domain {
        Domain::Discrete { labels } => {
            if labels.is_empty() {
                report.violations.push(bad("no states"));
            }
            let distinct: BTreeSet<_> = labels.iter().collect();
            if distinct.len() != labels.len() {
                report.violations.push(bad("duplicate state label"));
            }
            if let Some(pos) = labels.iter().position(|l| l == PAD) {
                if pos + 1 != labels.len() {
                    report.violations.push(bad("pad state `*` must be last"));
                }
            }
        }
        Domain::ContinuousPositive { lower } => {
            if !(lower.is_finite() && *lower >= 0.0) {
                report.violations.push(bad("lower bound must be finite and >= 0"));
            }
        }
        Domain::Interval { lower, upper } => {
            if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                report.violations.push(bad("interval needs finite lower < upper"));
            }
        }
        Domain::Vector { dim } => {
            if *dim == 0 {
                report.violations.push(bad("vector dimension must be positive"));
            }
        }
    }
}

fn check_distribution(nodes: &[Node], node: &Node, has_children: bool, report: &mut ValidationReport) {
    let name = &node.name;
    let structure = |reason: String| Violation::Structure {
        node: name.clone(),
        reason,
    };
    let param = |reason: String| Violation::BadParameter {
        node: name.clone(),
        reason,
    };
    let positive = |v: f64| v.is_finite() && v > 0.0;

    if node.dist.is_tabular() && node.parents.iter().any(|p| !nodes[p.0].domain.is_discrete()) {
        report.violations.push(structure(format!(
            "{} needs discrete parents",
            node.dist.kind()
        )));
        return;
    }
    let tuples = tuple_count(nodes, &node.parents).unwrap_or(0);

    match &node.dist {
        Distribution::Cpt { rows } => {
            let Some(width) = node.domain.size() else {
                report.violations.push(structure("cpt on a continuous variable".into()));
                return;
            };
            if rows.len() != tuples {
                report.violations.push(structure(format!(
                    "cpt has {} rows, parents need {tuples}",
                    rows.len()
                )));
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != width {
                    report.violations.push(structure(format!(
                        "row {r} has {} entries, domain has {width}",
                        row.len()
                    )));
                    continue;
                }
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    report
                        .violations
                        .push(param(format!("row {r} has an entry outside [0, 1]")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    report.violations.push(Violation::NotNormalized {
                        node: name.clone(),
                        row: r,
                        sum: format!("{sum}"),
                    });
                }
                if has_children && row.iter().filter(|&&p| p > 0.0).count() == 1 && width > 1 {
                    report.warnings.push(format!(
                        "{name}: row {r} is a point mass (functional dependency); \
                         Gibbs moves through this node may be blocked"
                    ));
                }
            }
        }
        Distribution::ShiftedExponential { rate, shift } => {
            if !node.domain.is_scalar_continuous() {
                report.violations.push(structure("needs a scalar continuous domain".into()));
            }
            if rate.len() != tuples || shift.len() != tuples {
                report.violations.push(structure(format!(
                    "parameter tables need {tuples} entries"
                )));
            }
            if !rate.iter().all(|&r| positive(r)) {
                report.violations.push(param("rates must be positive".into()));
            }
            if !shift.iter().all(|&a| a.is_finite() && a >= 0.0) {
                report.violations.push(param("shifts must be >= 0".into()));
            }
        }
        Distribution::TwoPhase {
            rate0,
            rate1,
            shift,
            gate,
        } => {
            if !node.domain.is_scalar_continuous() {
                report.violations.push(structure("needs a scalar continuous domain".into()));
            }
            if [rate0.len(), rate1.len(), shift.len(), gate.len()]
                .iter()
                .any(|&l| l != tuples)
            {
                report.violations.push(structure(format!(
                    "parameter tables need {tuples} entries"
                )));
            }
            if !rate0.iter().chain(rate1).all(|&r| positive(r)) {
                report.violations.push(param("rates must be positive".into()));
            }
            if !shift.iter().all(|&a| a.is_finite() && a >= 0.0) {
                report.violations.push(param("shifts must be >= 0".into()));
            }
        }
        Distribution::GaussianLinear {
            coefficients,
            terms,
            sigma,
        } => {
            if !node.domain.is_scalar_continuous() {
                report.violations.push(structure("needs a scalar continuous domain".into()));
            }
            if !positive(*sigma) {
                report.violations.push(param("sigma must be positive".into()));
            }
            let vector_parent = match coefficients {
                Coefficients::Fixed(w) => {
                    if w.len() != terms.len() {
                        report.violations.push(structure(format!(
                            "{} weights for {} terms",
                            w.len(),
                            terms.len()
                        )));
                    }
                    None
                }
                Coefficients::Parent(pos) => match node.parents.get(*pos) {
                    Some(p) if nodes[p.0].domain == (Domain::Vector { dim: terms.len() }) => {
                        Some(*pos)
                    }
                    _ => {
                        report.violations.push(structure(format!(
                            "coefficient parent must be a vector of dimension {}",
                            terms.len()
                        )));
                        None
                    }
                },
            };
            for term in terms {
                for &pos in term {
                    let ok = Some(pos) != vector_parent
                        && node
                            .parents
                            .get(pos)
                            .is_some_and(|p| !matches!(nodes[p.0].domain, Domain::Vector { .. }));
                    if !ok {
                        report.violations.push(structure(format!(
                            "design term refers to parent position {pos}, which is not a scalar parent"
                        )));
                    }
                }
            }
        }
        Distribution::GaussianPrior { mean, cov } => {
            if !node.parents.is_empty() {
                report.violations.push(structure("gaussian prior takes no parents".into()));
            }
            if node.domain != (Domain::Vector { dim: mean.len() }) {
                report
                    .violations
                    .push(structure("domain must be a vector matching the mean".into()));
            }
            let symmetric = cov.len() == mean.len()
                && cov.iter().all(|r| r.len() == mean.len())
                && (0..mean.len())
                    .all(|i| (0..i).all(|j| (cov[i][j] - cov[j][i]).abs() <= 1e-12));
            if !symmetric || distribution::cholesky(cov).is_none() {
                report
                    .violations
                    .push(param("covariance must be symmetric positive definite".into()));
            }
        }
        Distribution::SurvivalTransition { rate, step, knots } => {
            if node.domain.size() != Some(2) {
                report.violations.push(structure("needs a two-state (dead, alive) domain".into()));
            }
            let ok_parents = node.parents.len() == 2
                && nodes[node.parents[0].0].domain.size() == Some(2)
                && nodes[node.parents[1].0].domain.is_scalar_continuous();
            if !ok_parents {
                report.violations.push(structure(
                    "parents must be [two-state chain variable, scalar continuous level]".into(),
                ));
            }
            if !positive(*rate) || !positive(*step) {
                report.violations.push(param("rate and step must be positive".into()));
            }
            let increasing = knots.windows(2).all(|w| w[0].0 < w[1].0);
            let non_increasing = knots.windows(2).all(|w| w[0].1 >= w[1].1);
            let in_range = knots.iter().all(|&(_, s)| s > 0.0 && s <= 1.0);
            if knots.is_empty() || !increasing || !non_increasing || !in_range {
                report.violations.push(param(
                    "survival knots must be sorted, non-increasing and within (0, 1]".into(),
                ));
            }
        }
    }
}

/// Partial instantiation of diagram variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    assignments: BTreeMap<VariableId, Value>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one observation after checking it against the variable's domain.
    pub fn observe(&mut self, d: &InfluenceDiagram, id: VariableId, value: Value) -> Result<()> {
        let node = d.node(id)?;
        if !node.domain.contains(&value) {
            return Err(Error::OutOfDomain {
                node: node.name.clone(),
                value: d.format_value(id, &value),
            });
        }
        if self.assignments.contains_key(&id) {
            return Err(Error::Argument(format!("`{}` observed twice", node.name)));
        }
        self.assignments.insert(id, value);
        Ok(())
    }

    /// Observes a discrete variable by label.
    pub fn observe_label(&mut self, d: &InfluenceDiagram, name: &str, label: &str) -> Result<()> {
        let id = d.id(name)?;
        let state = d.nodes[id.0].domain.state(label).ok_or_else(|| Error::OutOfDomain {
            node: name.to_string(),
            value: label.to_string(),
        })?;
        self.observe(d, id, Value::State(state))
    }

    pub fn observe_real(&mut self, d: &InfluenceDiagram, name: &str, x: f64) -> Result<()> {
        let id = d.id(name)?;
        self.observe(d, id, Value::Real(x))
    }

    pub fn get(&self, id: VariableId) -> Option<&Value> {
        self.assignments.get(&id)
    }

    pub fn contains(&self, id: VariableId) -> bool {
        self.assignments.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VariableId, &Value)> {
        self.assignments.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Assignment of values to diagram variables; total once fully sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    values: Vec<Option<Value>>,
}

impl Configuration {
    pub fn empty(d: &InfluenceDiagram) -> Self {
        Configuration {
            values: vec![None; d.len()],
        }
    }

    /// Empty configuration with the evidence filled in.
    pub fn from_evidence(d: &InfluenceDiagram, evidence: &Evidence) -> Self {
        let mut cfg = Self::empty(d);
        for (id, v) in evidence.iter() {
            cfg.values[id.0] = Some(v.clone());
        }
        cfg
    }

    /// Total configuration from discrete state indices, one per variable.
    pub fn from_states(states: &[usize]) -> Self {
        Configuration {
            values: states.iter().map(|&s| Some(Value::State(s))).collect(),
        }
    }

    pub fn get(&self, id: VariableId) -> Option<&Value> {
        self.values.get(id.0).and_then(Option::as_ref)
    }

    pub fn set(&mut self, id: VariableId, value: Value) {
        self.values[id.0] = Some(value);
    }

    pub fn clear(&mut self, id: VariableId) {
        self.values[id.0] = None;
    }

    pub fn state(&self, id: VariableId) -> Option<usize> {
        self.get(id).and_then(Value::state)
    }

    pub fn is_total(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<Value>] {
        &self.values
    }

    pub fn honors(&self, evidence: &Evidence) -> bool {
        evidence.iter().all(|(id, v)| self.get(id) == Some(v))
    }
}

/// Markov blanket of a node: parents, children and the children's other parents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blanket {
    pub parents: Vec<VariableId>,
    pub children: Vec<VariableId>,
    pub co_parents: Vec<VariableId>,
}

impl InfluenceDiagram {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Unvalidated form of this diagram, e.g. for editing or serialising.
    pub fn to_spec(&self) -> DiagramSpec {
        DiagramSpec {
            nodes: self.nodes.clone(),
            chain: self.chain.clone(),
        }
    }

    pub fn node(&self, id: VariableId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn name(&self, id: VariableId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn id(&self, name: &str) -> Result<VariableId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .map(VariableId)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = VariableId> {
        (0..self.nodes.len()).map(VariableId)
    }

    pub fn children(&self, id: VariableId) -> &[VariableId] {
        &self.children[id.0]
    }

    pub fn chain(&self) -> Option<&[VariableId]> {
        self.chain.as_deref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Topological order with ties broken by index.
    pub fn order(&self) -> &[VariableId] {
        &self.order
    }

    pub fn is_orphan(&self, id: VariableId) -> bool {
        self.nodes[id.0].parents.is_empty()
    }

    /// Display form of a value: label for discrete states, number otherwise.
    pub fn format_value(&self, id: VariableId, value: &Value) -> String {
        match value {
            Value::State(s) => self.nodes[id.0]
                .domain
                .labels()
                .get(*s)
                .cloned()
                .unwrap_or_else(|| format!("<state {s}>")),
            Value::Real(x) => format!("{x}"),
            Value::Vector(v) => format!("{v:?}"),
        }
    }

    /// Numeric reading of a scalar value, for design terms.
    pub(crate) fn numeric(&self, id: VariableId, value: &Value) -> Option<f64> {
        match value {
            Value::State(s) => self.numeric[id.0].get(*s).copied(),
            Value::Real(x) => Some(*x),
            Value::Vector(_) => None,
        }
    }

    fn parent_value<'a>(
        &self,
        node: VariableId,
        parent: VariableId,
        cfg: &'a Configuration,
    ) -> Result<&'a Value> {
        cfg.get(parent).ok_or_else(|| Error::MissingAssignment {
            node: self.name(node).to_string(),
            missing: self.name(parent).to_string(),
        })
    }

    /// Mixed-radix index of the parents' states in `cfg`.
    pub(crate) fn parent_tuple(&self, id: VariableId, cfg: &Configuration) -> Result<usize> {
        let node = &self.nodes[id.0];
        let mut index = 0;
        for (k, &p) in node.parents.iter().enumerate() {
            let value = self.parent_value(id, p, cfg)?;
            let s = value.state().ok_or_else(|| Error::OutOfDomain {
                node: self.name(p).to_string(),
                value: self.format_value(p, value),
            })?;
            index += s * self.strides[id.0][k];
        }
        Ok(index)
    }

    /// Mean of a Gaussian-linear node given its parents.
    pub(crate) fn linear_mean(&self, id: VariableId, cfg: &Configuration) -> Result<f64> {
        let node = &self.nodes[id.0];
        let Distribution::GaussianLinear {
            coefficients, terms, ..
        } = &node.dist
        else {
            unreachable!("linear_mean on {}", node.dist.kind());
        };
        let design = self.design_row(id, cfg)?;
        let weights: &[f64] = match coefficients {
            Coefficients::Fixed(w) => w,
            Coefficients::Parent(pos) => {
                let p = node.parents[*pos];
                let v = self.parent_value(id, p, cfg)?;
                v.vector().ok_or_else(|| Error::OutOfDomain {
                    node: self.name(p).to_string(),
                    value: self.format_value(p, v),
                })?
            }
        };
        debug_assert_eq!(weights.len(), terms.len());
        Ok(weights.iter().zip(&design).map(|(w, x)| w * x).sum())
    }

    /// Design vector (one entry per term) of a Gaussian-linear node.
    pub(crate) fn design_row(&self, id: VariableId, cfg: &Configuration) -> Result<Vec<f64>> {
        let node = &self.nodes[id.0];
        let Distribution::GaussianLinear { terms, .. } = &node.dist else {
            unreachable!("design_row on {}", node.dist.kind());
        };
        terms
            .iter()
            .map(|term| {
                term.iter().try_fold(1.0, |acc, &pos| {
                    let p = node.parents[pos];
                    let v = self.parent_value(id, p, cfg)?;
                    let x = self.numeric(p, v).ok_or_else(|| Error::OutOfDomain {
                        node: self.name(p).to_string(),
                        value: self.format_value(p, v),
                    })?;
                    Ok(acc * x)
                })
            })
            .collect()
    }
}

/// Probability (discrete) or density (continuous) of the node's value in
/// `cfg` given its parents' values in `cfg`.
pub fn conditional_density(d: &InfluenceDiagram, id: VariableId, cfg: &Configuration) -> Result<f64> {
    let node = d.node(id)?;
    let value = cfg.get(id).ok_or_else(|| Error::MissingAssignment {
        node: node.name.clone(),
        missing: node.name.clone(),
    })?;
    if !node.domain.contains(value) {
        // parents must still be assigned for the call to be well-formed
        for &p in &node.parents {
            d.parent_value(id, p, cfg)?;
        }
        return Ok(0.0);
    }
    Ok(match &node.dist {
        Distribution::Cpt { rows } => {
            let row = d.parent_tuple(id, cfg)?;
            rows[row][value.state().expect("discrete domain")]
        }
        Distribution::ShiftedExponential { rate, shift } => {
            let row = d.parent_tuple(id, cfg)?;
            distribution::shifted_exponential_pdf(value.real().expect("scalar"), rate[row], shift[row])
        }
        Distribution::TwoPhase {
            rate0,
            rate1,
            shift,
            gate,
        } => {
            let row = d.parent_tuple(id, cfg)?;
            let t = value.real().expect("scalar");
            if gate[row] {
                distribution::two_phase_pdf(t, rate0[row], rate1[row], shift[row])
            } else {
                distribution::shifted_exponential_pdf(t, rate0[row], shift[row])
            }
        }
        Distribution::GaussianLinear { sigma, .. } => {
            let mean = d.linear_mean(id, cfg)?;
            distribution::normal_pdf(value.real().expect("scalar"), mean, *sigma)
        }
        Distribution::GaussianPrior { mean, cov } => {
            distribution::mvn_pdf(value.vector().expect("vector"), mean, cov)
        }
        Distribution::SurvivalTransition { rate, step, knots } => {
            let prev = d.parent_value(id, node.parents[0], cfg)?;
            let level = d.parent_value(id, node.parents[1], cfg)?;
            let level = level.real().ok_or_else(|| Error::OutOfDomain {
                node: d.name(node.parents[1]).to_string(),
                value: d.format_value(node.parents[1], level),
            })?;
            let stay = distribution::survival_factor(
                *rate,
                *step,
                distribution::interpolate_clamped(knots, level),
            );
            match (prev.state(), value.state()) {
                (Some(ALIVE), Some(ALIVE)) => stay,
                (Some(ALIVE), Some(DEAD)) => 1.0 - stay,
                (Some(DEAD), Some(DEAD)) => 1.0,
                _ => 0.0,
            }
        }
    })
}

/// Product of every node's conditional density; `cfg` must be total.
pub fn joint_density(d: &InfluenceDiagram, cfg: &Configuration) -> Result<f64> {
    let mut product = 1.0;
    for id in d.ids() {
        product *= conditional_density(d, id, cfg)?;
        if product == 0.0 {
            // keep walking so unassigned variables are still reported
            for rest in d.ids().skip(id.0 + 1) {
                if cfg.get(rest).is_none() {
                    return Err(Error::MissingAssignment {
                        node: d.name(rest).to_string(),
                        missing: d.name(rest).to_string(),
                    });
                }
            }
            return Ok(0.0);
        }
    }
    Ok(product)
}

pub fn markov_blanket(d: &InfluenceDiagram, id: VariableId) -> Result<Blanket> {
    let node = d.node(id)?;
    let mut parents = node.parents.clone();
    parents.sort();
    let children = d.children(id).to_vec();
    let co_parents: BTreeSet<VariableId> = children
        .iter()
        .flat_map(|c| d.nodes[c.0].parents.iter().copied())
        .filter(|&p| p != id)
        .collect();
    Ok(Blanket {
        parents,
        children,
        co_parents: co_parents.into_iter().collect(),
    })
}

pub fn topological_order(d: &InfluenceDiagram) -> Vec<VariableId> {
    d.order.clone()
}
