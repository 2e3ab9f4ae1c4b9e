//! Forward, Gibbs and composite Monte Carlo over a validated diagram with
//! evidence, and the two posterior estimators built on the sampled histories.
//!
//! Every chain owns a ChaCha stream selected by its index under the root
//! seed, so chains can run in parallel and the reduced output does not
//! depend on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Normal, StandardNormal};
use rayon::prelude::*;

use crate::diagram::{conditional_density, Configuration, Evidence, InfluenceDiagram, Value, VariableId};
use crate::distribution::{self, Coefficients, Distribution};
use crate::emc::{extract_emc, Revision};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanOrder {
    #[default]
    Fixed,
    /// A fresh random permutation of the free variables every sweep.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retain {
    /// Keep only the state after the last sweep of each chain.
    #[default]
    Last,
    /// Keep the state after every sweep.
    All,
}

/// How a completed forward sample is tested against non-orphan evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Acceptance {
    /// Accept with probability proportional to the evidence likelihood
    /// (mass, or density over its envelope). Accepted samples are exact
    /// posterior draws.
    #[default]
    Likelihood,
    /// Accept iff every evidence node has positive mass or density.
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Kernel,
    Mixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub m: usize,
    pub h: usize,
    pub seed: u64,
    pub max_rejections: u64,
    pub scan_order: ScanOrder,
    pub retain: Retain,
    pub acceptance: Acceptance,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            m: 1000,
            h: 5,
            seed: 0,
            max_rejections: 100_000,
            scan_order: ScanOrder::Fixed,
            retain: Retain::Last,
            acceptance: Acceptance::Likelihood,
        }
    }
}

impl SamplerConfig {
    fn check(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Argument("m must be at least 1".into()));
        }
        if self.max_rejections == 0 {
            return Err(Error::Argument("max_rejections must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub forward_attempts: u64,
    pub rejections: u64,
    /// Gibbs updates per variable.
    pub gibbs_updates: Vec<u64>,
    /// Gibbs updates per variable that changed the value.
    pub gibbs_moves: Vec<u64>,
}

impl Diagnostics {
    fn new(n: usize) -> Self {
        Diagnostics {
            gibbs_updates: vec![0; n],
            gibbs_moves: vec![0; n],
            ..Default::default()
        }
    }

    fn merge(&mut self, other: &Diagnostics) {
        self.forward_attempts += other.forward_attempts;
        self.rejections += other.rejections;
        for (a, b) in self.gibbs_updates.iter_mut().zip(&other.gibbs_updates) {
            *a += b;
        }
        for (a, b) in self.gibbs_moves.iter_mut().zip(&other.gibbs_moves) {
            *a += b;
        }
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.forward_attempts == 0 {
            0.0
        } else {
            self.rejections as f64 / self.forward_attempts as f64
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        1.0 - self.rejection_rate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub histories: Vec<Configuration>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
    /// False when the chain check found a link that is not completely connected.
    pub reachability_ok: bool,
}

#[derive(Debug, Clone)]
enum Kernel {
    /// Single-site update from the Markov-blanket conditional.
    Discrete,
    /// Ancestral redraw of the node and all its descendants (none observed).
    Redraw(Vec<VariableId>),
    /// Closed-form Gaussian conditional of a Gaussian-prior coefficient node.
    Conjugate(Vec<VariableId>),
}

/// Read-only sampling context for one (diagram, evidence) pair.
pub struct Sampler<'a> {
    d: &'a InfluenceDiagram,
    evidence: &'a Evidence,
    free: Vec<VariableId>,
    kernels: Vec<Option<Kernel>>,
    masks: Vec<Option<Vec<bool>>>,
    accept_nodes: Vec<(VariableId, f64)>,
    warnings: Vec<String>,
    reachability_ok: bool,
}

/// Per-chain stream: one root seed, chain index as the ChaCha stream id.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            if u < p {
                return i;
            }
            u -= p;
            last = i;
        }
    }
    last
}

impl<'a> Sampler<'a> {
    pub fn new(d: &'a InfluenceDiagram, evidence: &'a Evidence) -> Result<Self> {
        let n = d.len();
        let free: Vec<VariableId> = d.order().iter().copied().filter(|&id| !evidence.contains(id)).collect();

        let mut masks = vec![None; n];
        let mut reachability_ok = true;
        let mut warnings = Vec::new();
        if let Some(chain) = d.chain() {
            let mut emc = extract_emc(d, chain)?;
            for (pos, &id) in chain.iter().enumerate() {
                if let Some(s) = evidence.get(id).and_then(Value::state) {
                    emc.restrict(pos, &[s])?;
                }
            }
            emc.revise_with(Revision::Bidirectional);
            if emc.is_infeasible() {
                let empty = (0..chain.len())
                    .find(|&p| emc.domain(p).is_empty())
                    .map(|p| emc.names()[p].clone())
                    .unwrap_or_default();
                return Err(Error::Contradictory(format!(
                    "chain revision leaves no value for `{empty}`"
                )));
            }
            reachability_ok = emc.gibbs_reachability_ok();
            for (pos, &id) in chain.iter().enumerate() {
                masks[id.0] = Some(emc.domain_mask(pos).to_vec());
            }
        }

        let mut kernels = vec![None; n];
        for &id in &free {
            kernels[id.0] = Self::kernel_for(d, evidence, id);
            let node = &d.nodes()[id.0];
            if let Distribution::Cpt { rows } = &node.dist {
                let point_mass = rows.iter().any(|r| r.iter().filter(|&&p| p > 0.0).count() == 1);
                if point_mass && !d.children(id).is_empty() && rows[0].len() > 1 {
                    warnings.push(format!(
                        "`{}` has point-mass rows (functional dependency); Gibbs moves through it may be blocked",
                        node.name
                    ));
                }
            }
        }

        let accept_nodes = evidence
            .iter()
            .filter(|(id, _)| !d.is_orphan(*id))
            .map(|(id, _)| (id, d.nodes()[id.0].dist.density_bound()))
            .collect();

        Ok(Sampler {
            d,
            evidence,
            free,
            kernels,
            masks,
            accept_nodes,
            warnings,
            reachability_ok,
        })
    }

    fn kernel_for(d: &InfluenceDiagram, evidence: &Evidence, id: VariableId) -> Option<Kernel> {
        let node = &d.nodes()[id.0];
        if node.domain.is_discrete() {
            return Some(Kernel::Discrete);
        }
        // descendant closure in topological order
        let mut in_block = vec![false; d.len()];
        in_block[id.0] = true;
        let mut block = Vec::new();
        for &v in d.order() {
            if in_block[v.0] || d.nodes()[v.0].parents.iter().any(|p| in_block[p.0]) {
                in_block[v.0] = true;
                block.push(v);
            }
        }
        if block.iter().all(|&v| !evidence.contains(v)) {
            return Some(Kernel::Redraw(block));
        }
        if let Distribution::GaussianPrior { .. } = node.dist {
            let children = d.children(id);
            let conjugate = children.iter().all(|&c| {
                let child = &d.nodes()[c.0];
                matches!(&child.dist, Distribution::GaussianLinear {
                    coefficients: Coefficients::Parent(pos), terms, ..
                } if child.parents[*pos] == id
                    && terms.iter().flatten().all(|&t| child.parents[t] != id))
            });
            if conjugate {
                return Some(Kernel::Conjugate(children.to_vec()));
            }
        }
        None
    }

    pub fn diagram(&self) -> &InfluenceDiagram {
        self.d
    }

    pub fn evidence(&self) -> &Evidence {
        self.evidence
    }

    /// Free variables in topological order.
    pub fn free(&self) -> &[VariableId] {
        &self.free
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn reachability_ok(&self) -> bool {
        self.reachability_ok
    }

    /// Revised domain of a chain variable, if the diagram declares a chain.
    pub fn mask(&self, id: VariableId) -> Option<&[bool]> {
        self.masks[id.0].as_deref()
    }

    /// Draws a value for `id` from `p(. | parents)` in `cfg`.
    pub fn sample_node<R: Rng + ?Sized>(&self, id: VariableId, cfg: &Configuration, rng: &mut R) -> Result<Value> {
        let d = self.d;
        let node = &d.nodes()[id.0];
        Ok(match &node.dist {
            Distribution::Cpt { rows } => {
                let row = d.parent_tuple(id, cfg)?;
                Value::State(draw_index(&rows[row], rng))
            }
            Distribution::ShiftedExponential { rate, shift } => {
                let row = d.parent_tuple(id, cfg)?;
                Value::Real(shift[row] + exp(rate[row], rng))
            }
            Distribution::TwoPhase {
                rate0,
                rate1,
                shift,
                gate,
            } => {
                let row = d.parent_tuple(id, cfg)?;
                let second = if gate[row] { exp(rate1[row], rng) } else { 0.0 };
                Value::Real(shift[row] + exp(rate0[row], rng) + second)
            }
            Distribution::GaussianLinear { sigma, .. } => {
                let mean = d.linear_mean(id, cfg)?;
                Value::Real(Normal::new(mean, *sigma).expect("validated sigma").sample(rng))
            }
            Distribution::GaussianPrior { mean, cov } => {
                let l = distribution::cholesky(cov).expect("validated covariance");
                let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = DVector::from_column_slice(mean) + l * z;
                Value::Vector(x.as_slice().to_vec())
            }
            Distribution::SurvivalTransition { .. } => {
                let mut probe = cfg.clone();
                let mut probs = [0.0; 2];
                for (s, p) in probs.iter_mut().enumerate() {
                    probe.set(id, Value::State(s));
                    *p = conditional_density(d, id, &probe)?;
                }
                Value::State(draw_index(&probs, rng))
            }
        })
    }

    /// One forward pass: free variables in causal order, evidence clamped.
    /// Returns `None` when the completed sample is rejected.
    pub fn forward_once<R: Rng + ?Sized>(&self, acceptance: Acceptance, rng: &mut R) -> Result<Option<Configuration>> {
        let mut cfg = Configuration::from_evidence(self.d, self.evidence);
        for &id in &self.free {
            let v = self.sample_node(id, &cfg, rng)?;
            // e.g. a Gaussian draw leaving an interval domain: zero joint density
            if !self.d.nodes()[id.0].domain.contains(&v) {
                return Ok(None);
            }
            cfg.set(id, v);
        }
        let mut weight = 1.0;
        for &(id, bound) in &self.accept_nodes {
            let p = conditional_density(self.d, id, &cfg)?;
            if p <= 0.0 {
                return Ok(None);
            }
            weight *= (p / bound).min(1.0);
        }
        let accepted = match acceptance {
            Acceptance::Support => true,
            Acceptance::Likelihood => weight >= 1.0 || rng.random::<f64>() < weight,
        };
        Ok(accepted.then_some(cfg))
    }

    /// Forward-samples until a sample is accepted or the rejection budget
    /// runs out.
    pub fn forward_sample<R: Rng + ?Sized>(
        &self,
        config: &SamplerConfig,
        rng: &mut R,
        diag: &mut Diagnostics,
    ) -> Result<Configuration> {
        let mut rejected_here = 0;
        loop {
            diag.forward_attempts += 1;
            match self.forward_once(config.acceptance, rng)? {
                Some(cfg) => return Ok(cfg),
                None => {
                    diag.rejections += 1;
                    rejected_here += 1;
                    if rejected_here >= config.max_rejections {
                        return Err(Error::RejectionBudget {
                            attempts: diag.forward_attempts,
                            rejections: diag.rejections,
                        });
                    }
                }
            }
        }
    }

    /// Normalised conditional of a free discrete node given its Markov
    /// blanket: `p(y | parents) * prod_children p(child | its parents)`,
    /// restricted to the node's revised domain.
    pub fn local_conditional(&self, id: VariableId, cfg: &mut Configuration) -> Result<Vec<f64>> {
        let d = self.d;
        let node = &d.nodes()[id.0];
        let size = node.domain.size().ok_or_else(|| {
            Error::Argument(format!("`{}` is continuous; no discrete conditional", node.name))
        })?;
        let original = cfg.get(id).cloned();
        let mask = self.masks[id.0].as_deref();
        let mut weights = vec![0.0; size];
        let mut result = Ok(());
        for (s, w) in weights.iter_mut().enumerate() {
            if mask.is_some_and(|m| !m[s]) {
                continue;
            }
            cfg.set(id, Value::State(s));
            match self.blanket_weight(id, cfg) {
                Ok(x) => *w = x,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        match original {
            Some(v) => cfg.set(id, v),
            None => cfg.clear(id),
        }
        result?;
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::BlanketInconsistency(node.name.clone()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(weights)
    }

    fn blanket_weight(&self, id: VariableId, cfg: &Configuration) -> Result<f64> {
        let mut w = conditional_density(self.d, id, cfg)?;
        for &c in self.d.children(id) {
            if w == 0.0 {
                break;
            }
            w *= conditional_density(self.d, c, cfg)?;
        }
        Ok(w)
    }

    fn conjugate_draw<R: Rng + ?Sized>(&self, id: VariableId, children: &[VariableId], cfg: &Configuration, rng: &mut R) -> Result<Value> {
        let Distribution::GaussianPrior { mean, cov } = &self.d.nodes()[id.0].dist else {
            unreachable!("conjugate kernel on a non-prior node");
        };
        let dim = mean.len();
        let prior_cov = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
        let prior_prec = prior_cov.try_inverse().expect("validated covariance");
        let mut precision = prior_prec.clone();
        let mut shift = &prior_prec * DVector::from_column_slice(mean);
        for &c in children {
            let Distribution::GaussianLinear { sigma, .. } = &self.d.nodes()[c.0].dist else {
                unreachable!();
            };
            let x = DVector::from_vec(self.d.design_row(c, cfg)?);
            let y = cfg.get(c).and_then(Value::real).ok_or_else(|| Error::MissingAssignment {
                node: self.d.name(id).to_string(),
                missing: self.d.name(c).to_string(),
            })?;
            let w = 1.0 / (sigma * sigma);
            precision += &x * x.transpose() * w;
            shift += x * (y * w);
        }
        let chol = precision.cholesky().expect("posterior precision is positive definite");
        let post_mean = chol.solve(&shift);
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular factor is invertible");
        Ok(Value::Vector((post_mean + noise).as_slice().to_vec()))
    }

    fn update<R: Rng + ?Sized>(&self, id: VariableId, cfg: &mut Configuration, rng: &mut R, diag: &mut Diagnostics) -> Result<()> {
        let before = cfg.get(id).cloned();
        match &self.kernels[id.0] {
            Some(Kernel::Discrete) => {
                let probs = self.local_conditional(id, cfg)?;
                cfg.set(id, Value::State(draw_index(&probs, rng)));
            }
            Some(Kernel::Redraw(block)) => {
                for &v in block {
                    let value = self.sample_node(v, cfg, rng)?;
                    cfg.set(v, value);
                }
            }
            Some(Kernel::Conjugate(children)) => {
                let value = self.conjugate_draw(id, children, cfg, rng)?;
                cfg.set(id, value);
            }
            None => return Err(Error::NoGibbsKernel(self.d.name(id).to_string())),
        }
        diag.gibbs_updates[id.0] += 1;
        if cfg.get(id) != before.as_ref() {
            diag.gibbs_moves[id.0] += 1;
        }
        Ok(())
    }

    /// Resamples every free variable once, in fixed or shuffled order.
    pub fn gibbs_sweep<R: Rng + ?Sized>(
        &self,
        cfg: &mut Configuration,
        scan: ScanOrder,
        rng: &mut R,
        diag: &mut Diagnostics,
    ) -> Result<()> {
        match scan {
            ScanOrder::Fixed => {
                for &id in &self.free {
                    self.update(id, cfg, rng, diag)?;
                }
            }
            ScanOrder::Random => {
                let mut order = self.free.clone();
                order.shuffle(rng);
                for id in order {
                    self.update(id, cfg, rng, diag)?;
                }
            }
        }
        Ok(())
    }

    /// Plain Gibbs chain from `start`, returning the state after each sweep.
    pub fn gibbs_chain<R: Rng + ?Sized>(
        &self,
        start: Configuration,
        sweeps: usize,
        scan: ScanOrder,
        rng: &mut R,
    ) -> Result<Vec<Configuration>> {
        let mut diag = Diagnostics::new(self.d.len());
        let mut cfg = start;
        let mut trace = Vec::with_capacity(sweeps);
        for _ in 0..sweeps {
            self.gibbs_sweep(&mut cfg, scan, rng, &mut diag)?;
            trace.push(cfg.clone());
        }
        Ok(trace)
    }

    fn run_chain(&self, config: &SamplerConfig, chain: u64) -> Result<(Vec<Configuration>, Diagnostics)> {
        let mut rng = chain_rng(config.seed, chain);
        let mut diag = Diagnostics::new(self.d.len());
        let mut cfg = self.forward_sample(config, &mut rng, &mut diag)?;
        let mut kept = Vec::new();
        for _ in 0..config.h {
            self.gibbs_sweep(&mut cfg, config.scan_order, &mut rng, &mut diag)?;
            if config.retain == Retain::All {
                kept.push(cfg.clone());
            }
        }
        if config.retain == Retain::Last || config.h == 0 {
            kept.push(cfg);
        }
        Ok((kept, diag))
    }

    /// Forward sampling until `m` consistent seeds, then `h` Gibbs sweeps
    /// from each seed.
    pub fn composite_sample(&self, config: &SamplerConfig) -> Result<SampleSet> {
        config.check()?;
        if config.h > 0 {
            if let Some(&id) = self.free.iter().find(|id| self.kernels[id.0].is_none()) {
                return Err(Error::NoGibbsKernel(self.d.name(id).to_string()));
            }
        }
        let chains: Vec<Result<(Vec<Configuration>, Diagnostics)>> = (0..config.m as u64)
            .into_par_iter()
            .map(|c| self.run_chain(config, c))
            .collect();
        let mut histories = Vec::with_capacity(config.m);
        let mut diagnostics = Diagnostics::new(self.d.len());
        for chain in chains {
            let (kept, diag) = chain?;
            histories.extend(kept);
            diagnostics.merge(&diag);
        }
        let mut warnings = self.warnings.clone();
        if config.h > 0 && !self.reachability_ok {
            warnings.push(
                "the embedded chain has a link that is not completely connected; \
                 Gibbs moves alone cannot reach every configuration, forward seeds carry the mixing"
                    .into(),
            );
        }
        Ok(SampleSet {
            histories,
            diagnostics,
            warnings,
            reachability_ok: self.reachability_ok,
        })
    }

    fn check_target(&self, target: VariableId) -> Result<usize> {
        let node = self.d.node(target)?;
        if self.evidence.contains(target) {
            return Err(Error::Argument(format!("`{}` is observed, not free", node.name)));
        }
        node.domain
            .size()
            .ok_or_else(|| Error::Argument(format!("`{}` is not discrete", node.name)))
    }

    /// Rao-Blackwellised table: average of exact local conditionals.
    pub fn mixture_table(&self, s: &SampleSet, target: VariableId) -> Result<PosteriorTable> {
        let size = self.check_target(target)?;
        let m = s.histories.len() as f64;
        let mut sum = vec![0.0; size];
        let mut sum_sq = vec![0.0; size];
        for history in &s.histories {
            let mut cfg = history.clone();
            let probs = self.local_conditional(target, &mut cfg)?;
            for (k, p) in probs.iter().enumerate() {
                sum[k] += p;
                sum_sq[k] += p * p;
            }
        }
        let probs: Vec<f64> = sum.iter().map(|x| x / m).collect();
        let std_errors = probs
            .iter()
            .zip(&sum_sq)
            .map(|(mean, sq)| {
                if m < 2.0 {
                    return 0.0;
                }
                let var = ((sq - m * mean * mean) / (m - 1.0)).max(0.0);
                (var / m).sqrt()
            })
            .collect();
        Ok(PosteriorTable {
            target,
            labels: self.d.nodes()[target.0].domain.labels().to_vec(),
            probs,
            std_errors,
        })
    }

    /// Counting table: fraction of histories taking each value.
    pub fn kernel_table(&self, s: &SampleSet, target: VariableId) -> Result<PosteriorTable> {
        let size = self.check_target(target)?;
        Ok(kernel_table_unchecked(self.d, s, target, size))
    }
}

fn exp<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    Exp::new(rate).expect("validated rate").sample(rng)
}

fn kernel_table_unchecked(d: &InfluenceDiagram, s: &SampleSet, target: VariableId, size: usize) -> PosteriorTable {
    let m = s.histories.len() as f64;
    let mut counts = vec![0usize; size];
    for h in &s.histories {
        if let Some(k) = h.state(target) {
            counts[k] += 1;
        }
    }
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / m).collect();
    let std_errors = probs.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
    PosteriorTable {
        target,
        labels: d.nodes()[target.0].domain.labels().to_vec(),
        probs,
        std_errors,
    }
}

/// Posterior estimate over a discrete target with per-value standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub target: VariableId,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl PosteriorTable {
    pub fn prob(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.probs[i])
    }
}

/// Local conditional of `node` at a copy of `cfg` (whole-domain, no revision).
pub fn gibbs_local_conditional(d: &InfluenceDiagram, node: VariableId, cfg: &Configuration) -> Result<Vec<f64>> {
    let evidence = Evidence::new();
    let sampler = Sampler {
        d,
        evidence: &evidence,
        free: Vec::new(),
        kernels: Vec::new(),
        masks: vec![None; d.len()],
        accept_nodes: Vec::new(),
        warnings: Vec::new(),
        reachability_ok: true,
    };
    let mut cfg = cfg.clone();
    sampler.local_conditional(node, &mut cfg)
}

/// One Gibbs sweep over the free variables of `cfg`.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    d: &InfluenceDiagram,
    evidence: &Evidence,
    cfg: &Configuration,
    scan: ScanOrder,
    rng: &mut R,
) -> Result<Configuration> {
    let sampler = Sampler::new(d, evidence)?;
    let mut out = cfg.clone();
    let mut diag = Diagnostics::new(d.len());
    sampler.gibbs_sweep(&mut out, scan, rng, &mut diag)?;
    Ok(out)
}

/// One forward attempt under chain stream 0 of `config.seed`; `None` if rejected.
pub fn forward_sample(d: &InfluenceDiagram, evidence: &Evidence, config: &SamplerConfig) -> Result<Option<Configuration>> {
    let sampler = Sampler::new(d, evidence)?;
    let mut rng = chain_rng(config.seed, 0);
    sampler.forward_once(config.acceptance, &mut rng)
}

pub fn composite_sample(d: &InfluenceDiagram, evidence: &Evidence, config: &SamplerConfig) -> Result<SampleSet> {
    Sampler::new(d, evidence)?.composite_sample(config)
}

/// Fraction of histories in which `target` takes `value`.
pub fn kernel_estimate(s: &SampleSet, target: VariableId, value: usize) -> f64 {
    let hits = s.histories.iter().filter(|h| h.state(target) == Some(value)).count();
    hits as f64 / s.histories.len() as f64
}

pub fn mixture_estimate(
    d: &InfluenceDiagram,
    s: &SampleSet,
    evidence: &Evidence,
    target: VariableId,
    value: usize,
) -> Result<f64> {
    let table = Sampler::new(d, evidence)?.mixture_table(s, target)?;
    Ok(table.probs.get(value).copied().unwrap_or(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryReport {
    pub estimator: Estimator,
    pub tables: Vec<PosteriorTable>,
    pub m: usize,
    pub h: usize,
    pub histories: usize,
    pub diagnostics: Diagnostics,
    pub reachability_warning: bool,
    pub warnings: Vec<String>,
}

/// Runs composite sampling once and estimates every target's posterior.
pub fn query(
    d: &InfluenceDiagram,
    evidence: &Evidence,
    config: &SamplerConfig,
    targets: &[VariableId],
    estimator: Estimator,
) -> Result<(QueryReport, SampleSet)> {
    let sampler = Sampler::new(d, evidence)?;
    for &t in targets {
        sampler.check_target(t)?;
    }
    let set = sampler.composite_sample(config)?;
    let tables = targets
        .iter()
        .map(|&t| match estimator {
            Estimator::Kernel => sampler.kernel_table(&set, t),
            Estimator::Mixture => sampler.mixture_table(&set, t),
        })
        .collect::<Result<Vec<_>>>()?;
    let report = QueryReport {
        estimator,
        tables,
        m: config.m,
        h: config.h,
        histories: set.histories.len(),
        diagnostics: set.diagnostics.clone(),
        reachability_warning: config.h > 0 && !set.reachability_ok,
        warnings: set.warnings.clone(),
    };
    Ok((report, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{Domain, DiagramSpec};

    fn chain3() -> InfluenceDiagram {
        let mut s = DiagramSpec::new();
        let x0 = s.add("X0", Domain::discrete(["a", "b"]), &[], Distribution::Cpt { rows: vec![vec![0.3, 0.7]] });
        let x1 = s.add(
            "X1",
            Domain::discrete(["a", "b"]),
            &[x0],
            Distribution::Cpt {
                rows: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            },
        );
        s.add(
            "X2",
            Domain::discrete(["a", "b"]),
            &[x1],
            Distribution::Cpt {
                rows: vec![vec![0.5, 0.5], vec![0.4, 0.6]],
            },
        );
        s.build().unwrap()
    }

    #[test]
    fn leaf_conditional_is_cpt_row() {
        let d = chain3();
        let cfg = Configuration::from_states(&[0, 1, 0]);
        let p = gibbs_local_conditional(&d, VariableId(2), &cfg).unwrap();
        assert_eq!(p, vec![0.4, 0.6]);
    }

    #[test]
    fn middle_conditional_matches_hand_computation() {
        let d = chain3();
        let cfg = Configuration::from_states(&[1, 0, 1]);
        let p = gibbs_local_conditional(&d, VariableId(1), &cfg).unwrap();
        let a = 0.2 * 0.5;
        let b = 0.8 * 0.6;
        assert!((p[0] - a / (a + b)).abs() < 1e-15);
    }

    #[test]
    fn no_free_variables_sweep_is_identity() {
        let d = chain3();
        let mut e = Evidence::new();
        for (name, label) in [("X0", "a"), ("X1", "b"), ("X2", "b")] {
            e.observe_label(&d, name, label).unwrap();
        }
        let cfg = Configuration::from_evidence(&d, &e);
        let mut rng = chain_rng(1, 0);
        let out = gibbs_sweep(&d, &e, &cfg, ScanOrder::Random, &mut rng).unwrap();
        assert_eq!(out, cfg);
    }

    #[test]
    fn no_evidence_never_rejects() {
        let d = chain3();
        let e = Evidence::new();
        let s = composite_sample(
            &d,
            &e,
            &SamplerConfig {
                m: 500,
                h: 0,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.diagnostics.rejections, 0);
        assert_eq!(s.histories.len(), 500);
    }

    #[test]
    fn orphan_evidence_never_rejects() {
        let d = chain3();
        let mut e = Evidence::new();
        e.observe_label(&d, "X0", "a").unwrap();
        let s = composite_sample(
            &d,
            &e,
            &SamplerConfig {
                m: 300,
                h: 0,
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.diagnostics.rejections, 0);
        assert!(s.histories.iter().all(|h| h.state(VariableId(0)) == Some(0)));
    }

    #[test]
    fn estimators_sum_to_one() {
        let d = chain3();
        let mut e = Evidence::new();
        e.observe_label(&d, "X2", "b").unwrap();
        let config = SamplerConfig {
            m: 400,
            h: 3,
            seed: 11,
            ..Default::default()
        };
        let (report, set) = query(&d, &e, &config, &[VariableId(0)], Estimator::Mixture).unwrap();
        let total: f64 = report.tables[0].probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let kernel: f64 = (0..2).map(|v| kernel_estimate(&set, VariableId(0), v)).sum();
        assert_eq!(kernel, 1.0);
    }

    #[test]
    fn observed_target_is_rejected() {
        let d = chain3();
        let mut e = Evidence::new();
        e.observe_label(&d, "X2", "b").unwrap();
        let config = SamplerConfig::default();
        assert!(query(&d, &e, &config, &[VariableId(2)], Estimator::Kernel).is_err());
    }

    #[test]
    fn impossible_evidence_exhausts_budget() {
        let mut s = DiagramSpec::new();
        let a = s.add("A", Domain::discrete(["0", "1"]), &[], Distribution::Cpt { rows: vec![vec![1.0, 0.0]] });
        s.add(
            "B",
            Domain::discrete(["0", "1"]),
            &[a],
            Distribution::Cpt {
                rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
        );
        let d = s.build().unwrap();
        let mut e = Evidence::new();
        e.observe_label(&d, "B", "1").unwrap();
        let err = composite_sample(
            &d,
            &e,
            &SamplerConfig {
                m: 1,
                h: 0,
                max_rejections: 50,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::RejectionBudget { attempts: 50, rejections: 50 }));
    }

    #[test]
    fn same_seed_same_output() {
        let d = chain3();
        let mut e = Evidence::new();
        e.observe_label(&d, "X2", "a").unwrap();
        let config = SamplerConfig {
            m: 200,
            h: 4,
            seed: 42,
            scan_order: ScanOrder::Random,
            ..Default::default()
        };
        let a = composite_sample(&d, &e, &config).unwrap();
        let b = composite_sample(&d, &e, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn retain_all_keeps_every_sweep() {
        let d = chain3();
        let e = Evidence::new();
        let config = SamplerConfig {
            m: 10,
            h: 4,
            retain: Retain::All,
            ..Default::default()
        };
        assert_eq!(composite_sample(&d, &e, &config).unwrap().histories.len(), 40);
    }
}
