//! Drug-toxicity model for cancer therapy monitoring.
//!
//! Bone-marrow dysfunction follows `r_i = a0 + r_{i-1} (a1 + a2 d_i) + e_i`
//! with `e_i ~ N(0, sigma^2)`, unknown coefficients `a` under a Gaussian
//! prior, and binary doses `d_i`. The patient's alive/dead chain survives a
//! step with probability `exp(-k T (1 - s(r_{i-1})))`; death is absorbing.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution as _, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagram::{Domain, DiagramSpec, Evidence, InfluenceDiagram, Value, VariableId};
use crate::distribution::{self, Coefficients, Distribution, ALIVE};
use crate::error::{Error, Result};
use crate::sampler::{chain_rng, Acceptance, Sampler, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToxicityParams {
    pub alpha_mean: [f64; 3],
    pub alpha_cov: [[f64; 3]; 3],
    /// Disturbance standard deviation, in dysfunction units.
    pub sigma: f64,
    /// Rate of infection bouts (per month).
    pub infection_rate: f64,
    /// Step length (months).
    pub step: f64,
    /// `(r, s(r))` knots of the survival-given-infection curve.
    pub survival_knots: Vec<(f64, f64)>,
    /// Upper bound of the dysfunction scale.
    pub w: f64,
    pub horizon: usize,
    pub r0: f64,
    /// Distance from the interval ends used when clamping rollouts.
    pub clamp_epsilon: f64,
}

impl Default for ToxicityParams {
    fn default() -> Self {
        let w = 10.0;
        ToxicityParams {
            alpha_mean: [0.5, 0.7, 0.2],
            alpha_cov: [[0.04, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.01]],
            sigma: 0.3,
            infection_rate: 0.5,
            step: 1.0,
            survival_knots: vec![(0.0, 1.0), (w / 2.0, 0.7), (w, 0.1)],
            w,
            horizon: 20,
            r0: 1.0,
            clamp_epsilon: 1e-6,
        }
    }
}

impl ToxicityParams {
    pub fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Argument(format!("toxicity parameters: {msg}")));
        if !(self.sigma > 0.0 && self.infection_rate > 0.0 && self.step > 0.0 && self.w > 0.0) {
            return bad("sigma, k, T and w must be positive");
        }
        let cov: Vec<Vec<f64>> = self.alpha_cov.iter().map(|r| r.to_vec()).collect();
        let symmetric = (0..3).all(|i| (0..3).all(|j| self.alpha_cov[i][j] == self.alpha_cov[j][i]));
        if !symmetric || distribution::cholesky(&cov).is_none() {
            return bad("alpha covariance must be symmetric positive definite");
        }
        let knots = &self.survival_knots;
        if knots.is_empty()
            || !knots.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 >= w[1].1)
            || !knots.iter().all(|&(_, s)| s > 0.0 && s <= 1.0)
        {
            return bad("survival knots must be sorted, non-increasing and in (0, 1]");
        }
        if !(self.r0 > 0.0 && self.r0 < self.w) {
            return bad("r0 must lie in (0, w)");
        }
        if !(self.clamp_epsilon > 0.0 && self.clamp_epsilon < self.w / 2.0) {
            return bad("clamp epsilon must be small and positive");
        }
        Ok(())
    }

    fn cov_rows(&self) -> Vec<Vec<f64>> {
        self.alpha_cov.iter().map(|r| r.to_vec()).collect()
    }

    fn clamp(&self, r: f64) -> (f64, bool) {
        let (lo, hi) = (self.clamp_epsilon, self.w - self.clamp_epsilon);
        if r < lo {
            (lo, true)
        } else if r > hi {
            (hi, true)
        } else {
            (r, false)
        }
    }
}

/// Ids of the toxicity diagram's nodes, indexed by time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ToxicityNodes {
    pub alpha: VariableId,
    /// `R_0 ..= R_n`.
    pub dysfunction: Vec<VariableId>,
    /// `D_1 ..= D_n` (index 0 is `D_1`).
    pub dose: Vec<VariableId>,
    /// `X_0 ..= X_n`.
    pub state: Vec<VariableId>,
}

/// Builds the diagram over `horizon` steps.
pub fn build_toxicity_model(p: &ToxicityParams, horizon: usize) -> Result<(InfluenceDiagram, ToxicityNodes)> {
    p.check()?;
    let mut s = DiagramSpec::new();
    let level = || Domain::Interval { lower: 0.0, upper: p.w };
    let life = || Domain::discrete(["dead", "alive"]);
    let alpha = s.add(
        "alpha",
        Domain::Vector { dim: 3 },
        &[],
        Distribution::GaussianPrior {
            mean: p.alpha_mean.to_vec(),
            cov: p.cov_rows(),
        },
    );
    let r0 = s.add(
        "R0",
        level(),
        &[],
        Distribution::GaussianLinear {
            coefficients: Coefficients::Fixed(vec![p.r0]),
            terms: vec![vec![]],
            sigma: p.sigma,
        },
    );
    let x0 = s.add("X0", life(), &[], Distribution::Cpt { rows: vec![vec![0.0, 1.0]] });
    let mut nodes = ToxicityNodes {
        alpha,
        dysfunction: vec![r0],
        dose: Vec::new(),
        state: vec![x0],
    };
    for i in 1..=horizon {
        let d = s.add(
            format!("D{i}"),
            Domain::discrete(["0", "1"]),
            &[],
            Distribution::Cpt { rows: vec![vec![0.5, 0.5]] },
        );
        let prev_r = nodes.dysfunction[i - 1];
        let r = s.add(
            format!("R{i}"),
            level(),
            &[alpha, prev_r, d],
            // mean = a0 * 1 + a1 * r_{i-1} + a2 * r_{i-1} d_i
            Distribution::GaussianLinear {
                coefficients: Coefficients::Parent(0),
                terms: vec![vec![], vec![1], vec![1, 2]],
                sigma: p.sigma,
            },
        );
        let x = s.add(
            format!("X{i}"),
            life(),
            &[nodes.state[i - 1], prev_r],
            Distribution::SurvivalTransition {
                rate: p.infection_rate,
                step: p.step,
                knots: p.survival_knots.clone(),
            },
        );
        nodes.dose.push(d);
        nodes.dysfunction.push(r);
        nodes.state.push(x);
    }
    Ok((s.build()?, nodes))
}

/// Probability of surviving one step at dysfunction `r`.
pub fn survival_prob(r: f64, p: &ToxicityParams) -> Result<f64> {
    if !(r > 0.0 && r < p.w) {
        return Err(Error::OutOfDomain {
            node: "R".into(),
            value: format!("{r} (must lie in (0, {}))", p.w),
        });
    }
    let s = distribution::interpolate_clamped(&p.survival_knots, r);
    Ok(distribution::survival_factor(p.infection_rate, p.step, s))
}

/// Observed past: doses `d_1..d_k`, levels `r_0..r_k`, states `x_0..x_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct History {
    pub doses: Vec<u8>,
    pub dysfunction: Vec<f64>,
    pub alive: Vec<bool>,
}

impl History {
    pub fn steps(&self) -> usize {
        self.doses.len()
    }

    fn check(&self, p: &ToxicityParams) -> Result<()> {
        let k = self.doses.len();
        if k < 1 {
            return Err(Error::Argument("history needs at least one step".into()));
        }
        if self.dysfunction.len() != k + 1 || self.alive.len() != k + 1 {
            return Err(Error::Argument(format!(
                "history with {k} doses needs {} levels and states",
                k + 1
            )));
        }
        if self.doses.iter().any(|&d| d > 1) {
            return Err(Error::Argument("doses must be 0 or 1".into()));
        }
        if let Some(r) = self.dysfunction.iter().find(|&&r| !(r > 0.0 && r < p.w)) {
            return Err(Error::OutOfDomain {
                node: "R".into(),
                value: format!("{r}"),
            });
        }
        if !self.alive.iter().all(|&a| a) {
            return Err(Error::Argument("patient must be alive through the last observed step".into()));
        }
        Ok(())
    }

    /// Regression rows `(1, r_{i-1}, r_{i-1} d_i)` and responses `r_i`.
    pub fn design(&self) -> (Vec<[f64; 3]>, Vec<f64>) {
        let rows = (1..=self.doses.len())
            .map(|i| {
                let prev = self.dysfunction[i - 1];
                [1.0, prev, prev * self.doses[i - 1] as f64]
            })
            .collect();
        (rows, self.dysfunction[1..].to_vec())
    }
}

/// Simulates levels under known coefficients. States are recorded as alive
/// throughout: the learning step conditions on survival, which carries no
/// information about the coefficients once the levels are observed.
pub fn simulate_history(p: &ToxicityParams, alpha: [f64; 3], doses: &[u8], seed: u64) -> History {
    let mut rng = chain_rng(seed, u64::MAX);
    let noise = Normal::new(0.0, p.sigma).expect("positive sigma");
    let mut levels = vec![p.r0];
    for &d in doses {
        let prev = *levels.last().expect("non-empty");
        let raw = alpha[0] + prev * (alpha[1] + alpha[2] * d as f64) + noise.sample(&mut rng);
        levels.push(p.clamp(raw).0);
    }
    History {
        doses: doses.to_vec(),
        dysfunction: levels,
        alive: vec![true; doses.len() + 1],
    }
}

/// Gaussian belief over the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaBelief {
    pub mean: [f64; 3],
    pub cov: [[f64; 3]; 3],
}

impl AlphaBelief {
    pub fn point(alpha: [f64; 3]) -> Self {
        AlphaBelief {
            mean: alpha,
            cov: [[0.0; 3]; 3],
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let cov = Matrix3::from_fn(|i, j| self.cov[i][j]);
        if cov.iter().all(|&x| x == 0.0) {
            return self.mean;
        }
        let l = cov.cholesky().expect("belief covariance is positive definite").l();
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let x = Vector3::from(self.mean) + l * z;
        [x[0], x[1], x[2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPosterior {
    /// Conjugate closed form.
    pub exact: AlphaBelief,
    /// Draws of the coefficient node from the generic composite sampler.
    pub samples: Vec<[f64; 3]>,
    pub sample_mean: [f64; 3],
    pub sample_cov: [[f64; 3]; 3],
}

/// Conjugate Gaussian posterior of the coefficients given the history.
pub fn alpha_posterior_closed_form(p: &ToxicityParams, history: &History) -> Result<AlphaBelief> {
    p.check()?;
    history.check(p)?;
    let prior_cov = Matrix3::from_fn(|i, j| p.alpha_cov[i][j]);
    let prior_prec = prior_cov.try_inverse().ok_or_else(|| Error::Argument("singular prior".into()))?;
    let noise_prec = 1.0 / (p.sigma * p.sigma);
    let (rows, ys) = history.design();
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for (row, y) in rows.iter().zip(&ys) {
        let x = Vector3::from(*row);
        xtx += x * x.transpose();
        xty += x * *y;
    }
    let post_cov = (prior_prec + xtx * noise_prec)
        .try_inverse()
        .ok_or_else(|| Error::Argument("singular posterior precision".into()))?;
    let post_mean = post_cov * (prior_prec * Vector3::from(p.alpha_mean) + xty * noise_prec);
    Ok(AlphaBelief {
        mean: [post_mean[0], post_mean[1], post_mean[2]],
        cov: std::array::from_fn(|i| std::array::from_fn(|j| post_cov[(i, j)])),
    })
}

/// Learns the coefficient posterior both in closed form and by running the
/// composite sampler on the diagram with the history as evidence.
pub fn learn_alpha_posterior(p: &ToxicityParams, history: &History, m: usize, seed: u64) -> Result<AlphaPosterior> {
    let exact = alpha_posterior_closed_form(p, history)?;
    let k = history.steps();
    let (d, ids) = build_toxicity_model(p, k)?;
    let mut evidence = Evidence::new();
    for i in 0..=k {
        evidence.observe(&d, ids.dysfunction[i], Value::Real(history.dysfunction[i]))?;
        evidence.observe(&d, ids.state[i], Value::State(ALIVE))?;
        if i > 0 {
            evidence.observe(&d, ids.dose[i - 1], Value::State(history.doses[i - 1] as usize))?;
        }
    }
    // With a single free node the Gibbs step draws from its exact
    // conditional, so positivity-tested forward seeds suffice.
    let config = SamplerConfig {
        m,
        h: 1,
        seed,
        acceptance: Acceptance::Support,
        ..Default::default()
    };
    let set = Sampler::new(&d, &evidence)?.composite_sample(&config)?;
    let samples: Vec<[f64; 3]> = set
        .histories
        .iter()
        .map(|h| {
            let v = h.get(ids.alpha).and_then(Value::vector).expect("alpha sampled");
            [v[0], v[1], v[2]]
        })
        .collect();
    let (sample_mean, sample_cov) = moments(&samples);
    Ok(AlphaPosterior {
        exact,
        samples,
        sample_mean,
        sample_cov,
    })
}

/// Sample mean and (n - 1)-normalised covariance.
pub fn moments(samples: &[[f64; 3]]) -> ([f64; 3], [[f64; 3]; 3]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    for s in samples {
        for i in 0..3 {
            mean[i] += s[i] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for s in samples {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    (mean, cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalForecast {
    /// `P(X_{k+j} = alive)` for `j = 1..=plan length`.
    pub alive: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Rollout levels pulled back inside `(0, w)`.
    pub clamped: u64,
    pub rollouts: usize,
}

/// Monte Carlo forecast of survival under a dose plan, starting alive at
/// level `r_k`. Each rollout draws coefficients from the belief, propagates
/// the levels, and multiplies the per-step survival factors.
pub fn predict_survival(
    p: &ToxicityParams,
    belief: &AlphaBelief,
    r_k: f64,
    plan: &[u8],
    rollouts: usize,
    seed: u64,
) -> Result<SurvivalForecast> {
    p.check()?;
    if !(r_k > 0.0 && r_k < p.w) {
        return Err(Error::OutOfDomain {
            node: "R".into(),
            value: format!("{r_k}"),
        });
    }
    if rollouts == 0 {
        return Err(Error::Argument("need at least one rollout".into()));
    }
    let steps = plan.len();
    let noise = Normal::new(0.0, p.sigma).expect("positive sigma");
    let mut sum = vec![0.0; steps];
    let mut sum_sq = vec![0.0; steps];
    let mut clamped = 0;
    for j in 0..rollouts {
        let mut rng = chain_rng(seed, j as u64);
        let alpha = belief.draw(&mut rng);
        let mut r = r_k;
        let mut alive = 1.0;
        for (i, &dose) in plan.iter().enumerate() {
            alive *= survival_prob(r, p)?;
            sum[i] += alive;
            sum_sq[i] += alive * alive;
            let raw = alpha[0] + r * (alpha[1] + alpha[2] * dose as f64) + noise.sample(&mut rng);
            let (next, hit) = p.clamp(raw);
            clamped += hit as u64;
            r = next;
        }
    }
    let n = rollouts as f64;
    let alive: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_errors = alive
        .iter()
        .zip(&sum_sq)
        .map(|(mean, sq)| {
            if rollouts < 2 {
                0.0
            } else {
                (((sq - n * mean * mean) / (n - 1.0)).max(0.0) / n).sqrt()
            }
        })
        .collect();
    Ok(SurvivalForecast {
        alive,
        std_errors,
        clamped,
        rollouts,
    })
}
