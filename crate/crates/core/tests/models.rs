mod common;

use rand::Rng;
use serde::{Deserialize, Serialize};

use common::{brute_force, convolution_density, evidence_from, exp_density, integrate, prior_draw, random_discrete_diagram, rng};
use tempid::models::enumeration::enumeration_oracle;
use tempid::models::infection::{build_infection_model, infection_posterior_oracle, tobs_density, InfectionParams, FEVER};
use tempid::models::toxicity::{
    alpha_posterior_closed_form, build_toxicity_model, learn_alpha_posterior, moments, predict_survival, simulate_history,
    AlphaBelief, History, ToxicityParams,
};
use tempid::sampler::chain_rng;
use tempid::{
    conditional_density, query, Configuration, Error, Estimator, Evidence, Sampler, SamplerConfig, Value, VariableId,
};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/infection_posterior_t3.json");

#[derive(Debug, Serialize, Deserialize)]
struct PosteriorFixture {
    t_obs: f64,
    states: Vec<String>,
    posterior: Vec<f64>,
}

/// Bayes rule over paths with the time density taken from quadrature and
/// the textbook exponential, not from the library.
fn independent_posterior(p: &InfectionParams, t: f64) -> Vec<f64> {
    let n = p.states.len();
    let mut post = vec![0.0; n];
    for x0 in 0..n {
        for x1 in 0..n {
            let path: f64 = p.prior[x0] * p.transition[x0][x1] * (0..n).map(|x2| p.transition[x1][x2]).sum::<f64>();
            if path == 0.0 {
                continue;
            }
            let density = if x1 < FEVER {
                convolution_density(t, p.rate0[x0][x1], p.rate1[x1], p.shift[x0][x1])
            } else {
                exp_density(t, p.rate0[x0][x1], p.shift[x0][x1])
            };
            post[x0] += path * density;
        }
    }
    let total: f64 = post.iter().sum();
    post.iter().map(|x| x / total).collect()
}

#[test]
fn oracle_matches_independent_bayes_rule() {
    let p = InfectionParams::default();
    for t in [0.7, 1.6, 3.0, 6.5] {
        let a = infection_posterior_oracle(&p, t).unwrap();
        let b = independent_posterior(&p, t);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "t={t}: {a:?} vs {b:?}");
        }
    }
}

#[test]
#[ignore = "writes the fixture; run once when the default parameters change"]
fn regenerate_posterior_fixture() {
    let p = InfectionParams::default();
    let fixture = PosteriorFixture {
        t_obs: 3.0,
        states: p.states.clone(),
        posterior: infection_posterior_oracle(&p, 3.0).unwrap(),
    };
    std::fs::write(FIXTURE, serde_json::to_string_pretty(&fixture).unwrap() + "\n").unwrap();
}

#[test]
fn fixture_matches_oracle() {
    let fixture: PosteriorFixture = serde_json::from_str(&std::fs::read_to_string(FIXTURE).unwrap()).unwrap();
    let p = InfectionParams::default();
    assert_eq!(fixture.states, p.states);
    let post = infection_posterior_oracle(&p, fixture.t_obs).unwrap();
    for (a, b) in post.iter().zip(&fixture.posterior) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn diagram_density_agrees_with_closed_form() {
    let p = InfectionParams::default();
    let d = build_infection_model(&p).unwrap();
    let (x0, x1, t_obs) = (d.id("X0").unwrap(), d.id("X1").unwrap(), d.id("T_obs").unwrap());
    let allowed: Vec<(usize, usize)> = (0..6)
        .flat_map(|i| (0..6).map(move |j| (i, j)))
        .filter(|&(i, j)| p.transition[i][j] > 0.0)
        .collect();
    let mut r = rng(11);
    for _ in 0..100 {
        let (i, j) = allowed[r.random_range(0..allowed.len())];
        let t = r.random_range(0.01..12.0);
        let mut cfg = Configuration::empty(&d);
        cfg.set(x0, Value::State(i));
        cfg.set(x1, Value::State(j));
        cfg.set(t_obs, Value::Real(t));
        let via_diagram = conditional_density(&d, t_obs, &cfg).unwrap();
        let direct = tobs_density(&p, t, i, j).unwrap();
        assert!((via_diagram - direct).abs() < 1e-12);
    }
}

#[test]
fn gated_branch_is_the_convolution() {
    let p = InfectionParams::default();
    for (i, j) in [(1, 3), (2, 3)] {
        let closed = tobs_density(&p, 3.0, i, j).unwrap();
        let conv = convolution_density(3.0, p.rate0[i][j], p.rate1[j], p.shift[i][j]);
        assert!((closed - conv).abs() < 1e-10, "({i},{j}): {closed} vs {conv}");
    }
}

#[test]
fn ungated_branch_integrates_to_one() {
    let p = InfectionParams::default();
    for (i, j) in [(0, 4), (1, 4), (2, 4)] {
        let (rate, shift) = (p.rate0[i][j], p.shift[i][j]);
        let mass = integrate(&|t| tobs_density(&p, t, i, j).unwrap(), shift, shift + 60.0 / rate, 1e-11);
        assert!((mass - 1.0).abs() < 1e-8, "({i},{j}) mass {mass}");
        assert_eq!(tobs_density(&p, shift, i, j).unwrap(), 0.0);
    }
}

#[test]
fn sampler_recovers_infection_posterior() {
    let p = InfectionParams::default();
    let d = build_infection_model(&p).unwrap();
    let mut e = Evidence::new();
    e.observe_real(&d, "T_obs", 3.0).unwrap();
    let x0 = d.id("X0").unwrap();
    let config = SamplerConfig {
        m: 5000,
        h: 5,
        seed: 99,
        ..Default::default()
    };
    let (report, _) = query(&d, &e, &config, &[x0], Estimator::Mixture).unwrap();
    let exact = infection_posterior_oracle(&p, 3.0).unwrap();
    let t = &report.tables[0];
    for k in 0..6 {
        assert!((t.probs[k] - exact[k]).abs() <= 3.0 * t.std_errors[k] + 1e-9, "{k}: {} vs {}", t.probs[k], exact[k]);
    }
}

#[test]
fn impossible_time_is_contradictory() {
    let mut p = InfectionParams::default();
    p.prior = vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let d = build_infection_model(&p).unwrap();
    let mut e = Evidence::new();
    e.observe_real(&d, "T_obs", 1.0).unwrap();
    let config = SamplerConfig {
        m: 10,
        max_rejections: 500,
        ..Default::default()
    };
    let err = tempid::composite_sample(&d, &e, &config).unwrap_err();
    assert!(matches!(err, Error::RejectionBudget { .. }), "{err}");
}

#[test]
fn excluded_initial_states_are_contradictory() {
    let d = build_infection_model(&InfectionParams::default()).unwrap();
    let mut e = Evidence::new();
    e.observe_label(&d, "X0", "4").unwrap();
    e.observe_label(&d, "X2", "1").unwrap();
    assert!(matches!(Sampler::new(&d, &e), Err(Error::Contradictory(_))));
}

// toxicity

fn history_for(p: &ToxicityParams, steps: usize, seed: u64) -> (History, [f64; 3]) {
    let alpha = [0.4, 0.75, 0.15];
    let mut r = rng(seed);
    let doses: Vec<u8> = (0..steps).map(|_| r.random_range(0..2)).collect();
    (simulate_history(p, alpha, &doses, seed), alpha)
}

#[test]
fn flat_likelihood_returns_prior() {
    let mut p = ToxicityParams::default();
    let (h, _) = history_for(&p, 5, 1);
    p.sigma = 1e9;
    let post = alpha_posterior_closed_form(&p, &h).unwrap();
    for i in 0..3 {
        assert!((post.mean[i] - p.alpha_mean[i]).abs() < 1e-9);
        for j in 0..3 {
            assert!((post.cov[i][j] - p.alpha_cov[i][j]).abs() < 1e-9);
        }
    }
}

#[test]
fn single_row_is_rank_one_update() {
    let p = ToxicityParams::default();
    let (h, _) = history_for(&p, 1, 2);
    let post = alpha_posterior_closed_form(&p, &h).unwrap();
    // Sherman-Morrison: S' = S - S x x' S / (s2 + x' S x), m' = m + S x (y - x'm) / (s2 + x' S x)
    let s = p.alpha_cov;
    let x = [1.0, h.dysfunction[0], h.dysfunction[0] * h.doses[0] as f64];
    let y = h.dysfunction[1];
    let sx: Vec<f64> = (0..3).map(|i| (0..3).map(|j| s[i][j] * x[j]).sum()).collect();
    let denom = p.sigma * p.sigma + (0..3).map(|i| x[i] * sx[i]).sum::<f64>();
    let resid = y - (0..3).map(|i| x[i] * p.alpha_mean[i]).sum::<f64>();
    for i in 0..3 {
        let mean = p.alpha_mean[i] + sx[i] * resid / denom;
        assert!((post.mean[i] - mean).abs() < 1e-12);
        for j in 0..3 {
            let cov = s[i][j] - sx[i] * sx[j] / denom;
            assert!((post.cov[i][j] - cov).abs() < 1e-12);
        }
    }
}

#[test]
fn long_history_concentrates_near_truth() {
    let p = ToxicityParams::default();
    for seed in 0..5 {
        let (h, truth) = history_for(&p, 50, seed);
        let post = alpha_posterior_closed_form(&p, &h).unwrap();
        for i in 0..3 {
            let sd = post.cov[i][i].sqrt();
            assert!((post.mean[i] - truth[i]).abs() < 3.0 * sd, "seed {seed} alpha{i}");
        }
    }
}

#[test]
fn sampler_path_matches_closed_form() {
    let p = ToxicityParams::default();
    let (h, _) = history_for(&p, 20, 3);
    let post = learn_alpha_posterior(&p, &h, 4000, 5).unwrap();
    let m = post.samples.len() as f64;
    for i in 0..3 {
        let se = (post.sample_cov[i][i] / m).sqrt();
        assert!((post.sample_mean[i] - post.exact.mean[i]).abs() < 3.0 * se);
    }
}

#[test]
fn learning_needs_a_regression_row() {
    let p = ToxicityParams::default();
    let h = History {
        doses: vec![],
        dysfunction: vec![1.0],
        alive: vec![true],
    };
    assert!(learn_alpha_posterior(&p, &h, 10, 0).is_err());
}

#[test]
fn more_drug_lowers_survival_when_toxic() {
    let p = ToxicityParams::default();
    let belief = AlphaBelief::point([0.5, 0.7, 0.2]);
    let drug = predict_survival(&p, &belief, 2.0, &[1; 8], 400, 17).unwrap();
    let none = predict_survival(&p, &belief, 2.0, &[0; 8], 400, 17).unwrap();
    for (a, b) in drug.alive.iter().zip(&none.alive) {
        assert!(a <= b);
    }
    assert!(drug.alive[7] < none.alive[7]);
}

#[test]
fn forecast_is_monotone_and_bounded() {
    let p = ToxicityParams::default();
    let belief = AlphaBelief {
        mean: p.alpha_mean,
        cov: p.alpha_cov,
    };
    let f = predict_survival(&p, &belief, 4.0, &[1, 1, 0, 1, 0, 0, 1, 1, 1, 0], 1000, 8).unwrap();
    assert!(f.alive.iter().all(|&a| (0.0..=1.0).contains(&a)));
    assert!(f.alive.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn forward_samples_never_revive() {
    let p = ToxicityParams::default();
    let (d, ids) = build_toxicity_model(&p, 12).unwrap();
    let e = Evidence::new();
    let sampler = Sampler::new(&d, &e).unwrap();
    let mut r = chain_rng(4, 0);
    let mut seen_death = false;
    let mut accepted = 0;
    for _ in 0..2000 {
        let Some(cfg) = sampler.forward_once(Default::default(), &mut r).unwrap() else {
            continue;
        };
        accepted += 1;
        let states: Vec<usize> = ids.state.iter().map(|&x| cfg.state(x).unwrap()).collect();
        if let Some(first_dead) = states.iter().position(|&s| s == 0) {
            seen_death = true;
            assert!(states[first_dead..].iter().all(|&s| s == 0));
        }
        for &rid in &ids.dysfunction {
            let level = cfg.get(rid).and_then(Value::real).unwrap();
            assert!(level > 0.0 && level < p.w);
        }
    }
    assert!(accepted > 100);
    assert!(seen_death);
}

#[test]
fn moments_of_constant_samples() {
    let (mean, cov) = moments(&[[1.0, 2.0, 3.0]; 4]);
    assert_eq!(mean, [1.0, 2.0, 3.0]);
    assert!(cov.iter().flatten().all(|&c| c == 0.0));
}

// enumeration

#[test]
fn enumeration_matches_independent_brute_force() {
    let mut r = rng(21);
    for _ in 0..50 {
        let d = random_discrete_diagram(&mut r, 5, 4, 0.2);
        let draw = prior_draw(&d, &mut r);
        let obs: Vec<(usize, usize)> = (0..d.len()).filter(|_| r.random::<f64>() < 0.3).map(|v| (v, draw[v])).collect();
        let e = evidence_from(&d, &obs);
        let exact = enumeration_oracle(&d, &e).unwrap();
        let (pe, marg) = brute_force(&d, &obs);
        assert!((exact.p_evidence - pe).abs() < 1e-12);
        for (a, b) in exact.marginals.iter().flatten().zip(marg.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn enumeration_matches_mixture_on_four_nodes() {
    let mut r = rng(5);
    let d = loop {
        let d = random_discrete_diagram(&mut r, 4, 3, 0.1);
        if d.len() == 4 {
            break d;
        }
    };
    let draw = prior_draw(&d, &mut r);
    let e = evidence_from(&d, &[(3, draw[3])]);
    let exact = enumeration_oracle(&d, &e).unwrap();
    for v in 0..3 {
        let s: f64 = exact.marginals[v].iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    let config = SamplerConfig {
        m: 20_000,
        h: 5,
        seed: 2,
        ..Default::default()
    };
    let targets: Vec<VariableId> = (0..3).map(VariableId).collect();
    let (report, _) = query(&d, &e, &config, &targets, Estimator::Mixture).unwrap();
    for t in &report.tables {
        for (k, (&p, &se)) in t.probs.iter().zip(&t.std_errors).enumerate() {
            let want = exact.marginals[t.target.0][k];
            assert!((p - want).abs() <= 3.0 * se + 1e-9, "{:?} value {k}: {p} vs {want}", t.target);
        }
    }
}
