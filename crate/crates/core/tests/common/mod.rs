//! Independent oracles and generators shared by the integration tests.
//! Nothing here calls the library's density or revision code.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tempid::{DiagramSpec, Distribution, Domain, Evidence, InfluenceDiagram, VariableId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        // below this the difference is rounding noise and refinement never settles
        let floor = 1e-15 * (left.abs() + right.abs());
        if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Integral split into `pieces` equal panels, each adaptively refined.
pub fn integrate_panels(f: &dyn Fn(f64) -> f64, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| integrate(f, a + i as f64 * h, a + (i + 1) as f64 * h, tol / pieces as f64))
        .sum()
}

/// Shifted exponential density written from its definition.
pub fn exp_density(t: f64, rate: f64, shift: f64) -> f64 {
    if t <= shift {
        0.0
    } else {
        rate * (-rate * (t - shift)).exp()
    }
}

/// Density of `shift + Exp(rate0) + Exp(rate1)` by numerical convolution.
pub fn convolution_density(t: f64, rate0: f64, rate1: f64, shift: f64) -> f64 {
    let s = t - shift;
    if s <= 0.0 {
        return 0.0;
    }
    integrate(
        &|u: f64| rate0 * (-rate0 * u).exp() * rate1 * (-rate1 * (s - u)).exp(),
        0.0,
        s,
        1e-14,
    )
}

/// Joint probability of a total discrete assignment, from the CPT rows
/// directly: index the row by the parents' states, last parent fastest.
pub fn product_joint(d: &InfluenceDiagram, states: &[usize]) -> f64 {
    d.nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let Distribution::Cpt { rows } = &node.dist else {
                panic!("product_joint needs CPTs");
            };
            let mut row = 0;
            for p in &node.parents {
                row = row * d.nodes()[p.0].domain.size().unwrap() + states[p.0];
            }
            rows[row][states[i]]
        })
        .product()
}

/// Exact posterior marginals and P(evidence) by brute force over
/// `product_joint`.
pub fn brute_force(d: &InfluenceDiagram, evidence: &[(usize, usize)]) -> (f64, Vec<Vec<f64>>) {
    let sizes: Vec<usize> = d.nodes().iter().map(|n| n.domain.size().unwrap()).collect();
    let total: usize = sizes.iter().product();
    let mut marg: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut pe = 0.0;
    let mut states = vec![0; sizes.len()];
    for mut code in 0..total {
        for v in (0..sizes.len()).rev() {
            states[v] = code % sizes[v];
            code /= sizes[v];
        }
        if evidence.iter().any(|&(v, s)| states[v] != s) {
            continue;
        }
        let p = product_joint(d, &states);
        pe += p;
        for (v, &s) in states.iter().enumerate() {
            marg[v][s] += p;
        }
    }
    for row in &mut marg {
        row.iter_mut().for_each(|x| *x /= pe);
    }
    (pe, marg)
}

fn random_row<R: Rng>(rng: &mut R, width: usize, zero_prob: f64) -> Vec<f64> {
    let mut row: Vec<f64> = (0..width)
        .map(|_| if rng.random::<f64>() < zero_prob { 0.0 } else { rng.random::<f64>() + 0.05 })
        .collect();
    if row.iter().all(|&x| x == 0.0) {
        let k = rng.random_range(0..width);
        row[k] = 1.0;
    }
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    row
}

/// Random all-discrete DAG: node `i` draws parents among `0..i`.
pub fn random_discrete_diagram<R: Rng>(rng: &mut R, max_nodes: usize, max_values: usize, zero_prob: f64) -> InfluenceDiagram {
    let n = rng.random_range(2..=max_nodes);
    let mut s = DiagramSpec::new();
    let mut sizes = Vec::new();
    for i in 0..n {
        let size = rng.random_range(2..=max_values);
        let mut parents: Vec<usize> = (0..i).filter(|_| rng.random::<f64>() < 0.5).collect();
        parents.truncate(3);
        let tuples: usize = parents.iter().map(|&p| sizes[p]).product();
        let rows = (0..tuples).map(|_| random_row(rng, size, zero_prob)).collect();
        let ids: Vec<VariableId> = parents.into_iter().map(VariableId).collect();
        s.add(
            format!("V{i}"),
            Domain::discrete((0..size).map(|k| format!("s{k}"))),
            &ids,
            Distribution::Cpt { rows },
        );
        sizes.push(size);
    }
    s.build().expect("random diagram is valid")
}

/// Ancestral draw of a full assignment, from the CPT rows.
pub fn prior_draw<R: Rng>(d: &InfluenceDiagram, rng: &mut R) -> Vec<usize> {
    let mut states = vec![0; d.len()];
    for (i, node) in d.nodes().iter().enumerate() {
        let Distribution::Cpt { rows } = &node.dist else { unreachable!() };
        let mut row = 0;
        for p in &node.parents {
            row = row * d.nodes()[p.0].domain.size().unwrap() + states[p.0];
        }
        let mut u = rng.random::<f64>();
        let r = &rows[row];
        let mut k = r.len() - 1;
        for (j, &p) in r.iter().enumerate() {
            if u < p {
                k = j;
                break;
            }
            u -= p;
        }
        while r[k] == 0.0 {
            k -= 1;
        }
        states[i] = k;
    }
    states
}

pub fn evidence_from(d: &InfluenceDiagram, pairs: &[(usize, usize)]) -> Evidence {
    let mut e = Evidence::new();
    for &(v, s) in pairs {
        e.observe(d, VariableId(v), tempid::Value::State(s)).unwrap();
    }
    e
}

/// Random chain transition matrices: `sizes[i] x sizes[i+1]` with zeros.
pub fn random_chain<R: Rng>(rng: &mut R, max_vars: usize, max_values: usize) -> (Vec<usize>, Vec<Vec<Vec<f64>>>) {
    let n = rng.random_range(2..=max_vars);
    let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_values)).collect();
    let zero = rng.random_range(0.2..0.8);
    let links = (1..n)
        .map(|i| {
            (0..sizes[i - 1])
                .map(|_| {
                    (0..sizes[i])
                        .map(|_| if rng.random::<f64>() < zero { 0.0 } else { rng.random::<f64>() })
                        .collect()
                })
                .collect()
        })
        .collect();
    (sizes, links)
}

/// Values surviving revision, by path enumeration. Literal: value `h` of
/// `X_j` survives iff some path `h = x_j, x_{j+1}, ..., x_n` stays inside
/// the initial domains with every step positive. With `both_ways` the value
/// must lie on a full positive path `x_0, ..., x_n`.
pub fn supportable(domains: &[Vec<bool>], links: &[Vec<Vec<f64>>], both_ways: bool) -> Vec<Vec<bool>> {
    let n = domains.len();
    let mut out: Vec<Vec<bool>> = domains.iter().map(|d| vec![false; d.len()]).collect();
    let first = if both_ways { 0..1 } else { 0..n };
    for j in first {
        // every positive path starting at position j
        let mut paths: Vec<Vec<usize>> = (0..domains[j].len()).filter(|&s| domains[j][s]).map(|s| vec![s]).collect();
        for k in j + 1..n {
            let mut next = Vec::new();
            for p in &paths {
                let last = *p.last().unwrap();
                for s in 0..domains[k].len() {
                    if domains[k][s] && links[k - 1][last][s] > 0.0 {
                        let mut q = p.clone();
                        q.push(s);
                        next.push(q);
                    }
                }
            }
            paths = next;
        }
        for p in &paths {
            if both_ways {
                for (k, &s) in p.iter().enumerate() {
                    out[k][s] = true;
                }
            } else {
                out[j][p[0]] = true;
            }
        }
    }
    out
}

/// Queue-based AC-3 over the chain's links: arc `(i-1 <- i)` removes
/// predecessor values without support; with `both_ways` arc `(i <- i-1)`
/// also runs. Neighbouring arcs are re-queued on deletion.
pub fn ac3(domains: &[Vec<bool>], links: &[Vec<Vec<f64>>], both_ways: bool) -> Vec<Vec<bool>> {
    let mut dom = domains.to_vec();
    let n = dom.len();
    // (target, source): prune target using source
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for i in 1..n {
        queue.push_back((i - 1, i));
        if both_ways {
            queue.push_back((i, i - 1));
        }
    }
    while let Some((t, s)) = queue.pop_front() {
        let mut changed = false;
        for a in 0..dom[t].len() {
            if !dom[t][a] {
                continue;
            }
            let ok = (0..dom[s].len()).any(|b| {
                dom[s][b]
                    && if t < s {
                        links[t][a][b] > 0.0
                    } else {
                        links[s][b][a] > 0.0
                    }
            });
            if !ok {
                dom[t][a] = false;
                changed = true;
            }
        }
        if changed {
            if t > 0 {
                queue.push_back((t - 1, t));
            }
            if both_ways && t + 1 < n {
                queue.push_back((t + 1, t));
            }
        }
    }
    dom
}

pub fn shuffled<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=n).collect();
    v.shuffle(rng);
    v
}
