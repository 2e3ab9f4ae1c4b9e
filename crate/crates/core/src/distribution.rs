//! Conditional distribution families attached to diagram nodes.
//!
//! Families indexed by a parent tuple (`Cpt`, `ShiftedExponential`,
//! `TwoPhase`) require every parent to be discrete; the tuple index is the
//! mixed-radix number formed by the parents' state indices, last parent
//! varying fastest.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Absolute tolerance on probability rows.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Index of the `alive` state in a survival chain's two-state domain.
pub const ALIVE: usize = 1;
/// Index of the `dead` state in a survival chain's two-state domain.
pub const DEAD: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficients {
    /// Known regression weights, one per design term.
    Fixed(Vec<f64>),
    /// Weights read from a vector-valued parent (position in the parent list).
    Parent(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// Conditional probability table: one row per parent tuple.
    Cpt { rows: Vec<Vec<f64>> },
    /// `rate * exp(-rate * (t - shift))` for `t > shift`.
    ShiftedExponential { rate: Vec<f64>, shift: Vec<f64> },
    /// Shifted exponential when the gate is off; the shifted sum of two
    /// independent exponentials (rates `rate0`, `rate1`) when it is on.
    TwoPhase {
        rate0: Vec<f64>,
        rate1: Vec<f64>,
        shift: Vec<f64>,
        gate: Vec<bool>,
    },
    /// Normal with mean `sum_j w_j * prod(term_j)` and standard deviation `sigma`.
    /// Each term lists parent positions whose numeric values are multiplied;
    /// an empty term is the intercept.
    GaussianLinear {
        coefficients: Coefficients,
        terms: Vec<Vec<usize>>,
        sigma: f64,
    },
    /// Multivariate normal prior on a vector-valued root node.
    GaussianPrior { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Alive/dead transition modulated by a continuous parent:
    /// `p(alive | alive, r) = exp(-rate * step * (1 - s(r)))`, death absorbing.
    /// Parents are `[previous state, dysfunction]`; `knots` define `s`.
    SurvivalTransition {
        rate: f64,
        step: f64,
        knots: Vec<(f64, f64)>,
    },
}

impl Distribution {
    pub fn kind(&self) -> &'static str {
        match self {
            Distribution::Cpt { .. } => "cpt",
            Distribution::ShiftedExponential { .. } => "shifted_exponential",
            Distribution::TwoPhase { .. } => "two_phase",
            Distribution::GaussianLinear { .. } => "gaussian_linear",
            Distribution::GaussianPrior { .. } => "gaussian_prior",
            Distribution::SurvivalTransition { .. } => "survival_transition",
        }
    }

    /// True for families whose parameters are looked up by parent tuple.
    pub fn is_tabular(&self) -> bool {
        matches!(
            self,
            Distribution::Cpt { .. }
                | Distribution::ShiftedExponential { .. }
                | Distribution::TwoPhase { .. }
        )
    }

    /// Supremum of the density over the value and over every parent tuple.
    /// Used as the envelope constant for likelihood-proportional acceptance.
    pub fn density_bound(&self) -> f64 {
        match self {
            Distribution::Cpt { .. } | Distribution::SurvivalTransition { .. } => 1.0,
            Distribution::ShiftedExponential { rate, .. } => {
                rate.iter().copied().fold(0.0, f64::max)
            }
            Distribution::TwoPhase {
                rate0, rate1, gate, ..
            } => (0..rate0.len())
                .map(|i| {
                    if gate[i] {
                        two_phase_peak(rate0[i], rate1[i])
                    } else {
                        rate0[i]
                    }
                })
                .fold(0.0, f64::max),
            Distribution::GaussianLinear { sigma, .. } => 1.0 / (sigma * (2.0 * PI).sqrt()),
            Distribution::GaussianPrior { mean, cov } => {
                let d = mean.len();
                match cholesky(cov) {
                    Some(l) => {
                        let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
                        (-0.5 * (d as f64 * (2.0 * PI).ln() + log_det)).exp()
                    }
                    None => f64::INFINITY,
                }
            }
        }
    }
}

/// Density of `shift + Exp(rate)` at `t`.
pub fn shifted_exponential_pdf(t: f64, rate: f64, shift: f64) -> f64 {
    if t <= shift {
        0.0
    } else {
        rate * (-rate * (t - shift)).exp()
    }
}

/// Density of `shift + Exp(rate0) + Exp(rate1)` at `t`.
///
/// Uses the normalising constant `rate0 * rate1 / (rate1 - rate0)` and the
/// Erlang limit `rate^2 s exp(-rate s)` when the rates coincide; written as
/// `rate0 rate1 s exp(-slow s) phi((fast - slow) s)` with
/// `phi(x) = (1 - exp(-x)) / x` so both cases share one stable expression.
pub fn two_phase_pdf(t: f64, rate0: f64, rate1: f64, shift: f64) -> f64 {
    let s = t - shift;
    if s <= 0.0 {
        return 0.0;
    }
    // symmetric in the rates; factoring out the slower one keeps both terms finite
    let (slow, fast) = if rate0 <= rate1 { (rate0, rate1) } else { (rate1, rate0) };
    rate0 * rate1 * s * (-slow * s).exp() * one_minus_exp_ratio((fast - slow) * s)
}

fn one_minus_exp_ratio(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0 - x / 2.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Maximum over `t` of the unshifted two-phase density.
pub fn two_phase_peak(rate0: f64, rate1: f64) -> f64 {
    let mode = if (rate1 - rate0).abs() < 1e-12 * rate0.max(rate1) {
        1.0 / rate0
    } else {
        (rate1 / rate0).ln() / (rate1 - rate0)
    };
    two_phase_pdf(mode, rate0, rate1, 0.0)
}

pub fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Density of a multivariate normal; zero if `cov` is not positive definite.
pub fn mvn_pdf(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let d = mean.len();
    let Some(l) = cholesky(cov) else {
        return 0.0;
    };
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let Some(z) = l.solve_lower_triangular(&diff) else {
        return 0.0;
    };
    let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    (-0.5 * (z.norm_squared() + d as f64 * (2.0 * PI).ln() + log_det)).exp()
}

/// Lower Cholesky factor of a square matrix given as rows.
pub fn cholesky(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return None;
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    m.cholesky().map(|c| c.l())
}

/// Piecewise-linear interpolation through `knots`, clamped at both ends.
pub fn interpolate_clamped(knots: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (knots[0], knots[knots.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    for pair in knots.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    last.1
}

/// `exp(-rate * step * (1 - s))`, the probability of staying alive over one step.
pub fn survival_factor(rate: f64, step: f64, s: f64) -> f64 {
    (-rate * step * (1.0 - s)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
        }};
    }

    #[test]
    fn shifted_exponential_at_shift_is_rate() {
        assert_close!(shifted_exponential_pdf(1e-300, 1.0, 0.0), 1.0, 1e-12);
        assert_eq!(shifted_exponential_pdf(0.0, 1.0, 0.0), 0.0);
        assert_eq!(shifted_exponential_pdf(2.0, 3.0, 2.5), 0.0);
    }

    #[test]
    fn two_phase_far_tail_is_finite() {
        for (l0, l1) in [(3.9, 0.28), (0.28, 3.9)] {
            let f = two_phase_pdf(198.6, l0, l1, 0.0);
            assert!(f.is_finite() && f >= 0.0, "{f}");
        }
        let f = two_phase_pdf(1e5, 5.0, 0.05, 0.0);
        assert!(f.is_finite() && f < 1e-300, "{f}");
    }

    #[test]
    fn two_phase_matches_difference_of_exponentials() {
        let (l0, l1, a0, t) = (0.7, 2.0, 0.5, 3.0);
        let s: f64 = t - a0;
        let expect = l0 * l1 / (l1 - l0) * ((-l0 * s).exp() - (-l1 * s).exp());
        assert_close!(two_phase_pdf(t, l0, l1, a0), expect, 1e-14);
        // symmetric in the two rates
        assert_close!(two_phase_pdf(t, l1, l0, a0), expect, 1e-14);
    }

    #[test]
    fn two_phase_equal_rates_is_erlang() {
        let (l, s) = (1.3_f64, 2.2_f64);
        let erlang = l * l * s * (-l * s).exp();
        assert_close!(two_phase_pdf(s, l, l, 0.0), erlang, 1e-14);
        assert_close!(two_phase_pdf(s, l, l + 1e-9, 0.0), erlang, 1e-8);
    }

    #[test]
    fn two_phase_peak_is_a_maximum() {
        for &(l0, l1) in &[(0.5, 1.5), (2.0, 0.3), (1.0, 1.0)] {
            let peak = two_phase_peak(l0, l1);
            let grid_max = (1..20000)
                .map(|i| two_phase_pdf(i as f64 * 1e-3, l0, l1, 0.0))
                .fold(0.0, f64::max);
            assert!(peak >= grid_max - 1e-12);
            assert!(peak - grid_max < 1e-5);
        }
    }

    #[test]
    fn mvn_reduces_to_product_of_normals_for_diagonal_cov() {
        let cov = vec![vec![0.25, 0.0], vec![0.0, 4.0]];
        let got = mvn_pdf(&[0.3, -1.0], &[0.0, 1.0], &cov);
        let want = normal_pdf(0.3, 0.0, 0.5) * normal_pdf(-1.0, 1.0, 2.0);
        assert_close!(got, want, 1e-14);
    }

    #[test]
    fn interpolation_clamps_at_knots() {
        let knots = [(0.0, 1.0), (5.0, 0.7), (10.0, 0.1)];
        assert_close!(interpolate_clamped(&knots, -1.0), 1.0, 0.0);
        assert_close!(interpolate_clamped(&knots, 2.5), 0.85, 1e-15);
        assert_close!(interpolate_clamped(&knots, 7.5), 0.4, 1e-15);
        assert_close!(interpolate_clamped(&knots, 12.0), 0.1, 0.0);
    }

    #[test]
    fn density_bounds() {
        let d = Distribution::TwoPhase {
            rate0: vec![1.0, 0.4],
            rate1: vec![2.0, 1.0],
            shift: vec![0.0, 0.0],
            gate: vec![true, false],
        };
        // peak of 1/2 exp phases is 0.5; ungated branch peaks at its rate 0.4
        assert_close!(d.density_bound(), 0.5, 1e-12);
    }
}
