//! Matching estimated components to ground truth and relative RMSE statistics.

use crate::error::{Error, Result};
use crate::model::ComponentSet;

/// Optimal frequency-space correspondence between two component sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    /// `(truth index, estimate index)`, sorted by truth index.
    pub pairs: Vec<(usize, usize)>,
    /// Total squared `(omega1, omega2)` distance over the pairs.
    pub cost: f64,
    pub unmatched_truth: Vec<usize>,
    pub unmatched_estimate: Vec<usize>,
}

fn freq_distance(a: &crate::model::Component, b: &crate::model::Component) -> f64 {
    (a.omega1 - b.omega1).powi(2) + (a.omega2 - b.omega2).powi(2)
}

/// Largest set size the exact assignment accepts on its larger side.
pub const MAX_MATCH_SIZE: usize = 20;

/// Minimum-cost assignment on squared frequency distance. With unequal sizes
/// the smaller set is matched completely and the rest is reported unmatched.
///
/// Exact dynamic programming over subsets of the larger set; the first
/// optimum in lexicographic order wins ties.
pub fn match_components(truth: &ComponentSet, estimate: &ComponentSet) -> Result<Pairing> {
    if truth.is_empty() || estimate.is_empty() {
        return Err(Error::Empty("component set"));
    }
    let t = truth.components();
    let e = estimate.components();
    let truth_is_rows = t.len() <= e.len();
    let (rows, cols) = if truth_is_rows { (t, e) } else { (e, t) };
    let (m, n) = (rows.len(), cols.len());
    if n > MAX_MATCH_SIZE {
        return Err(Error::invalid(format!(
            "cannot match sets larger than {MAX_MATCH_SIZE} components"
        )));
    }

    // best[mask] = min cost of assigning the first popcount(mask) rows to the columns in mask
    let size = 1usize << n;
    let mut best = vec![f64::INFINITY; size];
    let mut choice = vec![usize::MAX; size];
    best[0] = 0.0;
    for mask in 0..size {
        let r = mask.count_ones() as usize;
        if r >= m || !best[mask].is_finite() {
            continue;
        }
        for c in 0..n {
            if mask & (1 << c) != 0 {
                continue;
            }
            let next = mask | (1 << c);
            let cost = best[mask] + freq_distance(&rows[r], &cols[c]);
            if cost < best[next] {
                best[next] = cost;
                choice[next] = c;
            }
        }
    }
    let (mut mask, cost) = (0..size)
        .filter(|mask| mask.count_ones() as usize == m)
        .map(|mask| (mask, best[mask]))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });

    let mut assigned = vec![0usize; m];
    for r in (0..m).rev() {
        let c = choice[mask];
        assigned[r] = c;
        mask &= !(1 << c);
    }
    let mut pairs: Vec<(usize, usize)> = assigned
        .iter()
        .enumerate()
        .map(|(r, &c)| if truth_is_rows { (r, c) } else { (c, r) })
        .collect();
    pairs.sort_unstable();

    let unmatched_truth = (0..t.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let unmatched_estimate = (0..e.len()).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();
    Ok(Pairing {
        pairs,
        cost,
        unmatched_truth,
        unmatched_estimate,
    })
}

/// One Monte-Carlo trial: truth, estimate and their pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub truth: ComponentSet,
    pub estimate: ComponentSet,
    pub pairing: Pairing,
}

impl TrialOutcome {
    pub fn new(truth: ComponentSet, estimate: ComponentSet) -> Result<Self> {
        let pairing = match_components(&truth, &estimate)?;
        Ok(TrialOutcome {
            truth,
            estimate,
            pairing,
        })
    }

    fn relative_errors(
        &self,
        trial: usize,
        what: &'static str,
        get: impl Fn(&crate::model::Component) -> (f64, f64),
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * self.pairing.pairs.len());
        for &(ti, ei) in &self.pairing.pairs {
            let (t1, t2) = get(&self.truth.components()[ti]);
            let (e1, e2) = get(&self.estimate.components()[ei]);
            for (t, e) in [(t1, e1), (t2, e2)] {
                if t == 0.0 {
                    return Err(Error::ZeroTruth { what, trial });
                }
                out.push((t - e) / t);
            }
        }
        Ok(out)
    }

    /// `(w - w_hat) / w` for both axes of every pair.
    pub fn frequency_errors(&self, trial: usize) -> Result<Vec<f64>> {
        self.relative_errors(trial, "frequency", |c| (c.omega1, c.omega2))
    }

    /// `(b - b_hat) / b` for both axes of every pair.
    pub fn damping_errors(&self, trial: usize) -> Result<Vec<f64>> {
        self.relative_errors(trial, "damping", |c| (c.beta1, c.beta2))
    }
}

/// RMSE and its standard error (delta method over per-trial mean squares).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseSummary {
    pub rmse: f64,
    pub std_error: f64,
    pub trials: usize,
}

fn summarize(per_trial: Vec<(f64, usize)>) -> Result<RmseSummary> {
    if per_trial.is_empty() {
        return Err(Error::Empty("trial outcomes"));
    }
    let terms: usize = per_trial.iter().map(|p| p.1).sum();
    if terms == 0 {
        return Err(Error::Empty("paired components"));
    }
    let total: f64 = per_trial.iter().map(|p| p.0).sum();
    let rmse = (total / terms as f64).sqrt();

    let p = per_trial.len() as f64;
    let means: Vec<f64> = per_trial
        .iter()
        .map(|&(s, c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    let mean = means.iter().sum::<f64>() / p;
    let var = if per_trial.len() > 1 {
        means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (p - 1.0)
    } else {
        0.0
    };
    let std_error = if rmse > 0.0 {
        (var / p).sqrt() / (2.0 * rmse)
    } else {
        0.0
    };
    Ok(RmseSummary {
        rmse,
        std_error,
        trials: per_trial.len(),
    })
}

fn collect(
    outcomes: &[TrialOutcome],
    errors: impl Fn(&TrialOutcome, usize) -> Result<Vec<f64>>,
) -> Result<Vec<(f64, usize)>> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let e = errors(o, i)?;
            Ok((e.iter().map(|x| x * x).sum(), e.len()))
        })
        .collect()
}

/// `sqrt( 1/(2K) * 1/P * sum_p sum_k sum_l ((w - w_hat)/w)^2 )`.
pub fn rmse_frequency(outcomes: &[TrialOutcome]) -> Result<f64> {
    Ok(frequency_summary(outcomes)?.rmse)
}

/// The damping counterpart of [`rmse_frequency`].
pub fn rmse_damping(outcomes: &[TrialOutcome]) -> Result<f64> {
    Ok(damping_summary(outcomes)?.rmse)
}

pub fn frequency_summary(outcomes: &[TrialOutcome]) -> Result<RmseSummary> {
    summarize(collect(outcomes, |o, i| o.frequency_errors(i))?)
}

pub fn damping_summary(outcomes: &[TrialOutcome]) -> Result<RmseSummary> {
    summarize(collect(outcomes, |o, i| o.damping_errors(i))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Component;
    use num_complex::Complex64;

    fn set(params: &[(f64, f64, f64, f64)]) -> ComponentSet {
        ComponentSet::new(
            params
                .iter()
                .map(|&(a, b, c, d)| Component::new(a, b, c, d, Complex64::new(1.0, 0.0)))
                .collect(),
        )
    }

    fn four() -> ComponentSet {
        set(&[
            (0.2, 0.3, 0.02, 0.021),
            (0.5, 0.9, 0.03, 0.025),
            (0.8, 0.15, 0.022, 0.033),
            (0.35, 0.6, 0.028, 0.019),
        ])
    }

    #[test]
    fn identical_sets_pair_identically() {
        let p = match_components(&four(), &four()).unwrap();
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn permutation_is_inverted() {
        let t = four();
        let perm = [2usize, 0, 3, 1];
        let e = ComponentSet::new(perm.iter().map(|&i| t.components()[i]).collect());
        let p = match_components(&t, &e).unwrap();
        for (ti, ei) in p.pairs {
            assert_eq!(perm[ei], ti);
        }
    }

    #[test]
    fn two_by_two_swap() {
        let t = set(&[(0.2, 0.2, 0.02, 0.02), (0.8, 0.8, 0.02, 0.02)]);
        let e = set(&[(0.79, 0.81, 0.02, 0.02), (0.21, 0.19, 0.02, 0.02)]);
        // enumerate both pairings by hand
        let identity = (0.2f64 - 0.79).powi(2) + (0.2f64 - 0.81).powi(2)
            + (0.8f64 - 0.21).powi(2) + (0.8f64 - 0.19).powi(2);
        let swap = (0.2f64 - 0.21).powi(2) + (0.2f64 - 0.19).powi(2)
            + (0.8f64 - 0.79).powi(2) + (0.8f64 - 0.81).powi(2);
        assert!((identity - 1.4404).abs() < 1e-12);
        assert!((swap - 0.0004).abs() < 1e-12);
        let p = match_components(&t, &e).unwrap();
        assert_eq!(p.pairs, vec![(0, 1), (1, 0)]);
        assert!((p.cost - swap).abs() < 1e-15);
    }

    #[test]
    fn size_mismatch_flags_unmatched() {
        let t = four();
        let e = set(&[(0.51, 0.88, 0.03, 0.02), (0.21, 0.31, 0.02, 0.02)]);
        let p = match_components(&t, &e).unwrap();
        assert_eq!(p.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(p.unmatched_truth, vec![2, 3]);
        assert!(p.unmatched_estimate.is_empty());
        let p = match_components(&e, &t).unwrap();
        assert_eq!(p.unmatched_estimate, vec![2, 3]);
        assert!(match_components(&ComponentSet::default(), &t).is_err());
    }

    #[test]
    fn exact_estimates_have_zero_rmse() {
        let o = TrialOutcome::new(four(), four()).unwrap();
        assert_eq!(rmse_frequency(&[o.clone()]).unwrap(), 0.0);
        assert_eq!(rmse_damping(&[o]).unwrap(), 0.0);
    }

    #[test]
    fn single_erroneous_term() {
        let t = four();
        let mut e = t.clone().into_inner();
        e[1].omega2 *= 1.0 - 0.01;
        let o = TrialOutcome::new(t.clone(), ComponentSet::new(e)).unwrap();
        let expected = 0.01 / 8f64.sqrt();
        assert!((rmse_frequency(&[o.clone()]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.003_535_5).abs() < 1e-7);
        // doubling P with identical trials leaves the value unchanged
        assert!((rmse_frequency(&[o.clone(), o]).unwrap() - expected).abs() < 1e-12);

        let mut e = t.clone().into_inner();
        e[3].beta1 *= 1.0 - 0.10;
        let o = TrialOutcome::new(t, ComponentSet::new(e)).unwrap();
        let expected = 0.10 / 8f64.sqrt();
        assert!((rmse_damping(&[o]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_truth_is_an_error() {
        let t = set(&[(0.2, 0.3, 0.0, 0.02)]);
        let o = TrialOutcome::new(t.clone(), t.clone()).unwrap();
        assert!(matches!(rmse_damping(&[o.clone()]), Err(Error::ZeroTruth { .. })));
        assert_eq!(rmse_frequency(&[o]).unwrap(), 0.0);
        let t = set(&[(0.0, 0.3, 0.01, 0.02)]);
        let o = TrialOutcome::new(t.clone(), t).unwrap();
        assert!(matches!(rmse_frequency(&[o]), Err(Error::ZeroTruth { .. })));
    }
}
