//! Revenue-maximizing assortments under the MNL model with a cardinality cap.
//!
//! With attraction weights `vᵢ = exp(uᵢ)`, the revenue of `S` is
//! `Σ_S vᵢrᵢ / (1 + Σ_S vᵢ)`, and `R(S) ≥ θ` iff `Σ_S vᵢ(rᵢ − θ) ≥ θ`.
//! For a fixed `θ` the left side is maximized by the (at most `K`) items with
//! the largest positive scores `vᵢ(rᵢ − θ)`, so the optimal value is the root
//! of a monotone scalar function and can be bracketed by bisection.

use crate::error::{MnlError, Result};
use crate::model::Assortment;

const MAX_BRUTE_FORCE_ITEMS: usize = 20;
const BISECTION_TOL: f64 = 1e-12;

/// Revenue of the items `set` given utilities and rewards.
pub fn revenue(utilities: &[f64], rewards: &[f64], set: &[usize]) -> f64 {
    // shift by the largest utility in play, including the outside option's 0
    let umax = set.iter().fold(0.0f64, |m, &i| m.max(utilities[i]));
    let mut num = 0.0;
    let mut den = (-umax).exp();
    for &i in set {
        let v = (utilities[i] - umax).exp();
        num += v * rewards[i];
        den += v;
    }
    num / den
}

fn check_inputs(utilities: &[f64], rewards: &[f64], max_size: usize) -> Result<()> {
    if utilities.is_empty() {
        return Err(MnlError::Domain("no items".into()));
    }
    if utilities.len() != rewards.len() {
        return Err(MnlError::DimensionMismatch {
            expected: utilities.len(),
            got: rewards.len(),
        });
    }
    if max_size == 0 {
        return Err(MnlError::Domain("assortment cap must be >= 1".into()));
    }
    if utilities.iter().chain(rewards).any(|v| !v.is_finite()) {
        return Err(MnlError::Domain("non-finite utility or reward".into()));
    }
    Ok(())
}

/// Exhaustive search over all nonempty sets of at most `max_size` items.
///
/// Sets are visited in lexicographic order and only a strictly better value
/// replaces the incumbent, so ties resolve to the lexicographically smallest set.
pub fn brute_force_best(utilities: &[f64], rewards: &[f64], max_size: usize) -> Result<(Assortment, f64)> {
    check_inputs(utilities, rewards, max_size)?;
    let n = utilities.len();
    if n > MAX_BRUTE_FORCE_ITEMS {
        return Err(MnlError::TooLarge(n));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut current = Vec::with_capacity(max_size);
    visit(0, n, max_size, &mut current, &mut |set| {
        let value = revenue(utilities, rewards, set);
        let better = match &best {
            None => true,
            Some((_, b)) => value > b + 1e-14 * b.abs().max(1.0),
        };
        if better {
            best = Some((set.to_vec(), value));
        }
    });
    let (set, value) = best.expect("at least one nonempty set");
    Ok((Assortment::from_sorted_unchecked(set), value))
}

fn visit(start: usize, n: usize, cap: usize, current: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    for i in start..n {
        current.push(i);
        f(current);
        if current.len() < cap {
            visit(i + 1, n, cap, current, f);
        }
        current.pop();
    }
}

/// Items with positive score `vᵢ(rᵢ − θ)`, best first (ties to the lower
/// index), truncated to `max_size`.
fn top_scores(weights: &[f64], rewards: &[f64], theta: f64, max_size: usize, out: &mut Vec<(f64, usize)>) -> f64 {
    out.clear();
    out.extend(
        weights
            .iter()
            .zip(rewards)
            .enumerate()
            .map(|(i, (v, r))| (v * (r - theta), i))
            .filter(|(s, _)| *s > 0.0),
    );
    if out.len() > max_size {
        out.select_nth_unstable_by(max_size - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        out.truncate(max_size);
    }
    out.iter().map(|(s, _)| s).sum()
}

/// Optimal assortment by bisection on the revenue level.
///
/// Utilities are shifted so the largest is zero before exponentiating; this
/// rescales every weight and the outside option together, so the test
/// `Σ_S vᵢ(rᵢ − θ) ≥ θ·v₀` is evaluated with `v₀ = exp(−umax)`.
pub fn best_assortment(utilities: &[f64], rewards: &[f64], max_size: usize) -> Result<(Assortment, f64)> {
    check_inputs(utilities, rewards, max_size)?;
    let umax = utilities.iter().fold(0.0f64, |m, &u| m.max(u));
    let weights: Vec<f64> = utilities.iter().map(|u| (u - umax).exp()).collect();
    let outside = (-umax).exp();
    let mut scratch = Vec::with_capacity(utilities.len());

    let rmax = rewards.iter().fold(0.0f64, |m, &r| m.max(r));
    let (mut lo, mut hi) = (0.0f64, rmax);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        // a positive level needs a nonempty set, even when `outside` underflows
        let score = top_scores(&weights, rewards, mid, max_size, &mut scratch);
        if !scratch.is_empty() && score >= mid * outside {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    top_scores(&weights, rewards, lo, max_size, &mut scratch);
    let mut set: Vec<usize> = scratch.iter().map(|&(_, i)| i).collect();
    if set.is_empty() {
        // nothing earns a positive margin (all rewards are zero): every set
        // is worth 0, so return the lexicographically smallest one
        set.push(0);
    }
    set.sort_unstable();
    let value = revenue(utilities, rewards, &set);
    Ok((Assortment::from_sorted_unchecked(set), value))
}
