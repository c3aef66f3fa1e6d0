//! The multinomial-logit choice model.
//!
//! An offered assortment `S` with item features `xᵢ` and a parameter `w`
//! induces utilities `uᵢ = xᵢ·w`; the customer picks item `i` with
//! probability `exp(uᵢ) / (1 + Σⱼ exp(uⱼ))` and the outside option (utility
//! zero) otherwise. Probability vectors in this module always put the outside
//! option first: `[p₀, p_{S[0]}, p_{S[1]}, …]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{MnlError, Result};
use crate::linalg::PsdMatrix;

/// Norm slack for the unit-ball feature and `B`-ball parameter checks.
const NORM_SLACK: f64 = 1e-12;

/// Per-round item features and rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundContext {
    dim: usize,
    features: Vec<f64>,
    rewards: Vec<f64>,
}

impl RoundContext {
    /// Builds a context from row-major features (`N × d`) and `N` rewards.
    ///
    /// Every feature must lie in the unit ball and every reward in `[0, 1]`.
    pub fn from_flat(dim: usize, features: Vec<f64>, rewards: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(MnlError::Domain("feature dimension must be >= 1".into()));
        }
        if rewards.is_empty() {
            return Err(MnlError::Domain("need at least one item".into()));
        }
        if features.len() != dim * rewards.len() {
            return Err(MnlError::DimensionMismatch {
                expected: dim * rewards.len(),
                got: features.len(),
            });
        }
        for (i, row) in features.chunks_exact(dim).enumerate() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n <= 1.0 + NORM_SLACK) {
                return Err(MnlError::Domain(format!("feature {i} has norm {n} > 1")));
            }
        }
        if let Some((i, r)) = rewards
            .iter()
            .enumerate()
            .find(|(_, r)| !(0.0..=1.0).contains(*r))
        {
            return Err(MnlError::Domain(format!("reward {i} = {r} outside [0, 1]")));
        }
        Ok(Self {
            dim,
            features,
            rewards,
        })
    }

    pub fn new(features: &[Vec<f64>], rewards: Vec<f64>) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(MnlError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::from_flat(dim, features.concat(), rewards)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_items(&self) -> usize {
        self.rewards.len()
    }

    pub fn feature(&self, item: usize) -> &[f64] {
        &self.features[item * self.dim..(item + 1) * self.dim]
    }

    pub fn features_flat(&self) -> &[f64] {
        &self.features
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Utilities `xᵢ·w` for every item.
    pub fn utilities(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_param(w)?;
        Ok(self
            .features
            .chunks_exact(self.dim)
            .map(|x| dot(x, w))
            .collect())
    }

    fn check_param(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(MnlError::DimensionMismatch {
                expected: self.dim,
                got: w.len(),
            });
        }
        Ok(())
    }
}

/// Utility parameter with a known Euclidean norm bound.
#[derive(Clone, Debug, PartialEq)]
pub struct MnlParameter {
    w: DVector<f64>,
    bound: f64,
}

impl MnlParameter {
    pub fn new(w: DVector<f64>, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(MnlError::Domain(format!("norm bound {bound} must be positive")));
        }
        if w.norm() > bound * (1.0 + NORM_SLACK) {
            return Err(MnlError::Domain(format!(
                "parameter norm {} exceeds bound {bound}",
                w.norm()
            )));
        }
        Ok(Self { w, bound })
    }

    pub fn zeros(dim: usize, bound: f64) -> Result<Self> {
        Self::new(DVector::zeros(dim), bound)
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn as_slice(&self) -> &[f64] {
        self.w.as_slice()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// A set of distinct item indices, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assortment {
    items: Vec<usize>,
}

impl Assortment {
    /// Validates `1 ≤ |items| ≤ max_size`, no duplicates, and every index `< n_items`.
    pub fn new(mut items: Vec<usize>, n_items: usize, max_size: usize) -> Result<Self> {
        items.sort_unstable();
        if items.is_empty() {
            return Err(MnlError::InvalidAssortment("empty assortment".into()));
        }
        if items.len() > max_size {
            return Err(MnlError::InvalidAssortment(format!(
                "{} items exceed the cap {max_size}",
                items.len()
            )));
        }
        if items.windows(2).any(|w| w[0] == w[1]) {
            return Err(MnlError::InvalidAssortment("duplicate item".into()));
        }
        if let Some(&last) = items.last() {
            if last >= n_items {
                return Err(MnlError::IndexOutOfRange {
                    index: last,
                    n_items,
                });
            }
        }
        Ok(Self { items })
    }

    pub fn singleton(item: usize) -> Self {
        Self { items: vec![item] }
    }

    pub(crate) fn from_sorted_unchecked(items: Vec<usize>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        Self { items }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    pub(crate) fn check(&self, ctx: &RoundContext) -> Result<()> {
        match self.items.last() {
            Some(&last) if last >= ctx.n_items() => Err(MnlError::IndexOutOfRange {
                index: last,
                n_items: ctx.n_items(),
            }),
            Some(_) => Ok(()),
            None => Err(MnlError::InvalidAssortment("empty assortment".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Choice {
    Outside,
    Item(usize),
}

/// The realized choice for an offered assortment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChoiceOutcome {
    pub chosen: Choice,
    /// Position of the chosen item inside the assortment; `None` for the outside option.
    pub position: Option<usize>,
    /// Number of offered items.
    pub offered: usize,
}

impl ChoiceOutcome {
    pub fn outside(offered: usize) -> Self {
        Self {
            chosen: Choice::Outside,
            position: None,
            offered,
        }
    }

    /// The outcome that picks `assortment.items()[position]`.
    pub fn item(assortment: &Assortment, position: usize) -> Result<Self> {
        let item = *assortment.items().get(position).ok_or(MnlError::IndexOutOfRange {
            index: position,
            n_items: assortment.len(),
        })?;
        Ok(Self {
            chosen: Choice::Item(item),
            position: Some(position),
            offered: assortment.len(),
        })
    }

    /// One-hot vector over `{0} ∪ S`, outside option first.
    pub fn onehot(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.offered + 1];
        y[self.position.map_or(0, |p| p + 1)] = 1.0;
        y
    }

    fn check(&self, assortment: &Assortment) -> Result<()> {
        if self.offered != assortment.len() {
            return Err(MnlError::DimensionMismatch {
                expected: assortment.len(),
                got: self.offered,
            });
        }
        match (self.chosen, self.position) {
            (Choice::Outside, None) => Ok(()),
            (Choice::Item(i), Some(p)) if assortment.items().get(p) == Some(&i) => Ok(()),
            _ => Err(MnlError::InvalidAssortment(
                "outcome inconsistent with assortment".into(),
            )),
        }
    }
}

/// Features of an offered assortment together with the observed choice.
///
/// This is the unit the estimators consume: it is self-contained, so the
/// round context can be dropped once the observation is recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    dim: usize,
    rows: Vec<f64>,
    chosen: Option<usize>,
}

impl Observation {
    pub fn new(ctx: &RoundContext, assortment: &Assortment, outcome: &ChoiceOutcome) -> Result<Self> {
        assortment.check(ctx)?;
        outcome.check(assortment)?;
        let mut rows = Vec::with_capacity(assortment.len() * ctx.dim());
        for &i in assortment.items() {
            rows.extend_from_slice(ctx.feature(i));
        }
        Ok(Self {
            dim: ctx.dim(),
            rows,
            chosen: outcome.position,
        })
    }

    /// Builds an observation directly from offered feature rows; `chosen` is
    /// a position in `rows` or `None` for the outside option.
    pub fn from_rows(dim: usize, rows: Vec<f64>, chosen: Option<usize>) -> Result<Self> {
        if dim == 0 || rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(MnlError::Domain("malformed feature rows".into()));
        }
        if let Some(p) = chosen {
            if p >= rows.len() / dim {
                return Err(MnlError::IndexOutOfRange {
                    index: p,
                    n_items: rows.len() / dim,
                });
            }
        }
        Ok(Self { dim, rows, chosen })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn n_offered(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn chosen(&self) -> Option<usize> {
        self.chosen
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        round_terms(self.dim, &self.rows, self.chosen, w, &mut [], &mut [], Need::Value)
    }

    pub fn gradient(&self, w: &[f64]) -> DVector<f64> {
        let mut g = vec![0.0; self.dim];
        round_terms(self.dim, &self.rows, self.chosen, w, &mut g, &mut [], Need::Gradient);
        DVector::from_vec(g)
    }

    pub fn hessian(&self, w: &[f64]) -> PsdMatrix {
        let d = self.dim;
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        round_terms(d, &self.rows, self.chosen, w, &mut g, &mut h, Need::Hessian);
        PsdMatrix::from_symmetric(symmetric_from_upper(d, &h))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Need {
    Value,
    Gradient,
    Hessian,
}

/// Adds one round's loss contribution to `grad` (length `d`) and the upper
/// triangle of `hess` (row-major `d × d`) as requested, returning the loss.
pub(crate) fn round_terms(
    dim: usize,
    rows: &[f64],
    chosen: Option<usize>,
    w: &[f64],
    grad: &mut [f64],
    hess: &mut [f64],
    need: Need,
) -> f64 {
    let m = rows.len() / dim;
    let mut u = [0.0f64; 32];
    let mut heap;
    let u: &mut [f64] = if m <= u.len() {
        &mut u[..m]
    } else {
        heap = vec![0.0; m];
        &mut heap
    };
    let mut umax = 0.0f64;
    for (j, x) in rows.chunks_exact(dim).enumerate() {
        u[j] = dot(x, w);
        umax = umax.max(u[j]);
    }
    let mut z = (-umax).exp();
    for uj in u.iter_mut() {
        *uj = (*uj - umax).exp();
        z += *uj;
    }
    let log_partition = umax + z.ln();
    let loss = match chosen {
        Some(p) => log_partition - dot(&rows[p * dim..(p + 1) * dim], w),
        None => log_partition,
    };
    if need == Need::Value {
        return loss;
    }
    // u now holds exp(uⱼ − umax); turn it into probabilities
    for uj in u.iter_mut() {
        *uj /= z;
    }
    let mut mean = [0.0f64; 64];
    let mut mean_heap;
    let mean: &mut [f64] = if dim <= mean.len() {
        &mut mean[..dim]
    } else {
        mean_heap = vec![0.0; dim];
        &mut mean_heap
    };
    for (x, &p) in rows.chunks_exact(dim).zip(u.iter()) {
        for k in 0..dim {
            mean[k] += p * x[k];
        }
    }
    for k in 0..dim {
        grad[k] += mean[k];
    }
    if let Some(p) = chosen {
        let x = &rows[p * dim..(p + 1) * dim];
        for k in 0..dim {
            grad[k] -= x[k];
        }
    }
    if need == Need::Hessian {
        for (x, &p) in rows.chunks_exact(dim).zip(u.iter()) {
            for a in 0..dim {
                let pa = p * x[a];
                let row = &mut hess[a * dim..(a + 1) * dim];
                for b in a..dim {
                    row[b] += pa * x[b];
                }
            }
        }
        for a in 0..dim {
            let row = &mut hess[a * dim..(a + 1) * dim];
            for b in a..dim {
                row[b] -= mean[a] * mean[b];
            }
        }
    }
    loss
}

/// [`round_terms`] with the dimension fixed at compile time; `hess` is the
/// full row-major `D × D` block, of which only the upper triangle is
/// meaningful to callers.
#[inline]
pub(crate) fn round_terms_fixed<const D: usize>(
    rows: &[f64],
    chosen: Option<usize>,
    w: &[f64; D],
    grad: &mut [f64; D],
    hess: &mut [[f64; D]; D],
    need: Need,
) -> f64 {
    let m = rows.len() / D;
    if m > 32 {
        let mut g = grad.to_vec();
        let mut h = vec![0.0; D * D];
        for a in 0..D {
            h[a * D..(a + 1) * D].copy_from_slice(&hess[a]);
        }
        let loss = round_terms(D, rows, chosen, w, &mut g, &mut h, need);
        grad.copy_from_slice(&g);
        for a in 0..D {
            hess[a].copy_from_slice(&h[a * D..(a + 1) * D]);
        }
        return loss;
    }
    let mut u = [0.0f64; 32];
    let mut umax = 0.0f64;
    for (j, x) in rows.chunks_exact(D).enumerate() {
        let mut acc = 0.0;
        for k in 0..D {
            acc += x[k] * w[k];
        }
        u[j] = acc;
        umax = umax.max(acc);
    }
    let mut z = (-umax).exp();
    for uj in &mut u[..m] {
        *uj = (*uj - umax).exp();
        z += *uj;
    }
    let log_partition = umax + z.ln();
    let loss = match chosen {
        Some(p) => log_partition - dot(&rows[p * D..(p + 1) * D], w),
        None => log_partition,
    };
    if need == Need::Value {
        return loss;
    }
    let inv_z = 1.0 / z;
    let mut mean = [0.0f64; D];
    for (j, x) in rows.chunks_exact(D).enumerate() {
        let p = u[j] * inv_z;
        u[j] = p;
        for k in 0..D {
            mean[k] += p * x[k];
        }
    }
    for k in 0..D {
        grad[k] += mean[k];
    }
    if let Some(p) = chosen {
        let x = &rows[p * D..(p + 1) * D];
        for k in 0..D {
            grad[k] -= x[k];
        }
    }
    if need == Need::Hessian {
        for (j, x) in rows.chunks_exact(D).enumerate() {
            let p = u[j];
            for a in 0..D {
                let pa = p * x[a];
                for b in 0..D {
                    hess[a][b] += pa * x[b];
                }
            }
        }
        for a in 0..D {
            for b in 0..D {
                hess[a][b] -= mean[a] * mean[b];
            }
        }
    }
    loss
}

pub(crate) fn symmetric_from_upper(dim: usize, upper: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i <= j {
            upper[i * dim + j]
        } else {
            upper[j * dim + i]
        }
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Choice probabilities `[p₀, p_{S…}]` from offered utilities, computed with
/// max-subtraction over the offered utilities and the outside option's zero.
pub fn probabilities_from_utilities(utilities: &[f64]) -> Vec<f64> {
    let umax = utilities.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut p = Vec::with_capacity(utilities.len() + 1);
    p.push((-umax).exp());
    p.extend(utilities.iter().map(|u| (u - umax).exp()));
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// `log(1 + Σ exp(zᵢ))`, evaluated stably.
pub fn log_partition(z: &[f64]) -> f64 {
    let zmax = z.iter().fold(0.0f64, |a, &b| a.max(b));
    zmax + ((-zmax).exp() + z.iter().map(|v| (v - zmax).exp()).sum::<f64>()).ln()
}

fn offered_utilities(ctx: &RoundContext, s: &Assortment, w: &[f64]) -> Result<Vec<f64>> {
    s.check(ctx)?;
    ctx.check_param(w)?;
    Ok(s.items().iter().map(|&i| dot(ctx.feature(i), w)).collect())
}

/// `[p(0|S,w), p(S[0]|S,w), …]`.
pub fn choice_probs(ctx: &RoundContext, s: &Assortment, w: &[f64]) -> Result<Vec<f64>> {
    Ok(probabilities_from_utilities(&offered_utilities(ctx, s, w)?))
}

/// Draws a choice from the MNL distribution by inverting its CDF, outside option first.
pub fn sample_choice<R: Rng + ?Sized>(
    ctx: &RoundContext,
    s: &Assortment,
    w: &[f64],
    rng: &mut R,
) -> Result<ChoiceOutcome> {
    let p = choice_probs(ctx, s, w)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = p.len() - 1;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            pick = k;
            break;
        }
    }
    if pick == 0 {
        Ok(ChoiceOutcome::outside(s.len()))
    } else {
        ChoiceOutcome::item(s, pick - 1)
    }
}

/// `Σ_{i∈S} p(i|S,w)·rᵢ`.
pub fn expected_revenue(ctx: &RoundContext, s: &Assortment, w: &[f64]) -> Result<f64> {
    let p = choice_probs(ctx, s, w)?;
    Ok(s.items()
        .iter()
        .zip(&p[1..])
        .map(|(&i, pi)| pi * ctx.rewards()[i])
        .sum())
}

/// Negative log-likelihood of the observed choice, `−log p(chosen|S,w)`;
/// the outside option contributes `−log p(0|S,w)`.
pub fn loss(ctx: &RoundContext, s: &Assortment, y: &ChoiceOutcome, w: &[f64]) -> Result<f64> {
    ctx.check_param(w)?;
    Ok(Observation::new(ctx, s, y)?.loss(w))
}

/// `Σ_{i∈S} (p(i|S,w) − yᵢ) xᵢ`.
pub fn loss_gradient(
    ctx: &RoundContext,
    s: &Assortment,
    y: &ChoiceOutcome,
    w: &[f64],
) -> Result<DVector<f64>> {
    ctx.check_param(w)?;
    Ok(Observation::new(ctx, s, y)?.gradient(w))
}

/// `Σᵢ pᵢ xᵢxᵢᵀ − (Σᵢ pᵢxᵢ)(Σᵢ pᵢxᵢ)ᵀ`; independent of the observed choice.
pub fn loss_hessian(ctx: &RoundContext, s: &Assortment, w: &[f64]) -> Result<PsdMatrix> {
    ctx.check_param(w)?;
    s.check(ctx)?;
    let mut rows = Vec::with_capacity(s.len() * ctx.dim());
    for &i in s.items() {
        rows.extend_from_slice(ctx.feature(i));
    }
    Ok(Observation::from_rows(ctx.dim(), rows, None)?.hessian(w))
}

/// Item probabilities (outside option omitted) for utilities `z`.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    probabilities_from_utilities(z)[1..].to_vec()
}

/// Inverse of [`softmax`]: `[σ⁺(q)]ᵢ = log(qᵢ / (1 − ‖q‖₁))`.
pub fn softmax_pinv(q: &[f64]) -> Result<Vec<f64>> {
    if q.iter().any(|&v| !(v > 0.0)) {
        return Err(MnlError::Domain("probabilities must be positive".into()));
    }
    let total: f64 = q.iter().sum();
    if !(total < 1.0) {
        return Err(MnlError::Domain(format!(
            "item probabilities sum to {total} >= 1"
        )));
    }
    let outside = 1.0 - total;
    Ok(q.iter().map(|v| (v / outside).ln()).collect())
}

/// Hessian of the log-partition in utility space: `diag(p) − p pᵀ` over the
/// offered items.
pub fn utility_hessian(z: &[f64]) -> DMatrix<f64> {
    let p = softmax(z);
    let k = p.len();
    DMatrix::from_fn(k, k, |i, j| {
        let d = if i == j { p[i] } else { 0.0 };
        d - p[i] * p[j]
    })
}

/// Self-concordance constant of the MNL loss in the ℓ∞ geometry.
pub const SELF_CONCORDANCE: f64 = 3.0 * std::f64::consts::SQRT_2;

/// Outcome of a sampled self-concordance check along a line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelfConcordanceReport {
    /// Largest `|φ'''(s)| / (‖b‖∞ φ''(s))` over the samples that cleared the noise floor.
    pub max_ratio: f64,
    /// Largest `|φ'''| − 3√2‖b‖∞φ''` after removing the estimated finite-difference noise.
    pub max_violation: f64,
    pub evaluated: usize,
    /// Samples where `φ''` was too small for the difference quotients to resolve.
    pub skipped: usize,
}

/// Checks `|φ'''(s)| ≤ 3√2 ‖b‖∞ φ''(s)` for `φ(s) = ℓ̄(a + s·b)` at `samples`
/// points `s` drawn uniformly from `[-1, 1]`.
///
/// `a` and `b` live in utility space (one coordinate per offered item). The
/// linear part of the loss has no curvature, so only the log-partition is
/// differentiated, by 5-point central differences.
pub fn check_self_concordance<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<SelfConcordanceReport> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MnlError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let binf = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut report = SelfConcordanceReport::default();
    if binf == 0.0 {
        report.evaluated = samples;
        return Ok(report);
    }
    let h = 1e-2 / binf;
    let phi = |s: f64| -> f64 {
        let z: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| ai + s * bi).collect();
        log_partition(&z)
    };
    for _ in 0..samples {
        let s: f64 = rng.random_range(-1.0..=1.0);
        let f: [f64; 5] = [
            phi(s - 2.0 * h),
            phi(s - h),
            phi(s),
            phi(s + h),
            phi(s + 2.0 * h),
        ];
        let d2 = (-f[4] + 16.0 * f[3] - 30.0 * f[2] + 16.0 * f[1] - f[0]) / (12.0 * h * h);
        let d3 = (f[4] - 2.0 * f[3] + 2.0 * f[1] - f[0]) / (2.0 * h * h * h);
        let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let noise3 = 6.0 * f64::EPSILON * fmax / (2.0 * h * h * h);
        let noise2 = 64.0 * f64::EPSILON * fmax / (12.0 * h * h);
        let violation = d3.abs() - noise3 - SELF_CONCORDANCE * binf * (d2 + noise2);
        report.max_violation = report.max_violation.max(violation);
        if binf * d2 > 1e4 * noise3 {
            report.max_ratio = report.max_ratio.max(d3.abs() / (binf * d2));
            report.evaluated += 1;
        } else {
            report.skipped += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx2() -> RoundContext {
        RoundContext::new(
            &[vec![1.0, 0.0], vec![0.0, -1.0], vec![0.6, 0.8], vec![0.0, 0.0]],
            vec![0.5, 1.0, 0.25, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn context_validation() {
        assert!(RoundContext::new(&[vec![1.0, 0.1]], vec![0.5]).is_err());
        assert!(RoundContext::new(&[vec![0.1, 0.1]], vec![1.5]).is_err());
        assert!(RoundContext::new(&[vec![0.1, 0.1], vec![0.1]], vec![0.5, 0.5]).is_err());
        assert!(RoundContext::new(&[], vec![]).is_err());
    }

    #[test]
    fn assortment_validation() {
        assert!(Assortment::new(vec![], 4, 2).is_err());
        assert!(Assortment::new(vec![1, 1], 4, 2).is_err());
        assert!(Assortment::new(vec![0, 1, 2], 4, 2).is_err());
        assert!(matches!(
            Assortment::new(vec![4], 4, 2),
            Err(MnlError::IndexOutOfRange { .. })
        ));
        assert_eq!(Assortment::new(vec![3, 1], 4, 2).unwrap().items(), &[1, 3]);
    }

    #[test]
    fn zero_parameter_is_uniform() {
        let ctx = ctx2();
        let s = Assortment::new(vec![0, 1, 2, 3], 4, 4).unwrap();
        let p = choice_probs(&ctx, &s, &[0.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn binary_logit_at_zero_utility() {
        let ctx = ctx2();
        let s = Assortment::singleton(3);
        let p = choice_probs(&ctx, &s, &[0.7, -0.2]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn two_item_closed_form() {
        let ctx = ctx2();
        let s = Assortment::new(vec![0, 1], 4, 2).unwrap();
        // x₀·w = 1, x₁·w = −1
        let p = choice_probs(&ctx, &s, &[1.0, 1.0]).unwrap();
        let e = std::f64::consts::E;
        let den = 1.0 + e + 1.0 / e;
        assert!((p[1] - e / den).abs() < 1e-15);
        assert!((p[2] - (1.0 / e) / den).abs() < 1e-15);
        assert!((p[0] - 1.0 / den).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_item_rejected() {
        let ctx = ctx2();
        let s = Assortment::singleton(7);
        assert!(matches!(
            choice_probs(&ctx, &s, &[0.0, 0.0]),
            Err(MnlError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn saturated_item_is_always_chosen() {
        let ctx = RoundContext::new(&[vec![1.0], vec![0.0]], vec![1.0, 1.0]).unwrap();
        let s = Assortment::new(vec![0, 1], 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        for _ in 0..10_000 {
            if sample_choice(&ctx, &s, &[50.0], &mut rng).unwrap().chosen == Choice::Item(0) {
                hits += 1;
            }
        }
        assert!(hits as f64 / 1e4 > 0.999);
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let ctx = ctx2();
        let s = Assortment::new(vec![0, 1, 2, 3], 4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let y = sample_choice(&ctx, &s, &[0.0, 0.0], &mut rng).unwrap();
            counts[y.position.map_or(0, |p| p + 1)] += 1;
        }
        // binomial(n, 0.2): 3σ band
        let sigma = (0.2f64 * 0.8 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let ctx = ctx2();
        let s = Assortment::new(vec![0, 2], 4, 2).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_choice(&ctx, &s, &[0.3, 0.1], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn onehot_has_single_one() {
        let s = Assortment::new(vec![1, 3], 4, 2).unwrap();
        assert_eq!(ChoiceOutcome::outside(2).onehot(), vec![1.0, 0.0, 0.0]);
        assert_eq!(ChoiceOutcome::item(&s, 1).unwrap().onehot(), vec![0.0, 0.0, 1.0]);
        assert_eq!(ChoiceOutcome::item(&s, 1).unwrap().chosen, Choice::Item(3));
    }

    #[test]
    fn revenue_special_cases() {
        let ctx = RoundContext::new(&[vec![0.5], vec![-0.2], vec![0.9]], vec![1.0, 1.0, 1.0]).unwrap();
        let s = Assortment::new(vec![0, 1, 2], 3, 3).unwrap();
        assert!((expected_revenue(&ctx, &s, &[0.0]).unwrap() - 0.75).abs() < 1e-15);
        let zero = RoundContext::new(&[vec![0.5], vec![-0.2]], vec![0.0, 0.0]).unwrap();
        let s = Assortment::new(vec![0, 1], 2, 2).unwrap();
        assert_eq!(expected_revenue(&zero, &s, &[0.4]).unwrap(), 0.0);
    }

    #[test]
    fn loss_special_cases() {
        let ctx = ctx2();
        let s = Assortment::new(vec![0, 1, 2], 4, 3).unwrap();
        for y in [ChoiceOutcome::outside(3), ChoiceOutcome::item(&s, 2).unwrap()] {
            assert!((loss(&ctx, &s, &y, &[0.0, 0.0]).unwrap() - 4f64.ln()).abs() < 1e-15);
        }
        let single = Assortment::singleton(2);
        let y = ChoiceOutcome::item(&single, 0).unwrap();
        let w = [0.5, -1.0];
        let u = 0.6 * 0.5 - 0.8;
        let expected = (1.0 + f64::exp(-u)).ln();
        assert!((loss(&ctx, &single, &y, &w).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn gradient_at_zero_for_chosen_singleton() {
        let ctx = ctx2();
        let s = Assortment::singleton(2);
        let y = ChoiceOutcome::item(&s, 0).unwrap();
        let g = loss_gradient(&ctx, &s, &y, &[0.0, 0.0]).unwrap();
        assert!((g[0] + 0.3).abs() < 1e-15 && (g[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_saturation() {
        let ctx = RoundContext::new(&[vec![1.0]], vec![1.0]).unwrap();
        let s = Assortment::singleton(0);
        let y = ChoiceOutcome::item(&s, 0).unwrap();
        let g = loss_gradient(&ctx, &s, &y, &[40.0]).unwrap();
        assert!(g.norm() < 1e-15);
        let g = loss_gradient(&ctx, &s, &ChoiceOutcome::outside(1), &[-40.0]).unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn singleton_hessian_is_binary_logistic() {
        let ctx = ctx2();
        let s = Assortment::singleton(2);
        let w = [0.4, 0.3];
        let u = 0.6 * 0.4 + 0.8 * 0.3;
        let p = 1.0 / (1.0 + f64::exp(-u));
        let h = loss_hessian(&ctx, &s, &w).unwrap();
        let x = [0.6, 0.8];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h.matrix()[(i, j)] - p * (1.0 - p) * x[i] * x[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_pinv_cases() {
        let z = softmax_pinv(&[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-15));
        assert!(softmax_pinv(&[0.5, 0.5]).is_err());
        assert!(softmax_pinv(&[0.7, 0.4]).is_err());
        assert!(softmax_pinv(&[0.0, 0.4]).is_err());
    }

    #[test]
    fn self_concordance_trivial_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = check_self_concordance(&[0.3, -0.2], &[0.0, 0.0], 10, &mut rng).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert_eq!(r.max_violation, 0.0);
    }
}
