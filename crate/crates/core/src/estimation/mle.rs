//! Norm-constrained maximum likelihood and the likelihood-ratio confidence set
//! `{w ∈ B^d(B) : L_t(w) − L_t(ŵ_t) ≤ γ²}`.
//!
//! Both the fit and the optimistic utility `max x·w` over the confidence set
//! reduce to minimizing `L(w) − s·x·w` over the ball, which is done by
//! projected Newton: each step projects the Newton point onto the ball in the
//! Hessian metric, followed by an Armijo backtracking search.

use nalgebra::{DMatrix, DVector};

use crate::error::{MnlError, Result};
use crate::linalg::{project_metric_ball, PsdMatrix};
use crate::model::{dot, round_terms, round_terms_fixed, symmetric_from_upper, Need, Observation};

pub const MLE_TOL: f64 = 1e-8;
const MLE_MAX_ITER: usize = 500;
const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
/// Accepted residual of the likelihood constraint at the optimistic point.
pub const CONSTRAINT_TOL: f64 = 1e-6;
const KKT_MAX_ITER: usize = 25;
const MULTIPLIER_MAX_ITER: usize = 200;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Append-only record of offered feature rows and choices.
#[derive(Clone, Debug, Default)]
pub struct History {
    dim: usize,
    rows: Vec<f64>,
    starts: Vec<usize>,
    chosen: Vec<Option<usize>>,
}

/// Loss, gradient and (upper-triangular, row-major) Hessian of the summed loss.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess_upper: Vec<f64>,
}

impl LossEval {
    pub fn hessian(&self) -> DMatrix<f64> {
        symmetric_from_upper(self.grad.len(), &self.hess_upper)
    }
}

impl History {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            starts: vec![0],
            chosen: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of recorded rounds.
    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    pub fn push(&mut self, obs: &Observation) -> Result<()> {
        if obs.dim() != self.dim {
            return Err(MnlError::DimensionMismatch {
                expected: self.dim,
                got: obs.dim(),
            });
        }
        self.rows.extend_from_slice(obs.rows());
        self.starts.push(self.rows.len());
        self.chosen.push(obs.chosen());
        Ok(())
    }

    pub(crate) fn eval(&self, w: &[f64], need: Need) -> LossEval {
        match self.dim {
            1 => self.eval_fixed::<1>(w, need),
            2 => self.eval_fixed::<2>(w, need),
            3 => self.eval_fixed::<3>(w, need),
            4 => self.eval_fixed::<4>(w, need),
            5 => self.eval_fixed::<5>(w, need),
            6 => self.eval_fixed::<6>(w, need),
            7 => self.eval_fixed::<7>(w, need),
            8 => self.eval_fixed::<8>(w, need),
            9 => self.eval_fixed::<9>(w, need),
            10 => self.eval_fixed::<10>(w, need),
            _ => self.eval_dyn(w, need),
        }
    }

    fn eval_fixed<const D: usize>(&self, w: &[f64], need: Need) -> LossEval {
        let w: &[f64; D] = w.try_into().expect("parameter length equals the history dimension");
        let mut grad = [0.0; D];
        let mut hess = [[0.0; D]; D];
        let mut value = 0.0;
        for (r, chosen) in self.chosen.iter().enumerate() {
            let rows = &self.rows[self.starts[r]..self.starts[r + 1]];
            value += round_terms_fixed::<D>(rows, *chosen, w, &mut grad, &mut hess, need);
        }
        LossEval {
            value,
            grad: if need >= Need::Gradient { grad.to_vec() } else { Vec::new() },
            hess_upper: if need == Need::Hessian { hess.concat() } else { Vec::new() },
        }
    }

    fn eval_dyn(&self, w: &[f64], need: Need) -> LossEval {
        let d = self.dim;
        let mut grad = vec![0.0; if need >= Need::Gradient { d } else { 0 }];
        let mut hess = vec![0.0; if need == Need::Hessian { d * d } else { 0 }];
        let mut value = 0.0;
        for (r, chosen) in self.chosen.iter().enumerate() {
            let rows = &self.rows[self.starts[r]..self.starts[r + 1]];
            value += round_terms(d, rows, *chosen, w, &mut grad, &mut hess, need);
        }
        LossEval {
            value,
            grad,
            hess_upper: hess,
        }
    }

    /// `L(w) = Σ_s ℓ_s(w)`.
    pub fn loss(&self, w: &[f64]) -> f64 {
        self.eval(w, Need::Value).value
    }

    pub fn gradient(&self, w: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.eval(w, Need::Gradient).grad)
    }

    pub fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        self.eval(w, Need::Hessian).hessian()
    }

    pub fn full(&self, w: &[f64]) -> LossEval {
        self.eval(w, Need::Hessian)
    }
}

/// History plus the current constrained MLE.
#[derive(Clone, Debug)]
pub struct MleState {
    pub history: History,
    pub w_hat: DVector<f64>,
    pub loss_at_mle: f64,
    /// `1/(8B²)`; reported for reference, not used by the fit.
    pub reg: f64,
    pub bound: f64,
    hess_at_mle: Option<DMatrix<f64>>,
}

impl MleState {
    pub fn new(dim: usize, bound: f64) -> Result<Self> {
        if dim == 0 || !(bound > 0.0) {
            return Err(MnlError::Domain(format!("dimension {dim}, bound {bound}")));
        }
        Ok(Self {
            history: History::new(dim),
            w_hat: DVector::zeros(dim),
            loss_at_mle: 0.0,
            reg: 1.0 / (8.0 * bound * bound),
            bound,
            hess_at_mle: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.history.dim()
    }

    /// Records a round; the estimate is stale until the next [`mle_fit`].
    pub fn push(&mut self, obs: &Observation) -> Result<()> {
        self.history.push(obs)?;
        self.hess_at_mle = None;
        Ok(())
    }

    /// `∇²L(ŵ)` from the last fit (zero for an empty history).
    pub fn hessian_at_mle(&self) -> DMatrix<f64> {
        self.hess_at_mle
            .clone()
            .unwrap_or_else(|| DMatrix::zeros(self.dim(), self.dim()))
    }
}

/// Minimizes `L(w) − s·x·w` over `‖w‖ ≤ bound` by projected Newton with
/// Armijo backtracking, stopping once the projected-gradient norm
/// `‖w − P(w − ∇F)‖` drops to `tol`. `start_eval`, when given, must be the
/// full evaluation of `L` at `start`.
fn minimize_over_ball(
    history: &History,
    linear: Option<(&[f64], f64)>,
    start: &DVector<f64>,
    start_eval: Option<LossEval>,
    bound: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, LossEval)> {
    let d = history.dim();
    let objective = |value: f64, w: &DVector<f64>| match linear {
        Some((x, s)) => value - s * dot(x, w.as_slice()),
        None => value,
    };
    let mut w = radial(start, bound);
    let mut ev = match start_eval {
        Some(ev) if w == *start => ev,
        _ => history.full(w.as_slice()),
    };
    for _ in 0..max_iter {
        let mut g = DVector::from_column_slice(&ev.grad);
        if let Some((x, s)) = linear {
            for k in 0..d {
                g[k] -= s * x[k];
            }
        }
        let pg = &w - radial(&(&w - &g), bound);
        if pg.norm() <= tol {
            return Ok((w, ev));
        }
        let f0 = objective(ev.value, &w);
        let mut hm = ev.hessian();
        let shift = 1e-10 * (hm.trace() / d as f64).max(1.0);
        for k in 0..d {
            hm[(k, k)] += shift;
        }
        let metric = PsdMatrix::from_symmetric(hm);
        let newton = &w - metric.solve(&g)?;
        let mut dir = project_metric_ball(&newton, &metric, bound)? - &w;
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            // numerically flat Newton direction: fall back to projected gradient
            dir = -pg;
            slope = g.dot(&dir);
        }
        let slack = 1e-13 * f0.abs().max(1.0);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            // the trial point is evaluated in full so an accepted step
            // needs no second pass over the history
            let trial = radial(&(&w + &dir * alpha), bound);
            let trial_ev = history.full(trial.as_slice());
            if objective(trial_ev.value, &trial) <= f0 + ARMIJO_C * alpha * slope + slack {
                w = trial;
                ev = trial_ev;
                accepted = true;
                break;
            }
            alpha *= ARMIJO_SHRINK;
        }
        if !accepted {
            break;
        }
    }
    Err(MnlError::NonConvergence {
        what: "projected Newton",
        iterations: max_iter,
    })
}

fn radial(v: &DVector<f64>, bound: f64) -> DVector<f64> {
    let n = v.norm();
    if n > bound {
        v * (bound / n)
    } else {
        v.clone()
    }
}

/// Refits `ŵ = argmin_{‖w‖≤B} L(w)`, warm-started at the previous estimate.
///
/// An empty history leaves `ŵ = 0` and `L ≡ 0`.
pub fn mle_fit(mut state: MleState, tol: f64) -> Result<MleState> {
    if state.history.is_empty() {
        state.w_hat = DVector::zeros(state.dim());
        state.loss_at_mle = 0.0;
        state.hess_at_mle = None;
        return Ok(state);
    }
    let (w, ev) = minimize_over_ball(&state.history, None, &state.w_hat, None, state.bound, tol, MLE_MAX_ITER)?;
    state.loss_at_mle = ev.value;
    state.hess_at_mle = Some(ev.hessian());
    state.w_hat = w;
    Ok(state)
}

/// `γ_t(δ)² = log(1/δ) + d·log(max{e, 4eB(t−1)/d})`.
pub fn mle_radius_sq(t: usize, bound: f64, dim: usize, delta: f64) -> f64 {
    let d = dim as f64;
    let e = std::f64::consts::E;
    let inner = (4.0 * e * bound * (t.saturating_sub(1)) as f64 / d).max(e);
    (1.0 / delta).ln() + d * inner.ln()
}

/// `max x·w` subject to `‖w‖ ≤ B` and `L(w) − L(ŵ) ≤ γ²`.
///
/// Requires a fitted state. Returns the value; see [`mle_optimistic_point`]
/// for the maximizer.
pub fn mle_optimistic_utility(state: &MleState, x: &[f64], gamma_sq: f64) -> Result<f64> {
    Ok(mle_optimistic_point(state, x, gamma_sq)?.1)
}

/// Maximizer and value of the optimistic utility problem.
///
/// When the ball does not bind, Newton on the KKT system `∇L(w) = s·x`,
/// `L(w) = L(ŵ) + γ²` from the quadratic model at `ŵ` converges in a few
/// steps. Otherwise the multiplier `s` is found by safeguarded Newton on
/// `h(s) = L(w(s)) − L(ŵ) − γ²`, where `w(s) = argmin_{‖w‖≤B} L(w) − s·x·w`
/// comes from the projected Newton solver.
pub fn mle_optimistic_point(state: &MleState, x: &[f64], gamma_sq: f64) -> Result<(DVector<f64>, f64)> {
    let d = state.dim();
    if x.len() != d {
        return Err(MnlError::DimensionMismatch { expected: d, got: x.len() });
    }
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if xn == 0.0 {
        return Ok((state.w_hat.clone(), 0.0));
    }
    let b = state.bound;
    let ball_point = DVector::from_iterator(d, x.iter().map(|v| v * b / xn));
    if state.history.is_empty() {
        return Ok((ball_point, b * xn));
    }
    if !(gamma_sq > 0.0) {
        return Ok((state.w_hat.clone(), dot(x, state.w_hat.as_slice())));
    }
    let target = state.loss_at_mle + gamma_sq;
    // the likelihood gap at the ball point is bounded below without a pass
    // over the history; only evaluate it when the bound is inconclusive
    let surely_outside = state.hess_at_mle.as_ref().is_some_and(|h| {
        let u = &ball_point - &state.w_hat;
        (u.transpose() * h * &u)[(0, 0)] / (2.0 + 6.0 * SQRT_2 * b) > gamma_sq * (1.0 + 1e-9)
    });
    if !surely_outside && state.history.loss(ball_point.as_slice()) <= target {
        return Ok((ball_point, b * xn));
    }
    let start = quadratic_start(state, x, gamma_sq);
    let mut seed = (state.w_hat.clone(), start.as_ref().map_or(1.0, |(_, s)| *s));
    if let Some(st) = &start {
        match kkt_newton(state, x, target, st) {
            Interior::Converged(w) => {
                let v = dot(x, w.as_slice());
                return Ok((w, v));
            }
            Interior::LeftBall(w, s) => {
                let w = radial(&w, b);
                let ev = state.history.full(w.as_slice());
                if let Some(nu) = sphere_multiplier(&ev, &w, x, s, b) {
                    if let Some(found) = kkt_sphere(state, x, target, &w, s, nu, &ev) {
                        let v = dot(x, found.as_slice());
                        return Ok((found, v));
                    }
                }
                seed = (w, s);
            }
            Interior::Failed => {}
        }
    }
    let w = multiplier_newton(state, x, target, gamma_sq, seed)?;
    let v = dot(x, w.as_slice());
    Ok((w, v))
}

enum Interior {
    Converged(DVector<f64>),
    /// Last iterate and multiplier when the iteration stepped outside the ball.
    LeftBall(DVector<f64>, f64),
    Failed,
}

/// `∇²L(ŵ) + εI` with a tiny `ε` so that it can be factored.
#[derive(Clone, Debug)]
pub struct LocalMetric {
    pub metric: PsdMatrix,
    pub shift: f64,
}

fn regularized_hessian(state: &MleState) -> LocalMetric {
    let mut h = state.hessian_at_mle();
    let d = state.dim();
    let shift = 1e-10 * (h.trace() / d as f64).max(1.0);
    for k in 0..d {
        h[(k, k)] += shift;
    }
    LocalMetric {
        metric: PsdMatrix::from_symmetric(h),
        shift,
    }
}

/// Quadratic-model start: `ŵ + s₀ H⁻¹x` with `s₀ = √(2γ² / xᵀH⁻¹x)`.
fn quadratic_start(state: &MleState, x: &[f64], gamma_sq: f64) -> Option<(DVector<f64>, f64)> {
    let h = regularized_hessian(state).metric;
    let y = h.solve(&DVector::from_column_slice(x)).ok()?;
    let q = dot(x, y.as_slice());
    if !(q > 0.0) || !q.is_finite() {
        return None;
    }
    let s0 = (2.0 * gamma_sq / q).sqrt();
    Some((&state.w_hat + y * s0, s0))
}

/// Newton on `∇L(w) = s·x`, `L(w) = target`, damped so that `s` stays
/// positive. Stops as soon as an iterate leaves the ball.
fn kkt_newton(state: &MleState, x: &[f64], target: f64, start: &(DVector<f64>, f64)) -> Interior {
    let d = state.dim();
    let b = state.bound;
    let (mut w, mut s) = start.clone();
    if w.norm() > b {
        return Interior::LeftBall(w, s);
    }
    for _ in 0..KKT_MAX_ITER {
        let ev = state.history.full(w.as_slice());
        let mut rhs = DVector::zeros(d + 1);
        for k in 0..d {
            rhs[k] = s * x[k] - ev.grad[k];
        }
        let r2 = ev.value - target;
        rhs[d] = -r2;
        let gnorm = ev.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rhs.rows(0, d).norm() <= 1e-9 * gnorm.max(1.0) && r2.abs() <= CONSTRAINT_TOL {
            return Interior::Converged(w);
        }
        let hm = ev.hessian();
        let mut jac = DMatrix::zeros(d + 1, d + 1);
        jac.view_mut((0, 0), (d, d)).copy_from(&hm);
        for k in 0..d {
            jac[(k, d)] = -x[k];
            jac[(d, k)] = ev.grad[k];
        }
        let Some(step) = jac.lu().solve(&rhs) else {
            return Interior::Failed;
        };
        let mut alpha = 1.0;
        while s + alpha * step[d] <= 0.5 * s {
            alpha *= 0.5;
        }
        for k in 0..d {
            w[k] += alpha * step[k];
        }
        s += alpha * step[d];
        if !s.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Interior::Failed;
        }
        if w.norm() > b {
            return Interior::LeftBall(w, s);
        }
    }
    Interior::Failed
}

/// `h'(s) = s·x·w'(s)`, differentiating the inner optimality conditions with
/// the ball treated as active when `w(s)` sits on the sphere.
fn multiplier_slope(ev: &LossEval, w: &DVector<f64>, x: &[f64], s: f64, b: f64) -> Option<f64> {
    let d = w.len();
    let hm = ev.hessian();
    let xv = DVector::from_column_slice(x);
    let nu = if w.norm() >= b * (1.0 - 1e-9) {
        (0..d).map(|k| (s * x[k] - ev.grad[k]) * w[k]).sum::<f64>() / (b * b)
    } else {
        0.0
    };
    let dw = if nu > 0.0 {
        let mut jac = DMatrix::zeros(d + 1, d + 1);
        jac.view_mut((0, 0), (d, d)).copy_from(&hm);
        let mut rhs = DVector::zeros(d + 1);
        for k in 0..d {
            jac[(k, k)] += nu;
            jac[(k, d)] = w[k];
            jac[(d, k)] = w[k];
            rhs[k] = x[k];
        }
        jac.lu().solve(&rhs)?.rows(0, d).into_owned()
    } else {
        hm.lu().solve(&xv)?
    };
    let slope = s * xv.dot(&dw);
    (slope > 0.0 && slope.is_finite()).then_some(slope)
}

/// Safeguarded Newton on `h(s) = L(w(s)) − target`, which increases with `s`.
///
/// Whenever `w(s)` lands on the sphere, Newton on the KKT system with both
/// constraints active is tried from there before the next multiplier step.
fn multiplier_newton(
    state: &MleState,
    x: &[f64],
    target: f64,
    gamma_sq: f64,
    seed: (DVector<f64>, f64),
) -> Result<DVector<f64>> {
    let b = state.bound;
    let hist = &state.history;
    let (mut w, s0) = seed;
    let mut s = if s0 > 0.0 && s0.is_finite() { s0 } else { 1.0 };
    let mut ev: Option<LossEval> = None;
    let (mut s_lo, mut w_lo) = (0.0, state.w_hat.clone());
    let mut s_hi: Option<f64> = None;
    debug_assert!(gamma_sq > 0.0);
    for _ in 0..MULTIPLIER_MAX_ITER {
        let (w_new, ev_new) = minimize_over_ball(hist, Some((x, s)), &w, ev.take(), b, MLE_TOL, MLE_MAX_ITER)?;
        w = w_new;
        let h = ev_new.value - target;
        if h.abs() <= CONSTRAINT_TOL {
            return Ok(w);
        }
        if let Some(nu) = sphere_multiplier(&ev_new, &w, x, s, b) {
            if let Some(found) = kkt_sphere(state, x, target, &w, s, nu, &ev_new) {
                return Ok(found);
            }
        }
        if h < 0.0 {
            s_lo = s;
            w_lo = w.clone();
        } else {
            s_hi = Some(s);
        }
        let newton = multiplier_slope(&ev_new, &w, x, s, b).map(|slope| s - h / slope);
        ev = Some(ev_new);
        s = match s_hi {
            Some(hi) => {
                if hi - s_lo <= 1e-15 * hi {
                    // residual cannot be resolved further; stay feasible
                    return Ok(w_lo);
                }
                match newton {
                    Some(n) if n > s_lo && n < hi => n,
                    _ => 0.5 * (s_lo + hi),
                }
            }
            None => match newton {
                Some(n) if n > s => n,
                _ => 2.0 * s,
            },
        };
    }
    Err(MnlError::NonConvergence {
        what: "optimistic utility multiplier search",
        iterations: MULTIPLIER_MAX_ITER,
    })
}

/// Ball multiplier `ν = (s·x − ∇L)·w / B²` when `w` is on the sphere and the
/// ball binds.
fn sphere_multiplier(ev: &LossEval, w: &DVector<f64>, x: &[f64], s: f64, b: f64) -> Option<f64> {
    if w.norm() < b * (1.0 - 1e-9) {
        return None;
    }
    let nu = (0..w.len()).map(|k| (s * x[k] - ev.grad[k]) * w[k]).sum::<f64>() / (b * b);
    (nu > 0.0).then_some(nu)
}

/// Newton on `∇L(w) + ν·w = s·x`, `L(w) = target`, `‖w‖ = B`, retracting onto
/// the sphere after every step. `None` unless it reaches a KKT point with
/// `s > 0` and `ν ≥ 0` while the likelihood residual keeps shrinking.
fn kkt_sphere(
    state: &MleState,
    x: &[f64],
    target: f64,
    w0: &DVector<f64>,
    s0: f64,
    nu0: f64,
    ev0: &LossEval,
) -> Option<DVector<f64>> {
    let d = state.dim();
    let b = state.bound;
    let (mut w, mut s, mut nu) = (w0.clone(), s0, nu0);
    let mut ev = ev0.clone();
    let mut last_r2 = f64::INFINITY;
    for _ in 0..KKT_MAX_ITER {
        let r2 = ev.value - target;
        let mut rhs = DVector::zeros(d + 2);
        for k in 0..d {
            rhs[k] = s * x[k] - nu * w[k] - ev.grad[k];
        }
        let gnorm = ev.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rhs.rows(0, d).norm() <= 1e-9 * gnorm.max(1.0) && r2.abs() <= CONSTRAINT_TOL {
            return (s > 0.0 && nu >= 0.0).then_some(w);
        }
        if !(r2.abs() < last_r2) && last_r2 < f64::INFINITY && r2.abs() > CONSTRAINT_TOL {
            return None;
        }
        last_r2 = r2.abs();
        rhs[d] = -r2;
        let hm = ev.hessian();
        let mut jac = DMatrix::zeros(d + 2, d + 2);
        jac.view_mut((0, 0), (d, d)).copy_from(&hm);
        for k in 0..d {
            jac[(k, k)] += nu;
            jac[(k, d)] = -x[k];
            jac[(k, d + 1)] = w[k];
            jac[(d, k)] = ev.grad[k];
            jac[(d + 1, k)] = w[k];
        }
        let step = jac.lu().solve(&rhs)?;
        for k in 0..d {
            w[k] += step[k];
        }
        w *= b / w.norm();
        s += step[d];
        nu += step[d + 1];
        if !(s > 0.0) || !(nu > -1e-12) || !s.is_finite() {
            return None;
        }
        ev = state.history.full(w.as_slice());
    }
    None
}

/// Cheap bounds `[lower, upper]` on the optimistic utility of `x`.
///
/// The lower bound is the plug-in `x·ŵ` (`ŵ` is feasible). The upper bound
/// uses the self-concordance lower bound on `L` around the constrained MLE:
/// for feasible `w`, `L(w) − L(ŵ) ≥ ‖w − ŵ‖²_{∇²L(ŵ)} / (2 + 6√2·B)`, so the
/// set lies in an ellipsoid around `ŵ`.
pub fn optimistic_bounds(state: &MleState, x: &[f64], gamma_sq: f64, local: &LocalMetric) -> Result<(f64, f64)> {
    let b = state.bound;
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let plug_in = dot(x, state.w_hat.as_slice());
    if state.history.is_empty() {
        return Ok((b * xn, b * xn));
    }
    if !(gamma_sq > 0.0) {
        return Ok((plug_in, plug_in));
    }
    // with the shifted metric, ‖u‖²_{H+εI} ≤ R² + ε‖u‖² and ‖u‖ ≤ 2B
    let r2 = (2.0 + 6.0 * SQRT_2 * b) * gamma_sq * (1.0 + 1e-6) + local.shift * 4.0 * b * b + 1e-9;
    let upper = plug_in + r2.sqrt() * local.metric.inv_mahalanobis(x)?;
    Ok((plug_in.min(b * xn), upper.min(b * xn)))
}

/// `∇²L(ŵ)` with a small diagonal shift, for use with [`optimistic_bounds`].
pub fn bounds_metric(state: &MleState) -> LocalMetric {
    regularized_hessian(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_ball_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            if dot(&v, &v) <= 1.0 {
                return v;
            }
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, d: usize, rounds: usize, bound: f64) -> MleState {
        let mut st = MleState::new(d, bound).unwrap();
        let truth = unit_ball_vec(rng, d);
        for _ in 0..rounds {
            let m = rng.random_range(1..=3);
            let rows: Vec<f64> = (0..m).flat_map(|_| unit_ball_vec(rng, d)).collect();
            let obs = Observation::from_rows(d, rows.clone(), None).unwrap();
            let probs = crate::model::probabilities_from_utilities(
                &rows.chunks(d).map(|r| dot(r, &truth)).collect::<Vec<_>>(),
            );
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = None;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = if k == 0 { None } else { Some(k - 1) };
                    break;
                }
            }
            let obs = Observation::from_rows(d, obs.rows().to_vec(), pick).unwrap();
            st.push(&obs).unwrap();
        }
        mle_fit(st, MLE_TOL).unwrap()
    }

    #[test]
    fn radius_at_first_round() {
        assert!((mle_radius_sq(1, 2.0, 4, 0.1) - (10f64.ln() + 4.0)).abs() < 1e-12);
        assert!((mle_radius_sq(1, 1.0, 3, 1.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn radius_grows_logarithmically() {
        let g = |t| mle_radius_sq(t, 1.0, 5, 0.1);
        for t in [100usize, 1000, 10_000] {
            let ratio = g(10 * t - 9) - g(t);
            // d·log(10) per decade once the max has unclamped
            assert!((ratio - 5.0 * 10f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_data_gives_zero_estimate() {
        let mut st = MleState::new(2, 1.0).unwrap();
        let x = [0.6, -0.3];
        let nx = [-0.6, 0.3];
        for rows in [x, nx] {
            st.push(&Observation::from_rows(2, rows.to_vec(), Some(0)).unwrap()).unwrap();
            st.push(&Observation::from_rows(2, rows.to_vec(), None).unwrap()).unwrap();
        }
        let st = mle_fit(st, MLE_TOL).unwrap();
        assert!(st.w_hat.norm() < 1e-9);
    }

    #[test]
    fn repeated_outside_choice_hits_boundary() {
        let mut st = MleState::new(2, 1.5).unwrap();
        for _ in 0..10 {
            st.push(&Observation::from_rows(2, vec![0.8, 0.0], None).unwrap()).unwrap();
        }
        let st = mle_fit(st, MLE_TOL).unwrap();
        // the likelihood keeps improving as x·w → −∞, so the ball binds
        assert!((st.w_hat.norm() - 1.5).abs() < 1e-9);
        assert!(st.w_hat[0] < -1.49);
        let g = st.history.gradient(st.w_hat.as_slice());
        let pg = &st.w_hat - radial(&(&st.w_hat - g), 1.5);
        assert!(pg.norm() <= 1e-8);
    }

    #[test]
    fn mle_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = random_state(&mut rng, 3, 40, 1.0);
        let best = st.history.loss(st.w_hat.as_slice());
        for _ in 0..100 {
            let w = unit_ball_vec(&mut rng, 3);
            assert!(st.history.loss(&w) >= best - 1e-12);
        }
    }

    #[test]
    fn optimistic_utility_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let st = random_state(&mut rng, 3, 30, 1.0);
        let x = [0.3, -0.5, 0.2];
        let xn = dot(&x, &x).sqrt();
        assert!((mle_optimistic_utility(&st, &x, 1e9).unwrap() - xn).abs() < 1e-12);
        let plug = dot(&x, st.w_hat.as_slice());
        assert_eq!(mle_optimistic_utility(&st, &x, 0.0).unwrap(), plug);
        let empty = MleState::new(3, 2.0).unwrap();
        assert!((mle_optimistic_utility(&empty, &x, 1.0).unwrap() - 2.0 * xn).abs() < 1e-12);
    }

    #[test]
    fn fast_and_fallback_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let st = random_state(&mut rng, 3, 20 + 10 * trial, 1.0);
            let x = unit_ball_vec(&mut rng, 3);
            let gamma_sq = rng.random_range(0.5..4.0);
            let target = st.loss_at_mle + gamma_sq;
            let xn = dot(&x, &x).sqrt();
            let corner: Vec<f64> = x.iter().map(|v| v / xn).collect();
            if st.history.loss(&corner) <= target {
                continue;
            }
            let slow = multiplier_newton(&st, &x, target, gamma_sq, (st.w_hat.clone(), 1.0)).unwrap();
            let (w, v) = mle_optimistic_point(&st, &x, gamma_sq).unwrap();
            assert!(w.norm() <= 1.0 + 1e-10);
            assert!(st.history.loss(w.as_slice()) <= target + CONSTRAINT_TOL);
            assert!((v - dot(&x, slow.as_slice())).abs() < 1e-5, "trial {trial}: {v} vs {}", dot(&x, slow.as_slice()));
        }
    }

    #[test]
    fn bounds_bracket_the_optimistic_utility() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..20 {
            let st = random_state(&mut rng, 4, 10 + 15 * trial, 1.0);
            let metric = bounds_metric(&st);
            let gamma_sq = mle_radius_sq(st.history.len() + 1, 1.0, 4, 0.1);
            for _ in 0..5 {
                let x = unit_ball_vec(&mut rng, 4);
                let v = mle_optimistic_utility(&st, &x, gamma_sq).unwrap();
                let (lo, hi) = optimistic_bounds(&st, &x, gamma_sq, &metric).unwrap();
                assert!(lo <= v + 1e-9 && v <= hi + 1e-9, "{lo} {v} {hi}");
            }
        }
    }
}
