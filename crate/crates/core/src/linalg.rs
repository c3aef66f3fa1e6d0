//! Small dense symmetric positive (semi-)definite matrices and projections
//! onto Euclidean balls and ellipsoids under a quadratic metric.
//!
//! Dimensions here are tiny (a handful up to a few dozen), so everything is
//! dense. Projections are computed exactly in a (simultaneously) diagonalizing
//! basis, leaving a single scalar secular equation in the Lagrange multiplier.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{MnlError, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const JITTER: f64 = 1e-12;
const SECULAR_MAX_ITER: usize = 200;
const SECULAR_TOL: f64 = 1e-12;

/// Symmetric PSD matrix with a lazily computed Cholesky factor.
///
/// Values are immutable once built; updates return new matrices. The factor
/// lives in a [`OnceLock`] so a shared `&PsdMatrix` can be factored from any
/// thread.
#[derive(Clone, Debug)]
pub struct PsdMatrix {
    mat: DMatrix<f64>,
    factor: OnceLock<Option<Cholesky<f64, Dyn>>>,
}

impl PsdMatrix {
    /// Wraps a square matrix, rejecting asymmetry above `1e-12` (relative to
    /// the largest entry) and symmetrizing the rest exactly.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        if n != mat.ncols() {
            return Err(MnlError::DimensionMismatch {
                expected: n,
                got: mat.ncols(),
            });
        }
        if n == 0 {
            return Err(MnlError::Domain("empty matrix".into()));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(MnlError::Domain("matrix has non-finite entries".into()));
        }
        let scale = mat.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (mat[(i, j)] - mat[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(MnlError::Domain(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        Ok(Self::from_symmetric(sym))
    }

    pub(crate) fn from_symmetric(mat: DMatrix<f64>) -> Self {
        Self {
            mat,
            factor: OnceLock::new(),
        }
    }

    /// `scale * I_d`.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self::from_symmetric(DMatrix::identity(dim, dim) * scale)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_symmetric(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Entrywise sum `self + other`. The result carries no cached factor.
    pub fn accumulate(&self, other: &PsdMatrix) -> Result<PsdMatrix> {
        self.add_scaled(other, 1.0)
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &PsdMatrix, scale: f64) -> Result<PsdMatrix> {
        if self.dim() != other.dim() {
            return Err(MnlError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(Self::from_symmetric(&self.mat + &other.mat * scale))
    }

    /// `self + scale * x xᵀ`.
    pub fn add_outer(&self, x: &[f64], scale: f64) -> Result<PsdMatrix> {
        let d = self.dim();
        if x.len() != d {
            return Err(MnlError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let mut mat = self.mat.clone();
        for i in 0..d {
            for j in 0..d {
                mat[(i, j)] += scale * x[i] * x[j];
            }
        }
        Ok(Self::from_symmetric(mat))
    }

    /// Cholesky factor, adding escalating diagonal jitter (starting at
    /// `1e-12` times the largest diagonal entry) when the plain
    /// factorization fails.
    pub fn cholesky(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.factor
            .get_or_init(|| factorize(&self.mat))
            .as_ref()
            .ok_or(MnlError::Singular)
    }

    /// `M⁻¹ v` via the Cholesky factor.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v.len())?;
        Ok(self.cholesky()?.solve(v))
    }

    /// `√(vᵀ M v)`.
    pub fn mahalanobis(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v.len())?;
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for (j, vj) in v.iter().enumerate() {
                row += self.mat[(i, j)] * vj;
            }
            acc += v[i] * row;
        }
        Ok(acc.max(0.0).sqrt())
    }

    /// `√(vᵀ M⁻¹ v)`, computed as `‖L⁻¹ v‖` with the Cholesky factor `L`.
    pub fn inv_mahalanobis(&self, v: &[f64]) -> Result<f64> {
        Ok(self.inv_quadratic(v)?.sqrt())
    }

    /// `vᵀ M⁻¹ v`.
    pub fn inv_quadratic(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v.len())?;
        let chol = self.cholesky()?;
        let mut y = DVector::from_column_slice(v);
        // the triangular solve only reads the lower triangle
        chol.l_dirty().solve_lower_triangular_mut(&mut y);
        Ok(y.norm_squared())
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.mat.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(MnlError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }
}

fn factorize(mat: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(mat.clone()) {
        return Some(c);
    }
    let scale = mat.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut jitter = JITTER * scale;
    while jitter <= 1e-6 * scale {
        let shifted = mat + DMatrix::identity(mat.nrows(), mat.ncols()) * jitter;
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}

/// `{w : ‖w − center‖_metric ≤ radius}`.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub metric: PsdMatrix,
    pub radius: f64,
}

impl Ellipsoid {
    /// A zero radius is allowed and describes the singleton `{center}`.
    pub fn new(center: DVector<f64>, metric: PsdMatrix, radius: f64) -> Result<Self> {
        if center.len() != metric.dim() {
            return Err(MnlError::DimensionMismatch {
                expected: metric.dim(),
                got: center.len(),
            });
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(MnlError::Domain(format!("ellipsoid radius {radius}")));
        }
        metric.cholesky()?;
        Ok(Self {
            center,
            metric,
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `‖w − center‖_metric`.
    pub fn distance(&self, w: &[f64]) -> Result<f64> {
        let diff: Vec<f64> = w
            .iter()
            .zip(self.center.iter())
            .map(|(a, b)| a - b)
            .collect();
        self.metric.mahalanobis(&diff)
    }

    pub fn contains(&self, w: &[f64]) -> Result<bool> {
        Ok(self.distance(w)? <= self.radius + 1e-10 * self.radius.max(1.0))
    }
}

/// Feasible region for a constrained estimator update.
#[derive(Clone, Debug)]
pub enum SearchSpace {
    /// Origin-centred Euclidean ball.
    Ball { radius: f64 },
    Ellipsoid(Ellipsoid),
}

impl SearchSpace {
    pub fn contains(&self, w: &[f64]) -> Result<bool> {
        match self {
            SearchSpace::Ball { radius } => {
                let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                Ok(n <= radius + 1e-10 * radius.max(1.0))
            }
            SearchSpace::Ellipsoid(e) => e.contains(w),
        }
    }

    /// `argmin_{w ∈ self} ‖w − v‖_metric`.
    pub fn project(&self, v: &DVector<f64>, metric: &PsdMatrix) -> Result<DVector<f64>> {
        match self {
            SearchSpace::Ball { radius } => project_metric_ball(v, metric, *radius),
            SearchSpace::Ellipsoid(e) => project_metric_ellipsoid(v, metric, e),
        }
    }
}

/// `argmin_{‖w‖₂ ≤ radius} ‖w − v‖_metric`.
///
/// Solved in the eigenbasis of `metric`, where the KKT conditions reduce to a
/// scalar secular equation in the multiplier; returns `v` unchanged when it
/// is already feasible.
pub fn project_metric_ball(v: &DVector<f64>, metric: &PsdMatrix, radius: f64) -> Result<DVector<f64>> {
    if v.len() != metric.dim() {
        return Err(MnlError::DimensionMismatch {
            expected: metric.dim(),
            got: v.len(),
        });
    }
    if !(radius > 0.0) {
        return Err(MnlError::Domain(format!("ball radius {radius}")));
    }
    if v.norm() <= radius * (1.0 + SECULAR_TOL) {
        return Ok(v.clone());
    }
    let eig = SymmetricEigen::new(metric.matrix().clone());
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let vt = eig.eigenvectors.tr_mul(v);
    let z = secular_shrink(&lambda, vt.as_slice(), radius)?;
    Ok(&eig.eigenvectors * DVector::from_vec(z))
}

/// `argmin_{w ∈ E} ‖w − v‖_metric` for the ellipsoid `E`.
///
/// With `E.metric = L Lᵀ` and `L⁻¹ metric L⁻ᵀ = Q Λ Qᵀ`, the substitution
/// `w = c + L⁻ᵀ Q z` turns the ellipsoid into the ball `‖z‖ ≤ r` and the
/// objective into `Σ λᵢ (zᵢ − ṽᵢ)²`.
pub fn project_metric_ellipsoid(
    v: &DVector<f64>,
    metric: &PsdMatrix,
    ellipsoid: &Ellipsoid,
) -> Result<DVector<f64>> {
    let d = metric.dim();
    if v.len() != d || ellipsoid.dim() != d {
        return Err(MnlError::DimensionMismatch {
            expected: d,
            got: if v.len() != d { v.len() } else { ellipsoid.dim() },
        });
    }
    let rel = v - &ellipsoid.center;
    if ellipsoid.metric.mahalanobis(rel.as_slice())? <= ellipsoid.radius * (1.0 + SECULAR_TOL) {
        return Ok(v.clone());
    }
    if ellipsoid.radius == 0.0 {
        return Ok(ellipsoid.center.clone());
    }
    let l = ellipsoid.metric.cholesky()?.l();
    // C = L⁻¹ M L⁻ᵀ
    let mut linv_m = metric.matrix().clone();
    l.solve_lower_triangular_mut(&mut linv_m);
    let mut c = linv_m.transpose();
    l.solve_lower_triangular_mut(&mut c);
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|x| x.max(0.0)).collect();
    let lt_rel = l.tr_mul(&rel);
    let vt = eig.eigenvectors.tr_mul(&lt_rel);
    let z = secular_shrink(&lambda, vt.as_slice(), ellipsoid.radius)?;
    let mut u = &eig.eigenvectors * DVector::from_vec(z);
    l.tr_solve_lower_triangular_mut(&mut u);
    Ok(&ellipsoid.center + u)
}

/// Minimizes `Σ λᵢ (zᵢ − ṽᵢ)²` subject to `‖z‖ ≤ r` with `ṽ` infeasible.
///
/// The minimizer is `zᵢ = λᵢ ṽᵢ / (λᵢ + μ)`; the multiplier solves
/// `1/‖z(μ)‖ = 1/r`, which is concave and increasing in `μ`, so Newton from
/// `μ = 0` converges monotonically from below.
fn secular_shrink(lambda: &[f64], vt: &[f64], radius: f64) -> Result<Vec<f64>> {
    let c: Vec<f64> = lambda.iter().zip(vt).map(|(l, v)| l * v).collect();
    let eval = |mu: f64| -> (f64, f64) {
        let mut n2 = 0.0;
        let mut d3 = 0.0;
        for (ci, li) in c.iter().zip(lambda) {
            let den = li + mu;
            if den > 0.0 {
                n2 += ci * ci / (den * den);
                d3 += ci * ci / (den * den * den);
            }
        }
        (n2.sqrt(), d3)
    };
    let mut mu = 0.0;
    let mut converged = false;
    for _ in 0..SECULAR_MAX_ITER {
        let (norm, d3) = eval(mu);
        if (norm - radius).abs() <= SECULAR_TOL * radius {
            converged = true;
            break;
        }
        if norm == 0.0 || d3 == 0.0 {
            break;
        }
        // φ(μ) = 1/‖z‖ − 1/r,  φ'(μ) = Σ cᵢ²/(λᵢ+μ)³ / ‖z‖³
        let phi = 1.0 / norm - 1.0 / radius;
        let dphi = d3 / (norm * norm * norm);
        let step = -phi / dphi;
        let next = mu + step;
        if !next.is_finite() || next <= mu {
            converged = (norm - radius).abs() <= 1e-10 * radius;
            break;
        }
        mu = next;
    }
    if !converged {
        return Err(MnlError::NonConvergence {
            what: "secular equation",
            iterations: SECULAR_MAX_ITER,
        });
    }
    let mut z: Vec<f64> = c
        .iter()
        .zip(lambda)
        .map(|(ci, li)| if li + mu > 0.0 { ci / (li + mu) } else { 0.0 })
        .collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        let s = radius / norm;
        z.iter_mut().for_each(|v| *v *= s);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> PsdMatrix {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        PsdMatrix::new(&a * a.transpose() + DMatrix::identity(d, d) * floor).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn accumulate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_spd(&mut rng, 4, 0.1);
        let s = m.accumulate(&PsdMatrix::zeros(4)).unwrap();
        assert_eq!(s.matrix(), m.matrix());
    }

    #[test]
    fn accumulate_rejects_dimension_mismatch() {
        let a = PsdMatrix::scaled_identity(3, 1.0);
        let b = PsdMatrix::scaled_identity(4, 1.0);
        assert!(matches!(
            a.accumulate(&b),
            Err(MnlError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn regularized_sum_of_rank_one_terms_keeps_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lambda = 3.0;
        let mut m = PsdMatrix::scaled_identity(5, lambda);
        for _ in 0..20 {
            let x = random_vec(&mut rng, 5, 1.0);
            m = m.add_outer(x.as_slice(), 0.25).unwrap();
        }
        assert!(m.min_eigenvalue() >= lambda - 1e-12);
    }

    #[test]
    fn sum_eigenvalues_dominate_individual_minima() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_spd(&mut rng, 4, 0.0);
            let b = random_spd(&mut rng, 4, 0.0);
            let s = a.accumulate(&b).unwrap();
            let lo = a.min_eigenvalue().max(b.min_eigenvalue());
            assert!(s.min_eigenvalue() >= lo - 1e-12);
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(PsdMatrix::new(m).is_err());
    }

    #[test]
    fn norms_under_identity_and_diagonal() {
        let v = [0.3, -0.4, 1.2];
        let id = PsdMatrix::scaled_identity(3, 1.0);
        let e = (0.09f64 + 0.16 + 1.44).sqrt();
        assert!((id.mahalanobis(&v).unwrap() - e).abs() < 1e-15);
        assert!((id.inv_mahalanobis(&v).unwrap() - e).abs() < 1e-15);

        let m = PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((m.mahalanobis(&[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((m.inv_mahalanobis(&[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inv_mahalanobis_matches_lu_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..=6 {
            let m = random_spd(&mut rng, d, 0.05);
            let v = random_vec(&mut rng, d, 1.0);
            let sol = m.matrix().clone().lu().solve(&v).unwrap();
            let oracle = v.dot(&sol).sqrt();
            let got = m.inv_mahalanobis(v.as_slice()).unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle.max(1.0), "{got} vs {oracle}");
        }
    }

    #[test]
    fn singular_matrix_reports_error() {
        let m = PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]))
            .unwrap()
            .add_scaled(&PsdMatrix::scaled_identity(2, 1.0), -1.0)
            .unwrap();
        assert!(matches!(m.inv_mahalanobis(&[1.0, 0.0]), Err(MnlError::Singular)));
    }

    #[test]
    fn ball_projection_interior_and_radial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_spd(&mut rng, 3, 0.1);
        let v = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        assert_eq!(project_metric_ball(&v, &m, 1.0).unwrap(), v);

        let id = PsdMatrix::scaled_identity(3, 2.5);
        let v = DVector::from_vec(vec![3.0, -4.0, 12.0]);
        let p = project_metric_ball(&v, &id, 2.0).unwrap();
        let expected = &v * (2.0 / 13.0);
        assert!((p - expected).norm() < 1e-12);
    }

    #[test]
    fn concentric_ellipsoid_projection_is_radial() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_spd(&mut rng, 4, 0.2);
        let c = random_vec(&mut rng, 4, 0.5);
        let e = Ellipsoid::new(c.clone(), a.clone(), 0.7).unwrap();
        let v = &c + random_vec(&mut rng, 4, 5.0);
        let dist = a.mahalanobis((&v - &c).as_slice()).unwrap();
        assert!(dist > 0.7);
        let p = project_metric_ellipsoid(&v, &a, &e).unwrap();
        let expected = &c + (&v - &c) * (0.7 / dist);
        assert!((p - expected).norm() < 1e-10);
    }

    #[test]
    fn zero_radius_ellipsoid_projects_to_center() {
        let a = PsdMatrix::scaled_identity(2, 1.0);
        let c = DVector::from_vec(vec![0.2, 0.1]);
        let e = Ellipsoid::new(c.clone(), a.clone(), 0.0).unwrap();
        let p = project_metric_ellipsoid(&DVector::from_vec(vec![1.0, 1.0]), &a, &e).unwrap();
        assert_eq!(p, c);
    }

    #[test]
    fn ellipsoid_projection_satisfies_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let d = rng.random_range(1..=6);
            let m = random_spd(&mut rng, d, 0.05);
            let a = random_spd(&mut rng, d, 0.05);
            let c = random_vec(&mut rng, d, 1.0);
            let e = Ellipsoid::new(c.clone(), a.clone(), rng.random_range(0.1..2.0)).unwrap();
            let v = random_vec(&mut rng, d, 6.0);
            let p = project_metric_ellipsoid(&v, &m, &e).unwrap();
            let dist = e.distance(p.as_slice()).unwrap();
            assert!(dist <= e.radius * (1.0 + 1e-10));
            if e.distance(v.as_slice()).unwrap() > e.radius {
                // M(p − v) + μ A(p − c) = 0 for some μ ≥ 0
                let g = m.matrix() * (&p - &v);
                let n = a.matrix() * (&p - &c);
                let mu = -g.dot(&n) / n.dot(&n);
                assert!(mu >= -1e-10);
                let resid = (&g + &n * mu).norm() / (g.norm().max(1.0));
                assert!(resid <= 1e-10, "kkt residual {resid}");
            }
        }
    }
}
