//! Convex objectives exposed through value / gradient / Hessian-vector oracles,
//! and the quadratic instances used by the experiments.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = DVector<f64>;

/// A twice differentiable convex function with a Lipschitz gradient.
///
/// The dynamics only ever touch the objective through these oracles, so a
/// dense Hessian is never formed.
pub trait ObjectiveModel: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Point;
    fn hessian_vec(&self, x: &Point, direction: &Point) -> Point;

    /// Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;

    /// Quadratic-growth modulus; `0.0` when unknown.
    fn growth(&self) -> f64 {
        0.0
    }

    fn optimal_value(&self) -> Option<f64> {
        None
    }

    fn minimizer(&self) -> Option<&Point> {
        None
    }

    /// `value(x) - optimal_value`, or `None` when the optimal value is unknown.
    fn gap(&self, x: &Point) -> Option<f64> {
        self.optimal_value().map(|v| self.value(x) - v)
    }

    /// True when [`ObjectiveModel::gap`] is evaluated without subtracting two
    /// nearly equal values, i.e. it keeps relative precision near the minimum.
    fn gap_is_exact(&self) -> bool {
        false
    }
}

/// Dense description of `½ xᵀAx + bᵀx`.
#[derive(Debug, Clone)]
pub struct QuadraticSpec {
    pub matrix: DMatrix<f64>,
    pub linear: DVector<f64>,
}

#[derive(Debug, Clone)]
enum Curvature {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Curvature {
    fn apply(&self, d: &Point) -> Point {
        match self {
            Curvature::Diagonal(diag) => diag.component_mul(d),
            Curvature::Dense(a) => a * d,
        }
    }
}

/// `φ(x) = ½ xᵀAx + bᵀx` with `A` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    curvature: Curvature,
    linear: DVector<f64>,
    lipschitz: f64,
    growth: f64,
    minimizer: Option<Point>,
    optimal_value: Option<f64>,
}

impl Quadratic {
    /// Quadratic with diagonal Hessian `diag(entries)`.
    pub fn diagonal(entries: &[f64], linear: Option<DVector<f64>>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty diagonal".into()));
        }
        if entries.iter().any(|&e| !e.is_finite() || e < 0.0) {
            return Err(Error::InvalidArgument(
                "diagonal entries must be finite and nonnegative".into(),
            ));
        }
        let linear = linear.unwrap_or_else(|| DVector::zeros(n));
        if linear.len() != n {
            return Err(Error::InvalidArgument("linear term has wrong length".into()));
        }
        let diag = DVector::from_column_slice(entries);
        let lipschitz = entries.iter().cloned().fold(0.0, f64::max);
        let growth = entries.iter().cloned().fold(f64::INFINITY, f64::min);

        // Coordinates with zero curvature need a zero linear coefficient for
        // the minimum to be attained; the minimizer then sits at 0 there.
        let mut minimizer = DVector::zeros(n);
        let mut attained = true;
        for j in 0..n {
            if entries[j] > 0.0 {
                minimizer[j] = -linear[j] / entries[j];
            } else if linear[j] != 0.0 {
                attained = false;
            }
        }
        let mut q = Quadratic {
            curvature: Curvature::Diagonal(diag),
            linear,
            lipschitz,
            growth,
            minimizer: None,
            optimal_value: None,
        };
        if attained {
            q.optimal_value = Some(q.value(&minimizer));
            q.minimizer = Some(minimizer);
        }
        Ok(q)
    }

    /// Builds `A = Qᵀ diag(eigenvalues) Q` for an orthogonal `q`.
    pub fn from_spectrum(
        q: &DMatrix<f64>,
        eigenvalues: &[f64],
        linear: DVector<f64>,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if q.nrows() != n || q.ncols() != n || linear.len() != n {
            return Err(Error::InvalidArgument("dimension mismatch".into()));
        }
        if eigenvalues.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidArgument(
                "eigenvalues must be positive and finite".into(),
            ));
        }
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
        let mut a = q.transpose() * d * q;
        // Exact symmetry.
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = s;
                a[(j, i)] = s;
            }
        }
        let lipschitz = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let growth = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let minimizer = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("matrix is not positive definite".into()))?
            .solve(&(-&linear));
        let mut quad = Quadratic {
            curvature: Curvature::Dense(a),
            linear,
            lipschitz,
            growth,
            minimizer: None,
            optimal_value: None,
        };
        quad.optimal_value = Some(quad.value(&minimizer));
        quad.minimizer = Some(minimizer);
        Ok(quad)
    }

    pub fn spec(&self) -> QuadraticSpec {
        let matrix = match &self.curvature {
            Curvature::Diagonal(d) => DMatrix::from_diagonal(d),
            Curvature::Dense(a) => a.clone(),
        };
        QuadraticSpec {
            matrix,
            linear: self.linear.clone(),
        }
    }
}

impl ObjectiveModel for Quadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &Point) -> f64 {
        0.5 * x.dot(&self.curvature.apply(x)) + self.linear.dot(x)
    }

    fn gradient(&self, x: &Point) -> Point {
        self.curvature.apply(x) + &self.linear
    }

    fn hessian_vec(&self, _x: &Point, direction: &Point) -> Point {
        self.curvature.apply(direction)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn growth(&self) -> f64 {
        self.growth
    }

    fn optimal_value(&self) -> Option<f64> {
        self.optimal_value
    }

    fn minimizer(&self) -> Option<&Point> {
        self.minimizer.as_ref()
    }

    /// `½ (x − x*)ᵀ A (x − x*)`, which stays accurate down to underflow.
    fn gap(&self, x: &Point) -> Option<f64> {
        let xs = self.minimizer.as_ref()?;
        let d = x - xs;
        Some(0.5 * d.dot(&self.curvature.apply(&d)))
    }

    fn gap_is_exact(&self) -> bool {
        self.minimizer.is_some()
    }
}

/// `½(x₁² + ρx₂² + ρ²x₃²)`, condition number `max(ρ², ρ⁻²)`.
pub fn make_diag_rho(rho: f64) -> Result<Quadratic> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    Quadratic::diagonal(&[1.0, rho, rho * rho], None)
}

/// Seeded random orthogonal matrix: QR of a Gaussian matrix, with the sign of
/// `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random `½xᵀAx + bᵀx` with eigenvalues uniform in `(eig_low, eig_high)`
/// and `b` uniform in `[-1, 1]ⁿ`.
///
/// `eig_low == eig_high` forces a single repeated eigenvalue.
pub fn make_random_quadratic(
    n: usize,
    eig_low: f64,
    eig_high: f64,
    seed: u64,
) -> Result<(Quadratic, QuadraticSpec)> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(eig_low > 0.0) || !(eig_high >= eig_low) || !eig_high.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need 0 < eig_low <= eig_high, got ({eig_low}, {eig_high})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(n, &mut rng);
    let eigs: Vec<f64> = (0..n)
        .map(|_| {
            if eig_high > eig_low {
                loop {
                    let e = rng.random_range(eig_low..eig_high);
                    if e > eig_low {
                        break e;
                    }
                }
            } else {
                eig_low
            }
        })
        .collect();
    let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    let quad = Quadratic::from_spectrum(&q, &eigs, b)?;
    let spec = quad.spec();
    Ok((quad, spec))
}

/// Uniform point in `[-1, 1]ⁿ`.
pub fn random_start(n: usize, seed: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

/// Problem factory addressable from JSON configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    DiagRho {
        rho: f64,
    },
    RandomQuadratic {
        n: usize,
        eig: [f64; 2],
        seed: u64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Quadratic> {
        match *self {
            ProblemSpec::DiagRho { rho } => make_diag_rho(rho),
            ProblemSpec::RandomQuadratic { n, eig, seed } => {
                make_random_quadratic(n, eig[0], eig[1], seed).map(|(q, _)| q)
            }
        }
    }
}

/// Curvature constants recovered by probing `hessian_vec`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantEstimate {
    pub lipschitz: f64,
    /// Lower estimate of the smallest curvature seen; `0.0` when unknown.
    pub growth: f64,
    pub estimated: bool,
    pub growth_known: bool,
}

const POWER_MAX_ITERS: usize = 20_000;

/// Largest eigenvalue of the symmetric operator `op` by power iteration.
/// Returns the Rayleigh quotient and the final residual norm.
fn power_iteration(op: impl Fn(&Point) -> Point, start: Point) -> (f64, f64) {
    let mut v = start.normalize();
    let mut rq = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        let w = op(&v);
        let new_rq = v.dot(&w);
        residual = (&w - &v * new_rq).norm();
        let wn = w.norm();
        if wn == 0.0 || !wn.is_finite() {
            return (new_rq.max(0.0), 0.0);
        }
        let settled = (new_rq - rq).abs() <= 1e-15 * new_rq.abs().max(f64::MIN_POSITIVE);
        rq = new_rq;
        v = w / wn;
        if settled || residual <= 1e-13 * rq.abs() {
            break;
        }
    }
    (rq, residual)
}

/// Estimates `L` and `μ` by power iteration on the Hessian at `probe_budget`
/// points: the known minimizer (or the origin) plus seeded random points.
pub fn estimate_constants(model: &dyn ObjectiveModel, probe_budget: usize) -> ConstantEstimate {
    let n = model.dim();
    let budget = probe_budget.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut probes = Vec::with_capacity(budget);
    probes.push(
        model
            .minimizer()
            .cloned()
            .unwrap_or_else(|| DVector::zeros(n)),
    );
    while probes.len() < budget {
        probes.push(DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0)));
    }

    let mut l_est: f64 = 0.0;
    let mut mu_est = f64::INFINITY;
    for x in &probes {
        let start = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
        let (lmax, _) = power_iteration(|d| model.hessian_vec(x, d), start.clone());
        l_est = l_est.max(lmax);
        if lmax <= 0.0 {
            mu_est = 0.0;
            continue;
        }
        let (shifted, residual) =
            power_iteration(|d| d * lmax - model.hessian_vec(x, d), start);
        mu_est = mu_est.min((lmax - shifted - residual).max(0.0));
    }
    let growth_known = l_est > 0.0 && mu_est > 1e-12 * l_est;
    ConstantEstimate {
        lipschitz: l_est,
        growth: if growth_known { mu_est } else { 0.0 },
        estimated: true,
        growth_known,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Point {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn diag_rho_values() {
        let q = make_diag_rho(10.0).unwrap();
        assert_eq!(q.value(&v(&[1.0, 1.0, 1.0])), 55.5);
        assert_eq!(q.lipschitz(), 100.0);
        assert_eq!(q.growth(), 1.0);
        assert_eq!(q.optimal_value(), Some(0.0));

        let q1 = make_diag_rho(1.0).unwrap();
        let origin = v(&[0.0, 0.0, 0.0]);
        assert_eq!(q1.value(&origin), 0.0);
        assert_eq!(q1.gradient(&origin), origin);
    }

    #[test]
    fn diag_rho_rejects_nonpositive() {
        assert!(matches!(make_diag_rho(0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_diag_rho(-1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn scalar_quadratic_from_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_orthogonal(1, &mut rng);
        let quad = Quadratic::from_spectrum(&q, &[0.5], v(&[0.0])).unwrap();
        assert_relative_eq!(quad.value(&v(&[2.0])), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn random_quadratic_rejects_bad_range() {
        assert!(make_random_quadratic(4, 0.0, 1.0, 1).is_err());
        assert!(make_random_quadratic(4, 0.5, 0.1, 1).is_err());
        assert!(make_random_quadratic(0, 0.1, 1.0, 1).is_err());
    }

    #[test]
    fn random_quadratic_gradient_matches_definition() {
        let (quad, spec) = make_random_quadratic(500, 1e-3, 1.0, 7).unwrap();
        let x = random_start(500, 11);
        let direct = &spec.matrix * &x + &spec.linear;
        let err = (quad.gradient(&x) - &direct).norm();
        assert!(err <= 1e-12 * (1.0 + direct.norm()), "err = {err:e}");
        // symmetric by construction
        assert_eq!((&spec.matrix - spec.matrix.transpose()).amax(), 0.0);
    }

    #[test]
    fn random_quadratic_minimizer_beats_perturbations() {
        let (quad, _) = make_random_quadratic(50, 0.01, 1.0, 5).unwrap();
        let xs = quad.minimizer().unwrap().clone();
        let fmin = quad.value(&xs);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let u = DVector::from_fn(50, |_, _| rng.sample::<f64, _>(StandardNormal));
            let eps = 1e-3;
            let y = &xs + u * eps;
            assert!(quad.value(&y) >= fmin - 1e-12 * fmin.abs().max(1.0));
        }
        // the minimizer's gradient vanishes
        assert!(quad.gradient(&xs).norm() <= 1e-9 * (1.0 + xs.norm()));
    }

    #[test]
    fn random_quadratic_eigen_range_and_constants() {
        let (quad, spec) = make_random_quadratic(20, 0.2, 0.9, 1).unwrap();
        let eig = spec.matrix.clone().symmetric_eigen().eigenvalues;
        let lo = eig.min();
        let hi = eig.max();
        assert!(lo > 0.2 - 1e-12 && hi < 0.9 + 1e-12);
        assert_relative_eq!(quad.lipschitz(), hi, max_relative = 1e-10);
        assert_relative_eq!(quad.growth(), lo, max_relative = 1e-10);
    }

    #[test]
    fn estimate_constants_diag() {
        let q = Quadratic::diagonal(&[1.0, 10.0, 100.0], None).unwrap();
        let est = estimate_constants(&q, 3);
        assert!(est.lipschitz >= 99.0 && est.lipschitz <= 100.0 + 1e-9);
        assert!(est.growth_known);
        assert!(est.growth <= 1.0 + 1e-9 && est.growth > 0.9);
    }

    #[test]
    fn estimate_constants_identity() {
        let q = Quadratic::diagonal(&[1.0; 4], None).unwrap();
        let est = estimate_constants(&q, 2);
        assert!((est.lipschitz - 1.0).abs() <= 1e-6);
        assert!((est.growth - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn estimate_constants_zero_function() {
        let q = Quadratic::diagonal(&[0.0; 3], None).unwrap();
        let est = estimate_constants(&q, 2);
        assert_eq!(est.growth, 0.0);
        assert!(!est.growth_known);
    }

    #[test]
    fn problem_spec_json() {
        let p: ProblemSpec = serde_json::from_str(r#"{"kind": "diag_rho", "rho": 10}"#).unwrap();
        assert_eq!(p, ProblemSpec::DiagRho { rho: 10.0 });
        let p: ProblemSpec =
            serde_json::from_str(
            r#"{"kind": "random_quadratic", "n": 500, "eig": [1e-6, 1.0], "seed": 1}"#,
        )
        .unwrap();
        assert_eq!(
            p,
            ProblemSpec::RandomQuadratic {
                n: 500,
                eig: [1e-6, 1.0],
                seed: 1
            }
        );
    }
}
