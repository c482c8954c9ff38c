//! Closed-form constants of the speed-restart convergence analysis.
//!
//! Everything here is a pure function of `(α, β, L, μ)`:
//!
//! * `H(t) = 1 − Lβt/(α+2) − Lt²/(2(α+3))`, with `H(τ₁) = 0`, `H(τ₂) = ½`;
//! * `G(t) = 1 − (2α+3)βLt/(α+2) − (α+2)Lt²/(α+3)`, with `G(τ₃) = 0`;
//! * `Ψ(τ) = (2 − 1/H(τ))²`;
//! * per-restart factor `Q(τ) = 1 − αμτ²Ψ(τ)/(α+1)²`;
//! * restart-time ceiling `τ·exp[(α+1)²/(2αμτ²Ψ(τ))]`;
//! * `C = 1/Q`, `K = −ln Q / ceiling`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problems::ObjectiveModel;
use crate::restart::RestartedTrajectory;

pub fn h_fn(t: f64, alpha: f64, beta: f64, l: f64) -> f64 {
    1.0 - l * beta * t / (alpha + 2.0) - l * t * t / (2.0 * (alpha + 3.0))
}

pub fn g_fn(t: f64, alpha: f64, beta: f64, l: f64) -> f64 {
    1.0 - (2.0 * alpha + 3.0) * beta * l * t / (alpha + 2.0)
        - (alpha + 2.0) * l * t * t / (alpha + 3.0)
}

/// Positive root of `t² + 2pt − c`, written without cancellation.
fn positive_root(p: f64, c: f64) -> f64 {
    c / (p + (p * p + c).sqrt())
}

/// Unique positive zero of `H`.
pub fn tau1(alpha: f64, beta: f64, l: f64) -> f64 {
    let b = (alpha + 3.0) / (alpha + 2.0) * beta;
    positive_root(b, 2.0 * (alpha + 3.0) / l)
}

/// `H⁻¹(½)`.
pub fn tau2(alpha: f64, beta: f64, l: f64) -> f64 {
    let b = (alpha + 3.0) / (alpha + 2.0) * beta;
    positive_root(b, (alpha + 3.0) / l)
}

/// Unique positive zero of `G`; lower bound on every speed-restart time.
pub fn tau3(alpha: f64, beta: f64, l: f64) -> f64 {
    let ap2 = alpha + 2.0;
    let b = (alpha + 3.0) * (2.0 * alpha + 3.0) / (2.0 * ap2 * ap2) * beta;
    positive_root(b, (alpha + 3.0) / (ap2 * l))
}

/// `Ψ(τ) = (2 − 1/H(τ))²`, defined for `0 ≤ τ < τ₂`.
pub fn psi(tau: f64, alpha: f64, beta: f64, l: f64) -> Result<f64> {
    let t2 = tau2(alpha, beta, l);
    if !(tau >= 0.0 && tau < t2) {
        return Err(Error::Domain {
            what: "tau",
            value: tau,
            domain: format!("[0, tau2 = {t2})"),
        });
    }
    let bracket = 2.0 - 1.0 / h_fn(tau, alpha, beta, l);
    Ok(bracket * bracket)
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to relative width `1e-14`.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..400 {
        if hi - lo <= 1e-14 * hi.abs() {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `τ₁ > τ₂ > τ₃`, each closed form confirmed by bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Taus {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
}

impl Taus {
    pub fn compute(alpha: f64, beta: f64, l: f64) -> Result<Self> {
        check_params(alpha, beta, l)?;
        let taus = Taus {
            tau1: tau1(alpha, beta, l),
            tau2: tau2(alpha, beta, l),
            tau3: tau3(alpha, beta, l),
        };
        // Both H and G decrease on [0, ∞); bracket with an upper bound on τ₁.
        let upper = (2.0 * (alpha + 3.0) / l).sqrt() * 1.01;
        let checks = [
            ("tau1", taus.tau1, bisect(|t| h_fn(t, alpha, beta, l), 0.0, upper)),
            (
                "tau2",
                taus.tau2,
                bisect(|t| h_fn(t, alpha, beta, l) - 0.5, 0.0, upper),
            ),
            ("tau3", taus.tau3, bisect(|t| g_fn(t, alpha, beta, l), 0.0, upper)),
        ];
        for (name, closed, root) in checks {
            if (closed - root).abs() > 1e-10 * closed.max(f64::MIN_POSITIVE) {
                return Err(Error::Internal(format!(
                    "{name}: closed form {closed} disagrees with bisection root {root}"
                )));
            }
        }
        Ok(taus)
    }
}

fn check_params(alpha: f64, beta: f64, l: f64) -> Result<()> {
    if !(alpha > 0.0 && beta >= 0.0 && l > 0.0) || !(alpha + beta + l).is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need alpha > 0, beta >= 0, L > 0; got ({alpha}, {beta}, {l})"
        )));
    }
    Ok(())
}

/// `αμτ²Ψ(τ)/(α+1)²`, i.e. `1 − Q(τ)`.
fn decrease_fraction(tau: f64, alpha: f64, mu: f64, psi_val: f64) -> f64 {
    alpha * mu * tau * tau * psi_val / ((alpha + 1.0) * (alpha + 1.0))
}

/// Exponent `(α+1)²/(2αμτ²Ψ(τ))` in the restart-time ceiling.
fn ceiling_exponent(tau: f64, alpha: f64, mu: f64, psi_val: f64) -> f64 {
    (alpha + 1.0) * (alpha + 1.0) / (2.0 * alpha * mu * tau * tau * psi_val)
}

/// Per-restart factor `Q(τ)`.
pub fn reduction_factor(tau: f64, alpha: f64, beta: f64, l: f64, mu: f64) -> Result<f64> {
    let p = psi(tau, alpha, beta, l)?;
    Ok(1.0 - decrease_fraction(tau, alpha, mu, p))
}

/// Ceiling on every speed-restart time: `τ·exp[(α+1)²/(2αμτ²Ψ(τ))]`.
pub fn restart_upper_bound(tau: f64, alpha: f64, beta: f64, l: f64, mu: f64) -> Result<f64> {
    let p = psi(tau, alpha, beta, l)?;
    Ok(tau * ceiling_exponent(tau, alpha, mu, p).exp())
}

/// `ln K(τ)` with `K(τ) = −ln Q(τ) / (τ·exp[(α+1)²/(2αμτ²Ψ(τ))])`.
///
/// Stays finite where `K` itself underflows.
pub fn ln_rate(tau: f64, alpha: f64, beta: f64, l: f64, mu: f64) -> Result<f64> {
    let p = psi(tau, alpha, beta, l)?;
    let frac = decrease_fraction(tau, alpha, mu, p);
    let neg_ln_q = -(-frac).ln_1p();
    Ok(neg_ln_q.ln() - tau.ln() - ceiling_exponent(tau, alpha, mu, p))
}

/// `K(τ)`; zero at `τ = 0` and at `τ₂`.
pub fn rate(tau: f64, alpha: f64, beta: f64, l: f64, mu: f64) -> f64 {
    if tau <= 0.0 || tau >= tau2(alpha, beta, l) {
        return 0.0;
    }
    ln_rate(tau, alpha, beta, l, mu).map(f64::exp).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauChoice {
    Tau3,
    /// Maximize `K` over `(0, τ₃]`.
    Optimize,
}

/// Guarantee `φ(χ(t)) − φ* ≤ C e^{−Kt} (φ(x₀) − φ*)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCertificate {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub mu: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tau_star: f64,
    pub psi_at_tau_star: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// Ceiling on restart times; may overflow to infinity.
    pub tau_upper: f64,
    pub ln_tau_upper: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "ln_K")]
    pub ln_k: f64,
    /// `αμτ*Ψ(τ*)/(α+1)² · exp[−(α+1)²/(2αμτ*²Ψ(τ*))]`, a lower bound on `K`.
    pub k_lower_bound: f64,
    /// Whether the two equivalent expressions of `K` agree.
    pub rate_forms_agree: bool,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut a = hi - GOLDEN * (hi - lo);
    let mut b = lo + GOLDEN * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN * (hi - lo);
            fa = f(a);
        }
    }
    let mid = 0.5 * (lo + hi);
    // the maximum may sit on the closed right end
    if f(hi) >= f(mid) {
        hi
    } else {
        mid
    }
}

/// Argmax of `K` over `(0, upper]`.
pub fn optimal_tau(alpha: f64, beta: f64, l: f64, mu: f64, upper: f64) -> f64 {
    let f = |t: f64| ln_rate(t, alpha, beta, l, mu).unwrap_or(f64::NEG_INFINITY);
    golden_max(f, upper * 1e-9, upper, 1e-10 * upper.max(1.0))
}

pub fn certificate(
    alpha: f64,
    beta: f64,
    l: f64,
    mu: f64,
    tau_choice: TauChoice,
) -> Result<RateCertificate> {
    if !(mu > 0.0) {
        return Err(Error::CertificateUnavailable(
            "quadratic-growth modulus unknown (mu <= 0)".into(),
        ));
    }
    if !(alpha >= 3.0) {
        return Err(Error::InvalidArgument(format!(
            "certificates need alpha >= 3, got {alpha}"
        )));
    }
    if mu > l {
        return Err(Error::InvalidArgument(format!("need mu <= L, got {mu} > {l}")));
    }
    let taus = Taus::compute(alpha, beta, l)?;
    let tau_star = match tau_choice {
        TauChoice::Tau3 => taus.tau3,
        TauChoice::Optimize => optimal_tau(alpha, beta, l, mu, taus.tau3),
    };
    let psi_val = psi(tau_star, alpha, beta, l)?;
    let frac = decrease_fraction(tau_star, alpha, mu, psi_val);
    let q = 1.0 - frac;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Internal(format!("reduction factor {q} outside (0, 1)")));
    }
    let exponent = ceiling_exponent(tau_star, alpha, mu, psi_val);
    let tau_upper = tau_star * exponent.exp();
    let ln_tau_upper = tau_star.ln() + exponent;
    let neg_ln_q = -(-frac).ln_1p();
    let k = neg_ln_q / tau_upper;
    let ln_k = neg_ln_q.ln() - ln_tau_upper;

    // Equivalent form: −(1/τ*) exp[−E] ln Q.
    let k_display = -(1.0 / tau_star) * (-exponent).exp() * q.ln();
    let rate_forms_agree = if k > 1e-290 || k_display > 1e-290 {
        (k - k_display).abs() <= 1e-10 * k.max(k_display)
    } else {
        true
    };
    let k_lower_bound = frac / tau_star * (-exponent).exp();

    Ok(RateCertificate {
        alpha,
        beta,
        l,
        mu,
        tau1: taus.tau1,
        tau2: taus.tau2,
        tau3: taus.tau3,
        tau_star,
        psi_at_tau_star: psi_val,
        q,
        tau_upper,
        ln_tau_upper,
        c: 1.0 / q,
        k,
        ln_k,
        k_lower_bound,
        rate_forms_agree,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub samples: usize,
    /// `max_t gap(t) / (C e^{−Kt} gap(0))`.
    pub max_ratio: f64,
    pub violations: usize,
    pub pass: bool,
    /// Same check against `(CL/2) e^{−Kt} dist(x₀, argmin)²`, when a minimizer is known.
    pub l_form_max_ratio: Option<f64>,
    pub l_form_pass: Option<bool>,
    /// `−ln Q / (longest observed restart interval)`. Not certified.
    pub empirical_k: Option<f64>,
}

pub const CERTIFICATE_SLACK: f64 = 1e-9;

/// Samples the trajectory at `samples` evenly spaced times (time measured
/// from the trajectory start) and checks the certified envelope.
pub fn check_certificate(
    traj: &RestartedTrajectory,
    cert: &RateCertificate,
    model: &dyn ObjectiveModel,
    samples: usize,
) -> Result<CertificateReport> {
    if model.optimal_value().is_none() {
        return Err(Error::NotCheckable("optimal value unknown".into()));
    }
    let (t0, t1) = traj.horizon();
    let x0 = traj.start_point();
    let gap0 = model
        .gap(x0)
        .ok_or_else(|| Error::NotCheckable("optimal value unknown".into()))?;
    let dist2 = model.minimizer().map(|xs| (x0 - xs).norm_squared());
    let samples = samples.max(2);

    let mut max_ratio: f64 = 0.0;
    let mut l_max: f64 = 0.0;
    let mut violations = 0;
    for i in 0..samples {
        let t = t0 + (t1 - t0) * i as f64 / (samples - 1) as f64;
        let gap = traj.chi_eval(model, t)?.gap.unwrap_or(f64::NAN);
        let decay = (-cert.k * (t - t0)).exp();
        let envelope = cert.c * decay * gap0;
        let ratio = if envelope > 0.0 {
            gap / envelope
        } else if gap <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if !(ratio <= 1.0 + CERTIFICATE_SLACK) {
            violations += 1;
        }
        max_ratio = max_ratio.max(ratio);
        if let Some(d2) = dist2 {
            let env_l = 0.5 * cert.c * cert.l * decay * d2;
            if env_l > 0.0 {
                l_max = l_max.max(gap / env_l);
            }
        }
    }
    let empirical_k = traj
        .intervals()
        .into_iter()
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))))
        .map(|longest| -cert.q.ln() / longest);
    Ok(CertificateReport {
        samples,
        max_ratio,
        violations,
        pass: violations == 0,
        l_form_max_ratio: dist2.map(|_| l_max),
        l_form_pass: dist2.map(|_| l_max <= 1.0 + CERTIFICATE_SLACK),
        empirical_k,
    })
}
