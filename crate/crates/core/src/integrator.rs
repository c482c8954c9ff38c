//! Adaptive integration of the inertial dynamics
//!
//! ```text
//! ẍ + (α/t) ẋ + ∇φ(x) + β ∇²φ(x) ẋ = 0
//! ```
//!
//! on the first-order system `(x, v)` with an embedded Dormand–Prince 5(4)
//! pair, its native quartic continuous extension, and event localization by
//! bisection on that extension. Legs started from rest at `t = 0` begin at a
//! small `δ > 0` from the second-order small-time expansion, since the damping
//! coefficient `α/t` is singular there.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ObjectiveModel, Point};
use crate::theory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum System {
    /// Asymptotically vanishing damping, no Hessian term.
    Avd,
    /// With the Hessian-driven damping term `β ∇²φ(x) ẋ`.
    DinAvd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsParams {
    pub alpha: f64,
    pub beta: f64,
    pub t_start: f64,
    pub x_start: Point,
    pub v_start: Point,
    pub system: System,
}

impl DynamicsParams {
    /// Zero initial velocity at `t_start`.
    pub fn at_rest(alpha: f64, beta: f64, system: System, t_start: f64, x_start: Point) -> Self {
        let n = x_start.len();
        DynamicsParams {
            alpha,
            beta,
            t_start,
            x_start,
            v_start: DVector::zeros(n),
            system,
        }
    }

    /// Hessian weight actually used: always zero for [`System::Avd`].
    pub fn effective_beta(&self) -> f64 {
        match self.system {
            System::Avd => 0.0,
            System::DinAvd => self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta must be nonnegative, got {}",
                self.beta
            )));
        }
        if !(self.t_start >= 0.0) {
            return Err(Error::InvalidArgument("t_start must be nonnegative".into()));
        }
        if self.x_start.len() != self.v_start.len() {
            return Err(Error::InvalidArgument("x_start / v_start length mismatch".into()));
        }
        Ok(())
    }

    fn with_start(&self, t: f64, x: Point, v: Point) -> Self {
        DynamicsParams {
            t_start: t,
            x_start: x,
            v_start: v,
            ..self.clone()
        }
    }
}

/// Right-hand side `ẍ = −(α/t)v − ∇φ(x) − β∇²φ(x)v`.
pub fn rhs(
    params: &DynamicsParams,
    model: &dyn ObjectiveModel,
    t: f64,
    x: &Point,
    v: &Point,
) -> Result<Point> {
    if !(t > 0.0) {
        return Err(Error::Singularity { t });
    }
    let mut a = model.gradient(x);
    a.axpy(-params.alpha / t, v, -1.0);
    let beta = params.effective_beta();
    if beta != 0.0 {
        a.axpy(-beta, &model.hessian_vec(x, v), 1.0);
    }
    Ok(a)
}

/// Regular initial condition at `t = δ` for a leg started from rest at `x₀`:
/// `x_δ = x₀ − δ²/(2(α+1)) ∇φ(x₀)`, `v_δ = −δ/(α+1) ∇φ(x₀)`.
pub fn delta_start(
    params: &DynamicsParams,
    model: &dyn ObjectiveModel,
    delta: f64,
) -> Result<(Point, Point)> {
    params.validate()?;
    if params.v_start.iter().any(|&c| c != 0.0) {
        return Err(Error::InvalidArgument(
            "small-time expansion needs a zero initial velocity".into(),
        ));
    }
    let tau1 = theory::tau1(params.alpha, params.effective_beta(), model.lipschitz());
    if !(delta > 0.0) || !(delta < tau1) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, tau1 = {tau1}), got {delta}"
        )));
    }
    let g = model.gradient(&params.x_start);
    let ap1 = params.alpha + 1.0;
    let x = &params.x_start - &g * (delta * delta / (2.0 * ap1));
    let v = &g * (-delta / ap1);
    Ok((x, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    /// Time resolution of event localization.
    pub event_time: f64,
    /// `δ = delta_frac · τ₁` for legs started from rest at `t = 0`.
    pub delta_frac: f64,
    pub max_steps: usize,
    /// Bound the local error by `tol · h` instead of `tol`, so the global
    /// error shrinks faster than the tolerance.
    pub per_unit_step: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel: 1e-9,
            abs: 1e-12,
            event_time: 1e-10,
            delta_frac: 1e-4,
            max_steps: 2_000_000,
            per_unit_step: true,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel > 0.0 && self.abs > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.delta_frac > 0.0 && self.delta_frac < 1.0) {
            return Err(Error::InvalidArgument("delta_frac must lie in (0, 1)".into()));
        }
        if !(self.event_time > 0.0) {
            return Err(Error::InvalidArgument("event_time must be positive".into()));
        }
        Ok(())
    }

    /// Same tolerances with the absolute part multiplied by `scale`.
    pub fn scaled_abs(&self, scale: f64) -> Self {
        Tolerances {
            abs: self.abs * scale,
            ..*self
        }
    }
}

/// Which sign change, if any, stops the integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    None,
    /// First time `d/dt ‖ẋ‖² = 2⟨v, a⟩` drops to zero or below.
    SpeedPeak,
    /// First accepted step along which `φ` strictly increases; the segment
    /// ends at that step's endpoint, without localization.
    ValueIncrease,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRules {
    pub event: Event,
    /// Stop once `‖∇φ(x)‖` falls to this level.
    pub grad_tol: Option<f64>,
}

impl StopRules {
    pub fn event(event: Event) -> Self {
        StopRules {
            event,
            grad_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EventSpeedPeak,
    EventValueIncrease,
    TEndReached,
    ConvergedGradSmall,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    rc: [DVector<f64>; 5],
}

impl DenseStep {
    fn eval(&self, t: f64) -> DVector<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.rc;
        r1 + (r2 + (r3 + (r4 + r5 * s1) * s) * s1) * s
    }

    fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

/// The small-time expansion used on `[0, δ)` for legs started from rest.
#[derive(Debug, Clone)]
pub struct RestStart {
    pub x0: Point,
    pub grad0: Point,
    pub delta: f64,
}

/// Numerical solution of one leg: accepted steps and their dense output.
#[derive(Debug, Clone)]
pub struct TrajectorySegment {
    pub params: DynamicsParams,
    pub termination: Termination,
    pub t_final: f64,
    pub rest_start: Option<RestStart>,
    steps: Vec<DenseStep>,
    n: usize,
    x_final: Point,
    v_final: Point,
}

impl TrajectorySegment {
    /// First time covered: `0` for rest starts, otherwise `t_start`.
    pub fn t_begin(&self) -> f64 {
        if self.rest_start.is_some() {
            0.0
        } else {
            self.params.t_start
        }
    }

    pub fn final_state(&self) -> (&Point, &Point) {
        (&self.x_final, &self.v_final)
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// `(t, x, v)` at the start of every accepted step and at `t_final`.
    pub fn knots(&self) -> Vec<(f64, Point, Point)> {
        let mut out: Vec<_> = self
            .steps
            .iter()
            .map(|s| {
                let (x, v) = self.split(&s.rc[0]);
                (s.t0, x, v)
            })
            .collect();
        out.push((self.t_final, self.x_final.clone(), self.v_final.clone()));
        out
    }

    fn split(&self, y: &DVector<f64>) -> (Point, Point) {
        (
            y.rows(0, self.n).into_owned(),
            y.rows(self.n, self.n).into_owned(),
        )
    }

    /// Position and velocity at `t` from the continuous extension.
    pub fn state_at(&self, t: f64) -> Result<(Point, Point)> {
        let lo = self.t_begin();
        if !(t >= lo && t <= self.t_final) {
            return Err(Error::Range {
                t,
                lo,
                hi: self.t_final,
            });
        }
        if let Some(rs) = &self.rest_start {
            if t < rs.delta {
                let ap1 = self.params.alpha + 1.0;
                let x = &rs.x0 - &rs.grad0 * (t * t / (2.0 * ap1));
                let v = &rs.grad0 * (-t / ap1);
                return Ok((x, v));
            }
        }
        if t == self.t_final || self.steps.is_empty() {
            return Ok((self.x_final.clone(), self.v_final.clone()));
        }
        let idx = self.steps.partition_point(|s| s.t1() <= t).min(self.steps.len() - 1);
        Ok(self.split(&self.steps[idx].eval(t)))
    }

    /// `(x, v, a)` at `t`; the acceleration is recomputed from the dynamics.
    pub fn dense_eval(&self, model: &dyn ObjectiveModel, t: f64) -> Result<(Point, Point, Point)> {
        let (x, v) = self.state_at(t)?;
        let a = if t > 0.0 {
            rhs(&self.params, model, t, &x, &v)?
        } else {
            let g = &self.rest_start.as_ref().expect("t = 0 only for rest starts").grad0;
            g * (-1.0 / (self.params.alpha + 1.0))
        };
        Ok((x, v, a))
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct StepOutcome {
    y1: DVector<f64>,
    k7: DVector<f64>,
    err: DVector<f64>,
    rc5: DVector<f64>,
    k1h: DVector<f64>,
}

struct Field<'a> {
    params: &'a DynamicsParams,
    model: &'a dyn ObjectiveModel,
    n: usize,
}

impl Field<'_> {
    fn eval(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let x = y.rows(0, self.n).into_owned();
        let v = y.rows(self.n, self.n).into_owned();
        let a = rhs(self.params, self.model, t, &x, &v)?;
        let mut out = DVector::zeros(2 * self.n);
        out.rows_mut(0, self.n).copy_from(&v);
        out.rows_mut(self.n, self.n).copy_from(&a);
        Ok(out)
    }

    fn event_value(&self, event: Event, y: &DVector<f64>, f: &DVector<f64>) -> f64 {
        let n = self.n;
        let v = y.rows(n, n);
        match event {
            Event::SpeedPeak => v.dot(&f.rows(n, n)),
            Event::None | Event::ValueIncrease => 1.0,
        }
    }

    fn step(&self, t: f64, y: &DVector<f64>, k1: &DVector<f64>, h: f64) -> Result<StepOutcome> {
        let k2 = self.eval(t + C2 * h, &(y + k1 * (A21 * h)))?;
        let k3 = self.eval(t + C3 * h, &(y + (k1 * A31 + &k2 * A32) * h))?;
        let k4 = self.eval(t + C4 * h, &(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h))?;
        let k5 = self.eval(
            t + C5 * h,
            &(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h),
        )?;
        let k6 = self.eval(
            t + h,
            &(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h),
        )?;
        let y1 = y + (k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
        let k7 = self.eval(t + h, &y1)?;
        let err = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let rc5 = (k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
        Ok(StepOutcome {
            y1,
            k7,
            err,
            rc5,
            k1h: k1 * h,
        })
    }
}

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, tol: &Tolerances) -> f64 {
    let m = err.len();
    let sum: f64 = (0..m)
        .map(|i| {
            let sc = tol.abs + tol.rel * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / m as f64).sqrt()
}

fn dense_step(t0: f64, h: f64, y0: &DVector<f64>, out: &StepOutcome) -> DenseStep {
    let r2 = &out.y1 - y0;
    let r3 = &out.k1h - &r2;
    let r4 = &r2 - &out.k7 * h - &r3;
    DenseStep {
        t0,
        h,
        rc: [y0.clone(), r2, r3, r4, out.rc5.clone()],
    }
}

fn initial_step(
    field: &Field,
    t: f64,
    y: &DVector<f64>,
    f0: &DVector<f64>,
    tol: &Tolerances,
    hmax: f64,
) -> Result<f64> {
    let scale = |w: &DVector<f64>| -> f64 {
        let m = w.len();
        let s: f64 = (0..m)
            .map(|i| (w[i] / (tol.abs + tol.rel * y[i].abs())).powi(2))
            .sum();
        (s / m as f64).sqrt()
    };
    let d0 = scale(y);
    let d1 = scale(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    // Near the singular start the damping scale is t itself.
    h0 = h0.min(hmax).min(0.1 * t);
    let y1 = y + f0 * h0;
    let f1 = field.eval(t + h0, &y1)?;
    let d2 = scale(&(&f1 - f0)) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(hmax))
}

/// Integrates from `params.t_start` to `t_end` or until a stop rule fires.
///
/// A start at `t = 0` must be from rest; it is regularized at
/// `δ = tol.delta_frac · τ₁` via [`delta_start`].
pub fn integrate(
    params: &DynamicsParams,
    model: &dyn ObjectiveModel,
    t_end: f64,
    tol: &Tolerances,
    stop: &StopRules,
) -> Result<TrajectorySegment> {
    params.validate()?;
    tol.validate()?;
    if !(t_end > params.t_start) {
        return Err(Error::InvalidArgument(format!(
            "t_end = {t_end} must exceed t_start = {}",
            params.t_start
        )));
    }
    let n = params.x_start.len();
    if n != model.dim() {
        return Err(Error::InvalidArgument("dimension mismatch with model".into()));
    }

    let (t0, x0, v0, rest_start) = if params.t_start == 0.0 {
        if params.v_start.iter().any(|&c| c != 0.0) {
            return Err(Error::Singularity { t: 0.0 });
        }
        let tau1 = theory::tau1(params.alpha, params.effective_beta(), model.lipschitz());
        let delta = (tol.delta_frac * tau1).min(0.5 * t_end);
        let (xd, vd) = delta_start(params, model, delta)?;
        let rs = RestStart {
            x0: params.x_start.clone(),
            grad0: model.gradient(&params.x_start),
            delta,
        };
        (delta, xd, vd, Some(rs))
    } else {
        (
            params.t_start,
            params.x_start.clone(),
            params.v_start.clone(),
            None,
        )
    };

    let field = Field { params, model, n };
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(&x0);
    y.rows_mut(n, n).copy_from(&v0);
    let mut t = t0;
    let mut f = field.eval(t, &y)?;
    let mut steps: Vec<DenseStep> = Vec::new();
    let span = t_end - t0;
    let mut h = initial_step(&field, t, &y, &f, tol, span)?;
    let mut event_prev = field.event_value(stop.event, &y, &f);
    let value_at = |y: &DVector<f64>| model.value(&y.rows(0, n).into_owned());
    let mut value_prev = value_at(&y);
    let mut last_rejected = false;
    let mut termination = Termination::TEndReached;
    let order = if tol.per_unit_step { 0.25 } else { 0.2 };

    let converged = |y: &DVector<f64>| -> bool {
        stop.grad_tol.is_some_and(|g| {
            let x = y.rows(0, n).into_owned();
            model.gradient(&x).norm() <= g
        })
    };

    if converged(&y) {
        termination = Termination::ConvergedGradSmall;
    }

    while termination == Termination::TEndReached && t < t_end {
        if steps.len() >= tol.max_steps {
            return Err(Error::StepBudget {
                t,
                max_steps: tol.max_steps,
            });
        }
        let h_min = 1e-14 * t.abs().max(1e-300);
        if h < h_min {
            return Err(Error::Stiffness {
                t,
                h,
                x: y.rows(0, n).iter().cloned().collect(),
                v: y.rows(n, n).iter().cloned().collect(),
            });
        }
        let last = t + h >= t_end - 1e-15 * t_end.abs();
        let h_try = if last { t_end - t } else { h };
        let out = field.step(t, &y, &f, h_try)?;
        if out.y1.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { t: t + h_try });
        }
        let mut err = error_norm(&out.err, &y, &out.y1, tol);
        if tol.per_unit_step {
            err /= h_try;
        }
        if !err.is_finite() {
            return Err(Error::Divergence { t: t + h_try });
        }
        if err > 1.0 {
            let fac = (0.9 * err.powf(-order)).max(0.2);
            h = h_try * fac;
            last_rejected = true;
            continue;
        }

        let t1 = if last { t_end } else { t + h_try };
        let mut step = dense_step(t, h_try, &y, &out);
        let mut y_new = out.y1.clone();
        let mut f_new = out.k7.clone();
        let event_new = field.event_value(stop.event, &y_new, &f_new);
        let mut t_new = t1;

        if stop.event == Event::ValueIncrease {
            let value_new = value_at(&y_new);
            if value_new > value_prev {
                termination = Termination::EventValueIncrease;
            }
            value_prev = value_new;
        } else if stop.event == Event::SpeedPeak && event_prev > 0.0 && event_new <= 0.0 {
            // Localize on the continuous extension, then redo the step exactly
            // up to the crossing so the segment ends on an RK state.
            let (mut lo, mut hi) = (t, t1);
            while hi - lo > tol.event_time * hi.abs().max(1.0) {
                let mid = 0.5 * (lo + hi);
                let ym = step.eval(mid);
                let fm = field.eval(mid, &ym)?;
                if field.event_value(stop.event, &ym, &fm) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let h_ev = hi - t;
            let redo = field.step(t, &y, &f, h_ev)?;
            step = dense_step(t, h_ev, &y, &redo);
            y_new = redo.y1;
            f_new = redo.k7;
            t_new = hi;
            termination = Termination::EventSpeedPeak;
        }

        steps.push(step);
        t = t_new;
        y = y_new;
        f = f_new;
        if termination == Termination::TEndReached {
            event_prev = event_new;
            if converged(&y) {
                termination = Termination::ConvergedGradSmall;
            }
        }

        let mut fac = (0.9 * err.max(1e-10).powf(-order)).clamp(0.2, 10.0);
        if last_rejected {
            fac = fac.min(1.0);
        }
        last_rejected = false;
        h = h_try * fac;
        if last {
            break;
        }
    }

    let x_final = y.rows(0, n).into_owned();
    let v_final = y.rows(n, n).into_owned();
    Ok(TrajectorySegment {
        params: params.with_start(t0, x0, v0),
        termination,
        t_final: t,
        rest_start,
        steps,
        n,
        x_final,
        v_final,
    })
}
