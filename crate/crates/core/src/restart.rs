//! Restarted trajectories: integrator legs chained at restart events.
//!
//! Leg 0 runs from the caller's initial condition on its own time axis. Every
//! later leg restarts from rest at the previous endpoint with its clock reset,
//! to zero by default or to the initial time with [`LegClock::Initial`]; a
//! leg-local time `s` on leg `i ≥ 1` maps to the global time `S_i + s − s₀`.
//! At a restart time the state is right-continuous: the position is shared
//! with the previous leg and the velocity is zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{
    integrate, DynamicsParams, Event, StopRules, Termination, Tolerances, TrajectorySegment,
};
use crate::problems::{ObjectiveModel, Point};
use crate::theory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RestartPolicy {
    None,
    Speed,
    /// First leg ends when `φ` starts to increase, then speed restarts.
    WarmThenSpeed,
    FixedTau { tau: f64 },
}

/// Time origin of legs after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegClock {
    /// Each leg is a fresh solution from rest at `t = 0`.
    Zero,
    /// Each leg restarts from rest at the first leg's initial time.
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartOptions {
    pub tol: Tolerances,
    /// Longest allowed leg; see [`default_t_cap`].
    pub t_cap: Option<f64>,
    /// Stop once `‖∇φ‖` reaches this level; defaults to `1e-13·L·‖x₀‖`.
    pub grad_tol: Option<f64>,
    /// Scale each leg's absolute tolerance by `‖∇φ(x_i)‖ / L`.
    pub relative_abs_tol: bool,
    pub leg_clock: LegClock,
}

impl Default for RestartOptions {
    fn default() -> Self {
        RestartOptions {
            tol: Tolerances::default(),
            t_cap: None,
            grad_tol: None,
            relative_abs_tol: true,
            leg_clock: LegClock::Zero,
        }
    }
}

/// Safety horizon for one leg.
///
/// With a known growth modulus this is the restart-time ceiling at `τ₃`,
/// clamped to `10⁴·τ₃`; otherwise `10³·τ₃`.
pub fn default_t_cap(alpha: f64, beta: f64, model: &dyn ObjectiveModel) -> f64 {
    let l = model.lipschitz();
    let tau3 = theory::tau3(alpha, beta, l);
    let mu = model.growth();
    if mu > 0.0 && alpha >= 3.0 {
        match theory::restart_upper_bound(tau3, alpha, beta, l, mu.min(l)) {
            Ok(upper) if upper.is_finite() => upper.min(1e4 * tau3),
            _ => 1e4 * tau3,
        }
    } else {
        1e3 * tau3
    }
}

fn leg_tolerances(opts: &RestartOptions, model: &dyn ObjectiveModel, x: &Point) -> Tolerances {
    if !opts.relative_abs_tol {
        return opts.tol;
    }
    let scale = model.gradient(x).norm() / model.lipschitz();
    opts.tol.scaled_abs(scale.clamp(1e-200, 1.0))
}

/// Speed-restart time of the leg started from rest at `z`:
/// the first `T > 0` with `d/dt ‖ẏ_z(T)‖² ≤ 0`.
///
/// When `alpha ≥ 1` the result is checked against the lower bound `τ₃`.
pub fn restart_time(
    z: &Point,
    alpha: f64,
    beta: f64,
    system: crate::integrator::System,
    model: &dyn ObjectiveModel,
    t_cap: f64,
    tol: &Tolerances,
) -> Result<(f64, TrajectorySegment)> {
    let grad_norm = model.gradient(z).norm();
    if grad_norm == 0.0 {
        return Err(Error::AtMinimizer { grad_norm });
    }
    if !(t_cap > 0.0) {
        return Err(Error::InvalidArgument(format!("t_cap must be positive, got {t_cap}")));
    }
    let params = DynamicsParams::at_rest(alpha, beta, system, 0.0, z.clone());
    let seg = integrate(&params, model, t_cap, tol, &StopRules::event(Event::SpeedPeak))?;
    if seg.termination != Termination::EventSpeedPeak {
        return Err(Error::Horizon { t_cap });
    }
    check_lower_bound(&params, model, seg.t_final)?;
    Ok((seg.t_final, seg))
}

fn check_lower_bound(params: &DynamicsParams, model: &dyn ObjectiveModel, t: f64) -> Result<()> {
    if params.alpha < 1.0 {
        return Ok(());
    }
    let tau3 = theory::tau3(params.alpha, params.effective_beta(), model.lipschitz());
    if t < tau3 * (1.0 - 1e-6) {
        return Err(Error::Internal(format!(
            "speed restart at {t} precedes the lower bound tau3 = {tau3}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LegKind {
    Plain,
    Warm,
    Speed,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct Leg {
    pub segment: TrajectorySegment,
    /// Global time minus leg-local time.
    pub offset: f64,
    pub kind: LegKind,
}

impl Leg {
    pub fn global_begin(&self) -> f64 {
        self.offset + self.segment.t_begin()
    }

    pub fn global_end(&self) -> f64 {
        self.offset + self.segment.t_final
    }

    /// Started from rest on a fresh clock.
    pub fn from_rest(&self) -> bool {
        self.segment.rest_start.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarmInfo {
    /// Global time at which the warm leg ended.
    pub end_time: f64,
    pub end_point: Vec<f64>,
    /// False when the leg hit the horizon before `φ` increased.
    pub event_found: bool,
}

#[derive(Debug, Clone)]
pub struct RestartedTrajectory {
    pub legs: Vec<Leg>,
    /// `S_1 < S_2 < …`, global times.
    pub restart_times: Vec<f64>,
    /// `x_i = χ(S_i)`.
    pub restart_points: Vec<Point>,
    pub policy: RestartPolicy,
    pub warm_info: Option<WarmInfo>,
    /// Global time at which the gradient tolerance was met.
    pub converged_at: Option<f64>,
    /// Global times of restarts forced by the safety horizon.
    pub horizon_restarts: Vec<f64>,
    t_begin: f64,
    t_end: f64,
    x0: Point,
}

/// `χ(t)` together with `φ(χ(t)) − φ*` when `φ*` is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiState {
    pub x: Point,
    pub v: Point,
    pub gap: Option<f64>,
}

/// Chains legs from `params` (initial time, point and velocity) up to the
/// global time `t_total`.
pub fn build_restarted(
    params: &DynamicsParams,
    model: &dyn ObjectiveModel,
    t_total: f64,
    policy: RestartPolicy,
    opts: &RestartOptions,
) -> Result<RestartedTrajectory> {
    params.validate()?;
    if !(t_total > params.t_start) {
        return Err(Error::InvalidArgument(format!(
            "t_total = {t_total} must exceed t_start = {}",
            params.t_start
        )));
    }
    if let RestartPolicy::FixedTau { tau } = policy {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("fixed tau must be positive, got {tau}")));
        }
    }
    let l = model.lipschitz();
    let grad_tol = opts
        .grad_tol
        .unwrap_or(1e-13 * l * params.x_start.norm());
    let stop_for = |event: Event| StopRules {
        event,
        grad_tol: (grad_tol > 0.0).then_some(grad_tol),
    };
    let t_cap = opts
        .t_cap
        .unwrap_or_else(|| default_t_cap(params.alpha, params.effective_beta(), model));
    if !(t_cap > 0.0) {
        return Err(Error::InvalidArgument(format!("t_cap must be positive, got {t_cap}")));
    }

    let mut traj = RestartedTrajectory {
        legs: Vec::new(),
        restart_times: Vec::new(),
        restart_points: Vec::new(),
        policy,
        warm_info: None,
        converged_at: None,
        horizon_restarts: Vec::new(),
        t_begin: params.t_start,
        t_end: t_total,
        x0: params.x_start.clone(),
    };

    // leg 0 on the caller's clock
    let (kind, event, local_end) = match policy {
        RestartPolicy::None => (LegKind::Plain, Event::None, t_total),
        RestartPolicy::Speed => (LegKind::Speed, Event::SpeedPeak, params.t_start + t_cap),
        RestartPolicy::WarmThenSpeed => {
            (LegKind::Warm, Event::ValueIncrease, params.t_start + t_cap)
        }
        RestartPolicy::FixedTau { tau } => (LegKind::Fixed, Event::None, params.t_start + tau),
    };
    let tol0 = leg_tolerances(opts, model, &params.x_start);
    if model.gradient(&params.x_start).norm() <= grad_tol && params.v_start.norm() == 0.0 {
        traj.converged_at = Some(params.t_start);
        let seg = integrate(params, model, t_total, &tol0, &stop_for(Event::None))
            .map_err(|e| e.in_segment(0))?;
        traj.legs.push(Leg { segment: seg, offset: 0.0, kind });
        return Ok(traj);
    }
    let seg = integrate(params, model, local_end.min(t_total), &tol0, &stop_for(event))
        .map_err(|e| e.in_segment(0))?;
    if kind == LegKind::Speed && params.t_start == 0.0 && seg.termination == Termination::EventSpeedPeak
    {
        check_lower_bound(params, model, seg.t_final).map_err(|e| e.in_segment(0))?;
    }
    if kind == LegKind::Warm {
        traj.warm_info = Some(WarmInfo {
            end_time: seg.t_final,
            end_point: seg.final_state().0.iter().cloned().collect(),
            event_found: seg.termination == Termination::EventValueIncrease,
        });
    }
    traj.legs.push(Leg { segment: seg, offset: 0.0, kind });

    let (next_kind, next_event, leg_len) = match policy {
        RestartPolicy::None => return Ok(traj),
        RestartPolicy::Speed | RestartPolicy::WarmThenSpeed => {
            (LegKind::Speed, Event::SpeedPeak, t_cap)
        }
        RestartPolicy::FixedTau { tau } => (LegKind::Fixed, Event::None, tau),
    };

    loop {
        let last = traj.legs.last().expect("at least one leg");
        let end = last.global_end();
        match last.segment.termination {
            Termination::ConvergedGradSmall => {
                traj.converged_at = Some(end);
                break;
            }
            Termination::TEndReached if end >= t_total => break,
            Termination::TEndReached if matches!(last.kind, LegKind::Speed | LegKind::Warm) => {
                traj.horizon_restarts.push(end);
            }
            _ => {}
        }
        let remaining = t_total - end;
        if remaining <= 1e-12 * t_total.abs().max(1.0) {
            break;
        }
        let x_i = last.segment.final_state().0.clone();
        let index = traj.legs.len();
        if model.gradient(&x_i).norm() <= grad_tol {
            traj.restart_times.push(end);
            traj.restart_points.push(x_i);
            traj.converged_at = Some(end);
            break;
        }
        let clock = match opts.leg_clock {
            LegClock::Zero => 0.0,
            LegClock::Initial => params.t_start,
        };
        let leg_params = DynamicsParams::at_rest(
            params.alpha,
            params.beta,
            params.system,
            clock,
            x_i.clone(),
        );
        let tol_i = leg_tolerances(opts, model, &x_i);
        let seg = integrate(
            &leg_params,
            model,
            clock + leg_len.min(remaining),
            &tol_i,
            &stop_for(next_event),
        )
        .map_err(|e| e.in_segment(index))?;
        if seg.termination == Termination::EventSpeedPeak && clock == 0.0 {
            check_lower_bound(&leg_params, model, seg.t_final).map_err(|e| e.in_segment(index))?;
        }
        traj.restart_times.push(end);
        traj.restart_points.push(x_i);
        traj.legs.push(Leg {
            segment: seg,
            offset: end - clock,
            kind: next_kind,
        });
    }
    Ok(traj)
}

impl RestartedTrajectory {
    /// `[t_begin, t_end]` in global time.
    pub fn horizon(&self) -> (f64, f64) {
        (self.t_begin, self.t_end)
    }

    pub fn start_point(&self) -> &Point {
        &self.x0
    }

    /// Global time actually integrated; equals `t_end` unless the run
    /// converged early, after which the state is held at rest.
    pub fn integrated_until(&self) -> f64 {
        self.legs.last().map_or(self.t_begin, |l| l.global_end())
    }

    /// Durations of all legs that ended in a restart.
    pub fn intervals(&self) -> Vec<f64> {
        self.legs
            .iter()
            .zip(&self.restart_times)
            .map(|(leg, s)| s - leg.global_begin())
            .collect()
    }

    /// Durations of legs started from rest at `t = 0` and ended by a
    /// speed-restart event.
    pub fn speed_intervals(&self) -> Vec<f64> {
        self.legs
            .iter()
            .filter(|l| l.from_rest() && l.segment.termination == Termination::EventSpeedPeak)
            .map(|l| l.segment.t_final)
            .collect()
    }

    fn leg_index(&self, t: f64) -> usize {
        // right-continuous: a restart time belongs to the leg it starts
        self.restart_times.partition_point(|&s| s <= t)
    }

    pub fn chi_eval(&self, model: &dyn ObjectiveModel, t: f64) -> Result<ChiState> {
        if !(t >= self.t_begin && t <= self.t_end) {
            return Err(Error::Range {
                t,
                lo: self.t_begin,
                hi: self.t_end,
            });
        }
        let idx = self.leg_index(t);
        let (x, v) = if idx >= self.legs.len() {
            // converged exactly at a restart point
            let x = self.restart_points[idx - 1].clone();
            let n = x.len();
            (x, Point::zeros(n))
        } else {
            let leg = &self.legs[idx];
            if t > leg.global_end() {
                let x = leg.segment.final_state().0.clone();
                let n = x.len();
                (x, Point::zeros(n))
            } else if idx > 0 && t == self.restart_times[idx - 1] {
                let x = self.restart_points[idx - 1].clone();
                let n = x.len();
                (x, Point::zeros(n))
            } else {
                let local = (t - leg.offset).clamp(leg.segment.t_begin(), leg.segment.t_final);
                leg.segment.state_at(local)?
            }
        };
        let gap = model.gap(&x);
        Ok(ChiState { x, v, gap })
    }

    /// Rows `(t, φ-gap or value, ‖v‖, leg index, is_restart)` at every knot.
    ///
    /// Without a known `φ*` the second column is `φ − min φ` over the rows.
    pub fn sample_rows(&self, model: &dyn ObjectiveModel) -> Vec<TrajectoryRow> {
        let known = model.optimal_value().is_some();
        let level = |x: &Point| if known { model.gap(x).unwrap() } else { model.value(x) };
        let mut rows = Vec::new();
        for (i, leg) in self.legs.iter().enumerate() {
            if i > 0 {
                let x = &self.restart_points[i - 1];
                rows.push((self.restart_times[i - 1], level(x), 0.0, i, true));
            }
            for (s, x, v) in leg.segment.knots() {
                if i > 0 && s <= leg.segment.t_begin() {
                    continue;
                }
                rows.push((leg.offset + s, level(&x), v.norm(), i, false));
            }
        }
        if let Some(tc) = self.converged_at {
            if tc < self.t_end {
                let x = self
                    .restart_points
                    .last()
                    .filter(|_| self.restart_times.last() == Some(&tc))
                    .cloned()
                    .unwrap_or_else(|| self.legs.last().unwrap().segment.final_state().0.clone());
                rows.push((self.t_end, level(&x), 0.0, self.legs.len() - 1, false));
            }
        }
        let offset = if known {
            0.0
        } else {
            rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min)
        };
        rows.into_iter()
            .map(|(t, phi, speed, seg, is_restart)| TrajectoryRow {
                t,
                phi_gap: phi - offset,
                speed,
                segment_index: seg,
                is_restart: u8::from(is_restart),
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, model: &dyn ObjectiveModel, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.sample_rows(model) {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub phi_gap: f64,
    pub speed: f64,
    pub segment_index: usize,
    pub is_restart: u8,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::System;
    use crate::problems::{make_diag_rho, Quadratic};
    use nalgebra::DVector;

    fn iso(l: f64) -> Quadratic {
        Quadratic::diagonal(&[l], None).unwrap()
    }

    #[test]
    fn restart_time_above_tau3() {
        let (t, seg) = restart_time(
            &DVector::from_vec(vec![1.0]),
            3.0,
            0.0,
            System::Avd,
            &iso(1.0),
            100.0,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(t >= (6.0f64 / 5.0).sqrt());
        assert_eq!(seg.termination, Termination::EventSpeedPeak);
    }

    #[test]
    fn restart_time_at_minimizer() {
        let r = restart_time(
            &DVector::from_vec(vec![0.0]),
            3.0,
            0.0,
            System::Avd,
            &iso(1.0),
            100.0,
            &Tolerances::default(),
        );
        assert!(matches!(r, Err(Error::AtMinimizer { .. })));
    }

    #[test]
    fn restart_time_horizon() {
        let r = restart_time(
            &DVector::from_vec(vec![1.0]),
            3.0,
            0.0,
            System::Avd,
            &iso(1.0),
            0.5,
            &Tolerances::default(),
        );
        assert!(matches!(r, Err(Error::Horizon { .. })));
    }

    #[test]
    fn no_policy_is_single_leg() {
        let q = make_diag_rho(10.0).unwrap();
        let p = DynamicsParams::at_rest(3.1, 0.25, System::DinAvd, 1.0, DVector::from_element(3, 1.0));
        let traj = build_restarted(&p, &q, 10.0, RestartPolicy::None, &RestartOptions::default()).unwrap();
        assert_eq!(traj.legs.len(), 1);
        assert!(traj.restart_times.is_empty());
        let direct = integrate(
            &p,
            &q,
            10.0,
            &leg_tolerances(&RestartOptions::default(), &q, &p.x_start),
            &StopRules {
                event: Event::None,
                grad_tol: Some(1e-13 * 100.0 * 3f64.sqrt()),
            },
        )
        .unwrap();
        assert_eq!(traj.legs[0].segment.final_state(), direct.final_state());
    }

    #[test]
    fn restarts_have_zero_velocity_and_continuous_position() {
        let q = make_diag_rho(10.0).unwrap();
        let p = DynamicsParams::at_rest(3.0, 0.0, System::Avd, 0.0, DVector::from_element(3, 1.0));
        let traj = build_restarted(&p, &q, 20.0, RestartPolicy::Speed, &RestartOptions::default()).unwrap();
        assert!(traj.restart_times.len() >= 2);
        for (i, &s) in traj.restart_times.iter().enumerate() {
            let right = traj.chi_eval(&q, s).unwrap();
            assert_eq!(right.v.norm(), 0.0);
            let (xl, _) = traj.legs[i].segment.final_state();
            assert!((xl - &right.x).norm() <= 1e-10);
            let next = &traj.legs[i + 1];
            assert!(next.from_rest());
            assert!((next.global_begin() - s).abs() <= 1e-12);
        }
        for w in traj.restart_times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn chi_eval_at_zero_and_outside() {
        let q = make_diag_rho(10.0).unwrap();
        let x0 = DVector::from_element(3, 1.0);
        let p = DynamicsParams::at_rest(3.0, 0.0, System::Avd, 0.0, x0.clone());
        let traj = build_restarted(&p, &q, 5.0, RestartPolicy::Speed, &RestartOptions::default()).unwrap();
        let s = traj.chi_eval(&q, 0.0).unwrap();
        assert_eq!(s.x, x0);
        assert_eq!(s.v.norm(), 0.0);
        assert_eq!(s.gap, q.gap(&x0));
        assert!(matches!(traj.chi_eval(&q, 5.5), Err(Error::Range { .. })));
    }

    #[test]
    fn fixed_tau_legs() {
        let q = make_diag_rho(10.0).unwrap();
        let p = DynamicsParams::at_rest(3.0, 0.0, System::Avd, 0.0, DVector::from_element(3, 1.0));
        let policy = RestartPolicy::FixedTau { tau: 0.1 };
        let traj = build_restarted(&p, &q, 1.05, policy, &RestartOptions::default()).unwrap();
        assert_eq!(traj.restart_times.len(), 10);
        for d in traj.intervals() {
            assert!((d - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_has_expected_columns() {
        let q = make_diag_rho(10.0).unwrap();
        let p = DynamicsParams::at_rest(3.0, 0.0, System::Avd, 0.0, DVector::from_element(3, 1.0));
        let traj = build_restarted(&p, &q, 3.0, RestartPolicy::Speed, &RestartOptions::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&q, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,phi_gap,speed,segment_index,is_restart\n"));
        let flagged = text.lines().skip(1).filter(|l| l.ends_with(",1")).count();
        assert_eq!(flagged, traj.restart_times.len());
    }
}
