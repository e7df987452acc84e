//! Fixed-step closed-loop simulation on a uniform grid.
//!
//! Plant, observer and control law form one continuous-time system whose
//! joint state `(p_L, p_sup, v_v, x_v, z_hat, eta_hat)` is advanced with
//! classical RK4; the law is evaluated at every stage. Logged values are the
//! law evaluated at the grid instants. The spool is clipped to its travel
//! limit after each step and its velocity zeroed when the stop engages.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{BrakeError, Result};
use crate::fbl::{baseline_p_controller, linearizing_u, ControlOutput, ControllerConfig, FblController};
use crate::linear_control::ObserverState;
use crate::metrics::{step_metrics, StepMetrics};
use crate::normal_form::transform_h;
use crate::plant::{output, plant_deriv, regime_of, BrakeState, PlantParams, ValveRegime};

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize>(
    mut deriv: impl FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    state: &[f64; N],
    t: f64,
    dt: f64,
) -> Result<[f64; N]> {
    let axpy = |a: f64, x: &[f64; N], y: &[f64; N]| -> [f64; N] {
        let mut out = *y;
        for i in 0..N {
            out[i] += a * x[i];
        }
        out
    };
    let mut stage = |tau: f64, x: &[f64; N]| {
        deriv(tau, x).map_err(|e| BrakeError::StageEvaluationFailure { t: tau, source: Box::new(e) })
    };
    let k1 = stage(t, state)?;
    let k2 = stage(t + 0.5 * dt, &axpy(0.5 * dt, &k1, state))?;
    let k3 = stage(t + 0.5 * dt, &axpy(0.5 * dt, &k2, state))?;
    let k4 = stage(t + dt, &axpy(dt, &k3, state))?;
    let mut next = *state;
    for i in 0..N {
        next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(next)
}

/// Multiplicative factors on the simulated plant's supply flow gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub t_sup_a: f64,
    pub t_sup_b: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self { t_sup_a: 1.0, t_sup_b: 1.0 }
    }
}

impl Perturbation {
    pub fn uniform(factor: f64) -> Self {
        Self { t_sup_a: factor, t_sup_b: factor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// `(start time s, reference bar)`; times strictly increasing from 0.
    pub schedule: Vec<(f64, f64)>,
    pub duration: f64,
    pub dt: f64,
    pub initial_state: BrakeState,
    #[serde(default)]
    pub plant_perturbation: Perturbation,
}

pub const PAPER_SEQUENCE_BAR: [f64; 5] = [27.0, 59.0, 91.0, 59.0, 27.0];
pub const SEGMENT_DURATION: f64 = 2.0;
pub const DEFAULT_DT: f64 = 1e-4;

impl Default for Scenario {
    /// The five-level reference sequence, 2 s per level, from rest at 15 bar.
    fn default() -> Self {
        Self::steps(&PAPER_SEQUENCE_BAR, SEGMENT_DURATION, DEFAULT_DT)
    }
}

impl Scenario {
    pub fn steps(levels: &[f64], segment: f64, dt: f64) -> Self {
        Self {
            schedule: levels.iter().enumerate().map(|(i, &p)| (i as f64 * segment, p)).collect(),
            duration: segment * levels.len() as f64,
            dt,
            initial_state: BrakeState::new(1.0, 15.0, 0.0, 0.0),
            plant_perturbation: Perturbation::default(),
        }
    }

    pub fn steps_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Grid index at which each schedule entry takes effect.
    pub fn segment_start_indices(&self) -> Vec<usize> {
        self.schedule.iter().map(|&(t, _)| (t / self.dt).round() as usize).collect()
    }

    pub fn violations(&self, params: &PlantParams) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.dt > 0.0) {
            out.push(("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.duration > 0.0) {
            out.push(("duration", format!("must be > 0, got {}", self.duration)));
        }
        match self.schedule.first() {
            None => out.push(("schedule", "must not be empty".to_string())),
            Some(&(t0, _)) if t0 != 0.0 => out.push(("schedule", format!("must start at t = 0, starts at {t0}"))),
            _ => {}
        }
        if self.schedule.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            out.push(("schedule", "start times must be strictly increasing".to_string()));
        }
        if let Some(&(t, _)) = self.schedule.last() {
            if t >= self.duration {
                out.push(("schedule", format!("entry at t = {t} starts after the run ends")));
            }
        }
        let env = &params.envelope;
        for &(t, p) in &self.schedule {
            if !(env.p_sup_min..=env.p_sup_max).contains(&p) {
                out.push(("schedule", format!("reference {p} bar at t = {t} is outside the envelope")));
            }
        }
        let s = &self.initial_state;
        if !env.contains(s.p_l, s.p_sup) {
            out.push(("initial_state", format!("({}, {}) bar is outside the envelope", s.p_l, s.p_sup)));
        }
        if s.x_v.abs() > params.x_v_max {
            out.push(("initial_state.x_v", format!("exceeds the travel limit {}", params.x_v_max)));
        }
        for (key, f) in [
            ("plant_perturbation.t_sup_a", self.plant_perturbation.t_sup_a),
            ("plant_perturbation.t_sup_b", self.plant_perturbation.t_sup_b),
        ] {
            if !(f > 0.0) {
                out.push((key, format!("must be > 0, got {f}")));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Fbl,
    /// Linearizing controller fed by the true state instead of the observer.
    FblExact,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub p_ref: f64,
    pub p_sup: f64,
    pub p_l: f64,
    pub x_v: f64,
    pub v_v: f64,
    pub u: f64,
    pub nu: Option<f64>,
    pub z_hat: Option<[f64; 3]>,
    pub eta_hat: Option<f64>,
    pub regime: ValveRegime,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub kind: ControllerKind,
    pub dt: f64,
    pub schedule: Vec<(f64, f64)>,
    pub segment_starts: Vec<usize>,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn segment_count(&self) -> usize {
        self.schedule.len()
    }

    pub fn segment_range(&self, segment: usize) -> std::ops::Range<usize> {
        let start = self.segment_starts[segment].min(self.rows.len());
        let end = self.segment_starts.get(segment + 1).copied().unwrap_or(self.rows.len()).min(self.rows.len());
        start..end
    }

    pub fn p_sup(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.p_sup).collect()
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has at least the initial row")
    }

    pub fn all_metrics(&self) -> Result<Vec<StepMetrics>> {
        (0..self.segment_count()).map(|i| step_metrics(self, i)).collect()
    }
}

fn divergence_check(state: &BrakeState, params: &PlantParams, t: f64) -> Result<()> {
    let p_bound = 10.0 * params.envelope.p_sup_max.max(params.envelope.p_l_max);
    let v_bound = 10.0 * params.omega_v * params.x_v_max;
    let detail = if !state.is_finite() {
        Some("non-finite state".to_string())
    } else if state.p_sup.abs() > p_bound || state.p_l.abs() > p_bound {
        Some(format!("pressure beyond {p_bound} bar"))
    } else if state.v_v.abs() > v_bound {
        Some(format!("spool velocity beyond {v_bound} mm/s"))
    } else {
        None
    };
    match detail {
        Some(detail) => Err(BrakeError::SimulationDiverged { t, detail }),
        None => Ok(()),
    }
}

fn apply_travel_stop(state: &mut BrakeState, plant: &PlantParams) {
    if state.x_v.abs() > plant.x_v_max {
        state.x_v = plant.x_v_max.copysign(state.x_v);
        state.v_v = 0.0;
    }
}

/// One RK4 plant step under a held input, followed by the travel stop.
pub fn advance_plant(state: &BrakeState, u: f64, plant: &PlantParams, t: f64, dt: f64) -> Result<BrakeState> {
    let next = rk4_step(
        |_, x: &[f64; 4]| Ok(plant_deriv(&BrakeState::from_array(*x), u, plant)?.to_array()),
        &state.to_array(),
        t,
        dt,
    )?;
    let mut next = BrakeState::from_array(next);
    apply_travel_stop(&mut next, plant);
    divergence_check(&next, plant, t + dt)?;
    Ok(next)
}

fn split(w: &[f64; 8]) -> (BrakeState, ObserverState) {
    (BrakeState::new(w[0], w[1], w[2], w[3]), ObserverState { z_hat: [w[4], w[5], w[6]], eta_hat: w[7] })
}

fn join(x: &BrakeState, o: &ObserverState) -> [f64; 8] {
    [x.p_l, x.p_sup, x.v_v, x.x_v, o.z_hat[0], o.z_hat[1], o.z_hat[2], o.eta_hat]
}

/// Integrates plant and controller over the scenario. `params` is the
/// controller's design model; the simulated plant applies the scenario's
/// perturbation on top of it.
pub fn run_closed_loop(
    scenario: &Scenario,
    params: &PlantParams,
    cfg: &ControllerConfig,
    kind: ControllerKind,
) -> Result<Trace> {
    let issues = scenario.violations(params);
    if !issues.is_empty() {
        let text: Vec<String> = issues.iter().map(|(k, m)| format!("{k}: {m}")).collect();
        return Err(BrakeError::InvalidScenario(text.join("; ")));
    }
    let pert = scenario.plant_perturbation;
    let plant = params.with_t_sup_scaled(pert.t_sup_a, pert.t_sup_b);
    let dt = scenario.dt;
    let n = scenario.steps_count();
    let starts = scenario.segment_start_indices();

    let mut fbl = FblController::new(cfg, params, output(&scenario.initial_state))?;
    let mut w = join(&scenario.initial_state, &fbl.state().obs);
    let mut rows = Vec::with_capacity(n + 1);
    let mut segment = 0;

    for k in 0..=n {
        let t = k as f64 * dt;
        while segment + 1 < starts.len() && k >= starts[segment + 1] {
            segment += 1;
        }
        let p_ref = scenario.schedule[segment].1;
        let (state, obs) = split(&w);
        let y = output(&state);
        let measured = Some(regime_of(state.x_v));

        let ctl = match kind {
            ControllerKind::Fbl => {
                let law = fbl.law(&obs, p_ref, measured)?;
                fbl.commit(obs, &law, t)?
            }
            ControllerKind::FblExact => fbl
                .exact_state_law(&state, p_ref)
                .map_err(|e| BrakeError::StageEvaluationFailure { t, source: Box::new(e) })?,
            ControllerKind::Baseline => {
                let input = baseline_p_controller(y, p_ref, cfg.baseline_gain, cfg.u_sat);
                ControlOutput {
                    u: input.u,
                    nu: None,
                    saturated: input.saturated,
                    z_hat: None,
                    eta_hat: None,
                    held: false,
                }
            }
        };
        rows.push(TraceRow {
            t,
            p_ref,
            p_sup: state.p_sup,
            p_l: state.p_l,
            x_v: state.x_v,
            v_v: state.v_v,
            u: ctl.u,
            nu: ctl.nu,
            z_hat: ctl.z_hat,
            eta_hat: ctl.eta_hat,
            regime: regime_of(state.x_v),
            saturated: ctl.saturated,
        });
        if k == n {
            break;
        }

        let ctrl = &fbl;
        let rates = |_: f64, v: &[f64; 8]| -> Result<[f64; 8]> {
            let (x, o) = split(v);
            let y = output(&x);
            let (u, obs_rates) = match kind {
                ControllerKind::Fbl => ctrl.stage(&o, y, p_ref, Some(regime_of(x.x_v)))?,
                ControllerKind::FblExact => (ctrl.exact_state_law(&x, p_ref)?.u, [0.0; 4]),
                ControllerKind::Baseline => (baseline_p_controller(y, p_ref, cfg.baseline_gain, cfg.u_sat).u, [0.0; 4]),
            };
            let d = plant_deriv(&x, u, &plant)?.to_array();
            Ok([d[0], d[1], d[2], d[3], obs_rates[0], obs_rates[1], obs_rates[2], obs_rates[3]])
        };
        w = rk4_step(rates, &w, t, dt)?;
        let (mut next, obs) = split(&w);
        apply_travel_stop(&mut next, &plant);
        divergence_check(&next, &plant, t + dt)?;
        w = join(&next, &obs);
    }

    Ok(Trace { kind, dt, schedule: scenario.schedule.clone(), segment_starts: starts, rows })
}

/// Samples of an open-loop run driven through the linearizing law with an
/// external `nu(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSample {
    pub t: f64,
    pub y: f64,
    pub nu: f64,
    pub u: f64,
    pub z: [f64; 3],
    pub regime: ValveRegime,
}

/// Applies `u = (nu(t) - a(x)) / b(x)` computed from the true state at every
/// integration stage. With a correct model the output is a triple
/// integrator of `nu`.
pub fn run_excitation(
    params: &PlantParams,
    initial: BrakeState,
    duration: f64,
    dt: f64,
    u_sat: f64,
    nu: impl Fn(f64) -> f64,
) -> Result<Vec<ExcitationSample>> {
    let n = (duration / dt).round() as usize;
    let mut state = initial;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt;
        let v = nu(t);
        let input = linearizing_u(v, &state, params, u_sat)
            .map_err(|e| BrakeError::StageEvaluationFailure { t, source: Box::new(e) })?;
        out.push(ExcitationSample {
            t,
            y: output(&state),
            nu: v,
            u: input.u,
            z: transform_h(&state, params)?,
            regime: regime_of(state.x_v),
        });
        if k == n {
            break;
        }
        let next = rk4_step(
            |tau, x: &[f64; 4]| {
                let s = BrakeState::from_array(*x);
                let u = linearizing_u(nu(tau), &s, params, u_sat)?.u;
                Ok(plant_deriv(&s, u, params)?.to_array())
            },
            &state.to_array(),
            t,
            dt,
        )?;
        state = BrakeState::from_array(next);
        apply_travel_stop(&mut state, params);
        divergence_check(&state, params, t + dt)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub factor: f64,
    pub outcome: std::result::Result<Vec<StepMetrics>, BrakeError>,
}

impl SweepRow {
    pub fn all_settled(&self) -> bool {
        matches!(&self.outcome, Ok(m) if m.iter().all(StepMetrics::settled))
    }
}

/// Reruns `scenario` with the plant's supply gains scaled by each factor;
/// the controller keeps the nominal model. Runs execute on separate threads
/// and rows come back in input order.
pub fn robustness_sweep(
    scenario: &Scenario,
    params: &PlantParams,
    cfg: &ControllerConfig,
    kind: ControllerKind,
    factors: &[f64],
) -> Vec<SweepRow> {
    thread::scope(|scope| {
        let handles: Vec<_> = factors
            .iter()
            .map(|&factor| {
                scope.spawn(move || {
                    let outcome = if factor > 0.0 {
                        let sc = Scenario { plant_perturbation: Perturbation::uniform(factor), ..scenario.clone() };
                        run_closed_loop(&sc, params, cfg, kind).and_then(|tr| tr.all_metrics())
                    } else {
                        Err(BrakeError::InvalidScenario(format!("perturbation factor {factor} must be > 0")))
                    };
                    SweepRow { factor, outcome }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}
