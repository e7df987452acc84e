//! The linearizing pressure controller and the proportional baseline.
//!
//! The law reconstructs the plant state from the estimates `(eta_hat,
//! z_hat)`, computes `nu = K_z (z* - z_hat)` and maps it through
//! `u = (nu - a(x)) / b(x)`. [`FblController::step`] is the sampled form;
//! the simulator evaluates the law inside every integration stage instead.

use serde::{Deserialize, Serialize};

use crate::error::{BrakeError, Result};
use crate::linear_control::{
    control_nu, eta_hat_deriv, observer_deriv, pole_place_controller, pole_place_observer, real_poles, reference_state,
    ControllerGains, ObserverGains, ObserverState, Poles,
};
use crate::normal_form::{a_of_in, b_of_in, inverse_m, transform_h};
use crate::plant::{regime_of, BrakeState, PlantParams, ValveRegime};
use crate::sim::rk4_step;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RegimeSource {
    /// Sign of the reconstructed spool position.
    #[default]
    Estimated,
    /// Sign of the true spool position, when the simulation exposes it.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub controller_poles: Poles,
    pub observer_poles: Poles,
    pub u_sat: f64,
    pub baseline_gain: f64,
    #[serde(default)]
    pub regime_source: RegimeSource,
    /// Initial load-pressure estimate; the low-pressure line when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_hat0: Option<f64>,
    /// Steps the last input is held while the estimate is singular.
    pub singular_hold_steps: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            controller_poles: real_poles([-8.0; 3]),
            observer_poles: real_poles([-40.0; 3]),
            u_sat: 10.0,
            baseline_gain: 0.1,
            regime_source: RegimeSource::Estimated,
            eta_hat0: None,
            singular_hold_steps: 50,
        }
    }
}

impl ControllerConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Err(e) = pole_place_controller(&self.controller_poles) {
            out.push(("controller_poles", e.to_string()));
        }
        if let Err(e) = pole_place_observer(&self.observer_poles) {
            out.push(("observer_poles", e.to_string()));
        }
        if !(self.u_sat > 0.0) {
            out.push(("u_sat", format!("must be > 0, got {}", self.u_sat)));
        }
        if !(self.baseline_gain > 0.0) {
            out.push(("baseline_gain", format!("must be > 0, got {}", self.baseline_gain)));
        }
        if let Some(eta) = self.eta_hat0 {
            if !eta.is_finite() {
                out.push(("eta_hat0", format!("must be finite, got {eta}")));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturatedInput {
    pub u: f64,
    pub saturated: bool,
}

fn saturate(u: f64, u_sat: f64) -> SaturatedInput {
    SaturatedInput { u: u.clamp(-u_sat, u_sat), saturated: u.abs() > u_sat }
}

/// `u = (nu - a(x)) / b(x)`, clipped to `+-u_sat`. The regime follows the
/// sign of `state_est.x_v`.
pub fn linearizing_u(nu: f64, state_est: &BrakeState, params: &PlantParams, u_sat: f64) -> Result<SaturatedInput> {
    linearizing_u_in(nu, state_est, regime_of(state_est.x_v), params, u_sat)
}

pub fn linearizing_u_in(
    nu: f64,
    state_est: &BrakeState,
    regime: ValveRegime,
    params: &PlantParams,
    u_sat: f64,
) -> Result<SaturatedInput> {
    let a = a_of_in(state_est, regime, params)?;
    let b = b_of_in(state_est, regime, params)?;
    Ok(saturate((nu - a) / b, u_sat))
}

pub fn baseline_p_controller(y_meas: f64, p_ref: f64, gain: f64, u_sat: f64) -> SaturatedInput {
    saturate(gain * (p_ref - y_meas), u_sat)
}

/// Reconstructs the plant state from the estimates. The regime is the one
/// whose inversion yields a spool position of matching sign; since
/// `x_v = z2 / (T_sup sqrt(r))`, that is decided by the sign of `z2 T_sup`.
pub fn reconstruct_state(eta_hat: f64, z_hat: [f64; 3], params: &PlantParams) -> Result<(BrakeState, ValveRegime)> {
    let regime = if z_hat[1] * params.t_sup_a >= 0.0 { ValveRegime::CaseA } else { ValveRegime::CaseB };
    inverse_m(eta_hat, z_hat, regime, params).map(|s| (s, regime))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FblControllerState {
    pub obs: ObserverState,
    pub last_u: f64,
    pub last_nu: f64,
    pub regime_used: ValveRegime,
    pub singular_steps: usize,
    /// Measurement at the previous sample, `None` before the first call.
    last_y: Option<f64>,
}

/// One control sample, with the internals logged to traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: f64,
    pub nu: Option<f64>,
    pub saturated: bool,
    pub z_hat: Option<[f64; 3]>,
    pub eta_hat: Option<f64>,
    /// Set when the estimate was singular and the previous input was held.
    pub held: bool,
}

/// Output of the algebraic part of the control law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawOutput {
    pub nu: f64,
    /// `None` when the estimate is singular.
    pub input: Option<(SaturatedInput, ValveRegime)>,
}

#[derive(Debug, Clone)]
pub struct FblController {
    cfg: ControllerConfig,
    params: PlantParams,
    gains: ControllerGains,
    obs_gains: ObserverGains,
    state: FblControllerState,
}

impl FblController {
    /// `params` is the design model; it need not match the simulated plant.
    pub fn new(cfg: &ControllerConfig, params: &PlantParams, y0: f64) -> Result<Self> {
        let gains = pole_place_controller(&cfg.controller_poles)?;
        let obs_gains = pole_place_observer(&cfg.observer_poles)?;
        let eta0 = cfg.eta_hat0.unwrap_or(params.p_lp);
        Ok(Self {
            cfg: cfg.clone(),
            params: *params,
            gains,
            obs_gains,
            state: FblControllerState {
                obs: ObserverState::at_startup(y0, eta0),
                last_u: 0.0,
                last_nu: 0.0,
                regime_used: ValveRegime::CaseA,
                singular_steps: 0,
                last_y: None,
            },
        })
    }

    pub fn state(&self) -> &FblControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn gains(&self) -> (&ControllerGains, &ObserverGains) {
        (&self.gains, &self.obs_gains)
    }

    /// `nu = K_z (z* - z_hat)`, state reconstruction and `u = (nu - a) / b`
    /// for a given estimate. Pure; does not touch the controller memory.
    pub fn law(&self, obs: &ObserverState, p_ref: f64, measured_regime: Option<ValveRegime>) -> Result<LawOutput> {
        let z_star = reference_state(p_ref, &self.params.envelope)?;
        let nu = control_nu(&self.gains, &z_star, &obs.z_hat);
        let input = match (self.cfg.regime_source, measured_regime) {
            (RegimeSource::Measured, Some(regime)) => {
                inverse_m(obs.eta_hat, obs.z_hat, regime, &self.params).map(|s| (s, regime))
            }
            _ => reconstruct_state(obs.eta_hat, obs.z_hat, &self.params),
        }
        .and_then(|(x_hat, regime)| {
            linearizing_u_in(nu, &x_hat, regime, &self.params, self.cfg.u_sat).map(|u| (u, regime))
        });
        match input {
            Ok(v) => Ok(LawOutput { nu, input: Some(v) }),
            Err(BrakeError::SingularRadicand { .. }) => Ok(LawOutput { nu, input: None }),
            Err(e) => Err(e),
        }
    }

    /// Rates of `(z_hat, eta_hat)`.
    pub fn observer_rates(&self, obs: &ObserverState, nu: f64, y_meas: f64, regime: ValveRegime) -> [f64; 4] {
        let dz = observer_deriv(&obs.z_hat, nu, y_meas, &self.obs_gains);
        [dz[0], dz[1], dz[2], eta_hat_deriv(obs.z_hat[1], regime, &self.params)]
    }

    /// Records the law evaluated at a sample instant: updates the held
    /// input and the singularity counter. Fails once the estimate has been
    /// singular for more than the configured number of samples.
    pub fn commit(&mut self, obs: ObserverState, law: &LawOutput, t: f64) -> Result<ControlOutput> {
        self.state.obs = obs;
        self.state.last_nu = law.nu;
        let (input, held) = match law.input {
            Some((input, regime)) => {
                self.state.regime_used = regime;
                self.state.singular_steps = 0;
                (input, false)
            }
            None => {
                self.state.singular_steps += 1;
                if self.state.singular_steps > self.cfg.singular_hold_steps {
                    self.state.last_u = 0.0;
                    return Err(BrakeError::ControllerFailure { t, steps: self.state.singular_steps });
                }
                (SaturatedInput { u: self.state.last_u, saturated: false }, true)
            }
        };
        self.state.last_u = input.u;
        Ok(ControlOutput {
            u: input.u,
            nu: Some(law.nu),
            saturated: input.saturated,
            z_hat: Some(obs.z_hat),
            eta_hat: Some(obs.eta_hat),
            held,
        })
    }

    /// Input and estimator rates inside an integration stage. A singular
    /// estimate falls back to the input and regime of the last sample.
    pub fn stage(
        &self,
        obs: &ObserverState,
        y_meas: f64,
        p_ref: f64,
        measured_regime: Option<ValveRegime>,
    ) -> Result<(f64, [f64; 4])> {
        let law = self.law(obs, p_ref, measured_regime)?;
        let (u, regime) = match law.input {
            Some((input, regime)) => (input.u, regime),
            None => (self.state.last_u, self.state.regime_used),
        };
        Ok((u, self.observer_rates(obs, law.nu, y_meas, regime)))
    }

    /// Sampled form of the controller, for use outside the simulator. The
    /// first call only initializes; later calls integrate the observer over
    /// the preceding `dt` with the previous `nu` held and the measurement
    /// interpolated linearly between samples.
    pub fn step(
        &mut self,
        y_meas: f64,
        p_ref: f64,
        dt: f64,
        t: f64,
        measured_regime: Option<ValveRegime>,
    ) -> Result<ControlOutput> {
        let mut obs = self.state.obs;
        if let Some(y_prev) = self.state.last_y {
            let nu = self.state.last_nu;
            let regime = self.state.regime_used;
            let o = obs;
            let next = rk4_step(
                |tau, w: &[f64; 4]| {
                    let y = y_prev + (y_meas - y_prev) * tau / dt;
                    let est = ObserverState { z_hat: [w[0], w[1], w[2]], eta_hat: w[3] };
                    Ok(self.observer_rates(&est, nu, y, regime))
                },
                &[o.z_hat[0], o.z_hat[1], o.z_hat[2], o.eta_hat],
                0.0,
                dt,
            )?;
            obs = ObserverState { z_hat: [next[0], next[1], next[2]], eta_hat: next[3] };
        }
        self.state.last_y = Some(y_meas);
        let law = self.law(&obs, p_ref, measured_regime)?;
        self.commit(obs, &law, t)
    }

    /// Outer loop with the observer bypassed: `z` comes from the true state.
    pub fn exact_state_law(&self, state: &BrakeState, p_ref: f64) -> Result<ControlOutput> {
        let z_star = reference_state(p_ref, &self.params.envelope)?;
        let z = transform_h(state, &self.params)?;
        let nu = control_nu(&self.gains, &z_star, &z);
        let input = linearizing_u(nu, state, &self.params, self.cfg.u_sat)?;
        Ok(ControlOutput {
            u: input.u,
            nu: Some(nu),
            saturated: input.saturated,
            z_hat: Some(z),
            eta_hat: Some(state.p_l),
            held: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_params() -> PlantParams {
        PlantParams {
            t_l_a: 1.0,
            t_sup_a: 2.0,
            alpha: 1.0,
            p_lp: 9.0,
            k_v: 1.0,
            d_v: 0.5,
            omega_v: 10.0,
            ..PlantParams::default()
        }
    }

    #[test]
    fn exact_cancellation_gives_zero_input() {
        let p = PlantParams::default();
        let s = BrakeState::new(3.0, 50.0, 4.0, 0.3);
        let a = crate::normal_form::a_of(&s, &p).unwrap();
        let out = linearizing_u(a, &s, &p, 10.0).unwrap();
        assert_eq!(out.u, 0.0);
        assert!(!out.saturated);
    }

    #[test]
    fn linearizing_u_from_hand_values() {
        let s = BrakeState::new(10.0, 35.0, 0.0, 2.0);
        let out = linearizing_u(0.0, &s, &example_params(), 10.0).unwrap();
        assert_eq!(out.u, 2.0);
        let clipped = linearizing_u(0.0, &s, &example_params(), 1.5).unwrap();
        assert_eq!(clipped, SaturatedInput { u: 1.5, saturated: true });
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_p_controller(59.0, 59.0, 0.1, 10.0).u, 0.0);
        let u = baseline_p_controller(27.0, 59.0, 0.1, 10.0);
        assert!((u.u - 3.2).abs() < 1e-12 && !u.saturated);
        assert!(baseline_p_controller(40.0, 27.0, 0.1, 10.0).u < 0.0);
        assert_eq!(baseline_p_controller(27.0, 91.0, 1.0, 10.0).u, 10.0);
    }

    #[test]
    fn startup_at_reference_is_quiet() {
        let p = PlantParams::default();
        let cfg = ControllerConfig::default();
        let mut c = FblController::new(&cfg, &p, 27.0).unwrap();
        for k in 0..5 {
            let out = c.step(27.0, 27.0, 1e-4, k as f64 * 1e-4, None).unwrap();
            assert_eq!(out.nu, Some(0.0));
            assert_eq!(out.u, 0.0);
        }
    }

    #[test]
    fn steady_state_estimate_gives_zero_nu_and_u() {
        let p = PlantParams::default();
        let cfg = ControllerConfig { eta_hat0: Some(5.0), ..ControllerConfig::default() };
        let mut c = FblController::new(&cfg, &p, 59.0).unwrap();
        let out = c.step(59.0, 59.0, 1e-4, 0.0, None).unwrap();
        assert_eq!((out.nu, out.u), (Some(0.0), 0.0));
        assert_eq!(out.eta_hat, Some(5.0));
    }

    #[test]
    fn singular_estimate_holds_then_fails() {
        let p = PlantParams::default();
        // eta_hat far above p_sup makes the case-A radicand negative.
        let cfg = ControllerConfig { eta_hat0: Some(200.0), singular_hold_steps: 3, ..ControllerConfig::default() };
        let mut c = FblController::new(&cfg, &p, 27.0).unwrap();
        c.state.last_u = 0.7;
        for k in 0..3 {
            let out = c.step(27.0, 59.0, 1e-4, k as f64 * 1e-4, None).unwrap();
            assert!(out.held);
            assert_eq!(out.u, 0.7);
        }
        let err = c.step(27.0, 59.0, 1e-4, 3e-4, None).unwrap_err();
        assert!(matches!(err, BrakeError::ControllerFailure { steps: 4, .. }));
        assert_eq!(c.state().last_u, 0.0);
    }

    #[test]
    fn reference_outside_envelope_is_rejected() {
        let p = PlantParams::default();
        let mut c = FblController::new(&ControllerConfig::default(), &p, 27.0).unwrap();
        assert!(matches!(c.step(27.0, 0.0, 1e-4, 0.0, None), Err(BrakeError::EnvelopeViolation { .. })));
    }

    #[test]
    fn reconstruction_picks_regime_from_spool_sign() {
        let p = PlantParams::default();
        let (s, r) = reconstruct_state(3.0, [50.0, 20.0, 5.0], &p).unwrap();
        assert_eq!(r, ValveRegime::CaseA);
        assert!(s.x_v > 0.0);
        let (s, r) = reconstruct_state(3.0, [50.0, -20.0, 5.0], &p).unwrap();
        assert_eq!(r, ValveRegime::CaseB);
        assert!(s.x_v < 0.0);
    }
}
