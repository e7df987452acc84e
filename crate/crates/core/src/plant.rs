//! Fourth-order model of the self-energizing brake hydraulics.
//!
//! State order is `(p_L, p_sup, v_v, x_v)`: load pressure, supply-line
//! pressure (both bar), valve spool velocity (mm/s) and spool position (mm).
//! The flow equations switch on the sign of the spool position:
//!
//! ```text
//! case A (x_v >= 0): r = p_sup - p_L - alpha*p_lp
//! case B (x_v <  0): r = p_L + alpha*p_sup - p_lp
//! dp_L   = T_L   * x_v * sqrt(r)
//! dp_sup = T_sup * x_v * sqrt(r)
//! dv_v   = -2*D_v*w_v*v_v - w_v^2*x_v + w_v^2*K_v*u
//! dx_v   = v_v
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{BrakeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BrakeState {
    pub p_l: f64,
    pub p_sup: f64,
    pub v_v: f64,
    pub x_v: f64,
}

impl BrakeState {
    pub const fn new(p_l: f64, p_sup: f64, v_v: f64, x_v: f64) -> Self {
        Self { p_l, p_sup, v_v, x_v }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.p_l, self.p_sup, self.v_v, self.x_v]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Box of admissible `(p_L, p_sup)` operating points, in bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub p_l_min: f64,
    pub p_l_max: f64,
    pub p_sup_min: f64,
    pub p_sup_max: f64,
}

impl Envelope {
    pub fn contains(&self, p_l: f64, p_sup: f64) -> bool {
        (self.p_l_min..=self.p_l_max).contains(&p_l) && (self.p_sup_min..=self.p_sup_max).contains(&p_sup)
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.p_l_min, self.p_sup_min),
            (self.p_l_min, self.p_sup_max),
            (self.p_l_max, self.p_sup_min),
            (self.p_l_max, self.p_sup_max),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    pub t_l_a: f64,
    pub t_sup_a: f64,
    pub t_l_b: f64,
    pub t_sup_b: f64,
    /// Piston area ratio of the brake actuator.
    pub alpha: f64,
    /// Low-pressure line, bar.
    pub p_lp: f64,
    /// Valve gain, mm per unit input.
    pub k_v: f64,
    pub d_v: f64,
    /// Valve natural frequency, rad/s.
    pub omega_v: f64,
    /// Spool travel limit, mm.
    pub x_v_max: f64,
    pub envelope: Envelope,
}

impl Default for PlantParams {
    /// Illustrative nominal values; not identified from a test rig.
    fn default() -> Self {
        Self {
            t_l_a: 4.0,
            t_sup_a: 40.0,
            t_l_b: 4.0,
            t_sup_b: 40.0,
            alpha: 0.5,
            p_lp: 1.0,
            k_v: 0.1,
            d_v: 0.2,
            omega_v: 15.0,
            x_v_max: 1.0,
            envelope: Envelope { p_l_min: 0.5, p_l_max: 12.0, p_sup_min: 13.0, p_sup_max: 110.0 },
        }
    }
}

/// Constants of one valve-opening regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeConstants {
    pub t_l: f64,
    pub t_sup: f64,
    /// Rate of the radicand per unit `x_v * sqrt(r)`; also the quadratic
    /// coefficient of the second output derivative.
    pub c: f64,
    /// Partial derivatives of the radicand with respect to `(p_L, p_sup)`.
    pub dr_dp: (f64, f64),
}

impl PlantParams {
    pub fn regime_constants(&self, regime: ValveRegime) -> RegimeConstants {
        match regime {
            ValveRegime::CaseA => RegimeConstants {
                t_l: self.t_l_a,
                t_sup: self.t_sup_a,
                c: self.t_sup_a - self.t_l_a,
                dr_dp: (-1.0, 1.0),
            },
            ValveRegime::CaseB => RegimeConstants {
                t_l: self.t_l_b,
                t_sup: self.t_sup_b,
                c: self.alpha * self.t_sup_b + self.t_l_b,
                dr_dp: (1.0, self.alpha),
            },
        }
    }

    /// Pressure radicand as a function of `(p_L, p_sup)` only.
    pub fn radicand_at(&self, p_l: f64, p_sup: f64, regime: ValveRegime) -> f64 {
        match regime {
            ValveRegime::CaseA => p_sup - p_l - self.alpha * self.p_lp,
            ValveRegime::CaseB => p_l + self.alpha * p_sup - self.p_lp,
        }
    }

    /// Plant with the supply-side flow gains scaled, e.g. for a change in
    /// pad friction.
    pub fn with_t_sup_scaled(&self, factor_a: f64, factor_b: f64) -> Self {
        Self { t_sup_a: self.t_sup_a * factor_a, t_sup_b: self.t_sup_b * factor_b, ..*self }
    }

    /// Returns every violated invariant as `(field, message)`.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut check = |ok: bool, key: &'static str, msg: String| {
            if !ok {
                out.push((key, msg));
            }
        };
        check(self.omega_v > 0.0, "omega_v", format!("must be > 0, got {}", self.omega_v));
        check(self.d_v > 0.0, "d_v", format!("must be > 0, got {}", self.d_v));
        check(self.k_v > 0.0, "k_v", format!("must be > 0, got {}", self.k_v));
        check(self.alpha > 0.0 && self.alpha <= 1.0, "alpha", format!("must lie in (0, 1], got {}", self.alpha));
        check(self.p_lp >= 0.0, "p_lp", format!("must be >= 0, got {}", self.p_lp));
        check(self.x_v_max > 0.0, "x_v_max", format!("must be > 0, got {}", self.x_v_max));
        check(self.t_l_a > 0.0, "t_l_a", format!("must be > 0, got {}", self.t_l_a));
        check(
            self.t_sup_a > self.t_l_a,
            "t_sup_a",
            format!("must exceed t_l_a = {}, got {}", self.t_l_a, self.t_sup_a),
        );
        check(self.t_l_b > 0.0, "t_l_b", format!("must be > 0, got {}", self.t_l_b));
        check(self.t_sup_b > 0.0, "t_sup_b", format!("must be > 0, got {}", self.t_sup_b));

        let env = &self.envelope;
        check(
            env.p_l_min >= 0.0 && env.p_l_min < env.p_l_max,
            "envelope.p_l_min",
            format!("need 0 <= p_l_min < p_l_max, got [{}, {}]", env.p_l_min, env.p_l_max),
        );
        check(
            env.p_sup_min >= 0.0 && env.p_sup_min < env.p_sup_max,
            "envelope.p_sup_min",
            format!("need 0 <= p_sup_min < p_sup_max, got [{}, {}]", env.p_sup_min, env.p_sup_max),
        );
        // Both radicands are affine in the pressures, so the corners bound them.
        for regime in [ValveRegime::CaseA, ValveRegime::CaseB] {
            let worst =
                env.corners().iter().map(|&(pl, ps)| self.radicand_at(pl, ps, regime)).fold(f64::INFINITY, f64::min);
            check(worst > 0.0, "envelope", format!("case {} radicand reaches {worst} inside the box", regime.letter()));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValveRegime {
    CaseA,
    CaseB,
}

impl ValveRegime {
    pub fn letter(self) -> char {
        match self {
            ValveRegime::CaseA => 'A',
            ValveRegime::CaseB => 'B',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDeriv {
    pub dp_l: f64,
    pub dp_sup: f64,
    pub dv_v: f64,
    pub dx_v: f64,
}

impl StateDeriv {
    pub fn to_array(self) -> [f64; 4] {
        [self.dp_l, self.dp_sup, self.dv_v, self.dx_v]
    }
}

/// Zero opening is assigned to case A; both cases agree there.
pub fn regime_of(x_v: f64) -> ValveRegime {
    if x_v >= 0.0 {
        ValveRegime::CaseA
    } else {
        ValveRegime::CaseB
    }
}

pub fn radicand(state: &BrakeState, regime: ValveRegime, params: &PlantParams) -> Result<f64> {
    let value = params.radicand_at(state.p_l, state.p_sup, regime);
    if value > 0.0 {
        Ok(value)
    } else {
        Err(BrakeError::SingularRadicand { regime, value })
    }
}

pub fn plant_deriv(state: &BrakeState, u: f64, params: &PlantParams) -> Result<StateDeriv> {
    plant_deriv_in(state, u, regime_of(state.x_v), params)
}

/// Vector field of one regime, evaluated regardless of the sign of `x_v`.
pub fn plant_deriv_in(state: &BrakeState, u: f64, regime: ValveRegime, params: &PlantParams) -> Result<StateDeriv> {
    let root = radicand(state, regime, params)?.sqrt();
    let k = params.regime_constants(regime);
    let w2 = params.omega_v * params.omega_v;
    Ok(StateDeriv {
        dp_l: k.t_l * state.x_v * root,
        dp_sup: k.t_sup * state.x_v * root,
        dv_v: -2.0 * params.d_v * params.omega_v * state.v_v - w2 * state.x_v + w2 * params.k_v * u,
        dx_v: state.v_v,
    })
}

/// Drift `f(x)` of the input-affine form for a fixed regime.
pub fn drift(state: &BrakeState, regime: ValveRegime, params: &PlantParams) -> Result<StateDeriv> {
    plant_deriv_in(state, 0.0, regime, params)
}

/// Input vector field `g(x)`; constant.
pub fn input_field(params: &PlantParams) -> StateDeriv {
    StateDeriv { dv_v: params.omega_v * params.omega_v * params.k_v, ..StateDeriv::default() }
}

pub fn output(state: &BrakeState) -> f64 {
    state.p_sup
}
