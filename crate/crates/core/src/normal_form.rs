//! Input-output normal form of the brake model.
//!
//! The output `y = p_sup` has relative degree three. The coordinates
//! `z = (y, y', y'')` form a triple integrator driven by `a(x) + b(x) u`, and
//! the load pressure `eta = p_L` carries the remaining internal dynamics
//! `eta' = (T_L / T_sup) z2`.
//!
//! Closed forms per regime, with `r` the regime radicand and `c` the
//! coefficient from [`PlantParams::regime_constants`]:
//!
//! ```text
//! z2 = T_sup x_v sqrt(r)
//! z3 = 1/2 T_sup c x_v^2 + T_sup v_v sqrt(r)
//! a  = 3/2 T_sup c v_v x_v - T_sup (2 D_v w_v v_v + w_v^2 x_v) sqrt(r)
//! b  = T_sup sqrt(r) w_v^2 K_v
//! ```

use nalgebra::{Matrix3x4, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::plant::{radicand, regime_of, BrakeState, PlantParams, ValveRegime};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalCoords {
    pub eta: f64,
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

impl NormalCoords {
    pub fn z(&self) -> [f64; 3] {
        [self.z1, self.z2, self.z3]
    }
}

pub fn transform_h(state: &BrakeState, params: &PlantParams) -> Result<[f64; 3]> {
    transform_h_in(state, regime_of(state.x_v), params)
}

pub fn transform_h_in(state: &BrakeState, regime: ValveRegime, params: &PlantParams) -> Result<[f64; 3]> {
    let root = radicand(state, regime, params)?.sqrt();
    let k = params.regime_constants(regime);
    let z2 = k.t_sup * state.x_v * root;
    let z3 = 0.5 * k.t_sup * k.c * state.x_v * state.x_v + k.t_sup * state.v_v * root;
    Ok([state.p_sup, z2, z3])
}

/// The augmented map `M(x) = (p_L, H(x))`.
pub fn normal_coords(state: &BrakeState, params: &PlantParams) -> Result<NormalCoords> {
    let [z1, z2, z3] = transform_h(state, params)?;
    Ok(NormalCoords { eta: state.p_l, z1, z2, z3 })
}

pub fn a_of(state: &BrakeState, params: &PlantParams) -> Result<f64> {
    a_of_in(state, regime_of(state.x_v), params)
}

pub fn a_of_in(state: &BrakeState, regime: ValveRegime, params: &PlantParams) -> Result<f64> {
    let root = radicand(state, regime, params)?.sqrt();
    let k = params.regime_constants(regime);
    let w = params.omega_v;
    Ok(1.5 * k.t_sup * k.c * state.v_v * state.x_v
        - k.t_sup * (2.0 * params.d_v * w * state.v_v + w * w * state.x_v) * root)
}

pub fn b_of(state: &BrakeState, params: &PlantParams) -> Result<f64> {
    b_of_in(state, regime_of(state.x_v), params)
}

pub fn b_of_in(state: &BrakeState, regime: ValveRegime, params: &PlantParams) -> Result<f64> {
    let root = radicand(state, regime, params)?.sqrt();
    let k = params.regime_constants(regime);
    Ok(k.t_sup * root * params.omega_v * params.omega_v * params.k_v)
}

/// Rate of the internal coordinate `eta = p_L`.
pub fn q_of(z2: f64, regime: ValveRegime, params: &PlantParams) -> f64 {
    let k = params.regime_constants(regime);
    k.t_l / k.t_sup * z2
}

/// Closed-form inverse of the augmented map within one regime.
pub fn inverse_m(eta: f64, z: [f64; 3], regime: ValveRegime, params: &PlantParams) -> Result<BrakeState> {
    let mut state = BrakeState::new(eta, z[0], 0.0, 0.0);
    let root = radicand(&state, regime, params)?.sqrt();
    let k = params.regime_constants(regime);
    let scale = k.t_sup * root;
    state.x_v = z[1] / scale;
    state.v_v = (z[2] - 0.5 * k.t_sup * k.c * state.x_v * state.x_v) / scale;
    Ok(state)
}

/// Analytic Jacobian of `M` in state order `(p_L, p_sup, v_v, x_v)`, with its
/// determinant `-(T_sup^2) r`.
pub fn jacobian_m(state: &BrakeState, params: &PlantParams) -> Result<(Matrix4<f64>, f64)> {
    jacobian_m_in(state, regime_of(state.x_v), params)
}

pub fn jacobian_m_in(state: &BrakeState, regime: ValveRegime, params: &PlantParams) -> Result<(Matrix4<f64>, f64)> {
    let r = radicand(state, regime, params)?;
    let root = r.sqrt();
    let k = params.regime_constants(regime);
    let (dr_dpl, dr_dps) = k.dr_dp;
    let t = k.t_sup;
    let (x, v) = (state.x_v, state.v_v);
    #[rustfmt::skip]
    let jac = Matrix4::new(
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        t * x * dr_dpl / (2.0 * root), t * x * dr_dps / (2.0 * root), 0.0, t * root,
        t * v * dr_dpl / (2.0 * root), t * v * dr_dps / (2.0 * root), t * root, t * k.c * x,
    );
    Ok((jac, -t * t * r))
}

/// Central-difference Jacobian of `M`, used to cross-check [`jacobian_m`].
pub fn jacobian_m_numeric(
    state: &BrakeState,
    regime: ValveRegime,
    params: &PlantParams,
    rel_step: f64,
) -> Result<Matrix4<f64>> {
    let base = state.to_array();
    let scales = state_scales(params);
    let mut jac = Matrix4::zeros();
    for j in 0..4 {
        let step = rel_step * scales[j];
        let mut fwd = base;
        let mut bwd = base;
        fwd[j] += step;
        bwd[j] -= step;
        let mf = m_in(&BrakeState::from_array(fwd), regime, params)?;
        let mb = m_in(&BrakeState::from_array(bwd), regime, params)?;
        for i in 0..4 {
            jac[(i, j)] = (mf[i] - mb[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

fn m_in(state: &BrakeState, regime: ValveRegime, params: &PlantParams) -> Result<[f64; 4]> {
    let [z1, z2, z3] = transform_h_in(state, regime, params)?;
    Ok([state.p_l, z1, z2, z3])
}

/// Numeric rank of the `H` rows of the Jacobian.
pub fn rank_h(state: &BrakeState, params: &PlantParams, tol: f64) -> Result<usize> {
    let (jac, _) = jacobian_m(state, params)?;
    let h_rows: Matrix3x4<f64> = jac.fixed_rows::<3>(1).into_owned();
    Ok(h_rows.rank(tol))
}

/// Characteristic magnitudes of the state components, used to scale
/// finite-difference steps.
pub fn state_scales(params: &PlantParams) -> [f64; 4] {
    let env = &params.envelope;
    [env.p_l_max.abs().max(1.0), env.p_sup_max.abs().max(1.0), params.omega_v * params.x_v_max, params.x_v_max]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::BrakeError;
    use approx::assert_relative_eq;

    fn example_params() -> PlantParams {
        PlantParams {
            t_l_a: 1.0,
            t_sup_a: 2.0,
            t_l_b: 1.0,
            t_sup_b: 2.0,
            alpha: 1.0,
            p_lp: 9.0,
            k_v: 1.0,
            d_v: 0.5,
            omega_v: 10.0,
            ..PlantParams::default()
        }
    }

    #[test]
    fn transform_example() {
        let s = BrakeState::new(10.0, 35.0, 0.0, 2.0);
        assert_eq!(transform_h(&s, &example_params()).unwrap(), [35.0, 16.0, 4.0]);
    }

    #[test]
    fn transform_at_rest() {
        let p = PlantParams::default();
        let s = BrakeState::new(3.0, 47.0, 0.0, 0.0);
        assert_eq!(transform_h(&s, &p).unwrap(), [47.0, 0.0, 0.0]);
    }

    #[test]
    fn a_and_b_examples() {
        let p = example_params();
        let s = BrakeState::new(10.0, 35.0, 0.0, 2.0);
        assert_eq!(a_of(&s, &p).unwrap(), -1600.0);
        assert_eq!(b_of(&s, &p).unwrap(), 800.0);
        let rest = BrakeState::new(10.0, 35.0, 0.0, 0.0);
        assert_eq!(a_of(&rest, &p).unwrap(), 0.0);
    }

    #[test]
    fn q_examples() {
        let p = example_params();
        assert_eq!(q_of(16.0, ValveRegime::CaseA, &p), 8.0);
        assert_eq!(q_of(0.0, ValveRegime::CaseA, &p), 0.0);
        assert_eq!(q_of(0.0, ValveRegime::CaseB, &p), 0.0);
        // The ratio is all that matters, whatever the sign convention.
        let neg = PlantParams { t_l_b: -1.0, t_sup_b: -2.0, ..p };
        assert_eq!(q_of(-10.0, ValveRegime::CaseB, &neg), -5.0);
    }

    #[test]
    fn inverse_examples() {
        let p = example_params();
        let s = inverse_m(10.0, [35.0, 16.0, 4.0], ValveRegime::CaseA, &p).unwrap();
        assert_eq!(s, BrakeState::new(10.0, 35.0, 0.0, 2.0));
        let q = PlantParams::default();
        let rest = inverse_m(3.0, [40.0, 0.0, 0.0], ValveRegime::CaseB, &q).unwrap();
        assert_eq!(rest, BrakeState::new(3.0, 40.0, 0.0, 0.0));
    }

    #[test]
    fn inverse_rejects_singular_radicand() {
        let p = PlantParams { p_lp: 0.0, ..PlantParams::default() };
        let err = inverse_m(30.0, [30.0, 1.0, 1.0], ValveRegime::CaseA, &p).unwrap_err();
        assert!(matches!(err, BrakeError::SingularRadicand { .. }));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = PlantParams::default();
        for s in [BrakeState::new(2.0, 40.0, 3.0, 0.4), BrakeState::new(8.0, 90.0, -5.0, -0.7)] {
            let regime = regime_of(s.x_v);
            let (jac, det) = jacobian_m(&s, &p).unwrap();
            let num = jacobian_m_numeric(&s, regime, &p, 1e-6).unwrap();
            for (a, b) in jac.iter().zip(num.iter()) {
                assert_relative_eq!(*a, *b, epsilon = 1e-6, max_relative = 1e-6);
            }
            assert_relative_eq!(det, jac.determinant(), max_relative = 1e-12);
            assert!(det.abs() > 0.0);
        }
    }

    #[test]
    fn determinant_vanishes_with_radicand() {
        let p = PlantParams::default();
        let mut prev = f64::INFINITY;
        for gap in [1.0, 1e-2, 1e-4, 1e-8] {
            // Case A radicand equals `gap` here.
            let p_sup = 5.0 + p.alpha * p.p_lp + gap;
            let s = BrakeState::new(5.0, p_sup, 1.0, 0.1);
            let (_, det) = jacobian_m(&s, &p).unwrap();
            assert!(det.abs() < prev);
            prev = det.abs();
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn h_rows_have_rank_three() {
        let p = PlantParams::default();
        let s = BrakeState::new(4.0, 60.0, 2.0, 0.3);
        assert_eq!(rank_h(&s, &p, 1e-9).unwrap(), 3);
    }
}
