//! Numeric Lie-derivative oracle.
//!
//! Every Lie derivative here is a nested directional derivative computed by
//! finite differences of the raw plant vector fields. No closed form from
//! [`crate::normal_form`] enters the numeric side, so the comparison in
//! [`LieOracleReport`] certifies those closed forms independently.
//!
//! Each nesting level uses the fourth-order central stencil
//! `(8(phi(+t) - phi(-t)) - (phi(+2t) - phi(-2t))) / 12t`, i.e. the
//! two-point central difference Richardson-extrapolated once. The step `t`
//! is chosen so the probe moves `h_step` in state coordinates scaled by
//! [`state_scales`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::normal_form::{a_of_in, b_of_in, q_of, state_scales, transform_h_in};
use crate::plant::{drift, input_field, regime_of, BrakeState, PlantParams, ValveRegime};

pub const DEFAULT_H_STEP: f64 = 1e-2;

type Scalar<'a> = Box<dyn Fn(&[f64; 4]) -> Result<f64> + 'a>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedForms {
    pub z2: f64,
    pub z3: f64,
    pub a: f64,
    pub b: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeErrors {
    pub z2: f64,
    pub z3: f64,
    pub a: f64,
    pub b: f64,
    pub q: f64,
}

impl RelativeErrors {
    pub fn max(&self) -> f64 {
        [self.z2, self.z3, self.a, self.b, self.q].into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LieOracleReport {
    pub regime: ValveRegime,
    pub lg_h: f64,
    pub lg_lf_h: f64,
    pub lf_h: f64,
    pub lf2_h: f64,
    pub lf3_h: f64,
    pub lg_lf2_h: f64,
    /// `L_f p_L`, compared against `q(z2)`.
    pub lf_eta: f64,
    /// `L_f^3 h + L_g L_f^2 h * u_probe`, the third output derivative.
    pub y3_probe: f64,
    pub closed: ClosedForms,
    pub max_abs_error_vs_closed_form: f64,
    pub rel: RelativeErrors,
}

impl LieOracleReport {
    /// `|L_g h|` and `|L_g L_f h|` relative to `|L_g L_f^2 h|`.
    pub fn scaled_vanishing_terms(&self) -> (f64, f64) {
        let scale = self.lg_lf2_h.abs().max(f64::MIN_POSITIVE);
        (self.lg_h.abs() / scale, self.lg_lf_h.abs() / scale)
    }

    /// Smallest `k` such that `L_g L_f^(k-1) h` is non-negligible.
    pub fn relative_degree(&self, tol: f64) -> Option<usize> {
        let scale = self.lg_lf2_h.abs().max(self.closed.b.abs());
        [self.lg_h, self.lg_lf_h, self.lg_lf2_h].iter().position(|v| v.abs() > tol * scale).map(|i| i + 1)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.lg_h,
            self.lg_lf_h,
            self.lf_h,
            self.lf2_h,
            self.lf3_h,
            self.lg_lf2_h,
            self.lf_eta,
            self.max_abs_error_vs_closed_form,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn directional(
    phi: &dyn Fn(&[f64; 4]) -> Result<f64>,
    x: &[f64; 4],
    dir: [f64; 4],
    scales: &[f64; 4],
    h_step: f64,
) -> Result<f64> {
    let norm = dir.iter().zip(scales).map(|(d, s)| (d / s) * (d / s)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let t = h_step / norm;
    let probe = |k: f64| {
        let mut y = *x;
        for (yi, di) in y.iter_mut().zip(dir) {
            *yi += k * t * di;
        }
        phi(&y)
    };
    let d1 = probe(1.0)? - probe(-1.0)?;
    let d2 = probe(2.0)? - probe(-2.0)?;
    Ok((8.0 * d1 - d2) / (12.0 * t))
}

fn lie_along_drift<'a>(phi: Scalar<'a>, regime: ValveRegime, params: &'a PlantParams, h_step: f64) -> Scalar<'a> {
    let scales = state_scales(params);
    Box::new(move |x: &[f64; 4]| {
        let f = drift(&BrakeState::from_array(*x), regime, params)?.to_array();
        directional(phi.as_ref(), x, f, &scales, h_step)
    })
}

fn lie_along_input<'a>(phi: Scalar<'a>, params: &'a PlantParams, h_step: f64) -> Scalar<'a> {
    let scales = state_scales(params);
    let g = input_field(params).to_array();
    Box::new(move |x: &[f64; 4]| directional(phi.as_ref(), x, g, &scales, h_step))
}

fn rel_err(numeric: f64, closed: f64, magnitude: f64) -> f64 {
    let denom = closed.abs().max(magnitude);
    if denom == 0.0 {
        (numeric - closed).abs()
    } else {
        (numeric - closed).abs() / denom
    }
}

/// Estimates the Lie-derivative chain of `h(x) = p_sup` at `state`, within
/// the regime selected by the sign of `x_v`, and compares it with the closed
/// forms.
pub fn lie_oracle(state: &BrakeState, u_probe: f64, params: &PlantParams, h_step: f64) -> Result<LieOracleReport> {
    let regime = regime_of(state.x_v);
    let x = state.to_array();

    let h = || -> Scalar<'_> { Box::new(|x: &[f64; 4]| Ok(x[1])) };
    let lf_h_fn = || lie_along_drift(h(), regime, params, h_step);
    let lf2_h_fn = || lie_along_drift(lf_h_fn(), regime, params, h_step);

    let lg_h = lie_along_input(h(), params, h_step)(&x)?;
    let lf_h = lf_h_fn()(&x)?;
    let lg_lf_h = lie_along_input(lf_h_fn(), params, h_step)(&x)?;
    let lf2_h = lf2_h_fn()(&x)?;
    let lf3_h = lie_along_drift(lf2_h_fn(), regime, params, h_step)(&x)?;
    let lg_lf2_h = lie_along_input(lf2_h_fn(), params, h_step)(&x)?;
    let eta: Scalar<'_> = Box::new(|x: &[f64; 4]| Ok(x[0]));
    let lf_eta = lie_along_drift(eta, regime, params, h_step)(&x)?;

    let [_, z2, z3] = transform_h_in(state, regime, params)?;
    let closed = ClosedForms {
        z2,
        z3,
        a: a_of_in(state, regime, params)?,
        b: b_of_in(state, regime, params)?,
        q: q_of(z2, regime, params),
    };

    // Sums of absolute closed-form terms: the relative errors stay meaningful
    // when the terms cancel.
    let k = params.regime_constants(regime);
    let root = params.radicand_at(state.p_l, state.p_sup, regime).sqrt();
    let w = params.omega_v;
    let (xv, vv) = (state.x_v, state.v_v);
    let z3_mag = (0.5 * k.t_sup * k.c * xv * xv).abs() + (k.t_sup * vv * root).abs();
    let a_mag = (1.5 * k.t_sup * k.c * vv * xv).abs()
        + (k.t_sup * 2.0 * params.d_v * w * vv * root).abs()
        + (k.t_sup * w * w * xv * root).abs();

    let rel = RelativeErrors {
        z2: rel_err(lf_h, closed.z2, 0.0),
        z3: rel_err(lf2_h, closed.z3, z3_mag),
        a: rel_err(lf3_h, closed.a, a_mag),
        b: rel_err(lg_lf2_h, closed.b, 0.0),
        q: rel_err(lf_eta, closed.q, 0.0),
    };
    let max_abs_error_vs_closed_form =
        [lf_h - closed.z2, lf2_h - closed.z3, lf3_h - closed.a, lg_lf2_h - closed.b, lf_eta - closed.q]
            .iter()
            .fold(0.0_f64, |m, e| m.max(e.abs()));

    Ok(LieOracleReport {
        regime,
        lg_h,
        lg_lf_h,
        lf_h,
        lf2_h,
        lf3_h,
        lg_lf2_h,
        lf_eta,
        y3_probe: lf3_h + lg_lf2_h * u_probe,
        closed,
        max_abs_error_vs_closed_form,
        rel,
    })
}

/// Seeded uniform samples from the operating envelope. Spool positions keep
/// at least `margin` (as a fraction of `x_v_max`) away from zero and from the
/// travel limits, and pressures keep `margin` of the box width from its faces,
/// so finite-difference probes stay in one regime.
pub fn sample_envelope_states(params: &PlantParams, count: usize, seed: u64, margin: f64) -> Vec<BrakeState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = &params.envelope;
    let inset = |lo: f64, hi: f64| {
        let m = margin * (hi - lo);
        (lo + m, hi - m)
    };
    let (pl_lo, pl_hi) = inset(env.p_l_min, env.p_l_max);
    let (ps_lo, ps_hi) = inset(env.p_sup_min, env.p_sup_max);
    let v_max = (1.0 - margin) * params.omega_v * params.x_v_max;
    (0..count)
        .map(|_| {
            let p_l = rng.gen_range(pl_lo..=pl_hi);
            let p_sup = rng.gen_range(ps_lo..=ps_hi);
            let v_v = rng.gen_range(-v_max..=v_max);
            let mag = rng.gen_range(margin..=1.0 - margin) * params.x_v_max;
            let x_v = if rng.gen_bool(0.5) { mag } else { -mag };
            BrakeState::new(p_l, p_sup, v_v, x_v)
        })
        .collect()
}
