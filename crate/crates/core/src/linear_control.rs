//! Pole placement and the full-order observer for the triple integrator
//! `z' = A z + b nu`, `y = c^T z`.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BrakeError, Result};
use crate::normal_form::q_of;
use crate::plant::{Envelope, PlantParams, ValveRegime};

pub type Poles = [Complex64; 3];

pub fn real_poles(p: [f64; 3]) -> Poles {
    p.map(|re| Complex64::new(re, 0.0))
}

/// Chain-of-integrators matrix `A`.
pub fn integrator_chain() -> Matrix3<f64> {
    #[rustfmt::skip]
    let a = Matrix3::new(
        0.0, 1.0, 0.0,
        0.0, 0.0, 1.0,
        0.0, 0.0, 0.0,
    );
    a
}

/// Coefficients `(c0, c1, c2)` of the monic cubic `s^3 + c2 s^2 + c1 s + c0`
/// whose roots are `poles`.
pub fn monic_coefficients(poles: &Poles) -> Result<[f64; 3]> {
    for p in poles {
        if !(p.re < 0.0) || !p.im.is_finite() {
            return Err(BrakeError::UnstablePoleRequest { re: p.re, im: p.im });
        }
    }
    check_conjugate_closed(poles)?;
    // Ascending powers: coeffs[k] multiplies s^k.
    let mut coeffs = [Complex64::new(1.0, 0.0), Complex64::default(), Complex64::default(), Complex64::default()];
    for (n, p) in poles.iter().enumerate() {
        for k in (0..=n + 1).rev() {
            let shifted = if k > 0 { coeffs[k - 1] } else { Complex64::default() };
            coeffs[k] = shifted - p * coeffs[k];
        }
    }
    Ok([coeffs[0].re, coeffs[1].re, coeffs[2].re])
}

fn check_conjugate_closed(poles: &Poles) -> Result<()> {
    let tol = |p: &Complex64| 1e-12 * p.norm().max(1.0);
    let mut used = [false; 3];
    for i in 0..3 {
        if used[i] {
            continue;
        }
        let p = poles[i];
        if p.im.abs() <= tol(&p) {
            used[i] = true;
            continue;
        }
        let partner = (0..3).find(|&j| j != i && !used[j] && (poles[j] - p.conj()).norm() <= tol(&p));
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return Err(BrakeError::ConjugacyViolation),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k_z: [f64; 3],
}

impl ControllerGains {
    pub fn closed_loop(&self) -> Matrix3<f64> {
        let mut m = integrator_chain();
        for j in 0..3 {
            m[(2, j)] -= self.k_z[j];
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverGains {
    pub k_obs: [f64; 3],
}

impl ObserverGains {
    pub fn closed_loop(&self) -> Matrix3<f64> {
        let mut m = integrator_chain();
        for i in 0..3 {
            m[(i, 0)] -= self.k_obs[i];
        }
        m
    }
}

/// For the companion pair `(A, b)` the feedback row is the coefficient list
/// of the desired characteristic polynomial, lowest order first.
pub fn pole_place_controller(poles: &Poles) -> Result<ControllerGains> {
    let [c0, c1, c2] = monic_coefficients(poles)?;
    Ok(ControllerGains { k_z: [c0, c1, c2] })
}

/// Dual of [`pole_place_controller`]: `A - K_obs c^T` is in observer
/// companion form, so the gains are the coefficients highest order first.
pub fn pole_place_observer(poles: &Poles) -> Result<ObserverGains> {
    let [d0, d1, d2] = monic_coefficients(poles)?;
    Ok(ObserverGains { k_obs: [d2, d1, d0] })
}

/// Eigenvalues by Schur decomposition, independent of the coefficient route.
/// The matrix is balanced first: companion forms with fast poles have entries
/// spanning many decades, which otherwise costs several digits.
pub fn eigenvalues(m: &Matrix3<f64>) -> Vec<Complex64> {
    balance(m).complex_eigenvalues().iter().copied().collect()
}

/// Parlett-Reinsch balancing by powers of two; an exact similarity.
fn balance(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut b = *m;
    loop {
        let mut converged = true;
        for i in 0..3 {
            let (mut c, mut r) = (0.0_f64, 0.0_f64);
            for j in (0..3).filter(|&j| j != i) {
                c += b[(j, i)].abs();
                r += b[(i, j)].abs();
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let s = c + r;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if c + r < 0.95 * s {
                converged = false;
                b.column_mut(i).scale_mut(f);
                b.row_mut(i).scale_mut(1.0 / f);
            }
        }
        if converged {
            return b;
        }
    }
}

/// Largest distance between requested poles and the closest unused
/// eigenvalue, relative to `max(1, |pole|)`.
pub fn pole_mismatch(requested: &Poles, actual: &[Complex64]) -> f64 {
    let mut used = vec![false; actual.len()];
    let mut worst = 0.0_f64;
    for p in requested {
        let best = actual
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()));
        match best {
            Some((j, e)) => {
                used[j] = true;
                worst = worst.max((e - p).norm() / p.norm().max(1.0));
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// Estimate of `z` and of the internal coordinate `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObserverState {
    pub z_hat: [f64; 3],
    pub eta_hat: f64,
}

impl ObserverState {
    /// `z_hat = (y, 0, 0)`: only the supply pressure is measured.
    pub fn at_startup(y_meas: f64, eta_hat: f64) -> Self {
        Self { z_hat: [y_meas, 0.0, 0.0], eta_hat }
    }
}

/// Piecewise-constant reference `z* = (p_ref, 0, 0)`.
pub fn reference_state(p_ref: f64, envelope: &Envelope) -> Result<[f64; 3]> {
    if !(envelope.p_sup_min..=envelope.p_sup_max).contains(&p_ref) {
        return Err(BrakeError::EnvelopeViolation { what: "p_ref", value: p_ref });
    }
    Ok([p_ref, 0.0, 0.0])
}

pub fn control_nu(gains: &ControllerGains, z_star: &[f64; 3], z_hat: &[f64; 3]) -> f64 {
    (0..3).map(|i| gains.k_z[i] * (z_star[i] - z_hat[i])).sum()
}

pub fn observer_deriv(z_hat: &[f64; 3], nu: f64, y_meas: f64, gains: &ObserverGains) -> [f64; 3] {
    let innovation = y_meas - z_hat[0];
    [z_hat[1] + gains.k_obs[0] * innovation, z_hat[2] + gains.k_obs[1] * innovation, nu + gains.k_obs[2] * innovation]
}

pub fn eta_hat_deriv(z_hat2: f64, regime: ValveRegime, params: &PlantParams) -> f64 {
    q_of(z_hat2, regime, params)
}
