//! Closed-form conditional velocity fields.
//!
//! A [`CondGmmField`] holds one diagonal Gaussian mixture per prompt. With
//! `x_t = a x₀ + b ε`, `ε ~ N(0, I)`, the marginal of `x_t` under component
//! `j` is `N(a μ_j, a² σ_j² + b²)`, so the posterior over `x₀` given `x_t` is
//! available in closed form and so is the flow-matching optimal velocity
//! `v = ȧ E[x₀ | x_t] + ḃ E[ε | x_t]`.

mod dirac;
mod mixture;
pub mod oracle;

pub use dirac::DiracField;
pub use mixture::{Component, CondGmmField, Mixture, Posterior, SIGMA_MIN_SQ};

use crate::error::{Error, Result};
use crate::latent::{Latent, Matrix};
use crate::schedules::{Coeffs, Schedule};

/// A conditioning prompt. `Null` is the unconditional prompt ∅.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Prompt {
    Null,
    Cond(usize),
}

/// A velocity field `v(x, t, φ)` standing in for a pretrained flow model.
pub trait VelocityModel {
    fn dim(&self) -> usize;

    fn schedule(&self) -> &Schedule;

    fn velocity(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<Latent>;

    /// `∂v/∂x` at `(x, t, prompt)`.
    fn velocity_jacobian(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<Matrix>;

    /// Classifier-free guidance `v_∅ + w (v_φ − v_∅)`.
    fn cfg_velocity(&self, x: &[f64], t: f64, prompt: Prompt, w: f64) -> Result<Latent> {
        check_guidance(w)?;
        if prompt == Prompt::Null {
            if w != 1.0 {
                log::warn!("guidance scale {w} on the null prompt has no effect");
            }
            return self.velocity(x, t, Prompt::Null);
        }
        if w == 1.0 {
            return self.velocity(x, t, prompt);
        }
        let v_null = self.velocity(x, t, Prompt::Null)?;
        if w == 0.0 {
            return Ok(v_null);
        }
        let v_cond = self.velocity(x, t, prompt)?;
        Ok(v_null.lincomb(1.0, &v_cond.sub(&v_null), w))
    }

    /// Jacobian of [`VelocityModel::cfg_velocity`].
    fn cfg_jacobian(&self, x: &[f64], t: f64, prompt: Prompt, w: f64) -> Result<Matrix> {
        check_guidance(w)?;
        if prompt == Prompt::Null || w == 1.0 {
            return self.velocity_jacobian(x, t, prompt);
        }
        let null = self.velocity_jacobian(x, t, Prompt::Null)?;
        if w == 0.0 {
            return Ok(null);
        }
        let cond = self.velocity_jacobian(x, t, prompt)?;
        let mut jac = Matrix::zeros(null.dim());
        jac.axpy(1.0 - w, &null);
        jac.axpy(w, &cond);
        Ok(jac)
    }

    /// Noise prediction of the guided field, via [`eps_view`].
    fn cfg_eps(&self, x: &[f64], t: f64, prompt: Prompt, w: f64) -> Result<Latent> {
        let v = self.cfg_velocity(x, t, prompt, w)?;
        eps_view(&v, x, &self.schedule().eval_interior(t)?)
    }
}

fn check_guidance(w: f64) -> Result<()> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Domain {
            what: "guidance scale",
            value: w,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(())
}

/// Converts a velocity prediction into the equivalent noise prediction:
/// `ε = a / (ḃa − ȧb) · (v − (ȧ/a) x)`.
pub fn eps_view(v: &[f64], x: &[f64], co: &Coeffs) -> Result<Latent> {
    let det = co.wronskian();
    if co.a.abs() < 1e-300 {
        return Err(Error::Singular { what: "a(t)", value: co.a });
    }
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(Error::Singular { what: "ḃa − ȧb", value: det });
    }
    let scale = co.a / det;
    let drift = co.a_dot / co.a;
    Ok(Latent(
        v.iter()
            .zip(x)
            .map(|(vi, xi)| scale * (vi - drift * xi))
            .collect(),
    ))
}

/// Inverse of [`eps_view`]: `v = (ḃa − ȧb)/a · ε + (ȧ/a) x`.
pub fn velocity_view(eps: &[f64], x: &[f64], co: &Coeffs) -> Result<Latent> {
    if co.a.abs() < 1e-300 {
        return Err(Error::Singular { what: "a(t)", value: co.a });
    }
    let scale = co.wronskian() / co.a;
    let drift = co.a_dot / co.a;
    Ok(Latent(
        eps.iter()
            .zip(x)
            .map(|(ei, xi)| scale * ei + drift * xi)
            .collect(),
    ))
}

/// `E[ε | x_t] = (x − a E[x₀ | x_t]) / b`.
pub(crate) fn eps_from_x0(x: &[f64], x0: &[f64], co: &Coeffs) -> Latent {
    Latent(x.iter().zip(x0).map(|(xi, mi)| (xi - co.a * mi) / co.b).collect())
}

pub(crate) fn combine_velocity(x0: &[f64], eps: &[f64], co: &Coeffs) -> Latent {
    Latent(
        x0.iter()
            .zip(eps)
            .map(|(m, e)| co.a_dot * m + co.b_dot * e)
            .collect(),
    )
}
