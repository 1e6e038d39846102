use super::{combine_velocity, eps_from_x0, Prompt, VelocityModel};
use crate::error::Result;
use crate::latent::{check_dim, Latent, Matrix};
use crate::schedules::Schedule;

/// Exact marginal velocity of a point mass at `point`, identical for every
/// prompt: `v(x, t) = ȧ x* + ḃ (x − a x*) / b`.
///
/// Along any noising path of `x*` this returns the conditional velocity
/// `ȧ x* + ḃ ε`, and its noise view is `(x − a x*) / b`, so it is a model
/// that is exact on its own datum.
#[derive(Debug, Clone)]
pub struct DiracField {
    point: Latent,
    schedule: Schedule,
}

impl DiracField {
    pub fn new(point: Latent, schedule: Schedule) -> Self {
        DiracField { point, schedule }
    }

    pub fn point(&self) -> &Latent {
        &self.point
    }
}

impl VelocityModel for DiracField {
    fn dim(&self) -> usize {
        self.point.dim()
    }

    fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    fn velocity(&self, x: &[f64], t: f64, _prompt: Prompt) -> Result<Latent> {
        check_dim(x, self.dim())?;
        let co = self.schedule.eval_interior(t)?;
        let eps = eps_from_x0(x, &self.point, &co);
        Ok(combine_velocity(&self.point, &eps, &co))
    }

    fn velocity_jacobian(&self, x: &[f64], t: f64, _prompt: Prompt) -> Result<Matrix> {
        check_dim(x, self.dim())?;
        let co = self.schedule.eval_interior(t)?;
        Ok(Matrix::diagonal(&alloc::vec![co.b_dot / co.b; self.dim()]))
    }
}
