use alloc::format;
use alloc::vec::Vec;

use super::{combine_velocity, eps_from_x0, Prompt, VelocityModel};
use crate::error::{config_err, Error, Result};
use crate::latent::{check_dim, Latent, Matrix};
use crate::schedules::{Coeffs, Schedule};

/// Smallest admissible per-coordinate component variance.
pub const SIGMA_MIN_SQ: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    pub var: Vec<f64>,
}

impl Component {
    pub fn new(weight: f64, mean: Vec<f64>, var: Vec<f64>) -> Self {
        Component { weight, mean, var }
    }

    pub fn isotropic(weight: f64, mean: Vec<f64>, var: f64) -> Self {
        let d = mean.len();
        Component::new(weight, mean, alloc::vec![var; d])
    }
}

/// A diagonal Gaussian mixture with normalised weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    components: Vec<Component>,
}

impl Mixture {
    /// Validates and renormalises the weights (they must already sum to one
    /// within 1e-9).
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(config_err("a mixture needs at least one component"));
        };
        let dim = first.mean.len();
        if dim == 0 {
            return Err(config_err("mixture dimension must be positive"));
        }
        let mut total = 0.0;
        for (j, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.var.len() != dim {
                return Err(config_err(format!(
                    "component {j}: mean/var length must be {dim}"
                )));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(config_err(format!("component {j}: weight must be positive")));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(config_err(format!("component {j}: non-finite mean")));
            }
            if c.var.iter().any(|v| !(*v >= SIGMA_MIN_SQ && v.is_finite())) {
                return Err(config_err(format!(
                    "component {j}: variances must be finite and >= {SIGMA_MIN_SQ:e}"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(config_err(format!("mixture weights sum to {total}, not 1")));
        }
        let components = components
            .into_iter()
            .map(|mut c| {
                c.weight /= total;
                c
            })
            .collect();
        Ok(Mixture { components })
    }

    pub fn single(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        Self::new(alloc::vec![Component::new(1.0, mean, var)])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Product distribution over the concatenated coordinates.
    pub fn product(&self, other: &Mixture) -> Mixture {
        let mut components = Vec::with_capacity(self.components.len() * other.components.len());
        for p in &self.components {
            for q in &other.components {
                let mut mean = p.mean.clone();
                mean.extend_from_slice(&q.mean);
                let mut var = p.var.clone();
                var.extend_from_slice(&q.var);
                components.push(Component::new(p.weight * q.weight, mean, var));
            }
        }
        Mixture { components }
    }

    /// Same distribution translated by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Mixture {
        let components = self
            .components
            .iter()
            .map(|c| {
                let mean = c.mean.iter().zip(shift).map(|(m, s)| m + s).collect();
                Component::new(c.weight, mean, c.var.clone())
            })
            .collect();
        Mixture { components }
    }

    /// Draws one sample `x₀`.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Latent {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (j, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = j;
                break;
            }
        }
        let c = &self.components[pick];
        let z = crate::rng::standard_normal(rng, c.mean.len());
        Latent(
            c.mean
                .iter()
                .zip(&c.var)
                .zip(z.iter())
                .map(|((m, v), zi)| m + libm::sqrt(*v) * zi)
                .collect(),
        )
    }

    /// Posterior over `x₀` given `x_t = x` at coefficients `co`.
    pub fn posterior(&self, x: &[f64], co: &Coeffs) -> Posterior {
        let d = x.len();
        let n = self.components.len();
        let mut log_r = Vec::with_capacity(n);
        let mut means = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        let mut gains = Vec::with_capacity(n);
        for c in &self.components {
            let mut log_n = 0.0;
            let mut m = Vec::with_capacity(d);
            let mut g = Vec::with_capacity(d);
            let mut k = Vec::with_capacity(d);
            for i in 0..d {
                let s = co.a * co.a * c.var[i] + co.b * co.b;
                let resid = x[i] - co.a * c.mean[i];
                log_n -= 0.5 * (LN_2PI + libm::log(s) + resid * resid / s);
                let gain = co.a * c.var[i] / s;
                m.push(c.mean[i] + gain * resid);
                g.push(-resid / s);
                k.push(gain);
            }
            log_r.push(libm::log(c.weight) + log_n);
            means.push(m);
            grads.push(g);
            gains.push(k);
        }
        let lse = log_sum_exp(&log_r);
        let resp: Vec<f64> = log_r.iter().map(|l| libm::exp(l - lse)).collect();
        let mut x0_mean = Latent::zeros(d);
        for (r, m) in resp.iter().zip(&means) {
            x0_mean.axpy(*r, m);
        }
        Posterior {
            resp,
            means,
            grads,
            gains,
            x0_mean,
            log_density: lse,
        }
    }
}

/// Closed-form posterior quantities at one `(x, t)`.
#[derive(Debug, Clone)]
pub struct Posterior {
    /// Component responsibilities, summing to one.
    pub resp: Vec<f64>,
    /// Per-component posterior means `m_j`.
    pub means: Vec<Vec<f64>>,
    /// Per-component `∇ log N(x; a μ_j, a² σ_j² + b²)`.
    pub grads: Vec<Vec<f64>>,
    /// Per-component gains `a σ_j² / (a² σ_j² + b²)`.
    pub gains: Vec<Vec<f64>>,
    /// `E[x₀ | x_t = x]`.
    pub x0_mean: Latent,
    /// `log p_t(x)`.
    pub log_density: f64,
}

impl Posterior {
    /// `∇ log p_t(x) = Σ_j r_j ∇ log N_j(x)`.
    pub fn score(&self) -> Latent {
        let mut s = Latent::zeros(self.x0_mean.dim());
        for (r, g) in self.resp.iter().zip(&self.grads) {
            s.axpy(*r, g);
        }
        s
    }

    /// `∂E[x₀ | x_t = x] / ∂x = Σ r_j diag(k_j) + Σ r_j m_j (g_j − ḡ)^T`.
    pub fn x0_jacobian(&self) -> Matrix {
        let d = self.x0_mean.dim();
        let score = self.score();
        let mut jac = Matrix::zeros(d);
        for j in 0..self.resp.len() {
            let r = self.resp[j];
            for i in 0..d {
                jac[(i, i)] += r * self.gains[j][i];
            }
            let centered: Vec<f64> = self.grads[j].iter().zip(score.iter()).map(|(g, s)| g - s).collect();
            jac.add_outer(r, &self.means[j], &centered);
        }
        jac
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(xs.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

/// One diagonal Gaussian mixture per prompt over a shared schedule.
///
/// The null prompt's mixture is the equal-weight union of all conditional
/// mixtures.
#[derive(Debug, Clone)]
pub struct CondGmmField {
    dim: usize,
    conds: Vec<Mixture>,
    null: Mixture,
    schedule: Schedule,
}

impl CondGmmField {
    pub fn new(conds: Vec<Mixture>, schedule: Schedule) -> Result<Self> {
        let Some(first) = conds.first() else {
            return Err(config_err("a field needs at least one prompt"));
        };
        let dim = first.dim();
        if let Some(bad) = conds.iter().position(|m| m.dim() != dim) {
            return Err(config_err(format!("prompt {bad}: dimension differs from prompt 0")));
        }
        let share = 1.0 / conds.len() as f64;
        let null = Mixture {
            components: conds
                .iter()
                .flat_map(|m| m.components.iter())
                .map(|c| Component::new(c.weight * share, c.mean.clone(), c.var.clone()))
                .collect(),
        };
        Ok(CondGmmField {
            dim,
            conds,
            null,
            schedule,
        })
    }

    pub fn num_prompts(&self) -> usize {
        self.conds.len()
    }

    pub fn with_schedule(&self, schedule: Schedule) -> Self {
        CondGmmField {
            schedule,
            ..self.clone()
        }
    }

    pub fn mixture(&self, prompt: Prompt) -> Result<&Mixture> {
        match prompt {
            Prompt::Null => Ok(&self.null),
            Prompt::Cond(id) => self.conds.get(id).ok_or(Error::UnknownPrompt {
                id,
                registered: self.conds.len(),
            }),
        }
    }

    pub fn conditions(&self) -> &[Mixture] {
        &self.conds
    }

    /// Closed-form posterior at `(x, t, prompt)`.
    pub fn posterior(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<(Posterior, Coeffs)> {
        check_dim(x, self.dim)?;
        let co = self.schedule.eval_interior(t)?;
        Ok((self.mixture(prompt)?.posterior(x, &co), co))
    }

    pub fn posterior_x0(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<Latent> {
        Ok(self.posterior(x, t, prompt)?.0.x0_mean)
    }

    pub fn posterior_eps(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<Latent> {
        let (post, co) = self.posterior(x, t, prompt)?;
        Ok(eps_from_x0(x, &post.x0_mean, &co))
    }

    /// `∇_x log p_t(x | prompt)`.
    pub fn score(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<Latent> {
        Ok(self.posterior(x, t, prompt)?.0.score())
    }

    pub fn log_density(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<f64> {
        Ok(self.posterior(x, t, prompt)?.0.log_density)
    }
}

impl VelocityModel for CondGmmField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    fn velocity(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<Latent> {
        let (post, co) = self.posterior(x, t, prompt)?;
        let eps = eps_from_x0(x, &post.x0_mean, &co);
        Ok(combine_velocity(&post.x0_mean, &eps, &co))
    }

    fn velocity_jacobian(&self, x: &[f64], t: f64, prompt: Prompt) -> Result<Matrix> {
        let (post, co) = self.posterior(x, t, prompt)?;
        // v = (ȧ − ḃa/b) E[x₀|x] + (ḃ/b) x
        let mut jac = Matrix::diagonal(&alloc::vec![co.b_dot / co.b; self.dim]);
        jac.axpy(co.a_dot - co.b_dot * co.a / co.b, &post.x0_jacobian());
        Ok(jac)
    }
}
