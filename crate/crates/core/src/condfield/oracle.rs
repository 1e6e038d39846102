//! Monte-Carlo oracles for the closed-form field.
//!
//! These estimators share no code path with the closed-form posterior. They
//! estimate `E[x₀ | x_t = x]` by self-normalised importance sampling against
//! the target `p(x₀) N(x; a x₀, b² I)`, and map it to a velocity through the
//! implied noise `ε = (x − a x₀) / b`. No kernel bandwidth is involved.
//!
//! Draws alternate between two proposals: the prompt's mixture `p(x₀)` (even
//! sample indices) and the likelihood viewed as a density in `x₀`,
//! `N(x₀; x / a, (b / a)² I)` (odd indices). Weights follow the balance
//! heuristic `p·ℓ / (½ p + ½ ℓ)`, which stays efficient both at large `t`
//! (broad likelihood) and at small `t` (sharp likelihood).

use alloc::vec::Vec;

use super::mixture::log_sum_exp;
use super::{CondGmmField, Mixture, Prompt, VelocityModel};
use crate::error::{config_err, Error, Result};
use crate::latent::{check_dim, dot, Latent};
use crate::rng;
use crate::schedules::{Coeffs, Schedule, T_MAX, T_MIN};

/// Draws per random stream; stream `c` covers samples `c·CHUNK .. (c+1)·CHUNK`.
const CHUNK: usize = 1 << 16;

/// Required effective sample size (capped by the number of draws).
pub const MIN_ESS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub value: Latent,
    pub ess: f64,
    pub n_samples: usize,
}

/// Streaming self-normalised importance average with log-domain rescaling.
struct WeightedMean {
    max_log: f64,
    sum_w: f64,
    sum_w2: f64,
    sum_wx: Latent,
}

impl WeightedMean {
    fn new(dim: usize) -> Self {
        WeightedMean {
            max_log: f64::NEG_INFINITY,
            sum_w: 0.0,
            sum_w2: 0.0,
            sum_wx: Latent::zeros(dim),
        }
    }

    fn push(&mut self, log_w: f64, x: &[f64]) {
        if log_w > self.max_log {
            let scale = libm::exp(self.max_log - log_w);
            self.sum_w *= scale;
            self.sum_w2 *= scale * scale;
            for v in self.sum_wx.iter_mut() {
                *v *= scale;
            }
            self.max_log = log_w;
        }
        let w = libm::exp(log_w - self.max_log);
        self.sum_w += w;
        self.sum_w2 += w * w;
        self.sum_wx.axpy(w, x);
    }

    fn finish(self, n: usize) -> Result<(Latent, f64)> {
        if !(self.sum_w > 0.0) {
            return Err(Error::Unreliable {
                ess: 0.0,
                required: MIN_ESS.min(n as f64),
            });
        }
        let ess = self.sum_w * self.sum_w / self.sum_w2;
        let required = MIN_ESS.min(n as f64);
        // ESS is exactly 1 for a single draw; allow rounding below it.
        if ess < required * (1.0 - 1e-12) {
            return Err(Error::Unreliable { ess, required });
        }
        Ok((self.sum_wx.scale(1.0 / self.sum_w), ess))
    }
}

fn log_likelihood(x: &[f64], x0: &[f64], co: &Coeffs) -> f64 {
    let r: Vec<f64> = x.iter().zip(x0).map(|(xi, mi)| xi - co.a * mi).collect();
    -0.5 * dot(&r, &r) / (co.b * co.b)
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Normalised `log p(x₀)` under the prompt's mixture.
fn log_prior(mixture: &Mixture, x0: &[f64]) -> f64 {
    let terms: Vec<f64> = mixture
        .components()
        .iter()
        .map(|c| {
            let mut l = libm::log(c.weight);
            for ((xi, mi), vi) in x0.iter().zip(&c.mean).zip(&c.var) {
                let r = xi - mi;
                l -= 0.5 * (LN_2PI + libm::log(*vi) + r * r / vi);
            }
            l
        })
        .collect();
    log_sum_exp(&terms)
}

/// Normalised `log N(x₀; x / a, (b / a)² I)`.
fn log_likelihood_in_x0(x: &[f64], x0: &[f64], co: &Coeffs) -> f64 {
    let s = co.b / co.a;
    let d = x.len() as f64;
    log_likelihood(x, x0, co) - d * (0.5 * LN_2PI + libm::log(s))
}

fn velocity_from_x0_mean(x: &[f64], x0: &[f64], co: &Coeffs) -> Latent {
    Latent(
        x.iter()
            .zip(x0)
            .map(|(xi, mi)| co.a_dot * mi + co.b_dot * (xi - co.a * mi) / co.b)
            .collect(),
    )
}

fn estimate_x0(
    field: &CondGmmField,
    x: &[f64],
    t: f64,
    prompt: Prompt,
    n_samples: usize,
    seed: u64,
) -> Result<(Latent, f64, Coeffs)> {
    if n_samples == 0 {
        return Err(config_err("the Monte-Carlo oracle needs n_samples >= 1"));
    }
    check_dim(x, field.dim())?;
    let co = field.schedule().eval_interior(t)?;
    let mixture = field.mixture(prompt)?;
    let mut acc = WeightedMean::new(field.dim());
    let mut done = 0;
    let mut chunk = 0u64;
    while done < n_samples {
        let mut rng = rng::stream(seed, chunk);
        let take = CHUNK.min(n_samples - done);
        for j in 0..take {
            let x0 = if (done + j) % 2 == 0 {
                mixture.sample(&mut rng)
            } else {
                let z = rng::standard_normal(&mut rng, x.len());
                Latent(x.iter().zip(z.iter()).map(|(xi, zi)| (xi + co.b * zi) / co.a).collect())
            };
            let lp = log_prior(mixture, &x0);
            let ll = log_likelihood_in_x0(x, &x0, &co);
            let log_w = lp + ll - (log_sum_exp(&[lp, ll]) - core::f64::consts::LN_2);
            acc.push(log_w, &x0);
        }
        done += take;
        chunk += 1;
    }
    let (mean, ess) = acc.finish(n_samples)?;
    Ok((mean, ess, co))
}

/// Monte-Carlo estimate of `v(x, t, prompt)`; deterministic given `seed`.
pub fn mc_velocity_oracle(
    field: &CondGmmField,
    x: &[f64],
    t: f64,
    prompt: Prompt,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let (mean, ess, co) = estimate_x0(field, x, t, prompt, n_samples, seed)?;
    Ok(McEstimate {
        value: velocity_from_x0_mean(x, &mean, &co),
        ess,
        n_samples,
    })
}

/// Monte-Carlo estimate of `E[x₀ | x_t = x, prompt]`.
pub fn mc_posterior_x0(
    field: &CondGmmField,
    x: &[f64],
    t: f64,
    prompt: Prompt,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let (mean, ess, _) = estimate_x0(field, x, t, prompt, n_samples, seed)?;
    Ok(McEstimate {
        value: mean,
        ess,
        n_samples,
    })
}

/// The oracle's estimator applied to caller-supplied data draws `x₀`.
pub fn mc_velocity_from_draws(
    schedule: &Schedule,
    x: &[f64],
    t: f64,
    draws: &[Latent],
) -> Result<McEstimate> {
    if draws.is_empty() {
        return Err(config_err("at least one draw is required"));
    }
    let co = schedule.eval_interior(t)?;
    let mut acc = WeightedMean::new(x.len());
    for x0 in draws {
        check_dim(x0, x.len())?;
        acc.push(log_likelihood(x, x0, &co), x0);
    }
    let (mean, ess) = acc.finish(draws.len())?;
    Ok(McEstimate {
        value: velocity_from_x0_mean(x, &mean, &co),
        ess,
        n_samples: draws.len(),
    })
}

/// Flow-matching loss difference between a perturbed field `v + δ` and the
/// closed-form field, on common random numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfmGap {
    /// `L(v + δ) − L(v)`.
    pub gap: f64,
    pub gap_std_err: f64,
    /// Mean of `‖δ‖²`.
    pub delta_sq: f64,
    /// Mean of the cross term `2 δ · (v − ẋ_t)`, zero in expectation.
    pub cross: f64,
    pub cross_std_err: f64,
}

/// Monte-Carlo flow-matching gap for the perturbation `δ(x_t, t)`, with
/// `t ~ U[T_MIN, T_MAX]`, `x₀ ~ p(· | prompt)`, `ε ~ N(0, I)`.
pub fn cfm_gap(
    field: &CondGmmField,
    prompt: Prompt,
    n_samples: usize,
    perturbation: &dyn Fn(&[f64], f64) -> Latent,
    seed: u64,
) -> Result<CfmGap> {
    if n_samples < 100 {
        return Err(config_err("cfm_gap needs n_samples >= 100"));
    }
    let mixture = field.mixture(prompt)?;
    let d = field.dim();
    let (mut g_sum, mut g_sq, mut c_sum, mut c_sq, mut d_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n_samples {
        let mut rng = rng::stream(seed, i as u64);
        let t = T_MIN + (T_MAX - T_MIN) * rand::Rng::random::<f64>(&mut rng);
        let x0 = mixture.sample(&mut rng);
        let eps = rng::standard_normal(&mut rng, d);
        let co = field.schedule().eval_interior(t)?;
        let xt = x0.lincomb(co.a, &eps, co.b);
        let target = x0.lincomb(co.a_dot, &eps, co.b_dot);
        let resid = field.velocity(&xt, t, prompt)?.sub(&target);
        let delta = perturbation(&xt, t);
        check_dim(&delta, d)?;
        let dsq = delta.norm_sq();
        let cross = 2.0 * dot(&delta, &resid);
        let g = dsq + cross;
        g_sum += g;
        g_sq += g * g;
        c_sum += cross;
        c_sq += cross * cross;
        d_sum += dsq;
    }
    let n = n_samples as f64;
    let std_err = |sum: f64, sq: f64| {
        let mean = sum / n;
        libm::sqrt(((sq / n - mean * mean).max(0.0)) / (n - 1.0))
    };
    Ok(CfmGap {
        gap: g_sum / n,
        gap_std_err: std_err(g_sum, g_sq),
        delta_sq: d_sum / n,
        cross: c_sum / n,
        cross_std_err: std_err(c_sum, c_sq),
    })
}
