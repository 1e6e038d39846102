//! The delta-velocity editing loop and the FlowEdit ODE.
//!
//! Starting from `x₀^tgt = x₀^src`, each step draws `B` noises shared by the
//! source and target branches, averages the weighted residual
//! `ṽ(x̂_t^tgt) − ṽ(x_t^src) − (ȧ + ċ)(x₀^tgt − x₀^src)` and hands it to the
//! optimiser.
//!
//! Under the rectified-flow path with `c_t = t` the factor `ȧ + ċ` is exactly
//! zero, SGD with Euler-matched rates then reproduces FlowEdit step for step.

mod optim;
mod schedule;

use alloc::vec::Vec;

pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use schedule::{euler_step_sizes, timestep_schedule, LrSchedule, TimestepKind, HUMP_TAIL_KNOTS};

use crate::condfield::{Prompt, VelocityModel};
use crate::distill::{dvrf_terms, DistillContext};
use crate::error::{config_err, Error, Result};
use crate::integrate::TimeGrid;
use crate::latent::{check_dim, Latent};
use crate::rng;
use crate::schedules::{check_clamped, ShiftRule, WeightMode, T_MAX, T_MIN};

/// Iterates whose norm exceeds this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Settings of one editing run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EditConfig {
    pub n_steps: usize,
    pub batch: usize,
    pub timesteps: TimestepKind,
    pub t_lo: f64,
    pub t_hi: f64,
    pub shift: ShiftRule,
    pub weight: WeightMode,
    pub w_src: f64,
    pub w_tgt: f64,
    pub optimizer: OptimizerKind,
    pub lr: LrSchedule,
    pub seed: u64,
}

impl Default for EditConfig {
    fn default() -> Self {
        EditConfig {
            n_steps: 50,
            batch: 1,
            timesteps: TimestepKind::Descending,
            t_lo: T_MIN,
            t_hi: T_MAX,
            shift: ShiftRule::Progressive,
            weight: WeightMode::Unit,
            w_src: 6.0,
            w_tgt: 16.5,
            optimizer: OptimizerKind::Sgd,
            lr: LrSchedule::hump_tail(DEFAULT_LR_BASE),
            seed: 0,
        }
    }
}

/// Base rate of the default hump-tail schedule. Over 50 steps the rates sum
/// to about 1, the time span of one full Euler pass.
pub const DEFAULT_LR_BASE: f64 = 0.025;

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(config_err("n_steps must be >= 1"));
        }
        if self.batch == 0 {
            return Err(config_err("batch must be >= 1"));
        }
        check_clamped(self.t_lo)?;
        check_clamped(self.t_hi)?;
        if !(self.t_lo < self.t_hi) {
            return Err(config_err("t_lo must be below t_hi"));
        }
        for (name, w) in [("w_src", self.w_src), ("w_tgt", self.w_tgt)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(config_err(alloc::format!("{name} must be finite and >= 0")));
            }
        }
        if self.timesteps == TimestepKind::Random && self.lr == LrSchedule::EulerMatched {
            return Err(config_err("euler_matched learning rate needs the descending scheduler"));
        }
        self.shift.validate()?;
        self.lr.validate()
    }
}

/// One optimisation step of an [`EditRecord`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub lr: f64,
    /// Batch-averaged gradient (for FlowEdit: the averaged velocity difference).
    pub grad: Latent,
    pub grad_norm: f64,
    /// Batch mean of `‖ṽ(x̂_t^tgt) − ṽ(x_t^src)‖²`.
    pub vdiff_sq: f64,
}

/// Full log of an editing run: `n_steps + 1` iterates and one record per step.
#[derive(Debug, Clone, PartialEq)]
pub struct EditRecord {
    pub iterates: Vec<Latent>,
    pub steps: Vec<StepRecord>,
    /// Number of velocity evaluations spent (`2 · B · N` before guidance).
    pub velocity_evals: usize,
}

impl EditRecord {
    pub fn final_latent(&self) -> &Latent {
        self.iterates.last().expect("records always hold the initial iterate")
    }
}

/// Batch-averaged DVRF gradient over the given noises, with the mean
/// squared velocity difference.
#[allow(clippy::too_many_arguments)]
pub fn dvrf_batch_gradient<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0_tgt: &[f64],
    x0_src: &[f64],
    p_tgt: Prompt,
    p_src: Prompt,
    t: f64,
    k: usize,
    n_total: usize,
    noises: &[Latent],
) -> Result<(Latent, f64)> {
    if noises.is_empty() {
        return Err(config_err("at least one noise sample is required"));
    }
    let inv_b = 1.0 / noises.len() as f64;
    let mut g = Latent::zeros(ctx.field.dim());
    let mut vdiff_sq = 0.0;
    for eps in noises {
        let terms = dvrf_terms(ctx, x0_tgt, x0_src, p_tgt, p_src, t, k, n_total, eps)?;
        g.axpy(terms.weight * inv_b, &terms.residual);
        vdiff_sq += terms.vdiff.norm_sq() * inv_b;
    }
    Ok((g, vdiff_sq))
}

fn step_noises(seed: u64, step: usize, batch: usize, dim: usize) -> Vec<Latent> {
    (0..batch).map(|i| rng::step_noise(seed, step, i, dim)).collect()
}

fn guard(x: &Latent, step: usize) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Divergence {
            step,
            reason: "non-finite iterate",
        });
    }
    if x.norm() > DIVERGENCE_NORM {
        return Err(Error::Divergence {
            step,
            reason: "iterate norm above 1e6",
        });
    }
    Ok(())
}

/// Runs the editing loop from `x0_src` toward `p_tgt`.
pub fn edit_dvrf<M: VelocityModel + ?Sized>(
    field: &M,
    cfg: &EditConfig,
    x0_src: &[f64],
    p_src: Prompt,
    p_tgt: Prompt,
) -> Result<EditRecord> {
    cfg.validate()?;
    check_dim(x0_src, field.dim())?;
    let ctx = DistillContext {
        field,
        shift: cfg.shift,
        w_src: cfg.w_src,
        w_tgt: cfg.w_tgt,
        weight: cfg.weight,
    };
    let n = cfg.n_steps;
    let times = timestep_schedule(cfg.timesteps, n, cfg.t_lo, cfg.t_hi, cfg.seed)?;
    let mut opt = Optimizer::new(cfg.optimizer, field.dim());
    let mut x = Latent::from(x0_src);
    let mut iterates = Vec::with_capacity(n + 1);
    let mut steps = Vec::with_capacity(n);
    iterates.push(x.clone());
    for (k, &t) in times.iter().enumerate() {
        let noises = step_noises(cfg.seed, k, cfg.batch, field.dim());
        let (g, vdiff_sq) = dvrf_batch_gradient(&ctx, &x, x0_src, p_tgt, p_src, t, k, n, &noises)?;
        let lr = cfg.lr.rate(k, n, &times)?;
        opt.step(&mut x, &g, lr);
        guard(&x, k)?;
        steps.push(StepRecord {
            t,
            lr,
            grad_norm: g.norm(),
            grad: g,
            vdiff_sq,
        });
        iterates.push(x.clone());
    }
    Ok(EditRecord {
        iterates,
        steps,
        velocity_evals: 2 * cfg.batch * n,
    })
}

/// Settings of the FlowEdit ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEditConfig {
    /// Reverse grid of evaluation times; step sizes follow [`euler_step_sizes`].
    pub grid: TimeGrid,
    pub batch: usize,
    pub w_src: f64,
    pub w_tgt: f64,
    pub seed: u64,
}

/// Euler integration of
/// `dx₀^tgt = [ṽ(x₀^tgt + x_t^src − x₀^src, φ_tgt) − ṽ(x_t^src, φ_src)] dt`
/// from `t_hi` down, averaging the drift over `batch` noises per step.
pub fn flowedit_baseline<M: VelocityModel + ?Sized>(
    field: &M,
    cfg: &FlowEditConfig,
    x0_src: &[f64],
    p_src: Prompt,
    p_tgt: Prompt,
) -> Result<EditRecord> {
    if cfg.batch == 0 {
        return Err(config_err("batch must be >= 1"));
    }
    if cfg.grid.direction() == Some(crate::integrate::Direction::Forward) {
        return Err(config_err("FlowEdit integrates on a reverse (descending) grid"));
    }
    check_dim(x0_src, field.dim())?;
    let times = cfg.grid.times();
    let dts = euler_step_sizes(times)?;
    let src = Latent::from(x0_src);
    let inv_b = 1.0 / cfg.batch as f64;
    let mut z = src.clone();
    let mut iterates = Vec::with_capacity(times.len() + 1);
    let mut steps = Vec::with_capacity(times.len());
    iterates.push(z.clone());
    for (k, (&t, &dt)) in times.iter().zip(&dts).enumerate() {
        let co = field.schedule().eval_interior(t)?;
        let mut drift = Latent::zeros(field.dim());
        let mut vdiff_sq = 0.0;
        for eps in step_noises(cfg.seed, k, cfg.batch, field.dim()) {
            let x_src = src.lincomb(co.a, &eps, co.b);
            let z_t = x_src.add(&z.sub(&src));
            let vd = field
                .cfg_velocity(&z_t, t, p_tgt, cfg.w_tgt)?
                .sub(&field.cfg_velocity(&x_src, t, p_src, cfg.w_src)?);
            vdiff_sq += vd.norm_sq() * inv_b;
            drift.axpy(inv_b, &vd);
        }
        z.axpy(-dt, &drift);
        guard(&z, k)?;
        steps.push(StepRecord {
            t,
            lr: dt,
            grad_norm: drift.norm(),
            grad: drift,
            vdiff_sq,
        });
        iterates.push(z.clone());
    }
    Ok(EditRecord {
        iterates,
        steps,
        velocity_evals: 2 * cfg.batch * times.len(),
    })
}

/// The editing configuration that coincides with FlowEdit on `fe`:
/// `c_t = t`, unit weight, SGD, Euler-matched rates on the same times.
pub fn flowedit_matched_config(fe: &FlowEditConfig) -> Result<EditConfig> {
    let times = fe.grid.times();
    let n = times.len();
    let (t_hi, t_lo) = (times[0], times[n - 1]);
    let cfg = EditConfig {
        n_steps: n,
        batch: fe.batch,
        timesteps: TimestepKind::Descending,
        t_lo: if n == 1 { T_MIN.min(t_hi - 1e-3) } else { t_lo },
        t_hi,
        shift: ShiftRule::LinearEta { eta: 1.0 },
        weight: WeightMode::Unit,
        w_src: fe.w_src,
        w_tgt: fe.w_tgt,
        optimizer: OptimizerKind::Sgd,
        lr: LrSchedule::EulerMatched,
        seed: fe.seed,
    };
    let ts = timestep_schedule(cfg.timesteps, n, cfg.t_lo, cfg.t_hi, cfg.seed)?;
    if ts != times {
        return Err(config_err(
            "FlowEdit grid is not the uniform descending schedule of its endpoints",
        ));
    }
    Ok(cfg)
}
