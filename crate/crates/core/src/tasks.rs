//! Ready-made editing tasks on closed-form fields.

use alloc::vec;
use alloc::vec::Vec;

use crate::condfield::{Component, CondGmmField, Mixture, Prompt, VelocityModel};
use crate::error::{config_err, Result};
use crate::latent::Latent;
use crate::rng;
use crate::schedules::Schedule;

/// RNG stream reserved for drawing source latents.
pub const SOURCE_STREAM: u64 = u64::MAX - 1;

/// Two Gaussian prompts, `N(0, Σ)` (source) and `N(μ, Σ)` (target), with
/// `Σ = I` unless given. The ideal edit of any source latent is the translation by `μ`.
#[derive(Debug, Clone)]
pub struct TranslationTask {
    pub field: CondGmmField,
    pub shift: Latent,
}

impl TranslationTask {
    pub const SOURCE: Prompt = Prompt::Cond(0);
    pub const TARGET: Prompt = Prompt::Cond(1);

    pub fn new(shift: Vec<f64>, schedule: Schedule) -> Result<Self> {
        let var = vec![1.0; shift.len()];
        Self::with_variance(shift, var, schedule)
    }

    /// Both prompts share the diagonal covariance `var`.
    pub fn with_variance(shift: Vec<f64>, var: Vec<f64>, schedule: Schedule) -> Result<Self> {
        if shift.is_empty() {
            return Err(config_err("translation vector must be non-empty"));
        }
        let d = shift.len();
        let src = Mixture::single(vec![0.0; d], var.clone())?;
        let tgt = Mixture::single(shift.clone(), var)?;
        let field = CondGmmField::new(vec![src, tgt], schedule)?;
        Ok(TranslationTask {
            field,
            shift: Latent(shift),
        })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Source latent for one seed, drawn from the source prompt.
    pub fn source_sample(&self, seed: u64) -> Latent {
        sample_prompt(&self.field, Self::SOURCE, seed, 1).expect("source prompt is registered").remove(0)
    }

    pub fn ideal_target(&self, x0_src: &[f64]) -> Latent {
        self.shift.add(x0_src)
    }
}

/// `n` draws from the prompt's mixture on the seed's source stream; the
/// first `k` draws do not depend on `n`.
pub fn sample_prompt(field: &CondGmmField, prompt: Prompt, seed: u64, n: usize) -> Result<Vec<Latent>> {
    let mixture = field.mixture(prompt)?;
    let mut r = rng::stream(seed, SOURCE_STREAM);
    Ok((0..n).map(|_| mixture.sample(&mut r)).collect())
}

/// Two prompts whose mixtures differ on the first `d1` coordinates only; the
/// remaining block is the same mixture under both.
#[derive(Debug, Clone)]
pub struct BlockTask {
    pub field: CondGmmField,
    pub split: usize,
}

impl BlockTask {
    pub const SOURCE: Prompt = Prompt::Cond(0);
    pub const TARGET: Prompt = Prompt::Cond(1);

    pub fn new(block_src: Mixture, block_tgt: Mixture, shared: Mixture, schedule: Schedule) -> Result<Self> {
        if block_src.dim() != block_tgt.dim() {
            return Err(config_err("edited blocks must share a dimension"));
        }
        let split = block_src.dim();
        let field = CondGmmField::new(
            vec![block_src.product(&shared), block_tgt.product(&shared)],
            schedule,
        )?;
        Ok(BlockTask { field, split })
    }

    /// Default instance: a two-component block moved to a single Gaussian,
    /// sharing a two-component background.
    pub fn standard(schedule: Schedule) -> Result<Self> {
        let block_src = Mixture::new(vec![
            Component::isotropic(0.5, vec![-1.0, 0.5], 0.4),
            Component::isotropic(0.5, vec![1.0, -0.5], 0.6),
        ])?;
        let block_tgt = Mixture::single(vec![2.0, 2.0], vec![0.5, 0.8])?;
        let shared = Mixture::new(vec![
            Component::new(0.3, vec![0.5, -1.0, 0.0], vec![0.3, 1.0, 0.7]),
            Component::new(0.7, vec![-0.5, 1.5, 1.0], vec![0.9, 0.2, 0.5]),
        ])?;
        BlockTask::new(block_src, block_tgt, shared, schedule)
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }
}
