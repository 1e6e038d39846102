use alloc::vec::Vec;

use rand::Rng;

use crate::error::{config_err, Result};
use crate::integrate::{Direction, TimeGrid};
use crate::rng;

/// Stream id reserved for random timestep draws.
const TIMESTEP_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TimestepKind {
    /// High noise first, uniformly down to `t_lo`.
    #[default]
    Descending,
    /// i.i.d. uniform draws in `[t_lo, t_hi]`.
    Random,
}

/// The `n` optimisation times visited by an editing run.
pub fn timestep_schedule(kind: TimestepKind, n: usize, t_lo: f64, t_hi: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(config_err("timestep schedule needs n >= 1"));
    }
    if !(t_lo < t_hi) {
        return Err(config_err(alloc::format!("t_lo ({t_lo}) must be below t_hi ({t_hi})")));
    }
    match kind {
        TimestepKind::Descending if n == 1 => Ok(alloc::vec![TimeGrid::single(t_hi)?.times()[0]]),
        TimestepKind::Descending => {
            Ok(TimeGrid::uniform(n - 1, t_lo, t_hi, Direction::Reverse)?.times().to_vec())
        }
        TimestepKind::Random => {
            let mut r = rng::stream(seed, TIMESTEP_STREAM);
            Ok((0..n).map(|_| t_lo + (t_hi - t_lo) * r.random::<f64>()).collect())
        }
    }
}

/// Step sizes `t_k − t_{k+1}` of a descending time list; the last step
/// repeats the previous spacing, and a single time integrates down to zero.
pub fn euler_step_sizes(times: &[f64]) -> Result<Vec<f64>> {
    let mut steps: Vec<f64> = times.windows(2).map(|w| w[0] - w[1]).collect();
    match (times.len(), steps.last().copied()) {
        (0, _) => return Err(config_err("no times given")),
        (1, _) => steps.push(times[0]),
        (_, Some(last)) => steps.push(last),
        _ => unreachable!(),
    }
    if steps.iter().any(|s| !(*s > 0.0)) {
        return Err(config_err("Euler-matched step sizes need strictly descending times"));
    }
    Ok(steps)
}

/// Default knots `(progress, multiple of base)` for the hump-tail rate:
/// small while latents are noisy, full rate over the second half, decayed
/// over the last tenth.
pub const HUMP_TAIL_KNOTS: [[f64; 2]; 4] = [[0.0, 0.3], [0.5, 1.0], [0.9, 1.0], [1.0, 0.5]];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LrSchedule {
    Constant {
        value: f64,
    },
    /// Piecewise-linear in progress `k / (N − 1)` through `knots`, scaled by `base`.
    HumpTail {
        base: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_knots"))]
        knots: Vec<[f64; 2]>,
    },
    /// The spacing of the descending time grid, as an Euler step would use.
    EulerMatched,
}

#[cfg(feature = "serde")]
fn default_knots() -> Vec<[f64; 2]> {
    HUMP_TAIL_KNOTS.to_vec()
}

impl LrSchedule {
    pub fn hump_tail(base: f64) -> Self {
        LrSchedule::HumpTail {
            base,
            knots: HUMP_TAIL_KNOTS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LrSchedule::Constant { value } if !(*value >= 0.0 && value.is_finite()) => {
                Err(config_err("constant learning rate must be finite and >= 0"))
            }
            LrSchedule::HumpTail { base, knots } => {
                if !(*base >= 0.0 && base.is_finite()) {
                    return Err(config_err("hump_tail base must be finite and >= 0"));
                }
                let ok = knots.len() >= 2
                    && knots[0][0] == 0.0
                    && knots[knots.len() - 1][0] == 1.0
                    && knots.windows(2).all(|w| w[1][0] > w[0][0])
                    && knots.iter().all(|k| k[1] >= 0.0 && k[1].is_finite());
                if !ok {
                    return Err(config_err(
                        "hump_tail knots must start at 0, end at 1, increase strictly and carry non-negative rates",
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Learning rate at step `k` of `n`; `times` is the run's timestep list.
    pub fn rate(&self, k: usize, n: usize, times: &[f64]) -> Result<f64> {
        self.validate()?;
        if k >= n {
            return Err(config_err("learning-rate step index out of range"));
        }
        match self {
            LrSchedule::Constant { value } => Ok(*value),
            LrSchedule::HumpTail { base, knots } => {
                let s = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
                let i = knots.windows(2).position(|w| s <= w[1][0]).unwrap_or(knots.len() - 2);
                let ([x0, y0], [x1, y1]) = (knots[i], knots[i + 1]);
                Ok(base * (y0 + (y1 - y0) * (s - x0) / (x1 - x0)))
            }
            LrSchedule::EulerMatched => {
                if times.len() != n {
                    return Err(config_err("euler_matched needs the full timestep list"));
                }
                Ok(euler_step_sizes(times)?[k])
            }
        }
    }
}
