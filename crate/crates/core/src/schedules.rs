//! Interpolation-path coefficients, shift rules and the DVRF weighting.
//!
//! A schedule describes the forward path `x_t = a(t) x_0 + b(t) ε`. Times live
//! in `[0, 1]`; operations that divide by `a` or `b` additionally require `t`
//! to lie in the clamp range `[T_MIN, T_MAX]`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};

pub const T_MIN: f64 = 0.01;
pub const T_MAX: f64 = 0.99;

/// Slack allowed when checking grid times that were produced by floating
/// point interpolation between the clamp endpoints.
const T_SLACK: f64 = 1e-12;

/// `(a, b, ȧ, ḃ)` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeffs {
    pub a: f64,
    pub b: f64,
    pub a_dot: f64,
    pub b_dot: f64,
}

impl Coeffs {
    /// `ḃa − ȧb`, the determinant of the ε ↔ v change of variables.
    pub fn wronskian(&self) -> f64 {
        self.b_dot * self.a - self.a_dot * self.b
    }
}

/// Discrete variance-preserving table `ᾱ_0 = 1, ᾱ_i = Π_{j≤i} (1 − β_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VpTable {
    alpha_bar: Vec<f64>,
}

impl VpTable {
    /// Linear-β construction with `steps` diffusion steps.
    pub fn linear_beta(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(config_err("vp_diffusion needs at least 2 steps"));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(config_err(
                "vp_diffusion betas must satisfy 0 < beta_start <= beta_end < 1",
            ));
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for i in 0..steps {
            let beta = beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64;
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Ok(VpTable { alpha_bar })
    }

    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(config_err("alpha_bar table needs at least 2 entries"));
        }
        if alpha_bar[0] != 1.0 {
            return Err(config_err("alpha_bar table must start at 1"));
        }
        let monotone = alpha_bar.windows(2).all(|w| w[1] <= w[0]);
        let in_range = alpha_bar.iter().all(|v| (0.0..=1.0).contains(v));
        if !monotone || !in_range {
            return Err(config_err(
                "alpha_bar table must be non-increasing within [0, 1]",
            ));
        }
        Ok(VpTable { alpha_bar })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Piecewise-linear `ᾱ(t)` and its slope, with `t = i / T` at knot `i`.
    fn eval(&self, t: f64) -> (f64, f64) {
        let steps = self.steps();
        let pos = t * steps as f64;
        let i = (libm::floor(pos) as usize).min(steps - 1);
        let frac = pos - i as f64;
        let (lo, hi) = (self.alpha_bar[i], self.alpha_bar[i + 1]);
        (lo + frac * (hi - lo), (hi - lo) * steps as f64)
    }
}

/// Noise path family.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// `a = 1 − t`, `b = t`.
    RectifiedFlow,
    /// `a = sqrt(ᾱ_t)`, `b = sqrt(1 − ᾱ_t)` from a discrete table.
    VpDiffusion(Arc<VpTable>),
}

impl Schedule {
    /// The usual DDPM table: 1000 steps, β linear in `[1e-4, 0.02]`.
    pub fn vp_default() -> Self {
        Schedule::VpDiffusion(Arc::new(
            VpTable::linear_beta(1000, 1e-4, 0.02).expect("static table parameters are valid"),
        ))
    }

    pub fn eval(&self, t: f64) -> Result<Coeffs> {
        check_unit(t)?;
        let t = t.clamp(0.0, 1.0);
        Ok(match self {
            Schedule::RectifiedFlow => Coeffs {
                a: 1.0 - t,
                b: t,
                a_dot: -1.0,
                b_dot: 1.0,
            },
            Schedule::VpDiffusion(table) => {
                let (ab, slope) = table.eval(t);
                let a = libm::sqrt(ab);
                let b = libm::sqrt(1.0 - ab);
                Coeffs {
                    a,
                    b,
                    a_dot: if a > 0.0 { slope / (2.0 * a) } else { f64::NEG_INFINITY },
                    b_dot: if b > 0.0 { -slope / (2.0 * b) } else { f64::INFINITY },
                }
            }
        })
    }

    /// `eval` restricted to the clamp range where `a` and `b` are both safely
    /// positive.
    pub fn eval_interior(&self, t: f64) -> Result<Coeffs> {
        check_clamped(t)?;
        self.eval(t.clamp(T_MIN, T_MAX))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::RectifiedFlow => "rectified_flow",
            Schedule::VpDiffusion(_) => "vp_diffusion",
        }
    }
}

fn check_unit(t: f64) -> Result<()> {
    if !(-T_SLACK..=1.0 + T_SLACK).contains(&t) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(())
}

/// Rejects times outside `[T_MIN, T_MAX]` (up to interpolation round-off).
pub fn check_clamped(t: f64) -> Result<()> {
    if !(T_MIN - T_SLACK..=T_MAX + T_SLACK).contains(&t) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            lo: T_MIN,
            hi: T_MAX,
        });
    }
    Ok(())
}

/// Shift coefficient family for the offset `c(t)(x₀^tgt − x₀^src)`.
///
/// The progressive rule uses `η_k = k/N` at optimisation step `k` of `N` and
/// treats it as constant within the step, so `ċ = k/N`. It is often described
/// as `c ≈ (1 − t) t` because a descending grid visits `t ≈ 1 − k/N` at step
/// `k`; the two only agree on that grid.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ShiftRule {
    Zero,
    LinearEta { eta: f64 },
    Progressive,
}

impl ShiftRule {
    pub fn validate(&self) -> Result<()> {
        if let ShiftRule::LinearEta { eta } = self {
            if !(*eta >= 0.0 && eta.is_finite()) {
                return Err(config_err("shift eta must be a finite non-negative number"));
            }
        }
        Ok(())
    }

    /// `(c(t), ċ(t))` at optimisation step `k` of `n_total`.
    pub fn eval(&self, t: f64, k: usize, n_total: usize) -> Result<(f64, f64)> {
        self.validate()?;
        check_unit(t)?;
        if k > n_total {
            return Err(config_err("shift step index exceeds the step count"));
        }
        Ok(match *self {
            ShiftRule::Zero => (0.0, 0.0),
            ShiftRule::LinearEta { eta } => (eta * t, eta),
            ShiftRule::Progressive => {
                if n_total == 0 {
                    return Err(config_err("progressive shift needs n_total >= 1"));
                }
                let eta = k as f64 / n_total as f64;
                (eta * t, eta)
            }
        })
    }

    pub fn label(&self) -> alloc::string::String {
        match self {
            ShiftRule::Zero => "zero".into(),
            ShiftRule::LinearEta { eta } => alloc::format!("linear_eta({eta})"),
            ShiftRule::Progressive => "progressive".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightMode {
    /// `w ≡ 1`, the usual distillation choice.
    #[default]
    Unit,
    /// `w(t) = 2(a + c − ȧ − ċ)`.
    Formula,
}

/// Time-dependent weight multiplying the DVRF residual.
pub fn weight_dvrf(
    schedule: &Schedule,
    shift: &ShiftRule,
    t: f64,
    k: usize,
    n_total: usize,
    mode: WeightMode,
) -> Result<f64> {
    let co = schedule.eval(t)?;
    let (c, c_dot) = shift.eval(t, k, n_total)?;
    Ok(match mode {
        WeightMode::Unit => 1.0,
        WeightMode::Formula => 2.0 * (co.a + c - co.a_dot - c_dot),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectified_flow_coefficients() {
        let rf = Schedule::RectifiedFlow;
        for (t, a, b) in [(0.25, 0.75, 0.25), (0.0, 1.0, 0.0), (1.0, 0.0, 1.0)] {
            let c = rf.eval(t).unwrap();
            assert_eq!((c.a, c.b, c.a_dot, c.b_dot), (a, b, -1.0, 1.0));
        }
        assert!(matches!(rf.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(rf.eval(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn rectified_flow_derivatives_match_central_differences() {
        let rf = Schedule::RectifiedFlow;
        let h = 1e-6;
        for i in 1..=100 {
            let t = i as f64 / 101.0;
            let (lo, hi, c) = (rf.eval(t - h).unwrap(), rf.eval(t + h).unwrap(), rf.eval(t).unwrap());
            assert!(((hi.a - lo.a) / (2.0 * h) - c.a_dot).abs() < 1e-8);
            assert!(((hi.b - lo.b) / (2.0 * h) - c.b_dot).abs() < 1e-8);
        }
    }

    #[test]
    fn vp_table_invariants() {
        let vp = Schedule::vp_default();
        let c0 = vp.eval(0.0).unwrap();
        assert_eq!((c0.a, c0.b), (1.0, 0.0));
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let c = vp.eval(i as f64 / 200.0).unwrap();
            assert!(c.a <= prev + 1e-15);
            assert!(c.a * c.a + c.b * c.b > 0.0);
            assert!((c.a * c.a + c.b * c.b - 1.0).abs() < 1e-12);
            prev = c.a;
        }
        // Off-knot derivative agrees with the interpolant's slope.
        let (t, h) = (0.3337, 1e-7);
        let (lo, hi, c) = (vp.eval(t - h).unwrap(), vp.eval(t + h).unwrap(), vp.eval(t).unwrap());
        assert!(((hi.a - lo.a) / (2.0 * h) - c.a_dot).abs() < 1e-6);
        assert!(((hi.b - lo.b) / (2.0 * h) - c.b_dot).abs() < 1e-6);
    }

    #[test]
    fn vp_table_rejects_bad_tables() {
        assert!(VpTable::from_alpha_bar(alloc::vec![1.0, 0.5, 0.7]).is_err());
        assert!(VpTable::from_alpha_bar(alloc::vec![0.9, 0.5]).is_err());
        assert!(VpTable::linear_beta(1, 1e-4, 0.02).is_err());
    }

    #[test]
    fn shift_rules() {
        assert_eq!(ShiftRule::Zero.eval(0.7, 3, 9).unwrap(), (0.0, 0.0));
        assert_eq!(ShiftRule::LinearEta { eta: 1.0 }.eval(0.4, 0, 1).unwrap(), (0.4, 1.0));
        assert_eq!(ShiftRule::Progressive.eval(0.5, 25, 50).unwrap(), (0.25, 0.5));
        assert!(matches!(
            ShiftRule::LinearEta { eta: -0.5 }.eval(0.4, 0, 1),
            Err(Error::Config(_))
        ));
        assert!(ShiftRule::Progressive.eval(0.5, 51, 50).is_err());
    }

    #[test]
    fn progressive_endpoints_match_other_rules() {
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert_eq!(
                ShiftRule::Progressive.eval(t, 0, 40).unwrap(),
                ShiftRule::Zero.eval(t, 0, 40).unwrap()
            );
            assert_eq!(
                ShiftRule::Progressive.eval(t, 40, 40).unwrap(),
                ShiftRule::LinearEta { eta: 1.0 }.eval(t, 40, 40).unwrap()
            );
        }
    }

    #[test]
    fn dvrf_weights() {
        let rf = Schedule::RectifiedFlow;
        let w = |s: ShiftRule, t, m| weight_dvrf(&rf, &s, t, 0, 1, m).unwrap();
        assert_eq!(w(ShiftRule::Zero, 0.5, WeightMode::Unit), 1.0);
        assert_eq!(w(ShiftRule::Zero, 0.5, WeightMode::Formula), 3.0);
        assert_eq!(w(ShiftRule::LinearEta { eta: 1.0 }, 0.0, WeightMode::Formula), 2.0);
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            let c = rf.eval(t).unwrap();
            assert_eq!(w(ShiftRule::Zero, t, WeightMode::Formula), 2.0 * (c.a - c.a_dot));
        }
    }
}
