//! Distillation residuals and energies: SDS, RFDS, DDS and DVRF.
//!
//! All gradients are Jacobian-free: the network Jacobian `∂v/∂x` is replaced
//! by the identity. [`grad_dvrf_full`] keeps it, for comparison.
//!
//! Guidance: the target branch uses `ṽ(·, φ_tgt; w_tgt)` and the source branch
//! `ṽ(·, φ_src; w_src)`. Single-prompt energies (SDS, RFDS) use `w_tgt`.

use alloc::vec::Vec;

use crate::condfield::{eps_view, Prompt, VelocityModel};
use crate::error::{config_err, Result};
use crate::latent::{check_dim, Latent};
use crate::rng;
use crate::schedules::{weight_dvrf, Coeffs, ShiftRule, WeightMode};

/// Shared settings of the distillation energies.
#[derive(Debug, Clone, Copy)]
pub struct DistillContext<'a, M: VelocityModel + ?Sized> {
    pub field: &'a M,
    pub shift: ShiftRule,
    pub w_src: f64,
    pub w_tgt: f64,
    pub weight: WeightMode,
}

impl<'a, M: VelocityModel + ?Sized> DistillContext<'a, M> {
    pub fn new(field: &'a M) -> Self {
        DistillContext {
            field,
            shift: ShiftRule::Zero,
            w_src: 1.0,
            w_tgt: 1.0,
            weight: WeightMode::Unit,
        }
    }

    pub fn with_shift(mut self, shift: ShiftRule) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_guidance(mut self, w_src: f64, w_tgt: f64) -> Self {
        self.w_src = w_src;
        self.w_tgt = w_tgt;
        self
    }

    pub fn with_weight(mut self, weight: WeightMode) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_src", self.w_src), ("w_tgt", self.w_tgt)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(config_err(alloc::format!("{name} must be finite and >= 0")));
            }
        }
        self.shift.validate()
    }

    fn coeffs(&self, t: f64) -> Result<Coeffs> {
        self.field.schedule().eval_interior(t)
    }

    fn check(&self, xs: &[&[f64]]) -> Result<()> {
        self.validate()?;
        for x in xs {
            check_dim(x, self.field.dim())?;
        }
        Ok(())
    }
}

/// RFDS residual `ṽ(x_t, t, φ) − (ȧ x₀ + ḃ ε)` with `x_t = a x₀ + b ε`.
pub fn grad_rfds<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0: &[f64],
    prompt: Prompt,
    t: f64,
    eps: &[f64],
) -> Result<Latent> {
    ctx.check(&[x0, eps])?;
    let co = ctx.coeffs(t)?;
    let x0 = Latent::from(x0);
    let xt = x0.lincomb(co.a, eps, co.b);
    let v = ctx.field.cfg_velocity(&xt, t, prompt, ctx.w_tgt)?;
    Ok(v.sub(&x0.lincomb(co.a_dot, eps, co.b_dot)))
}

/// SDS residual `ε̂(x_t, t, φ) − ε` in the noise parameterisation.
pub fn grad_sds<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0: &[f64],
    prompt: Prompt,
    t: f64,
    eps: &[f64],
) -> Result<Latent> {
    ctx.check(&[x0, eps])?;
    let co = ctx.coeffs(t)?;
    let xt = Latent::from(x0).lincomb(co.a, eps, co.b);
    let v = ctx.field.cfg_velocity(&xt, t, prompt, ctx.w_tgt)?;
    Ok(eps_view(&v, &xt, &co)?.sub(eps))
}

/// DDS residual `ε̂(x_t^tgt, φ_tgt) − ε̂(x_t^src, φ_src)` with shared `ε`.
#[allow(clippy::too_many_arguments)]
pub fn grad_dds<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0_tgt: &[f64],
    x0_src: &[f64],
    p_tgt: Prompt,
    p_src: Prompt,
    t: f64,
    eps: &[f64],
) -> Result<Latent> {
    ctx.check(&[x0_tgt, x0_src, eps])?;
    let co = ctx.coeffs(t)?;
    let xt_tgt = Latent::from(x0_tgt).lincomb(co.a, eps, co.b);
    let xt_src = Latent::from(x0_src).lincomb(co.a, eps, co.b);
    let e_tgt = eps_view(&ctx.field.cfg_velocity(&xt_tgt, t, p_tgt, ctx.w_tgt)?, &xt_tgt, &co)?;
    let e_src = eps_view(&ctx.field.cfg_velocity(&xt_src, t, p_src, ctx.w_src)?, &xt_src, &co)?;
    Ok(e_tgt.sub(&e_src))
}

/// Everything one DVRF evaluation at `(t, ε)` produces.
#[derive(Debug, Clone)]
pub struct DvrfTerms {
    pub coeffs: Coeffs,
    pub shift: (f64, f64),
    /// `x_t^src = a x₀^src + b ε`.
    pub x_src: Latent,
    /// `x̂_t^tgt = a x₀^tgt + b ε + c (x₀^tgt − x₀^src)`.
    pub x_hat: Latent,
    /// `ṽ(x̂_t^tgt) − ṽ(x_t^src)`.
    pub vdiff: Latent,
    /// `vdiff − (ȧ + ċ)(x₀^tgt − x₀^src)`.
    pub residual: Latent,
    pub weight: f64,
}

impl DvrfTerms {
    /// Jacobian-free gradient `w(t) · residual`.
    pub fn grad(&self) -> Latent {
        self.residual.scale(self.weight)
    }
}

/// Evaluates both DVRF branches at step `k` of `n_total`.
#[allow(clippy::too_many_arguments)]
pub fn dvrf_terms<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0_tgt: &[f64],
    x0_src: &[f64],
    p_tgt: Prompt,
    p_src: Prompt,
    t: f64,
    k: usize,
    n_total: usize,
    eps: &[f64],
) -> Result<DvrfTerms> {
    ctx.check(&[x0_tgt, x0_src, eps])?;
    let co = ctx.coeffs(t)?;
    let (c, c_dot) = ctx.shift.eval(t, k, n_total)?;
    let weight = weight_dvrf(ctx.field.schedule(), &ctx.shift, t, k, n_total, ctx.weight)?;
    let tgt = Latent::from(x0_tgt);
    let delta = tgt.sub(x0_src);
    let x_src = Latent::from(x0_src).lincomb(co.a, eps, co.b);
    let mut x_hat = tgt.lincomb(co.a, eps, co.b);
    x_hat.axpy(c, &delta);
    let v_tgt = ctx.field.cfg_velocity(&x_hat, t, p_tgt, ctx.w_tgt)?;
    let v_src = ctx.field.cfg_velocity(&x_src, t, p_src, ctx.w_src)?;
    let vdiff = v_tgt.sub(&v_src);
    let residual = vdiff.lincomb(1.0, &delta, -(co.a_dot + c_dot));
    Ok(DvrfTerms {
        coeffs: co,
        shift: (c, c_dot),
        x_src,
        x_hat,
        vdiff,
        residual,
        weight,
    })
}

/// Approximated DVRF gradient
/// `w(t) (ṽ(x̂_t^tgt) − ṽ(x_t^src) − (ȧ + ċ)(x₀^tgt − x₀^src))`.
#[allow(clippy::too_many_arguments)]
pub fn grad_dvrf<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0_tgt: &[f64],
    x0_src: &[f64],
    p_tgt: Prompt,
    p_src: Prompt,
    t: f64,
    k: usize,
    n_total: usize,
    eps: &[f64],
) -> Result<Latent> {
    Ok(dvrf_terms(ctx, x0_tgt, x0_src, p_tgt, p_src, t, k, n_total, eps)?.grad())
}

/// Single-sample DVRF energy `‖residual‖²`; with the zero shift this is the
/// plain delta-velocity energy.
#[allow(clippy::too_many_arguments)]
pub fn energy_dvrf<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0_tgt: &[f64],
    x0_src: &[f64],
    p_tgt: Prompt,
    p_src: Prompt,
    t: f64,
    k: usize,
    n_total: usize,
    eps: &[f64],
) -> Result<f64> {
    Ok(dvrf_terms(ctx, x0_tgt, x0_src, p_tgt, p_src, t, k, n_total, eps)?
        .residual
        .norm_sq())
}

/// Exact `∂ energy_dvrf / ∂x₀^tgt = 2 ((a + c) J^T − (ȧ + ċ)) residual`, with
/// `J` the guided target-branch Jacobian at `x̂_t^tgt`.
#[allow(clippy::too_many_arguments)]
pub fn grad_dvrf_full<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0_tgt: &[f64],
    x0_src: &[f64],
    p_tgt: Prompt,
    p_src: Prompt,
    t: f64,
    k: usize,
    n_total: usize,
    eps: &[f64],
) -> Result<Latent> {
    let terms = dvrf_terms(ctx, x0_tgt, x0_src, p_tgt, p_src, t, k, n_total, eps)?;
    let jac = ctx.field.cfg_jacobian(&terms.x_hat, t, p_tgt, ctx.w_tgt)?;
    let (c, c_dot) = terms.shift;
    let co = terms.coeffs;
    let jt_r = jac.transpose_mul_vec(&terms.residual);
    Ok(jt_r.lincomb(2.0 * (co.a + c), &terms.residual, -2.0 * (co.a_dot + c_dot)))
}

/// Result of noise inversion by RFDS descent.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfdsResult {
    pub eps: Latent,
    /// `‖residual‖` before each update and after the last one.
    pub residual_norms: Vec<f64>,
}

/// Optimises a noise `ε` at fixed `t` so that `x₀` lies on its flow,
/// minimising the RFDS energy.
///
/// The ε-gradient is Jacobian-free like the x₀-gradient: the residual's
/// explicit dependence `−ḃ ε` is kept and `b ∂v/∂x` is dropped, so each
/// step is `ε ← ε + step · ḃ · residual`.
pub fn irfds_invert<M: VelocityModel + ?Sized>(
    ctx: &DistillContext<'_, M>,
    x0: &[f64],
    prompt: Prompt,
    t: f64,
    iters: usize,
    step_size: f64,
    seed: u64,
) -> Result<IrfdsResult> {
    if iters == 0 {
        return Err(config_err("irfds_invert needs iters >= 1"));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(config_err("irfds step size must be positive"));
    }
    let co = ctx.coeffs(t)?;
    let mut eps = rng::standard_normal(&mut rng::stream(seed, 0), ctx.field.dim());
    let mut residual_norms = Vec::with_capacity(iters + 1);
    for i in 0..iters {
        let r = grad_rfds(ctx, x0, prompt, t, &eps)?;
        residual_norms.push(r.norm());
        eps.axpy(step_size * co.b_dot, &r);
        if !eps.is_finite() {
            return Err(crate::Error::Divergence {
                step: i,
                reason: "non-finite noise iterate",
            });
        }
    }
    residual_norms.push(grad_rfds(ctx, x0, prompt, t, &eps)?.norm());
    Ok(IrfdsResult { eps, residual_norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condfield::{Component, CondGmmField, DiracField, Mixture};
    use crate::latent::{distance, norm};
    use crate::schedules::Schedule;
    use alloc::vec;
    use rand::Rng;

    fn field() -> CondGmmField {
        let p0 = Mixture::new(vec![
            Component::new(0.4, vec![1.0, -1.0, 0.3], vec![0.5, 0.8, 0.6]),
            Component::new(0.6, vec![-1.5, 0.5, 0.0], vec![0.7, 0.4, 0.9]),
        ])
        .unwrap();
        let p1 = Mixture::single(vec![0.5, 2.0, -1.0], vec![0.6, 0.6, 0.3]).unwrap();
        CondGmmField::new(vec![p0, p1], Schedule::RectifiedFlow).unwrap()
    }

    fn probe(seed: u64) -> (Latent, Latent, Latent, f64) {
        let mut r = rng::stream(seed, 99);
        let a = rng::standard_normal(&mut r, 3);
        let b = rng::standard_normal(&mut r, 3);
        let e = rng::standard_normal(&mut r, 3);
        let t = 0.05 + 0.9 * r.random::<f64>();
        (a, b, e, t)
    }

    #[test]
    fn residuals_vanish_for_an_exact_model_on_its_datum() {
        let x0 = Latent(vec![0.4, -1.0, 2.0]);
        let f = DiracField::new(x0.clone(), Schedule::RectifiedFlow);
        let ctx = DistillContext::new(&f);
        for s in 0..10 {
            let (_, _, eps, t) = probe(s);
            assert!(grad_rfds(&ctx, &x0, Prompt::Cond(0), t, &eps).unwrap().norm() < 1e-12);
            assert!(grad_sds(&ctx, &x0, Prompt::Cond(0), t, &eps).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn rfds_symmetric_zero() {
        let f = CondGmmField::new(vec![Mixture::single(vec![0.0], vec![1.0]).unwrap()], Schedule::RectifiedFlow).unwrap();
        let ctx = DistillContext::new(&f);
        assert_eq!(grad_rfds(&ctx, &[0.0], Prompt::Cond(0), 0.5, &[0.0]).unwrap().0, vec![0.0]);
    }

    #[test]
    fn sds_is_a_rescaled_rfds_residual() {
        let f = field();
        let ctx = DistillContext::new(&f).with_guidance(1.0, 3.0);
        for s in 0..20 {
            let (x0, _, eps, t) = probe(s);
            let co = f.schedule().eval(t).unwrap();
            let sds = grad_sds(&ctx, &x0, Prompt::Cond(1), t, &eps).unwrap();
            let rfds = grad_rfds(&ctx, &x0, Prompt::Cond(1), t, &eps).unwrap();
            let scaled = rfds.scale(co.a / co.wronskian());
            assert!(distance(&sds, &scaled) <= 1e-10 * norm(&sds).max(1.0));
        }
    }

    #[test]
    fn sds_matches_score_rederivation() {
        let f = field();
        let ctx = DistillContext::new(&f);
        for s in 0..20 {
            let (x0, _, eps, t) = probe(s);
            let co = f.schedule().eval(t).unwrap();
            let xt = x0.lincomb(co.a, &eps, co.b);
            let score = f.score(&xt, t, Prompt::Cond(0)).unwrap();
            let expect = score.lincomb(-co.b, &eps, -1.0);
            let sds = grad_sds(&ctx, &x0, Prompt::Cond(0), t, &eps).unwrap();
            assert!(distance(&sds, &expect) <= 1e-10 * norm(&expect).max(1.0));
        }
    }

    #[test]
    fn dds_identities() {
        let f = field();
        let ctx = DistillContext::new(&f).with_guidance(2.0, 5.0);
        let (x0, _, eps, t) = probe(1);
        // identical branches (same guidance on both) vanish exactly
        let same = DistillContext::new(&f).with_guidance(3.0, 3.0);
        assert_eq!(grad_dds(&same, &x0, &x0, Prompt::Cond(0), Prompt::Cond(0), t, &eps).unwrap(), Latent::zeros(3));
        for s in 0..20 {
            let (xt0, xs0, eps, t) = probe(s);
            let co = f.schedule().eval(t).unwrap();
            let dds = grad_dds(&ctx, &xt0, &xs0, Prompt::Cond(1), Prompt::Cond(0), t, &eps).unwrap();
            let xt = xt0.lincomb(co.a, &eps, co.b);
            let xs = xs0.lincomb(co.a, &eps, co.b);
            let vd = f.cfg_velocity(&xt, t, Prompt::Cond(1), 5.0).unwrap().sub(&f.cfg_velocity(&xs, t, Prompt::Cond(0), 2.0).unwrap());
            let expect = vd.lincomb(co.a / co.wronskian(), &xt.sub(&xs), -(co.a_dot / co.a) * co.a / co.wronskian());
            assert!(distance(&dds, &expect) <= 1e-10 * norm(&expect).max(1.0));
        }
    }

    #[test]
    fn dds_points_along_mean_shift() {
        let mu_src = vec![0.0, 0.0, 0.0];
        let mu_tgt = vec![4.0, -3.0, 2.0];
        let f = CondGmmField::new(
            vec![Mixture::single(mu_src.clone(), vec![1.0; 3]).unwrap(), Mixture::single(mu_tgt.clone(), vec![1.0; 3]).unwrap()],
            Schedule::RectifiedFlow,
        )
        .unwrap();
        let ctx = DistillContext::new(&f);
        let dir = Latent(mu_tgt).sub(&mu_src);
        for s in 0..10 {
            let (x0, _, eps, _) = probe(s);
            let g = grad_dds(&ctx, &x0, &x0, Prompt::Cond(1), Prompt::Cond(0), 0.5, &eps).unwrap();
            // ε̂ rises toward the source along the shift, so the descent
            // direction −g points at the target mean.
            let cos = -crate::latent::dot(&g, &dir) / (g.norm() * dir.norm());
            assert!(cos > 0.99, "cos {cos}");
        }
    }

    #[test]
    fn dvrf_reduces_to_dds_without_shift() {
        let f = field();
        for (ws, wt) in [(1.0, 1.0), (2.0, 6.0)] {
            let ctx = DistillContext::new(&f).with_guidance(ws, wt);
            for s in 0..50 {
                let (xt0, xs0, eps, t) = probe(s);
                let co = f.schedule().eval(t).unwrap();
                let dvrf = grad_dvrf(&ctx, &xt0, &xs0, Prompt::Cond(1), Prompt::Cond(0), t, 0, 1, &eps).unwrap();
                let dds = grad_dds(&ctx, &xt0, &xs0, Prompt::Cond(1), Prompt::Cond(0), t, &eps).unwrap();
                let mapped = dds.scale(co.wronskian() / co.a);
                assert!(distance(&dvrf, &mapped) <= 1e-10 * norm(&mapped), "probe {s}");
            }
        }
    }

    #[test]
    fn dvrf_at_initialisation_is_a_velocity_difference() {
        let f = field();
        let ctx = DistillContext::new(&f).with_shift(ShiftRule::LinearEta { eta: 0.7 }).with_guidance(2.0, 4.0);
        let (x0, _, eps, t) = probe(3);
        let co = f.schedule().eval(t).unwrap();
        let xt = x0.lincomb(co.a, &eps, co.b);
        let expect = f.cfg_velocity(&xt, t, Prompt::Cond(1), 4.0).unwrap().sub(&f.cfg_velocity(&xt, t, Prompt::Cond(0), 2.0).unwrap());
        let g = grad_dvrf(&ctx, &x0, &x0, Prompt::Cond(1), Prompt::Cond(0), t, 0, 1, &eps).unwrap();
        assert!(distance(&g, &expect) < 1e-14);
        let same = DistillContext::new(&f).with_shift(ShiftRule::LinearEta { eta: 0.7 });
        assert_eq!(grad_dvrf(&same, &x0, &x0, Prompt::Cond(0), Prompt::Cond(0), t, 0, 1, &eps).unwrap(), Latent::zeros(3));
        assert_eq!(energy_dvrf(&same, &x0, &x0, Prompt::Cond(0), Prompt::Cond(0), t, 0, 1, &eps).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_translation_invariant() {
        let shift = [0.7, -2.0, 1.3];
        let make = |off: &[f64]| {
            CondGmmField::new(
                vec![
                    Mixture::single(vec![off[0], off[1], off[2]], vec![0.8; 3]).unwrap(),
                    Mixture::single(vec![1.0 + off[0], -1.0 + off[1], 0.5 + off[2]], vec![0.8; 3]).unwrap(),
                ],
                Schedule::RectifiedFlow,
            )
            .unwrap()
        };
        let (f0, f1) = (make(&[0.0; 3]), make(&shift));
        let c0 = DistillContext::new(&f0).with_shift(ShiftRule::Progressive).with_guidance(1.5, 4.0);
        let c1 = DistillContext::new(&f1).with_shift(ShiftRule::Progressive).with_guidance(1.5, 4.0);
        for s in 0..10 {
            let (xt0, xs0, eps, t) = probe(s);
            let e0 = energy_dvrf(&c0, &xt0, &xs0, Prompt::Cond(1), Prompt::Cond(0), t, 7, 20, &eps).unwrap();
            let e1 = energy_dvrf(&c1, &xt0.add(&shift), &xs0.add(&shift), Prompt::Cond(1), Prompt::Cond(0), t, 7, 20, &eps).unwrap();
            assert!((e0 - e1).abs() <= 1e-9 * e0.max(1.0), "{e0} vs {e1}");
        }
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let f = field();
        let ctx = DistillContext::new(&f).with_shift(ShiftRule::LinearEta { eta: 0.5 }).with_guidance(1.0, 2.5);
        let h = 1e-5;
        for s in 0..10 {
            let (xt0, xs0, eps, t) = probe(s);
            let full = grad_dvrf_full(&ctx, &xt0, &xs0, Prompt::Cond(1), Prompt::Cond(0), t, 0, 1, &eps).unwrap();
            let mut fd = Latent::zeros(3);
            for i in 0..3 {
                let (mut hi, mut lo) = (xt0.clone(), xt0.clone());
                hi[i] += h;
                lo[i] -= h;
                let e = |x: &Latent| energy_dvrf(&ctx, x, &xs0, Prompt::Cond(1), Prompt::Cond(0), t, 0, 1, &eps).unwrap();
                fd[i] = (e(&hi) - e(&lo)) / (2.0 * h);
            }
            assert!(distance(&fd, &full) <= 1e-6 * norm(&full), "probe {s}: {fd:?} vs {full:?}");
        }
    }

    #[test]
    fn gradients_are_permutation_equivariant() {
        let f = field();
        let perm = [2usize, 0, 1];
        let permute = |x: &[f64]| Latent(perm.iter().map(|&i| x[i]).collect());
        let pf = CondGmmField::new(
            f.conditions()
                .iter()
                .map(|m| {
                    Mixture::new(
                        m.components()
                            .iter()
                            .map(|c| Component::new(c.weight, permute(&c.mean).0, permute(&c.var).0))
                            .collect(),
                    )
                    .unwrap()
                })
                .collect(),
            Schedule::RectifiedFlow,
        )
        .unwrap();
        let ctx = DistillContext::new(&f).with_shift(ShiftRule::Progressive).with_guidance(2.0, 3.0);
        let pctx = DistillContext::new(&pf).with_shift(ShiftRule::Progressive).with_guidance(2.0, 3.0);
        for s in 0..10 {
            let (xt0, xs0, eps, t) = probe(s);
            let g = grad_dvrf(&ctx, &xt0, &xs0, Prompt::Cond(1), Prompt::Cond(0), t, 3, 9, &eps).unwrap();
            let pg = grad_dvrf(&pctx, &permute(&xt0), &permute(&xs0), Prompt::Cond(1), Prompt::Cond(0), t, 3, 9, &permute(&eps)).unwrap();
            assert!(distance(&permute(&g), &pg) < 1e-12);
            let d = grad_dds(&ctx, &xt0, &xs0, Prompt::Cond(1), Prompt::Cond(0), t, &eps).unwrap();
            let pd = grad_dds(&pctx, &permute(&xt0), &permute(&xs0), Prompt::Cond(1), Prompt::Cond(0), t, &permute(&eps)).unwrap();
            assert!(distance(&permute(&d), &pd) < 1e-12);
        }
    }

    #[test]
    fn irfds_behaviour() {
        let x0 = Latent(vec![0.4, -1.0, 2.0]);
        let dirac = DiracField::new(x0.clone(), Schedule::RectifiedFlow);
        let ctx = DistillContext::new(&dirac);
        let start = rng::standard_normal(&mut rng::stream(5, 0), 3);
        let res = irfds_invert(&ctx, &x0, Prompt::Cond(0), 0.6, 20, 0.1, 5).unwrap();
        assert!(distance(&res.eps, &start) < 1e-12);

        let g = CondGmmField::new(vec![Mixture::single(vec![0.5, -0.5, 1.0], vec![0.7; 3]).unwrap()], Schedule::RectifiedFlow).unwrap();
        let ctx = DistillContext::new(&g);
        let res = irfds_invert(&ctx, &[1.0, 0.3, -0.4], Prompt::Cond(0), 0.4, 200, 1e-2, 8).unwrap();
        assert!(res.residual_norms.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(res.residual_norms.last().unwrap() < &res.residual_norms[0]);
        let again = irfds_invert(&ctx, &[1.0, 0.3, -0.4], Prompt::Cond(0), 0.4, 200, 1e-2, 8).unwrap();
        assert_eq!(res, again);
        assert!(irfds_invert(&ctx, &[1.0, 0.3, -0.4], Prompt::Cond(0), 0.4, 0, 1e-2, 8).is_err());
    }
}
