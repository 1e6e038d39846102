//! ODE sampling, inversion, reconstruction error and DDIB translation.
//!
//! All integrators step `x_next = x + (t_next − t) · ṽ(x, t)` along a
//! [`TimeGrid`]; the grid's direction decides whether this generates
//! (t decreasing) or inverts (t increasing).

use alloc::vec::Vec;

use crate::condfield::{Prompt, VelocityModel};
use crate::error::{config_err, Error, Result};
use crate::latent::{distance, Latent};
use crate::schedules::{check_clamped, Schedule, T_MAX, T_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Increasing t, from data toward noise.
    Forward,
    /// Decreasing t, from noise toward data.
    Reverse,
}

/// Strictly monotone times in traversal order, inside the clamp range.
///
/// A grid with a single time has zero steps and no direction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(config_err("a time grid needs at least one time"));
        }
        for &t in &times {
            check_clamped(t)?;
        }
        let increasing = times.windows(2).all(|w| w[1] > w[0]);
        let decreasing = times.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(config_err("grid times must be strictly monotone"));
        }
        Ok(TimeGrid { times })
    }

    /// `n_steps` equal steps between `t_lo` and `t_hi`, traversed in `direction`.
    pub fn uniform(n_steps: usize, t_lo: f64, t_hi: f64, direction: Direction) -> Result<Self> {
        if n_steps == 0 {
            return Err(config_err("uniform grid needs n_steps >= 1"));
        }
        if !(t_lo < t_hi) {
            return Err(config_err("uniform grid needs t_lo < t_hi"));
        }
        let mut times: Vec<f64> = (0..=n_steps)
            .map(|i| {
                let s = i as f64 / n_steps as f64;
                t_lo * (1.0 - s) + t_hi * s
            })
            .collect();
        if direction == Direction::Reverse {
            times.reverse();
        }
        Self::new(times)
    }

    /// Uniform grid over the whole clamp range.
    pub fn uniform_default(n_steps: usize, direction: Direction) -> Result<Self> {
        Self::uniform(n_steps, T_MIN, T_MAX, direction)
    }

    pub fn single(t: f64) -> Result<Self> {
        Self::new(alloc::vec![t])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn direction(&self) -> Option<Direction> {
        match self.times.as_slice() {
            [a, b, ..] if b > a => Some(Direction::Forward),
            [_, _, ..] => Some(Direction::Reverse),
            _ => None,
        }
    }

    pub fn reversed(&self) -> TimeGrid {
        let mut times = self.times.clone();
        times.reverse();
        TimeGrid { times }
    }

    fn expect(&self, dir: Direction) -> Result<()> {
        match self.direction() {
            Some(d) if d != dir => Err(config_err(alloc::format!(
                "grid must be {} for this operation",
                if dir == Direction::Forward { "forward (t increasing)" } else { "reverse (t decreasing)" }
            ))),
            _ => Ok(()),
        }
    }
}

/// States visited along a grid, in traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Latent>,
}

impl Trajectory {
    pub fn last(&self) -> &Latent {
        self.states.last().expect("trajectories are never empty")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn check_finite(x: &Latent, step: usize) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Divergence {
            step,
            reason: "non-finite state",
        });
    }
    Ok(())
}

fn euler_along<M: VelocityModel + ?Sized>(
    model: &M,
    x_start: &[f64],
    prompt: Prompt,
    grid: &TimeGrid,
    cfg_w: f64,
) -> Result<Trajectory> {
    let times = grid.times().to_vec();
    let mut states = Vec::with_capacity(times.len());
    let mut x = Latent::from(x_start);
    x.check_dim(model.dim())?;
    states.push(x.clone());
    for (i, w) in times.windows(2).enumerate() {
        let v = model.cfg_velocity(&x, w[0], prompt, cfg_w)?;
        x.axpy(w[1] - w[0], &v);
        check_finite(&x, i + 1)?;
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Euler integration of `dx = ṽ dt` from the largest grid time down.
pub fn euler_generate<M: VelocityModel + ?Sized>(
    model: &M,
    x_start: &[f64],
    prompt: Prompt,
    grid: &TimeGrid,
    cfg_w: f64,
) -> Result<Trajectory> {
    grid.expect(Direction::Reverse)?;
    euler_along(model, x_start, prompt, grid, cfg_w)
}

/// Euler inversion toward noise: `x_{i+1} = x_i − (t_i − t_{i+1}) ṽ(x_i, t_i)`.
pub fn euler_invert<M: VelocityModel + ?Sized>(
    model: &M,
    x0: &[f64],
    prompt: Prompt,
    grid: &TimeGrid,
    cfg_w: f64,
) -> Result<Trajectory> {
    grid.expect(Direction::Forward)?;
    euler_along(model, x0, prompt, grid, cfg_w)
}

/// One deterministic DDIM move from `t_from` to `t_to` using the noise
/// prediction at `(x, t_from)`:
/// `x' = a(t_to) (x − b(t_from) ε̂) / a(t_from) + b(t_to) ε̂`.
pub fn ddim_step<M: VelocityModel + ?Sized>(
    model: &M,
    x: &[f64],
    t_from: f64,
    t_to: f64,
    prompt: Prompt,
    cfg_w: f64,
) -> Result<Latent> {
    if t_from == t_to {
        check_clamped(t_from)?;
        return Ok(Latent::from(x));
    }
    let from = model.schedule().eval_interior(t_from)?;
    let to = model.schedule().eval_interior(t_to)?;
    if from.a.abs() < 1e-300 {
        return Err(Error::Singular { what: "a(t)", value: from.a });
    }
    let eps = model.cfg_eps(x, t_from, prompt, cfg_w)?;
    let x0_hat = Latent::from(x).lincomb(1.0 / from.a, &eps, -from.b / from.a);
    Ok(x0_hat.lincomb(to.a, &eps, to.b))
}

fn ddim_along<M: VelocityModel + ?Sized>(
    model: &M,
    x_start: &[f64],
    prompt: Prompt,
    grid: &TimeGrid,
    cfg_w: f64,
) -> Result<Trajectory> {
    let times = grid.times().to_vec();
    let mut states = Vec::with_capacity(times.len());
    let mut x = Latent::from(x_start);
    x.check_dim(model.dim())?;
    states.push(x.clone());
    for (i, w) in times.windows(2).enumerate() {
        x = ddim_step(model, &x, w[0], w[1], prompt, cfg_w)?;
        check_finite(&x, i + 1)?;
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

pub fn ddim_invert<M: VelocityModel + ?Sized>(
    model: &M,
    x0: &[f64],
    prompt: Prompt,
    grid: &TimeGrid,
    cfg_w: f64,
) -> Result<Trajectory> {
    grid.expect(Direction::Forward)?;
    ddim_along(model, x0, prompt, grid, cfg_w)
}

pub fn ddim_generate<M: VelocityModel + ?Sized>(
    model: &M,
    x_start: &[f64],
    prompt: Prompt,
    grid: &TimeGrid,
    cfg_w: f64,
) -> Result<Trajectory> {
    grid.expect(Direction::Reverse)?;
    ddim_along(model, x_start, prompt, grid, cfg_w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ReconMode {
    RfEuler,
    Ddim,
}

/// Invert `x0` along the forward `grid`, reconstruct from the last state and
/// report `‖x̃_t − x_t‖₂` at every grid time except the last (where both
/// coincide). A zero-step grid reports a single zero.
pub fn reconstruction_error<M: VelocityModel + ?Sized>(
    model: &M,
    x0: &[f64],
    prompt: Prompt,
    grid: &TimeGrid,
    mode: ReconMode,
    cfg_w: f64,
) -> Result<Vec<(f64, f64)>> {
    grid.expect(Direction::Forward)?;
    if mode == ReconMode::Ddim && !matches!(model.schedule(), Schedule::VpDiffusion(_)) {
        return Err(config_err("ddim reconstruction requires a vp_diffusion schedule"));
    }
    if grid.n_steps() == 0 {
        return Ok(alloc::vec![(grid.times()[0], 0.0)]);
    }
    let (inv, rec) = match mode {
        ReconMode::RfEuler => {
            let inv = euler_invert(model, x0, prompt, grid, cfg_w)?;
            let rec = euler_generate(model, inv.last(), prompt, &grid.reversed(), cfg_w)?;
            (inv, rec)
        }
        ReconMode::Ddim => {
            let inv = ddim_invert(model, x0, prompt, grid, cfg_w)?;
            let rec = ddim_generate(model, inv.last(), prompt, &grid.reversed(), cfg_w)?;
            (inv, rec)
        }
    };
    let n = grid.n_steps();
    Ok((0..n)
        .map(|i| (inv.times[i], distance(&inv.states[i], &rec.states[n - i])))
        .collect())
}

/// Both legs of a DDIB translation: inversion under the source prompt, then
/// generation under the target prompt from the inverted noise.
pub fn ddib_paths<M: VelocityModel + ?Sized>(
    model: &M,
    x0_src: &[f64],
    p_src: Prompt,
    p_tgt: Prompt,
    grid: &TimeGrid,
    (w_src, w_tgt): (f64, f64),
) -> Result<(Trajectory, Trajectory)> {
    grid.expect(Direction::Forward)?;
    let inv = euler_invert(model, x0_src, p_src, grid, w_src)?;
    let gen = euler_generate(model, inv.last(), p_tgt, &grid.reversed(), w_tgt)?;
    Ok((inv, gen))
}

pub fn ddib_translate<M: VelocityModel + ?Sized>(
    model: &M,
    x0_src: &[f64],
    p_src: Prompt,
    p_tgt: Prompt,
    grid: &TimeGrid,
    cfg_pair: (f64, f64),
) -> Result<Latent> {
    let (_, gen) = ddib_paths(model, x0_src, p_src, p_tgt, grid, cfg_pair)?;
    Ok(gen.last().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condfield::{Component, CondGmmField, DiracField, Mixture};
    use crate::rng;
    use alloc::vec;

    fn gaussian(mean: Vec<f64>, var: f64) -> CondGmmField {
        let d = mean.len();
        CondGmmField::new(vec![Mixture::single(mean, vec![var; d]).unwrap()], Schedule::RectifiedFlow).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.3, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5]).is_err());
        assert!(TimeGrid::uniform(0, 0.1, 0.9, Direction::Forward).is_err());
        let g = TimeGrid::uniform_default(7, Direction::Reverse).unwrap();
        assert_eq!(g.times()[0], T_MAX);
        assert_eq!(*g.times().last().unwrap(), T_MIN);
        assert_eq!(g.direction(), Some(Direction::Reverse));
        assert_eq!(TimeGrid::single(0.5).unwrap().direction(), None);
    }

    #[test]
    fn zero_step_grids_return_the_input() {
        let f = gaussian(vec![1.0, 2.0], 1.0);
        let g = TimeGrid::single(0.7).unwrap();
        let x = [0.3, -0.4];
        assert_eq!(euler_generate(&f, &x, Prompt::Cond(0), &g, 1.0).unwrap().states, vec![Latent::from(&x[..])]);
        assert_eq!(euler_invert(&f, &x, Prompt::Cond(0), &g, 1.0).unwrap().states, vec![Latent::from(&x[..])]);
        assert_eq!(ddib_translate(&f, &x, Prompt::Cond(0), Prompt::Cond(0), &g, (1.0, 1.0)).unwrap(), Latent::from(&x[..]));
        assert_eq!(
            reconstruction_error(&f, &x, Prompt::Cond(0), &g, ReconMode::RfEuler, 1.0).unwrap(),
            vec![(0.7, 0.0)]
        );
    }

    #[test]
    fn direction_is_enforced() {
        let f = gaussian(vec![0.0], 1.0);
        let fwd = TimeGrid::uniform_default(4, Direction::Forward).unwrap();
        assert!(euler_generate(&f, &[0.0], Prompt::Cond(0), &fwd, 1.0).is_err());
        assert!(euler_invert(&f, &[0.0], Prompt::Cond(0), &fwd.reversed(), 1.0).is_err());
        assert!(reconstruction_error(&f, &[0.0], Prompt::Cond(0), &fwd, ReconMode::Ddim, 1.0).is_err());
    }

    #[test]
    fn linear_field_matches_scalar_recursion() {
        // N(0, 1): v(x, t) = (b − a) x / (a² + b²) per coordinate.
        let f = gaussian(vec![0.0, 0.0, 0.0], 1.0);
        let x0 = [0.7, -1.3, 2.1];
        let grid = TimeGrid::uniform_default(37, Direction::Forward).unwrap();
        let traj = euler_invert(&f, &x0, Prompt::Cond(0), &grid, 1.0).unwrap();
        for (c, &x0c) in x0.iter().enumerate() {
            let mut x = x0c;
            for (i, w) in grid.times().windows(2).enumerate() {
                let (a, b) = (1.0 - w[0], w[0]);
                x += (w[1] - w[0]) * (b - a) * x / (a * a + b * b);
                assert!((traj.states[i + 1][c] - x).abs() < 1e-12);
            }
        }
        let back = euler_generate(&f, traj.last(), Prompt::Cond(0), &grid.reversed(), 1.0).unwrap();
        for (c, &start) in traj.last().iter().enumerate() {
            let mut x = start;
            for (i, w) in grid.reversed().times().windows(2).enumerate() {
                let (a, b) = (1.0 - w[0], w[0]);
                x += (w[1] - w[0]) * (b - a) * x / (a * a + b * b);
                assert!((back.states[i + 1][c] - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generated_samples_match_target_moments() {
        let mu = [1.5, -0.5];
        let f = gaussian(mu.to_vec(), 1.0);
        let grid = TimeGrid::uniform_default(200, Direction::Reverse).unwrap();
        let n = 2000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for i in 0..n {
            // Start from the exact marginal at t = T_MAX.
            let mut r = rng::stream(77, i);
            let x0 = f.mixture(Prompt::Cond(0)).unwrap().sample(&mut r);
            let eps = rng::standard_normal(&mut r, 2);
            let start = x0.lincomb(1.0 - T_MAX, &eps, T_MAX);
            let end = euler_generate(&f, &start, Prompt::Cond(0), &grid, 1.0).unwrap();
            for c in 0..2 {
                sum[c] += end.last()[c];
                sq[c] += end.last()[c] * end.last()[c];
            }
        }
        for c in 0..2 {
            let mean = sum[c] / n as f64;
            let var = sq[c] / n as f64 - mean * mean;
            assert!((mean - mu[c]).abs() < 0.05, "mean {mean}");
            // x at T_MIN has variance a² + b² ≈ 0.98.
            assert!((var - 1.0).abs() < 0.1, "var {var}");
        }
    }

    #[test]
    fn euler_is_first_order() {
        let f = CondGmmField::new(
            vec![Mixture::new(vec![
                Component::new(0.5, vec![1.0, 0.0], vec![0.3, 0.5]),
                Component::new(0.5, vec![-1.0, 1.0], vec![0.4, 0.2]),
            ])
            .unwrap()],
            Schedule::RectifiedFlow,
        )
        .unwrap();
        let start = [0.4, -0.8];
        let endpoint = |n| {
            let grid = TimeGrid::uniform_default(n, Direction::Reverse).unwrap();
            euler_generate(&f, &start, Prompt::Cond(0), &grid, 1.0).unwrap().last().clone()
        };
        let reference = endpoint(3200);
        let ns = [20usize, 40, 80, 160];
        let errs: Vec<f64> = ns.iter().map(|&n| distance(&endpoint(n), &reference)).collect();
        // least-squares slope of log err against log h
        let xs: Vec<f64> = ns.iter().map(|&n| libm::log(1.0 / n as f64)).collect();
        let ys: Vec<f64> = errs.iter().map(|e| libm::log(*e)).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn ddim_is_exact_for_an_exact_noise_model() {
        let x0 = Latent(vec![0.8, -0.3, 1.1]);
        let f = DiracField::new(x0.clone(), Schedule::vp_default());
        let grid = TimeGrid::uniform_default(25, Direction::Reverse).unwrap();
        let co = f.schedule().eval(T_MAX).unwrap();
        let xt = x0.lincomb(co.a, &[0.5, 1.5, -0.7], co.b);
        let out = ddim_generate(&f, &xt, Prompt::Null, &grid, 1.0).unwrap();
        let co_end = f.schedule().eval(T_MIN).unwrap();
        let expect = x0.lincomb(co_end.a, &[0.5, 1.5, -0.7], co_end.b);
        assert!(distance(out.last(), &expect) < 1e-10);
        // every intermediate x̂₀ is x0: the final state decodes to x0
        let eps = f.cfg_eps(out.last(), T_MIN, Prompt::Null, 1.0).unwrap();
        let decoded = out.last().lincomb(1.0 / co_end.a, &eps, -co_end.b / co_end.a);
        assert!(distance(&decoded, &x0) < 1e-10);
        let same = ddim_step(&f, &xt, 0.4, 0.4, Prompt::Null, 1.0).unwrap();
        assert_eq!(same, xt);
    }

    #[test]
    fn reconstruction_error_shrinks_with_refinement() {
        let f = gaussian(vec![0.5, -1.0], 0.6);
        let x0 = [0.9, -0.2];
        let coarse = reconstruction_error(&f, &x0, Prompt::Cond(0), &TimeGrid::uniform_default(10, Direction::Forward).unwrap(), ReconMode::RfEuler, 1.0).unwrap();
        let fine = reconstruction_error(&f, &x0, Prompt::Cond(0), &TimeGrid::uniform_default(100, Direction::Forward).unwrap(), ReconMode::RfEuler, 1.0).unwrap();
        assert_eq!(coarse.len(), 10);
        for (i, (t, e)) in coarse.iter().enumerate() {
            let (tf, ef) = fine[10 * i];
            assert!((t - tf).abs() < 1e-12);
            assert!(*e > ef, "t={t}: {e} <= {ef}");
        }
    }

    #[test]
    fn integrators_are_deterministic() {
        let f = gaussian(vec![0.2, 0.1], 0.5);
        let g = TimeGrid::uniform_default(30, Direction::Forward).unwrap();
        let a = euler_invert(&f, &[1.0, 2.0], Prompt::Cond(0), &g, 2.0).unwrap();
        let b = euler_invert(&f, &[1.0, 2.0], Prompt::Cond(0), &g, 2.0).unwrap();
        assert_eq!(a, b);
    }
}
