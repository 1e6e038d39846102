//! Trajectory geometry, η sweeps, finite-difference oracles and the two
//! equivalence reports (DDS ↔ DVRF, FlowEdit ↔ DVRF).

use alloc::vec::Vec;

use rand::Rng;

use crate::condfield::{eps_view, velocity_view, Prompt, VelocityModel};
use crate::distill::{grad_dds, grad_dvrf, DistillContext};
use crate::editor::{edit_dvrf, flowedit_baseline, flowedit_matched_config, EditConfig, EditRecord, FlowEditConfig, LrSchedule};
use crate::error::{config_err, Error, Result};
use crate::latent::{check_dim, distance, norm, Latent};
use crate::rng;
use crate::schedules::{ShiftRule, T_MAX, T_MIN};
use crate::tasks::TranslationTask;

/// Chords shorter than this are reported as degenerate.
pub const MIN_CHORD: f64 = 1e-12;

/// Path-to-chord decomposition of a trajectory.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StraightnessReport {
    /// `path / chord`; 1 for a straight, monotone path.
    pub s_r: f64,
    pub path: f64,
    pub chord: f64,
    pub segments: Vec<f64>,
}

pub fn path_to_chord(points: &[Latent]) -> Result<StraightnessReport> {
    if points.len() < 2 {
        return Err(config_err("a trajectory needs at least two points"));
    }
    let dim = points[0].dim();
    for p in points {
        check_dim(p, dim)?;
    }
    let segments: Vec<f64> = points.windows(2).map(|w| distance(&w[0], &w[1])).collect();
    let path: f64 = segments.iter().sum();
    let chord = distance(&points[0], &points[points.len() - 1]);
    if !(chord >= MIN_CHORD) {
        return Err(Error::DegeneratePath { chord, min: MIN_CHORD });
    }
    Ok(StraightnessReport {
        s_r: path / chord,
        path,
        chord,
        segments,
    })
}

/// Sum over steps of the batch-mean `‖ṽ(x̂_t^tgt) − ṽ(x_t^src)‖²`.
pub fn update_energy(record: &EditRecord) -> f64 {
    record.steps.iter().map(|s| s.vdiff_sq).sum()
}

/// One `(η, seed)` cell of an η sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EtaSweepRow {
    pub eta: f64,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(rename = "S_R"))]
    pub s_r: f64,
    pub update_energy: f64,
}

/// Per-η means over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaSweepMean {
    pub eta: f64,
    pub mean_s_r: f64,
    pub mean_update_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaSweep {
    /// η-major, seed-minor, in the order given.
    pub rows: Vec<EtaSweepRow>,
    pub means: Vec<EtaSweepMean>,
}

/// Runs one cell: source latent from `seed`, `linear_eta(η)` shift, the rest
/// of `base` unchanged except its seed.
pub fn eta_sweep_cell(task: &TranslationTask, base: &EditConfig, eta: f64, seed: u64) -> Result<EtaSweepRow> {
    let cfg = EditConfig {
        shift: ShiftRule::LinearEta { eta },
        seed,
        ..base.clone()
    };
    let x0 = task.source_sample(seed);
    let rec = edit_dvrf(&task.field, &cfg, &x0, TranslationTask::SOURCE, TranslationTask::TARGET)?;
    Ok(EtaSweepRow {
        eta,
        seed,
        s_r: path_to_chord(&rec.iterates)?.s_r,
        update_energy: update_energy(&rec),
    })
}

/// Aggregates rows by η, keeping first-seen order.
pub fn summarize_eta_rows(rows: &[EtaSweepRow]) -> Vec<EtaSweepMean> {
    let mut out: Vec<(EtaSweepMean, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(m, _)| m.eta == r.eta) {
            Some((m, n)) => {
                m.mean_s_r += r.s_r;
                m.mean_update_energy += r.update_energy;
                *n += 1;
            }
            None => out.push((
                EtaSweepMean {
                    eta: r.eta,
                    mean_s_r: r.s_r,
                    mean_update_energy: r.update_energy,
                },
                1,
            )),
        }
    }
    out.into_iter()
        .map(|(m, n)| EtaSweepMean {
            eta: m.eta,
            mean_s_r: m.mean_s_r / n as f64,
            mean_update_energy: m.mean_update_energy / n as f64,
        })
        .collect()
}

pub fn eta_sweep(task: &TranslationTask, base: &EditConfig, etas: &[f64], seeds: &[u64]) -> Result<EtaSweep> {
    if etas.is_empty() || seeds.is_empty() {
        return Err(config_err("eta sweep needs at least one eta and one seed"));
    }
    let mut rows = Vec::with_capacity(etas.len() * seeds.len());
    for &eta in etas {
        for &seed in seeds {
            rows.push(eta_sweep_cell(task, base, eta, seed)?);
        }
    }
    let means = summarize_eta_rows(&rows);
    Ok(EtaSweep { rows, means })
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Latent>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain {
            what: "finite-difference step",
            value: h,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let mut probe = Latent::from(x);
    let mut g = Latent::zeros(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let hi = f(&probe)?;
        probe[i] = x[i] - h;
        let lo = f(&probe)?;
        probe[i] = x[i];
        if !(hi.is_finite() && lo.is_finite()) {
            return Err(Error::NonFinite("finite-difference function value"));
        }
        g[i] = (hi - lo) / (2.0 * h);
    }
    Ok(g)
}

/// Which reduction an [`EquivalenceCheck`] verifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EquivalenceKind {
    DdsDvrf,
    FloweditDvrf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EquivalenceCheck {
    /// Random probes `(x₀^tgt, x₀^src, ε) ~ N(0, I)`, `t ~ U[T_MIN, T_MAX]`.
    /// Also checks the `v → ε → v` round trip at each probe.
    DdsDvrf {
        probes: usize,
        seed: u64,
        w_src: f64,
        w_tgt: f64,
    },
    /// FlowEdit on `grid` against its matched DVRF configuration. A
    /// `lr_scale` other than 1 multiplies every DVRF rate (negative control).
    FloweditDvrf {
        flowedit: FlowEditConfig,
        x0_src: Latent,
        lr_scale: f64,
    },
}

impl EquivalenceCheck {
    pub fn kind(&self) -> EquivalenceKind {
        match self {
            EquivalenceCheck::DdsDvrf { .. } => EquivalenceKind::DdsDvrf,
            EquivalenceCheck::FloweditDvrf { .. } => EquivalenceKind::FloweditDvrf,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquivalenceReport {
    pub kind: EquivalenceKind,
    /// Largest relative deviation over probes (or trajectory steps).
    pub max_deviation: f64,
    /// One entry per probe or per iterate.
    pub deviations: Vec<f64>,
}

fn rel_dev(a: &[f64], b: &[f64], floor: f64) -> f64 {
    distance(a, b) / norm(b).max(floor)
}

pub fn equivalence_report<M: VelocityModel + ?Sized>(
    field: &M,
    p_src: Prompt,
    p_tgt: Prompt,
    check: &EquivalenceCheck,
) -> Result<EquivalenceReport> {
    let deviations = match check {
        EquivalenceCheck::DdsDvrf { probes, seed, w_src, w_tgt } => {
            dds_deviations(field, p_src, p_tgt, *probes, *seed, *w_src, *w_tgt)?
        }
        EquivalenceCheck::FloweditDvrf { flowedit, x0_src, lr_scale } => {
            flowedit_deviations(field, p_src, p_tgt, flowedit, x0_src, *lr_scale)?
        }
    };
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(EquivalenceReport {
        kind: check.kind(),
        max_deviation,
        deviations,
    })
}

fn dds_deviations<M: VelocityModel + ?Sized>(
    field: &M,
    p_src: Prompt,
    p_tgt: Prompt,
    probes: usize,
    seed: u64,
    w_src: f64,
    w_tgt: f64,
) -> Result<Vec<f64>> {
    if probes == 0 {
        return Err(config_err("at least one probe is required"));
    }
    let ctx = DistillContext::new(field).with_guidance(w_src, w_tgt);
    let d = field.dim();
    let mut out = Vec::with_capacity(probes);
    for i in 0..probes {
        let mut r = rng::stream(seed, i as u64);
        let x0t = rng::standard_normal(&mut r, d);
        let x0s = rng::standard_normal(&mut r, d);
        let eps = rng::standard_normal(&mut r, d);
        let t = T_MIN + (T_MAX - T_MIN) * r.random::<f64>();
        let co = field.schedule().eval_interior(t)?;
        let dvrf = grad_dvrf(&ctx, &x0t, &x0s, p_tgt, p_src, t, 0, 1, &eps)?;
        let dds = grad_dds(&ctx, &x0t, &x0s, p_tgt, p_src, t, &eps)?.scale(co.wronskian() / co.a);
        let xt = x0t.lincomb(co.a, &eps, co.b);
        let v = field.cfg_velocity(&xt, t, p_tgt, w_tgt)?;
        let back = velocity_view(&eps_view(&v, &xt, &co)?, &xt, &co)?;
        out.push(rel_dev(&dvrf, &dds, f64::MIN_POSITIVE).max(rel_dev(&back, &v, f64::MIN_POSITIVE)));
    }
    Ok(out)
}

fn flowedit_deviations<M: VelocityModel + ?Sized>(
    field: &M,
    p_src: Prompt,
    p_tgt: Prompt,
    fe: &FlowEditConfig,
    x0_src: &[f64],
    lr_scale: f64,
) -> Result<Vec<f64>> {
    if !(lr_scale > 0.0 && lr_scale.is_finite()) {
        return Err(config_err("lr_scale must be positive and finite"));
    }
    let mut cfg = flowedit_matched_config(fe)?;
    if lr_scale != 1.0 {
        let times = fe.grid.times();
        if times.len() < 2 {
            return Err(config_err("perturbed rates need at least two grid times"));
        }
        cfg.lr = LrSchedule::Constant {
            value: lr_scale * (times[0] - times[1]),
        };
    }
    let base = flowedit_baseline(field, fe, x0_src, p_src, p_tgt)?;
    let dvrf = edit_dvrf(field, &cfg, x0_src, p_src, p_tgt)?;
    Ok(base
        .iterates
        .iter()
        .zip(&dvrf.iterates)
        .map(|(a, b)| rel_dev(b, a, 1.0))
        .collect())
}
